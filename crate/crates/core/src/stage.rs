//! Construction of the stage perturbation: mollification, time partition,
//! amplitudes, transported phases, the perturbation `w = w_o + w_c`, the
//! pressure correction and the oscillation term.

use rustfft::num_complex::Complex64;

use crate::blocks::DirectionFamily;
use crate::error::{Error, Result};
use crate::evolution::{solve_inverse_flow, BandSeries2, FlowMap, FlowOptions, TimeGrid};
use crate::fields::{forward_real, inverse_real_pair, Grid, ScalarField, SymTraceFreeTensor2Field, VectorField2};

fn smooth_step(u: f64) -> f64 {
    let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let a = f(u);
    let b = f(1.0 - u);
    a / (a + b)
}

fn smooth_step_prime(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        return 0.0;
    }
    let f = |s: f64| (-1.0 / s).exp();
    let df = |s: f64| (-1.0 / s).exp() / (s * s);
    let (a, b) = (f(u), f(1.0 - u));
    let (da, db) = (df(u), -df(1.0 - u));
    (da * (a + b) - a * (da + db)) / ((a + b) * (a + b))
}

/// Plateau bump: 1 on `[−1/4, 1/4]`, supported in `(−3/4, 3/4)`.
pub fn plateau_bump(x: f64) -> f64 {
    smooth_step((0.75 - x.abs()) / 0.5)
}

fn plateau_bump_prime(x: f64) -> f64 {
    -x.signum() * smooth_step_prime((0.75 - x.abs()) / 0.5) / 0.5
}

/// `χ(x) = b(x)/√(Σ_j b²(x − j))`.
pub fn chi(x: f64) -> f64 {
    let (s, _) = square_sum(x);
    plateau_bump(x) / s.sqrt()
}

pub fn chi_prime(x: f64) -> f64 {
    let (s, ds) = square_sum(x);
    let b = plateau_bump(x);
    plateau_bump_prime(x) / s.sqrt() - 0.5 * b * ds / s.powf(1.5)
}

fn square_sum(x: f64) -> (f64, f64) {
    let base = x.floor() as i64;
    let mut s = 0.0;
    let mut ds = 0.0;
    for j in base - 1..=base + 2 {
        let y = x - j as f64;
        let b = plateau_bump(y);
        s += b * b;
        ds += 2.0 * b * plateau_bump_prime(y);
    }
    (s, ds)
}

/// Cutoffs `χ_l(t) = χ(μt − l)` for `l = 0..=μ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimePartition {
    pub mu: usize,
}

impl TimePartition {
    pub fn chi(&self, l: usize, t: f64) -> f64 {
        chi(self.mu as f64 * t - l as f64)
    }

    pub fn chi_prime(&self, l: usize, t: f64) -> f64 {
        self.mu as f64 * chi_prime(self.mu as f64 * t - l as f64)
    }

    pub fn charts(&self) -> std::ops::RangeInclusive<usize> {
        0..=self.mu
    }

    /// Charts whose cutoff is nonzero at `t`.
    pub fn active(&self, t: f64) -> Vec<usize> {
        self.charts().filter(|&l| (self.mu as f64 * t - l as f64).abs() < 0.75 && self.chi(l, t) > 0.0).collect()
    }

    /// Samples of `time` on which `χ_l` is nonzero.
    pub fn window(&self, l: usize, time: &TimeGrid) -> std::ops::Range<usize> {
        let js: Vec<usize> = (0..time.len()).filter(|&j| self.active(time.time(j)).contains(&l)).collect();
        match (js.first(), js.last()) {
            (Some(&a), Some(&b)) => a..b + 1,
            _ => 0..0,
        }
    }
}

pub fn build_partition(mu: usize) -> Result<TimePartition> {
    if mu == 0 {
        return Err(Error::InvalidInput("μ must be at least 1".into()));
    }
    Ok(TimePartition { mu })
}

/// Radial space-time bump of unit radius.
fn kernel_profile(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

/// Discrete space-time mollifier of radius `ℓ` acting on band-limited series.
#[derive(Clone, Debug)]
pub struct Mollifier {
    pub ell: f64,
    band: i64,
    reach: usize,
    /// `K̂_m(k)` for time offsets `m = −reach..=reach`, band layout.
    weights: Vec<Vec<f64>>,
    mass: Vec<f64>,
}

impl Mollifier {
    pub fn new(grid: Grid, time: &TimeGrid, ell: f64, band: i64) -> Result<Mollifier> {
        let resolution = 2.0 * grid.spacing().max(time.dt());
        if !(ell >= resolution) {
            return Err(Error::KernelUnresolved { ell, resolution });
        }
        if ell >= std::f64::consts::PI {
            return Err(Error::InvalidInput(format!("mollification radius {ell} exceeds half the period")));
        }
        let n = grid.n();
        let reach = ((ell / time.dt()).ceil() as usize).saturating_sub(1).max(1);
        let w = (2 * band + 1) as usize;
        let mut weights = Vec::with_capacity(2 * reach + 1);
        let mut mass = Vec::with_capacity(2 * reach + 1);
        let h = grid.spacing();
        for m in -(reach as i64)..=reach as i64 {
            let s = m as f64 * time.dt();
            let mut sample = vec![0.0; n * n];
            for i1 in 0..n {
                let y1 = periodic_offset(i1, n) as f64 * h;
                for i2 in 0..n {
                    let y2 = periodic_offset(i2, n) as f64 * h;
                    sample[i1 * n + i2] = kernel_profile((y1 * y1 + y2 * y2 + s * s).sqrt() / ell);
                }
            }
            let spec = forward_real(n, &sample);
            let scale = (n * n) as f64;
            let mut wk = vec![0.0; w * w];
            for k2 in -band..=band {
                for k1 in -band..=band {
                    wk[(k2 + band) as usize * w + (k1 + band) as usize] = spec.get(k1, k2).re * scale;
                }
            }
            mass.push(spec.get(0, 0).re * scale);
            weights.push(wk);
        }
        Ok(Mollifier { ell, band, reach, weights, mass })
    }

    /// Mollify every slice; near the ends the kernel is renormalised over
    /// the offsets that stay inside `[0, 1]`.
    pub fn apply(&self, series: &BandSeries2) -> BandSeries2 {
        let time = series.time_grid();
        let b = series.band().min(self.band);
        let w_in = (2 * series.band() + 1) as usize;
        let w_out = (2 * b + 1) as usize;
        let w_k = (2 * self.band + 1) as usize;
        let n_t = time.len();
        let mut out = Vec::with_capacity(n_t);
        for j in 0..n_t {
            let mut acc = [vec![Complex64::new(0.0, 0.0); w_out * w_out], vec![Complex64::new(0.0, 0.0); w_out * w_out]];
            let mut total = 0.0;
            for (mi, m) in (-(self.reach as i64)..=self.reach as i64).enumerate() {
                let src = j as i64 - m;
                if src < 0 || src >= n_t as i64 {
                    continue;
                }
                total += self.mass[mi];
                let c = series.coeffs(src as usize);
                for k2 in -b..=b {
                    for k1 in -b..=b {
                        let kw = self.weights[mi][(k2 + self.band) as usize * w_k + (k1 + self.band) as usize];
                        let ii = (k2 + series.band()) as usize * w_in + (k1 + series.band()) as usize;
                        let io = (k2 + b) as usize * w_out + (k1 + b) as usize;
                        acc[0][io] += kw * c[0][ii];
                        acc[1][io] += kw * c[1][ii];
                    }
                }
            }
            for comp in acc.iter_mut() {
                for z in comp.iter_mut() {
                    *z /= total;
                }
            }
            out.push(acc);
        }
        BandSeries2::new(time, b, out)
    }
}

fn periodic_offset(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Mollify velocity and stress series with the same kernel.
pub fn mollify(v: &BandSeries2, r: &BandSeries2, ell: f64, grid: Grid) -> Result<(BandSeries2, BandSeries2)> {
    let band = v.band().max(r.band());
    let m = Mollifier::new(grid, &v.time_grid(), ell, band)?;
    Ok((m.apply(v), m.apply(r)))
}

/// `ρ_l = [e(l/μ)(1 − δ_{q+2}) − ∫|v|²(l/μ)] / (2(2π)²)`.
pub fn compute_rho(l: usize, e_at: f64, v_energy: f64, delta_next2: f64) -> Result<f64> {
    let bracket = e_at * (1.0 - delta_next2) - v_energy;
    if !(bracket > 0.0) {
        return Err(Error::NonPositiveEnergyGap { l, bracket });
    }
    Ok(bracket / (8.0 * std::f64::consts::PI.powi(2)))
}

/// Pointwise `a_{kl} = √ρ_l γ_k(R_{ℓ,l}/ρ_l)` with `R_{ℓ,l} = ρ_l Id − R̊_ℓ`.
pub fn build_amplitudes(
    l: usize,
    rho: f64,
    r_l: &SymTraceFreeTensor2Field,
    family: &DirectionFamily,
) -> Result<[ScalarField; 3]> {
    let grid = r_l.grid();
    let mut out = [vec![0.0; grid.len()], vec![0.0; grid.len()], vec![0.0; grid.len()]];
    for i in 0..grid.len() {
        let (t11, t12) = (r_l.t11.values()[i], r_l.t12.values()[i]);
        let c = family.solve_squares([rho - t11, -t12, rho + t11]);
        for k in 0..3 {
            if c[k] <= 0.0 {
                return Err(Error::NonPositiveCoefficient {
                    value: c[k],
                    context: format!("chart {l}, node ({}, {}), direction {k}", i / grid.n(), i % grid.n()),
                });
            }
            out[k][i] = c[k].sqrt();
        }
    }
    let [a, b, c] = out;
    Ok([ScalarField::new(grid, a), ScalarField::new(grid, b), ScalarField::new(grid, c)])
}

/// Per-chart data retained for assembly.
#[derive(Clone, Debug)]
pub struct ChartData {
    pub l: usize,
    pub rho: f64,
    pub family: DirectionFamily,
    pub flow: FlowMap,
}

/// Everything needed to evaluate the perturbation at any sample.
#[derive(Clone, Debug)]
pub struct PerturbationBundle {
    pub grid: Grid,
    pub time: TimeGrid,
    pub lambda: usize,
    pub partition: TimePartition,
    pub v_l: BandSeries2,
    pub r_l: BandSeries2,
    pub charts: Vec<ChartData>,
}

/// Pointwise diagnostics gathered while evaluating one sample.
#[derive(Clone, Copy, Debug, Default)]
pub struct SliceDiagnostics {
    /// `max |2Σ a² k⊗k − R_{ℓ,l}|`.
    pub cancellation: f64,
    /// `max ||φ| − 1|`.
    pub unimodularity: f64,
    pub amplitude_sup: f64,
    pub amplitude_min: f64,
    pub l_sup: f64,
    /// `max ‖Id − R_{ℓ,l}/ρ_l‖_F`.
    pub admissibility: f64,
    pub min_jacobian: f64,
}

/// Perturbation fields at one time sample.
#[derive(Clone, Debug)]
pub struct PerturbationSlice {
    pub j: usize,
    pub w_o: VectorField2,
    pub w_c: VectorField2,
    pub w: VectorField2,
    pub pressure: ScalarField,
    /// `div(w_o⊗w_o − Σχ²R_{ℓ,l} + P Id)` from the chart decomposition.
    pub osc: VectorField2,
    /// `Σ_l χ_l Σ_k a e^{iλk⊥·Φ_l}`, so that `w = −λ⁻¹∇⊥H`.
    pub stream: ScalarField,
    pub diag: SliceDiagnostics,
}

struct ChartFine {
    chi: f64,
    rho: f64,
    family: DirectionFamily,
    d: [Vec<f64>; 2],
    gd: [[Vec<f64>; 2]; 2],
    l: usize,
}

impl PerturbationBundle {
    /// Solve the flow maps for every chart and collect chart data.
    pub fn build(
        grid: Grid,
        time: TimeGrid,
        lambda: usize,
        partition: TimePartition,
        v_l: BandSeries2,
        r_l: BandSeries2,
        rho: &[f64],
    ) -> Result<PerturbationBundle> {
        if lambda == 0 || lambda % 5 != 0 {
            return Err(Error::InvalidInput(format!("frequency {lambda} must be a positive multiple of 5")));
        }
        if lambda as i64 > grid.dealias_cutoff() {
            return Err(Error::Unresolved(format!(
                "frequency {lambda} exceeds the resolved band {} of an N = {} grid",
                grid.dealias_cutoff(),
                grid.n()
            )));
        }
        if rho.len() != partition.mu + 1 {
            return Err(Error::InvalidInput("one energy level per chart is required".into()));
        }
        let coarse_n = (4 * v_l.band().max(1) as usize).next_power_of_two().clamp(32, grid.n());
        let coarse = Grid::new(coarse_n)?;
        let mut charts = Vec::new();
        for l in partition.charts() {
            let window = partition.window(l, &time);
            if window.is_empty() {
                continue;
            }
            let flow = solve_inverse_flow(&v_l, l, partition.mu, window, &time, coarse, FlowOptions::default())?;
            charts.push(ChartData { l, rho: rho[l], family: DirectionFamily::for_chart(l), flow });
        }
        Ok(PerturbationBundle { grid, time, lambda, partition, v_l, r_l, charts })
    }

    fn active_charts(&self, j: usize) -> Vec<&ChartData> {
        let t = self.time.time(j);
        let act = self.partition.active(t);
        self.charts.iter().filter(|c| act.contains(&c.l) && c.flow.contains(j)).collect()
    }

    /// Mollified velocity at sample `j` on the fine grid.
    pub fn v_l_field(&self, j: usize) -> VectorField2 {
        let (a, b) = self.v_l.fields(j, self.grid);
        VectorField2::new(a, b)
    }

    pub fn r_l_field(&self, j: usize) -> SymTraceFreeTensor2Field {
        let (a, b) = self.r_l.fields(j, self.grid);
        SymTraceFreeTensor2Field::new(a, b)
    }

    fn fine_charts(&self, j: usize) -> Vec<ChartFine> {
        let t = self.time.time(j);
        self.active_charts(j)
            .into_iter()
            .map(|c| {
                let (d, gd) = c.flow.fine_fields(j, self.grid);
                ChartFine { chi: self.partition.chi(c.l, t), rho: c.rho, family: c.family.clone(), d, gd, l: c.l }
            })
            .collect()
    }

    /// `R̊_ℓ` components and their gradients on the fine grid.
    fn stress_fine(&self, j: usize) -> [Vec<f64>; 6] {
        let (s11, s12) = self.r_l.spectra(j, self.grid.n());
        let (t11, t12) = inverse_real_pair(&s11, &s12);
        let (a1, a2) = inverse_real_pair(&s11.derivative(1, 0), &s11.derivative(0, 1));
        let (b1, b2) = inverse_real_pair(&s12.derivative(1, 0), &s12.derivative(0, 1));
        [t11, t12, a1, a2, b1, b2]
    }

    /// Perturbation, pressure correction and oscillation term at sample `j`.
    pub fn evaluate(&self, j: usize) -> Result<PerturbationSlice> {
        let grid = self.grid;
        let n = grid.n();
        let len = grid.len();
        let charts = self.fine_charts(j);
        let lam = self.lambda as f64;
        let mut w_o = [vec![0.0; len], vec![0.0; len]];
        let mut w_c = [vec![0.0; len], vec![0.0; len]];
        let mut pres = vec![0.0; len];
        let mut osc = [vec![0.0; len], vec![0.0; len]];
        let mut stream = vec![0.0; len];
        let mut diag = SliceDiagnostics { amplitude_min: f64::INFINITY, min_jacobian: f64::INFINITY, ..Default::default() };
        if charts.is_empty() {
            return Ok(self.pack(j, w_o, w_c, pres, osc, stream, diag));
        }
        for c in &self.active_charts(j) {
            diag.min_jacobian = diag.min_jacobian.min(c.flow.min_jacobian(j));
        }
        let st = self.stress_fine(j);
        let waves: Vec<[[f64; 2]; 3]> = charts
            .iter()
            .map(|c| {
                c.family.plus_set().map(|k| {
                    let kp = [-k[1], k[0]];
                    [(lam * kp[0]).round(), (lam * kp[1]).round()]
                })
            })
            .collect();
        // per mode: direction, h, D_p (complex vector)
        let mut modes: Vec<([f64; 2], Complex64, [Complex64; 2])> = Vec::with_capacity(6);
        for i in 0..len {
            let x = [grid.coord(i / n), grid.coord(i % n)];
            let (t11, t12) = (st[0][i], st[1][i]);
            let (g11, g12) = ([st[2][i], st[3][i]], [st[4][i], st[5][i]]);
            modes.clear();
            let mut excl = [0.0; 2];
            let mut psum = 0.0;
            for (ci, c) in charts.iter().enumerate() {
                let r = [c.rho - t11, -t12, c.rho + t11];
                let csq = c.family.solve_squares(r);
                let dsq = [
                    c.family.solve_squares([-g11[0], -g12[0], g11[0]]),
                    c.family.solve_squares([-g11[1], -g12[1], g11[1]]),
                ];
                let adm = (2.0 * (t11 * t11 + t12 * t12)).sqrt() / c.rho;
                diag.admissibility = diag.admissibility.max(adm);
                let gd = [[c.gd[0][0][i], c.gd[0][1][i]], [c.gd[1][0][i], c.gd[1][1][i]]];
                let dd = [c.d[0][i], c.d[1][i]];
                let mut recon = [0.0; 3];
                for (ki, k) in c.family.plus_set().iter().enumerate() {
                    if csq[ki] <= 0.0 {
                        return Err(Error::NonPositiveCoefficient {
                            value: csq[ki],
                            context: format!("chart {}, sample {j}, node ({}, {}), direction {ki}", c.l, i / n, i % n),
                        });
                    }
                    let a = csq[ki].sqrt();
                    let ga = [dsq[0][ki] / (2.0 * a), dsq[1][ki] / (2.0 * a)];
                    diag.amplitude_sup = diag.amplitude_sup.max(a);
                    diag.amplitude_min = diag.amplitude_min.min(a);
                    recon[0] += 2.0 * a * a * k[0] * k[0];
                    recon[1] += 2.0 * a * a * k[0] * k[1];
                    recon[2] += 2.0 * a * a * k[1] * k[1];
                    let kp = [-k[1], k[0]];
                    let m = waves[ci][ki];
                    let theta = m[0] * x[0] + m[1] * x[1] + lam * (kp[0] * dd[0] + kp[1] * dd[1]);
                    let (s, co) = theta.sin_cos();
                    let e = Complex64::new(co, s);
                    diag.unimodularity = diag.unimodularity.max((e.norm() - 1.0).abs());
                    // (∇D)ᵀ k⊥
                    let g = [kp[0] * gd[0][0] + kp[1] * gd[1][0], kp[0] * gd[0][1] + kp[1] * gd[1][1]];
                    let h = e * (c.chi * a);
                    let dp = [
                        e * Complex64::new(c.chi * ga[0], c.chi * a * lam * g[0]),
                        e * Complex64::new(c.chi * ga[1], c.chi * a * lam * g[1]),
                    ];
                    // L = a i k − λ⁻¹(∇a + i a λ g)⊥
                    let lv = [
                        Complex64::new(ga[1] / lam, a * k[0] + a * g[1]),
                        Complex64::new(-ga[0] / lam, a * k[1] - a * g[0]),
                    ];
                    diag.l_sup = diag.l_sup.max((lv[0].norm_sqr() + lv[1].norm_sqr()).sqrt());
                    modes.push((*k, h, dp));
                    let s2 = c.chi * c.chi;
                    let gs = [s2 * dsq[0][ki], s2 * dsq[1][ki]];
                    let kgs = k[0] * gs[0] + k[1] * gs[1];
                    excl[0] += 2.0 * (k[0] * kgs - gs[0]);
                    excl[1] += 2.0 * (k[1] * kgs - gs[1]);
                    psum += 2.0 * s2 * a * a;
                }
                let dev = [recon[0] - r[0], recon[1] - r[1], recon[2] - r[2]];
                diag.cancellation = diag.cancellation.max(dev.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            }
            let mut alpha = [0.0; 2];
            let mut hsum = 0.0;
            let mut vsum = [0.0; 2];
            let mut bsum = 0.0;
            for (k, h, dp) in &modes {
                alpha[0] += 2.0 * k[0] * h.im;
                alpha[1] += 2.0 * k[1] * h.im;
                hsum += 2.0 * h.re;
                vsum[0] += 2.0 * dp[0].re;
                vsum[1] += 2.0 * dp[1].re;
                bsum += 2.0 * (k[0] * dp[0].im + k[1] * dp[1].im);
            }
            let mut s1 = [0.0; 2];
            let mut s2 = [0.0; 2];
            for (k, _, dp) in &modes {
                let adi = alpha[0] * dp[0].im + alpha[1] * dp[1].im;
                let ka = k[0] * alpha[0] + k[1] * alpha[1];
                s1[0] += k[0] * adi;
                s1[1] += k[1] * adi;
                s2[0] += ka * dp[0].im;
                s2[1] += ka * dp[1].im;
            }
            for c in 0..2 {
                osc[c][i] = alpha[c] * bsum + 2.0 * s1[c] - 2.0 * s2[c] - hsum * vsum[c] - excl[c];
                w_o[c][i] = -alpha[c];
            }
            w_c[0][i] = vsum[1] / lam;
            w_c[1][i] = -vsum[0] / lam;
            pres[i] = -0.5 * (alpha[0] * alpha[0] + alpha[1] * alpha[1] + hsum * hsum) + psum;
            stream[i] = hsum;
        }
        Ok(self.pack(j, w_o, w_c, pres, osc, stream, diag))
    }

    #[allow(clippy::too_many_arguments)]
    fn pack(
        &self,
        j: usize,
        w_o: [Vec<f64>; 2],
        w_c: [Vec<f64>; 2],
        pres: Vec<f64>,
        osc: [Vec<f64>; 2],
        stream: Vec<f64>,
        mut diag: SliceDiagnostics,
    ) -> PerturbationSlice {
        let g = self.grid;
        if diag.amplitude_min == f64::INFINITY {
            diag.amplitude_min = 0.0;
        }
        if diag.min_jacobian == f64::INFINITY {
            diag.min_jacobian = 1.0;
        }
        let [o1, o2] = w_o;
        let [c1, c2] = w_c;
        let w = VectorField2::new(
            ScalarField::new(g, o1.iter().zip(&c1).map(|(a, b)| a + b).collect()),
            ScalarField::new(g, o2.iter().zip(&c2).map(|(a, b)| a + b).collect()),
        );
        let [t1, t2] = osc;
        PerturbationSlice {
            j,
            w_o: VectorField2::new(ScalarField::new(g, o1), ScalarField::new(g, o2)),
            w_c: VectorField2::new(ScalarField::new(g, c1), ScalarField::new(g, c2)),
            w,
            pressure: ScalarField::new(g, pres),
            osc: VectorField2::new(ScalarField::new(g, t1), ScalarField::new(g, t2)),
            stream: ScalarField::new(g, stream),
            diag,
        }
    }

    /// Amplitudes `a_{kl}` of chart `l` at sample `j` (zero fields if the chart is inactive).
    pub fn amplitudes(&self, l: usize, j: usize) -> Result<[ScalarField; 3]> {
        let c = self.charts.iter().find(|c| c.l == l).ok_or_else(|| Error::InvalidInput(format!("no chart {l}")))?;
        build_amplitudes(l, c.rho, &self.r_l_field(j), &c.family)
    }

    /// Phase `φ_{kl} = e^{iλk⊥·(Φ_l − x)}` for direction `k` (index into the full set).
    pub fn phase(&self, l: usize, k_index: usize, j: usize) -> Result<Vec<Complex64>> {
        let c = self.chart_at(l, j)?;
        let k = c.family.full_set()[k_index];
        let (d, _) = c.flow.fine_fields(j, self.grid);
        let lam = self.lambda as f64;
        Ok((0..self.grid.len())
            .map(|i| {
                let th = lam * (-k[1] * d[0][i] + k[0] * d[1][i]);
                Complex64::new(th.cos(), th.sin())
            })
            .collect())
    }

    /// `L_{kl} = a ik − λ⁻¹(∇a + iaλ(∇Φ_l − Id)ᵀk⊥)⊥` at sample `j`.
    pub fn l_kl(&self, l: usize, k_index: usize, j: usize) -> Result<[Vec<Complex64>; 2]> {
        let c = self.chart_at(l, j)?;
        let full = c.family.full_set();
        let k = full[k_index];
        let amp = build_amplitudes(l, c.rho, &self.r_l_field(j), &c.family)?;
        let a = &amp[k_index % 3];
        let ga = crate::fields::gradient(a);
        let (_, gd) = c.flow.fine_fields(j, self.grid);
        let lam = self.lambda as f64;
        let kp = [-k[1], k[0]];
        let mut out = [Vec::with_capacity(self.grid.len()), Vec::with_capacity(self.grid.len())];
        for i in 0..self.grid.len() {
            let av = a.values()[i];
            let g = [kp[0] * gd[0][0][i] + kp[1] * gd[1][0][i], kp[0] * gd[0][1][i] + kp[1] * gd[1][1][i]];
            let (ga1, ga2) = (ga.u1.values()[i], ga.u2.values()[i]);
            out[0].push(Complex64::new(ga2 / lam, av * k[0] + av * g[1]));
            out[1].push(Complex64::new(-ga1 / lam, av * k[1] - av * g[0]));
        }
        Ok(out)
    }

    fn chart_at(&self, l: usize, j: usize) -> Result<&ChartData> {
        self.charts
            .iter()
            .find(|c| c.l == l && c.flow.contains(j))
            .ok_or_else(|| Error::InvalidInput(format!("chart {l} is not active at sample {j}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{divergence, divergence_symmetric, grad_perp};
    use std::f64::consts::PI;

    #[test]
    fn partition_of_squares() {
        let p = build_partition(7).unwrap();
        let mut worst: f64 = 0.0;
        for s in 0..=10_000 {
            let t = s as f64 / 10_000.0;
            let sum: f64 = p.charts().map(|l| p.chi(l, t).powi(2)).sum();
            worst = worst.max((sum - 1.0).abs());
        }
        assert!(worst <= 1e-12, "{worst}");
        assert_eq!(p.chi(3, 3.0 / 7.0), 1.0);
        assert_eq!(p.chi(2, 3.0 / 7.0), 0.0);
        let t = 3.5 / 7.0;
        assert!((p.chi(3, t).powi(2) + p.chi(4, t).powi(2) - 1.0).abs() < 1e-14);
        assert!(build_partition(0).is_err());
    }

    #[test]
    fn chi_support_and_derivative() {
        assert_eq!(chi(0.75), 0.0);
        assert_eq!(chi(-0.8), 0.0);
        for &x in &[-0.6, -0.3, 0.1, 0.4, 0.55, 0.7] {
            let h = 1e-6;
            let fd = (chi(x + h) - chi(x - h)) / (2.0 * h);
            assert!((fd - chi_prime(x)).abs() < 1e-6, "{x}: {fd} {}", chi_prime(x));
        }
    }

    fn const_series(time: TimeGrid, band: i64, f: impl Fn(usize) -> [Vec<Complex64>; 2]) -> BandSeries2 {
        BandSeries2::new(time, band, (0..time.len()).map(f).collect())
    }

    #[test]
    fn mollifier_preserves_constants() {
        let grid = Grid::new(64).unwrap();
        let time = TimeGrid::new(65).unwrap();
        let s = const_series(time, 2, |_| {
            let mut c = vec![Complex64::new(0.0, 0.0); 25];
            c[12] = Complex64::new(0.7, 0.0);
            [c.clone(), c]
        });
        let (a, _) = mollify(&s, &s, 0.3, grid).unwrap();
        for j in 0..65 {
            assert!((a.coeffs(j)[0][12].re - 0.7).abs() < 1e-14);
        }
        assert!(matches!(Mollifier::new(grid, &time, 0.05, 2), Err(Error::KernelUnresolved { .. })));
    }

    #[test]
    fn mollifier_error_bounds_for_shear() {
        let grid = Grid::new(128).unwrap();
        let time = TimeGrid::new(129).unwrap();
        let ell = 0.2;
        let s = const_series(time, 1, |_| {
            let mut c = vec![Complex64::new(0.0, 0.0); 9];
            c[7] = Complex64::new(0.0, -0.5);
            c[1] = Complex64::new(0.0, 0.5);
            [c, vec![Complex64::new(0.0, 0.0); 9]]
        });
        let (m, _) = mollify(&s, &s, ell, grid).unwrap();
        let (u, _) = m.fields(64, grid);
        let v = ScalarField::from_fn(grid, |_, y| y.sin());
        let err = u.sub(&v).sup_norm();
        // ‖v‖₁ = ‖v‖₀ + ‖∇v‖₀ = 2, ‖v‖₂ = 3
        assert!(err <= 2.0 * ell, "{err}");
        assert!(err <= 3.0 * ell * ell);
        assert!(crate::fields::gradient(&u).sup_norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn rho_examples() {
        let e = 2.0 * (2.0 * PI).powi(2);
        assert!((compute_rho(0, e, 0.0, 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(compute_rho(3, 1.0, 1.0, 0.0), Err(Error::NonPositiveEnergyGap { l: 3, .. })));
    }

    #[test]
    fn amplitudes_for_zero_stress() {
        let grid = Grid::new(8).unwrap();
        let rho = 0.3;
        let a = build_amplitudes(0, rho, &SymTraceFreeTensor2Field::zeros(grid), &DirectionFamily::new(0).unwrap()).unwrap();
        assert!(a[0].values().iter().all(|v| (v - (7.0 * rho / 32.0).sqrt()).abs() < 1e-15));
        // homogeneity
        let r = SymTraceFreeTensor2Field::new(
            ScalarField::from_fn(grid, |x, _| 0.01 * x.sin()),
            ScalarField::from_fn(grid, |_, y| 0.02 * y.cos()),
        );
        let f = DirectionFamily::new(1).unwrap();
        let a1 = build_amplitudes(1, rho, &r, &f).unwrap();
        let a2 = build_amplitudes(1, 4.0 * rho, &r.scale(4.0), &f).unwrap();
        for k in 0..3 {
            assert!(a2[k].sub(&a1[k].scale(2.0)).sup_norm() < 1e-14);
        }
    }

    /// Small bundle with a shear mollified velocity and a smooth stress.
    fn test_bundle(n: usize, n_t: usize, mu: usize, lambda: usize, stress: f64) -> PerturbationBundle {
        let grid = Grid::new(n).unwrap();
        let time = TimeGrid::new(n_t).unwrap();
        let z = || vec![Complex64::new(0.0, 0.0); 9];
        let v = const_series(time, 1, |j| {
            let t = time.time(j);
            let amp = 0.6 + 0.1 * t;
            let mut a = z();
            // amp·sin(x₂) in the first component, 0.2·cos(x₁) in the second
            a[7] = Complex64::new(0.0, -amp / 2.0);
            a[1] = Complex64::new(0.0, amp / 2.0);
            let mut b = z();
            b[5] = Complex64::new(0.1, 0.0);
            b[3] = Complex64::new(0.1, 0.0);
            [a, b]
        });
        let r = const_series(time, 1, |j| {
            let t = time.time(j);
            let mut a = z();
            a[5] = Complex64::new(stress * (1.0 + t), 0.3 * stress);
            a[3] = a[5].conj();
            let mut b = z();
            b[7] = Complex64::new(0.5 * stress, -stress);
            b[1] = b[7].conj();
            [a, b]
        });
        let p = build_partition(mu).unwrap();
        let rho = vec![0.05; mu + 1];
        PerturbationBundle::build(grid, time, lambda, p, v, r, &rho).unwrap()
    }

    #[test]
    fn curl_form_and_divergence() {
        let b = test_bundle(128, 33, 3, 10, 0.002);
        for j in [0, 5, 8, 16, 20] {
            let s = b.evaluate(j).unwrap();
            let alt = grad_perp(&s.stream).scale(-1.0 / b.lambda as f64);
            let scale = s.w.sup_norm();
            assert!(s.w.sub(&alt).sup_norm() <= 1e-10 * scale, "{j}: {}", s.w.sub(&alt).sup_norm());
            assert!(divergence(&s.w).sup_norm() <= 1e-10 * scale * b.lambda as f64);
            assert!(s.diag.cancellation < 1e-12);
            assert!(s.diag.unimodularity < 1e-12);
        }
    }

    #[test]
    fn l_representation_reconstructs_w() {
        let b = test_bundle(64, 33, 3, 10, 0.002);
        let j = 7;
        let s = b.evaluate(j).unwrap();
        let grid = b.grid;
        let n = grid.n();
        let t = b.time.time(j);
        let mut rec = [vec![0.0; grid.len()], vec![0.0; grid.len()]];
        for l in b.partition.active(t) {
            let chi = b.partition.chi(l, t);
            let fam = DirectionFamily::for_chart(l);
            for (ki, k) in fam.full_set().iter().enumerate() {
                let lk = if ki < 3 {
                    b.l_kl(l, ki, j).unwrap()
                } else {
                    let p = b.l_kl(l, ki - 3, j).unwrap();
                    [p[0].iter().map(|z| z.conj()).collect(), p[1].iter().map(|z| z.conj()).collect()]
                };
                let ph = b.phase(l, ki, j).unwrap();
                let m = [(-k[1] * 10.0).round(), (k[0] * 10.0).round()];
                for i in 0..grid.len() {
                    let x = [grid.coord(i / n), grid.coord(i % n)];
                    let e = Complex64::from_polar(1.0, m[0] * x[0] + m[1] * x[1]);
                    rec[0][i] += chi * (lk[0][i] * ph[i] * e).re;
                    rec[1][i] += chi * (lk[1][i] * ph[i] * e).re;
                }
            }
        }
        let err = (0..grid.len())
            .map(|i| (rec[0][i] - s.w.u1.values()[i]).abs().max((rec[1][i] - s.w.u2.values()[i]).abs()))
            .fold(0.0, f64::max);
        assert!(err <= 1e-11, "{err}");
    }

    #[test]
    fn oscillation_identity_matches_spectral_divergence() {
        let b = test_bundle(128, 33, 3, 10, 0.002);
        for j in [3, 6, 11] {
            let s = b.evaluate(j).unwrap();
            let r = b.r_l_field(j);
            let wo = &s.w_o;
            let s11 = wo.u1.mul(&wo.u1).add(&r.t11).add(&s.pressure);
            let s12 = wo.u1.mul(&wo.u2).add(&r.t12);
            let s22 = wo.u2.mul(&wo.u2).sub(&r.t11).add(&s.pressure);
            let d = divergence_symmetric(s11.values(), s12.values(), s22.values(), b.grid);
            let err = d.sub(&s.osc).sup_norm();
            assert!(err <= 1e-9, "{j}: {err}");
        }
    }

    #[test]
    fn pressure_matches_direct_pair_sum() {
        let b = test_bundle(32, 33, 3, 10, 0.002);
        let j = 6;
        let s = b.evaluate(j).unwrap();
        let grid = b.grid;
        let n = grid.n();
        let t = b.time.time(j);
        let mut terms: Vec<([f64; 2], Vec<Complex64>)> = Vec::new();
        for l in b.partition.active(t) {
            let chi = b.partition.chi(l, t);
            let fam = DirectionFamily::for_chart(l);
            let amp = b.amplitudes(l, j).unwrap();
            for (ki, k) in fam.full_set().iter().enumerate() {
                let ph = b.phase(l, ki, j).unwrap();
                let m = [(-k[1] * 10.0).round(), (k[0] * 10.0).round()];
                let h = (0..grid.len())
                    .map(|i| {
                        let x = [grid.coord(i / n), grid.coord(i % n)];
                        chi * amp[ki % 3].values()[i] * ph[i] * Complex64::from_polar(1.0, m[0] * x[0] + m[1] * x[1])
                    })
                    .collect();
                terms.push((*k, h));
            }
        }
        for i in 0..grid.len() {
            let mut p = Complex64::new(0.0, 0.0);
            for (k, h) in &terms {
                for (kp, hp) in &terms {
                    if (k[0] + kp[0]).abs() < 1e-12 && (k[1] + kp[1]).abs() < 1e-12 {
                        continue;
                    }
                    let coef = crate::blocks::pair_pressure(*k, *kp).unwrap();
                    p += 0.5 * coef * h[i] * hp[i];
                }
            }
            assert!(p.im.abs() < 1e-13);
            assert!((p.re - s.pressure.values()[i]).abs() < 1e-13, "{} {}", p.re, s.pressure.values()[i]);
        }
    }

    #[test]
    fn identity_flow_constant_amplitude_gives_stationary_mode() {
        let grid = Grid::new(32).unwrap();
        let time = TimeGrid::new(17).unwrap();
        let z = vec![Complex64::new(0.0, 0.0); 9];
        let zero = BandSeries2::new(time, 1, vec![[z.clone(), z.clone()]; 17]);
        let p = build_partition(1).unwrap();
        let b = PerturbationBundle::build(grid, time, 5, p, zero.clone(), zero, &[0.1, 0.1]).unwrap();
        let s = b.evaluate(0).unwrap();
        assert!(s.w_c.sup_norm() == 0.0);
        // w_o = Σ_k −2a k sin(λk⊥·x) for the three directions of Λ₀
        let fam = DirectionFamily::new(0).unwrap();
        let g: [f64; 3] = [7.0 / 32.0, 25.0 / 64.0, 25.0 / 64.0];
        let exact = VectorField2::from_fn(grid, |x1, x2| {
            let mut v = [0.0; 2];
            for (k, gk) in fam.plus_set().iter().zip(g) {
                let a: f64 = (0.1f64 * gk).sqrt();
                let ph = 5.0 * (-k[1] * x1 + k[0] * x2);
                v[0] -= 2.0 * a * k[0] * ph.sin();
                v[1] -= 2.0 * a * k[1] * ph.sin();
            }
            v
        });
        assert!(s.w_o.sub(&exact).sup_norm() < 1e-13);
        // a single ±k pair gives no pressure; constant amplitudes give no oscillation term
        assert!(s.osc.sup_norm() < 1e-12);
    }

    #[test]
    fn unresolved_frequency_rejected() {
        let grid = Grid::new(32).unwrap();
        let time = TimeGrid::new(9).unwrap();
        let z = vec![Complex64::new(0.0, 0.0); 9];
        let zero = BandSeries2::new(time, 1, vec![[z.clone(), z]; 9]);
        let p = build_partition(1).unwrap();
        assert!(matches!(
            PerturbationBundle::build(grid, time, 15, p, zero.clone(), zero.clone(), &[0.1, 0.1]),
            Err(Error::Unresolved(_))
        ));
        assert!(PerturbationBundle::build(grid, time, 7, p, zero.clone(), zero, &[0.1, 0.1]).is_err());
    }
}
