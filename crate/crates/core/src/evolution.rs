//! Time evolution: inverse flow maps along a mollified velocity and the
//! transport-diffusion solver for the temperature.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{
    forward_real, forward_real_pair, inverse_real_pair, Grid, ScalarField, Spectrum, VectorField2,
};
use crate::util::{cumulative_simpson, lagrange_weights};

/// Uniform time samples `t_j = j/(n_t − 1)` on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimeGrid {
    n_t: usize,
}

impl TimeGrid {
    pub fn new(n_t: usize) -> Result<TimeGrid> {
        if n_t < 2 {
            return Err(Error::InvalidInput(format!("time grid needs at least 2 samples, got {n_t}")));
        }
        Ok(TimeGrid { n_t })
    }

    pub fn len(&self) -> usize {
        self.n_t
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        1.0 / (self.n_t - 1) as f64
    }

    #[inline]
    pub fn time(&self, j: usize) -> f64 {
        j as f64 / (self.n_t - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_t).map(|j| self.time(j)).collect()
    }

    /// Four sample indices bracketing `t` for cubic interpolation.
    pub fn cubic_stencil(&self, t: f64) -> [usize; 4] {
        let n = self.n_t;
        assert!(n >= 4, "cubic interpolation needs at least 4 samples");
        let i = ((t / self.dt()).floor().max(0.0) as usize).min(n - 2);
        let s = i.saturating_sub(1).min(n - 4);
        [s, s + 1, s + 2, s + 3]
    }
}

/// One Fourier mode of a real two-component field, half-plane representative.
#[derive(Clone, Copy, Debug)]
pub struct Mode {
    pub k: [f64; 2],
    pub c: [Complex64; 2],
}

/// Two-component real fields stored as band-limited spectra per time slice.
#[derive(Clone, Debug)]
pub struct BandSeries2 {
    time: TimeGrid,
    band: i64,
    /// Per slice, per component, `(2b+1)²` coefficients indexed `(k2+b)(2b+1) + (k1+b)`.
    slices: Vec<[Vec<Complex64>; 2]>,
}

impl BandSeries2 {
    pub fn new(time: TimeGrid, band: i64, slices: Vec<[Vec<Complex64>; 2]>) -> BandSeries2 {
        let w = (2 * band + 1) as usize;
        assert_eq!(slices.len(), time.len());
        assert!(slices.iter().all(|s| s[0].len() == w * w && s[1].len() == w * w));
        BandSeries2 { time, band, slices }
    }

    /// Truncate full spectra to `|k1|, |k2| ≤ band`.
    pub fn from_spectra(time: TimeGrid, band: i64, spectra: &[(Spectrum, Spectrum)]) -> BandSeries2 {
        let slices = spectra.iter().map(|(a, b)| [extract_band(a, band), extract_band(b, band)]).collect();
        BandSeries2::new(time, band, slices)
    }

    pub fn time_grid(&self) -> TimeGrid {
        self.time
    }

    pub fn band(&self) -> i64 {
        self.band
    }

    pub fn coeffs(&self, j: usize) -> &[Vec<Complex64>; 2] {
        &self.slices[j]
    }

    /// Slice `j` as full spectra on an `n`-grid.
    pub fn spectra(&self, j: usize, n: usize) -> (Spectrum, Spectrum) {
        (embed_band(&self.slices[j][0], self.band, n), embed_band(&self.slices[j][1], self.band, n))
    }

    /// Slice `j` sampled on `grid`.
    pub fn fields(&self, j: usize, grid: Grid) -> (ScalarField, ScalarField) {
        let (a, b) = self.spectra(j, grid.n());
        let (x, y) = inverse_real_pair(&a, &b);
        (ScalarField::new(grid, x), ScalarField::new(grid, y))
    }

    /// Half-plane modes at time `t`, cubic in time.
    pub fn modes_at(&self, t: f64) -> Vec<Mode> {
        let st = self.time.cubic_stencil(t);
        let ts: Vec<f64> = st.iter().map(|&j| self.time.time(j)).collect();
        let w = lagrange_weights(&ts, t);
        let b = self.band;
        let width = (2 * b + 1) as usize;
        let mut out = Vec::new();
        for k2 in 0..=b {
            for k1 in -b..=b {
                if k2 == 0 && k1 < 0 {
                    continue;
                }
                let idx = (k2 + b) as usize * width + (k1 + b) as usize;
                let mut c = [Complex64::new(0.0, 0.0); 2];
                for (s, &j) in st.iter().enumerate() {
                    c[0] += w[s] * self.slices[j][0][idx];
                    c[1] += w[s] * self.slices[j][1][idx];
                }
                if c[0].norm() + c[1].norm() == 0.0 {
                    continue;
                }
                let f = if k1 == 0 && k2 == 0 { 1.0 } else { 2.0 };
                out.push(Mode { k: [k1 as f64, k2 as f64], c: [c[0] * f, c[1] * f] });
            }
        }
        out
    }

    /// Upper bound for `‖v‖₀ + ‖∇v‖₀` over all slices.
    pub fn c1_bound(&self) -> f64 {
        let b = self.band;
        let width = (2 * b + 1) as usize;
        let mut best: f64 = 0.0;
        for s in &self.slices {
            let mut tot = 0.0;
            for k2 in -b..=b {
                for k1 in -b..=b {
                    let idx = (k2 + b) as usize * width + (k1 + b) as usize;
                    let amp = (s[0][idx].norm_sqr() + s[1][idx].norm_sqr()).sqrt();
                    tot += amp * (1.0 + ((k1 * k1 + k2 * k2) as f64).sqrt());
                }
            }
            best = best.max(tot);
        }
        best
    }
}

pub(crate) fn extract_band(s: &Spectrum, band: i64) -> Vec<Complex64> {
    let w = (2 * band + 1) as usize;
    let mut out = vec![Complex64::new(0.0, 0.0); w * w];
    let nyq = (s.n() / 2) as i64;
    for k2 in -band..=band {
        for k1 in -band..=band {
            if k1.abs() >= nyq || k2.abs() >= nyq {
                continue;
            }
            out[(k2 + band) as usize * w + (k1 + band) as usize] = s.get(k1, k2);
        }
    }
    out
}

pub(crate) fn embed_band(c: &[Complex64], band: i64, n: usize) -> Spectrum {
    let w = (2 * band + 1) as usize;
    let mut s = Spectrum::zeros(n);
    let nyq = (n / 2) as i64;
    for k2 in -band..=band {
        for k1 in -band..=band {
            if k1.abs() >= nyq || k2.abs() >= nyq {
                continue;
            }
            s.set(k1, k2, c[(k2 + band) as usize * w + (k1 + band) as usize]);
        }
    }
    s
}

/// Velocity known through its Fourier modes at any time.
pub trait ModalVelocity: Sync {
    fn modes_at(&self, t: f64) -> Vec<Mode>;
    /// Upper bound for `‖v‖₀ + ‖∇v‖₀` on the time range of interest.
    fn c1_bound(&self) -> f64;
}

impl ModalVelocity for BandSeries2 {
    fn modes_at(&self, t: f64) -> Vec<Mode> {
        BandSeries2::modes_at(self, t)
    }
    fn c1_bound(&self) -> f64 {
        BandSeries2::c1_bound(self)
    }
}

/// Velocity given by a closure returning half-plane modes.
pub struct AnalyticVelocity<F: Fn(f64) -> Vec<Mode> + Sync> {
    pub modes: F,
    pub c1: f64,
}

impl<F: Fn(f64) -> Vec<Mode> + Sync> ModalVelocity for AnalyticVelocity<F> {
    fn modes_at(&self, t: f64) -> Vec<Mode> {
        (self.modes)(t)
    }
    fn c1_bound(&self) -> f64 {
        self.c1
    }
}

#[inline]
fn eval_modes(modes: &[Mode], x: [f64; 2]) -> [f64; 2] {
    let mut v = [0.0; 2];
    for m in modes {
        let (s, c) = (m.k[0] * x[0] + m.k[1] * x[1]).sin_cos();
        v[0] += m.c[0].re * c - m.c[0].im * s;
        v[1] += m.c[1].re * c - m.c[1].im * s;
    }
    v
}

/// Inverse flow `Φ_l(t, x) = x + D(t, x)` on the coarse grid, for the
/// time samples `first..first + slices.len()`.
#[derive(Clone, Debug)]
pub struct FlowMap {
    pub l: usize,
    pub anchor: f64,
    grid: Grid,
    first: usize,
    slices: Vec<[Vec<f64>; 2]>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct FlowOptions {
    /// Largest characteristic step; defaults to half the sample spacing.
    pub max_step: Option<f64>,
}

impl FlowMap {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn window(&self) -> std::ops::Range<usize> {
        self.first..self.first + self.slices.len()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.window().contains(&j)
    }

    /// Displacement `(D1, D2)` on the coarse grid at sample `j`.
    pub fn displacement(&self, j: usize) -> &[Vec<f64>; 2] {
        &self.slices[j - self.first]
    }

    /// Displacement at sample `j` as coarse spectra.
    pub fn displacement_spectra(&self, j: usize) -> (Spectrum, Spectrum) {
        let d = self.displacement(j);
        forward_real_pair(self.grid.n(), &d[0], &d[1])
    }

    /// `D` and `∇D = [[∂₁D₁, ∂₂D₁], [∂₁D₂, ∂₂D₂]]` on a finer grid.
    pub fn fine_fields(&self, j: usize, fine: Grid) -> ([Vec<f64>; 2], [[Vec<f64>; 2]; 2]) {
        let (a, b) = self.displacement_spectra(j);
        let n = fine.n();
        let pa = pad_spectrum(&a, n);
        let pb = pad_spectrum(&b, n);
        let (d1, d2) = inverse_real_pair(&pa, &pb);
        let (g11, g12) = inverse_real_pair(&pa.derivative(1, 0), &pa.derivative(0, 1));
        let (g21, g22) = inverse_real_pair(&pb.derivative(1, 0), &pb.derivative(0, 1));
        ([d1, d2], [[g11, g12], [g21, g22]])
    }

    /// Minimum of `det ∇Φ` on the coarse grid at sample `j`.
    pub fn min_jacobian(&self, j: usize) -> f64 {
        let (a, b) = self.displacement_spectra(j);
        let (g11, g12) = inverse_real_pair(&a.derivative(1, 0), &a.derivative(0, 1));
        let (g21, g22) = inverse_real_pair(&b.derivative(1, 0), &b.derivative(0, 1));
        (0..g11.len()).map(|i| (1.0 + g11[i]) * (1.0 + g22[i]) - g12[i] * g21[i]).fold(f64::INFINITY, f64::min)
    }

    /// `‖∇Φ − Id‖₀` at sample `j` (max entry-wise Frobenius).
    pub fn gradient_deviation(&self, j: usize) -> f64 {
        gradient_deviation(self.grid, self.displacement(j))
    }

    /// Fraction of displacement spectral energy in the top third of the coarse band.
    pub fn tail_fraction(&self, j: usize) -> f64 {
        let (a, b) = self.displacement_spectra(j);
        let cut = (self.grid.n() / 3) as i64;
        let mut tail = 0.0;
        let mut total = 0.0;
        for s in [&a, &b] {
            s.for_each(|k1, k2, z| {
                let e = z.norm_sqr();
                total += e;
                if k1.abs() > cut || k2.abs() > cut {
                    tail += e;
                }
            });
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }
}

/// Zero-pad (or truncate) a spectrum to an `n`-grid, dropping Nyquist modes.
pub fn pad_spectrum(s: &Spectrum, n: usize) -> Spectrum {
    let m = s.n();
    let lim = ((m.min(n)) / 2) as i64 - 1;
    let mut out = Spectrum::zeros(n);
    for k2 in -lim..=lim {
        for k1 in -lim..=lim {
            out.set(k1, k2, s.get(k1, k2));
        }
    }
    out
}

/// Displacement `X − x` of the characteristics of `v` started on the nodes of
/// `grid` at `t_from` and followed to `t_to` with RK4 steps of at most `step`.
pub fn characteristic_displacement(v: &dyn ModalVelocity, t_from: f64, t_to: f64, grid: Grid, step: f64) -> [Vec<f64>; 2] {
    let n = grid.n();
    let nodes: Vec<[f64; 2]> = (0..n * n).map(|i| [grid.coord(i / n), grid.coord(i % n)]).collect();
    let span = t_to - t_from;
    let steps = (span.abs() / step).ceil() as usize;
    let mut x = nodes.clone();
    if steps > 0 {
        let h = span / steps as f64;
        for s in 0..steps {
            let tau = t_from + s as f64 * h;
            let m0 = v.modes_at(tau);
            let mh = v.modes_at(tau + 0.5 * h);
            let m1 = v.modes_at(tau + h);
            for p in x.iter_mut() {
                let a = eval_modes(&m0, *p);
                let b = eval_modes(&mh, [p[0] + 0.5 * h * a[0], p[1] + 0.5 * h * a[1]]);
                let c = eval_modes(&mh, [p[0] + 0.5 * h * b[0], p[1] + 0.5 * h * b[1]]);
                let d = eval_modes(&m1, [p[0] + h * c[0], p[1] + h * c[1]]);
                p[0] += h / 6.0 * (a[0] + 2.0 * b[0] + 2.0 * c[0] + d[0]);
                p[1] += h / 6.0 * (a[1] + 2.0 * b[1] + 2.0 * c[1] + d[1]);
            }
        }
    }
    let mut d1 = Vec::with_capacity(n * n);
    let mut d2 = Vec::with_capacity(n * n);
    for (p, q) in x.iter().zip(&nodes) {
        d1.push(p[0] - q[0]);
        d2.push(p[1] - q[1]);
    }
    [d1, d2]
}

/// Backward characteristics to the anchor `l/μ` from every coarse node
/// at the samples `window`.
pub fn solve_inverse_flow(
    v: &dyn ModalVelocity,
    l: usize,
    mu: usize,
    window: std::ops::Range<usize>,
    time: &TimeGrid,
    grid: Grid,
    opts: FlowOptions,
) -> Result<FlowMap> {
    if mu == 0 {
        return Err(Error::InvalidInput("μ must be positive".into()));
    }
    let anchor = l as f64 / mu as f64;
    for j in window.clone() {
        if (mu as f64 * time.time(j) - l as f64).abs() >= 1.0 {
            return Err(Error::InvalidInput(format!("sample {j} lies outside |μt − l| < 1 for chart {l}")));
        }
    }
    let c1 = v.c1_bound();
    let default_step = time.dt() / 2.0;
    let step = match opts.max_step {
        Some(h) => {
            if h * c1 > 0.25 {
                return Err(Error::StepUnstable { dt: h, bound: 0.25 / c1 });
            }
            h
        }
        None => {
            if c1 > 0.0 {
                default_step.min(0.25 / c1)
            } else {
                default_step
            }
        }
    };
    let mut slices = Vec::with_capacity(window.len());
    for j in window.clone() {
        slices.push(characteristic_displacement(v, time.time(j), anchor, grid, step));
    }
    Ok(FlowMap { l, anchor, grid, first: window.start, slices })
}

/// Settings for [`TransportDiffusion`].
#[derive(Clone, Copy, Debug)]
pub struct TransportOptions {
    /// Coefficient of `Δθ`; `0` gives pure transport.
    pub diffusivity: f64,
    /// Largest internal step; defaults to half the interval being advanced.
    pub max_step: Option<f64>,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions { diffusivity: 1.0, max_step: None }
    }
}

/// Velocity sample used for time interpolation, with its `‖v‖₀ + ‖∇v‖₀`.
pub struct VelocityNode<'a> {
    pub t: f64,
    pub v: &'a VectorField2,
    pub c1: f64,
}

impl<'a> VelocityNode<'a> {
    pub fn new(t: f64, v: &'a VectorField2) -> VelocityNode<'a> {
        let c1 = velocity_c1(v);
        VelocityNode { t, v, c1 }
    }
}

/// `‖v‖₀ + ‖∇v‖₀` with the gradient measured in Frobenius norm.
pub fn velocity_c1(v: &VectorField2) -> f64 {
    v.prime_spectra();
    let a = v.u1.spectrum();
    let b = v.u2.spectrum();
    let (g11, g12) = inverse_real_pair(&a.derivative(1, 0), &a.derivative(0, 1));
    let (g21, g22) = inverse_real_pair(&b.derivative(1, 0), &b.derivative(0, 1));
    let grad = (0..g11.len())
        .map(|i| (g11[i] * g11[i] + g12[i] * g12[i] + g21[i] * g21[i] + g22[i] * g22[i]).sqrt())
        .fold(0.0, f64::max);
    v.sup_norm() + grad
}

/// Time-dependent source term.
pub enum Forcing<'a> {
    None,
    Sampled { time: TimeGrid, fields: &'a [ScalarField] },
    Function(&'a dyn Fn(f64) -> ScalarField),
}

impl Forcing<'_> {
    fn spectrum_at(&self, t: f64, n: usize) -> Option<Spectrum> {
        match self {
            Forcing::None => None,
            Forcing::Function(f) => Some(forward_real(n, f(t).values())),
            Forcing::Sampled { time, fields } => {
                let st = time.cubic_stencil(t);
                let ts: Vec<f64> = st.iter().map(|&j| time.time(j)).collect();
                let w = lagrange_weights(&ts, t);
                let mut s = Spectrum::zeros(n);
                for (k, &j) in st.iter().enumerate() {
                    s.axpy(w[k], fields[j].spectrum());
                }
                Some(s)
            }
        }
    }
}

/// Exponential time-differencing RK4 stepper for `∂_tθ + v·∇θ − κΔθ = f`
/// with 2/3-rule dealiasing of the advection term. Diffusion is integrated
/// exactly, so modes slaved to the forcing keep their amplitude at any step.
pub struct TransportDiffusion {
    grid: Grid,
    t: f64,
    theta: Spectrum,
    opts: TransportOptions,
    ksq: Vec<f64>,
    mask: Vec<f64>,
    ik1: Vec<Complex64>,
    ik2: Vec<Complex64>,
}

impl TransportDiffusion {
    pub fn new(theta0: &ScalarField, t0: f64, opts: TransportOptions) -> TransportDiffusion {
        let grid = theta0.grid();
        let n = grid.n();
        let cut = grid.dealias_cutoff();
        let nyq = (n / 2) as i64;
        let mut ksq = vec![0.0; n * n];
        let mut mask = vec![0.0; n * n];
        let mut ik1 = vec![Complex64::new(0.0, 0.0); n * n];
        let mut ik2 = vec![Complex64::new(0.0, 0.0); n * n];
        let mut idx = 0;
        let mut theta = theta0.spectrum().clone();
        Spectrum::zeros(n).for_each(|k1, k2, _| {
            ksq[idx] = (k1 * k1 + k2 * k2) as f64;
            mask[idx] = if k1.abs() <= cut && k2.abs() <= cut { 1.0 } else { 0.0 };
            ik1[idx] = if k1 == nyq { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, k1 as f64) };
            ik2[idx] = if k2 == nyq { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, k2 as f64) };
            idx += 1;
        });
        for (z, m) in theta.raw_mut().iter_mut().zip(&mask) {
            *z *= m;
        }
        TransportDiffusion { grid, t: t0, theta, opts, ksq, mask, ik1, ik2 }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.theta
    }

    pub fn theta(&self) -> ScalarField {
        ScalarField::from_spectrum(self.grid, self.theta.clone())
    }

    fn velocity_at(nodes: &[VelocityNode], t: f64) -> (Vec<f64>, Vec<f64>) {
        let ts: Vec<f64> = nodes.iter().map(|n| n.t).collect();
        let w = lagrange_weights(&ts, t);
        let len = nodes[0].v.u1.values().len();
        let mut a = vec![0.0; len];
        let mut b = vec![0.0; len];
        for (node, wk) in nodes.iter().zip(&w) {
            for (x, y) in a.iter_mut().zip(node.v.u1.values()) {
                *x += wk * y;
            }
            for (x, y) in b.iter_mut().zip(node.v.u2.values()) {
                *x += wk * y;
            }
        }
        (a, b)
    }

    /// `−P(v·∇θ) + f̂`, with the mean of the advection term removed.
    fn rhs(&self, theta: &Spectrum, v: &(Vec<f64>, Vec<f64>), f: Option<&Spectrum>, advect: bool) -> Spectrum {
        let n = self.grid.n();
        let mut out = Spectrum::zeros(n);
        if advect {
            let mut d1 = theta.clone();
            let mut d2 = theta.clone();
            for (i, (x, y)) in d1.raw_mut().iter_mut().zip(d2.raw_mut().iter_mut()).enumerate() {
                *x *= self.ik1[i];
                *y *= self.ik2[i];
            }
            let (g1, g2) = inverse_real_pair(&d1, &d2);
            let prod: Vec<f64> = (0..g1.len()).map(|i| v.0[i] * g1[i] + v.1[i] * g2[i]).collect();
            let ps = forward_real(n, &prod);
            for (i, (o, p)) in out.raw_mut().iter_mut().zip(ps.raw()).enumerate() {
                *o = -p * self.mask[i];
            }
            out.raw_mut()[0] = Complex64::new(0.0, 0.0);
        }
        if let Some(f) = f {
            for (i, (o, p)) in out.raw_mut().iter_mut().zip(f.raw()).enumerate() {
                *o += p * self.mask[i];
            }
        }
        out
    }

    /// Advance to `t1`, interpolating the velocity through `nodes` (cubic
    /// for four nodes) and evaluating the forcing at stage times.
    pub fn advance(&mut self, t1: f64, nodes: &[VelocityNode], forcing: &Forcing) -> Result<()> {
        let n = self.grid.n();
        let span = t1 - self.t;
        if span <= 0.0 {
            return Ok(());
        }
        let c1 = nodes.iter().map(|n| n.c1).fold(0.0, f64::max);
        let vsup = nodes.iter().map(|n| n.v.sup_norm()).fold(0.0, f64::max);
        let advect = vsup > 0.0;
        let default_step = self.opts.max_step.unwrap_or(span / 2.0);
        if let Some(h) = self.opts.max_step {
            if h * c1 > 0.25 {
                return Err(Error::StepUnstable { dt: h, bound: 0.25 / c1 });
            }
        }
        let mut step = if c1 > 0.0 { default_step.min(0.25 / c1) } else { default_step };
        // explicit advection stability for the retained band
        let kmax = (2.0f64).sqrt() * self.grid.dealias_cutoff() as f64;
        if advect && step * kmax * vsup > 2.5 {
            step = 2.5 / (kmax * vsup);
        }
        if let Some(f) = forcing.spectrum_at(self.t, n) {
            let band = f.active_band(1e-13 * f.raw().iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300));
            if band > self.grid.dealias_cutoff() {
                return Err(Error::Unresolved(format!(
                    "forcing wavenumber {band} exceeds retained band {}",
                    self.grid.dealias_cutoff()
                )));
            }
        }
        let steps = (span / step).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        let co = EtdCoefficients::new(&self.ksq, self.opts.diffusivity, h);
        for _ in 0..steps {
            let t = self.t;
            let v0 = if advect { Self::velocity_at(nodes, t) } else { (vec![], vec![]) };
            let vh = if advect { Self::velocity_at(nodes, t + h / 2.0) } else { (vec![], vec![]) };
            let v1 = if advect { Self::velocity_at(nodes, t + h) } else { (vec![], vec![]) };
            let f0 = forcing.spectrum_at(t, n);
            let fh = forcing.spectrum_at(t + h / 2.0, n);
            let f1 = forcing.spectrum_at(t + h, n);
            let u = self.theta.raw().to_vec();
            let nu = self.rhs(&self.theta, &v0, f0.as_ref(), advect);
            let mut a = Spectrum::zeros(n);
            for (i, z) in a.raw_mut().iter_mut().enumerate() {
                *z = co.e_half[i] * u[i] + co.q[i] * nu.raw()[i];
            }
            let na = self.rhs(&a, &vh, fh.as_ref(), advect);
            let mut b = Spectrum::zeros(n);
            for (i, z) in b.raw_mut().iter_mut().enumerate() {
                *z = co.e_half[i] * u[i] + co.q[i] * na.raw()[i];
            }
            let nb = self.rhs(&b, &vh, fh.as_ref(), advect);
            let mut c = Spectrum::zeros(n);
            for (i, z) in c.raw_mut().iter_mut().enumerate() {
                *z = co.e_half[i] * a.raw()[i] + co.q[i] * (2.0 * nb.raw()[i] - nu.raw()[i]);
            }
            let nc = self.rhs(&c, &v1, f1.as_ref(), advect);
            for (i, z) in self.theta.raw_mut().iter_mut().enumerate() {
                *z = co.e_full[i] * u[i]
                    + co.f1[i] * nu.raw()[i]
                    + 2.0 * co.f2[i] * (na.raw()[i] + nb.raw()[i])
                    + co.f3[i] * nc.raw()[i];
            }
            self.t += h;
        }
        self.t = t1;
        Ok(())
    }
}

/// Per-mode weights of the Cox–Matthews scheme for `L = −κ|k|²` and step `h`.
struct EtdCoefficients {
    e_half: Vec<f64>,
    e_full: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
}

impl EtdCoefficients {
    fn new(ksq: &[f64], kappa: f64, h: f64) -> EtdCoefficients {
        let mut cache: std::collections::HashMap<u64, [f64; 6]> = std::collections::HashMap::new();
        let len = ksq.len();
        let mut out = EtdCoefficients {
            e_half: vec![0.0; len],
            e_full: vec![0.0; len],
            q: vec![0.0; len],
            f1: vec![0.0; len],
            f2: vec![0.0; len],
            f3: vec![0.0; len],
        };
        for (i, &k) in ksq.iter().enumerate() {
            let c = *cache.entry(k.to_bits()).or_insert_with(|| etd_weights(-kappa * k * h, h));
            out.e_half[i] = c[0];
            out.e_full[i] = c[1];
            out.q[i] = c[2];
            out.f1[i] = c[3];
            out.f2[i] = c[4];
            out.f3[i] = c[5];
        }
        out
    }
}

/// `[e^{z/2}, e^z, h(e^{z/2}−1)/z, hf₁(z), hf₂(z), hf₃(z)]` for `z = Lh ≤ 0`;
/// contour averages near `z = 0` avoid cancellation.
fn etd_weights(z: f64, h: f64) -> [f64; 6] {
    let direct = |z: Complex64| -> [Complex64; 4] {
        let e = z.exp();
        let eh = (z / 2.0).exp();
        let z3 = z * z * z;
        [
            (eh - 1.0) / z,
            (-4.0 - z + e * (4.0 - 3.0 * z + z * z)) / z3,
            (2.0 + z + e * (z - 2.0)) / z3,
            (-4.0 - 3.0 * z - z * z + e * (4.0 - z)) / z3,
        ]
    };
    let w = if z.abs() < 1.0 {
        let m = 32;
        let mut acc = [Complex64::new(0.0, 0.0); 4];
        for j in 1..=m {
            let r = Complex64::new(z, 0.0) + Complex64::from_polar(1.0, std::f64::consts::PI * (j as f64 - 0.5) / m as f64);
            for (a, d) in acc.iter_mut().zip(direct(r)) {
                *a += d;
            }
        }
        acc.map(|a| a.re / m as f64)
    } else {
        direct(Complex64::new(z, 0.0)).map(|a| a.re)
    };
    [(z / 2.0).exp(), z.exp(), h * w[0], h * w[1], h * w[2], h * w[3]]
}

/// Four velocity-node indices around the interval `[j, j+1]`.
pub fn interval_stencil(j: usize, n_t: usize) -> Vec<usize> {
    if n_t < 4 {
        return (0..n_t).collect();
    }
    let s = j.saturating_sub(1).min(n_t - 4);
    (s..s + 4).collect()
}

/// Solve the transport-diffusion equation on the sample times of `time`.
pub fn solve_transport_diffusion(
    v: &[VectorField2],
    theta0: &ScalarField,
    forcing: &Forcing,
    time: &TimeGrid,
    opts: TransportOptions,
) -> Result<Vec<ScalarField>> {
    if v.len() != time.len() {
        return Err(Error::InvalidInput("velocity samples do not match the time grid".into()));
    }
    let c1: Vec<f64> = v.iter().map(velocity_c1).collect();
    for (j, vj) in v.iter().enumerate() {
        let div = crate::fields::divergence(vj).sup_norm();
        if div > 1e-10 * (1.0 + c1[j]) {
            return Err(Error::InvalidInput(format!("velocity at sample {j} is not divergence-free ({div:e})")));
        }
    }
    let mut solver = TransportDiffusion::new(theta0, 0.0, opts);
    let mut out = Vec::with_capacity(time.len());
    out.push(solver.theta());
    for j in 0..time.len() - 1 {
        let nodes: Vec<VelocityNode> =
            interval_stencil(j, time.len()).into_iter().map(|i| VelocityNode { t: time.time(i), v: &v[i], c1: c1[i] }).collect();
        solver.advance(time.time(j + 1), &nodes, forcing)?;
        out.push(solver.theta());
    }
    Ok(out)
}

/// `‖∇θ‖²_{L²}` from the spectrum by Parseval.
pub fn dissipation(theta: &Spectrum) -> f64 {
    let mut s = 0.0;
    theta.for_each(|k1, k2, z| s += (k1 * k1 + k2 * k2) as f64 * z.norm_sqr());
    s * 4.0 * std::f64::consts::PI.powi(2)
}

/// `t ↦ ½‖θ(t)‖² + ∫₀ᵗ ‖∇θ‖²` on the samples.
pub fn theta_energy_ledger(theta: &[ScalarField], time: &TimeGrid) -> Vec<f64> {
    let diss: Vec<f64> = theta.iter().map(|f| dissipation(f.spectrum())).collect();
    let cum = cumulative_simpson(&diss, time.dt());
    theta.iter().zip(cum).map(|(f, c)| 0.5 * f.l2_norm().powi(2) + c).collect()
}

/// Pure-transport checks of the maximum-principle and Hölder-type bounds.
#[derive(Clone, Debug)]
pub struct TransportReport {
    /// `(t, ‖f(t)‖₀, ‖f₀‖₀ + ∫‖g‖₀)`.
    pub sup_rows: Vec<(f64, f64, f64)>,
    /// `(t, ‖f(t)‖_α, 2(‖f₀‖_α + ∫‖g‖_α))`.
    pub holder_rows: Vec<(f64, f64, f64)>,
    /// `max_t ‖∇Φ − Id‖₀ / (|t − t₀| [v]₁)`.
    pub flow_constant: f64,
    pub alpha: f64,
}

impl TransportReport {
    pub fn sup_bound_holds(&self) -> bool {
        self.sup_rows.iter().all(|r| r.1 <= r.2 * (1.0 + 1e-10))
    }

    pub fn holder_bound_holds(&self) -> bool {
        self.holder_rows.iter().all(|r| r.1 <= r.2 * (1.0 + 1e-10))
    }

    pub fn min_sup_slack(&self) -> f64 {
        self.sup_rows.iter().map(|r| r.2 - r.1).fold(f64::INFINITY, f64::min)
    }
}

/// Evolve `∂_t f + v·∇f = g` for steady `v`, `g` on `[0, t_end]`.
pub fn transport_estimate_probe(
    v: &VectorField2,
    f0: &ScalarField,
    g: Option<&ScalarField>,
    t_end: f64,
    samples: usize,
    alpha: f64,
) -> Result<TransportReport> {
    let c1 = velocity_c1(v);
    if t_end * c1 > 1.0 + 1e-12 {
        return Err(Error::InvalidInput(format!("probe window violates |t|‖v‖₁ ≤ 1 ({})", t_end * c1)));
    }
    let grid = f0.grid();
    let norm_alpha = |f: &ScalarField| -> Result<f64> { Ok(f.sup_norm() + crate::fields::holder_seminorm(f, 0, alpha)?) };
    let g_sup = g.map(|g| g.sup_norm()).unwrap_or(0.0);
    let g_alpha = match g {
        Some(g) => norm_alpha(g)?,
        None => 0.0,
    };
    let f0_alpha = norm_alpha(f0)?;
    let mut solver = TransportDiffusion::new(f0, 0.0, TransportOptions { diffusivity: 0.0, max_step: None });
    let forcing_fn;
    let forcing = match g {
        Some(g) => {
            forcing_fn = move |_t: f64| g.clone();
            Forcing::Function(&forcing_fn)
        }
        None => Forcing::None,
    };
    let node = VelocityNode { t: 0.0, v, c1 };
    let nodes = [node];
    let mut sup_rows = vec![(0.0, f0.sup_norm(), f0.sup_norm())];
    let mut holder_rows = vec![(0.0, f0_alpha, 2.0 * f0_alpha)];
    for s in 1..samples {
        let t = t_end * s as f64 / (samples - 1) as f64;
        solver.advance(t, &nodes, &forcing)?;
        let f = solver.theta();
        sup_rows.push((t, f.sup_norm(), f0.sup_norm() + t * g_sup));
        holder_rows.push((t, norm_alpha(&f)?, 2.0 * (f0_alpha + t * g_alpha)));
    }
    // flow-map gradient deviation for the same steady field
    let (s1, s2) = (v.u1.spectrum().clone(), v.u2.spectrum().clone());
    let band = s1.active_band(1e-14).max(s2.active_band(1e-14)).max(1);
    let time = TimeGrid::new(samples)?;
    let series = BandSeries2::from_spectra(time, band, &vec![(s1, s2); samples]);
    let lip = {
        let g = crate::fields::gradient(&v.u1);
        let h = crate::fields::gradient(&v.u2);
        (0..grid.len())
            .map(|i| {
                let a = [g.u1.values()[i], g.u2.values()[i], h.u1.values()[i], h.u2.values()[i]];
                a.iter().map(|x| x * x).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    };
    let coarse = Grid::new(grid.n().min(64))?;
    let step = (0.25 / c1.max(1e-300)).min(t_end / 64.0);
    let mut flow_constant: f64 = 0.0;
    for s in 1..samples {
        let t = t_end * s as f64 / (samples - 1) as f64;
        let d = characteristic_displacement(&series, t, 0.0, coarse, step);
        let dev = gradient_deviation(coarse, &d);
        if lip > 0.0 {
            flow_constant = flow_constant.max(dev / (t * lip));
        }
    }
    Ok(TransportReport { sup_rows, holder_rows, flow_constant, alpha })
}

fn gradient_deviation(grid: Grid, d: &[Vec<f64>; 2]) -> f64 {
    let (a, b) = forward_real_pair(grid.n(), &d[0], &d[1]);
    let (g11, g12) = inverse_real_pair(&a.derivative(1, 0), &a.derivative(0, 1));
    let (g21, g22) = inverse_real_pair(&b.derivative(1, 0), &b.derivative(0, 1));
    (0..g11.len())
        .map(|i| (g11[i] * g11[i] + g12[i] * g12[i] + g21[i] * g21[i] + g22[i] * g22[i]).sqrt())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn shear_series(n_t: usize, amp: f64) -> BandSeries2 {
        let time = TimeGrid::new(n_t).unwrap();
        let w = 3usize;
        let mut c = vec![Complex64::new(0.0, 0.0); w * w];
        // amp·sin(x₂) = amp(e^{ix₂} − e^{−ix₂})/(2i)
        c[2 * w + 1] = Complex64::new(0.0, -amp / 2.0);
        c[1] = Complex64::new(0.0, amp / 2.0);
        let z = vec![Complex64::new(0.0, 0.0); w * w];
        BandSeries2::new(time, 1, vec![[c, z]; n_t])
    }

    #[test]
    fn slaved_forced_mode_with_large_steps() {
        let grid = Grid::new(128).unwrap();
        let lam = 40.0;
        let f = ScalarField::from_fn(grid, |x, _| (lam * x).cos());
        let forcing_fn = |_t: f64| f.clone();
        let forcing = Forcing::Function(&forcing_fn);
        let zero = VectorField2::zeros(grid);
        let nodes = [VelocityNode::new(0.0, &zero)];
        let mut s = TransportDiffusion::new(&ScalarField::zeros(grid), 0.0, TransportOptions { diffusivity: 1.0, max_step: Some(0.05) });
        s.advance(0.5, &nodes, &forcing).unwrap();
        let amp = (1.0 - (-lam * lam * 0.5f64).exp()) / (lam * lam);
        let exact = ScalarField::from_fn(grid, |x, _| amp * (lam * x).cos());
        assert!(s.theta().sub(&exact).sup_norm() < 1e-14);
    }

    #[test]
    fn time_grid_basics() {
        let t = TimeGrid::new(5).unwrap();
        assert_eq!(t.dt(), 0.25);
        assert_eq!(t.time(4), 1.0);
        assert!(TimeGrid::new(1).is_err());
        assert_eq!(t.cubic_stencil(0.0), [0, 1, 2, 3]);
        assert_eq!(t.cubic_stencil(1.0), [1, 2, 3, 4]);
    }

    #[test]
    fn zero_velocity_gives_identity() {
        let time = TimeGrid::new(33).unwrap();
        let z = vec![Complex64::new(0.0, 0.0); 9];
        let v = BandSeries2::new(time, 1, vec![[z.clone(), z]; 33]);
        let fm = solve_inverse_flow(&v, 2, 4, 10..23, &time, Grid::new(16).unwrap(), FlowOptions::default()).unwrap();
        for j in fm.window() {
            assert!(fm.displacement(j)[0].iter().chain(&fm.displacement(j)[1]).all(|d| *d == 0.0));
        }
    }

    #[test]
    fn constant_velocity_translates() {
        let c = [0.3, -0.7];
        let v = AnalyticVelocity {
            modes: move |_t| vec![Mode { k: [0.0, 0.0], c: [Complex64::new(c[0], 0.0), Complex64::new(c[1], 0.0)] }],
            c1: 0.77,
        };
        let time = TimeGrid::new(65).unwrap();
        let fm = solve_inverse_flow(&v, 1, 2, 20..45, &time, Grid::new(16).unwrap(), FlowOptions::default()).unwrap();
        for j in fm.window() {
            let dt = time.time(j) - 0.5;
            let d = fm.displacement(j);
            assert!(d[0].iter().all(|x| (x + c[0] * dt).abs() < 1e-14));
            assert!(d[1].iter().all(|x| (x + c[1] * dt).abs() < 1e-14));
        }
    }

    #[test]
    fn anchor_identity() {
        let v = shear_series(129, 1.0);
        let time = TimeGrid::new(129).unwrap();
        // l/μ = 1/2 is sample 64
        let fm = solve_inverse_flow(&v, 2, 4, 60..69, &time, Grid::new(16).unwrap(), FlowOptions::default()).unwrap();
        let d = fm.displacement(64);
        assert!(d[0].iter().chain(&d[1]).all(|x| x.abs() <= 1e-13));
    }

    #[test]
    fn shear_matches_fine_euler_oracle() {
        let v = shear_series(129, 1.0);
        let time = TimeGrid::new(129).unwrap();
        let grid = Grid::new(16).unwrap();
        let fm = solve_inverse_flow(&v, 2, 4, 58..71, &time, grid, FlowOptions::default()).unwrap();
        for j in fm.window() {
            let span = 0.5 - time.time(j);
            let steps = 100 * ((span.abs() / (time.dt() / 2.0)).ceil() as usize).max(1);
            let h = span / steps as f64;
            for i in 0..grid.len() {
                let mut x = [grid.coord(i / 16), grid.coord(i % 16)];
                for _ in 0..steps {
                    x[0] += h * x[1].sin();
                }
                let d = fm.displacement(j);
                assert!((d[0][i] - (x[0] - grid.coord(i / 16))).abs() < 1e-8);
                assert!(d[1][i].abs() < 1e-15);
            }
        }
    }

    #[test]
    fn flow_refinement_is_fourth_order() {
        // cellular flow v = ∇⊥(sin x₁ sin x₂) = (−sin x₁ cos x₂, cos x₁ sin x₂), time-modulated
        let modes = |t: f64| {
            let a = 1.0 + 0.5 * (3.0 * t).sin();
            // −sin x₁ cos x₂ = −¼ Σ ... expressed through half-plane modes
            let q = a / 4.0;
            vec![
                Mode { k: [1.0, 1.0], c: [Complex64::new(0.0, q) * 2.0, Complex64::new(0.0, -q) * 2.0] },
                Mode { k: [1.0, -1.0], c: [Complex64::new(0.0, q) * 2.0, Complex64::new(0.0, q) * 2.0] },
            ]
        };
        let v = AnalyticVelocity { modes, c1: 3.0 };
        let time = TimeGrid::new(17).unwrap();
        let grid = Grid::new(8).unwrap();
        let run = |h: f64| {
            solve_inverse_flow(&v, 2, 4, 6..7, &time, grid, FlowOptions { max_step: Some(h) }).unwrap().displacement(6).clone()
        };
        let reference = run(1.0 / 2048.0);
        let err = |d: &[Vec<f64>; 2]| {
            d[0].iter().zip(&reference[0]).chain(d[1].iter().zip(&reference[1])).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let e1 = err(&run(1.0 / 16.0));
        let e2 = err(&run(1.0 / 32.0));
        assert!(e1 > 0.0 && e1 / e2 >= 8.0, "ratio {}", e1 / e2);
        assert!(matches!(
            solve_inverse_flow(&v, 2, 4, 6..7, &time, grid, FlowOptions { max_step: Some(0.2) }),
            Err(Error::StepUnstable { .. })
        ));
    }

    #[test]
    fn window_outside_chart_rejected() {
        let v = shear_series(33, 1.0);
        let time = TimeGrid::new(33).unwrap();
        assert!(solve_inverse_flow(&v, 0, 4, 0..12, &time, Grid::new(8).unwrap(), FlowOptions::default()).is_err());
    }

    #[test]
    fn heat_decay_exact() {
        let grid = Grid::new(16).unwrap();
        let time = TimeGrid::new(257).unwrap();
        let theta0 = ScalarField::from_fn(grid, |_, y| y.sin());
        let v = vec![VectorField2::zeros(grid); 257];
        let th = solve_transport_diffusion(&v, &theta0, &Forcing::None, &time, TransportOptions::default()).unwrap();
        for (j, f) in th.iter().enumerate() {
            let e = theta0.scale((-time.time(j)).exp());
            assert!(f.sub(&e).sup_norm() < 1e-13);
        }
        let ledger = theta_energy_ledger(&th, &time);
        for l in ledger {
            assert!((l - PI * PI).abs() < 1e-8 * (1.0 + 2.0 * PI * PI), "{}", l - PI * PI);
        }
    }

    #[test]
    fn shear_does_not_advect_x2_profile() {
        let grid = Grid::new(32).unwrap();
        let time = TimeGrid::new(17).unwrap();
        let theta0 = ScalarField::from_fn(grid, |_, y| y.cos());
        let v: Vec<VectorField2> = (0..17)
            .map(|j| {
                let a = 1.0 + time.time(j);
                VectorField2::from_fn(grid, |_, y| [a * (5.0 * y).sin(), 0.0])
            })
            .collect();
        let th = solve_transport_diffusion(&v, &theta0, &Forcing::None, &time, TransportOptions::default()).unwrap();
        for (j, f) in th.iter().enumerate() {
            assert!(f.sub(&theta0.scale((-time.time(j)).exp())).sup_norm() < 1e-12);
        }
    }

    #[test]
    fn mean_and_max_principle_under_cellular_flow() {
        let grid = Grid::new(32).unwrap();
        let time = TimeGrid::new(17).unwrap();
        let theta0 = ScalarField::from_fn(grid, |x, y| 0.4 + (x + y).sin() + 0.3 * (2.0 * x).cos());
        let v = VectorField2::from_fn(grid, |x, y| [-x.sin() * y.cos(), x.cos() * y.sin()]);
        let vs = vec![v; 17];
        let th = solve_transport_diffusion(&vs, &theta0, &Forcing::None, &time, TransportOptions::default()).unwrap();
        for f in &th {
            assert!((f.mean() - theta0.mean()).abs() < 1e-12);
            assert!(f.sup_norm() <= theta0.sup_norm() + 1e-8);
        }
    }

    #[test]
    fn unresolved_forcing_rejected() {
        let grid = Grid::new(16).unwrap();
        let f = |_t: f64| ScalarField::from_fn(grid, |x, _| (7.0 * x).cos());
        let mut s = TransportDiffusion::new(&ScalarField::zeros(grid), 0.0, TransportOptions::default());
        let v = VectorField2::zeros(grid);
        let nodes = [VelocityNode::new(0.0, &v)];
        assert!(matches!(s.advance(0.1, &nodes, &Forcing::Function(&f)), Err(Error::Unresolved(_))));
    }

    #[test]
    fn transport_probe_bounds() {
        let grid = Grid::new(32).unwrap();
        let v = VectorField2::from_fn(grid, |_, y| [0.3 * y.sin(), 0.0]);
        let f0 = ScalarField::from_fn(grid, |x, y| (x + 2.0 * y).sin() + 0.5 * (3.0 * x - y).cos());
        let r = transport_estimate_probe(&v, &f0, None, 1.0, 5, 0.5).unwrap();
        assert!(r.sup_bound_holds());
        assert!(r.holder_bound_holds());
        assert!(r.flow_constant > 0.0 && r.flow_constant < 2.0);
        // constant velocity: sup norm invariant
        let c = VectorField2::from_fn(grid, |_, _| [0.2, 0.1]);
        let s = ScalarField::from_fn(grid, |_, y| y.sin());
        let r = transport_estimate_probe(&c, &s, None, 1.0, 4, 0.5).unwrap();
        for row in &r.sup_rows {
            assert!((row.1 - 1.0).abs() < 1e-2);
        }
    }
}
