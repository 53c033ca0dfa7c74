//! The stage driver: one streaming sweep over the time grid that builds the
//! perturbation, solves for the new temperature and assembles the new stress.

use std::collections::BTreeMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::evolution::{
    dissipation, embed_band, extract_band, interval_stencil, velocity_c1, BandSeries2, Forcing, TimeGrid,
    TransportDiffusion, TransportOptions, VelocityNode,
};
use crate::fields::{divergence, holder_seminorm_vector, Grid, ScalarField, SymTraceFreeTensor2Field, VectorField2};
use crate::scheme::{
    check_parameter_conditions, energy_gap, EnergyGap, EnergyProfile, Mode, ParamSchedule, ParameterReport,
    StageState, StateSlice,
};
use crate::stage::{build_partition, compute_rho, mollify, PerturbationBundle, PerturbationSlice};
use crate::stress::{assemble_stage, oscillation_crosscheck, AssemblyInput, BoundShapes, StressBreakdown, StressReport};
use crate::util::{cumulative_simpson, fd4_weights};

/// Everything known about one time sample during a stage sweep.
pub struct StageSample<'a> {
    pub j: usize,
    pub t: f64,
    pub prev: &'a StateSlice,
    pub next: &'a StateSlice,
    pub pert: &'a PerturbationSlice,
    pub dtw: &'a VectorField2,
    pub breakdown: &'a StressBreakdown,
    pub v_l: &'a VectorField2,
    pub r_l: &'a SymTraceFreeTensor2Field,
}

/// Receives every sample of a stage sweep in time order.
pub trait StageObserver {
    fn observe(&mut self, sample: &StageSample) -> Result<()>;
    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct StageOptions {
    pub transport: TransportOptions,
    /// Measure `C¹` norms of the stress terms on every this-many samples.
    pub c1_stride: usize,
    /// Hölder seminorms of `v₁` and `v₁ − v` on every this-many samples.
    pub holder_stride: usize,
    pub holder_alphas: Vec<f64>,
    /// Relative threshold below which stored temperature modes are dropped.
    pub theta_tolerance: f64,
}

impl Default for StageOptions {
    fn default() -> StageOptions {
        StageOptions {
            transport: TransportOptions::default(),
            c1_stride: 8,
            holder_stride: 64,
            holder_alphas: vec![0.0, 0.1],
            theta_tolerance: 1e-17,
        }
    }
}

/// Rounded stage parameters as used downstream.
#[derive(Clone, Debug)]
pub struct StageParams {
    pub q: usize,
    pub mode: Mode,
    pub lambda_q: usize,
    pub lambda_q1: usize,
    pub mu: usize,
    pub mu_raw: f64,
    pub ell: f64,
    pub delta_q: f64,
    pub delta_q1: f64,
    pub delta_q2: f64,
    pub rho: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct DiagnosticsSummary {
    pub cancellation: f64,
    pub unimodularity: f64,
    pub amplitude_sup: f64,
    pub amplitude_min: f64,
    pub l_sup: f64,
    pub admissibility: f64,
    pub min_jacobian: f64,
}

#[derive(Clone, Debug)]
pub struct HolderSample {
    pub t: f64,
    pub alpha: f64,
    pub v_next: f64,
    pub increment: f64,
}

/// Measurements gathered while a stage is built.
#[derive(Clone, Debug)]
pub struct StageReport {
    pub params: StageParams,
    pub gate: ParameterReport,
    /// Gap of the incoming velocity against `δ_{q+1}`.
    pub entry_gap: EnergyGap,
    /// Gap of the new velocity against `δ_{q+2}`.
    pub exit_gap: EnergyGap,
    /// Gap of the new velocity against `δ_{q+1}`.
    pub exit_gap_alt: EnergyGap,
    /// `max e′/μ + δ_{q+1}^{1/2}δ_q^{1/2}λ_q/μ + δ_{q+1}^{1/2}/(ℓλ_{q+1})`.
    pub gap_budget: f64,
    pub stress: StressReport,
    pub max_div: f64,
    pub osc_crosscheck: f64,
    /// `‖v₁ − v‖₀` and `‖v₁ − v‖₁` (the latter on the `C¹` samples).
    pub increment_sup: f64,
    pub increment_c1: f64,
    pub dtw_sup: f64,
    pub theta_ledger_drift: f64,
    pub theta_mean: f64,
    /// `(t, ‖θ₁ − θ‖²_{L²} + ∫₀ᵗ‖∇(θ₁ − θ)‖²)`.
    pub theta_increment: Vec<(f64, f64)>,
    /// `4‖θ⁰‖₀²‖v₁ − v‖₀²`.
    pub theta_increment_bound: f64,
    pub theta0_sup: f64,
    pub theta_band: i64,
    pub diagnostics: DiagnosticsSummary,
    pub holder: Vec<HolderSample>,
}

impl StageReport {
    pub fn theta_increment_max(&self) -> f64 {
        self.theta_increment.iter().map(|r| r.1).fold(0.0, f64::max)
    }

    pub fn theta_increment_holds(&self) -> bool {
        self.theta_increment_max() <= self.theta_increment_bound
    }

    /// Key/value summary for manifests and logs.
    pub fn summary_rows(&self) -> Vec<(String, String)> {
        let p = &self.params;
        let mut rows: Vec<(String, String)> = vec![
            ("q".into(), p.q.to_string()),
            ("mode".into(), p.mode.to_string()),
            ("lambda_q".into(), p.lambda_q.to_string()),
            ("lambda_q1".into(), p.lambda_q1.to_string()),
            ("mu".into(), p.mu.to_string()),
            ("mu_raw".into(), format!("{:.9e}", p.mu_raw)),
            ("ell".into(), format!("{:.9e}", p.ell)),
            ("delta_q".into(), format!("{:.9e}", p.delta_q)),
            ("delta_q1".into(), format!("{:.9e}", p.delta_q1)),
            ("delta_q2".into(), format!("{:.9e}", p.delta_q2)),
            ("gate_all_hold".into(), self.gate.all_hold().to_string()),
        ];
        let f = |k: &str, v: f64| (k.to_string(), format!("{v:.9e}"));
        rows.extend([
            f("entry_gap", self.entry_gap.max_normalized),
            f("exit_gap", self.exit_gap.max_normalized),
            f("exit_gap_alt", self.exit_gap_alt.max_normalized),
            f("gap_budget", self.gap_budget),
            f("max_div", self.max_div),
            f("max_trace", self.stress.trace.iter().cloned().fold(0.0, f64::max)),
            f("osc_crosscheck", self.osc_crosscheck),
            f("stress_sup", self.stress.total_sup),
            f("increment_sup", self.increment_sup),
            f("increment_c1", self.increment_c1),
            f("dtw_sup", self.dtw_sup),
            f("theta_ledger_drift", self.theta_ledger_drift),
            f("theta_mean", self.theta_mean),
            f("theta_increment_max", self.theta_increment_max()),
            f("theta_increment_bound", self.theta_increment_bound),
            f("cancellation", self.diagnostics.cancellation),
            f("unimodularity", self.diagnostics.unimodularity),
            f("admissibility", self.diagnostics.admissibility),
            f("amplitude_min", self.diagnostics.amplitude_min),
            f("min_jacobian", self.diagnostics.min_jacobian),
        ]);
        rows.push(("theta_band".into(), self.theta_band.to_string()));
        rows
    }
}

/// The stage-`q+1` state, rebuilt on demand from the perturbation bundle and
/// the stored temperature spectra.
pub struct ConstructedState {
    q: usize,
    prev: Arc<dyn StageState>,
    bundle: Arc<PerturbationBundle>,
    theta: Vec<(i64, Vec<Complex64>)>,
}

struct Entry {
    prev: StateSlice,
    pert: PerturbationSlice,
    v1: VectorField2,
    c1: f64,
}

fn slice_needs(j: usize, n: usize) -> usize {
    let (start, _) = fd4_weights(j, n, 1.0);
    let mut need = start + 4;
    if j > 0 {
        need = need.max(*interval_stencil(j - 1, n).last().unwrap());
    }
    need
}

/// Stream the stage over the samples of `prev`. `theta` supplies `θ₁` at
/// sample `j`, given the cached entries, and `sink` receives each sample.
fn stream_stage(
    prev: &dyn StageState,
    bundle: &PerturbationBundle,
    theta: &mut dyn FnMut(usize, &BTreeMap<usize, Entry>) -> Result<ScalarField>,
    sink: &mut dyn FnMut(&StageSample) -> Result<()>,
) -> Result<()> {
    let time = bundle.time;
    let n = time.len();
    let dt = time.dt();
    let mut ring: BTreeMap<usize, Entry> = BTreeMap::new();
    let mut next_j = 0;
    let mut process = |j: usize, ring: &BTreeMap<usize, Entry>| -> Result<()> {
        let (start, w) = fd4_weights(j, n, dt);
        let mut dtw = ring[&start].pert.w.scale(w[0]);
        for (k, wk) in w.iter().enumerate().skip(1) {
            dtw = dtw.add(&ring[&(start + k)].pert.w.scale(*wk));
        }
        let theta1 = theta(j, ring)?;
        let e = &ring[&j];
        let v_l = bundle.v_l_field(j);
        let r_l = bundle.r_l_field(j);
        let b = assemble_stage(&AssemblyInput {
            v: &e.prev.v,
            p: &e.prev.p,
            theta: &e.prev.theta,
            r: &e.prev.r,
            v_l: &v_l,
            r_l: &r_l,
            w_o: &e.pert.w_o,
            w_c: &e.pert.w_c,
            w: &e.pert.w,
            pressure: &e.pert.pressure,
            osc: &e.pert.osc,
            dtw: &dtw,
            theta1: &theta1,
        });
        let next = StateSlice { t: e.prev.t, v: b.v1.clone(), p: b.p1.clone(), theta: theta1, r: b.r1.clone() };
        sink(&StageSample { j, t: e.prev.t, prev: &e.prev, next: &next, pert: &e.pert, dtw: &dtw, breakdown: &b, v_l: &v_l, r_l: &r_l })
    };
    prev.sweep(&mut |i, s| {
        let pert = bundle.evaluate(i).map_err(|e| e.context(format!("perturbation at sample {i}")))?;
        let v1 = s.v.add(&pert.w);
        let c1 = velocity_c1(&v1);
        ring.insert(i, Entry { prev: s.clone(), pert, v1, c1 });
        while next_j < n && slice_needs(next_j, n) <= i {
            process(next_j, &ring)?;
            next_j += 1;
            let keep = next_j.saturating_sub(4);
            ring.retain(|&k, _| k >= keep);
        }
        Ok(())
    })?;
    if next_j != n {
        return Err(Error::InvalidInput(format!("stage sweep stopped at sample {next_j} of {n}")));
    }
    Ok(())
}

impl ConstructedState {
    pub fn bundle(&self) -> &PerturbationBundle {
        &self.bundle
    }

    pub fn previous(&self) -> &Arc<dyn StageState> {
        &self.prev
    }

    pub fn theta_field(&self, j: usize) -> ScalarField {
        let (band, c) = &self.theta[j];
        ScalarField::from_spectrum(self.bundle.grid, embed_band(c, *band, self.bundle.grid.n()))
    }

    /// Replay the stage sweep, handing every sample to `f`.
    pub fn replay(&self, f: &mut dyn FnMut(&StageSample) -> Result<()>) -> Result<()> {
        stream_stage(self.prev.as_ref(), &self.bundle, &mut |j, _| Ok(self.theta_field(j)), f)
    }
}

impl StageState for ConstructedState {
    fn q(&self) -> usize {
        self.q
    }
    fn grid(&self) -> Grid {
        self.bundle.grid
    }
    fn time(&self) -> TimeGrid {
        self.bundle.time
    }

    /// Single sample; costs five perturbation evaluations for `∂_t w`.
    fn slice(&self, j: usize) -> Result<StateSlice> {
        let n = self.bundle.time.len();
        if j >= n {
            return Err(Error::InvalidInput(format!("no sample {j}")));
        }
        let (start, w) = fd4_weights(j, n, self.bundle.time.dt());
        let mut dtw: Option<VectorField2> = None;
        for (k, wk) in w.iter().enumerate() {
            let p = self.bundle.evaluate(start + k)?;
            let term = p.w.scale(*wk);
            dtw = Some(match dtw {
                None => term,
                Some(d) => d.add(&term),
            });
        }
        let dtw = dtw.unwrap();
        let pert = self.bundle.evaluate(j)?;
        let prev = self.prev.slice(j)?;
        let v_l = self.bundle.v_l_field(j);
        let r_l = self.bundle.r_l_field(j);
        let theta1 = self.theta_field(j);
        let b = assemble_stage(&AssemblyInput {
            v: &prev.v,
            p: &prev.p,
            theta: &prev.theta,
            r: &prev.r,
            v_l: &v_l,
            r_l: &r_l,
            w_o: &pert.w_o,
            w_c: &pert.w_c,
            w: &pert.w,
            pressure: &pert.pressure,
            osc: &pert.osc,
            dtw: &dtw,
            theta1: &theta1,
        });
        Ok(StateSlice { t: prev.t, v: b.v1, p: b.p1, theta: theta1, r: b.r1 })
    }

    fn sweep(&self, f: &mut dyn FnMut(usize, &StateSlice) -> Result<()>) -> Result<()> {
        self.replay(&mut |s| f(s.j, s.next))
    }
}

/// Resolve the schedule at stage `q` and apply the gate.
pub fn stage_params(schedule: &ParamSchedule, q: usize) -> Result<(StageParams, ParameterReport)> {
    let gate = check_parameter_conditions(schedule, q);
    if schedule.mode == Mode::Strict && !gate.all_hold() {
        return Err(Error::StrictGate(format!("violated at q = {q}: {}", gate.violations().join(", "))));
    }
    let params = StageParams {
        q,
        mode: schedule.mode,
        lambda_q: schedule.lambda_int(q)?,
        lambda_q1: schedule.lambda_int(q + 1)?,
        mu: schedule.mu_int(q)?,
        mu_raw: schedule.ln_mu_raw(q).exp(),
        ell: schedule.ell(q),
        delta_q: schedule.delta(q),
        delta_q1: schedule.delta(q + 1),
        delta_q2: schedule.delta(q + 2),
        rho: Vec::new(),
    };
    Ok((params, gate))
}

/// Run one stage `(v, p, θ, R̊)_q → (v, p, θ, R̊)_{q+1}`. Observers see every
/// sample; `progress` receives phase names.
pub fn run_stage(
    prev: Arc<dyn StageState>,
    schedule: &ParamSchedule,
    e: &EnergyProfile,
    opts: &StageOptions,
    observers: &mut [&mut dyn StageObserver],
    progress: &mut dyn FnMut(&str),
) -> Result<(ConstructedState, StageReport)> {
    let q = prev.q();
    let ctx = |phase: &str| format!("stage {q} -> {}, {phase}", q + 1);
    let (mut params, gate) = stage_params(schedule, q).map_err(|e| e.context(ctx("parameters")))?;
    let grid = prev.grid();
    let time = prev.time();
    if params.lambda_q1 as i64 > grid.dealias_cutoff() {
        return Err(Error::Unresolved(format!(
            "λ_{} = {} exceeds the resolved band {} of N = {}",
            q + 1,
            params.lambda_q1,
            grid.dealias_cutoff(),
            grid.n()
        ))
        .context(ctx("parameters")));
    }
    if time.len() < 5 {
        return Err(Error::InvalidInput("a stage needs at least five time samples".into()));
    }

    progress("energy gap");
    let entry_gap = energy_gap(prev.as_ref(), e, params.delta_q1).map_err(|e| e.context(ctx("energy gap")))?;
    if schedule.mode == Mode::Strict && !entry_gap.admissible() {
        return Err(Error::StrictGate(format!(
            "incoming energy gap {:.3e} exceeds δ/4 = {:.3e}",
            entry_gap.max_normalized,
            params.delta_q1 / 4.0
        )));
    }

    progress("mollify");
    let band = prev.band_hint().unwrap_or(grid.dealias_cutoff()).min(grid.dealias_cutoff());
    let mut vs = Vec::with_capacity(time.len());
    let mut rs = Vec::with_capacity(time.len());
    prev.sweep(&mut |_, s| {
        ScalarField::prime_pair(&s.v.u1, &s.v.u2);
        ScalarField::prime_pair(&s.r.t11, &s.r.t12);
        vs.push([extract_band(s.v.u1.spectrum(), band), extract_band(s.v.u2.spectrum(), band)]);
        rs.push([extract_band(s.r.t11.spectrum(), band), extract_band(s.r.t12.spectrum(), band)]);
        Ok(())
    })
    .map_err(|e| e.context(ctx("mollify")))?;
    let (v_l, r_l) = mollify(&BandSeries2::new(time, band, vs), &BandSeries2::new(time, band, rs), params.ell, grid)
        .map_err(|e| e.context(ctx("mollify")))?;

    progress("partition");
    let partition = build_partition(params.mu)?;
    let mut rho = Vec::with_capacity(params.mu + 1);
    for l in partition.charts() {
        let t = l as f64 / params.mu as f64;
        rho.push(compute_rho(l, e.eval(t), prev.energy_at(t)?, params.delta_q2).map_err(|e| e.context(ctx("partition")))?);
    }
    params.rho = rho.clone();

    progress("flow maps");
    let bundle = PerturbationBundle::build(grid, time, params.lambda_q1, partition, v_l, r_l, &rho)
        .map_err(|e| e.context(ctx("flow maps")))?;

    progress("perturbation and stress");
    let shapes = BoundShapes {
        delta_q: params.delta_q,
        delta_q1: params.delta_q1,
        lambda_q: params.lambda_q as f64,
        lambda_q1: params.lambda_q1 as f64,
        mu: params.mu as f64,
        ell: params.ell,
        eps: schedule.eps,
    };
    let n = time.len();
    let theta0 = prev.slice(0)?.theta;
    let theta0_sup = theta0.sup_norm();
    let mut solver = TransportDiffusion::new(&theta0, 0.0, opts.transport);
    let mut theta_store: Vec<(i64, Vec<Complex64>)> = Vec::with_capacity(n);
    let mut theta_band = 0;
    let mut stress = StressReport::new(shapes);
    let mut max_div: f64 = 0.0;
    let mut osc: f64 = 0.0;
    let mut inc_sup: f64 = 0.0;
    let mut inc_c1: f64 = 0.0;
    let mut dtw_sup: f64 = 0.0;
    let mut theta_mean: f64 = 0.0;
    let mut diag = DiagnosticsSummary { amplitude_min: f64::INFINITY, min_jacobian: f64::INFINITY, ..Default::default() };
    let mut energies = Vec::with_capacity(n);
    let mut half_l2 = Vec::with_capacity(n);
    let mut diss = Vec::with_capacity(n);
    let mut inc_l2 = Vec::with_capacity(n);
    let mut inc_diss = Vec::with_capacity(n);
    let mut holder = Vec::new();
    let tol = opts.theta_tolerance;
    let cutoff = grid.dealias_cutoff();

    let mut theta_fn = |j: usize, ring: &BTreeMap<usize, Entry>| -> Result<ScalarField> {
        if j > 0 {
            let nodes: Vec<VelocityNode> = interval_stencil(j - 1, n)
                .into_iter()
                .map(|i| VelocityNode { t: time.time(i), v: &ring[&i].v1, c1: ring[&i].c1 })
                .collect();
            solver.advance(time.time(j), &nodes, &Forcing::None)?;
        }
        let s = solver.spectrum();
        let peak = s.raw().iter().map(|z| z.norm()).fold(0.0, f64::max);
        let b = s.active_band(tol * peak).min(cutoff).max(1);
        theta_band = theta_band.max(b);
        let c = extract_band(s, b);
        let field = ScalarField::from_spectrum(grid, embed_band(&c, b, grid.n()));
        theta_store.push((b, c));
        Ok(field)
    };
    let mut sink = |s: &StageSample| -> Result<()> {
        let b = s.breakdown;
        stress.record(b, s.j % opts.c1_stride.max(1) == 0 || s.j + 1 == n);
        max_div = max_div.max(divergence(&b.v1).sup_norm());
        osc = osc.max(oscillation_crosscheck(&s.pert.w_o, s.r_l, &s.pert.pressure, &s.pert.osc));
        inc_sup = inc_sup.max(s.pert.w.sup_norm());
        if s.j % opts.c1_stride.max(1) == 0 || s.j + 1 == n {
            inc_c1 = inc_c1.max(s.pert.w.cm_norm(1)?);
        }
        dtw_sup = dtw_sup.max(s.dtw.sup_norm());
        theta_mean = theta_mean.max(s.next.theta.mean().abs());
        let d = &s.pert.diag;
        diag.cancellation = diag.cancellation.max(d.cancellation);
        diag.unimodularity = diag.unimodularity.max(d.unimodularity);
        diag.amplitude_sup = diag.amplitude_sup.max(d.amplitude_sup);
        diag.amplitude_min = diag.amplitude_min.min(d.amplitude_min);
        diag.l_sup = diag.l_sup.max(d.l_sup);
        diag.admissibility = diag.admissibility.max(d.admissibility);
        diag.min_jacobian = diag.min_jacobian.min(d.min_jacobian);
        energies.push(b.v1.energy());
        half_l2.push(0.5 * s.next.theta.l2_norm().powi(2));
        diss.push(dissipation(s.next.theta.spectrum()));
        let dtheta = s.next.theta.sub(&s.prev.theta);
        inc_l2.push(dtheta.l2_norm().powi(2));
        inc_diss.push(dissipation(dtheta.spectrum()));
        if s.j % opts.holder_stride.max(1) == 0 || s.j + 1 == n {
            for &alpha in &opts.holder_alphas {
                holder.push(HolderSample {
                    t: s.t,
                    alpha,
                    v_next: holder_seminorm_vector(&b.v1, 0, alpha)?,
                    increment: holder_seminorm_vector(&s.pert.w, 0, alpha)?,
                });
            }
        }
        for o in observers.iter_mut() {
            o.observe(s)?;
        }
        progress(&format!("sample {}/{}", s.j + 1, n));
        Ok(())
    };
    stream_stage(prev.as_ref(), &bundle, &mut theta_fn, &mut sink).map_err(|e| e.context(ctx("perturbation and stress")))?;
    drop(sink);
    drop(theta_fn);
    for o in observers.iter_mut() {
        o.finish()?;
    }

    progress("reports");
    let times = time.times();
    let dt = time.dt();
    let cum = cumulative_simpson(&diss, dt);
    let theta_ledger_drift = half_l2.iter().zip(&cum).map(|(h, c)| (h + c - half_l2[0]).abs()).fold(0.0, f64::max);
    let inc_cum = cumulative_simpson(&inc_diss, dt);
    let theta_increment: Vec<(f64, f64)> = times.iter().zip(inc_l2.iter().zip(&inc_cum)).map(|(&t, (a, c))| (t, a + c)).collect();
    let exit_gap = EnergyGap::from_energies(&times, &energies, e, params.delta_q2);
    let exit_gap_alt = EnergyGap::from_energies(&times, &energies, e, params.delta_q1);
    let d1 = params.delta_q1.sqrt();
    let gap_budget = e.max_abs_deriv() / params.mu as f64
        + d1 * params.delta_q.sqrt() * params.lambda_q as f64 / params.mu as f64
        + d1 / (params.ell * params.lambda_q1 as f64);
    let report = StageReport {
        params,
        gate,
        entry_gap,
        exit_gap,
        exit_gap_alt,
        gap_budget,
        stress,
        max_div,
        osc_crosscheck: osc,
        increment_sup: inc_sup,
        increment_c1: inc_c1,
        dtw_sup,
        theta_ledger_drift,
        theta_mean,
        theta_increment,
        theta_increment_bound: 4.0 * theta0_sup * theta0_sup * inc_sup * inc_sup,
        theta0_sup,
        theta_band,
        diagnostics: diag,
        holder,
    };
    let state = ConstructedState { q: q + 1, prev, bundle: Arc::new(bundle), theta: theta_store };
    Ok((state, report))
}
