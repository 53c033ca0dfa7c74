//! Independent checks of a constructed sequence: equation residuals, the
//! inductive estimates, decay-law probes and Hölder increments.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::blocks::{anti_divergence, stationary_phase_probe, DecayTable};
use crate::error::{Error, Result};
use crate::evolution::{dissipation, Forcing, TimeGrid, TransportDiffusion, TransportOptions, VelocityNode};
use crate::fields::{
    divergence, divergence_symmetric, divergence_tensor, gradient, holder_seminorm, Grid,
    ScalarField, VectorField2,
};
use crate::pipeline::{StageObserver, StageParams, StageReport, StageSample};
use crate::scheme::{EnergyGap, EnergyProfile, ParamSchedule, StageState, StateSlice};
use crate::util::{cumulative_simpson, fd4_weights};

/// Sup and space-time `L²` norms of the three equation residuals.
#[derive(Clone, Debug, Default)]
pub struct ResidualReport {
    pub momentum_sup: f64,
    pub momentum_l2: f64,
    pub divergence_sup: f64,
    pub divergence_l2: f64,
    pub temperature_sup: f64,
    pub temperature_l2: f64,
    /// `(t, momentum, divergence, temperature)` sup norms per sample.
    pub rows: Vec<(f64, f64, f64, f64)>,
}

impl ResidualReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,momentum,divergence,temperature\n");
        for (t, m, d, th) in &self.rows {
            s.push_str(&format!("{t:.9},{m:.6e},{d:.6e},{th:.6e}\n"));
        }
        s
    }
}

/// Streaming residual of the Boussinesq–Reynolds system: fourth-order time
/// differences, spectral space derivatives, and nothing shared with the
/// stress assembly beyond the field values.
pub struct ResidualMonitor {
    time: TimeGrid,
    ring: BTreeMap<usize, StateSlice>,
    next: usize,
    sq: [f64; 3],
    report: ResidualReport,
}

impl ResidualMonitor {
    pub fn new(time: TimeGrid) -> ResidualMonitor {
        ResidualMonitor { time, ring: BTreeMap::new(), next: 0, sq: [0.0; 3], report: ResidualReport::default() }
    }

    pub fn push(&mut self, j: usize, s: &StateSlice) -> Result<()> {
        let n = self.time.len();
        if n < 5 {
            return Err(Error::InvalidInput("residuals need at least five time samples".into()));
        }
        self.ring.insert(j, s.clone());
        while self.next < n {
            let (start, w) = fd4_weights(self.next, n, self.time.dt());
            if start + 4 > j {
                break;
            }
            self.residual_at(self.next, start, &w);
            self.next += 1;
            let keep = self.next.saturating_sub(4);
            self.ring.retain(|&k, _| k >= keep);
        }
        Ok(())
    }

    fn residual_at(&mut self, j: usize, start: usize, w: &[f64; 5]) {
        let s = &self.ring[&j];
        let grid = s.v.grid();
        let mut dtv = VectorField2::zeros(grid);
        let mut dtheta = ScalarField::zeros(grid);
        for (k, wk) in w.iter().enumerate() {
            let r = &self.ring[&(start + k)];
            dtv = dtv.add(&r.v.scale(*wk));
            dtheta = dtheta.add(&r.theta.scale(*wk));
        }
        let (a, b) = (s.v.u1.values(), s.v.u2.values());
        let s11: Vec<f64> = a.iter().map(|x| x * x).collect();
        let s12: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
        let s22: Vec<f64> = b.iter().map(|y| y * y).collect();
        let conv = divergence_symmetric(&s11, &s12, &s22, grid);
        let gp = gradient(&s.p);
        let div_r = divergence_tensor(&s.r);
        let buoy = VectorField2::new(ScalarField::zeros(grid), s.theta.clone());
        let mom = dtv.add(&conv).add(&gp).sub(&buoy).sub(&div_r);
        let div = divergence(&s.v);
        let gt = gradient(&s.theta);
        let lap = ScalarField::from_spectrum(grid, {
            let sp = s.theta.spectrum();
            let mut l = sp.derivative(2, 0);
            l.axpy(1.0, &sp.derivative(0, 2));
            l
        });
        let adv = s.v.u1.mul(&gt.u1).add(&s.v.u2.mul(&gt.u2));
        let temp = dtheta.add(&adv).sub(&lap);
        let m = mom.sup_norm();
        let d = div.sup_norm();
        let th = temp.sup_norm();
        let wt = if j == 0 || j + 1 == self.time.len() { 0.5 } else { 1.0 } * self.time.dt();
        self.sq[0] += wt * mom.l2_norm().powi(2);
        self.sq[1] += wt * div.l2_norm().powi(2);
        self.sq[2] += wt * temp.l2_norm().powi(2);
        let r = &mut self.report;
        r.momentum_sup = r.momentum_sup.max(m);
        r.divergence_sup = r.divergence_sup.max(d);
        r.temperature_sup = r.temperature_sup.max(th);
        r.rows.push((s.t, m, d, th));
    }

    pub fn report(&self) -> Result<ResidualReport> {
        if self.next != self.time.len() {
            return Err(Error::InvalidInput(format!("residual sweep incomplete ({} of {})", self.next, self.time.len())));
        }
        let mut r = self.report.clone();
        r.momentum_l2 = self.sq[0].sqrt();
        r.divergence_l2 = self.sq[1].sqrt();
        r.temperature_l2 = self.sq[2].sqrt();
        Ok(r)
    }
}

impl StageObserver for ResidualMonitor {
    fn observe(&mut self, s: &StageSample) -> Result<()> {
        self.push(s.j, s.next)
    }
}

pub fn residual_boussinesq_reynolds(state: &dyn StageState) -> Result<ResidualReport> {
    let mut m = ResidualMonitor::new(state.time());
    state.sweep(&mut |j, s| m.push(j, s))?;
    m.report()
}

/// Maxima over a stage of the quantities entering the inductive estimates.
#[derive(Clone, Debug, Default)]
pub struct IncrementMeasurements {
    pub stress_sup: f64,
    pub stress_c1: f64,
    pub velocity_sup: f64,
    pub velocity_c1: f64,
    pub pressure_sup: f64,
    pub pressure_c1: f64,
    pub velocity_dt: f64,
    pub pressure_dt: f64,
    pub theta_identity_drift: f64,
    pub theta_increment: f64,
    pub theta0_sup: f64,
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
}

/// Streaming collector for [`IncrementMeasurements`]; `C¹` norms are taken
/// on every `c1_stride`-th sample.
pub struct IncrementMonitor {
    time: TimeGrid,
    c1_stride: usize,
    ring: BTreeMap<usize, (VectorField2, ScalarField)>,
    next: usize,
    half_l2: Vec<f64>,
    diss: Vec<f64>,
    inc_l2: Vec<f64>,
    inc_diss: Vec<f64>,
    m: IncrementMeasurements,
}

impl IncrementMonitor {
    pub fn new(time: TimeGrid, c1_stride: usize) -> IncrementMonitor {
        IncrementMonitor {
            time,
            c1_stride: c1_stride.max(1),
            ring: BTreeMap::new(),
            next: 0,
            half_l2: Vec::new(),
            diss: Vec::new(),
            inc_l2: Vec::new(),
            inc_diss: Vec::new(),
            m: IncrementMeasurements::default(),
        }
    }

    pub fn push(&mut self, j: usize, prev: &StateSlice, next: &StateSlice) -> Result<()> {
        let n = self.time.len();
        if n < 5 {
            return Err(Error::InvalidInput("increments need at least five time samples".into()));
        }
        let dv = next.v.sub(&prev.v);
        let dp = next.p.sub(&prev.p);
        let dth = next.theta.sub(&prev.theta);
        let m = &mut self.m;
        if j == 0 {
            m.theta0_sup = prev.theta.sup_norm();
        }
        m.stress_sup = m.stress_sup.max(next.r.sup_norm());
        m.velocity_sup = m.velocity_sup.max(dv.sup_norm());
        m.pressure_sup = m.pressure_sup.max(dp.sup_norm());
        if j % self.c1_stride == 0 || j + 1 == n {
            m.stress_c1 = m.stress_c1.max(next.r.c1_norm());
            m.velocity_c1 = m.velocity_c1.max(dv.cm_norm(1)?);
            m.pressure_c1 = m.pressure_c1.max(dp.cm_norm(1)?);
        }
        m.times.push(next.t);
        m.energies.push(next.v.energy());
        self.half_l2.push(0.5 * next.theta.l2_norm().powi(2));
        self.diss.push(dissipation(next.theta.spectrum()));
        self.inc_l2.push(dth.l2_norm().powi(2));
        self.inc_diss.push(dissipation(dth.spectrum()));
        self.ring.insert(j, (dv, dp));
        while self.next < n {
            let (start, w) = fd4_weights(self.next, n, self.time.dt());
            if start + 4 > j {
                break;
            }
            let grid = self.ring[&start].1.grid();
            let mut a = VectorField2::zeros(grid);
            let mut b = ScalarField::zeros(grid);
            for (k, wk) in w.iter().enumerate() {
                let (dv, dp) = &self.ring[&(start + k)];
                a = a.add(&dv.scale(*wk));
                b = b.add(&dp.scale(*wk));
            }
            self.m.velocity_dt = self.m.velocity_dt.max(a.sup_norm());
            self.m.pressure_dt = self.m.pressure_dt.max(b.sup_norm());
            self.next += 1;
            let keep = self.next.saturating_sub(4);
            self.ring.retain(|&k, _| k >= keep);
        }
        Ok(())
    }

    pub fn measurements(&self) -> Result<IncrementMeasurements> {
        if self.next != self.time.len() {
            return Err(Error::InvalidInput("increment sweep incomplete".into()));
        }
        let dt = self.time.dt();
        let mut m = self.m.clone();
        let cum = cumulative_simpson(&self.diss, dt);
        m.theta_identity_drift =
            self.half_l2.iter().zip(&cum).map(|(h, c)| (h + c - self.half_l2[0]).abs()).fold(0.0, f64::max);
        let inc = cumulative_simpson(&self.inc_diss, dt);
        m.theta_increment = self.inc_l2.iter().zip(&inc).map(|(a, c)| a + c).fold(0.0, f64::max);
        Ok(m)
    }
}

impl StageObserver for IncrementMonitor {
    fn observe(&mut self, s: &StageSample) -> Result<()> {
        self.push(s.j, s.prev, s.next)
    }
}

/// Measure increments between two states on the same grids, sweeping `next`.
pub fn measure_increments(prev: &dyn StageState, next: &dyn StageState, c1_stride: usize) -> Result<IncrementMeasurements> {
    if prev.time() != next.time() || prev.grid() != next.grid() {
        return Err(Error::InvalidInput("states live on different grids".into()));
    }
    let mut mon = IncrementMonitor::new(next.time(), c1_stride);
    next.sweep(&mut |j, s| mon.push(j, &prev.slice(j)?, s))?;
    mon.measurements()
}

/// Constants of the inductive estimates, pinned from a calibration run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateConstants {
    pub eta: f64,
    pub m: f64,
    pub c: f64,
    /// Allowed drift of the temperature energy identity.
    pub identity_tolerance: f64,
}

impl Default for EstimateConstants {
    fn default() -> EstimateConstants {
        EstimateConstants { eta: 0.1, m: 4.0, c: 4.0, identity_tolerance: 1e-7 }
    }
}

#[derive(Clone, Debug)]
pub struct EstimateRow {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
}

impl EstimateRow {
    pub fn ratio(&self) -> f64 {
        if self.rhs > 0.0 {
            self.lhs / self.rhs
        } else if self.lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

#[derive(Clone, Debug)]
pub struct EstimateTable {
    pub q: usize,
    pub rows: Vec<EstimateRow>,
}

impl EstimateTable {
    pub fn row(&self, name: &str) -> Option<&EstimateRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("q,estimate,measured,bound,ratio,holds\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{:.6e},{:.6e},{:.6e},{}\n", self.q, r.name, r.lhs, r.rhs, r.ratio(), r.holds()));
        }
        s
    }
}

/// One row per inductive estimate for the step `q → q+1`.
pub fn inductive_estimate_report(
    m: &IncrementMeasurements,
    params: &StageParams,
    e: &EnergyProfile,
    k: &EstimateConstants,
) -> EstimateTable {
    let d1 = params.delta_q1;
    let d2 = params.delta_q2;
    let l1 = params.lambda_q1 as f64;
    let gap = EnergyGap::from_energies(&m.times, &m.energies, e, d2);
    let row = |name, lhs, rhs| EstimateRow { name, lhs, rhs };
    EstimateTable {
        q: params.q,
        rows: vec![
            row("stress_sup", m.stress_sup, k.eta * d2),
            row("stress_c1", m.stress_c1, k.eta * d2 * l1),
            row("velocity_increment_sup", m.velocity_sup, k.m * d1.sqrt()),
            row("velocity_increment_c1", m.velocity_c1, k.c * d1.sqrt() * l1),
            row("pressure_increment_sup", m.pressure_sup, k.m * k.m * d1),
            row("pressure_increment_c1", m.pressure_c1, k.m * k.m * d1 * l1),
            row("temperature_energy_identity", m.theta_identity_drift, k.identity_tolerance),
            row("temperature_increment", m.theta_increment, 4.0 * k.m * k.m * m.theta0_sup.powi(2) * d1),
            row("energy_gap", gap.max_normalized, d2 / 4.0),
            row("velocity_increment_dt", m.velocity_dt, k.c * d1.sqrt() * l1),
            row("pressure_increment_dt", m.pressure_dt, k.c * d1 * l1),
        ],
    }
}

/// One row of the Hölder table.
#[derive(Clone, Debug)]
pub struct HolderRow {
    pub q: usize,
    pub alpha: f64,
    /// `max_t [v_{q+1}]_α` (`α = 0`: sup norm).
    pub state: f64,
    /// `max_t [v_{q+1} − v_q]_α`.
    pub increment: f64,
    /// Interpolation `‖w‖₀^{1−α}‖w‖₁^α` from the measured norms.
    pub interpolated: f64,
    /// `2M a^{(−1/2 + αbc)b^{q+1}}`.
    pub predicted: f64,
}

/// Per-stage Hölder increments next to their interpolation bounds. No
/// convergence is asserted; an empty slice gives an empty table.
pub fn holder_report(reports: &[&StageReport], schedule: &ParamSchedule, m: f64) -> Vec<HolderRow> {
    let mut rows = Vec::new();
    for r in reports {
        let q = r.params.q;
        let mut alphas: Vec<f64> = r.holder.iter().map(|h| h.alpha).collect();
        alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        alphas.dedup();
        for alpha in alphas {
            let (state, increment) = r
                .holder
                .iter()
                .filter(|h| h.alpha == alpha)
                .fold((0.0f64, 0.0f64), |acc, h| (acc.0.max(h.v_next), acc.1.max(h.increment)));
            let ex = (-0.5 + alpha * schedule.b * schedule.c) * schedule.b.powi(q as i32 + 1);
            rows.push(HolderRow {
                q,
                alpha,
                state,
                increment,
                interpolated: r.increment_sup.powf(1.0 - alpha) * r.increment_c1.powf(alpha),
                predicted: 2.0 * m * schedule.a.powf(ex),
            });
        }
    }
    rows
}

pub fn holder_csv(rows: &[HolderRow]) -> String {
    let mut s = String::from("q,alpha,state_seminorm,increment_seminorm,interpolated,predicted\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{:.6e},{:.6e},{:.6e},{:.6e}\n",
            r.q, r.alpha, r.state, r.increment, r.interpolated, r.predicted
        ));
    }
    s
}

/// `‖R(a cos(λx₁) e₁)‖_α`-type norms (sup plus `α`-seminorm) per `λ`.
pub fn antidiv_decay_probe(alpha: f64, lambdas: &[f64], n: usize) -> Result<DecayTable> {
    let grid = Grid::new(n)?;
    let amp = ScalarField::from_fn(grid, |x, y| (0.5 * x.sin() + 0.3 * y.cos()).exp());
    let mut rows = Vec::new();
    for &lam in lambdas {
        if lam.fract() != 0.0 || lam as i64 + 8 > grid.dealias_cutoff() {
            return Err(Error::Unresolved(format!("λ = {lam} not resolvable at N = {n}")));
        }
        let f = amp.zip_map(&ScalarField::from_fn(grid, |x, _| (lam * x).cos()), |a, c| a * c);
        let r = anti_divergence(&VectorField2::new(f, ScalarField::zeros(grid)));
        let mut norm = r.sup_norm();
        if alpha > 0.0 {
            norm += holder_seminorm(&r.t11, 0, alpha)?.max(holder_seminorm(&r.t12, 0, alpha)?);
        }
        rows.push((lam, norm));
    }
    Ok(DecayTable::from_rows(rows))
}

/// `‖θ‖_{L∞L²}` and `‖∇θ‖_{L∞L²}` for `∂_tθ + v·∇θ − Δθ = a cos(λk·x)`, `θ(0) = 0`.
#[derive(Clone, Debug)]
pub struct ForcedHeatProbe {
    pub theta: DecayTable,
    pub gradient: DecayTable,
}

pub fn forced_heat_probe(lambdas: &[f64], n: usize, samples: usize) -> Result<ForcedHeatProbe> {
    let grid = Grid::new(n)?;
    let k = [0.6, 0.8];
    let v = VectorField2::from_fn(grid, |x, y| [0.5 * y.sin(), 0.5 * x.sin()]);
    let amp = ScalarField::from_fn(grid, |x, y| 1.0 + 0.5 * (x + y).sin());
    let time = TimeGrid::new(samples)?;
    let node = VelocityNode::new(0.0, &v);
    let mut th_rows = Vec::new();
    let mut gr_rows = Vec::new();
    for &lam in lambdas {
        let m = [lam * k[0], lam * k[1]];
        if m.iter().any(|c| c.fract().abs() > 1e-12) {
            return Err(Error::InvalidInput(format!("λk must be integer, got {m:?}")));
        }
        let f = amp.zip_map(&ScalarField::from_fn(grid, |x, y| (m[0] * x + m[1] * y).cos()), |a, c| a * c);
        let ff = |_t: f64| f.clone();
        let forcing = Forcing::Function(&ff);
        let mut solver = TransportDiffusion::new(&ScalarField::zeros(grid), 0.0, TransportOptions::default());
        let (mut th, mut gr): (f64, f64) = (0.0, 0.0);
        for j in 1..time.len() {
            solver.advance(time.time(j), std::slice::from_ref(&node), &forcing)?;
            let s = solver.spectrum();
            th = th.max(solver.theta().l2_norm());
            gr = gr.max(dissipation(s).sqrt());
        }
        th_rows.push((lam, th));
        gr_rows.push((lam, gr));
    }
    Ok(ForcedHeatProbe { theta: DecayTable::from_rows(th_rows), gradient: DecayTable::from_rows(gr_rows) })
}

/// `|∫ a e^{iλk·x}|` for the `C²` amplitude `a = g(3x₁ + 4x₂)`,
/// `g(s) = |sin s|³(1 + cos(s)/2)`, which has content along `k = (3, 4)/5`.
pub fn stationary_phase_decay_probe(lambdas: &[f64], n: usize) -> Result<DecayTable> {
    let grid = Grid::new(n)?;
    let a = ScalarField::from_fn(grid, |x, y| {
        let s = 3.0 * x + 4.0 * y;
        s.sin().abs().powi(3) * (1.0 + 0.5 * s.cos())
    });
    stationary_phase_probe(&a, [0.6, 0.8], lambdas)
}

/// Slopes of the three decay probes with their pass windows.
#[derive(Clone, Debug)]
pub struct ProbeSuite {
    pub antidiv: Vec<(f64, DecayTable)>,
    pub forced_heat: ForcedHeatProbe,
    pub stationary_phase: DecayTable,
}

impl ProbeSuite {
    pub fn antidiv_pass(&self) -> bool {
        self.antidiv.iter().all(|(a, t)| t.slope <= a - 1.0 + 0.15)
    }

    /// Window `−1 ± 0.15` on the `L∞L²` slope.
    pub fn forced_heat_pass(&self) -> bool {
        (self.forced_heat.theta.slope + 1.0).abs() <= 0.15
    }

    /// The upper bound `‖θ‖_{L∞L²} ≤ C/λ` itself: slope at most `−1 + 0.15`.
    pub fn forced_heat_bound_pass(&self) -> bool {
        self.forced_heat.theta.slope <= -1.0 + 0.15
    }

    pub fn stationary_phase_pass(&self) -> bool {
        self.stationary_phase.slope <= -2.0 + 0.2
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("probe,lambda,measured,slope\n");
        for (a, t) in &self.antidiv {
            for (l, m) in &t.rows {
                s.push_str(&format!("antidiv_alpha_{a},{l},{m:.9e},{:.6}\n", t.slope));
            }
        }
        for (name, t) in [
            ("forced_heat_theta", &self.forced_heat.theta),
            ("forced_heat_gradient", &self.forced_heat.gradient),
            ("stationary_phase", &self.stationary_phase),
        ] {
            for (l, m) in &t.rows {
                s.push_str(&format!("{name},{l},{m:.9e},{:.6}\n", t.slope));
            }
        }
        s
    }
}

pub const ANTIDIV_LAMBDAS: [f64; 4] = [8.0, 16.0, 32.0, 64.0];
pub const HEAT_LAMBDAS: [f64; 4] = [10.0, 20.0, 40.0, 80.0];
pub const PHASE_LAMBDAS: [f64; 4] = [10.0, 20.0, 40.0, 80.0];

pub fn antidiv_probe_default() -> Result<Vec<(f64, DecayTable)>> {
    [0.0, 0.3].iter().map(|&a| Ok((a, antidiv_decay_probe(a, &ANTIDIV_LAMBDAS, 256)?))).collect()
}

pub fn forced_heat_probe_default() -> Result<ForcedHeatProbe> {
    forced_heat_probe(&HEAT_LAMBDAS, 256, 65)
}

pub fn stationary_phase_probe_default() -> Result<DecayTable> {
    stationary_phase_decay_probe(&PHASE_LAMBDAS, 256)
}

pub fn scaling_probe_suite() -> Result<ProbeSuite> {
    Ok(ProbeSuite {
        antidiv: antidiv_probe_default()?,
        forced_heat: forced_heat_probe_default()?,
        stationary_phase: stationary_phase_probe_default()?,
    })
}

/// `(4π²)⁻¹∫` of a field; used for normalized energy comparisons.
pub fn average(f: &ScalarField) -> f64 {
    f.integral() / (4.0 * PI * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::{initial_tuple, ThetaDatum};

    #[test]
    fn manufactured_heat_solution() {
        // v = 0, θ = e^{−t} sin x₂, p with ∂₂p = θ, R̊ = 0
        let grid = Grid::new(32).unwrap();
        let time = TimeGrid::new(129).unwrap();
        let slices: Vec<StateSlice> = time
            .times()
            .into_iter()
            .map(|t| StateSlice {
                t,
                v: VectorField2::zeros(grid),
                p: ScalarField::from_fn(grid, |_, y| (-t).exp() * (1.0 - y.cos())),
                theta: ScalarField::from_fn(grid, |_, y| (-t).exp() * y.sin()),
                r: crate::fields::SymTraceFreeTensor2Field::zeros(grid),
            })
            .collect();
        let st = crate::scheme::StoredState::new(0, time, slices).unwrap();
        let r = residual_boussinesq_reynolds(&st).unwrap();
        assert!(r.momentum_sup <= 1e-10, "{}", r.momentum_sup);
        assert!(r.temperature_sup <= 1e-8, "{}", r.temperature_sup);
        assert_eq!(r.rows.len(), 129);
    }

    #[test]
    fn initial_tuple_residual() {
        let e = EnergyProfile::new(vec![10.0, 0.02]).unwrap();
        let grid = Grid::new(80).unwrap();
        let time = TimeGrid::new(257).unwrap();
        let it = initial_tuple(&e, ThetaDatum { sin: 1.0, cos: 0.5 }, 5, 0.1, grid, time).unwrap();
        let r = residual_boussinesq_reynolds(&it).unwrap();
        assert!(r.momentum_sup <= 1e-9, "{}", r.momentum_sup);
        assert!(r.divergence_sup <= 1e-12);
    }

    #[test]
    fn identical_states_have_zero_increments() {
        let e = EnergyProfile::new(vec![10.0, 0.02]).unwrap();
        let grid = Grid::new(32).unwrap();
        let time = TimeGrid::new(9).unwrap();
        let it = initial_tuple(&e, ThetaDatum { sin: 1.0, cos: 0.0 }, 5, 0.1, grid, time).unwrap();
        let m = measure_increments(&it, &it, 1).unwrap();
        assert_eq!(m.velocity_sup, 0.0);
        assert_eq!(m.pressure_sup, 0.0);
        assert_eq!(m.velocity_dt, 0.0);
        assert_eq!(m.theta_increment, 0.0);
    }

    #[test]
    fn empty_holder_table() {
        let s = ParamSchedule::new(4.0, 0.4, crate::scheme::Mode::Toy).unwrap();
        assert!(holder_report(&[], &s, 1.0).is_empty());
    }

    #[test]
    fn antidiv_probe_slope_at_zero() {
        let t = antidiv_decay_probe(0.0, &[8.0, 16.0, 32.0], 128).unwrap();
        assert!((t.slope + 1.0).abs() < 0.1, "{}", t.slope);
    }

    #[test]
    fn stationary_phase_probe_decays() {
        let t = stationary_phase_probe_default().unwrap();
        assert!(t.rows.iter().all(|r| r.1 > 1e-12), "{:?}", t.rows);
        assert!(t.slope <= -1.8, "slope {}", t.slope);
    }
}
