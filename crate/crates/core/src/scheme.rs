//! Parameter schedule, its inequality gate, the energy profile, stage
//! states and the explicit initial tuple.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::evolution::TimeGrid;
use crate::fields::{Grid, ScalarField, SymTraceFreeTensor2Field, VectorField2};
use crate::util::lagrange_weights;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Small parameters; violated inequalities are reported, not enforced.
    Toy,
    /// Every inequality is enforced before a stage runs.
    Strict,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        match s.trim() {
            "toy" => Ok(Mode::Toy),
            "strict" => Ok(Mode::Strict),
            other => Err(Error::Config { key: "mode".into(), message: format!("expected toy or strict, got {other:?}") }),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Toy => "toy",
            Mode::Strict => "strict",
        })
    }
}

/// `δ_q = a^{−b^q}`, frequencies `λ_q`, and the per-stage `μ`, `ℓ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSchedule {
    pub a: f64,
    pub gamma: f64,
    pub b: f64,
    pub c: f64,
    pub beta: f64,
    /// Loss exponent in the stress bound shapes.
    pub eps: f64,
    pub eta: f64,
    pub mode: Mode,
    /// Toy mode: `λ₀` and the ratio `λ_{q+1}/λ_q` before rounding to a multiple of 5.
    pub lambda0: usize,
    pub lambda_ratio: f64,
}

impl ParamSchedule {
    pub fn new(a: f64, gamma: f64, mode: Mode) -> Result<ParamSchedule> {
        if !(a > 1.0) || !a.is_finite() {
            return Err(Error::Config { key: "a".into(), message: format!("must exceed 1, got {a}") });
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Config { key: "gamma".into(), message: format!("must lie in (0, 1), got {gamma}") });
        }
        Ok(ParamSchedule {
            a,
            gamma,
            b: (6.0 + gamma) / 4.0,
            c: 4.0 * (5.0 + gamma) / (6.0 + gamma),
            beta: 0.125,
            eps: 0.1,
            eta: 0.1,
            mode,
            lambda0: 5,
            lambda_ratio: 10.0,
        })
    }

    pub fn with_toy_frequencies(mut self, lambda0: usize, ratio: f64) -> Result<ParamSchedule> {
        if lambda0 == 0 || lambda0 % 5 != 0 {
            return Err(Error::Config { key: "lambda0".into(), message: format!("must be a positive multiple of 5, got {lambda0}") });
        }
        if !(ratio > 1.0) {
            return Err(Error::Config { key: "lambda_ratio".into(), message: format!("must exceed 1, got {ratio}") });
        }
        self.lambda0 = lambda0;
        self.lambda_ratio = ratio;
        Ok(self)
    }

    pub fn ln_delta(&self, q: usize) -> f64 {
        -self.b.powi(q as i32) * self.a.ln()
    }

    pub fn delta(&self, q: usize) -> f64 {
        self.ln_delta(q).exp()
    }

    /// `ln λ_q`.
    pub fn ln_lambda(&self, q: usize) -> f64 {
        self.lambda(q).ln()
    }

    /// Strict: smallest multiple of 5 at or above `a^{cb^{q+1}}` (as a real
    /// once beyond exact integer range). Toy: `λ₀` grown by the ratio and
    /// rounded to a multiple of 5.
    pub fn lambda(&self, q: usize) -> f64 {
        match self.mode {
            Mode::Strict => {
                let x = self.c * self.b.powi(q as i32 + 1) * self.a.ln();
                if x < 36.0 {
                    5.0 * (x.exp() / 5.0).ceil()
                } else {
                    x.exp()
                }
            }
            Mode::Toy => {
                let mut l = self.lambda0 as f64;
                for _ in 0..q {
                    l = (5.0 * (self.lambda_ratio * l / 5.0).round()).max(l + 5.0);
                }
                l
            }
        }
    }

    pub fn lambda_int(&self, q: usize) -> Result<usize> {
        let l = self.lambda(q);
        if l > 1e9 {
            return Err(Error::Unresolved(format!("λ_{q} = {l:.3e} is beyond any grid")));
        }
        Ok(l as usize)
    }

    /// `ln(δ_q^{1/4}λ_q^{1/2}λ_{q+1}^{1/2})` before rounding.
    pub fn ln_mu_raw(&self, q: usize) -> f64 {
        0.25 * self.ln_delta(q) + 0.5 * (self.ln_lambda(q) + self.ln_lambda(q + 1))
    }

    /// `μ` rounded to a positive integer when representable.
    pub fn mu(&self, q: usize) -> f64 {
        let raw = self.ln_mu_raw(q).exp();
        if raw < 1e15 {
            raw.round().max(1.0)
        } else {
            raw
        }
    }

    pub fn mu_int(&self, q: usize) -> Result<usize> {
        let m = self.mu(q);
        if m > 1e9 {
            return Err(Error::Unresolved(format!("μ = {m:.3e} is beyond any time grid")));
        }
        Ok(m as usize)
    }

    /// `ℓ = δ_q^{−1/4}λ_q^{−1/2}λ_{q+1}^{−1/2}`.
    pub fn ell(&self, q: usize) -> f64 {
        (-self.ln_mu_raw(q)).exp()
    }
}

/// One inequality of the parameter gate, evaluated in log space.
#[derive(Clone, Debug)]
pub struct ConditionRow {
    pub name: &'static str,
    pub ln_lhs: f64,
    pub ln_rhs: f64,
}

impl ConditionRow {
    pub fn slack(&self) -> f64 {
        self.ln_rhs - self.ln_lhs
    }
    pub fn holds(&self) -> bool {
        self.slack() >= -1e-12
    }
}

#[derive(Clone, Debug)]
pub struct ParameterReport {
    pub q: usize,
    pub rows: Vec<ConditionRow>,
    /// `|ln μ_raw + ln ℓ|`; the two closed forms agree when this vanishes.
    pub consistency: f64,
}

impl ParameterReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(ConditionRow::holds) && self.consistency < 1e-10
    }

    pub fn violations(&self) -> Vec<&'static str> {
        self.rows.iter().filter(|r| !r.holds()).map(|r| r.name).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("q,condition,ln_lhs,ln_rhs,slack,holds\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{:.9e},{:.9e},{:.9e},{}\n", self.q, r.name, r.ln_lhs, r.ln_rhs, r.slack(), r.holds()));
        }
        s
    }
}

fn ln_sum(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Evaluate the standing parameter assumptions, their consequences and the
/// stage-one inequality chain at stage `q`.
pub fn check_parameter_conditions(s: &ParamSchedule, q: usize) -> ParameterReport {
    let ld0 = s.ln_delta(q);
    let ld1 = s.ln_delta(q + 1);
    let ll0 = s.ln_lambda(q);
    let ll1 = s.ln_lambda(q + 1);
    let lmu = s.mu(q).ln();
    let lell = s.ell(q).ln();
    let row = |name, ln_lhs, ln_rhs| ConditionRow { name, ln_lhs, ln_rhs };
    let chain = 0.5 * ll0 + 0.25 * ld0 - 0.5 * ll1;
    let rows = vec![
        row("transport_scale", 0.5 * ld0 + ll0 + lell - 0.5 * ld1, 0.0),
        row("frequency_gap", ln_sum(0.5 * ld0 + ll0 - lmu, -lell - ll1), -s.beta * ll1),
        row("phase_speed", -ll1, 0.5 * ld1 - lmu),
        row("ell_at_most_one", lell, 0.0),
        row("lambda_at_least_one", 0.0, ll1),
        row("mu_lower", -0.5 * ld1 - ll1, -lmu),
        row("mu_upper", -lmu, -0.5 * ld0 - ll0),
        row("ell_lower", -ll1, lell),
        row("ell_upper", lell, -ll0),
        row("chain_unit", chain - 0.5 * ld1, 0.0),
        row("chain_beta", chain, -(2.0f64).ln() - s.beta * ll1),
    ];
    ParameterReport { q, rows, consistency: (s.ln_mu_raw(q) + lell).abs() }
}

/// Smallest `a` above which the gate holds at every stage in `stages`, for
/// the strict schedule with exponent `gamma`. Bisection in `ln a`, then a
/// log-spaced scan upward because rounding `λ` to multiples of 5 makes the
/// gate non-monotone near the threshold.
pub fn a_min(gamma: f64, stages: &[usize]) -> Result<f64> {
    let ok = |a: f64| -> Result<bool> {
        let s = ParamSchedule::new(a, gamma, Mode::Strict)?;
        Ok(stages.iter().all(|&q| check_parameter_conditions(&s, q).all_hold()))
    };
    let mut hi = 1e4f64;
    while !ok(hi)? {
        hi *= hi;
        if hi > 1e300 {
            return Err(Error::InvalidInput("gate never holds".into()));
        }
    }
    let mut lo = 1.0 + 1e-9;
    if ok(lo)? {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = (lo.ln() * hi.ln()).sqrt().exp().max(((lo.ln() + hi.ln()) / 2.0).exp());
        let mid = if mid >= hi || mid <= lo { ((lo.ln() + hi.ln()) / 2.0).exp() } else { mid };
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi / lo - 1.0 < 1e-12 {
            break;
        }
    }
    let top = hi * 1e3;
    let steps = 6000;
    let mut answer = hi;
    for k in 0..=steps {
        let a = (hi.ln() + (top.ln() - hi.ln()) * k as f64 / steps as f64).exp();
        if !ok(a)? {
            answer = (hi.ln() + (top.ln() - hi.ln()) * (k + 1) as f64 / steps as f64).exp();
        }
    }
    Ok(answer)
}

/// `e(t) = Σ_n c_n cos(nπt)`, positive on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyProfile {
    coeffs: Vec<f64>,
    min: f64,
}

impl EnergyProfile {
    pub fn new(coeffs: Vec<f64>) -> Result<EnergyProfile> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config { key: "energy_coeffs".into(), message: "needs at least one finite coefficient".into() });
        }
        let mut p = EnergyProfile { coeffs, min: 0.0 };
        let min = (0..=10_000).map(|i| p.eval(i as f64 / 10_000.0)).fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(Error::Config { key: "energy_coeffs".into(), message: format!("e(t) must stay positive (min {min})") });
        }
        p.min = min;
        Ok(p)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().enumerate().map(|(n, c)| c * (n as f64 * PI * t).cos()).sum()
    }

    pub fn deriv(&self, t: f64) -> f64 {
        self.coeffs.iter().enumerate().map(|(n, c)| -c * n as f64 * PI * (n as f64 * PI * t).sin()).sum()
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max_abs_deriv(&self) -> f64 {
        (0..=10_000).map(|i| self.deriv(i as f64 / 10_000.0).abs()).fold(0.0, f64::max)
    }
}

/// Fields of a stage state at one time sample.
#[derive(Clone, Debug)]
pub struct StateSlice {
    pub t: f64,
    pub v: VectorField2,
    pub p: ScalarField,
    pub theta: ScalarField,
    pub r: SymTraceFreeTensor2Field,
}

/// A solution of the Boussinesq–Reynolds system sampled on a time grid.
pub trait StageState: Send + Sync {
    fn q(&self) -> usize;
    fn grid(&self) -> Grid;
    fn time(&self) -> TimeGrid;
    fn slice(&self, j: usize) -> Result<StateSlice>;

    /// Visit every sample in order.
    fn sweep(&self, f: &mut dyn FnMut(usize, &StateSlice) -> Result<()>) -> Result<()> {
        for j in 0..self.time().len() {
            let s = self.slice(j)?;
            f(j, &s)?;
        }
        Ok(())
    }

    /// `∫|v|²` at any `t`; by default cubic in time through the samples.
    fn energy_at(&self, t: f64) -> Result<f64> {
        let time = self.time();
        let st = time.cubic_stencil(t);
        let ts: Vec<f64> = st.iter().map(|&j| time.time(j)).collect();
        let w = lagrange_weights(&ts, t);
        let mut e = 0.0;
        for (k, &j) in st.iter().enumerate() {
            e += w[k] * self.slice(j)?.v.energy();
        }
        Ok(e)
    }

    /// Largest wavenumber carried by `v` and `R̊`, when known.
    fn band_hint(&self) -> Option<i64> {
        None
    }
}

/// State held in memory, one slice per sample.
#[derive(Clone, Debug)]
pub struct StoredState {
    pub q: usize,
    pub grid: Grid,
    pub time: TimeGrid,
    pub slices: Vec<StateSlice>,
}

impl StoredState {
    pub fn new(q: usize, time: TimeGrid, slices: Vec<StateSlice>) -> Result<StoredState> {
        if slices.len() != time.len() || slices.is_empty() {
            return Err(Error::InvalidInput("one slice per time sample is required".into()));
        }
        let grid = slices[0].v.grid();
        Ok(StoredState { q, grid, time, slices })
    }

    /// Materialise any state.
    pub fn collect(state: &dyn StageState) -> Result<StoredState> {
        let mut slices = Vec::with_capacity(state.time().len());
        state.sweep(&mut |_, s| {
            slices.push(s.clone());
            Ok(())
        })?;
        StoredState::new(state.q(), state.time(), slices)
    }
}

impl StageState for StoredState {
    fn q(&self) -> usize {
        self.q
    }
    fn grid(&self) -> Grid {
        self.grid
    }
    fn time(&self) -> TimeGrid {
        self.time
    }
    fn slice(&self, j: usize) -> Result<StateSlice> {
        self.slices.get(j).cloned().ok_or_else(|| Error::InvalidInput(format!("no sample {j}")))
    }
}

/// Temperature datum `θ⁰ = s·sin x₂ + c·cos x₂`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaDatum {
    pub sin: f64,
    pub cos: f64,
}

impl ThetaDatum {
    pub fn sup_norm(&self) -> f64 {
        self.sin.hypot(self.cos)
    }
}

/// The explicit shear-flow initial tuple, evaluated in closed form.
#[derive(Clone, Debug)]
pub struct InitialTuple {
    pub energy: EnergyProfile,
    pub theta0: ThetaDatum,
    pub lambda0: usize,
    pub delta1: f64,
    grid: Grid,
    time: TimeGrid,
}

/// Build the initial tuple at frequency `λ₀` with energy share `1 − δ₁`.
pub fn initial_tuple(
    e: &EnergyProfile,
    theta0: ThetaDatum,
    lambda0: usize,
    delta1: f64,
    grid: Grid,
    time: TimeGrid,
) -> Result<InitialTuple> {
    if lambda0 == 0 {
        return Err(Error::InvalidInput("λ₀ must be positive".into()));
    }
    if lambda0 as i64 > grid.dealias_cutoff() {
        return Err(Error::Unresolved(format!("λ₀ = {lambda0} exceeds the resolved band of N = {}", grid.n())));
    }
    if !(delta1 > 0.0 && delta1 < 1.0) {
        return Err(Error::InvalidInput(format!("δ₁ must lie in (0, 1), got {delta1}")));
    }
    if !(e.min() > 0.0) {
        return Err(Error::InvalidInput("energy profile must be positive".into()));
    }
    Ok(InitialTuple { energy: e.clone(), theta0, lambda0, delta1, grid, time })
}

impl InitialTuple {
    /// Amplitude `√((1 − δ₁)e(t)/(2π²))` of the shear.
    pub fn amplitude(&self, t: f64) -> f64 {
        ((1.0 - self.delta1) * self.energy.eval(t) / (2.0 * PI * PI)).sqrt()
    }

    /// Off-diagonal stress amplitude `−√(1 − δ₁)e′/√(8π²e)/λ₀`.
    pub fn stress_amplitude(&self, t: f64) -> f64 {
        -(1.0 - self.delta1).sqrt() * self.energy.deriv(t) / (8.0 * PI * PI * self.energy.eval(t)).sqrt() / self.lambda0 as f64
    }

    /// `√(1 − δ₁) max|e′| / (λ₀ √(8π² min e))`.
    pub fn stress_sup(&self) -> f64 {
        (1.0 - self.delta1).sqrt() * self.energy.max_abs_deriv() / (self.lambda0 as f64 * (8.0 * PI * PI * self.energy.min()).sqrt())
    }
}

/// Smallest multiple of 5 for which the initial stress is below `ηδ₁`.
pub fn minimal_lambda0(e: &EnergyProfile, delta1: f64, eta: f64) -> usize {
    let need = (1.0 - delta1).sqrt() * e.max_abs_deriv() / ((8.0 * PI * PI * e.min()).sqrt() * eta * delta1);
    let l = 5 * ((need / 5.0).ceil() as usize).max(1);
    l
}

impl StageState for InitialTuple {
    fn q(&self) -> usize {
        0
    }
    fn grid(&self) -> Grid {
        self.grid
    }
    fn time(&self) -> TimeGrid {
        self.time
    }
    fn slice(&self, j: usize) -> Result<StateSlice> {
        if j >= self.time.len() {
            return Err(Error::InvalidInput(format!("no sample {j}")));
        }
        let t = self.time.time(j);
        let g = self.grid;
        let lam = self.lambda0 as f64;
        let amp = self.amplitude(t);
        let ra = self.stress_amplitude(t);
        let decay = (-t).exp();
        let ThetaDatum { sin: s, cos: c } = self.theta0;
        Ok(StateSlice {
            t,
            v: VectorField2::new(ScalarField::from_fn(g, |_, y| amp * (lam * y).sin()), ScalarField::zeros(g)),
            p: ScalarField::from_fn(g, |_, y| decay * (s * (1.0 - y.cos()) + c * y.sin())),
            theta: ScalarField::from_fn(g, |_, y| decay * (s * y.sin() + c * y.cos())),
            r: SymTraceFreeTensor2Field::new(ScalarField::zeros(g), ScalarField::from_fn(g, |_, y| ra * (lam * y).cos())),
        })
    }
    fn energy_at(&self, t: f64) -> Result<f64> {
        Ok((1.0 - self.delta1) * self.energy.eval(t))
    }
    fn band_hint(&self) -> Option<i64> {
        Some(self.lambda0 as i64)
    }
}

/// Energy gap `e(t)(1 − δ) − ∫|v|²` per sample and `max |gap|/e`.
#[derive(Clone, Debug)]
pub struct EnergyGap {
    pub rows: Vec<(f64, f64)>,
    pub max_normalized: f64,
    pub delta: f64,
}

impl EnergyGap {
    pub fn from_energies(times: &[f64], energies: &[f64], e: &EnergyProfile, delta: f64) -> EnergyGap {
        let rows: Vec<(f64, f64)> = times.iter().zip(energies).map(|(&t, &en)| (t, e.eval(t) * (1.0 - delta) - en)).collect();
        let max_normalized = rows.iter().map(|&(t, g)| g.abs() / e.eval(t)).fold(0.0, f64::max);
        EnergyGap { rows, max_normalized, delta }
    }

    /// `|gap| ≤ δe/4` at every sample.
    pub fn admissible(&self) -> bool {
        self.max_normalized <= self.delta / 4.0
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,gap\n");
        for (t, g) in &self.rows {
            s.push_str(&format!("{t:.9},{g:.12e}\n"));
        }
        s
    }
}

pub fn energy_gap(state: &dyn StageState, e: &EnergyProfile, delta_next: f64) -> Result<EnergyGap> {
    let mut times = Vec::new();
    let mut en = Vec::new();
    state.sweep(&mut |_, s| {
        times.push(s.t);
        en.push(s.v.energy());
        Ok(())
    })?;
    Ok(EnergyGap::from_energies(&times, &en, e, delta_next))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponents_for_gamma() {
        let s = ParamSchedule::new(4.0, 0.4, Mode::Toy).unwrap();
        assert!((s.b - 1.6).abs() < 1e-15);
        assert!((s.c - 3.375).abs() < 1e-15);
        assert!((s.b * s.c - 5.4).abs() < 1e-14);
    }

    #[test]
    fn toy_schedule_values() {
        let s = ParamSchedule::new(4.0, 0.4, Mode::Toy).unwrap();
        assert_eq!(s.lambda(0), 5.0);
        assert_eq!(s.lambda(1), 50.0);
        assert_eq!(s.mu(0), 11.0);
        assert!((s.ell(0) - 0.25f64.powf(-0.25) / 250f64.sqrt()).abs() < 1e-14);
        assert!(s.delta(0) > s.delta(1) && s.delta(1) > s.delta(2));
        let r = check_parameter_conditions(&s, 0);
        assert!(r.all_hold(), "{:?}", r.violations());
        assert!(r.consistency < 1e-14);
    }

    #[test]
    fn strict_gate_at_large_a() {
        let s = ParamSchedule::new(1e4, 0.4, Mode::Strict).unwrap();
        for q in 0..2 {
            let r = check_parameter_conditions(&s, q);
            assert!(r.all_hold(), "{:?}", r.violations());
            assert!(r.rows.iter().all(|row| row.slack() > 0.0 || row.name == "lambda_at_least_one"));
            assert!(s.lambda(q) % 5.0 == 0.0 || s.lambda(q) > 1e15);
        }
        assert!(s.lambda(1) > s.lambda(0));
    }

    #[test]
    fn a_min_is_a_threshold() {
        let a = a_min(0.4, &[0, 1]).unwrap();
        assert!(a <= 1e4);
        for f in [1.0, 1.01, 1.3, 3.0, 50.0] {
            let above = ParamSchedule::new(a * f, 0.4, Mode::Strict).unwrap();
            assert!(check_parameter_conditions(&above, 0).all_hold(), "{f}");
            assert!(check_parameter_conditions(&above, 1).all_hold(), "{f}");
        }
        let below = ParamSchedule::new(a * 0.5, 0.4, Mode::Strict).unwrap();
        assert!(!check_parameter_conditions(&below, 0).all_hold());
    }

    #[test]
    fn energy_profile_checks() {
        assert!(EnergyProfile::new(vec![1.0, 2.0]).is_err());
        assert!(EnergyProfile::new(vec![]).is_err());
        let e = EnergyProfile::new(vec![10.0, 0.02]).unwrap();
        let h = 1e-6;
        assert!(((e.eval(0.3 + h) - e.eval(0.3 - h)) / (2.0 * h) - e.deriv(0.3)).abs() < 1e-8);
    }

    #[test]
    fn initial_tuple_energy_identity() {
        let e = EnergyProfile::new(vec![10.0, 0.02]).unwrap();
        let grid = Grid::new(80).unwrap();
        let time = TimeGrid::new(9).unwrap();
        let it = initial_tuple(&e, ThetaDatum { sin: 1.0, cos: 0.0 }, 5, 0.1, grid, time).unwrap();
        let gap = energy_gap(&it, &e, 0.1).unwrap();
        assert!(gap.max_normalized <= 1e-10);
        assert!(initial_tuple(&e, ThetaDatum { sin: 1.0, cos: 0.0 }, 30, 0.1, grid, time).is_err());
        let s = it.slice(3).unwrap();
        assert!((s.r.sup_norm() - it.stress_amplitude(s.t).abs()).abs() < 1e-15);
        assert!(it.stress_sup() >= it.stress_amplitude(s.t).abs());
        let l = minimal_lambda0(&e, 0.1, 0.1);
        assert!(l % 5 == 0);
        let big = initial_tuple(&e, ThetaDatum { sin: 1.0, cos: 0.0 }, l, 0.1, Grid::new(8 * l).unwrap(), time).unwrap();
        assert!(big.stress_sup() <= 0.1 * 0.1);
    }

    #[test]
    fn zero_velocity_gap() {
        let e = EnergyProfile::new(vec![1.0]).unwrap();
        let g = EnergyGap::from_energies(&[0.0, 0.5, 1.0], &[0.0; 3], &e, 1.0);
        assert!(g.max_normalized == 0.0 && g.admissible());
    }
}
