//! Stationary plane-wave flows, the geometric decomposition of symmetric
//! matrices over a rational direction family, the periodic
//! anti-divergence operator, and an oscillatory-integral probe.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{
    forward_real_pair, grad_perp, inverse_real_pair, Grid, ScalarField, Spectrum, SymTraceFreeTensor2Field,
    VectorField2,
};
use crate::util::loglog_slope;

/// Λ₀⁺ in units of 1/5.
const LAMBDA0_FIFTHS: [[i64; 2]; 3] = [[5, 0], [3, 4], [3, -4]];

/// One of the two rational direction families.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionFamily {
    index: usize,
    fifths: [[i64; 2]; 3],
    /// Inverse of the map `c ↦ 2Σ c_k k⊗k` written on `(R11, R12, R22)`.
    inverse: [[f64; 3]; 3],
}

impl DirectionFamily {
    /// Family 0 is Λ₀; family 1 is Λ₀ rotated counter-clockwise by π/2.
    pub fn new(index: usize) -> Result<DirectionFamily> {
        let fifths = match index {
            0 => LAMBDA0_FIFTHS,
            1 => LAMBDA0_FIFTHS.map(|[a, b]| [-b, a]),
            _ => return Err(Error::InvalidInput(format!("direction family index must be 0 or 1, got {index}"))),
        };
        let mut m = [[0.0; 3]; 3];
        for (col, k) in fifths.iter().enumerate() {
            let (k1, k2) = (k[0] as f64 / 5.0, k[1] as f64 / 5.0);
            m[0][col] = 2.0 * k1 * k1;
            m[1][col] = 2.0 * k1 * k2;
            m[2][col] = 2.0 * k2 * k2;
        }
        let inverse = invert3(m).ok_or_else(|| Error::InvalidInput("direction tensors do not span".into()))?;
        Ok(DirectionFamily { index, fifths, inverse })
    }

    /// Family used on chart `l`: parity alternation.
    pub fn for_chart(l: usize) -> DirectionFamily {
        DirectionFamily::new(l % 2).expect("parity is 0 or 1")
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// The three positive directions with coordinates in fifths.
    pub fn plus_fifths(&self) -> [[i64; 2]; 3] {
        self.fifths
    }

    pub fn plus_set(&self) -> [[f64; 2]; 3] {
        self.fifths.map(|[a, b]| [a as f64 / 5.0, b as f64 / 5.0])
    }

    /// `plus_set` followed by its negatives.
    pub fn full_set(&self) -> Vec<[f64; 2]> {
        let p = self.plus_set();
        p.iter().copied().chain(p.iter().map(|k| [-k[0], -k[1]])).collect()
    }

    /// Raw solution `c` of `R = 2Σ c_k k⊗k` for `R = (R11, R12, R22)`.
    #[inline]
    pub fn solve_squares(&self, r: [f64; 3]) -> [f64; 3] {
        let m = &self.inverse;
        [
            m[0][0] * r[0] + m[0][1] * r[1] + m[0][2] * r[2],
            m[1][0] * r[0] + m[1][1] * r[1] + m[1][2] * r[2],
            m[2][0] * r[0] + m[2][1] * r[1] + m[2][2] * r[2],
        ]
    }

    /// Largest Frobenius radius around Id on which every `c_k` stays positive.
    ///
    /// `c` is affine in `R`, so the radius is `min_k c_k(Id) / ‖∇c_k‖_*`
    /// with the dual of the Frobenius norm on symmetric matrices.
    pub fn epsilon0(&self) -> f64 {
        let c_id = self.solve_squares([1.0, 0.0, 1.0]);
        (0..3)
            .map(|k| {
                let g = self.inverse[k];
                let dual = (g[0] * g[0] + 0.5 * g[1] * g[1] + g[2] * g[2]).sqrt();
                c_id[k] / dual
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Half of `min |k + k′|` over `k, k′ ∈ Λ₀ ∪ Λ₁` with `k ≠ −k′`.
pub fn c0() -> f64 {
    let mut all = DirectionFamily::new(0).unwrap().full_set();
    all.extend(DirectionFamily::new(1).unwrap().full_set());
    let mut best = f64::INFINITY;
    for k in &all {
        for kp in &all {
            let s = [k[0] + kp[0], k[1] + kp[1]];
            let norm = (s[0] * s[0] + s[1] * s[1]).sqrt();
            if norm > 1e-12 {
                best = best.min(norm);
            }
        }
    }
    best / 2.0
}

fn invert3(m: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let mut a = [[0.0; 6]; 3];
    for i in 0..3 {
        a[i][..3].copy_from_slice(&m[i]);
        a[i][3 + i] = 1.0;
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for r in 0..3 {
            if r != col {
                let f = a[r][col];
                for c in 0..6 {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        inv[i].copy_from_slice(&a[i][3..]);
    }
    Some(inv)
}

/// Output of the geometric lemma for one matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaCoefficients {
    pub directions: [[f64; 2]; 3],
    pub gamma: [f64; 3],
    pub gamma_sq: [f64; 3],
    pub domain_radius: f64,
}

impl GammaCoefficients {
    /// `2Σ γ_k² k⊗k` as `[[a, b], [b, c]]`.
    pub fn reconstruct(&self) -> [[f64; 2]; 2] {
        let mut r = [[0.0; 2]; 2];
        for (k, c) in self.directions.iter().zip(self.gamma_sq) {
            for i in 0..2 {
                for j in 0..2 {
                    r[i][j] += 2.0 * c * k[i] * k[j];
                }
            }
        }
        r
    }
}

/// Solve `R = 2Σ_{k∈Λ⁺} γ_k² k⊗k` with strictly positive `γ_k²`.
pub fn gamma_coefficients(r: [[f64; 2]; 2], family: &DirectionFamily) -> Result<GammaCoefficients> {
    if (r[0][1] - r[1][0]).abs() > 1e-14 * (1.0 + r[0][1].abs()) {
        return Err(Error::InvalidInput("matrix is not symmetric".into()));
    }
    let c = family.solve_squares([r[0][0], r[0][1], r[1][1]]);
    if let Some(bad) = c.iter().copied().find(|&x| x <= 0.0) {
        return Err(Error::NonPositiveCoefficient { value: bad, context: "geometric lemma".into() });
    }
    Ok(GammaCoefficients {
        directions: family.plus_set(),
        gamma: c.map(f64::sqrt),
        gamma_sq: c,
        domain_radius: family.epsilon0(),
    })
}

/// Interaction coefficient `k·k′ − 1` in
/// `div(f₁⊗f₂ + f₂⊗f₁) = (k·k′ − 1) ∇e^{i(k+k′)·x}` for unit `k, k′`.
pub fn pair_pressure(k: [f64; 2], kp: [f64; 2]) -> Result<f64> {
    for v in [k, kp] {
        if ((v[0] * v[0] + v[1] * v[1]).sqrt() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("direction {v:?} is not a unit vector")));
        }
    }
    Ok(k[0] * kp[0] + k[1] * kp[1] - 1.0)
}

fn integer_wave(k: [f64; 2], lambda: f64) -> Result<(i64, i64)> {
    let w = [lambda * k[0], lambda * k[1]];
    let r = [w[0].round(), w[1].round()];
    if (w[0] - r[0]).abs() > 1e-9 || (w[1] - r[1]).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("λk = {w:?} is not an integer vector")));
    }
    Ok((r[0] as i64, r[1] as i64))
}

/// Stationary flow `Ψ = Σ a_k e^{iλk·x}`, `W = λ⁻¹∇⊥Ψ = Σ a_k i k⊥ e^{iλk·x}`.
///
/// With this normalization `div(W⊗W) = ∇(|W|²/2 + Ψ²/2)` for every `λ`.
pub fn stationary_flow(
    coeffs: &[([f64; 2], Complex64)],
    family: &DirectionFamily,
    lambda: f64,
    grid: Grid,
) -> Result<(VectorField2, ScalarField)> {
    if lambda <= 0.0 {
        return Err(Error::InvalidInput("λ must be positive".into()));
    }
    let members = family.full_set();
    let find = |k: [f64; 2]| coeffs.iter().find(|(q, _)| (q[0] - k[0]).abs() < 1e-12 && (q[1] - k[1]).abs() < 1e-12);
    let n = grid.n();
    let mut psi = Spectrum::zeros(n);
    for (k, a) in coeffs {
        if !members.iter().any(|m| (m[0] - k[0]).abs() < 1e-12 && (m[1] - k[1]).abs() < 1e-12) {
            return Err(Error::InvalidInput(format!("direction {k:?} not in family {}", family.index())));
        }
        match find([-k[0], -k[1]]) {
            Some((_, b)) if (b - a.conj()).norm() <= 1e-14 * (1.0 + a.norm()) => {}
            _ => return Err(Error::InvalidInput(format!("coefficient set not conjugate-symmetric at {k:?}"))),
        }
        let (w1, w2) = integer_wave(*k, lambda)?;
        if 2 * w1.abs() >= n as i64 || 2 * w2.abs() >= n as i64 {
            return Err(Error::Unresolved(format!("wave ({w1},{w2}) beyond grid Nyquist")));
        }
        psi.add(w1, w2, *a);
    }
    let psi = ScalarField::from_spectrum(grid, psi);
    let w = grad_perp(&psi).scale(1.0 / lambda);
    Ok((w, psi))
}

/// Spectral anti-divergence of `(v1, v2)` given by their spectra.
pub fn anti_divergence_spectra(v1: &Spectrum, v2: &Spectrum) -> (Spectrum, Spectrum) {
    let n = v1.n();
    let nyq = (n / 2) as i64;
    let mut t11 = Spectrum::zeros(n);
    let mut t12 = Spectrum::zeros(n);
    let i = Complex64::new(0.0, 1.0);
    v1.for_each(|k1, k2, a| {
        if (k1 == 0 && k2 == 0) || k1 == nyq || k2 == nyq {
            return;
        }
        let b = v2.get(k1, k2);
        let kk = (k1 * k1 + k2 * k2) as f64;
        let (f1, f2) = (k1 as f64, k2 as f64);
        t11.set(k1, k2, i * (b * f2 - a * f1) / kk);
        t12.set(k1, k2, -i * (a * f2 + b * f1) / kk);
    });
    (t11, t12)
}

/// Anti-divergence `R(v)`: symmetric, trace-free, mean-zero, `div R(v) = v − ⨍v`.
pub fn anti_divergence(v: &VectorField2) -> SymTraceFreeTensor2Field {
    v.prime_spectra();
    let (s11, s12) = anti_divergence_spectra(v.u1.spectrum(), v.u2.spectrum());
    tensor_from_spectra(v.grid(), s11, s12)
}

pub(crate) fn tensor_from_spectra(grid: Grid, s11: Spectrum, s12: Spectrum) -> SymTraceFreeTensor2Field {
    let (a, b) = inverse_real_pair(&s11, &s12);
    SymTraceFreeTensor2Field::new(ScalarField::new(grid, a), ScalarField::new(grid, b))
}

/// Anti-divergence of raw component arrays.
pub fn anti_divergence_raw(grid: Grid, v1: &[f64], v2: &[f64]) -> SymTraceFreeTensor2Field {
    let (a, b) = forward_real_pair(grid.n(), v1, v2);
    let (s11, s12) = anti_divergence_spectra(&a, &b);
    tensor_from_spectra(grid, s11, s12)
}

/// `(‖R(v)‖₀, ‖v‖_{Ḣˢ})`.
pub fn antidiv_hs_bound_probe(v: &VectorField2, s: f64) -> Result<(f64, f64)> {
    if s <= 0.0 {
        return Err(Error::InvalidInput(format!("Sobolev index must be positive, got {s}")));
    }
    Ok((anti_divergence(v).sup_norm(), v.hs_norm(s)?))
}

/// Measured `|∫ a e^{iλk·x} dx|` per `λ`, with a fitted log-log slope.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayTable {
    pub rows: Vec<(f64, f64)>,
    pub slope: f64,
}

impl DecayTable {
    pub fn from_rows(rows: Vec<(f64, f64)>) -> DecayTable {
        let xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let slope = if rows.len() >= 2 && ys.iter().all(|&y| y > 0.0) { loglog_slope(&xs, &ys) } else { f64::NAN };
        DecayTable { rows, slope }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda,measured,fitted_slope\n");
        for (l, m) in &self.rows {
            s.push_str(&format!("{l},{m:e},{:.6}\n", self.slope));
        }
        s
    }
}

pub fn stationary_phase_probe(a: &ScalarField, k: [f64; 2], lambdas: &[f64]) -> Result<DecayTable> {
    let n = a.grid().n() as i64;
    let four_pi2 = 4.0 * std::f64::consts::PI.powi(2);
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lam in lambdas {
        let (w1, w2) = integer_wave(k, lam)?;
        if 2 * w1.abs() >= n || 2 * w2.abs() >= n {
            return Err(Error::Unresolved(format!("λk = ({w1},{w2}) beyond grid Nyquist")));
        }
        rows.push((lam, four_pi2 * a.spectrum().get(-w1, -w2).norm()));
    }
    Ok(DecayTable::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{divergence, divergence_tensor};

    #[test]
    fn gamma_of_identity() {
        let f0 = DirectionFamily::new(0).unwrap();
        let g = gamma_coefficients([[1.0, 0.0], [0.0, 1.0]], &f0).unwrap();
        assert!((g.gamma_sq[0] - 7.0 / 32.0).abs() < 1e-15);
        assert!((g.gamma_sq[1] - 25.0 / 64.0).abs() < 1e-15);
        assert!((g.gamma_sq[2] - 25.0 / 64.0).abs() < 1e-15);
        let f1 = DirectionFamily::new(1).unwrap();
        let h = gamma_coefficients([[1.0, 0.0], [0.0, 1.0]], &f1).unwrap();
        for i in 0..3 {
            assert!((g.gamma_sq[i] - h.gamma_sq[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_rank_one_is_rejected() {
        let f0 = DirectionFamily::new(0).unwrap();
        let r = gamma_coefficients([[2.0, 0.0], [0.0, 0.0]], &f0);
        assert!(matches!(r, Err(Error::NonPositiveCoefficient { .. })));
    }

    #[test]
    fn family_one_is_rotation_of_family_zero() {
        let f1 = DirectionFamily::new(1).unwrap();
        assert_eq!(f1.plus_fifths(), [[0, 5], [-4, 3], [4, 3]]);
        assert!(DirectionFamily::new(2).is_err());
    }

    #[test]
    fn epsilon0_matches_hand_value() {
        // c_{e₁} = (16 R11 − 9 R22)/32 limits the radius: (7/32)/(√337/32) = 7/√337
        let e = DirectionFamily::new(0).unwrap().epsilon0();
        assert!((e - 7.0 / 337f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn c0_value() {
        // (3/5,4/5) − (4/5,3/5) has length √2/5
        assert!((c0() - 2f64.sqrt() / 10.0).abs() < 1e-15);
    }

    #[test]
    fn pair_pressure_examples() {
        assert_eq!(pair_pressure([1.0, 0.0], [1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(pair_pressure([1.0, 0.0], [-1.0, 0.0]).unwrap(), -2.0);
        assert!((pair_pressure([1.0, 0.0], [0.6, 0.8]).unwrap() + 0.4).abs() < 1e-15);
        assert!(pair_pressure([1.0, 1.0], [1.0, 0.0]).is_err());
    }

    #[test]
    fn anti_divergence_closed_form() {
        let grid = Grid::new(32).unwrap();
        let v = VectorField2::from_fn(grid, |_, y| [y.sin(), 0.0]);
        let t = anti_divergence(&v);
        assert!(t.t11.sup_norm() < 1e-15);
        assert!(t.t12.sub(&ScalarField::from_fn(grid, |_, y| -y.cos())).sup_norm() < 1e-14);
        let c = VectorField2::from_fn(grid, |_, _| [1.0, -2.0]);
        assert!(anti_divergence(&c).sup_norm() < 1e-15);
        let d = divergence_tensor(&t);
        assert!(d.sub(&v).sup_norm() < 1e-14);
    }

    #[test]
    fn hs_probe_closed_form() {
        let grid = Grid::new(32).unwrap();
        let v = VectorField2::from_fn(grid, |_, y| [y.sin(), 0.0]);
        let (l, r) = antidiv_hs_bound_probe(&v, 1.0).unwrap();
        assert!((l - 1.0).abs() < 1e-14);
        assert!((r - 0.5f64.sqrt()).abs() < 1e-14);
        let (l0, r0) = antidiv_hs_bound_probe(&VectorField2::zeros(grid), 0.5).unwrap();
        assert_eq!((l0, r0), (0.0, 0.0));
        assert!(antidiv_hs_bound_probe(&v, 0.0).is_err());
    }

    #[test]
    fn stationary_flow_single_pair() {
        let grid = Grid::new(32).unwrap();
        let f0 = DirectionFamily::new(0).unwrap();
        let half = Complex64::new(0.5, 0.0);
        let (w, psi) = stationary_flow(&[([1.0, 0.0], half), ([-1.0, 0.0], half)], &f0, 1.0, grid).unwrap();
        assert!(psi.sub(&ScalarField::from_fn(grid, |x, _| x.cos())).sup_norm() < 1e-14);
        assert!(w.u1.sup_norm() < 1e-14);
        assert!(w.u2.sub(&ScalarField::from_fn(grid, |x, _| -x.sin())).sup_norm() < 1e-14);
        assert!(divergence(&w).sup_norm() < 1e-13);
        let (w0, p0) = stationary_flow(&[], &f0, 5.0, grid).unwrap();
        assert_eq!(w0.sup_norm() + p0.sup_norm(), 0.0);
    }

    #[test]
    fn stationary_flow_rejects_bad_inputs() {
        let grid = Grid::new(32).unwrap();
        let f0 = DirectionFamily::new(0).unwrap();
        let a = Complex64::new(0.5, 0.2);
        assert!(stationary_flow(&[([1.0, 0.0], a), ([-1.0, 0.0], a)], &f0, 5.0, grid).is_err());
        let ok = [([0.6, 0.8], a), ([-0.6, -0.8], a.conj())];
        assert!(stationary_flow(&ok, &f0, 3.0, grid).is_err());
        assert!(stationary_flow(&ok, &f0, 5.0, grid).is_ok());
    }

    #[test]
    fn stationary_phase_trivial_cases() {
        let grid = Grid::new(32).unwrap();
        let one = ScalarField::constant(grid, 1.0);
        let t = stationary_phase_probe(&one, [1.0, 0.0], &[1.0, 2.0, 5.0]).unwrap();
        assert!(t.rows.iter().all(|r| r.1 < 1e-13));
        let s = ScalarField::from_fn(grid, |_, y| y.sin());
        let t = stationary_phase_probe(&s, [1.0, 0.0], &[3.0]).unwrap();
        assert!(t.rows[0].1 < 1e-13);
        assert!(stationary_phase_probe(&s, [0.6, 0.8], &[3.0]).is_err());
    }
}
