//! The new Reynolds stress: seven constituents and the new pressure.

use crate::blocks::anti_divergence;
use crate::fields::{divergence_symmetric, gradient, Grid, ScalarField, SymTraceFreeTensor2Field, VectorField2};

pub const TERM_NAMES: [&str; 7] = ["R0", "R1", "R2", "R3", "R4", "R5", "R6"];

/// A symmetric tensor assembled from pointwise algebra, kept with its trace.
fn tensor_with_trace(grid: Grid, t11: Vec<f64>, t12: Vec<f64>, t22: &[f64]) -> (SymTraceFreeTensor2Field, f64) {
    let trace = t11.iter().zip(t22).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
    (SymTraceFreeTensor2Field::new(ScalarField::new(grid, t11), ScalarField::new(grid, t12)), trace)
}

/// `a⊗b + b⊗a − (a·b) Id` as `(t11, t12, t22)`.
fn sym_tracefree(a: &VectorField2, b: &VectorField2) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = a.u1.values().len();
    let (a1, a2, b1, b2) = (a.u1.values(), a.u2.values(), b.u1.values(), b.u2.values());
    let mut t11 = Vec::with_capacity(n);
    let mut t12 = Vec::with_capacity(n);
    let mut t22 = Vec::with_capacity(n);
    for i in 0..n {
        let dot = a1[i] * b1[i] + a2[i] * b2[i];
        t11.push(2.0 * a1[i] * b1[i] - dot);
        t12.push(a1[i] * b2[i] + a2[i] * b1[i]);
        t22.push(2.0 * a2[i] * b2[i] - dot);
    }
    (t11, t12, t22)
}

/// `(u·∇)f` for a vector field `f`, derivatives taken spectrally.
pub fn advect(u: &VectorField2, f: &VectorField2) -> VectorField2 {
    let g1 = gradient(&f.u1);
    let g2 = gradient(&f.u2);
    let (u1, u2) = (u.u1.values(), u.u2.values());
    let n = u1.len();
    let c1: Vec<f64> = (0..n).map(|i| u1[i] * g1.u1.values()[i] + u2[i] * g1.u2.values()[i]).collect();
    let c2: Vec<f64> = (0..n).map(|i| u1[i] * g2.u1.values()[i] + u2[i] * g2.u2.values()[i]).collect();
    VectorField2::new(ScalarField::new(u.grid(), c1), ScalarField::new(u.grid(), c2))
}

/// `R(∂_t w + v_ℓ·∇w)`.
pub fn build_r0(dtw: &VectorField2, v_l: &VectorField2, w: &VectorField2) -> SymTraceFreeTensor2Field {
    anti_divergence(&dtw.add(&advect(v_l, w)))
}

/// `R(w·∇v_ℓ)`.
pub fn build_r1(w: &VectorField2, v_l: &VectorField2) -> SymTraceFreeTensor2Field {
    anti_divergence(&advect(w, v_l))
}

/// `−R((θ₁ − θ)e₂)`.
pub fn build_r2(theta1: &ScalarField, theta: &ScalarField) -> SymTraceFreeTensor2Field {
    let d = theta1.sub(theta);
    let f = VectorField2::new(ScalarField::zeros(d.grid()), d);
    anti_divergence(&f).scale(-1.0)
}

/// `R(div(w_o⊗w_o − Σχ²R_{ℓ,l} + P Id))` from the oscillation term.
pub fn build_r3(osc: &VectorField2) -> SymTraceFreeTensor2Field {
    anti_divergence(osc)
}

/// `w_o⊗w_c + w_c⊗w_o + w_c⊗w_c − (|w_c|² + 2w_o·w_c)/2 Id`, with its trace.
pub fn build_r4(w_o: &VectorField2, w_c: &VectorField2) -> (SymTraceFreeTensor2Field, f64) {
    let (a11, a12, a22) = sym_tracefree(w_o, w_c);
    let (b11, b12, b22) = sym_tracefree(w_c, w_c);
    let t11: Vec<f64> = a11.iter().zip(&b11).map(|(a, b)| a + 0.5 * b).collect();
    let t12: Vec<f64> = a12.iter().zip(&b12).map(|(a, b)| a + 0.5 * b).collect();
    let t22: Vec<f64> = a22.iter().zip(&b22).map(|(a, b)| a + 0.5 * b).collect();
    tensor_with_trace(w_o.grid(), t11, t12, &t22)
}

/// `w⊗(v − v_ℓ) + (v − v_ℓ)⊗w − (v − v_ℓ)·w Id`, with its trace.
pub fn build_r5(w: &VectorField2, v: &VectorField2, v_l: &VectorField2) -> (SymTraceFreeTensor2Field, f64) {
    let (t11, t12, t22) = sym_tracefree(w, &v.sub(v_l));
    tensor_with_trace(w.grid(), t11, t12, &t22)
}

/// `R̊ − R̊_ℓ`.
pub fn build_r6(r: &SymTraceFreeTensor2Field, r_l: &SymTraceFreeTensor2Field) -> SymTraceFreeTensor2Field {
    r.sub(r_l)
}

/// Inputs of the assembly at one time sample.
pub struct AssemblyInput<'a> {
    pub v: &'a VectorField2,
    pub p: &'a ScalarField,
    pub theta: &'a ScalarField,
    pub r: &'a SymTraceFreeTensor2Field,
    pub v_l: &'a VectorField2,
    pub r_l: &'a SymTraceFreeTensor2Field,
    pub w_o: &'a VectorField2,
    pub w_c: &'a VectorField2,
    pub w: &'a VectorField2,
    pub pressure: &'a ScalarField,
    pub osc: &'a VectorField2,
    pub dtw: &'a VectorField2,
    pub theta1: &'a ScalarField,
}

/// New fields and the stress breakdown at one time sample.
#[derive(Clone, Debug)]
pub struct StressBreakdown {
    pub terms: [SymTraceFreeTensor2Field; 7],
    /// `max |tr Rⁱ|`; the spectral terms are trace-free by construction.
    pub trace: [f64; 7],
    pub v1: VectorField2,
    pub p1: ScalarField,
    pub r1: SymTraceFreeTensor2Field,
}

/// `v₁ = v + w`, `p₁ = p + P − (|w_c|² + 2w_o·w_c)/2 − (v − v_ℓ)·w`, `R̊₁ = ΣRⁱ`.
pub fn assemble_stage(inp: &AssemblyInput) -> StressBreakdown {
    let r0 = build_r0(inp.dtw, inp.v_l, inp.w);
    let r1 = build_r1(inp.w, inp.v_l);
    let r2 = build_r2(inp.theta1, inp.theta);
    let r3 = build_r3(inp.osc);
    let (r4, tr4) = build_r4(inp.w_o, inp.w_c);
    let (r5, tr5) = build_r5(inp.w, inp.v, inp.v_l);
    let r6 = build_r6(inp.r, inp.r_l);
    let mut r1_total = r0.add(&r1);
    for t in [&r2, &r3, &r4, &r5, &r6] {
        r1_total = r1_total.add(t);
    }
    let wc2 = inp.w_c.dot(inp.w_c);
    let owc = inp.w_o.dot(inp.w_c);
    let gap = inp.v.sub(inp.v_l).dot(inp.w);
    let p1 = inp.p.add(inp.pressure).sub(&wc2.add(&owc.scale(2.0)).scale(0.5)).sub(&gap);
    StressBreakdown {
        terms: [r0, r1, r2, r3, r4, r5, r6],
        trace: [0.0, 0.0, 0.0, 0.0, tr4, tr5, 0.0],
        v1: inp.v.add(inp.w),
        p1,
        r1: r1_total,
    }
}

/// `‖div(w_o⊗w_o + R̊_ℓ + P Id) − T‖₀`: the oscillation term against a
/// spectral divergence of the product it represents.
pub fn oscillation_crosscheck(
    w_o: &VectorField2,
    r_l: &SymTraceFreeTensor2Field,
    pressure: &ScalarField,
    osc: &VectorField2,
) -> f64 {
    let s11 = w_o.u1.mul(&w_o.u1).add(&r_l.t11).add(pressure);
    let s12 = w_o.u1.mul(&w_o.u2).add(&r_l.t12);
    let s22 = w_o.u2.mul(&w_o.u2).sub(&r_l.t11).add(pressure);
    divergence_symmetric(s11.values(), s12.values(), s22.values(), w_o.grid()).sub(osc).sup_norm()
}

/// Bound shapes of the seven terms at the stage parameters.
#[derive(Clone, Copy, Debug)]
pub struct BoundShapes {
    pub delta_q: f64,
    pub delta_q1: f64,
    pub lambda_q: f64,
    pub lambda_q1: f64,
    pub mu: f64,
    pub ell: f64,
    pub eps: f64,
}

impl BoundShapes {
    pub fn values(&self) -> [f64; 7] {
        let s = *self;
        let d1 = s.delta_q1.sqrt();
        let d0 = s.delta_q.sqrt();
        let le = s.lambda_q1.powf(s.eps - 1.0);
        [
            d1 * (s.mu + 1.0 / s.ell) * le,
            d1 * d0 * s.lambda_q * le,
            d1 * le,
            s.delta_q1 * d0 * s.lambda_q * s.lambda_q1.powf(s.eps) / s.mu,
            s.delta_q1 * d0 * s.lambda_q / s.mu,
            d1 * d0 * s.lambda_q * s.ell,
            s.delta_q1 * s.lambda_q * s.ell,
        ]
    }
}

/// Per-term maxima over a stage.
#[derive(Clone, Debug)]
pub struct StressReport {
    pub sup: [f64; 7],
    pub c1: [f64; 7],
    pub trace: [f64; 7],
    pub total_sup: f64,
    pub shapes: [f64; 7],
}

impl StressReport {
    pub fn new(shapes: BoundShapes) -> StressReport {
        StressReport { sup: [0.0; 7], c1: [0.0; 7], trace: [0.0; 7], total_sup: 0.0, shapes: shapes.values() }
    }

    /// Fold in one sample; `with_c1` also measures `‖·‖₁`.
    pub fn record(&mut self, b: &StressBreakdown, with_c1: bool) {
        for i in 0..7 {
            self.sup[i] = self.sup[i].max(b.terms[i].sup_norm());
            self.trace[i] = self.trace[i].max(b.trace[i]);
            if with_c1 {
                self.c1[i] = self.c1[i].max(b.terms[i].c1_norm());
            }
        }
        self.total_sup = self.total_sup.max(b.r1.sup_norm());
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("term,sup,c1,bound_shape,ratio\n");
        for i in 0..7 {
            s.push_str(&format!(
                "{},{:.6e},{:.6e},{:.6e},{:.6e}\n",
                TERM_NAMES[i],
                self.sup[i],
                self.c1[i],
                self.shapes[i],
                self.sup[i] / self.shapes[i]
            ));
        }
        s
    }
}
