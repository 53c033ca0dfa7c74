//! Periodic fields on T² = [0,2π)² with a spectral view.
//!
//! Values are stored row-major with index `i1 * n + i2`, where node
//! `(i1, i2)` sits at `x = (2π i1/n, 2π i2/n)`.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{self, index_of, wavenumber};

/// Uniform `n × n` grid on the torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Grid> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidInput(format!("grid size must be even and >= 8, got {n}")));
        }
        Ok(Grid { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Coordinate of node index `i` along either axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        2.0 * PI * i as f64 / self.n as f64
    }

    /// Cell area for quadrature.
    pub fn cell_area(&self) -> f64 {
        self.spacing() * self.spacing()
    }

    /// Largest wavenumber per axis retained by the 2/3 rule.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.n / 3) as i64
    }
}

/// Normalized Fourier coefficients of a field, `f = Σ f̂_k e^{ik·x}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    n: usize,
    /// Layout `[m2][m1]`.
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(n: usize) -> Spectrum {
        Spectrum { n, data: vec![Complex64::new(0.0, 0.0); n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, k1: i64, k2: i64) -> usize {
        index_of(k2, self.n) * self.n + index_of(k1, self.n)
    }

    /// Coefficient of `e^{i(k1 x1 + k2 x2)}`; wavenumbers are taken mod n.
    #[inline]
    pub fn get(&self, k1: i64, k2: i64) -> Complex64 {
        self.data[self.idx(k1, k2)]
    }

    #[inline]
    pub fn set(&mut self, k1: i64, k2: i64, z: Complex64) {
        let i = self.idx(k1, k2);
        self.data[i] = z;
    }

    #[inline]
    pub fn add(&mut self, k1: i64, k2: i64, z: Complex64) {
        let i = self.idx(k1, k2);
        self.data[i] += z;
    }

    pub(crate) fn raw(&self) -> &[Complex64] {
        &self.data
    }

    pub(crate) fn raw_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Visit every mode with its signed wavenumber.
    pub fn for_each(&self, mut f: impl FnMut(i64, i64, Complex64)) {
        let n = self.n;
        for m2 in 0..n {
            let k2 = wavenumber(m2, n);
            for m1 in 0..n {
                f(wavenumber(m1, n), k2, self.data[m2 * n + m1]);
            }
        }
    }

    /// Multiply every coefficient by `mult(k1, k2)`.
    pub fn map(&self, mut mult: impl FnMut(i64, i64) -> Complex64) -> Spectrum {
        let n = self.n;
        let mut out = self.clone();
        for m2 in 0..n {
            let k2 = wavenumber(m2, n);
            for m1 in 0..n {
                out.data[m2 * n + m1] *= mult(wavenumber(m1, n), k2);
            }
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    pub fn axpy(&mut self, s: f64, other: &Spectrum) {
        for (z, w) in self.data.iter_mut().zip(&other.data) {
            *z += s * *w;
        }
    }

    /// Spectral derivative `∂1^m1 ∂2^m2`. Odd derivatives drop the Nyquist mode.
    pub fn derivative(&self, m1: u32, m2: u32) -> Spectrum {
        let n = self.n;
        let nyq = (n / 2) as i64;
        self.map(|k1, k2| derivative_multiplier(k1, m1, nyq) * derivative_multiplier(k2, m2, nyq))
    }

    /// Zero all modes with `|k1|` or `|k2|` above `cutoff`.
    pub fn truncate(&mut self, cutoff: i64) {
        let n = self.n;
        for m2 in 0..n {
            let k2 = wavenumber(m2, n);
            for m1 in 0..n {
                let k1 = wavenumber(m1, n);
                if k1.abs() > cutoff || k2.abs() > cutoff {
                    self.data[m2 * n + m1] = Complex64::new(0.0, 0.0);
                }
            }
        }
    }

    /// Largest `max(|k1|,|k2|)` over coefficients with modulus above `tol`.
    pub fn active_band(&self, tol: f64) -> i64 {
        let mut band = 0;
        self.for_each(|k1, k2, z| {
            if z.norm() > tol {
                band = band.max(k1.abs()).max(k2.abs());
            }
        });
        band
    }
}

#[inline]
pub(crate) fn derivative_multiplier(k: i64, m: u32, nyq: i64) -> Complex64 {
    if m == 0 {
        return Complex64::new(1.0, 0.0);
    }
    if m % 2 == 1 && k == nyq {
        return Complex64::new(0.0, 0.0);
    }
    let ik = Complex64::new(0.0, k as f64);
    ik.powu(m)
}

/// Forward transform of one real array.
pub fn forward_real(n: usize, values: &[f64]) -> Spectrum {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft::plan(n).forward(&mut buf);
    Spectrum { n, data: buf }
}

/// Forward transforms of two real arrays for the cost of one complex FFT.
pub fn forward_real_pair(n: usize, a: &[f64], b: &[f64]) -> (Spectrum, Spectrum) {
    let mut buf: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
    fft::plan(n).forward(&mut buf);
    let mut sa = Spectrum::zeros(n);
    let mut sb = Spectrum::zeros(n);
    for m2 in 0..n {
        let r2 = (n - m2) % n;
        for m1 in 0..n {
            let r1 = (n - m1) % n;
            let z = buf[m2 * n + m1];
            let zr = buf[r2 * n + r1].conj();
            sa.data[m2 * n + m1] = (z + zr) * 0.5;
            sb.data[m2 * n + m1] = (z - zr) * Complex64::new(0.0, -0.5);
        }
    }
    (sa, sb)
}

/// Inverse transform keeping the real part.
pub fn inverse_real(s: &Spectrum) -> Vec<f64> {
    let mut buf = s.data.clone();
    fft::plan(s.n).inverse(&mut buf);
    buf.into_iter().map(|z| z.re).collect()
}

/// Inverse transforms of two Hermitian spectra with one complex FFT.
pub fn inverse_real_pair(a: &Spectrum, b: &Spectrum) -> (Vec<f64>, Vec<f64>) {
    let n = a.n;
    let mut buf: Vec<Complex64> =
        a.data.iter().zip(&b.data).map(|(x, y)| x + Complex64::new(0.0, 1.0) * y).collect();
    fft::plan(n).inverse(&mut buf);
    let re = buf.iter().map(|z| z.re).collect();
    let im = buf.iter().map(|z| z.im).collect();
    (re, im)
}

/// Inverse transform of an arbitrary spectrum to complex values.
pub fn inverse_complex(s: &Spectrum) -> Vec<Complex64> {
    let mut buf = s.data.clone();
    fft::plan(s.n).inverse(&mut buf);
    buf
}

/// Forward transform of complex values.
pub fn forward_complex(n: usize, values: &[Complex64]) -> Spectrum {
    let mut buf = values.to_vec();
    fft::plan(n).forward(&mut buf);
    Spectrum { n, data: buf }
}

/// Real periodic scalar field.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
    spectrum: OnceLock<Arc<Spectrum>>,
}

impl PartialEq for ScalarField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.values == other.values
    }
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> ScalarField {
        assert_eq!(values.len(), grid.len(), "value count does not match grid");
        ScalarField { grid, values, spectrum: OnceLock::new() }
    }

    pub fn zeros(grid: Grid) -> ScalarField {
        ScalarField::new(grid, vec![0.0; grid.len()])
    }

    pub fn constant(grid: Grid, c: f64) -> ScalarField {
        ScalarField::new(grid, vec![c; grid.len()])
    }

    /// Sample `f(x1, x2)` at the grid nodes.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let n = grid.n();
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            let x1 = grid.coord(i);
            for j in 0..n {
                values.push(f(x1, grid.coord(j)));
            }
        }
        ScalarField::new(grid, values)
    }

    /// Real part of the inverse transform; caches the given spectrum.
    pub fn from_spectrum(grid: Grid, s: Spectrum) -> ScalarField {
        let values = inverse_real(&s);
        let f = ScalarField::new(grid, values);
        let _ = f.spectrum.set(Arc::new(s));
        f
    }

    pub(crate) fn with_spectrum(grid: Grid, values: Vec<f64>, s: Spectrum) -> ScalarField {
        let f = ScalarField::new(grid, values);
        let _ = f.spectrum.set(Arc::new(s));
        f
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access; drops the cached spectrum.
    pub fn values_mut(&mut self) -> &mut [f64] {
        self.spectrum = OnceLock::new();
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i1: usize, i2: usize) -> f64 {
        self.values[i1 * self.grid.n() + i2]
    }

    pub fn spectrum(&self) -> &Spectrum {
        self.spectrum.get_or_init(|| Arc::new(forward_real(self.grid.n(), &self.values)))
    }

    pub fn has_spectrum(&self) -> bool {
        self.spectrum.get().is_some()
    }

    /// Fill the spectral caches of two fields with one transform.
    pub fn prime_pair(a: &ScalarField, b: &ScalarField) {
        if a.has_spectrum() || b.has_spectrum() {
            a.spectrum();
            b.spectrum();
            return;
        }
        let (sa, sb) = forward_real_pair(a.grid.n(), &a.values, &b.values);
        let _ = a.spectrum.set(Arc::new(sa));
        let _ = b.spectrum.set(Arc::new(sb));
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        assert_eq!(self.grid, other.grid);
        ScalarField::new(self.grid, self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> ScalarField {
        self.map(|v| s * v)
    }

    /// Spatial average.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `∫_{T²} f dx` by the trapezoid rule (spectrally accurate).
    pub fn integral(&self) -> f64 {
        self.mean() * 4.0 * PI * PI
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_area()).sqrt()
    }

    /// `‖f‖_{Ḣˢ} = (Σ_{k≠0} |f̂_k|² |k|^{2s})^{1/2}`.
    pub fn hs_norm(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::InvalidInput(format!("Sobolev index must be >= 0, got {s}")));
        }
        Ok(hs_sum(self.spectrum(), s).sqrt())
    }

    /// `‖f‖_m = Σ_{j≤m} Σ_{|β|=j} ‖∂^β f‖₀`, for `m ≤ 4`.
    pub fn cm_norm(&self, m: u32) -> Result<f64> {
        if m > 4 {
            return Err(Error::InvalidInput(format!("C^m norm supported for m <= 4, got {m}")));
        }
        let mut total = 0.0;
        for j in 0..=m {
            for b1 in 0..=j {
                total += self.derivative(b1, j - b1).sup_norm();
            }
        }
        Ok(total)
    }

    pub fn derivative(&self, m1: u32, m2: u32) -> ScalarField {
        if m1 == 0 && m2 == 0 {
            return self.clone();
        }
        ScalarField::from_spectrum(self.grid, self.spectrum().derivative(m1, m2))
    }
}

pub(crate) fn hs_sum(s: &Spectrum, sob: f64) -> f64 {
    let mut total = 0.0;
    s.for_each(|k1, k2, z| {
        if k1 != 0 || k2 != 0 {
            let k2n = (k1 * k1 + k2 * k2) as f64;
            total += z.norm_sqr() * k2n.powf(sob);
        }
    });
    total
}

/// `∂1^{m1} ∂2^{m2} f` by wavenumber multiplication.
pub fn spectral_derivative(f: &ScalarField, multi_index: (i32, i32)) -> Result<ScalarField> {
    let (m1, m2) = multi_index;
    if m1 < 0 || m2 < 0 {
        return Err(Error::InvalidInput(format!("negative multi-index ({m1}, {m2})")));
    }
    Ok(f.derivative(m1 as u32, m2 as u32))
}

/// Real vector field `(u1, u2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField2 {
    pub u1: ScalarField,
    pub u2: ScalarField,
}

impl VectorField2 {
    pub fn new(u1: ScalarField, u2: ScalarField) -> VectorField2 {
        assert_eq!(u1.grid(), u2.grid(), "components must share a grid");
        VectorField2 { u1, u2 }
    }

    pub fn zeros(grid: Grid) -> VectorField2 {
        VectorField2::new(ScalarField::zeros(grid), ScalarField::zeros(grid))
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> [f64; 2]) -> VectorField2 {
        let u1 = ScalarField::from_fn(grid, |x, y| f(x, y)[0]);
        let u2 = ScalarField::from_fn(grid, |x, y| f(x, y)[1]);
        VectorField2::new(u1, u2)
    }

    pub fn grid(&self) -> Grid {
        self.u1.grid()
    }

    pub fn add(&self, o: &VectorField2) -> VectorField2 {
        VectorField2::new(self.u1.add(&o.u1), self.u2.add(&o.u2))
    }

    pub fn sub(&self, o: &VectorField2) -> VectorField2 {
        VectorField2::new(self.u1.sub(&o.u1), self.u2.sub(&o.u2))
    }

    pub fn scale(&self, s: f64) -> VectorField2 {
        VectorField2::new(self.u1.scale(s), self.u2.scale(s))
    }

    pub fn dot(&self, o: &VectorField2) -> ScalarField {
        let a = self.u1.mul(&o.u1);
        let b = self.u2.mul(&o.u2);
        a.add(&b)
    }

    pub fn prime_spectra(&self) {
        ScalarField::prime_pair(&self.u1, &self.u2);
    }

    /// Pointwise Euclidean sup norm.
    pub fn sup_norm(&self) -> f64 {
        self.u1
            .values()
            .iter()
            .zip(self.u2.values())
            .fold(0.0, |m, (a, b)| m.max((a * a + b * b).sqrt()))
    }

    pub fn l2_norm(&self) -> f64 {
        (self.u1.l2_norm().powi(2) + self.u2.l2_norm().powi(2)).sqrt()
    }

    pub fn hs_norm(&self, s: f64) -> Result<f64> {
        Ok((self.u1.hs_norm(s)?.powi(2) + self.u2.hs_norm(s)?.powi(2)).sqrt())
    }

    /// `∫|v|² dx`.
    pub fn energy(&self) -> f64 {
        let ss: f64 = self.u1.values().iter().zip(self.u2.values()).map(|(a, b)| a * a + b * b).sum();
        ss * self.grid().cell_area()
    }

    pub fn mean(&self) -> [f64; 2] {
        [self.u1.mean(), self.u2.mean()]
    }

    /// `Σ_{j≤m} Σ_{|β|=j} ‖∂^β v‖₀` with pointwise Euclidean norms.
    pub fn cm_norm(&self, m: u32) -> Result<f64> {
        if m > 4 {
            return Err(Error::InvalidInput(format!("C^m norm supported for m <= 4, got {m}")));
        }
        self.prime_spectra();
        let mut total = 0.0;
        for j in 0..=m {
            for b1 in 0..=j {
                let d = VectorField2::new(self.u1.derivative(b1, j - b1), self.u2.derivative(b1, j - b1));
                total += d.sup_norm();
            }
        }
        Ok(total)
    }

    /// Derivative of both components, using one paired inverse transform.
    pub fn derivative(&self, m1: u32, m2: u32) -> VectorField2 {
        self.prime_spectra();
        let s1 = self.u1.spectrum().derivative(m1, m2);
        let s2 = self.u2.spectrum().derivative(m1, m2);
        let (a, b) = inverse_real_pair(&s1, &s2);
        let g = self.grid();
        VectorField2::new(ScalarField::with_spectrum(g, a, s1), ScalarField::with_spectrum(g, b, s2))
    }
}

/// Symmetric trace-free tensor `[[t11, t12], [t12, -t11]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTraceFreeTensor2Field {
    pub t11: ScalarField,
    pub t12: ScalarField,
}

impl SymTraceFreeTensor2Field {
    pub fn new(t11: ScalarField, t12: ScalarField) -> Self {
        assert_eq!(t11.grid(), t12.grid(), "components must share a grid");
        SymTraceFreeTensor2Field { t11, t12 }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::new(ScalarField::zeros(grid), ScalarField::zeros(grid))
    }

    pub fn grid(&self) -> Grid {
        self.t11.grid()
    }

    /// Full components `(S11, S12, S22)` at flat index `i`.
    #[inline]
    pub fn full_at(&self, i: usize) -> [f64; 3] {
        let a = self.t11.values()[i];
        [a, self.t12.values()[i], -a]
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(self.t11.add(&o.t11), self.t12.add(&o.t12))
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::new(self.t11.sub(&o.t11), self.t12.sub(&o.t12))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.t11.scale(s), self.t12.scale(s))
    }

    /// Sup over points of the operator norm `√(t11² + t12²)`.
    pub fn sup_norm(&self) -> f64 {
        self.t11
            .values()
            .iter()
            .zip(self.t12.values())
            .fold(0.0, |m, (a, b)| m.max((a * a + b * b).sqrt()))
    }

    /// Sup over points of the Frobenius norm.
    pub fn sup_frobenius(&self) -> f64 {
        self.sup_norm() * std::f64::consts::SQRT_2
    }

    pub fn l2_norm(&self) -> f64 {
        (2.0 * (self.t11.l2_norm().powi(2) + self.t12.l2_norm().powi(2))).sqrt()
    }

    /// C¹ norm with pointwise operator norms.
    pub fn c1_norm(&self) -> f64 {
        ScalarField::prime_pair(&self.t11, &self.t12);
        let mut total = self.sup_norm();
        for (m1, m2) in [(1, 0), (0, 1)] {
            let s1 = self.t11.spectrum().derivative(m1, m2);
            let s2 = self.t12.spectrum().derivative(m1, m2);
            let (a, b) = inverse_real_pair(&s1, &s2);
            total += a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x * x + y * y).sqrt()));
        }
        total
    }

    /// Largest pointwise |trace| of the reconstructed tensor (zero by storage).
    pub fn max_trace(&self) -> f64 {
        (0..self.grid().len()).fold(0.0, |m, i| {
            let f = self.full_at(i);
            m.max((f[0] + f[2]).abs())
        })
    }

    pub fn mean(&self) -> [f64; 2] {
        [self.t11.mean(), self.t12.mean()]
    }
}

/// `∇⊥f = (−∂₂f, ∂₁f)`.
pub fn grad_perp(f: &ScalarField) -> VectorField2 {
    let s = f.spectrum();
    let a = s.derivative(0, 1);
    let b = s.derivative(1, 0);
    let (mut v1, v2) = inverse_real_pair(&a, &b);
    for x in &mut v1 {
        *x = -*x;
    }
    VectorField2::new(ScalarField::new(f.grid(), v1), ScalarField::new(f.grid(), v2))
}

/// `∇f = (∂₁f, ∂₂f)`.
pub fn gradient(f: &ScalarField) -> VectorField2 {
    let s = f.spectrum();
    let a = s.derivative(1, 0);
    let b = s.derivative(0, 1);
    let (g1, g2) = inverse_real_pair(&a, &b);
    let g = f.grid();
    VectorField2::new(ScalarField::with_spectrum(g, g1, a), ScalarField::with_spectrum(g, g2, b))
}

/// Spectrum of `div v`.
pub(crate) fn divergence_spectrum(v: &VectorField2) -> Spectrum {
    v.prime_spectra();
    let mut s = v.u1.spectrum().derivative(1, 0);
    s.axpy(1.0, &v.u2.spectrum().derivative(0, 1));
    s
}

pub fn divergence(v: &VectorField2) -> ScalarField {
    ScalarField::from_spectrum(v.grid(), divergence_spectrum(v))
}

/// Row-wise divergence `(∂₁T₁₁ + ∂₂T₁₂, ∂₁T₁₂ − ∂₂T₁₁)`.
pub fn divergence_tensor(t: &SymTraceFreeTensor2Field) -> VectorField2 {
    ScalarField::prime_pair(&t.t11, &t.t12);
    let a = t.t11.spectrum();
    let b = t.t12.spectrum();
    let mut d1 = a.derivative(1, 0);
    d1.axpy(1.0, &b.derivative(0, 1));
    let mut d2 = b.derivative(1, 0);
    d2.axpy(-1.0, &a.derivative(0, 1));
    let (x, y) = inverse_real_pair(&d1, &d2);
    VectorField2::new(ScalarField::new(t.grid(), x), ScalarField::new(t.grid(), y))
}

/// Row-wise divergence of a general symmetric tensor given by `(S11, S12, S22)`.
pub fn divergence_symmetric(s11: &[f64], s12: &[f64], s22: &[f64], grid: Grid) -> VectorField2 {
    let n = grid.n();
    let (a, b) = forward_real_pair(n, s11, s12);
    let c = forward_real(n, s22);
    let mut d1 = a.derivative(1, 0);
    d1.axpy(1.0, &b.derivative(0, 1));
    let mut d2 = b.derivative(1, 0);
    d2.axpy(1.0, &c.derivative(0, 1));
    let (x, y) = inverse_real_pair(&d1, &d2);
    VectorField2::new(ScalarField::new(grid, x), ScalarField::new(grid, y))
}

/// Estimate of `[f]_{m+α}`; `α = 0` returns `max_{|β|=m} ‖∂^β f‖₀`.
///
/// Pairs are maximized over all grid offsets for `n ≤ 64`. Larger grids
/// combine every offset up to 16 cells at full resolution with all
/// pairs on a 64-point subgrid, which still gives a lower bound.
pub fn holder_seminorm(f: &ScalarField, m: u32, alpha: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("alpha must lie in [0,1), got {alpha}")));
    }
    let mut best: f64 = 0.0;
    for b1 in 0..=m {
        let d = f.derivative(b1, m - b1);
        let q = if alpha == 0.0 { d.sup_norm() } else { pair_quotient_max(&[d.values()], f.grid().n(), alpha) };
        best = best.max(q);
    }
    Ok(best)
}

/// Vector version of [`holder_seminorm`] with Euclidean differences.
pub fn holder_seminorm_vector(v: &VectorField2, m: u32, alpha: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("alpha must lie in [0,1), got {alpha}")));
    }
    let mut best: f64 = 0.0;
    for b1 in 0..=m {
        let d = if m == 0 { v.clone() } else { v.derivative(b1, m - b1) };
        let q = if alpha == 0.0 {
            d.sup_norm()
        } else {
            pair_quotient_max(&[d.u1.values(), d.u2.values()], v.grid().n(), alpha)
        };
        best = best.max(q);
    }
    Ok(best)
}

const HOLDER_FULL_GRID: usize = 64;
const HOLDER_WINDOW: i64 = 16;

fn pair_quotient_max(comps: &[&[f64]], n: usize, alpha: f64) -> f64 {
    let h = 2.0 * PI / n as f64;
    let mut best: f64 = 0.0;
    let mut visit = |d1: i64, d2: i64, stride: usize| {
        let a1 = d1.unsigned_abs().min(n as u64 - d1.unsigned_abs()) as f64;
        let a2 = d2.unsigned_abs().min(n as u64 - d2.unsigned_abs()) as f64;
        let dist = h * (a1 * a1 + a2 * a2).sqrt();
        if dist <= 0.0 || dist > PI + 1e-12 {
            return;
        }
        let s1 = index_of(d1, n);
        let s2 = index_of(d2, n);
        let mut mx: f64 = 0.0;
        let mut i = 0;
        while i < n {
            let ip = (i + s1) % n;
            let mut j = 0;
            while j < n {
                let jp = (j + s2) % n;
                let mut sq = 0.0;
                for c in comps {
                    let d = c[ip * n + jp] - c[i * n + j];
                    sq += d * d;
                }
                mx = mx.max(sq);
                j += stride;
            }
            i += stride;
        }
        best = best.max(mx.sqrt() / dist.powf(alpha));
    };
    if n <= HOLDER_FULL_GRID {
        let half = (n / 2) as i64;
        for d1 in 0..=half {
            for d2 in -half + 1..=half {
                if d1 == 0 && d2 <= 0 {
                    continue;
                }
                visit(d1, d2, 1);
            }
        }
    } else {
        for d1 in 0..=HOLDER_WINDOW {
            for d2 in -HOLDER_WINDOW..=HOLDER_WINDOW {
                if d1 == 0 && d2 <= 0 {
                    continue;
                }
                visit(d1, d2, 1);
            }
        }
        let stride = n / HOLDER_FULL_GRID;
        let half = (HOLDER_FULL_GRID / 2) as i64;
        for e1 in 0..=half {
            for e2 in -half + 1..=half {
                if e1 == 0 && e2 <= 0 {
                    continue;
                }
                visit(e1 * stride as i64, e2 * stride as i64, stride);
            }
        }
    }
    best
}
