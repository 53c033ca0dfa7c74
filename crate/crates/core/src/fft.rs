//! Two-dimensional FFT plumbing on square grids.
//!
//! Spectra are kept in transposed layout `[m2][m1]`, which saves one
//! transpose per transform. Forward transforms are normalized by `1/n²`
//! so that `f(x) = Σ_k f̂_k e^{ik·x}`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

static PLANS: OnceLock<Mutex<HashMap<usize, Arc<Fft2>>>> = OnceLock::new();

/// Cached plan for an `n × n` grid.
pub fn plan(n: usize) -> Arc<Fft2> {
    let map = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = map.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Fft2 { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) })
        })
        .clone()
}

impl Fft2 {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Physical `[x1][x2]` to normalized spectrum in `[m2][m1]` layout.
    pub fn forward(&self, data: &mut [Complex64]) {
        let n = self.n;
        debug_assert_eq!(data.len(), n * n);
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fwd.get_inplace_scratch_len()];
        self.fwd.process_with_scratch(data, &mut scratch);
        transpose(data, n);
        self.fwd.process_with_scratch(data, &mut scratch);
        let s = 1.0 / (n * n) as f64;
        for z in data.iter_mut() {
            *z *= s;
        }
    }

    /// Spectrum in `[m2][m1]` layout back to physical `[x1][x2]`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        let n = self.n;
        debug_assert_eq!(data.len(), n * n);
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inv.get_inplace_scratch_len()];
        self.inv.process_with_scratch(data, &mut scratch);
        transpose(data, n);
        self.inv.process_with_scratch(data, &mut scratch);
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    const B: usize = 32;
    let mut bi = 0;
    while bi < n {
        let mut bj = bi;
        while bj < n {
            let imax = (bi + B).min(n);
            let jmax = (bj + B).min(n);
            for i in bi..imax {
                let jstart = if bi == bj { i + 1 } else { bj };
                for j in jstart..jmax {
                    data.swap(i * n + j, j * n + i);
                }
            }
            bj += B;
        }
        bi += B;
    }
}

/// Signed wavenumber of FFT index `m` on an `n`-point axis, in `(-n/2, n/2]`.
#[inline]
pub fn wavenumber(m: usize, n: usize) -> i64 {
    if m <= n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

/// FFT index of signed wavenumber `k`.
#[inline]
pub fn index_of(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_roundtrip() {
        let n = 70;
        let orig: Vec<Complex64> = (0..n * n).map(|i| Complex64::new(i as f64, -(i as f64))).collect();
        let mut d = orig.clone();
        transpose(&mut d, n);
        assert_eq!(d[3 * n + 5], orig[5 * n + 3]);
        transpose(&mut d, n);
        assert_eq!(d, orig);
    }

    #[test]
    fn single_mode_lands_on_its_index() {
        let n = 16;
        let p = plan(n);
        let mut d: Vec<Complex64> = (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                let x1 = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                let x2 = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                Complex64::from_polar(1.0, 3.0 * x1 - 2.0 * x2)
            })
            .collect();
        p.forward(&mut d);
        let m1 = index_of(3, n);
        let m2 = index_of(-2, n);
        assert!((d[m2 * n + m1] - Complex64::new(1.0, 0.0)).norm() < 1e-13);
        let total: f64 = d.iter().map(|z| z.norm()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
