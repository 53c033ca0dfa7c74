use std::f64::consts::PI;

use convint_core::blocks::{anti_divergence, gamma_coefficients, pair_pressure, stationary_flow, DirectionFamily};
use convint_core::config::RunConfig;
use convint_core::evolution::{TimeGrid, TransportDiffusion, TransportOptions, VelocityNode, Forcing};
use convint_core::fields::{divergence_symmetric, divergence_tensor, gradient, Grid, ScalarField, SymTraceFreeTensor2Field, VectorField2};
use convint_core::io::{decode_slice, encode_slice};
use convint_core::scheme::{EnergyGap, EnergyProfile, Mode, ParamSchedule, StateSlice};
use convint_core::stage::build_partition;
use convint_core::util::{cumulative_simpson, fd4_weights, loglog_slope};
use convint_core::Complex64;
use proptest::prelude::*;

fn modes() -> impl Strategy<Value = Vec<(i64, i64, f64, f64)>> {
    prop::collection::vec((-6i64..=6, -6i64..=6, -1.0f64..1.0, 0.0f64..(2.0 * PI)), 1..6)
}

fn field(g: Grid, m: &[(i64, i64, f64, f64)]) -> ScalarField {
    ScalarField::from_fn(g, |x, y| m.iter().map(|&(a, b, c, p)| c * (a as f64 * x + b as f64 * y + p).cos()).sum())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn anti_divergence_is_a_right_inverse(m1 in modes(), m2 in modes()) {
        let g = Grid::new(32).unwrap();
        let v = VectorField2::new(field(g, &m1), field(g, &m2));
        let r = anti_divergence(&v);
        let [a, b] = v.mean();
        let target = VectorField2::new(v.u1.map(|x| x - a), v.u2.map(|x| x - b));
        let scale = 1.0 + v.sup_norm();
        prop_assert!(divergence_tensor(&r).sub(&target).sup_norm() <= 1e-12 * scale);
        prop_assert!(r.max_trace() <= 1e-14);
        prop_assert!(r.mean().iter().all(|x| x.abs() <= 1e-13 * scale));
    }

    #[test]
    fn geometric_lemma_reconstructs_near_identity(
        fam in 0usize..2, d in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), rad in 0.0f64..0.15
    ) {
        let f = DirectionFamily::new(fam).unwrap();
        let n = (d.0 * d.0 + 2.0 * d.1 * d.1 + d.2 * d.2).sqrt().max(1e-12);
        let s = rad / n;
        let r = [[1.0 + s * d.0, s * d.1], [s * d.1, 1.0 + s * d.2]];
        let c = gamma_coefficients(r, &f).unwrap();
        prop_assert!(c.gamma_sq.iter().all(|&x| x > 0.0));
        let back = c.reconstruct();
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((back[i][j] - r[i][j]).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn stationary_flow_identity(fam in 0usize..2, lam in prop::sample::select(vec![5.0, 10.0]), coeffs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3)) {
        let f = DirectionFamily::new(fam).unwrap();
        let g = Grid::new(48).unwrap();
        let mut set = Vec::new();
        for (k, (re, im)) in f.plus_set().iter().zip(&coeffs) {
            let a = Complex64::new(*re, *im);
            set.push((*k, a));
            set.push(([-k[0], -k[1]], a.conj()));
        }
        let (w, psi) = stationary_flow(&set, &f, lam, g).unwrap();
        let (a, b) = (w.u1.values(), w.u2.values());
        let s11: Vec<f64> = a.iter().map(|x| x * x).collect();
        let s12: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
        let s22: Vec<f64> = b.iter().map(|y| y * y).collect();
        let lhs = divergence_symmetric(&s11, &s12, &s22, g);
        let pot = ScalarField::new(g, (0..g.len()).map(|i| 0.5 * (a[i] * a[i] + b[i] * b[i] + psi.values()[i].powi(2))).collect());
        let w2 = w.sup_norm().powi(2).max(1e-300);
        prop_assert!(lhs.sub(&gradient(&pot)).sup_norm() <= 1e-11 * w2);
    }

    #[test]
    fn partition_squares_sum_to_one(mu in 1usize..40, t in 0.0f64..=1.0) {
        let p = build_partition(mu).unwrap();
        let s: f64 = p.charts().map(|l| p.chi(l, t).powi(2)).sum();
        prop_assert!((s - 1.0).abs() <= 1e-12);
        prop_assert!(p.active(t).len() <= 2);
    }

    #[test]
    fn pair_pressure_range(i in 0usize..6, j in 0usize..6, fam in 0usize..2) {
        let set = DirectionFamily::new(fam).unwrap().full_set();
        let c = pair_pressure(set[i], set[j]).unwrap();
        prop_assert!((-2.0 - 1e-15..=1e-15).contains(&c));
        prop_assert_eq!(c.abs() < 1e-15, i == j);
    }

    #[test]
    fn dump_round_trip(vals in prop::collection::vec(-1e3f64..1e3, 6 * 64), q in 0usize..5, t in 0.0f64..1.0) {
        let g = Grid::new(8).unwrap();
        let f = |c: usize| ScalarField::new(g, vals[c * 64..(c + 1) * 64].to_vec());
        let s = StateSlice {
            t,
            v: VectorField2::new(f(0), f(1)),
            p: f(2),
            theta: f(3),
            r: SymTraceFreeTensor2Field::new(f(4), f(5)),
        };
        let (q2, back) = decode_slice(&encode_slice(q, &s)).unwrap();
        prop_assert_eq!(q2, q);
        prop_assert_eq!(back.t, t);
        prop_assert_eq!(back.theta.values(), s.theta.values());
        prop_assert_eq!(back.r.t11.values(), s.r.t11.values());
    }

    #[test]
    fn config_text_round_trip(a in 2.0f64..10.0, n_half in 4usize..300, n_t in 5usize..600, c1 in -0.5f64..0.5) {
        let text = format!("a = {a}\nN = {}\nn_t = {n_t}\nenergy_coeffs = 10, {c1}\n", 2 * n_half);
        let c = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn exact_energy_has_zero_gap(c1 in -0.5f64..0.5, delta in 0.01f64..0.5) {
        let e = EnergyProfile::new(vec![2.0, c1]).unwrap();
        let times = TimeGrid::new(33).unwrap().times();
        let en: Vec<f64> = times.iter().map(|&t| e.eval(t) * (1.0 - delta)).collect();
        let gap = EnergyGap::from_energies(&times, &en, &e, delta);
        prop_assert!(gap.max_normalized <= 1e-14);
        prop_assert!(gap.admissible());
    }

    #[test]
    fn strict_schedule_is_monotone(a in 3.0f64..1e4, gamma in 0.1f64..0.45) {
        let s = ParamSchedule::new(a, gamma, Mode::Strict).unwrap();
        for q in 0..3 {
            prop_assert!(s.ln_delta(q + 1) < s.ln_delta(q));
            prop_assert!(s.ln_lambda(q + 1) > s.ln_lambda(q));
        }
    }

    #[test]
    fn power_laws_have_their_slope(p in -4.0f64..2.0, c in 0.1f64..10.0) {
        let xs = [8.0, 16.0, 32.0, 64.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| c * x.powf(p)).collect();
        prop_assert!((loglog_slope(&xs, &ys) - p).abs() <= 1e-12);
    }

    #[test]
    fn quadrature_and_differences_are_exact_on_low_degree(c in prop::collection::vec(-2.0f64..2.0, 4), n in 5usize..40) {
        let h = 1.0 / (n - 1) as f64;
        let poly = |t: f64| c[0] + c[1] * t + c[2] * t * t + c[3] * t * t * t;
        let dpoly = |t: f64| c[1] + 2.0 * c[2] * t + 3.0 * c[3] * t * t;
        let ipoly = |t: f64| c[0] * t + c[1] * t * t / 2.0 + c[2] * t.powi(3) / 3.0 + c[3] * t.powi(4) / 4.0;
        let ys: Vec<f64> = (0..n).map(|i| poly(i as f64 * h)).collect();
        let cum = cumulative_simpson(&ys, h);
        for (i, v) in cum.iter().enumerate().skip(2) {
            prop_assert!((v - ipoly(i as f64 * h)).abs() <= 1e-12);
        }
        for j in 0..n {
            let (s, w) = fd4_weights(j, n, h);
            let d: f64 = (0..5).map(|k| w[k] * ys[s + k]).sum();
            prop_assert!((d - dpoly(j as f64 * h)).abs() <= 1e-9);
        }
    }

    #[test]
    fn transport_keeps_the_mean(m in modes(), shear in -1.0f64..1.0, mean in -1.0f64..1.0) {
        let g = Grid::new(32).unwrap();
        let theta0 = field(g, &m).map(|x| x + mean);
        let v = VectorField2::new(ScalarField::from_fn(g, |_, y| shear * y.sin()), ScalarField::zeros(g));
        let mut s = TransportDiffusion::new(&theta0, 0.0, TransportOptions::default());
        s.advance(0.25, &[VelocityNode::new(0.0, &v), VelocityNode::new(0.25, &v)], &Forcing::None).unwrap();
        prop_assert!((s.theta().mean() - theta0.mean()).abs() <= 1e-13);
        prop_assert!(s.theta().l2_norm() <= theta0.l2_norm() + 1e-12);
    }
}
