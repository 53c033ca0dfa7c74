//! Small numerical helpers shared across modules.

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Lagrange weights for evaluating at `t` from nodes `ts`.
pub fn lagrange_weights(ts: &[f64], t: f64) -> Vec<f64> {
    let mut w = vec![1.0; ts.len()];
    for (i, wi) in w.iter_mut().enumerate() {
        for (j, tj) in ts.iter().enumerate() {
            if i != j {
                *wi *= (t - tj) / (ts[i] - tj);
            }
        }
    }
    w
}

/// Weights of the fourth-order first-derivative stencil at node `j`
/// of a uniform grid with `n` nodes and spacing `h`: returns the first
/// stencil node and five weights.
pub fn fd4_weights(j: usize, n: usize, h: f64) -> (usize, [f64; 5]) {
    assert!(n >= 5, "fourth-order differences need at least five samples");
    let s = 1.0 / (12.0 * h);
    let c = |w: [f64; 5]| [w[0] * s, w[1] * s, w[2] * s, w[3] * s, w[4] * s];
    match j {
        0 => (0, c([-25.0, 48.0, -36.0, 16.0, -3.0])),
        1 => (0, c([-3.0, -10.0, 18.0, -6.0, 1.0])),
        _ if j == n - 2 => (n - 5, c([-1.0, 6.0, -18.0, 10.0, 3.0])),
        _ if j == n - 1 => (n - 5, c([3.0, -16.0, 36.0, -48.0, 25.0])),
        _ => (j - 2, c([1.0, -8.0, 0.0, 8.0, -1.0])),
    }
}

/// Cumulative integral of uniformly sampled data: composite Simpson on
/// even nodes, Simpson plus a closing 3/8 panel on odd nodes.
pub fn cumulative_simpson(ys: &[f64], h: f64) -> Vec<f64> {
    let n = ys.len();
    let mut out = vec![0.0; n];
    let simpson = |a: usize, b: usize| -> f64 {
        let mut s = 0.0;
        let mut i = a;
        while i + 2 <= b {
            s += h / 3.0 * (ys[i] + 4.0 * ys[i + 1] + ys[i + 2]);
            i += 2;
        }
        s
    };
    let mut even_acc = vec![0.0; n];
    let mut i = 2;
    while i < n {
        even_acc[i] = even_acc[i - 2] + simpson(i - 2, i);
        i += 2;
    }
    for j in 1..n {
        out[j] = if j % 2 == 0 {
            even_acc[j]
        } else if j == 1 {
            if n >= 3 {
                // quadratic through the first three samples
                h / 12.0 * (5.0 * ys[0] + 8.0 * ys[1] - ys[2])
            } else {
                0.5 * h * (ys[0] + ys[1])
            }
        } else {
            let k = j - 3;
            even_acc[k] + 3.0 * h / 8.0 * (ys[k] + 3.0 * ys[k + 1] + 3.0 * ys[k + 2] + ys[k + 3])
        };
    }
    out
}
