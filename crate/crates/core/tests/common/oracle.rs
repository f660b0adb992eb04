//! Independent reference computations used by the integration tests.

use nalgebra::{DMatrix, DVector};

fn check_loss(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Minimum total check loss over every coefficient vector that interpolates
/// p + 1 sample points. Some QR solution is always of this form.
pub fn qr_enumeration_min(z: &DMatrix<f64>, y: &[f64], tau: f64) -> f64 {
    let n = y.len();
    let m = z.ncols() + 1;
    let row = |i: usize| -> Vec<f64> {
        std::iter::once(1.0)
            .chain(z.row(i).iter().copied())
            .collect()
    };
    let mut best = f64::INFINITY;
    for subset in combinations(n, m) {
        let a = DMatrix::from_fn(m, m, |r, c| row(subset[r])[c]);
        if a.determinant().abs() < 1e-10 {
            continue;
        }
        let b = DVector::from_iterator(m, subset.iter().map(|&i| y[i]));
        let Some(beta) = a.lu().solve(&b) else {
            continue;
        };
        let loss: f64 = (0..n)
            .map(|i| {
                let pred: f64 = row(i).iter().zip(beta.iter()).map(|(x, b)| x * b).sum();
                check_loss(y[i] - pred, tau)
            })
            .sum();
        best = best.min(loss);
    }
    best
}

/// Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov distribution p-value for statistic d at size n.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = 2.0 * (-1f64).powf(j - 1.0) * (-2.0 * j * j * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Φ by Simpson quadrature of the density, independent of any library CDF.
pub fn normal_cdf_quadrature(x: f64) -> f64 {
    let lo = -12.0;
    if x <= lo {
        return 0.0;
    }
    let steps = 20_000;
    let h = (x - lo) / steps as f64;
    let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = f(lo) + f(x);
    for i in 1..steps {
        let t = lo + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(t);
    }
    acc * h / 3.0
}
