//! Small numerical helpers shared across the engines.

use nalgebra::{DMatrix, DVector};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log(sum(exp(xs)))`, returning `-inf` for an empty or all `-inf` input.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Stable `log(exp(a) + exp(b))`.
pub fn logaddexp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - 0.5 * LN_2PI).exp()
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Cholesky-based inverse and log-determinant of a symmetric positive-definite matrix.
pub fn spd_inverse_logdet(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let chol = a.clone().cholesky()?;
    let l = chol.l_dirty();
    let mut logdet = 0.0;
    for i in 0..a.nrows() {
        let d = l[(i, i)];
        if !(d.is_finite() && d > 0.0) {
            return None;
        }
        logdet += 2.0 * d.ln();
    }
    Some((chol.inverse(), logdet))
}

pub fn is_positive_definite(a: &DMatrix<f64>) -> bool {
    spd_inverse_logdet(a).is_some()
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Bisection for a monotone non-decreasing function on `[lo, hi]`.
pub fn bisect(mut lo: f64, mut hi: f64, target: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol {
            return mid;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
