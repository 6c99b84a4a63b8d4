//! Univariate posterior marginals: Gaussian mixtures for coefficients, an
//! interpolated grid density for the log shape, and finite mixtures of
//! either.

use crate::numerics::{bisect, gauss_legendre, norm_cdf, norm_pdf};

/// Quantile bisection tolerance.
pub const QUANTILE_TOL: f64 = 1e-10;

pub trait Marginal {
    fn pdf(&self, x: f64) -> f64;
    fn cdf(&self, x: f64) -> f64;
    fn mean(&self) -> f64;
    fn variance(&self) -> f64;
    /// Interval containing essentially all of the mass.
    fn support(&self) -> (f64, f64);
    /// `E[exp(k X)]`.
    fn exp_moment(&self, k: f64) -> f64;

    fn sd(&self) -> f64 {
        self.variance().max(0.0).sqrt()
    }

    fn quantile(&self, p: f64) -> f64 {
        let (lo, hi) = self.support();
        bisect(lo, hi, p, QUANTILE_TOL, |x| self.cdf(x))
    }

    fn prob_positive(&self) -> f64 {
        1.0 - self.cdf(0.0)
    }
}

/// `sum_k w_k N(mu_k, sd_k^2)` with weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl GaussianMixture {
    /// Weights are renormalized; zero-weight components are dropped.
    pub fn new(weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64>) -> Self {
        assert!(weights.len() == means.len() && means.len() == sds.len() && !weights.is_empty());
        let total: f64 = weights.iter().sum();
        let mut out = Self {
            weights: Vec::new(),
            means: Vec::new(),
            sds: Vec::new(),
        };
        for k in 0..weights.len() {
            if weights[k] > 0.0 {
                out.weights.push(weights[k] / total);
                out.means.push(means[k]);
                out.sds.push(sds[k]);
            }
        }
        out
    }

    pub fn single(mean: f64, sd: f64) -> Self {
        Self::new(vec![1.0], vec![mean], vec![sd])
    }

    /// Equal-weight average of mixtures.
    pub fn average(parts: &[GaussianMixture]) -> Self {
        let share = 1.0 / parts.len() as f64;
        let (mut w, mut m, mut s) = (Vec::new(), Vec::new(), Vec::new());
        for part in parts {
            w.extend(part.weights.iter().map(|x| x * share));
            m.extend_from_slice(&part.means);
            s.extend_from_slice(&part.sds);
        }
        Self::new(w, m, s)
    }

    pub fn components(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.weights.len()).map(|k| (self.weights[k], self.means[k], self.sds[k]))
    }
}

impl Marginal for GaussianMixture {
    fn pdf(&self, x: f64) -> f64 {
        self.components().map(|(w, m, s)| w * norm_pdf((x - m) / s) / s).sum()
    }

    fn cdf(&self, x: f64) -> f64 {
        self.components().map(|(w, m, s)| w * norm_cdf((x - m) / s)).sum()
    }

    fn mean(&self) -> f64 {
        self.components().map(|(w, m, _)| w * m).sum()
    }

    fn variance(&self) -> f64 {
        let mu = self.mean();
        self.components().map(|(w, m, s)| w * (s * s + (m - mu) * (m - mu))).sum()
    }

    fn support(&self) -> (f64, f64) {
        let lo = self.components().map(|(_, m, s)| m - 40.0 * s).fold(f64::INFINITY, f64::min);
        let hi = self.components().map(|(_, m, s)| m + 40.0 * s).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    fn exp_moment(&self, k: f64) -> f64 {
        self.components().map(|(w, m, s)| w * (k * m + 0.5 * k * k * s * s).exp()).sum()
    }
}

/// Density on an increasing node grid, log-linearly interpolated between nodes
/// and zero outside. Normalized exactly over the piecewise-exponential form.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    nodes: Vec<f64>,
    log_density: Vec<f64>,
    /// CDF at each node.
    cum: Vec<f64>,
}

const SEGMENT_GL: usize = 16;

impl GridDensity {
    /// `log_values` may be unnormalized.
    pub fn new(nodes: Vec<f64>, log_values: Vec<f64>) -> Self {
        assert!(nodes.len() >= 2 && nodes.len() == log_values.len());
        assert!(nodes.windows(2).all(|w| w[1] > w[0]), "grid nodes must increase");
        let peak = log_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut g = Self {
            nodes,
            log_density: log_values.iter().map(|v| v - peak).collect(),
            cum: Vec::new(),
        };
        let mut cum = vec![0.0];
        for k in 0..g.nodes.len() - 1 {
            let last = *cum.last().unwrap();
            cum.push(last + g.segment_mass(k, g.nodes[k + 1]));
        }
        let total = *cum.last().unwrap();
        let ln_total = total.ln();
        g.log_density.iter_mut().for_each(|v| *v -= ln_total);
        g.cum = cum.into_iter().map(|c| c / total).collect();
        g
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Normalized density values at the nodes.
    pub fn node_density(&self) -> Vec<f64> {
        self.log_density.iter().map(|v| v.exp()).collect()
    }

    /// Slope of the log density on segment `k`.
    fn slope(&self, k: usize) -> f64 {
        (self.log_density[k + 1] - self.log_density[k]) / (self.nodes[k + 1] - self.nodes[k])
    }

    /// Mass of segment `k` from its left node to `x`.
    fn segment_mass(&self, k: usize, x: f64) -> f64 {
        let s = self.slope(k);
        let dx = x - self.nodes[k];
        let fa = self.log_density[k].exp();
        let sdx = s * dx;
        if sdx.abs() < 1e-12 {
            fa * dx
        } else {
            fa * sdx.exp_m1() / s
        }
    }

    fn segment_of(&self, x: f64) -> Option<usize> {
        let last = self.nodes.len() - 1;
        if x < self.nodes[0] || x > self.nodes[last] {
            return None;
        }
        let k = self.nodes.partition_point(|n| *n <= x);
        Some(k.saturating_sub(1).min(last - 1))
    }

    /// `E[g(X)]` by Gauss-Legendre quadrature on each segment.
    pub fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        let (gx, gw) = gauss_legendre(SEGMENT_GL);
        let mut acc = 0.0;
        for k in 0..self.nodes.len() - 1 {
            let (a, b) = (self.nodes[k], self.nodes[k + 1]);
            let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
            for (xi, wi) in gx.iter().zip(&gw) {
                let x = c + h * xi;
                acc += wi * h * self.pdf(x) * g(x);
            }
        }
        acc
    }
}

impl Marginal for GridDensity {
    fn pdf(&self, x: f64) -> f64 {
        match self.segment_of(x) {
            None => 0.0,
            Some(k) => {
                let s = self.slope(k);
                (self.log_density[k] + s * (x - self.nodes[k])).exp()
            }
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= self.nodes[0] {
            return 0.0;
        }
        match self.segment_of(x) {
            None => 1.0,
            Some(k) => (self.cum[k] + self.segment_mass(k, x)).min(1.0),
        }
    }

    fn mean(&self) -> f64 {
        self.expect(|x| x)
    }

    fn variance(&self) -> f64 {
        let m = self.mean();
        self.expect(|x| (x - m) * (x - m))
    }

    fn support(&self) -> (f64, f64) {
        (self.nodes[0], *self.nodes.last().unwrap())
    }

    fn exp_moment(&self, k: f64) -> f64 {
        self.expect(|x| (k * x).exp())
    }
}

/// Finite mixture of marginals. The equal-weight form is the Monte Carlo
/// average of conditional marginals over sampled latent configurations.
#[derive(Debug, Clone)]
pub struct Mixture<M> {
    weights: Vec<f64>,
    parts: Vec<M>,
}

impl<M: Marginal> Mixture<M> {
    pub fn equal(parts: Vec<M>) -> Self {
        assert!(!parts.is_empty());
        let w = 1.0 / parts.len() as f64;
        Self {
            weights: vec![w; parts.len()],
            parts,
        }
    }

    /// Weights are renormalized to sum to one.
    pub fn weighted(weights: Vec<f64>, parts: Vec<M>) -> Self {
        assert!(!parts.is_empty() && weights.len() == parts.len());
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0 && weights.iter().all(|w| *w >= 0.0));
        Self {
            weights: weights.iter().map(|w| w / total).collect(),
            parts,
        }
    }

    pub fn parts(&self) -> &[M] {
        &self.parts
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn avg(&self, f: impl Fn(&M) -> f64) -> f64 {
        self.parts.iter().zip(&self.weights).map(|(m, w)| w * f(m)).sum()
    }
}

impl<M: Marginal> Marginal for Mixture<M> {
    fn pdf(&self, x: f64) -> f64 {
        self.avg(|m| m.pdf(x))
    }

    fn cdf(&self, x: f64) -> f64 {
        self.avg(|m| m.cdf(x))
    }

    fn mean(&self) -> f64 {
        self.avg(|m| m.mean())
    }

    fn variance(&self) -> f64 {
        let mu = self.mean();
        self.avg(|m| m.variance() + (m.mean() - mu).powi(2))
    }

    fn support(&self) -> (f64, f64) {
        let lo = self.parts.iter().map(|m| m.support().0).fold(f64::INFINITY, f64::min);
        let hi = self.parts.iter().map(|m| m.support().1).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    fn exp_moment(&self, k: f64) -> f64 {
        self.avg(|m| m.exp_moment(k))
    }
}

/// Summary of a positive quantity `exp(X)` derived from a marginal of `X`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpSummary {
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn exp_summary<M: Marginal + ?Sized>(m: &M, level: f64) -> ExpSummary {
    let mean = m.exp_moment(1.0);
    let second = m.exp_moment(2.0);
    let tail = 0.5 * (1.0 - level);
    ExpSummary {
        mean,
        sd: (second - mean * mean).max(0.0).sqrt(),
        ci_low: m.quantile(tail).exp(),
        ci_high: m.quantile(1.0 - tail).exp(),
    }
}
