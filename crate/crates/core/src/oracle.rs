//! Exact posterior on tiny instances by enumerating every cure configuration
//! of the censored subjects and integrating parameters with tensor trapezoid
//! quadrature.
//!
//! Given `z` the posterior factorizes into an incidence block and a latency
//! block (coefficients plus log shape), so `pi(D, z)` is the product of two
//! lower-dimensional integrals. Each block grid is centered at the
//! conditional mode and spans at least a fixed number of Laplace standard
//! deviations in every direction, further where the density has heavy tails.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::laplace::find_mode;
use crate::marginal::{GridDensity, Mixture};
use crate::model::{
    incidence_loglik, latency_loglik, log_prior_inc, log_prior_lat, Dataset, LatencyFamily, LatentAssignment,
    ParameterPoint, PriorSpec,
};
use crate::numerics::{logsumexp, spd_inverse_logdet};
use crate::optim::NewtonConfig;

pub const MAX_CENSORED: usize = 12;
pub const MAX_DIM: usize = 4;
/// Boundary mass above this triggers an accuracy warning.
pub const CLIP_WARN: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Points per dimension.
    pub points: usize,
    /// Half-width of each axis in conditional Laplace standard deviations.
    pub span_sd: f64,
    /// Translation of every axis as a fraction of its step.
    pub offset: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            points: 161,
            span_sd: 8.0,
            offset: 0.0,
        }
    }
}

/// Posterior quantities conditional on one configuration.
#[derive(Debug, Clone)]
pub struct ConfigPosterior {
    /// Cure indicators of the censored subjects, in subject order.
    pub pattern: Vec<bool>,
    /// `log pi(D, z)`.
    pub log_joint: f64,
    /// `pi(z | D)`.
    pub prob: f64,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub marginals: Vec<GridDensity>,
    /// Fraction of the integral carried by the outermost grid layer.
    pub boundary_mass: f64,
}

impl ConfigPosterior {
    /// `log pi(D | z)`, i.e. the joint with the implicit prior on `z` removed.
    pub fn log_evidence_given_z(&self) -> f64 {
        self.log_joint
    }
}

#[derive(Debug, Clone)]
pub struct OraclePosterior {
    pub configs: Vec<ConfigPosterior>,
    /// `log pi(D)` summed over configurations.
    pub log_evidence: f64,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub boundary_mass: f64,
}

impl OraclePosterior {
    pub fn config(&self, pattern: &[bool]) -> Option<&ConfigPosterior> {
        self.configs.iter().find(|c| c.pattern == pattern)
    }

    /// Full marginal of parameter `j` (layout order, log shape last).
    pub fn marginal(&self, j: usize) -> Mixture<GridDensity> {
        let keep: Vec<&ConfigPosterior> = self.configs.iter().filter(|c| c.prob > 0.0).collect();
        Mixture::weighted(
            keep.iter().map(|c| c.prob).collect(),
            keep.iter().map(|c| c.marginals[j].clone()).collect(),
        )
    }
}

struct BlockIntegral {
    log_integral: f64,
    means: Vec<f64>,
    variances: Vec<f64>,
    marginals: Vec<GridDensity>,
    boundary_mass: f64,
}

/// Largest grid step in conditional Laplace standard deviations.
const MAX_STEP_SD: f64 = 0.25;
/// Largest change of the log density between neighbouring grid points where
/// the density is not negligible.
const MAX_STEP_LOG: f64 = 0.1;

/// Largest slope of the log density along axis `j` over the non-negligible
/// region, estimated on a fine probe grid.
fn axis_steepness(center: &[f64], j: usize, lo: f64, hi: f64, reference: f64, log_f: &impl Fn(&[f64]) -> f64) -> f64 {
    const PROBES: usize = 4000;
    let mut x = center.to_vec();
    let h = (hi - lo) / PROBES as f64;
    let mut prev = f64::NAN;
    let mut steepest: f64 = 1e-12;
    for i in 0..=PROBES {
        x[j] = lo + i as f64 * h;
        let v = log_f(&x);
        if i > 0 && v.max(prev) > reference - 25.0 {
            steepest = steepest.max((v - prev).abs() / h);
        }
        prev = v;
    }
    steepest
}

/// Log-density drop below the mode that an axis must reach on each side.
const TAIL_DROP: f64 = 36.0;

/// End point of axis `j` in direction `step`: at least `span` steps from the
/// center, extended until the log density along the axis has fallen
/// `TAIL_DROP` below the reference. Heavy tails (such as a flat likelihood
/// under a vague prior) would otherwise be clipped.
fn axis_reach(
    center: &[f64],
    j: usize,
    step: f64,
    span: f64,
    reference: f64,
    log_f: &impl Fn(&[f64]) -> f64,
) -> f64 {
    let mut x = center.to_vec();
    let mut reach = span;
    for _ in 0..200 {
        x[j] = center[j] + reach * step;
        let v = log_f(&x);
        if !v.is_finite() || v < reference - TAIL_DROP {
            break;
        }
        reach *= 1.25;
    }
    center[j] + reach * step
}

/// Trapezoid integral of `exp(log_f)` over a box grid around `center`.
///
/// `reference` must be at least roughly the maximum of `log_f` (the block
/// mode value), so that a single pass with scaled exponentials is safe.
fn integrate_block(
    center: &[f64],
    sds: &[f64],
    q: &QuadratureSpec,
    reference: f64,
    log_f: impl Fn(&[f64]) -> f64,
) -> BlockIntegral {
    let k = center.len();
    let axes: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let lo = axis_reach(center, j, -sds[j], q.span_sd, reference, &log_f);
            let hi = axis_reach(center, j, sds[j], q.span_sd, reference, &log_f);
            // keep the spacing fine relative to the curvature at the mode and
            // to the steepest descent of the log density along the axis
            let h_needed = (sds[j] * MAX_STEP_SD).min(MAX_STEP_LOG / axis_steepness(center, j, lo, hi, reference, &log_f));
            let needed = ((hi - lo) / h_needed).ceil() as usize + 1;
            let widen = match k {
                1 => 50,
                2 => 4,
                _ => 1,
            };
            let p = needed.clamp(q.points, widen * q.points);
            let h = (hi - lo) / (p - 1) as f64;
            (0..p).map(|i| lo + (i as f64 + q.offset) * h).collect()
        })
        .collect();
    let lens: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    let steps: Vec<f64> = (0..k).map(|j| axes[j][1] - axes[j][0]).collect();
    let tw = |j: usize, i: usize| if i == 0 || i == lens[j] - 1 { 0.5 * steps[j] } else { steps[j] };

    let mut total = 0.0;
    let mut boundary = 0.0;
    let mut first = vec![0.0; k];
    let mut second = vec![0.0; k];
    let mut marg: Vec<Vec<f64>> = lens.iter().map(|&p| vec![0.0; p]).collect();
    let mut idx = vec![0usize; k];
    let mut x = vec![0.0; k];
    loop {
        let mut w = 1.0;
        let mut edge = false;
        for j in 0..k {
            x[j] = axes[j][idx[j]];
            w *= tw(j, idx[j]);
            edge |= idx[j] == 0 || idx[j] == lens[j] - 1;
        }
        let f = (log_f(&x) - reference).exp();
        let wf = w * f;
        total += wf;
        if edge {
            boundary += wf;
        }
        for j in 0..k {
            first[j] += wf * x[j];
            second[j] += wf * x[j] * x[j];
            marg[j][idx[j]] += wf / tw(j, idx[j]);
        }
        // odometer increment
        let mut j = 0;
        while j < k {
            idx[j] += 1;
            if idx[j] < lens[j] {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == k {
            break;
        }
    }
    let means: Vec<f64> = first.iter().map(|s| s / total).collect();
    let variances = (0..k).map(|j| (second[j] / total - means[j] * means[j]).max(0.0)).collect();
    let marginals = (0..k)
        .map(|j| {
            let logs = marg[j].iter().map(|v| (v / total).max(1e-300).ln()).collect();
            GridDensity::new(axes[j].clone(), logs)
        })
        .collect();
    BlockIntegral {
        log_integral: reference + total.ln(),
        means,
        variances,
        marginals,
        boundary_mass: boundary / total,
    }
}

fn posterior_given(
    d: &Dataset,
    spec: &PriorSpec,
    fam: LatencyFamily,
    pattern: Vec<bool>,
    q: &QuadratureSpec,
) -> Result<ConfigPosterior> {
    let z = LatentAssignment::from_censored(d, &pattern)?;
    let (p_inc, p_lat) = (d.p_inc(), d.p_lat());
    let mode = find_mode(d, &z, spec, fam, &ParameterPoint::for_dataset(d), &NewtonConfig::default())?;
    let (cov, _) = spd_inverse_logdet(&mode.neg_hessian).ok_or_else(|| Error::Curvature {
        at: Box::new(mode.point.clone()),
    })?;
    let theta = mode.point.to_vector();
    let sd = |j: usize| cov[(j, j)].sqrt();

    let inc_center: Vec<f64> = (0..p_inc).map(|j| theta[j]).collect();
    let inc_sd: Vec<f64> = (0..p_inc).map(sd).collect();
    let inc_f = |b: &[f64]| {
        let b = DVector::from_column_slice(b);
        incidence_loglik(&b, d, &z) + log_prior_inc(&b, spec)
    };
    let inc_ref = inc_f(&inc_center);
    let inc = integrate_block(&inc_center, &inc_sd, q, inc_ref, inc_f);

    let lat_center: Vec<f64> = (p_inc..=p_inc + p_lat).map(|j| theta[j]).collect();
    let lat_sd: Vec<f64> = (p_inc..=p_inc + p_lat).map(sd).collect();
    let lat_f = |x: &[f64]| {
        let b = DVector::from_column_slice(&x[..p_lat]);
        latency_loglik(&b, x[p_lat], d, &z) + log_prior_lat(&b, x[p_lat], p_inc, spec)
    };
    let lat_ref = lat_f(&lat_center);
    let lat = integrate_block(&lat_center, &lat_sd, q, lat_ref, lat_f);

    let mut means = inc.means;
    means.extend(lat.means);
    let mut variances = inc.variances;
    variances.extend(lat.variances);
    let mut marginals = inc.marginals;
    marginals.extend(lat.marginals);
    Ok(ConfigPosterior {
        pattern,
        log_joint: inc.log_integral + lat.log_integral,
        prob: 0.0,
        means,
        variances,
        marginals,
        boundary_mass: inc.boundary_mass.max(lat.boundary_mass),
    })
}

/// Exact posterior by enumeration of all `2^n_cen` configurations.
pub fn enumerate_posterior(
    d: &Dataset,
    spec: &PriorSpec,
    fam: LatencyFamily,
    q: &QuadratureSpec,
) -> Result<OraclePosterior> {
    spec.validate()?;
    let n_cen = d.n_censored();
    if n_cen > MAX_CENSORED {
        return Err(Error::Refused(format!(
            "{n_cen} censored subjects; enumeration is limited to {MAX_CENSORED}"
        )));
    }
    if d.dim() > MAX_DIM {
        return Err(Error::Refused(format!(
            "{} parameters; tensor quadrature is limited to {MAX_DIM}",
            d.dim()
        )));
    }
    if q.points < 3 || !(q.span_sd > 0.0) {
        return Err(Error::Config("quadrature needs at least 3 points and a positive span".into()));
    }
    let patterns: Vec<Vec<bool>> = (0..1usize << n_cen)
        .map(|k| (0..n_cen).map(|b| k >> b & 1 == 1).collect())
        .collect();
    let mut configs = patterns
        .into_par_iter()
        .map(|pattern| posterior_given(d, spec, fam, pattern, q))
        .collect::<Result<Vec<_>>>()?;

    let logs: Vec<f64> = configs.iter().map(|c| c.log_joint).collect();
    let log_evidence = logsumexp(&logs);
    for c in &mut configs {
        c.prob = (c.log_joint - log_evidence).exp();
    }
    let dim = d.dim();
    let mut means = vec![0.0; dim];
    let mut second = vec![0.0; dim];
    for c in &configs {
        for j in 0..dim {
            means[j] += c.prob * c.means[j];
            second[j] += c.prob * (c.variances[j] + c.means[j] * c.means[j]);
        }
    }
    let sds = (0..dim).map(|j| (second[j] - means[j] * means[j]).max(0.0).sqrt()).collect();
    let boundary_mass = configs
        .iter()
        .filter(|c| c.prob > 1e-12)
        .map(|c| c.boundary_mass)
        .fold(0.0, f64::max);
    if boundary_mass > CLIP_WARN {
        log::warn!("quadrature grid clips an estimated {boundary_mass:.2e} of the posterior mass; widen the span");
    }
    Ok(OraclePosterior {
        configs,
        log_evidence,
        means,
        sds,
        boundary_mass,
    })
}
