//! Modal Gibbs sampling over the latent cure indicators.
//!
//! Each iteration fits the Laplace approximation given the current
//! assignment, then redraws the indicator of every censored subject from its
//! full conditional evaluated at the conditional posterior mode. Kept
//! assignments carry their fits; averaging the fits' marginals with equal
//! weights gives the posterior marginals.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::laplace::{CoefficientMarginal, ConditionalFit, LaplaceConfig, ShapeMarginal};
use crate::marginal::{GridDensity, Marginal, Mixture};
use crate::model::{
    logistic, softplus, Dataset, LatencyFamily, LatentAssignment, ParameterPoint, PriorSpec,
};
use crate::numerics::logaddexp;

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsConfig {
    pub burnin: usize,
    pub keep: usize,
    pub thin: usize,
    pub seed: u64,
    /// Probability that a censored subject starts out cured.
    pub init_cured_prob: f64,
    pub laplace: LaplaceConfig,
    /// Fits are cached by censored pattern; the cache is cleared when full.
    pub cache_capacity: usize,
    /// Consecutive failed fits tolerated before the chain is abandoned.
    pub max_rejects: usize,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            burnin: 50,
            keep: 90,
            thin: 5,
            seed: 1,
            init_cured_prob: 0.5,
            laplace: LaplaceConfig::default(),
            cache_capacity: 4096,
            max_rejects: 10,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.keep < 1 {
            return Err(Error::Config("keep must be at least 1".into()));
        }
        if self.thin < 1 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.init_cured_prob) {
            return Err(Error::Config("initial cure probability must lie in [0, 1]".into()));
        }
        self.laplace.validate()
    }

    pub fn iterations(&self) -> usize {
        self.burnin + self.keep * self.thin
    }
}

/// `P(Z = 0)` for a censored subject given its cure probability and
/// susceptible survival at its censoring time.
pub fn cure_full_conditional(event: bool, eta: f64, su: f64) -> Result<f64> {
    if event {
        return Err(Error::Contract("full conditional requested for a subject with an observed event".into()));
    }
    if !(eta > 0.0 && eta < 1.0) || !(su > 0.0 && su <= 1.0) {
        return Err(Error::Domain(format!("need 0 < eta < 1 and 0 < S_u <= 1, got {eta}, {su}")));
    }
    Ok(log_prob_susceptible(eta.ln(), (-eta).ln_1p(), su.ln()).exp())
}

#[inline]
fn log_prob_susceptible(log_eta: f64, log1m_eta: f64, log_su: f64) -> f64 {
    let num = log1m_eta + log_su;
    num - logaddexp(log_eta, num)
}

/// `P(Z_i = 0 | theta)` for censored subject `i`, computed on the log scale.
/// Shared by the modal Gibbs driver and the reference sampler.
pub(crate) fn prob_susceptible(p: &ParameterPoint, d: &Dataset, i: usize) -> f64 {
    let u = d.x_inc().row(i).dot(&p.beta_inc.transpose());
    let v = d.x_lat().row(i).dot(&p.beta_lat.transpose());
    let log_su = -(p.shape() * d.log_times()[i] + v).exp();
    log_prob_susceptible(-softplus(-u), -softplus(u), log_su).exp()
}

/// Redraw the indicators of censored subjects at parameter `p`.
pub(crate) fn sample_assignment(d: &Dataset, p: &ParameterPoint, rng: &mut impl Rng) -> LatentAssignment {
    let mut cured = vec![false; d.n()];
    for i in d.censored_indices() {
        let p0 = prob_susceptible(p, d, i);
        let u: f64 = rng.random();
        cured[i] = u >= p0;
    }
    LatentAssignment { cured }
}

/// One retained assignment with its conditional fit.
#[derive(Debug, Clone)]
pub struct KeptSample {
    /// 1-based iteration whose fit this is.
    pub iteration: usize,
    pub z: LatentAssignment,
    pub fit: Arc<ConditionalFit>,
    pub marginals: Arc<Vec<CoefficientMarginal>>,
}

#[derive(Debug, Clone)]
pub struct Chain {
    pub kept: Vec<KeptSample>,
    /// Conditional marginal log-likelihood at every accepted iteration.
    pub cml_trace: Vec<f64>,
    /// Posterior probability of cure per subject (mean of kept indicators).
    pub cure_prob: Vec<f64>,
    /// Index into `kept` of the highest-cml assignment (earliest on ties).
    pub most_likely: usize,
    /// Iterations whose fit failed and were redrawn.
    pub rejected: usize,
    pub family: LatencyFamily,
    pub parameter_names: Vec<String>,
}

impl Chain {
    pub fn most_likely_sample(&self) -> &KeptSample {
        &self.kept[self.most_likely]
    }
}

fn fit_with_retries(
    d: &Dataset,
    z: &LatentAssignment,
    spec: &PriorSpec,
    fam: LatencyFamily,
    cfg: &LaplaceConfig,
    previous: Option<&ParameterPoint>,
) -> Result<ConditionalFit> {
    let zero = ParameterPoint::for_dataset(d);
    let mut last_err = None;
    for init in previous.into_iter().chain(std::iter::once(&zero)) {
        match ConditionalFit::fit(d, z, spec, fam, init, cfg) {
            Ok(f) => return Ok(f),
            Err(e) => {
                log::debug!("conditional fit failed: {e}");
                last_err = Some(e);
            }
        }
    }
    Err(last_err.expect("at least one attempt"))
}

pub fn run_chain(d: &Dataset, spec: &PriorSpec, fam: LatencyFamily, cfg: &GibbsConfig) -> Result<Chain> {
    cfg.validate()?;
    spec.validate()?;
    if d.n_censored() == 0 {
        return Err(Error::Data(
            "no censored subjects: the cure fraction is not identified; fit a model without a cure fraction instead"
                .into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let censored = d.censored_indices();
    let initial = |rng: &mut ChaCha8Rng| {
        let mut cured = vec![false; d.n()];
        for &i in &censored {
            let u: f64 = rng.random();
            cured[i] = u < cfg.init_cured_prob;
        }
        LatentAssignment { cured }
    };
    let mut z = initial(&mut rng);

    let total = cfg.iterations();
    let mut cache: HashMap<Vec<bool>, Arc<ConditionalFit>> = HashMap::new();
    let mut last_good: Option<Arc<ConditionalFit>> = None;
    let mut trace = Vec::with_capacity(total);
    let mut kept: Vec<(usize, LatentAssignment, Arc<ConditionalFit>)> = Vec::with_capacity(cfg.keep);
    let mut rejects_in_row = 0;
    let mut rejected = 0;

    while trace.len() < total {
        let key = z.censored_pattern(d);
        let fit = match cache.get(&key) {
            Some(f) => Ok(f.clone()),
            None => fit_with_retries(d, &z, spec, fam, &cfg.laplace, last_good.as_ref().map(|f| &f.mode.point))
                .map(Arc::new),
        };
        let fit = match fit {
            Ok(f) => f,
            Err(e) => {
                rejects_in_row += 1;
                rejected += 1;
                if rejects_in_row > cfg.max_rejects {
                    return Err(Error::Chain(format!(
                        "{rejects_in_row} consecutive conditional fits failed after {} iterations ({} cured of {} censored in the last assignment); last error: {e}",
                        trace.len(),
                        z.n_cured(),
                        censored.len()
                    )));
                }
                z = match &last_good {
                    Some(f) => sample_assignment(d, &f.mode.point, &mut rng),
                    None => initial(&mut rng),
                };
                continue;
            }
        };
        rejects_in_row = 0;
        if cache.len() >= cfg.cache_capacity {
            cache.clear();
        }
        cache.entry(key).or_insert_with(|| fit.clone());

        trace.push(fit.conditional_mloglik());
        let m = trace.len();
        if m % 50 == 0 {
            log::info!("iteration {m}/{total}: cml {:.3}, {} of {} censored cured", trace[m - 1], z.n_cured(), censored.len());
        }
        if m > cfg.burnin && (m - cfg.burnin) % cfg.thin == 0 {
            kept.push((m, z.clone(), fit.clone()));
        }
        let next = sample_assignment(d, &fit.mode.point, &mut rng);
        last_good = Some(fit);
        z = next;
    }

    // marginals of each distinct kept assignment, computed in parallel
    log::info!("computing marginals for the kept assignments");
    let mut distinct: Vec<(Vec<bool>, usize)> = Vec::new();
    for (k, (_, z, _)) in kept.iter().enumerate() {
        let key = z.censored_pattern(d);
        if !distinct.iter().any(|(p, _)| *p == key) {
            distinct.push((key, k));
        }
    }
    let computed: Vec<Arc<Vec<CoefficientMarginal>>> = distinct
        .par_iter()
        .map(|(_, k)| {
            let (_, z, fit) = &kept[*k];
            fit.coefficient_marginals(d, z, spec, cfg.laplace.approximation, &cfg.laplace.newton)
                .map(Arc::new)
        })
        .collect::<Result<_>>()?;
    let kept: Vec<KeptSample> = kept
        .into_iter()
        .map(|(iteration, z, fit)| {
            let key = z.censored_pattern(d);
            let slot = distinct.iter().position(|(p, _)| *p == key).expect("pattern present");
            KeptSample {
                iteration,
                z,
                fit,
                marginals: computed[slot].clone(),
            }
        })
        .collect();

    let mut cure_prob = vec![0.0; d.n()];
    for s in &kept {
        for (i, c) in s.z.as_slice().iter().enumerate() {
            if *c {
                cure_prob[i] += 1.0;
            }
        }
    }
    cure_prob.iter_mut().for_each(|c| *c /= kept.len() as f64);

    let mut most_likely = 0;
    for (k, s) in kept.iter().enumerate() {
        if s.fit.conditional_mloglik() > kept[most_likely].fit.conditional_mloglik() {
            most_likely = k;
        }
    }
    Ok(Chain {
        kept,
        cml_trace: trace,
        cure_prob,
        most_likely,
        rejected,
        family: fam,
        parameter_names: d.parameter_names(),
    })
}

/// Posterior marginals averaged over the kept assignments.
#[derive(Debug, Clone)]
pub struct PosteriorMarginals {
    pub names: Vec<String>,
    pub coefficients: Vec<Mixture<CoefficientMarginal>>,
    pub log_shape: Mixture<GridDensity>,
}

impl PosteriorMarginals {
    pub fn shape(&self) -> ShapeMarginal<Mixture<GridDensity>> {
        ShapeMarginal(self.log_shape.clone())
    }

    pub fn means(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.coefficients.iter().map(|m| m.mean()).collect();
        out.push(self.log_shape.mean());
        out
    }

    pub fn sds(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.coefficients.iter().map(|m| m.sd()).collect();
        out.push(self.log_shape.sd());
        out
    }
}

pub fn average_marginals(chain: &Chain) -> PosteriorMarginals {
    assert!(!chain.kept.is_empty(), "chain has no kept samples");
    let k = chain.kept[0].marginals.len();
    let coefficients = (0..k)
        .map(|j| Mixture::equal(chain.kept.iter().map(|s| s.marginals[j].clone()).collect()))
        .collect();
    let log_shape = Mixture::equal(chain.kept.iter().map(|s| s.fit.marginal_of_log_shape()).collect());
    PosteriorMarginals {
        names: chain.parameter_names.clone(),
        coefficients,
        log_shape,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRule {
    /// Trailing fraction of the trace that is examined.
    pub window_fraction: f64,
    /// Fitted linear drift across the window (slope times length) below
    /// which the trace counts as flat, in nats.
    pub max_drift: f64,
    /// A larger drift is still accepted when the slope is within this many
    /// standard errors of zero.
    pub z: f64,
    pub min_iterations: usize,
}

impl Default for ConvergenceRule {
    fn default() -> Self {
        Self {
            window_fraction: 0.25,
            max_drift: 3.0,
            z: 2.0,
            min_iterations: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub window: usize,
    /// Max minus min within the window.
    pub range: f64,
    /// Least-squares slope, nats per iteration.
    pub slope: f64,
    /// Standard error of the slope, inflated for lag-1 autocorrelation of
    /// the residuals.
    pub slope_se: f64,
}

/// Stability check on the trailing window of a cml trace.
///
/// The cml of a sampled configuration keeps fluctuating once the chain is
/// stationary, so the test is on the trend: the window is stable when its
/// fitted drift is under `max_drift` or statistically indistinguishable
/// from zero.
pub fn converged(trace: &[f64], rule: &ConvergenceRule) -> Result<ConvergenceReport> {
    if trace.len() < rule.min_iterations {
        return Err(Error::Config(format!(
            "convergence check needs at least {} iterations, got {}",
            rule.min_iterations,
            trace.len()
        )));
    }
    let w = ((trace.len() as f64 * rule.window_fraction).ceil() as usize).clamp(3, trace.len());
    let tail = &trace[trace.len() - w..];
    let max = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let xbar = (w - 1) as f64 / 2.0;
    let ybar = tail.iter().sum::<f64>() / w as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, y) in tail.iter().enumerate() {
        let dx = k as f64 - xbar;
        sxy += dx * (y - ybar);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    let resid: Vec<f64> = tail
        .iter()
        .enumerate()
        .map(|(k, y)| y - ybar - slope * (k as f64 - xbar))
        .collect();
    let rss: f64 = resid.iter().map(|r| r * r).sum();
    let lag1 = if rss > 0.0 {
        (resid.windows(2).map(|p| p[0] * p[1]).sum::<f64>() / rss).clamp(0.0, 0.95)
    } else {
        0.0
    };
    let slope_se = (rss / (w - 2) as f64 / sxx * (1.0 + lag1) / (1.0 - lag1)).sqrt();
    let drift = (slope * (w - 1) as f64).abs();
    Ok(ConvergenceReport {
        converged: drift < rule.max_drift || slope.abs() < rule.z * slope_se,
        window: w,
        range: max - min,
        slope,
        slope_se,
    })
}

/// A covariate profile: full design rows, intercepts included.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub name: String,
    pub x_inc: Vec<f64>,
    pub x_lat: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConfig {
    pub draws: usize,
    pub seed: u64,
    /// Sample from every kept assignment instead of only the most likely one.
    pub average_over_kept: bool,
}

impl Default for DerivedConfig {
    fn default() -> Self {
        Self {
            draws: 1000,
            seed: 1,
            average_over_kept: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CureSummary {
    pub profile: String,
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    pub profile: String,
    /// Pointwise posterior mean of the susceptible survival on the time grid.
    pub mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Derived {
    pub times: Vec<f64>,
    pub cure: Vec<CureSummary>,
    pub survival: Vec<SurvivalCurve>,
}

/// Empirical quantile with linear interpolation between order statistics.
pub(crate) fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Cure proportions and susceptible survival curves by sampling the Laplace
/// approximation of the most likely assignment (or of all kept assignments).
pub fn derived_quantities(
    chain: &Chain,
    profiles: &[Profile],
    times: &[f64],
    cfg: &DerivedConfig,
) -> Result<Derived> {
    if cfg.draws < 2 {
        return Err(Error::Config("need at least 2 draws".into()));
    }
    let fit0 = &chain.most_likely_sample().fit;
    let (p_inc, p_lat) = (fit0.p_inc(), fit0.p_lat());
    check_derived_inputs(profiles, times, p_inc, p_lat)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    // Cholesky factors of every grid covariance that may be sampled
    let sources: Vec<&ConditionalFit> = if cfg.average_over_kept {
        chain.kept.iter().map(|s| s.fit.as_ref()).collect()
    } else {
        vec![fit0.as_ref()]
    };
    let factors: Vec<Vec<nalgebra::DMatrix<f64>>> = sources
        .iter()
        .map(|f| {
            f.grid
                .points
                .iter()
                .map(|p| {
                    p.cov
                        .clone()
                        .cholesky()
                        .map(|c| c.l())
                        .ok_or_else(|| Error::Curvature { at: Box::new(f.mode.point.clone()) })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let pickers: Vec<WeightedIndex<f64>> = sources
        .iter()
        .map(|f| WeightedIndex::new(f.grid.weights()).expect("grid weights are positive"))
        .collect();

    let k = p_inc + p_lat;
    let draws: Vec<(DVector<f64>, f64)> = (0..cfg.draws)
        .map(|_| {
            let s = if sources.len() == 1 { 0 } else { rng.random_range(0..sources.len()) };
            let m = pickers[s].sample(&mut rng);
            let pt = &sources[s].grid.points[m];
            let eps = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
            (&pt.mean + &factors[s][m] * eps, pt.log_shape.exp())
        })
        .collect();
    Ok(derived_from_draws(profiles, times, p_inc, &draws))
}

pub(crate) fn check_derived_inputs(profiles: &[Profile], times: &[f64], p_inc: usize, p_lat: usize) -> Result<()> {
    if times.iter().any(|t| !(*t > 0.0 && t.is_finite())) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("time grid must be positive and strictly increasing".into()));
    }
    for pr in profiles {
        if pr.x_inc.len() != p_inc || pr.x_lat.len() != p_lat {
            return Err(Error::Contract(format!("profile `{}` does not match the design widths", pr.name)));
        }
    }
    Ok(())
}

/// Summaries of cure proportions and susceptible survival over posterior
/// draws of `(coefficients, alpha)`.
pub(crate) fn derived_from_draws(
    profiles: &[Profile],
    times: &[f64],
    p_inc: usize,
    draws: &[(DVector<f64>, f64)],
) -> Derived {
    let mut etas = vec![Vec::with_capacity(draws.len()); profiles.len()];
    let mut surv = vec![vec![0.0; times.len()]; profiles.len()];
    let log_times: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    for (beta, alpha) in draws {
        for (q, pr) in profiles.iter().enumerate() {
            let u: f64 = pr.x_inc.iter().enumerate().map(|(j, x)| beta[j] * x).sum();
            let v: f64 = pr.x_lat.iter().enumerate().map(|(j, x)| beta[p_inc + j] * x).sum();
            etas[q].push(logistic(u));
            for (c, lt) in log_times.iter().enumerate() {
                surv[q][c] += (-(alpha * lt + v).exp()).exp();
            }
        }
    }
    let n = draws.len() as f64;
    let cure = profiles
        .iter()
        .zip(etas.iter_mut())
        .map(|(pr, e)| {
            let mean = e.iter().sum::<f64>() / n;
            let sd = (e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            e.sort_by(|a, b| a.total_cmp(b));
            CureSummary {
                profile: pr.name.clone(),
                mean,
                sd,
                ci_low: empirical_quantile(e, 0.025),
                ci_high: empirical_quantile(e, 0.975),
            }
        })
        .collect();
    let survival = profiles
        .iter()
        .zip(surv)
        .map(|(pr, s)| SurvivalCurve {
            profile: pr.name.clone(),
            mean: s.into_iter().map(|v| (v / n).clamp(0.0, 1.0)).collect(),
        })
        .collect();
    Derived {
        times: times.to_vec(),
        cure,
        survival,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::intercept_only(
            vec![0.3, 0.8, 1.1, 1.9, 2.5, 3.0, 4.2, 5.0, 0.6, 1.4],
            vec![true, true, true, true, false, true, false, false, true, false],
        )
        .unwrap()
    }

    fn small_cfg() -> GibbsConfig {
        GibbsConfig {
            burnin: 5,
            keep: 20,
            thin: 2,
            seed: 11,
            ..GibbsConfig::default()
        }
    }

    #[test]
    fn full_conditional_values() {
        assert!((cure_full_conditional(false, 0.25, 0.4).unwrap() - 0.3 / 0.55).abs() < 1e-12);
        assert!((cure_full_conditional(false, 0.3, 1.0).unwrap() - 0.7).abs() < 1e-12);
        assert!(cure_full_conditional(false, 0.3, 1e-300).unwrap() < 1e-299);
        assert!(matches!(cure_full_conditional(true, 0.3, 0.5), Err(Error::Contract(_))));
    }

    #[test]
    fn full_conditional_sampling_frequency() {
        let p0 = cure_full_conditional(false, 0.25, 0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let hits = (0..n).filter(|_| rng.random::<f64>() < p0).count() as f64;
        let sd = (p0 * (1.0 - p0) / n as f64).sqrt();
        assert!((hits / n as f64 - p0).abs() < 3.0 * sd);
    }

    #[test]
    fn chain_shape_and_pinning() {
        let d = toy();
        let cfg = small_cfg();
        let chain = run_chain(&d, &PriorSpec::default(), LatencyFamily::WeibullPh, &cfg).unwrap();
        assert_eq!(chain.cml_trace.len(), cfg.iterations());
        assert_eq!(chain.kept.len(), cfg.keep);
        for s in &chain.kept {
            for i in 0..d.n() {
                if d.events()[i] {
                    assert!(!s.z.is_cured(i));
                }
            }
        }
        let best = chain.most_likely_sample().fit.conditional_mloglik();
        assert!(chain.kept.iter().all(|s| s.fit.conditional_mloglik() <= best));
        for (i, p) in chain.cure_prob.iter().enumerate() {
            assert!((0.0..=1.0).contains(p));
            if d.events()[i] {
                assert_eq!(*p, 0.0);
            }
        }
    }

    #[test]
    fn chain_is_deterministic() {
        let d = toy();
        let a = run_chain(&d, &PriorSpec::default(), LatencyFamily::WeibullAft, &small_cfg()).unwrap();
        let b = run_chain(&d, &PriorSpec::default(), LatencyFamily::WeibullAft, &small_cfg()).unwrap();
        assert_eq!(a.cml_trace, b.cml_trace);
        assert_eq!(
            a.kept.iter().map(|s| s.z.clone()).collect::<Vec<_>>(),
            b.kept.iter().map(|s| s.z.clone()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn pinned_susceptible_keeps_everyone_uncured() {
        // eta pinned near zero: every censored subject is drawn susceptible
        let d = toy();
        let spec = PriorSpec::default().with_override(0, -40.0, 1e-6);
        let chain = run_chain(&d, &spec, LatencyFamily::WeibullPh, &small_cfg()).unwrap();
        assert!(chain.kept.iter().all(|s| s.z.n_cured() == 0));
    }

    #[test]
    fn no_censoring_is_rejected() {
        let d = Dataset::intercept_only(vec![1.0, 2.0], vec![true, true]).unwrap();
        assert!(matches!(
            run_chain(&d, &PriorSpec::default(), LatencyFamily::WeibullPh, &small_cfg()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn single_kept_sample_reduces_to_its_fit() {
        let d = toy();
        let cfg = GibbsConfig { keep: 1, laplace: LaplaceConfig { approximation: crate::laplace::Approximation::Gaussian, ..LaplaceConfig::default() }, ..small_cfg() };
        let chain = run_chain(&d, &PriorSpec::default(), LatencyFamily::WeibullPh, &cfg).unwrap();
        let avg = average_marginals(&chain);
        let fit = &chain.kept[0].fit;
        for j in 0..2 {
            let single = fit.marginal_of(j);
            for x in [-3.0, -1.0, 0.0, 0.7] {
                assert!((avg.coefficients[j].pdf(x) - single.pdf(x)).abs() < 1e-15);
            }
        }
        assert!((avg.log_shape.mean() - fit.marginal_of_log_shape().mean()).abs() < 1e-15);
    }

    #[test]
    fn convergence_rule() {
        let rule = ConvergenceRule::default();
        assert!(converged(&[-10.0; 40], &rule).unwrap().converged);
        let rising: Vec<f64> = (0..40).map(|k| k as f64).collect();
        let r = converged(&rising, &rule).unwrap();
        assert!(!r.converged);
        assert!((r.slope - 1.0).abs() < 1e-12);
        assert!(converged(&[0.0; 10], &rule).is_err());
        // stationary noise of several nats is stable, a noisy ramp is not
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise: Vec<f64> = (0..500).map(|_| 4.0 * rng.random::<f64>()).collect();
        assert!(converged(&noise, &rule).unwrap().converged);
        let ramp: Vec<f64> = noise.iter().enumerate().map(|(k, e)| 0.2 * k as f64 + e).collect();
        assert!(!converged(&ramp, &rule).unwrap().converged);
    }

    #[test]
    fn pinned_incidence_gives_half_cure() {
        let d = toy();
        let spec = PriorSpec::default().with_override(0, 0.0, 1e-12);
        let chain = run_chain(&d, &spec, LatencyFamily::WeibullPh, &small_cfg()).unwrap();
        let prof = Profile { name: "all".into(), x_inc: vec![1.0], x_lat: vec![1.0] };
        let out = derived_quantities(&chain, &[prof], &[0.01, 1.0, 2.0, 4.0], &DerivedConfig::default()).unwrap();
        assert!((out.cure[0].mean - 0.5).abs() < 1e-5);
        assert!(out.cure[0].sd < 1e-5);
        let s = &out.survival[0].mean;
        assert!(s[0] > 0.95 && s.windows(2).all(|w| w[1] <= w[0]));
    }
}
