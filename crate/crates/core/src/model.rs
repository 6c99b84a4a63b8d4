//! The mixture cure model: logistic incidence, Weibull latency, priors and the
//! complete-data log-posterior with its analytic gradient and Hessian.
//!
//! Parameter vectors are laid out as `[beta_inc (p1), beta_lat (p2), log_shape]`.
//! The Weibull shape is carried on the log scale so that optimizers and
//! samplers work on an unconstrained space.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Column name used for automatically added intercepts.
pub const INTERCEPT: &str = "(Intercept)";

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Which parametric latency model is used for the susceptible subpopulation.
///
/// Both families share the hazard `alpha * t^(alpha-1) * exp(beta_lat' x_lat)`.
/// Under `WeibullAft` the same survival function is read as the log-time model
/// `log T = -sigma * beta_lat' x_lat + sigma * eps`, with `sigma = 1 / alpha` and
/// `eps` standard minimum-Gumbel, so covariates act on the log-hazard scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LatencyFamily {
    WeibullPh,
    WeibullAft,
}

impl LatencyFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            LatencyFamily::WeibullPh => "weibull-ph",
            LatencyFamily::WeibullAft => "weibull-aft",
        }
    }
}

impl std::str::FromStr for LatencyFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weibull-ph" => Ok(LatencyFamily::WeibullPh),
            "weibull-aft" => Ok(LatencyFamily::WeibullAft),
            other => Err(Error::Config(format!(
                "unknown latency family `{other}` (expected weibull-ph or weibull-aft)"
            ))),
        }
    }
}

/// Observed right-censored survival data with incidence and latency designs.
#[derive(Debug, Clone)]
pub struct Dataset {
    times: Vec<f64>,
    log_times: Vec<f64>,
    events: Vec<bool>,
    x_inc: DMatrix<f64>,
    x_lat: DMatrix<f64>,
    inc_names: Vec<String>,
    lat_names: Vec<String>,
    /// Raw covariate columns as read (before centering), in file order.
    pub(crate) raw_covariates: Vec<(String, Vec<f64>)>,
    /// Sample means subtracted from centered columns.
    pub(crate) centering: Vec<(String, f64)>,
}

impl Dataset {
    pub fn new(
        times: Vec<f64>,
        events: Vec<bool>,
        x_inc: DMatrix<f64>,
        x_lat: DMatrix<f64>,
        inc_names: Vec<String>,
        lat_names: Vec<String>,
    ) -> Result<Self> {
        let n = times.len();
        if events.len() != n {
            return Err(Error::Contract(format!(
                "times/events length mismatch: {} vs {}",
                n,
                events.len()
            )));
        }
        if x_inc.nrows() != n || x_lat.nrows() != n {
            return Err(Error::Contract(format!(
                "design matrices must have {n} rows (incidence {}, latency {})",
                x_inc.nrows(),
                x_lat.nrows()
            )));
        }
        if inc_names.len() != x_inc.ncols() || lat_names.len() != x_lat.ncols() {
            return Err(Error::Contract(
                "column names do not match design matrix widths".into(),
            ));
        }
        if let Some(i) = times.iter().position(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Data(format!(
                "subject {} has non-positive or non-finite time {}",
                i + 1,
                times[i]
            )));
        }
        if x_inc.iter().chain(x_lat.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("design matrices contain non-finite entries".into()));
        }
        for (x, names) in [(&x_inc, &inc_names), (&x_lat, &lat_names)] {
            for (j, name) in names.iter().enumerate() {
                if name == INTERCEPT || n < 2 {
                    continue;
                }
                let col = x.column(j);
                if col.iter().all(|v| *v == col[0]) {
                    log::warn!("covariate `{name}` is constant; only the prior identifies its coefficient");
                }
            }
        }
        Ok(Self {
            log_times: times.iter().map(|t| t.ln()).collect(),
            times,
            events,
            x_inc,
            x_lat,
            inc_names,
            lat_names,
            raw_covariates: Vec::new(),
            centering: Vec::new(),
        })
    }

    /// Intercept-only incidence and latency designs.
    pub fn intercept_only(times: Vec<f64>, events: Vec<bool>) -> Result<Self> {
        let n = times.len();
        Self::new(
            times,
            events,
            DMatrix::from_element(n, 1, 1.0),
            DMatrix::from_element(n, 1, 1.0),
            vec![INTERCEPT.to_string()],
            vec![INTERCEPT.to_string()],
        )
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub(crate) fn log_times(&self) -> &[f64] {
        &self.log_times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn x_inc(&self) -> &DMatrix<f64> {
        &self.x_inc
    }

    pub fn x_lat(&self) -> &DMatrix<f64> {
        &self.x_lat
    }

    pub fn inc_names(&self) -> &[String] {
        &self.inc_names
    }

    pub fn lat_names(&self) -> &[String] {
        &self.lat_names
    }

    pub fn p_inc(&self) -> usize {
        self.x_inc.ncols()
    }

    pub fn p_lat(&self) -> usize {
        self.x_lat.ncols()
    }

    /// Total parameter dimension, coefficients plus log shape.
    pub fn dim(&self) -> usize {
        self.p_inc() + self.p_lat() + 1
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|d| **d).count()
    }

    pub fn n_censored(&self) -> usize {
        self.n() - self.n_events()
    }

    pub fn censored_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.events[i]).collect()
    }

    pub fn centering(&self) -> &[(String, f64)] {
        &self.centering
    }

    pub fn raw_covariates(&self) -> &[(String, Vec<f64>)] {
        &self.raw_covariates
    }

    /// Names of all parameters in vector layout order.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.inc_names.iter().map(|s| format!("inc:{s}")).collect();
        names.extend(self.lat_names.iter().map(|s| format!("lat:{s}")));
        names.push("log_shape".into());
        names
    }

    /// Copy of the dataset with subjects reordered by `perm` (`new[k] = old[perm[k]]`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n() {
            return Err(Error::Contract("permutation length mismatch".into()));
        }
        let x_inc = DMatrix::from_fn(self.n(), self.p_inc(), |r, c| self.x_inc[(perm[r], c)]);
        let x_lat = DMatrix::from_fn(self.n(), self.p_lat(), |r, c| self.x_lat[(perm[r], c)]);
        let mut out = Self::new(
            perm.iter().map(|&i| self.times[i]).collect(),
            perm.iter().map(|&i| self.events[i]).collect(),
            x_inc,
            x_lat,
            self.inc_names.clone(),
            self.lat_names.clone(),
        )?;
        out.raw_covariates = self
            .raw_covariates
            .iter()
            .map(|(name, col)| (name.clone(), perm.iter().map(|&i| col[i]).collect()))
            .collect();
        out.centering = self.centering.clone();
        Ok(out)
    }
}

/// Latent cure indicators; `true` marks a cured subject.
///
/// Subjects with an observed event are always susceptible.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatentAssignment {
    pub(crate) cured: Vec<bool>,
}

impl LatentAssignment {
    pub fn new(d: &Dataset, cured: Vec<bool>) -> Result<Self> {
        let z = Self { cured };
        z.check(d)?;
        Ok(z)
    }

    /// Everyone susceptible.
    pub fn susceptible(d: &Dataset) -> Self {
        Self {
            cured: vec![false; d.n()],
        }
    }

    /// Builds an assignment from one indicator per censored subject, in data order.
    pub fn from_censored(d: &Dataset, pattern: &[bool]) -> Result<Self> {
        let idx = d.censored_indices();
        if pattern.len() != idx.len() {
            return Err(Error::Contract(format!(
                "expected {} censored indicators, got {}",
                idx.len(),
                pattern.len()
            )));
        }
        let mut cured = vec![false; d.n()];
        for (&i, &c) in idx.iter().zip(pattern) {
            cured[i] = c;
        }
        Ok(Self { cured })
    }

    pub fn check(&self, d: &Dataset) -> Result<()> {
        if self.cured.len() != d.n() {
            return Err(Error::Contract(format!(
                "latent assignment has length {}, dataset has {} subjects",
                self.cured.len(),
                d.n()
            )));
        }
        if let Some(i) = (0..d.n()).find(|&i| self.cured[i] && d.events()[i]) {
            return Err(Error::Contract(format!(
                "subject {} has an observed event but is marked cured",
                i + 1
            )));
        }
        Ok(())
    }

    pub fn is_cured(&self, i: usize) -> bool {
        self.cured[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.cured
    }

    pub fn n_cured(&self) -> usize {
        self.cured.iter().filter(|c| **c).count()
    }

    /// The indicators of censored subjects, in data order.
    pub fn censored_pattern(&self, d: &Dataset) -> Vec<bool> {
        d.censored_indices().iter().map(|&i| self.cured[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterPoint {
    pub beta_inc: DVector<f64>,
    pub beta_lat: DVector<f64>,
    pub log_shape: f64,
}

impl ParameterPoint {
    pub fn zeros(p_inc: usize, p_lat: usize) -> Self {
        Self {
            beta_inc: DVector::zeros(p_inc),
            beta_lat: DVector::zeros(p_lat),
            log_shape: 0.0,
        }
    }

    pub fn for_dataset(d: &Dataset) -> Self {
        Self::zeros(d.p_inc(), d.p_lat())
    }

    pub fn new(beta_inc: Vec<f64>, beta_lat: Vec<f64>, log_shape: f64) -> Self {
        Self {
            beta_inc: DVector::from_vec(beta_inc),
            beta_lat: DVector::from_vec(beta_lat),
            log_shape,
        }
    }

    pub fn shape(&self) -> f64 {
        self.log_shape.exp()
    }

    pub fn dim(&self) -> usize {
        self.beta_inc.len() + self.beta_lat.len() + 1
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let (p1, p2) = (self.beta_inc.len(), self.beta_lat.len());
        DVector::from_fn(p1 + p2 + 1, |k, _| {
            if k < p1 {
                self.beta_inc[k]
            } else if k < p1 + p2 {
                self.beta_lat[k - p1]
            } else {
                self.log_shape
            }
        })
    }

    pub fn from_slice(p_inc: usize, p_lat: usize, x: &[f64]) -> Result<Self> {
        if x.len() != p_inc + p_lat + 1 {
            return Err(Error::Contract(format!(
                "parameter vector has length {}, expected {}",
                x.len(),
                p_inc + p_lat + 1
            )));
        }
        Ok(Self {
            beta_inc: DVector::from_column_slice(&x[..p_inc]),
            beta_lat: DVector::from_column_slice(&x[p_inc..p_inc + p_lat]),
            log_shape: x[p_inc + p_lat],
        })
    }

    fn check_dims(&self, d: &Dataset) -> Result<()> {
        if self.beta_inc.len() != d.p_inc() || self.beta_lat.len() != d.p_lat() {
            return Err(Error::Contract(format!(
                "parameter dimensions ({}, {}) do not match dataset ({}, {})",
                self.beta_inc.len(),
                self.beta_lat.len(),
                d.p_inc(),
                d.p_lat()
            )));
        }
        Ok(())
    }
}

/// Independent Normal priors on coefficients and a Gamma(a, b) prior on the
/// Weibull shape.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub coef_variance: f64,
    pub shape_a: f64,
    pub shape_b: f64,
    /// Per-coefficient `(index, mean, variance)` overrides; indices follow the
    /// parameter layout. A tiny variance pins a coefficient.
    pub overrides: Vec<(usize, f64, f64)>,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            coef_variance: 1000.0,
            shape_a: 0.01,
            shape_b: 0.01,
            overrides: Vec::new(),
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.coef_variance) || !ok(self.shape_a) || !ok(self.shape_b) {
            return Err(Error::Config(
                "prior variance and Gamma shape/rate must be positive".into(),
            ));
        }
        if self.overrides.iter().any(|&(_, m, v)| !m.is_finite() || !ok(v)) {
            return Err(Error::Config("prior override needs finite mean and positive variance".into()));
        }
        Ok(())
    }

    pub fn with_override(mut self, index: usize, mean: f64, variance: f64) -> Self {
        self.overrides.retain(|o| o.0 != index);
        self.overrides.push((index, mean, variance));
        self
    }

    /// Prior `(mean, variance)` of coefficient `j` in layout order.
    pub fn coef_prior(&self, j: usize) -> (f64, f64) {
        self.overrides
            .iter()
            .rev()
            .find(|o| o.0 == j)
            .map(|o| (o.1, o.2))
            .unwrap_or((0.0, self.coef_variance))
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function, stable in both tails.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &DVector<f64>, x: &[f64]) -> Result<f64> {
    if a.len() != x.len() {
        return Err(Error::Contract(format!(
            "coefficient length {} does not match covariate length {}",
            a.len(),
            x.len()
        )));
    }
    Ok(a.iter().zip(x).map(|(b, v)| b * v).sum())
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be positive and finite, got {t}")));
    }
    Ok(())
}

/// Cure probability `eta = logistic(beta_inc' x_inc)`.
pub fn incidence_prob(beta_inc: &DVector<f64>, x_inc: &[f64]) -> Result<f64> {
    Ok(logistic(dot(beta_inc, x_inc)?))
}

/// `log S_u(t)` for the susceptible subpopulation; computed without an
/// exp/log round trip.
pub fn latency_log_survival(t: f64, p: &ParameterPoint, x_lat: &[f64], _fam: LatencyFamily) -> Result<f64> {
    check_time(t)?;
    let v = dot(&p.beta_lat, x_lat)?;
    Ok(-(p.shape() * t.ln() + v).exp())
}

pub fn latency_survival(t: f64, p: &ParameterPoint, x_lat: &[f64], fam: LatencyFamily) -> Result<f64> {
    latency_log_survival(t, p, x_lat, fam).map(f64::exp)
}

pub fn latency_hazard(t: f64, p: &ParameterPoint, x_lat: &[f64], _fam: LatencyFamily) -> Result<f64> {
    check_time(t)?;
    let v = dot(&p.beta_lat, x_lat)?;
    let a = p.shape();
    Ok((p.log_shape + (a - 1.0) * t.ln() + v).exp())
}

/// Improper population survival `eta + (1 - eta) S_u(t)`.
pub fn population_survival(
    t: f64,
    p: &ParameterPoint,
    x_inc: &[f64],
    x_lat: &[f64],
    fam: LatencyFamily,
) -> Result<f64> {
    let eta = incidence_prob(&p.beta_inc, x_inc)?;
    let su = latency_survival(t, p, x_lat, fam)?;
    Ok(eta + (1.0 - eta) * su)
}

/// Incidence part of the complete-data log-likelihood.
pub(crate) fn incidence_loglik(beta_inc: &DVector<f64>, d: &Dataset, z: &LatentAssignment) -> f64 {
    let u = d.x_inc() * beta_inc;
    u.iter()
        .enumerate()
        .map(|(i, &ui)| if z.is_cured(i) { ui } else { 0.0 } - softplus(ui))
        .sum()
}

/// Latency part of the complete-data log-likelihood (susceptible subjects only).
pub(crate) fn latency_loglik(beta_lat: &DVector<f64>, log_shape: f64, d: &Dataset, z: &LatentAssignment) -> f64 {
    let v = d.x_lat() * beta_lat;
    let a = log_shape.exp();
    let mut acc = 0.0;
    for i in 0..d.n() {
        if z.is_cured(i) {
            continue;
        }
        let lt = d.log_times()[i];
        if d.events()[i] {
            acc += log_shape + (a - 1.0) * lt + v[i];
        }
        acc -= (a * lt + v[i]).exp();
    }
    acc
}

/// Complete-data log-likelihood given the latent cure indicators.
pub fn complete_loglik(p: &ParameterPoint, d: &Dataset, z: &LatentAssignment) -> Result<f64> {
    p.check_dims(d)?;
    z.check(d)?;
    Ok(incidence_loglik(&p.beta_inc, d, z) + latency_loglik(&p.beta_lat, p.log_shape, d, z))
}

/// Log prior density of the incidence coefficients.
pub(crate) fn log_prior_inc(beta_inc: &DVector<f64>, spec: &PriorSpec) -> f64 {
    beta_inc
        .iter()
        .enumerate()
        .map(|(j, &b)| normal_log_density(b, spec.coef_prior(j)))
        .sum()
}

/// Log prior density of the latency coefficients and the log shape (with the
/// Jacobian of the log transform).
pub(crate) fn log_prior_lat(beta_lat: &DVector<f64>, log_shape: f64, p_inc: usize, spec: &PriorSpec) -> f64 {
    let coefs: f64 = beta_lat
        .iter()
        .enumerate()
        .map(|(j, &b)| normal_log_density(b, spec.coef_prior(p_inc + j)))
        .sum();
    coefs + log_shape_prior(log_shape, spec)
}

fn normal_log_density(x: f64, (mean, var): (f64, f64)) -> f64 {
    -0.5 * (LN_2PI + var.ln()) - 0.5 * (x - mean) * (x - mean) / var
}

/// Gamma(a, b) log density of `alpha = exp(log_shape)` plus the log-Jacobian.
pub(crate) fn log_shape_prior(log_shape: f64, spec: &PriorSpec) -> f64 {
    let (a, b) = (spec.shape_a, spec.shape_b);
    a * b.ln() - ln_gamma(a) + a * log_shape - b * log_shape.exp()
}

pub fn log_prior(p: &ParameterPoint, spec: &PriorSpec) -> f64 {
    log_prior_inc(&p.beta_inc, spec) + log_prior_lat(&p.beta_lat, p.log_shape, p.beta_inc.len(), spec)
}

/// Unnormalized complete-data log posterior.
pub fn log_posterior(p: &ParameterPoint, d: &Dataset, z: &LatentAssignment, spec: &PriorSpec) -> Result<f64> {
    Ok(complete_loglik(p, d, z)? + log_prior(p, spec))
}

/// Analytic gradient and Hessian of the complete-data log posterior with
/// respect to `[beta_inc, beta_lat, log_shape]`.
pub fn loglik_grad_hess(
    p: &ParameterPoint,
    d: &Dataset,
    z: &LatentAssignment,
    spec: &PriorSpec,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    p.check_dims(d)?;
    z.check(d)?;
    Ok(grad_hess_unchecked(p, d, z, spec))
}

pub(crate) fn grad_hess_unchecked(
    p: &ParameterPoint,
    d: &Dataset,
    z: &LatentAssignment,
    spec: &PriorSpec,
) -> (DVector<f64>, DMatrix<f64>) {
    let (p1, p2) = (d.p_inc(), d.p_lat());
    let dim = p1 + p2 + 1;
    let mut g = DVector::zeros(dim);
    let mut h = DMatrix::zeros(dim, dim);
    let (gi, hi) = grad_hess_inc(&p.beta_inc, d, z, spec);
    let (gl, hl) = grad_hess_lat(&p.beta_lat, p.log_shape, d, z, spec);
    g.rows_mut(0, p1).copy_from(&gi);
    g.rows_mut(p1, p2 + 1).copy_from(&gl);
    h.view_mut((0, 0), (p1, p1)).copy_from(&hi);
    h.view_mut((p1, p1), (p2 + 1, p2 + 1)).copy_from(&hl);
    (g, h)
}

/// Gradient and Hessian of the incidence block of the log posterior with
/// respect to `beta_inc`, prior included.
pub(crate) fn grad_hess_inc(
    beta_inc: &DVector<f64>,
    d: &Dataset,
    z: &LatentAssignment,
    spec: &PriorSpec,
) -> (DVector<f64>, DMatrix<f64>) {
    let (n, p1) = (d.n(), d.p_inc());
    let u = d.x_inc() * beta_inc;
    let mut gu = DVector::zeros(n);
    let mut wx = d.x_inc().clone();
    for i in 0..n {
        let s = logistic(u[i]);
        gu[i] = if z.is_cured(i) { 1.0 } else { 0.0 } - s;
        let w = s * (1.0 - s);
        wx.row_mut(i).scale_mut(w);
    }
    let mut g = d.x_inc().tr_mul(&gu);
    let mut h = -d.x_inc().tr_mul(&wx);
    for j in 0..p1 {
        let (m, var) = spec.coef_prior(j);
        g[j] -= (beta_inc[j] - m) / var;
        h[(j, j)] -= 1.0 / var;
    }
    (g, h)
}

/// Gradient and Hessian of the latency block with respect to
/// `[beta_lat, log_shape]`, priors included.
pub(crate) fn grad_hess_lat(
    beta_lat: &DVector<f64>,
    log_shape: f64,
    d: &Dataset,
    z: &LatentAssignment,
    spec: &PriorSpec,
) -> (DVector<f64>, DMatrix<f64>) {
    let (n, p1, p2) = (d.n(), d.p_inc(), d.p_lat());
    let v = d.x_lat() * beta_lat;
    let a = log_shape.exp();
    let mut gv = DVector::zeros(n);
    let mut hvphi = DVector::zeros(n);
    let mut wx = d.x_lat().clone();
    let (mut gphi, mut hphiphi) = (0.0, 0.0);
    for i in 0..n {
        if z.is_cured(i) {
            wx.row_mut(i).fill(0.0);
            continue;
        }
        let del = if d.events()[i] { 1.0 } else { 0.0 };
        let al = a * d.log_times()[i];
        let cumhaz = (al + v[i]).exp();
        gv[i] = del - cumhaz;
        hvphi[i] = -cumhaz * al;
        gphi += del * (1.0 + al) - cumhaz * al;
        hphiphi += del * al - cumhaz * al * (al + 1.0);
        wx.row_mut(i).scale_mut(cumhaz);
    }
    let mut g = DVector::zeros(p2 + 1);
    let mut h = DMatrix::zeros(p2 + 1, p2 + 1);
    g.rows_mut(0, p2).copy_from(&d.x_lat().tr_mul(&gv));
    h.view_mut((0, 0), (p2, p2)).copy_from(&(-d.x_lat().tr_mul(&wx)));
    let cross = d.x_lat().tr_mul(&hvphi);
    for j in 0..p2 {
        h[(j, p2)] = cross[j];
        h[(p2, j)] = cross[j];
    }
    g[p2] = gphi;
    h[(p2, p2)] = hphiphi;
    for j in 0..p2 {
        let (m, var) = spec.coef_prior(p1 + j);
        g[j] -= (beta_lat[j] - m) / var;
        h[(j, j)] -= 1.0 / var;
    }
    let be = spec.shape_b * a;
    g[p2] += spec.shape_a - be;
    h[(p2, p2)] -= be;
    (g, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn point(beta_inc: &[f64], beta_lat: &[f64], alpha: f64) -> ParameterPoint {
        ParameterPoint::new(beta_inc.to_vec(), beta_lat.to_vec(), alpha.ln())
    }

    #[test]
    fn logistic_values() {
        let b = DVector::from_vec(vec![1.0]);
        assert_eq!(incidence_prob(&b, &[0.0]).unwrap(), 0.5);
        // 1 / (1 + e^1.2)
        assert_relative_eq!(incidence_prob(&b, &[-1.2]).unwrap(), 0.231_475_216_500_982_8, epsilon = 1e-12);
        // 1 - 2e-22 is not representable; saturation must not overflow and
        // the complement stays available on the log scale
        let hi = incidence_prob(&b, &[50.0]).unwrap();
        assert!(hi <= 1.0 && 1.0 - hi < 1e-15);
        assert_relative_eq!(-softplus(50.0), -50.0 - (-50f64).exp(), epsilon = 1e-12);
        let lo = incidence_prob(&b, &[-700.0]).unwrap();
        assert!(lo > 0.0 && lo.is_finite());
        assert!(incidence_prob(&b, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn survival_and_hazard_values() {
        let fam = LatencyFamily::WeibullPh;
        let p = point(&[0.0], &[0.0], 1.0);
        assert_relative_eq!(latency_survival(1.0, &p, &[1.0], fam).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
        assert!(latency_survival(1e-12, &p, &[1.0], fam).unwrap() > 1.0 - 1e-11);
        assert_relative_eq!(latency_hazard(7.3, &p, &[1.0], fam).unwrap(), 1.0, epsilon = 1e-14);

        let p = point(&[0.0], &[3f64.ln()], 2.0);
        assert_relative_eq!(latency_survival(0.5, &p, &[1.0], fam).unwrap(), (-0.75f64).exp(), epsilon = 1e-14);
        let p = point(&[0.0], &[0.0], 2.0);
        assert_relative_eq!(latency_hazard(3.0, &p, &[1.0], fam).unwrap(), 6.0, epsilon = 1e-13);

        assert!(matches!(latency_survival(0.0, &p, &[1.0], fam), Err(Error::Domain(_))));
        assert!(matches!(latency_hazard(-1.0, &p, &[1.0], fam), Err(Error::Domain(_))));
    }

    #[test]
    fn hazard_is_minus_derivative_of_log_survival() {
        let fam = LatencyFamily::WeibullPh;
        let p = point(&[0.0], &[0.3], 1.5);
        let t = 2.0;
        let h = 1e-5;
        let fd = -(latency_log_survival(t + h, &p, &[1.0], fam).unwrap()
            - latency_log_survival(t - h, &p, &[1.0], fam).unwrap())
            / (2.0 * h);
        let exact = latency_hazard(t, &p, &[1.0], fam).unwrap();
        assert!(((fd - exact) / exact).abs() < 1e-6);
    }

    #[test]
    fn population_survival_mixes() {
        let fam = LatencyFamily::WeibullAft;
        // eta = 0.3, latency whatever
        let p = point(&[(0.3f64 / 0.7).ln()], &[0.5], 1.3);
        assert_relative_eq!(population_survival(1e6, &p, &[1.0], &[1.0], fam).unwrap(), 0.3, epsilon = 1e-12);
        assert!(population_survival(1e-14, &p, &[1.0], &[1.0], fam).unwrap() > 1.0 - 1e-12);
        // eta = 0.25 and S_u = 0.4
        let su = 0.4f64;
        let alpha = 1.0;
        let p = point(&[(1.0f64 / 3.0).ln()], &[(-su.ln()).ln()], alpha);
        assert_relative_eq!(population_survival(1.0, &p, &[1.0], &[1.0], fam).unwrap(), 0.55, epsilon = 1e-12);
    }

    fn single(time: f64, event: bool) -> Dataset {
        Dataset::intercept_only(vec![time], vec![event]).unwrap()
    }

    #[test]
    fn complete_loglik_single_subjects() {
        let d = single(1.0, true);
        let z = LatentAssignment::susceptible(&d);
        let p = point(&[0.0], &[0.0], 1.0);
        // log 0.5 + log h(1) + log S(1) = log 0.5 + 0 - 1
        assert_relative_eq!(complete_loglik(&p, &d, &z).unwrap(), 0.5f64.ln() - 1.0, epsilon = 1e-14);

        let d = single(3.7, false);
        let z = LatentAssignment::new(&d, vec![true]).unwrap();
        for (lat, a) in [(0.0, 1.0), (2.0, 0.5), (-3.0, 4.0)] {
            let p = point(&[0.0], &[lat], a);
            assert_relative_eq!(complete_loglik(&p, &d, &z).unwrap(), 0.5f64.ln(), epsilon = 1e-14);
        }
    }

    #[test]
    fn cured_event_is_rejected() {
        let d = single(1.0, true);
        assert!(matches!(LatentAssignment::new(&d, vec![true]), Err(Error::Contract(_))));
        let bad = LatentAssignment { cured: vec![true] };
        let p = point(&[0.0], &[0.0], 1.0);
        assert!(complete_loglik(&p, &d, &bad).is_err());
    }

    #[test]
    fn log_prior_values() {
        let spec = PriorSpec::default();
        let p = point(&[0.0, 0.0], &[0.0], 1.0);
        let gamma = 0.01 * 0.01f64.ln() - ln_gamma(0.01) - 0.01;
        let expected = -1.5 * (2.0 * std::f64::consts::PI * 1000.0).ln() + gamma;
        assert_relative_eq!(log_prior(&p, &spec), expected, epsilon = 1e-12);

        let wide = PriorSpec {
            coef_variance: 2000.0,
            ..PriorSpec::default()
        };
        assert_relative_eq!(log_prior(&p, &spec) - log_prior(&p, &wide), 1.5 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn prior_only_gradient_vanishes_at_zero() {
        let d = Dataset::new(
            vec![],
            vec![],
            DMatrix::zeros(0, 2),
            DMatrix::zeros(0, 1),
            vec!["a".into(), "b".into()],
            vec!["c".into()],
        )
        .unwrap();
        let z = LatentAssignment::susceptible(&d);
        let p = point(&[0.0, 0.0], &[0.0], 1.0);
        let (g, _) = loglik_grad_hess(&p, &d, &z, &PriorSpec::default()).unwrap();
        assert!(g.rows(0, 3).iter().all(|v| *v == 0.0));
    }
}
