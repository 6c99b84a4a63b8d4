//! Laplace approximation of the posterior conditional on a latent cure
//! assignment.
//!
//! Given `z`, the joint mode over `[beta_inc, beta_lat, log_shape]` is found by
//! Newton iteration. The log shape is then integrated on an equally spaced
//! grid: at each grid value the coefficient block is profiled out and
//! approximated by a Gaussian, whose normalizing constant gives the Laplace
//! estimate of `pi(log_shape, D | z)`. Coefficient marginals are mixtures of
//! the per-point Gaussians, and the trapezoid sum of the grid masses estimates
//! the conditional marginal log-likelihood `log pi(D | z)`.
//!
//! Given `z` the posterior splits into an incidence block and a latency block
//! that share no parameters. The `Laplace` approximation level uses this: in
//! each block one coefficient is integrated numerically along a grid while the
//! others are profiled out with a curvature correction. This removes most of
//! the skewness error of the Gaussian level on small samples.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::marginal::{GaussianMixture, GridDensity, Marginal, Mixture};
use crate::model::{
    grad_hess_inc, grad_hess_lat, grad_hess_unchecked, incidence_loglik, latency_loglik, log_prior, log_prior_inc, log_prior_lat, Dataset,
    LatencyFamily, LatentAssignment, ParameterPoint, PriorSpec,
};
use crate::numerics::{logsumexp, max_abs, spd_inverse_logdet, LN_2PI};
use crate::optim::{maximize, NewtonConfig, NewtonFailure, Objective};

/// Approximation level for coefficient integrals at each log-shape value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approximation {
    /// Gaussian at the profile mode.
    Gaussian,
    /// One coefficient per block integrated on a grid, the rest Laplace.
    Laplace,
}

impl Approximation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Approximation::Gaussian => "gaussian",
            Approximation::Laplace => "laplace",
        }
    }
}

impl std::str::FromStr for Approximation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Approximation::Gaussian),
            "laplace" => Ok(Approximation::Laplace),
            other => Err(Error::Config(format!(
                "unknown approximation `{other}` (expected gaussian or laplace)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceConfig {
    /// Number of log-shape grid points (odd, at least 3).
    pub grid_size: usize,
    /// Half-width of the grid in marginal standard deviations of the log shape.
    pub span_sd: f64,
    pub newton: NewtonConfig,
    pub approximation: Approximation,
}

impl Default for LaplaceConfig {
    fn default() -> Self {
        Self {
            grid_size: 15,
            span_sd: 4.0,
            newton: NewtonConfig::default(),
            approximation: Approximation::Laplace,
        }
    }
}

impl LaplaceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 3 || self.grid_size % 2 == 0 {
            return Err(Error::Config(format!(
                "grid size must be odd and at least 3, got {}",
                self.grid_size
            )));
        }
        if !(self.span_sd > 0.0) {
            return Err(Error::Config("grid span must be positive".into()));
        }
        Ok(())
    }
}

/// Full conditional log posterior over `[beta_inc, beta_lat, log_shape]`.
pub(crate) struct JointPosterior<'a> {
    pub d: &'a Dataset,
    pub z: &'a LatentAssignment,
    pub spec: &'a PriorSpec,
}

impl JointPosterior<'_> {
    fn point(&self, x: &DVector<f64>) -> ParameterPoint {
        ParameterPoint::from_slice(self.d.p_inc(), self.d.p_lat(), x.as_slice()).expect("layout")
    }
}

impl Objective for JointPosterior<'_> {
    fn dim(&self) -> usize {
        self.d.dim()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let p = self.point(x);
        incidence_loglik(&p.beta_inc, self.d, self.z)
            + latency_loglik(&p.beta_lat, p.log_shape, self.d, self.z)
            + log_prior(&p, self.spec)
    }

    fn grad_hess(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        grad_hess_unchecked(&self.point(x), self.d, self.z, self.spec)
    }
}

/// The same posterior with the log shape held fixed; optimizes coefficients only.
struct ProfilePosterior<'a> {
    joint: JointPosterior<'a>,
    log_shape: f64,
}

impl ProfilePosterior<'_> {
    fn extend(&self, beta: &DVector<f64>) -> DVector<f64> {
        let k = beta.len();
        DVector::from_fn(k + 1, |i, _| if i < k { beta[i] } else { self.log_shape })
    }
}

impl Objective for ProfilePosterior<'_> {
    fn dim(&self) -> usize {
        self.joint.dim() - 1
    }

    fn value(&self, beta: &DVector<f64>) -> f64 {
        self.joint.value(&self.extend(beta))
    }

    fn grad_hess(&self, beta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (g, h) = self.joint.grad_hess(&self.extend(beta));
        let k = beta.len();
        (g.rows(0, k).into_owned(), h.view((0, 0), (k, k)).into_owned())
    }
}

#[derive(Debug, Clone, Copy)]
enum Block {
    Incidence,
    Latency { log_shape: f64 },
}

/// Log posterior terms of one block, up to terms of the other block.
struct BlockPosterior<'a> {
    d: &'a Dataset,
    z: &'a LatentAssignment,
    spec: &'a PriorSpec,
    block: Block,
}

impl Objective for BlockPosterior<'_> {
    fn dim(&self) -> usize {
        match self.block {
            Block::Incidence => self.d.p_inc(),
            Block::Latency { .. } => self.d.p_lat(),
        }
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        match self.block {
            Block::Incidence => incidence_loglik(x, self.d, self.z) + log_prior_inc(x, self.spec),
            Block::Latency { log_shape } => {
                latency_loglik(x, log_shape, self.d, self.z) + log_prior_lat(x, log_shape, self.d.p_inc(), self.spec)
            }
        }
    }

    fn grad_hess(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        match self.block {
            Block::Incidence => grad_hess_inc(x, self.d, self.z, self.spec),
            Block::Latency { log_shape } => {
                let (g, h) = grad_hess_lat(x, log_shape, self.d, self.z, self.spec);
                let k = x.len();
                (g.rows(0, k).into_owned(), h.view((0, 0), (k, k)).into_owned())
            }
        }
    }
}

/// An objective with coordinate `fixed` held at `value`.
struct Pinned<'o, O: Objective> {
    inner: &'o O,
    fixed: usize,
    value: f64,
}

impl<O: Objective> Pinned<'_, O> {
    fn extend(&self, rest: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(rest.len() + 1, |i, _| match i.cmp(&self.fixed) {
            std::cmp::Ordering::Less => rest[i],
            std::cmp::Ordering::Equal => self.value,
            std::cmp::Ordering::Greater => rest[i - 1],
        })
    }

    fn drop_fixed(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            full.len() - 1,
            full.iter().enumerate().filter(|(i, _)| *i != self.fixed).map(|(_, v)| *v),
        )
    }
}

impl<O: Objective> Objective for Pinned<'_, O> {
    fn dim(&self) -> usize {
        self.inner.dim() - 1
    }

    fn value(&self, rest: &DVector<f64>) -> f64 {
        self.inner.value(&self.extend(rest))
    }

    fn grad_hess(&self, rest: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (g, h) = self.inner.grad_hess(&self.extend(rest));
        let j = self.fixed;
        (self.drop_fixed(&g), h.remove_row(j).remove_column(j))
    }
}

/// Spacing and minimum half-width (in steps) of a refinement grid, in
/// Gaussian standard deviations.
#[derive(Debug, Clone, Copy)]
struct AxisGrid {
    step_sd: f64,
    base_steps: usize,
}

/// Grid for normalizing constants. The trapezoid rule converges
/// geometrically for smooth integrands, so a coarse step suffices.
const EVIDENCE_GRID: AxisGrid = AxisGrid { step_sd: 0.5, base_steps: 10 };
/// Grid for marginal densities, which are interpolated between nodes.
const MARGINAL_GRID: AxisGrid = AxisGrid { step_sd: 0.25, base_steps: 20 };
const SUB_SOLVE_TOL: f64 = 1e-6;
/// Additional steps allowed on each side for heavy tails.
const REFINE_EXTRA_STEPS: usize = 600;
/// A side of the refinement grid ends once the log density falls this far
/// below its peak.
const REFINE_TAIL_DROP: f64 = 25.0;
/// Log-shape grid points with less normalized weight are left out of
/// refined latency marginals.
const MIN_REFINE_WEIGHT: f64 = 1e-6;

/// Log of `int exp(f(x)) dx_{-j}` along a grid in coordinate `j`, with the
/// other coordinates profiled out and corrected by their curvature.
struct AxisProfile {
    nodes: Vec<f64>,
    log_values: Vec<f64>,
}

impl AxisProfile {
    /// Trapezoid estimate of `log int exp(f)`.
    fn log_integral(&self) -> f64 {
        let n = self.nodes.len();
        let terms: Vec<f64> = (0..n)
            .map(|i| {
                let left = if i > 0 { self.nodes[i] - self.nodes[i - 1] } else { 0.0 };
                let right = if i + 1 < n { self.nodes[i + 1] - self.nodes[i] } else { 0.0 };
                self.log_values[i] + (0.5 * (left + right)).ln()
            })
            .collect();
        logsumexp(&terms)
    }

    fn density(self) -> GridDensity {
        GridDensity::new(self.nodes, self.log_values)
    }
}

fn refine_axis<O: Objective>(
    obj: &O,
    mode: &DVector<f64>,
    cov: &DMatrix<f64>,
    j: usize,
    grid: AxisGrid,
    cfg: &NewtonConfig,
) -> std::result::Result<AxisProfile, NewtonFailure> {
    let k = obj.dim();
    let h = grid.step_sd * cov[(j, j)].sqrt();
    // value errors scale with the squared gradient, so a looser stop is enough
    let cfg = &NewtonConfig { grad_tol: cfg.grad_tol.max(SUB_SOLVE_TOL), ..*cfg };
    let eval = |x: f64, start: &DVector<f64>| -> std::result::Result<(f64, DVector<f64>), NewtonFailure> {
        if k == 1 {
            return Ok((obj.value(&DVector::from_element(1, x)), DVector::zeros(0)));
        }
        let pinned = Pinned { inner: obj, fixed: j, value: x };
        let out = maximize(&pinned, start.clone(), cfg)?;
        let logdet = spd_inverse_logdet(&out.neg_hessian)
            .ok_or_else(|| NewtonFailure::Indefinite { at: pinned.extend(&out.x) })?
            .1;
        Ok((out.value + 0.5 * ((k - 1) as f64 * LN_2PI - logdet), out.x))
    };
    let pin0 = Pinned { inner: obj, fixed: j, value: mode[j] };
    let (v0, rest0) = eval(mode[j], &pin0.drop_fixed(mode))?;
    // first move follows the Gaussian regression of the others on coordinate j
    let gaussian_slope = pin0.drop_fixed(&(cov.column(j) * (h / cov[(j, j)])));
    let mut peak = v0;
    let mut sides: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
    for (s, dir) in [(0usize, -1.0), (1, 1.0)] {
        let mut rest = rest0.clone();
        let mut shift = &gaussian_slope * dir;
        for step in 1..=grid.base_steps + REFINE_EXTRA_STEPS {
            let x = mode[j] + dir * step as f64 * h;
            let (v, r) = eval(x, &(&rest + &shift))?;
            shift = &r - &rest;
            rest = r;
            peak = peak.max(v);
            sides[s].push((x, v));
            if step >= grid.base_steps && v < peak - REFINE_TAIL_DROP {
                break;
            }
        }
    }
    let [left, right] = sides;
    let mut nodes = Vec::with_capacity(left.len() + right.len() + 1);
    let mut log_values = Vec::with_capacity(nodes.capacity());
    for (x, v) in left.into_iter().rev() {
        nodes.push(x);
        log_values.push(v);
    }
    nodes.push(mode[j]);
    log_values.push(v0);
    for (x, v) in right {
        nodes.push(x);
        log_values.push(v);
    }
    Ok(AxisProfile { nodes, log_values })
}

/// Posterior mode given `z` with the negative Hessian there.
#[derive(Debug, Clone)]
pub struct Mode {
    pub point: ParameterPoint,
    pub neg_hessian: DMatrix<f64>,
    pub log_posterior: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

fn map_failure(fail: NewtonFailure, p_inc: usize, p_lat: usize) -> Error {
    match fail {
        NewtonFailure::NotConverged {
            last,
            grad_norm,
            iterations,
        } => Error::Optimizer {
            iterations,
            grad_norm,
            last: Box::new(ParameterPoint::from_slice(p_inc, p_lat, last.as_slice()).expect("layout")),
        },
        NewtonFailure::Indefinite { at } => Error::Curvature {
            at: Box::new(ParameterPoint::from_slice(p_inc, p_lat, at.as_slice()).expect("layout")),
        },
    }
}

/// Map a failure inside a sub-problem to an error reporting `context`.
fn map_sub_failure(fail: NewtonFailure, context: &ParameterPoint) -> Error {
    match fail {
        NewtonFailure::NotConverged {
            grad_norm,
            iterations,
            ..
        } => Error::Optimizer {
            iterations,
            grad_norm,
            last: Box::new(context.clone()),
        },
        NewtonFailure::Indefinite { .. } => Error::Curvature {
            at: Box::new(context.clone()),
        },
    }
}

/// Newton search for the conditional posterior mode.
pub fn find_mode(
    d: &Dataset,
    z: &LatentAssignment,
    spec: &PriorSpec,
    _fam: LatencyFamily,
    init: &ParameterPoint,
    cfg: &NewtonConfig,
) -> Result<Mode> {
    z.check(d)?;
    spec.validate()?;
    if init.beta_inc.len() != d.p_inc() || init.beta_lat.len() != d.p_lat() {
        return Err(Error::Contract("initial point does not match dataset dimensions".into()));
    }
    let obj = JointPosterior { d, z, spec };
    let out = maximize(&obj, init.to_vector(), cfg).map_err(|f| map_failure(f, d.p_inc(), d.p_lat()))?;
    Ok(Mode {
        point: ParameterPoint::from_slice(d.p_inc(), d.p_lat(), out.x.as_slice())?,
        neg_hessian: out.neg_hessian,
        log_posterior: out.value,
        grad_norm: max_abs(&out.grad),
        iterations: out.iterations,
    })
}

#[derive(Debug, Clone)]
pub struct GridPoint {
    pub log_shape: f64,
    /// Estimate of `log pi(log_shape, D | z)` at the configured level.
    pub log_density: f64,
    /// The Gaussian-level estimate of the same quantity.
    pub log_density_gaussian: f64,
    /// Normalized log quadrature weight, trapezoid spacing included.
    pub log_weight: f64,
    /// Conditional mode of the coefficient block.
    pub mean: DVector<f64>,
    /// Inverse negative Hessian of the coefficient block at that mode.
    pub cov: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct HyperGrid {
    pub points: Vec<GridPoint>,
    pub step: f64,
    /// `log sum_m Delta_m pi(log_shape_m, D | z)`.
    pub log_mass: f64,
    /// The same sum at the Gaussian level.
    pub log_mass_gaussian: f64,
}

impl HyperGrid {
    pub fn weights(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.log_weight.exp()).collect()
    }

    pub fn log_shapes(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.log_shape).collect()
    }
}

fn profile_point(
    joint: JointPosterior<'_>,
    log_shape: f64,
    start: &DVector<f64>,
    cfg: &NewtonConfig,
) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
    let (p_inc, p_lat) = (joint.d.p_inc(), joint.d.p_lat());
    let prof = ProfilePosterior { joint, log_shape };
    let full = |b: &DVector<f64>| {
        ParameterPoint::from_slice(p_inc, p_lat, prof.extend(b).as_slice()).expect("layout")
    };
    let out = maximize(&prof, start.clone(), cfg).map_err(|f| match f {
        NewtonFailure::NotConverged {
            last,
            grad_norm,
            iterations,
        } => Error::Optimizer {
            iterations,
            grad_norm,
            last: Box::new(full(&last)),
        },
        NewtonFailure::Indefinite { at } => Error::Curvature { at: Box::new(full(&at)) },
    })?;
    let (cov, logdet) =
        spd_inverse_logdet(&out.neg_hessian).ok_or_else(|| Error::Curvature { at: Box::new(full(&out.x)) })?;
    let k = out.x.len() as f64;
    let log_density = out.value + 0.5 * (k * LN_2PI - logdet);
    Ok((out.x, cov, log_density))
}

fn trapezoid_log_masses(log_density: &[f64], step: f64) -> Vec<f64> {
    let m = log_density.len();
    log_density
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let delta = if k == 0 || k == m - 1 { 0.5 * step } else { step };
            v + delta.ln()
        })
        .collect()
}

fn sub_block(m: &DMatrix<f64>, o: usize, k: usize) -> DMatrix<f64> {
    m.view((o, o), (k, k)).into_owned()
}

/// Builds the log-shape quadrature grid around the joint mode.
pub fn build_hyper_grid(
    d: &Dataset,
    z: &LatentAssignment,
    spec: &PriorSpec,
    _fam: LatencyFamily,
    mode: &Mode,
    cfg: &LaplaceConfig,
) -> Result<HyperGrid> {
    cfg.validate()?;
    let dim = d.dim();
    let (p_inc, p_lat) = (d.p_inc(), d.p_lat());
    let (cov, _) = spd_inverse_logdet(&mode.neg_hessian).ok_or_else(|| Error::Curvature {
        at: Box::new(mode.point.clone()),
    })?;
    let sd = cov[(dim - 1, dim - 1)].sqrt();
    let m = cfg.grid_size;
    let center = (m - 1) / 2;
    let step = 2.0 * cfg.span_sd * sd / (m - 1) as f64;
    let phi_hat = mode.point.log_shape;
    let phi_at = |k: usize| phi_hat + (k as f64 - center as f64) * step;
    let coef_hat = mode.point.to_vector().rows(0, dim - 1).into_owned();

    let mut slots: Vec<Option<(DVector<f64>, DMatrix<f64>, f64)>> = vec![None; m];
    let eval = |k: usize, start: &DVector<f64>| {
        profile_point(JointPosterior { d, z, spec }, phi_at(k), start, &cfg.newton).map_err(|e| Error::Grid {
            index: k,
            log_shape: phi_at(k),
            source: Box::new(e),
        })
    };
    slots[center] = Some(eval(center, &coef_hat)?);
    for k in center + 1..m {
        let start = slots[k - 1].as_ref().unwrap().0.clone();
        slots[k] = Some(eval(k, &start)?);
    }
    for k in (0..center).rev() {
        let start = slots[k + 1].as_ref().unwrap().0.clone();
        slots[k] = Some(eval(k, &start)?);
    }
    let slots: Vec<(DVector<f64>, DMatrix<f64>, f64)> = slots.into_iter().map(Option::unwrap).collect();
    let gaussian: Vec<f64> = slots.iter().map(|s| s.2).collect();

    let refined: Vec<f64> = match cfg.approximation {
        Approximation::Gaussian => gaussian.clone(),
        Approximation::Laplace => {
            // the incidence block does not involve the log shape
            let inc = BlockPosterior { d, z, spec, block: Block::Incidence };
            let (inc_mean, inc_cov) = (
                slots[center].0.rows(0, p_inc).into_owned(),
                sub_block(&slots[center].1, 0, p_inc),
            );
            let log_inc = refine_axis(&inc, &inc_mean, &inc_cov, 0, EVIDENCE_GRID, &cfg.newton)
                .map_err(|f| map_sub_failure(f, &mode.point))?
                .log_integral();
            (0..m)
                .into_par_iter()
                .map(|k| {
                    let lat = BlockPosterior { d, z, spec, block: Block::Latency { log_shape: phi_at(k) } };
                    let mean = slots[k].0.rows(p_inc, p_lat).into_owned();
                    let cov = sub_block(&slots[k].1, p_inc, p_lat);
                    refine_axis(&lat, &mean, &cov, 0, EVIDENCE_GRID, &cfg.newton)
                        .map(|a| log_inc + a.log_integral())
                        .map_err(|f| Error::Grid {
                            index: k,
                            log_shape: phi_at(k),
                            source: Box::new(map_sub_failure(f, &mode.point)),
                        })
                })
                .collect::<Result<_>>()?
        }
    };

    let log_masses = trapezoid_log_masses(&refined, step);
    let log_mass = logsumexp(&log_masses);
    let log_mass_gaussian = logsumexp(&trapezoid_log_masses(&gaussian, step));
    let points = slots
        .into_iter()
        .enumerate()
        .map(|(k, (mean, cov, log_density_gaussian))| GridPoint {
            log_shape: phi_at(k),
            log_density: refined[k],
            log_density_gaussian,
            log_weight: log_masses[k] - log_mass,
            mean,
            cov,
        })
        .collect();
    Ok(HyperGrid {
        points,
        step,
        log_mass,
        log_mass_gaussian,
    })
}

/// Laplace fit of the posterior conditional on one latent assignment.
#[derive(Debug, Clone)]
pub struct ConditionalFit {
    pub mode: Mode,
    pub grid: HyperGrid,
    pub family: LatencyFamily,
    pub approximation: Approximation,
    p_inc: usize,
    p_lat: usize,
}

impl ConditionalFit {
    pub fn fit(
        d: &Dataset,
        z: &LatentAssignment,
        spec: &PriorSpec,
        fam: LatencyFamily,
        init: &ParameterPoint,
        cfg: &LaplaceConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let mode = find_mode(d, z, spec, fam, init, &cfg.newton)?;
        let grid = build_hyper_grid(d, z, spec, fam, &mode, cfg)?;
        Ok(Self {
            mode,
            grid,
            family: fam,
            approximation: cfg.approximation,
            p_inc: d.p_inc(),
            p_lat: d.p_lat(),
        })
    }

    pub fn n_coefficients(&self) -> usize {
        self.p_inc + self.p_lat
    }

    pub fn p_inc(&self) -> usize {
        self.p_inc
    }

    pub fn p_lat(&self) -> usize {
        self.p_lat
    }

    /// Gaussian-mixture marginal of coefficient `j` (layout order).
    pub fn marginal_of(&self, j: usize) -> GaussianMixture {
        assert!(j < self.n_coefficients(), "coefficient index out of range");
        let pts = &self.grid.points;
        GaussianMixture::new(
            pts.iter().map(|p| p.log_weight.exp()).collect(),
            pts.iter().map(|p| p.mean[j]).collect(),
            pts.iter().map(|p| p.cov[(j, j)].sqrt()).collect(),
        )
    }

    /// Marginal of the log shape, interpolated over the grid.
    pub fn marginal_of_log_shape(&self) -> GridDensity {
        GridDensity::new(
            self.grid.log_shapes(),
            self.grid.points.iter().map(|p| p.log_density).collect(),
        )
    }

    /// Marginal of the Weibull shape itself.
    pub fn marginal_of_alpha(&self) -> ShapeMarginal<GridDensity> {
        ShapeMarginal(self.marginal_of_log_shape())
    }

    /// Skewness-aware marginal of coefficient `j`.
    ///
    /// Within the coefficient's block the other coefficients are re-optimized
    /// along a grid in coefficient `j`, and the log density there is the
    /// maximized log posterior minus half the log determinant of the
    /// remaining negative Hessian. Latency coefficients are mixed over the
    /// log-shape grid. `d`, `z` and `spec` must be those the fit was built
    /// from.
    pub fn refined_marginal_of(
        &self,
        d: &Dataset,
        z: &LatentAssignment,
        spec: &PriorSpec,
        j: usize,
        cfg: &NewtonConfig,
    ) -> Result<Mixture<GridDensity>> {
        assert!(j < self.n_coefficients(), "coefficient index out of range");
        if d.p_inc() != self.p_inc || d.p_lat() != self.p_lat {
            return Err(Error::Contract("dataset does not match the fit".into()));
        }
        let fail = |f| map_sub_failure(f, &self.mode.point);
        if j < self.p_inc {
            let pt = &self.grid.points[(self.grid.points.len() - 1) / 2];
            let inc = BlockPosterior { d, z, spec, block: Block::Incidence };
            let axis = refine_axis(
                &inc,
                &pt.mean.rows(0, self.p_inc).into_owned(),
                &sub_block(&pt.cov, 0, self.p_inc),
                j,
                MARGINAL_GRID,
                cfg,
            )
            .map_err(fail)?;
            return Ok(Mixture::equal(vec![axis.density()]));
        }
        let jl = j - self.p_inc;
        let weights = self.grid.weights();
        let top = weights.iter().cloned().fold(0.0, f64::max);
        let used: Vec<usize> = (0..weights.len()).filter(|&m| weights[m] >= MIN_REFINE_WEIGHT * top).collect();
        let parts = used
            .par_iter()
            .map(|&m| {
                let pt = &self.grid.points[m];
                let lat = BlockPosterior { d, z, spec, block: Block::Latency { log_shape: pt.log_shape } };
                refine_axis(
                    &lat,
                    &pt.mean.rows(self.p_inc, self.p_lat).into_owned(),
                    &sub_block(&pt.cov, self.p_inc, self.p_lat),
                    jl,
                    MARGINAL_GRID,
                    cfg,
                )
                .map(AxisProfile::density)
                .map_err(fail)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Mixture::weighted(used.iter().map(|&m| weights[m]).collect(), parts))
    }

    /// Marginals of every coefficient at the given approximation level.
    pub fn coefficient_marginals(
        &self,
        d: &Dataset,
        z: &LatentAssignment,
        spec: &PriorSpec,
        level: Approximation,
        cfg: &NewtonConfig,
    ) -> Result<Vec<CoefficientMarginal>> {
        (0..self.n_coefficients())
            .map(|j| match level {
                Approximation::Gaussian => Ok(CoefficientMarginal::Gaussian(self.marginal_of(j))),
                Approximation::Laplace => self
                    .refined_marginal_of(d, z, spec, j, cfg)
                    .map(CoefficientMarginal::Refined),
            })
            .collect()
    }

    /// Estimate of `log pi(D | z)` at the configured approximation level.
    pub fn conditional_mloglik(&self) -> f64 {
        self.grid.log_mass
    }

    /// Gaussian-level estimate of `log pi(D | z)`.
    pub fn gaussian_mloglik(&self) -> f64 {
        self.grid.log_mass_gaussian
    }
}

/// A coefficient marginal at either approximation level.
#[derive(Debug, Clone)]
pub enum CoefficientMarginal {
    Gaussian(GaussianMixture),
    Refined(Mixture<GridDensity>),
}

impl Marginal for CoefficientMarginal {
    fn pdf(&self, x: f64) -> f64 {
        match self {
            Self::Gaussian(m) => m.pdf(x),
            Self::Refined(m) => m.pdf(x),
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::Gaussian(m) => m.cdf(x),
            Self::Refined(m) => m.cdf(x),
        }
    }

    fn mean(&self) -> f64 {
        match self {
            Self::Gaussian(m) => m.mean(),
            Self::Refined(m) => m.mean(),
        }
    }

    fn variance(&self) -> f64 {
        match self {
            Self::Gaussian(m) => m.variance(),
            Self::Refined(m) => m.variance(),
        }
    }

    fn support(&self) -> (f64, f64) {
        match self {
            Self::Gaussian(m) => m.support(),
            Self::Refined(m) => m.support(),
        }
    }

    fn exp_moment(&self, k: f64) -> f64 {
        match self {
            Self::Gaussian(m) => m.exp_moment(k),
            Self::Refined(m) => m.exp_moment(k),
        }
    }
}

/// View of a log-shape marginal on the shape scale.
#[derive(Debug, Clone)]
pub struct ShapeMarginal<M>(pub M);

impl<M: Marginal> ShapeMarginal<M> {
    pub fn log_scale(&self) -> &M {
        &self.0
    }

    pub fn pdf(&self, alpha: f64) -> f64 {
        if alpha <= 0.0 {
            return 0.0;
        }
        self.0.pdf(alpha.ln()) / alpha
    }

    pub fn cdf(&self, alpha: f64) -> f64 {
        if alpha <= 0.0 {
            return 0.0;
        }
        self.0.cdf(alpha.ln())
    }

    pub fn mean(&self) -> f64 {
        self.0.exp_moment(1.0)
    }

    pub fn sd(&self) -> f64 {
        let m = self.mean();
        (self.0.exp_moment(2.0) - m * m).max(0.0).sqrt()
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.0.quantile(p).exp()
    }
}

impl ShapeMarginal<GridDensity> {
    pub fn average(parts: Vec<ShapeMarginal<GridDensity>>) -> ShapeMarginal<Mixture<GridDensity>> {
        ShapeMarginal(Mixture::equal(parts.into_iter().map(|s| s.0).collect()))
    }
}
