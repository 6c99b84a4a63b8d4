//! `mixcure` command-line interface.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mixcure::data::{
    default_profiles, make_profile, read_dataset, simulate, write_dataset, Censoring, CovariateGen, Schema, SimSpec,
};
use mixcure::gibbs::{
    average_marginals, converged, derived_quantities, run_chain, Chain, ConvergenceRule, DerivedConfig, GibbsConfig,
    Profile,
};
use mixcure::mcmc::{run_mcmc, McmcConfig, McmcResult};
use mixcure::oracle::{enumerate_posterior, QuadratureSpec};
use mixcure::report::{
    compare_tables, join_numbers, summary_rows, summary_table, summary_table_draws, time_grid, write_compare_csv,
    write_cure_csv, write_file, write_summary_csv, write_survival_csv, Manifest, SummaryRow,
};
use mixcure::{Approximation, Dataset, Error, LaplaceConfig, LatencyFamily, PriorSpec};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_CONVERGENCE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "mixcure", version, about = "Bayesian mixture cure models with Weibull latency")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Modal Gibbs sampling over cure indicators with Laplace approximations.
    Fit(FitArgs),
    /// Reference Metropolis-within-Gibbs sampler.
    Mcmc(McmcArgs),
    /// Exact posterior by enumerating cure configurations (tiny datasets only).
    Oracle(OracleArgs),
    /// Simulate a dataset from a mixture cure model.
    Simulate(SimulateArgs),
    /// Run `fit` and `mcmc` on the same data and tabulate the differences.
    Compare(CompareArgs),
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Comma-separated input file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Column holding positive follow-up times.
    #[arg(long, default_value = "time")]
    time_col: String,
    /// Column holding the status (1 = event, 0 = censored).
    #[arg(long, default_value = "status")]
    status_col: String,
    /// Read the status column as 1 = censored, 0 = event.
    #[arg(long)]
    flip_status: bool,
    /// Covariates of the incidence (cure) part.
    #[arg(long, value_delimiter = ',')]
    incidence_cov: Vec<String>,
    /// Covariates of the latency part.
    #[arg(long, value_delimiter = ',')]
    latency_cov: Vec<String>,
    /// Covariates centered on their sample mean.
    #[arg(long, value_delimiter = ',')]
    center: Vec<String>,
    /// Latency family.
    #[arg(long, default_value = "weibull-ph", value_parser = ["weibull-ph", "weibull-aft"])]
    family: String,
}

#[derive(Args, Debug, Clone)]
struct PriorArgs {
    /// Prior variance of every regression coefficient.
    #[arg(long, default_value_t = 1000.0)]
    prior_variance: f64,
    /// Gamma prior shape for the Weibull shape parameter.
    #[arg(long, default_value_t = 0.01)]
    shape_a: f64,
    /// Gamma prior rate for the Weibull shape parameter.
    #[arg(long, default_value_t = 0.01)]
    shape_b: f64,
}

#[derive(Args, Debug, Clone)]
struct DerivedArgs {
    /// Covariate profile for cure and survival tables, as NAME:COV=V,COV=V.
    /// Repeatable. Defaults to every combination of up to four binary covariates.
    #[arg(long)]
    profile: Vec<String>,
    /// Number of points in the survival time grid.
    #[arg(long, default_value_t = 50)]
    time_points: usize,
    /// Largest time in the survival grid (defaults to the largest observed time).
    #[arg(long)]
    t_max: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct FitOpts {
    /// Gibbs iterations discarded before keeping samples.
    #[arg(long, default_value_t = 50)]
    burnin: usize,
    /// Number of kept samples.
    #[arg(long, default_value_t = 90)]
    keep: usize,
    /// Iterations between kept samples.
    #[arg(long, default_value_t = 5)]
    thin: usize,
    /// Number of log-shape grid points (odd).
    #[arg(long, default_value_t = 15)]
    grid_size: usize,
    /// Approximation of coefficient integrals at each grid point.
    #[arg(long, default_value = "laplace", value_parser = ["laplace", "gaussian"])]
    approximation: String,
    /// Posterior draws used for cure proportions and survival curves.
    #[arg(long, default_value_t = 1000)]
    derived_draws: usize,
    /// Average cure and survival summaries over all kept configurations
    /// instead of using only the most likely one.
    #[arg(long)]
    average_configs: bool,
}

#[derive(Args, Debug, Clone)]
struct McmcOpts {
    /// Number of independent chains.
    #[arg(long, default_value_t = 3)]
    chains: usize,
    /// Iterations per chain, burnin included.
    #[arg(long, default_value_t = 20_000)]
    iters: usize,
    /// Iterations per chain discarded as burnin.
    #[arg(long = "mcmc-burnin", default_value_t = 4_000)]
    mcmc_burnin: usize,
    /// Thinning interval (default keeps at most 3000 draws per chain).
    #[arg(long = "mcmc-thin")]
    mcmc_thin: Option<usize>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    prior: PriorArgs,
    #[command(flatten)]
    fit: FitOpts,
    #[command(flatten)]
    derived: DerivedArgs,
    /// Random seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct McmcArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    prior: PriorArgs,
    #[command(flatten)]
    mcmc: McmcOpts,
    #[command(flatten)]
    derived: DerivedArgs,
    /// Random seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    prior: PriorArgs,
    /// Minimum quadrature points per dimension.
    #[arg(long, default_value_t = 161)]
    quad_points: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    prior: PriorArgs,
    #[command(flatten)]
    fit: FitOpts,
    #[command(flatten)]
    mcmc: McmcOpts,
    /// Random seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Number of subjects.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Covariate generator as NAME=bernoulli:P, NAME=normal:MEAN:SD or
    /// NAME=uniform:LO:HI. Repeatable; shared by both parts.
    #[arg(long)]
    covariate: Vec<String>,
    /// Incidence coefficients, intercept first (default -1 then zeros).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta_inc: Vec<f64>,
    /// Latency coefficients, intercept first (default zeros).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta_lat: Vec<f64>,
    /// Weibull shape.
    #[arg(long, default_value_t = 1.2)]
    shape: f64,
    /// Latency family.
    #[arg(long, default_value = "weibull-ph", value_parser = ["weibull-ph", "weibull-aft"])]
    family: String,
    /// Administrative censoring time.
    #[arg(long, default_value_t = 5.0)]
    admin_censor: f64,
    /// Rate of additional exponential censoring.
    #[arg(long)]
    censor_rate: Option<f64>,
    /// Random seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file (standard output when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the generating values and true cure indicators here.
    #[arg(long)]
    truth: Option<PathBuf>,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. } | Error::Data(_) | Error::Csv(_) | Error::Refused(_) | Error::Io(_) => EXIT_DATA,
            Error::Config(_) | Error::Contract(_) | Error::Domain(_) => EXIT_USAGE,
            Error::Optimizer { .. } | Error::Curvature { .. } | Error::Grid { .. } | Error::Chain(_) => {
                EXIT_CONVERGENCE
            }
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(flag: &str, message: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: format!("{flag}: {message}"),
    }
}

type Outcome = std::result::Result<bool, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Mcmc(a) => cmd_mcmc(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("warning: convergence criteria not met; results were written and flagged in manifest.txt");
            ExitCode::from(EXIT_CONVERGENCE)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn family(s: &str) -> LatencyFamily {
    s.parse().expect("restricted by the argument parser")
}

fn load(a: &DataArgs) -> Result<Dataset, Failure> {
    let schema = Schema {
        time_col: a.time_col.clone(),
        status_col: a.status_col.clone(),
        incidence: a.incidence_cov.clone(),
        latency: a.latency_cov.clone(),
        center: a.center.clone(),
        flip_status: a.flip_status,
    };
    for c in &a.center {
        if !a.incidence_cov.contains(c) && !a.latency_cov.contains(c) {
            return Err(usage("--center", format!("`{c}` is not listed in --incidence-cov or --latency-cov")));
        }
    }
    read_dataset(&a.data, &schema).map_err(|e| match e {
        Error::Parse { .. } | Error::Data(_) | Error::Csv(_) => Failure {
            code: EXIT_DATA,
            message: format!("--data {}: {e}", a.data.display()),
        },
        other => other.into(),
    })
}

fn priors(a: &PriorArgs) -> Result<PriorSpec, Failure> {
    let positive = |flag: &str, v: f64| {
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(usage(flag, format!("must be positive, got {v}")))
        }
    };
    Ok(PriorSpec {
        coef_variance: positive("--prior-variance", a.prior_variance)?,
        shape_a: positive("--shape-a", a.shape_a)?,
        shape_b: positive("--shape-b", a.shape_b)?,
        overrides: Vec::new(),
    })
}

fn gibbs_config(o: &FitOpts, seed: u64) -> Result<GibbsConfig, Failure> {
    if o.keep < 1 {
        return Err(usage("--keep", "must be at least 1"));
    }
    if o.thin < 1 {
        return Err(usage("--thin", "must be at least 1"));
    }
    if o.grid_size < 3 || o.grid_size % 2 == 0 {
        return Err(usage("--grid-size", format!("must be odd and at least 3, got {}", o.grid_size)));
    }
    if o.derived_draws < 2 {
        return Err(usage("--derived-draws", "must be at least 2"));
    }
    let approximation: Approximation = o.approximation.parse().expect("restricted by the argument parser");
    Ok(GibbsConfig {
        burnin: o.burnin,
        keep: o.keep,
        thin: o.thin,
        seed,
        laplace: LaplaceConfig {
            grid_size: o.grid_size,
            approximation,
            ..LaplaceConfig::default()
        },
        ..GibbsConfig::default()
    })
}

fn mcmc_config(o: &McmcOpts, seed: u64) -> Result<McmcConfig, Failure> {
    if o.chains < 2 {
        return Err(usage("--chains", "at least 2 chains are needed for convergence diagnostics"));
    }
    if o.iters <= o.mcmc_burnin {
        return Err(usage("--iters", format!("must exceed --mcmc-burnin ({})", o.mcmc_burnin)));
    }
    if o.mcmc_thin == Some(0) {
        return Err(usage("--mcmc-thin", "must be at least 1"));
    }
    let cfg = McmcConfig {
        chains: o.chains,
        iterations: o.iters,
        burnin: o.mcmc_burnin,
        thin: o.mcmc_thin,
        seed,
        ..McmcConfig::default()
    };
    if cfg.kept_per_chain() < 10 {
        return Err(usage("--iters", "fewer than 10 draws per chain would be kept"));
    }
    Ok(cfg)
}

fn parse_profile(d: &Dataset, spec: &str) -> Result<Profile, Failure> {
    let (name, rest) = spec
        .split_once(':')
        .ok_or_else(|| usage("--profile", format!("`{spec}` is not NAME:COV=V,...")))?;
    let mut values = Vec::new();
    for kv in rest.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage("--profile", format!("`{kv}` is not COV=V")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| usage("--profile", format!("`{v}` is not a number")))?;
        values.push((k.trim().to_string(), v));
    }
    make_profile(d, name, &values).map_err(|e| usage("--profile", e))
}

fn profiles_and_times(d: &Dataset, a: &DerivedArgs) -> Result<(Vec<Profile>, Vec<f64>), Failure> {
    let profiles = if a.profile.is_empty() {
        default_profiles(d, 4)?
    } else {
        a.profile.iter().map(|p| parse_profile(d, p)).collect::<Result<_, _>>()?
    };
    if a.time_points < 1 {
        return Err(usage("--time-points", "must be at least 1"));
    }
    let t_max = match a.t_max {
        Some(t) if t.is_finite() && t > 0.0 => t,
        Some(t) => return Err(usage("--t-max", format!("must be positive, got {t}"))),
        None => d.times().iter().cloned().fold(0.0, f64::max),
    };
    Ok((profiles, time_grid(t_max, a.time_points)))
}

/// The invocation with arguments quoted where needed.
fn invocation() -> String {
    std::env::args()
        .skip(1)
        .map(|a| {
            if a.is_empty() || a.contains(|c: char| c.is_whitespace() || c == '"' || c == '\'') {
                format!("'{}'", a.replace('\'', "'\\''"))
            } else {
                a
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn manifest_header(command: &str, a: &DataArgs, d: &Dataset, prior: &PriorSpec, seed: Option<u64>) -> Manifest {
    let mut m = Manifest::new();
    m.push("tool", format!("mixcure {}", env!("CARGO_PKG_VERSION")))
        .push("command", command)
        .push("invocation", invocation())
        .push("data", a.data.display())
        .push("time_col", &a.time_col)
        .push("status_col", &a.status_col)
        .push("flip_status", a.flip_status)
        .push("incidence_cov", a.incidence_cov.join(","))
        .push("latency_cov", a.latency_cov.join(","))
        .push("center", a.center.join(","))
        .push("family", &a.family)
        .push("n", d.n())
        .push("n_censored", d.n_censored());
    for (name, mean) in d.centering() {
        m.push(&format!("centering.{name}"), mean);
    }
    m.push("prior_variance", prior.coef_variance)
        .push("shape_a", prior.shape_a)
        .push("shape_b", prior.shape_b);
    if let Some(s) = seed {
        m.push("seed", s);
    }
    m
}

fn write_summary(dir: &Path, name: &str, rows: &[SummaryRow]) -> Result<(), Failure> {
    Ok(write_file(dir, name, |b| write_summary_csv(rows, b))?)
}

/// Runs the Gibbs pipeline and writes its tables; returns the summary and
/// whether the cml trace met the stability rule.
fn run_fit(
    dir: &Path,
    d: &Dataset,
    prior: &PriorSpec,
    fam: LatencyFamily,
    cfg: &GibbsConfig,
    derived: Option<(&[Profile], &[f64], &FitOpts)>,
    manifest: &mut Manifest,
) -> Result<(Vec<SummaryRow>, bool), Failure> {
    let chain: Chain = run_chain(d, prior, fam, cfg)?;
    let pm = average_marginals(&chain);
    let rows = summary_table(&pm, fam);
    let report = converged(&chain.cml_trace, &ConvergenceRule::default())?;
    if let Some((profiles, times, o)) = derived {
        let dcfg = DerivedConfig {
            draws: o.derived_draws,
            seed: cfg.seed,
            average_over_kept: o.average_configs,
        };
        let der = derived_quantities(&chain, profiles, times, &dcfg)?;
        write_file(dir, "cure.csv", |b| write_cure_csv(&der, b))?;
        write_file(dir, "survival.csv", |b| write_survival_csv(&der, b))?;
        manifest
            .push("derived_draws", o.derived_draws)
            .push("average_configs", o.average_configs)
            .push("profiles", profiles.iter().map(|p| p.name.as_str()).collect::<Vec<_>>().join("|"));
    }
    let best = chain.most_likely_sample();
    manifest
        .push("burnin", cfg.burnin)
        .push("keep", cfg.keep)
        .push("thin", cfg.thin)
        .push("grid_size", cfg.laplace.grid_size)
        .push("approximation", cfg.laplace.approximation.as_str())
        .push("rejected_iterations", chain.rejected)
        .push("most_likely_iteration", best.iteration)
        .push("most_likely_cml", best.fit.conditional_mloglik())
        .push("converged", report.converged)
        .push("convergence_window", report.window)
        .push("convergence_range", report.range)
        .push("convergence_slope", report.slope)
        .push("convergence_slope_se", report.slope_se)
        .push("cml_trace", join_numbers(&chain.cml_trace));
    Ok((rows, report.converged))
}

fn run_sampler(
    dir: &Path,
    d: &Dataset,
    prior: &PriorSpec,
    fam: LatencyFamily,
    cfg: &McmcConfig,
    derived: Option<(&[Profile], &[f64])>,
    manifest: &mut Manifest,
) -> Result<(Vec<SummaryRow>, bool), Failure> {
    let res: McmcResult = run_mcmc(d, prior, fam, cfg)?;
    let rows = summary_table_draws(&res);
    if let Some((profiles, times)) = derived {
        let der = res.derived(profiles, times)?;
        write_file(dir, "cure.csv", |b| write_cure_csv(&der, b))?;
        write_file(dir, "survival.csv", |b| write_survival_csv(&der, b))?;
        manifest.push("profiles", profiles.iter().map(|p| p.name.as_str()).collect::<Vec<_>>().join("|"));
    }
    manifest
        .push("chains", cfg.chains)
        .push("iterations", cfg.iterations)
        .push("mcmc_burnin", cfg.burnin)
        .push("mcmc_thin", cfg.effective_thin())
        .push("parameters", res.names.join(","))
        .push("psrf", join_numbers(&res.psrf))
        .push("ess", join_numbers(&res.ess))
        .push("mcse", join_numbers(&res.mcse()));
    for (c, ch) in res.chains.iter().enumerate() {
        manifest.push(&format!("acceptance.chain{}", c + 1), join_numbers(&ch.acceptance));
    }
    manifest.push("converged", res.converged);
    Ok((rows, res.converged))
}

fn write_manifest(dir: &Path, name: &str, m: &Manifest) -> Result<(), Failure> {
    Ok(write_file(dir, name, |b| m.write(b))?)
}

fn cmd_fit(a: FitArgs) -> Outcome {
    let prior = priors(&a.prior)?;
    let cfg = gibbs_config(&a.fit, a.seed)?;
    let d = load(&a.data)?;
    let fam = family(&a.data.family);
    let (profiles, times) = profiles_and_times(&d, &a.derived)?;
    let mut m = manifest_header("fit", &a.data, &d, &prior, Some(a.seed));
    let (rows, ok) = run_fit(&a.out, &d, &prior, fam, &cfg, Some((&profiles, &times, &a.fit)), &mut m)?;
    write_summary(&a.out, "summary.csv", &rows)?;
    write_manifest(&a.out, "manifest.txt", &m)?;
    Ok(ok)
}

fn cmd_mcmc(a: McmcArgs) -> Outcome {
    let prior = priors(&a.prior)?;
    let cfg = mcmc_config(&a.mcmc, a.seed)?;
    let d = load(&a.data)?;
    let fam = family(&a.data.family);
    let (profiles, times) = profiles_and_times(&d, &a.derived)?;
    let mut m = manifest_header("mcmc", &a.data, &d, &prior, Some(a.seed));
    let (rows, ok) = run_sampler(&a.out, &d, &prior, fam, &cfg, Some((&profiles, &times)), &mut m)?;
    write_summary(&a.out, "summary.csv", &rows)?;
    write_manifest(&a.out, "manifest.txt", &m)?;
    Ok(ok)
}

fn cmd_oracle(a: OracleArgs) -> Outcome {
    let prior = priors(&a.prior)?;
    if a.quad_points < 3 {
        return Err(usage("--quad-points", "must be at least 3"));
    }
    let d = load(&a.data)?;
    let fam = family(&a.data.family);
    let q = QuadratureSpec {
        points: a.quad_points,
        ..QuadratureSpec::default()
    };
    let post = enumerate_posterior(&d, &prior, fam, &q)?;
    let names = d.parameter_names();
    let k = d.dim() - 1;
    let coefs: Vec<_> = (0..k).map(|j| post.marginal(j)).collect();
    let rows = summary_rows(&names[..k], &coefs, &post.marginal(k), fam);
    write_summary(&a.out, "summary.csv", &rows)?;
    write_file(&a.out, "configs.csv", |b| {
        writeln!(b, "pattern,prob,log_evidence")?;
        for c in &post.configs {
            let pattern: String = c.pattern.iter().map(|&z| if z { '1' } else { '0' }).collect();
            writeln!(b, "{pattern},{},{}", c.prob, c.log_joint)?;
        }
        Ok(())
    })?;
    let mut m = manifest_header("oracle", &a.data, &d, &prior, None);
    m.push("quad_points", q.points)
        .push("span_sd", q.span_sd)
        .push("configurations", post.configs.len())
        .push("log_evidence", post.log_evidence)
        .push("boundary_mass", post.boundary_mass);
    write_manifest(&a.out, "manifest.txt", &m)?;
    Ok(true)
}

fn cmd_compare(a: CompareArgs) -> Outcome {
    let prior = priors(&a.prior)?;
    let gcfg = gibbs_config(&a.fit, a.seed)?;
    let mcfg = mcmc_config(&a.mcmc, a.seed)?;
    let d = load(&a.data)?;
    let fam = family(&a.data.family);
    let mut m = manifest_header("compare", &a.data, &d, &prior, Some(a.seed));
    let (fit_rows, fit_ok) = run_fit(&a.out, &d, &prior, fam, &gcfg, None, &mut m)?;
    let mut mm = Manifest::new();
    let (mcmc_rows, mcmc_ok) = run_sampler(&a.out, &d, &prior, fam, &mcfg, None, &mut mm)?;
    for (k, v) in mm.entries() {
        m.push(&format!("mcmc.{k}"), v);
    }
    let cmp = compare_tables(&fit_rows, &mcmc_rows);
    write_summary(&a.out, "summary_fit.csv", &fit_rows)?;
    write_summary(&a.out, "summary_mcmc.csv", &mcmc_rows)?;
    write_file(&a.out, "compare.csv", |b| write_compare_csv(&cmp, b))?;
    let max_diff = cmp.iter().map(|r| r.abs_diff).fold(0.0, f64::max);
    m.push("max_abs_mean_difference", max_diff);
    write_manifest(&a.out, "manifest.txt", &m)?;
    Ok(fit_ok && mcmc_ok)
}

fn cmd_simulate(a: SimulateArgs) -> Outcome {
    let covariates = a
        .covariate
        .iter()
        .map(|s| {
            let (name, gen) = s
                .split_once('=')
                .ok_or_else(|| usage("--covariate", format!("`{s}` is not NAME=GENERATOR")))?;
            let gen: CovariateGen = gen.parse().map_err(|e| usage("--covariate", e))?;
            Ok((name.to_string(), gen))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let k = covariates.len();
    let coefs = |given: &[f64], intercept: f64, flag: &str| -> Result<Vec<f64>, Failure> {
        if given.is_empty() {
            let mut v = vec![0.0; k + 1];
            v[0] = intercept;
            Ok(v)
        } else if given.len() == k + 1 {
            Ok(given.to_vec())
        } else {
            Err(usage(flag, format!("expected {} values (intercept first), got {}", k + 1, given.len())))
        }
    };
    if a.n < 1 {
        return Err(usage("--n", "must be at least 1"));
    }
    if !(a.shape > 0.0 && a.shape.is_finite()) {
        return Err(usage("--shape", "must be positive"));
    }
    if !(a.admin_censor > 0.0) {
        return Err(usage("--admin-censor", "must be positive"));
    }
    if a.censor_rate.is_some_and(|r| !(r > 0.0)) {
        return Err(usage("--censor-rate", "must be positive"));
    }
    let spec = SimSpec {
        n: a.n,
        covariates,
        beta_inc: coefs(&a.beta_inc, -1.0, "--beta-inc")?,
        beta_lat: coefs(&a.beta_lat, 0.0, "--beta-lat")?,
        shape: a.shape,
        family: family(&a.family),
        censoring: Censoring {
            admin: Some(a.admin_censor),
            rate: a.censor_rate,
        },
        seed: a.seed,
    };
    let (d, truth) = simulate(&spec)?;
    match &a.out {
        Some(path) => {
            let mut buf = Vec::new();
            write_dataset(&d, &mut buf)?;
            std::fs::write(path, buf).map_err(|e| usage("--out", e))?;
        }
        None => write_dataset(&d, std::io::stdout().lock())?,
    }
    if let Some(path) = &a.truth {
        let mut m = Manifest::new();
        m.push("n", spec.n)
            .push("seed", truth.seed)
            .push("family", spec.family.as_str())
            .push(
                "covariates",
                spec.covariates
                    .iter()
                    .map(|(k, g)| format!("{k}={}", g.describe()))
                    .collect::<Vec<_>>()
                    .join(","),
            )
            .push("beta_inc", join_numbers(truth.params.beta_inc.as_slice()))
            .push("beta_lat", join_numbers(truth.params.beta_lat.as_slice()))
            .push("shape", spec.shape)
            .push("censoring", &truth.censoring)
            .push(
                "cured",
                truth.cured.iter().map(|&c| if c { "1" } else { "0" }).collect::<Vec<_>>().join(","),
            );
        let mut buf = Vec::new();
        m.write(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| usage("--truth", e))?;
    }
    Ok(true)
}
