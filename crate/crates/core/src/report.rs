//! Summary tables, cure and survival tables, and the run manifest.
//!
//! Numbers in tables are written with three decimals and a period separator
//! regardless of locale. The manifest is a plain `key = value` file.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::gibbs::{Derived, PosteriorMarginals};
use crate::laplace::ShapeMarginal;
use crate::marginal::{exp_summary, Marginal};
use crate::mcmc::{summarize_draws, McmcResult};
use crate::model::{LatencyFamily, INTERCEPT};

/// Credible level of reported intervals.
pub const CI_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub parameter: String,
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Not reported for the Weibull shape or transformed rows.
    pub p_gt_0: Option<f64>,
}

/// Fixed three-decimal formatting without a negative zero.
pub fn fmt3(x: f64) -> String {
    if !x.is_finite() {
        return "NA".to_string();
    }
    let s = format!("{x:.3}");
    if s == "-0.000" {
        "0.000".to_string()
    } else {
        s
    }
}

fn latency_intercept(names: &[String]) -> Option<usize> {
    let target = format!("lat:{INTERCEPT}");
    names.iter().position(|n| *n == target)
}

/// Rows for every coefficient, the Weibull shape, and under PH the
/// exponentiated latency intercept.
pub fn summary_table(pm: &PosteriorMarginals, fam: LatencyFamily) -> Vec<SummaryRow> {
    summary_rows(&pm.names, &pm.coefficients, &pm.log_shape, fam)
}

/// Summary rows from any coefficient marginals (layout order, named by
/// `names`) and a log-shape marginal.
pub fn summary_rows<C: Marginal, S: Marginal + Clone>(
    names: &[String],
    coefficients: &[C],
    log_shape: &S,
    fam: LatencyFamily,
) -> Vec<SummaryRow> {
    let tail = 0.5 * (1.0 - CI_LEVEL);
    let mut rows: Vec<SummaryRow> = coefficients
        .iter()
        .zip(names)
        .map(|(m, name)| SummaryRow {
            parameter: name.clone(),
            mean: m.mean(),
            sd: m.sd(),
            ci_low: m.quantile(tail),
            ci_high: m.quantile(1.0 - tail),
            p_gt_0: Some(m.prob_positive()),
        })
        .collect();
    let shape = ShapeMarginal(log_shape.clone());
    rows.push(SummaryRow {
        parameter: "alpha".into(),
        mean: shape.mean(),
        sd: shape.sd(),
        ci_low: shape.quantile(tail),
        ci_high: shape.quantile(1.0 - tail),
        p_gt_0: None,
    });
    if fam == LatencyFamily::WeibullPh {
        if let Some(j) = latency_intercept(names) {
            let e = exp_summary(&coefficients[j], CI_LEVEL);
            rows.push(SummaryRow {
                parameter: format!("exp({})", names[j]),
                mean: e.mean,
                sd: e.sd,
                ci_low: e.ci_low,
                ci_high: e.ci_high,
                p_gt_0: None,
            });
        }
    }
    rows
}

/// The same rows computed from sampler draws.
pub fn summary_table_draws(res: &McmcResult) -> Vec<SummaryRow> {
    let k = res.dim() - 1;
    let row = |parameter: String, v: &[f64], with_p: bool| {
        let s = summarize_draws(v, CI_LEVEL);
        SummaryRow {
            parameter,
            mean: s.mean,
            sd: s.sd,
            ci_low: s.ci_low,
            ci_high: s.ci_high,
            p_gt_0: with_p.then_some(s.p_gt_0),
        }
    };
    let mut rows: Vec<SummaryRow> = (0..k).map(|j| row(res.names[j].clone(), &res.pooled(j), true)).collect();
    let alpha: Vec<f64> = res.pooled(k).iter().map(|v| v.exp()).collect();
    rows.push(row("alpha".into(), &alpha, false));
    if res.family == LatencyFamily::WeibullPh {
        if let Some(j) = latency_intercept(&res.names) {
            let e: Vec<f64> = res.pooled(j).iter().map(|v| v.exp()).collect();
            rows.push(row(format!("exp({})", res.names[j]), &e, false));
        }
    }
    rows
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], mut out: W) -> Result<()> {
    writeln!(out, "parameter,mean,sd,ci_low,ci_high,p_gt_0")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.parameter,
            fmt3(r.mean),
            fmt3(r.sd),
            fmt3(r.ci_low),
            fmt3(r.ci_high),
            r.p_gt_0.map_or("-".to_string(), fmt3)
        )?;
    }
    Ok(())
}

pub fn write_cure_csv<W: Write>(derived: &Derived, mut out: W) -> Result<()> {
    writeln!(out, "profile,mean,sd,ci_low,ci_high")?;
    for c in &derived.cure {
        writeln!(
            out,
            "{},{},{},{},{}",
            c.profile,
            fmt3(c.mean),
            fmt3(c.sd),
            fmt3(c.ci_low),
            fmt3(c.ci_high)
        )?;
    }
    Ok(())
}

/// Long format: one line per (time, profile).
pub fn write_survival_csv<W: Write>(derived: &Derived, mut out: W) -> Result<()> {
    writeln!(out, "t,group,mean_Su")?;
    for (c, t) in derived.times.iter().enumerate() {
        for s in &derived.survival {
            writeln!(out, "{},{},{}", fmt3(*t), s.profile, fmt3(s.mean[c]))?;
        }
    }
    Ok(())
}

/// Equally spaced time grid from `t_max / points` to `t_max`.
pub fn time_grid(t_max: f64, points: usize) -> Vec<f64> {
    (1..=points).map(|k| t_max * k as f64 / points as f64).collect()
}

/// Side-by-side comparison of two summaries over their shared parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub parameter: String,
    pub fit_mean: f64,
    pub mcmc_mean: f64,
    pub abs_diff: f64,
    pub fit_sd: f64,
    pub mcmc_sd: f64,
}

pub fn compare_tables(fit: &[SummaryRow], mcmc: &[SummaryRow]) -> Vec<CompareRow> {
    fit.iter()
        .filter_map(|a| {
            let b = mcmc.iter().find(|b| b.parameter == a.parameter)?;
            Some(CompareRow {
                parameter: a.parameter.clone(),
                fit_mean: a.mean,
                mcmc_mean: b.mean,
                abs_diff: (a.mean - b.mean).abs(),
                fit_sd: a.sd,
                mcmc_sd: b.sd,
            })
        })
        .collect()
}

pub fn write_compare_csv<W: Write>(rows: &[CompareRow], mut out: W) -> Result<()> {
    writeln!(out, "parameter,fit_mean,mcmc_mean,abs_diff,fit_sd,mcmc_sd")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.parameter,
            fmt3(r.fit_mean),
            fmt3(r.mcmc_mean),
            fmt3(r.abs_diff),
            fmt3(r.fit_sd),
            fmt3(r.mcmc_sd)
        )?;
    }
    Ok(())
}

/// Ordered `key = value` pairs describing a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string().replace(['\n', '\r'], " ");
        self.entries.push((key.to_string(), value));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|e| e.0 == key).map(|e| e.1.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for (k, v) in &self.entries {
            writeln!(out, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Joins numbers with commas using the shortest round-trip representation.
pub fn join_numbers(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Writes `name` under `dir` through `fill`, creating the directory first.
pub fn write_file(dir: &Path, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut buf = Vec::new();
    fill(&mut buf)?;
    fs::write(dir.join(name), buf)?;
    Ok(())
}
