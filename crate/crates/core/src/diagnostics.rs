//! Convergence diagnostics for sampled chains.

use crate::error::{Error, Result};

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

fn check_chains(chains: &[&[f64]]) -> Result<usize> {
    if chains.len() < 2 {
        return Err(Error::Contract("need at least 2 chains".into()));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::Contract("chains must have equal lengths".into()));
    }
    if n < 10 {
        return Err(Error::Contract(format!("chains must have at least 10 draws, got {n}")));
    }
    Ok(n)
}

/// Split-chain potential scale reduction factor.
///
/// Each chain is cut into halves (the middle draw of odd-length chains is
/// dropped) and the Gelman-Rubin ratio is computed over the halves. The
/// result is floored at 1; chains that are all constant at the same value
/// give exactly 1.
pub fn psrf(chains: &[&[f64]]) -> Result<f64> {
    let n = check_chains(chains)?;
    let half = n / 2;
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[n - half..]])
        .collect();
    let stats: Vec<(f64, f64)> = halves.iter().map(|h| mean_var(h)).collect();
    let m = stats.len() as f64;
    let len = half as f64;
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m;
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / m;
    let b = len * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>() / (m - 1.0);
    if w <= 0.0 {
        return Ok(if b <= 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (len - 1.0) / len * w + b / len;
    Ok((var_plus / w).sqrt().max(1.0))
}

/// Autocovariance of `x` at `lag` with the biased (divide by n) estimator.
fn autocov(x: &[f64], mean: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - mean) * (b - mean))
        .sum::<f64>()
        / n as f64
}

/// Multi-chain effective sample size with Geyer's initial monotone
/// positive-sequence truncation.
pub fn ess(chains: &[&[f64]]) -> Result<f64> {
    let n = check_chains(chains)?;
    let m = chains.len() as f64;
    let stats: Vec<(f64, f64)> = chains.iter().map(|c| mean_var(c)).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m;
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / m;
    let b = n as f64 * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>() / (m - 1.0);
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    let total = m * n as f64;
    if var_plus <= 0.0 {
        return Ok(total);
    }
    let rho = |t: usize| {
        let mean_acov = chains
            .iter()
            .zip(&stats)
            .map(|(c, s)| autocov(c, s.0, t))
            .sum::<f64>()
            / m;
        1.0 - (w - mean_acov) / var_plus
    };
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev);
        tau += 2.0 * pair;
        prev = pair;
        t += 2;
    }
    // floor as in common practice, which caps ESS at total * log10(total)
    Ok(total / tau.max(1.0 / total.log10()))
}
