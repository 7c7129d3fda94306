//! Convergence diagnostics across chains.

use super::chain::PosteriorDraws;
use crate::error::{dim_err, Error, Result};

/// Potential scale reduction `√(((n-1)/n · W + B/n) / W)` for one scalar.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(dim_err("need at least two chains"));
    }
    let n = chains[0].len();
    if n < 2 || chains.iter().any(|c| c.len() != n) {
        return Err(dim_err("chains must share a length of at least 2"));
    }
    let k = chains.len() as f64;
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let grand = means.iter().sum::<f64>() / k;
    let b = nf / (k - 1.0) * means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / k;
    if !(w > 0.0) {
        return Err(Error::ZeroWithinVariance);
    }
    Ok((((nf - 1.0) / nf * w + b / nf) / w).sqrt())
}

/// Names eligible for the convergence check: free loadings, observation
/// variances and the deviance. Fixed anchor entries and the level-confounded
/// means are left out.
pub fn monitored_parameters(chains: &[PosteriorDraws]) -> Vec<(String, usize)> {
    let Some(first) = chains.first().and_then(|c| c.params.first()) else {
        return Vec::new();
    };
    let first_vals = first.values();
    first
        .named_values()
        .into_iter()
        .enumerate()
        .filter(|(idx, (name, _))| {
            let eligible = name.starts_with("hy.") || name.starts_with("hx.") || name.starts_with("sigma2_");
            // constant across every draw of every chain means fixed
            eligible && !chains.iter().all(|c| c.params.iter().all(|p| p.values()[*idx] == first_vals[*idx]))
        })
        .map(|(idx, (name, _))| (name, idx))
        .collect()
}

/// `R` for the deviance and each monitored parameter.
pub fn convergence_table(chains: &[PosteriorDraws]) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    let dev: Vec<Vec<f64>> = chains.iter().map(|c| c.deviance.clone()).collect();
    out.push(("deviance".to_string(), gelman_rubin(&dev)?));
    let traces: Vec<Vec<Vec<f64>>> = chains
        .iter()
        .map(|c| {
            c.params.iter().map(|p| p.values()).collect::<Vec<_>>()
        })
        .collect();
    for (name, idx) in monitored_parameters(chains) {
        let series: Vec<Vec<f64>> = traces.iter().map(|rows| rows.iter().map(|r| r[idx]).collect()).collect();
        out.push((name, gelman_rubin(&series)?));
    }
    Ok(out)
}
