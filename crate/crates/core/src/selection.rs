//! Predictive model choice (PMCC) over a grid of factor counts.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::gmrf::AdjacencyMatrix;
use crate::mcmc::{gelman_rubin, run_chains, select_anchor_states, ChainConfig, ModelSpec, PosteriorDraws, PriorConfig, SweepData};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmccResult {
    pub m: usize,
    pub l: usize,
    /// `G`: squared distance between the data and the replicate means.
    pub goodness: f64,
    /// `P`: summed replicate variances.
    pub penalty: f64,
    /// `None` means `ζ = ∞`.
    pub zeta: Option<f64>,
    pub pmcc: f64,
}

/// `ζ/(ζ+1) G + P`, or `G + P` for infinite `ζ`.
pub fn pmcc_value(goodness: f64, penalty: f64, zeta: Option<f64>) -> f64 {
    match zeta {
        None => goodness + penalty,
        Some(z) => z / (z + 1.0) * goodness + penalty,
    }
}

/// `G` and `P` from replicate panels (each `T × n`). Cells missing in `y`
/// are skipped. Variances use the `n-1` divisor.
pub fn pmcc_from_replicates(replicates: &[DMatrix<f64>], y: &DMatrix<f64>, zeta: Option<f64>) -> Result<(f64, f64, f64)> {
    if replicates.is_empty() {
        return Err(Error::EmptyChain);
    }
    if replicates.iter().any(|r| r.shape() != y.shape()) {
        return Err(dim_err("replicate shape differs from data"));
    }
    let n = replicates.len() as f64;
    let (mut g, mut p) = (0.0, 0.0);
    for t in 0..y.nrows() {
        for i in 0..y.ncols() {
            let obs = y[(t, i)];
            if obs.is_nan() {
                continue;
            }
            let mean = replicates.iter().map(|r| r[(t, i)]).sum::<f64>() / n;
            let var = if replicates.len() > 1 {
                replicates.iter().map(|r| (r[(t, i)] - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            g += (obs - mean).powi(2);
            p += var;
        }
    }
    Ok((g, p, pmcc_value(g, p, zeta)))
}

/// One replicate of `Y` per retained draw, from that draw's factor path,
/// loadings, means and observation variances.
pub fn replicate_y<R: Rng + ?Sized>(draws: &PosteriorDraws, rng: &mut R) -> Vec<DMatrix<f64>> {
    draws
        .params
        .iter()
        .zip(&draws.factors)
        .map(|(p, f)| {
            let m = p.m();
            let g = f.values.columns(0, m);
            let fitted = g * p.meas.hy.transpose();
            DMatrix::from_fn(fitted.nrows(), fitted.ncols(), |t, i| {
                let z: f64 = rng.sample(StandardNormal);
                p.meas.mean_y[i] + fitted[(t, i)] + p.meas.obs_var_y[i].sqrt() * z
            })
        })
        .collect()
}

/// PMCC on the `Y` panel using all retained draws of all chains.
pub fn pmcc<R: Rng + ?Sized>(chains: &[PosteriorDraws], y: &DMatrix<f64>, zeta: Option<f64>, rng: &mut R) -> Result<PmccResult> {
    let first = chains.iter().find_map(|c| c.params.first()).ok_or(Error::EmptyChain)?;
    let (m, l) = (first.m(), first.l());
    let reps: Vec<DMatrix<f64>> = chains.iter().flat_map(|c| replicate_y(c, rng)).collect();
    let (goodness, penalty, value) = pmcc_from_replicates(&reps, y, zeta)?;
    Ok(PmccResult { m, l, goodness, penalty, zeta, pmcc: value })
}

/// Outcome of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub m: usize,
    pub l: usize,
    pub result: std::result::Result<PmccResult, String>,
    pub runtime_secs: f64,
    /// Deviance `R < 1.1` across chains (true for a single chain).
    pub converged: bool,
}

/// Panel and model settings shared by every grid point.
#[derive(Debug, Clone, Copy)]
pub struct GridInput<'a> {
    pub y: &'a DMatrix<f64>,
    pub x: &'a DMatrix<f64>,
    pub adjacency: &'a AdjacencyMatrix,
    pub n_y_vars: usize,
    pub n_x_vars: usize,
    pub order: usize,
    pub prior: &'a PriorConfig,
    pub regions: Option<&'a [String]>,
}

/// Fits every `(m, l)` and ranks the successful points by ascending PMCC;
/// failed points follow in grid order.
pub fn grid_search(input: &GridInput, grid: &[(usize, usize)], config: &ChainConfig, zeta: Option<f64>) -> Result<Vec<GridPoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty model grid".into()));
    }
    let n_sites = input.adjacency.n_sites();
    let mut points: Vec<GridPoint> = grid
        .iter()
        .map(|&(m, l)| {
            let start = Instant::now();
            let outcome = fit_point(input, n_sites, m, l, config, zeta);
            let runtime_secs = start.elapsed().as_secs_f64();
            match outcome {
                Ok((res, converged)) => GridPoint { m, l, result: Ok(res), runtime_secs, converged },
                Err(e) => GridPoint { m, l, result: Err(e.to_string()), runtime_secs, converged: false },
            }
        })
        .collect();
    points.sort_by(|a, b| match (&a.result, &b.result) {
        (Ok(x), Ok(y)) => x.pmcc.total_cmp(&y.pmcc),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => std::cmp::Ordering::Equal,
    });
    Ok(points)
}

fn fit_point(input: &GridInput, n_sites: usize, m: usize, l: usize, config: &ChainConfig, zeta: Option<f64>) -> Result<(PmccResult, bool)> {
    let mut spec = ModelSpec::new(n_sites, input.n_y_vars, input.n_x_vars, m, l, input.order);
    let (ay, ax) = select_anchor_states(input.y, input.x, n_sites, m, l, input.regions, config.seed)?;
    spec.anchors_y = ay;
    spec.anchors_x = ax;
    let data = SweepData { y: input.y, x: input.x, adjacency: input.adjacency, spec: &spec, prior: input.prior };
    let (_, chains) = run_chains(&data, config)?;
    let converged = if chains.len() > 1 && chains[0].len() > 1 {
        let dev: Vec<Vec<f64>> = chains.iter().map(|c| c.deviance.clone()).collect();
        gelman_rubin(&dev).map(|r| r < 1.1).unwrap_or(false)
    } else {
        true
    };
    let mut rng = crate::mcmc::chain_rng(config.seed, u64::MAX);
    Ok((pmcc(&chains, input.y, zeta, &mut rng)?, converged))
}

/// Grid report with columns `m,l,G,P,PMCC,runtime,converged`.
pub fn write_grid_csv(path: &Path, points: &[GridPoint]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "m,l,G,P,PMCC,runtime,converged")?;
    for p in points {
        let (g, pen, v) = match &p.result {
            Ok(r) => (r.goodness, r.penalty, r.pmcc),
            Err(_) => (f64::NAN, f64::NAN, f64::NAN),
        };
        writeln!(buf, "{},{},{},{},{},{:.3},{}", p.m, p.l, g, pen, v, p.runtime_secs, p.converged)?;
    }
    crate::io::write_atomic(path, &buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_replicates() {
        let y = DMatrix::from_fn(4, 3, |t, i| (t * 3 + i) as f64);
        let (g, p, v) = pmcc_from_replicates(&[y.clone(), y.clone()], &y, None).unwrap();
        assert_eq!((g, p, v), (0.0, 0.0, 0.0));
    }

    #[test]
    fn noisy_replicates_penalty() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = DMatrix::from_fn(10, 10, |t, i| (t as f64 * 0.3 - i as f64).sin());
        let reps: Vec<DMatrix<f64>> =
            (0..10_000).map(|_| DMatrix::from_fn(10, 10, |t, i| y[(t, i)] + rng.sample::<f64, _>(StandardNormal))).collect();
        let (g, p, _) = pmcc_from_replicates(&reps, &y, None).unwrap();
        assert!((p - 100.0).abs() < 10.0);
        assert!(g < 0.1);
    }

    #[test]
    fn finite_zeta_weights_goodness() {
        let y = DMatrix::from_element(1, 1, 0.0);
        let reps = vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 3.0)];
        let (g, p, v) = pmcc_from_replicates(&reps, &y, Some(1.0)).unwrap();
        assert_eq!(g, 4.0);
        assert_eq!(p, 2.0);
        assert!((v - (g / 2.0 + p)).abs() < 1e-12);
        assert!(matches!(pmcc_from_replicates(&[], &y, None), Err(Error::EmptyChain)));
    }
}
