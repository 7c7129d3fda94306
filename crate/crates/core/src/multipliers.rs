//! Dynamic multipliers `Γ_k = H_y J Q^k B H_x†`.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg;
use crate::mcmc::{PosteriorDraws, SdSemParams};
use crate::state_space::FactorDynamics;

/// Selector, transition and input matrices of the `g`-equation written as
/// a first-order system in `w(t) = [g(t), …, g(t-p+1), f(t), …, f(t-s+1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionJqb {
    pub selector: DMatrix<f64>,
    pub transition: DMatrix<f64>,
    pub input: DMatrix<f64>,
}

/// `f` enters as an exogenous forcing: its block holds shift registers
/// only, with a zero first row where the shock is injected.
pub fn build_jqb(dynamics: &FactorDynamics) -> Result<CompanionJqb> {
    dynamics.validate()?;
    let (m, l) = (dynamics.m(), dynamics.l());
    let p = dynamics.c.len().max(1);
    let s = dynamics.d.len().max(1);
    let dim = m * p + l * s;
    let mut q = DMatrix::zeros(dim, dim);
    for (i, c) in dynamics.c.iter().enumerate() {
        q.view_mut((0, i * m), (m, m)).copy_from(c);
    }
    for (j, d) in dynamics.d.iter().enumerate() {
        q.view_mut((0, m * p + j * l), (m, l)).copy_from(d);
    }
    for i in 1..p {
        q.view_mut((i * m, (i - 1) * m), (m, m)).fill_with_identity();
    }
    for j in 1..s {
        q.view_mut((m * p + j * l, m * p + (j - 1) * l), (l, l)).fill_with_identity();
    }
    let mut selector = DMatrix::zeros(m, dim);
    selector.view_mut((0, 0), (m, m)).fill_with_identity();
    let mut input = DMatrix::zeros(dim, l);
    input.view_mut((m * p, 0), (l, l)).fill_with_identity();
    Ok(CompanionJqb { selector, transition: q, input })
}

/// `Γ_0 … Γ_K`, each `ñ_y × ñ_x`, by repeated multiplication.
pub fn impulse_response(params: &SdSemParams, horizon: usize) -> Result<Vec<DMatrix<f64>>> {
    let jqb = build_jqb(&params.dynamics()?)?;
    let pinv = linalg::left_pinv(&params.meas.hx)?;
    multipliers_from_parts(&params.meas.hy, &jqb, &pinv, horizon)
}

pub fn multipliers_from_parts(hy: &DMatrix<f64>, jqb: &CompanionJqb, hx_pinv: &DMatrix<f64>, horizon: usize) -> Result<Vec<DMatrix<f64>>> {
    if hy.ncols() != jqb.selector.nrows() || hx_pinv.nrows() != jqb.input.ncols() {
        return Err(dim_err("loadings do not match the companion system"));
    }
    let mut v = jqb.input.clone();
    let mut out = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        if k > 0 {
            v = &jqb.transition * v;
        }
        out.push(hy * (&jqb.selector * &v) * hx_pinv);
    }
    Ok(out)
}

/// Posterior summaries of `Γ_k` per entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierSeries {
    pub horizon: usize,
    pub n_draws: usize,
    pub mean: Vec<DMatrix<f64>>,
    pub p16: Vec<DMatrix<f64>>,
    pub p84: Vec<DMatrix<f64>>,
    pub p05: Vec<DMatrix<f64>>,
    pub p95: Vec<DMatrix<f64>>,
}

/// Summaries over every retained draw; draws with rank-deficient `H_x` are
/// skipped.
pub fn multiplier_posterior(chains: &[PosteriorDraws], horizon: usize) -> Result<MultiplierSeries> {
    let mut all: Vec<Vec<DMatrix<f64>>> = Vec::new();
    for chain in chains {
        for p in &chain.params {
            match impulse_response(p, horizon) {
                Ok(g) => all.push(g),
                Err(Error::RankDeficientLoadings) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    summarize(&all, horizon)
}

pub fn summarize(all: &[Vec<DMatrix<f64>>], horizon: usize) -> Result<MultiplierSeries> {
    let first = all.first().ok_or(Error::EmptyChain)?;
    let (r, c) = first[0].shape();
    let n = all.len();
    let mut s = MultiplierSeries { horizon, n_draws: n, mean: vec![], p16: vec![], p84: vec![], p05: vec![], p95: vec![] };
    let mut cell = Vec::with_capacity(n);
    for k in 0..=horizon {
        let mut mats = [DMatrix::zeros(r, c), DMatrix::zeros(r, c), DMatrix::zeros(r, c), DMatrix::zeros(r, c), DMatrix::zeros(r, c)];
        for i in 0..r {
            for j in 0..c {
                cell.clear();
                cell.extend(all.iter().map(|g| g[k][(i, j)]));
                mats[0][(i, j)] = cell.iter().sum::<f64>() / n as f64;
                cell.sort_by(f64::total_cmp);
                for (slot, q) in [(1, 0.16), (2, 0.84), (3, 0.05), (4, 0.95)] {
                    mats[slot][(i, j)] = linalg::quantile_sorted(&cell, q);
                }
            }
        }
        let [mean, p16, p84, p05, p95] = mats;
        s.mean.push(mean);
        s.p16.push(p16);
        s.p84.push(p84);
        s.p05.push(p05);
        s.p95.push(p95);
    }
    Ok(s)
}

impl MultiplierSeries {
    /// Columns `response_site,shock_variable,shock_site,horizon,mean,p16,p84,p05,p95`.
    pub fn write_csv(&self, path: &Path, n_y_vars: usize, n_x_vars: usize) -> Result<()> {
        let mut buf = Vec::new();
        writeln!(buf, "response_site,shock_variable,shock_site,horizon,mean,p16,p84,p05,p95")?;
        let (r, c) = self.mean.first().map_or((0, 0), |m| m.shape());
        for i in 0..r {
            for j in 0..c {
                for k in 0..=self.horizon {
                    writeln!(
                        buf,
                        "{},{},{},{},{},{},{},{},{}",
                        i / n_y_vars.max(1),
                        j % n_x_vars.max(1),
                        j / n_x_vars.max(1),
                        k,
                        self.mean[k][(i, j)],
                        self.p16[k][(i, j)],
                        self.p84[k][(i, j)],
                        self.p05[k][(i, j)],
                        self.p95[k][(i, j)]
                    )?;
                }
            }
        }
        crate::io::write_atomic(path, &buf)
    }
}
