//! Predictive simulation of `Y`: unconditional and conditional on a future
//! path of `X`, plus accuracy metrics.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg;
use crate::mcmc::{PosteriorDraws, SdSemParams};
use crate::state_space::{FactorDynamics, FactorPath};

/// Draws whose magnitude exceeds this are treated as explosive.
pub const EXPLOSIVE_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastOptions {
    pub horizon: usize,
    /// Predictive replicates per retained draw.
    pub replicates: usize,
    pub level: f64,
    /// Conditional mode only: propagate `g` without state noise.
    pub deterministic: bool,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        ForecastOptions { horizon: 4, replicates: 1, level: 0.95, deterministic: false }
    }
}

#[derive(Debug, Clone)]
pub struct ForecastResult {
    pub horizon: usize,
    pub level: f64,
    /// Each draw is `K × ñ_y`, row `k` holding step `k+1`.
    pub draws: Vec<DMatrix<f64>>,
    pub median: DMatrix<f64>,
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
    /// Draws dropped as explosive.
    pub n_explosive: usize,
    /// Parameter draws skipped because `H_x` was rank deficient.
    pub n_rank_deficient: usize,
}

impl ForecastResult {
    fn from_draws(draws: Vec<DMatrix<f64>>, horizon: usize, n_series: usize, level: f64, n_explosive: usize, n_rank_deficient: usize) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::EmptyChain);
        }
        let lo_p = (1.0 - level) / 2.0;
        let hi_p = 1.0 - lo_p;
        let mut median = DMatrix::zeros(horizon, n_series);
        let mut lower = DMatrix::zeros(horizon, n_series);
        let mut upper = DMatrix::zeros(horizon, n_series);
        let mut cell = Vec::with_capacity(draws.len());
        for k in 0..horizon {
            for i in 0..n_series {
                cell.clear();
                cell.extend(draws.iter().map(|d| d[(k, i)]));
                cell.sort_by(f64::total_cmp);
                median[(k, i)] = linalg::quantile_sorted(&cell, 0.5);
                lower[(k, i)] = linalg::quantile_sorted(&cell, lo_p);
                upper[(k, i)] = linalg::quantile_sorted(&cell, hi_p);
            }
        }
        Ok(ForecastResult { horizon, level, draws, median, lower, upper, n_explosive, n_rank_deficient })
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    /// Summaries at another credible level from the stored draws.
    pub fn with_level(&self, level: f64) -> Result<Self> {
        let n = self.median.ncols();
        ForecastResult::from_draws(self.draws.clone(), self.horizon, n, level, self.n_explosive, self.n_rank_deficient)
    }

    /// Columns `site,step,median,lower,upper,n_draws`; `site` is the series
    /// index within `Y`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        writeln!(buf, "site,step,median,lower,upper,n_draws")?;
        for i in 0..self.median.ncols() {
            for k in 0..self.horizon {
                writeln!(buf, "{},{},{},{},{},{}", i, k + 1, self.median[(k, i)], self.lower[(k, i)], self.upper[(k, i)], self.n_draws())?;
            }
        }
        crate::io::write_atomic(path, &buf)
    }
}

/// `(Φ^k α, Σ_j Φ^{k-j} Σ Φ^{k-j}')`, the `k`-step state moments.
pub fn state_forecast_moments(phi: &DMatrix<f64>, sigma: &DMatrix<f64>, alpha: &DVector<f64>, k: usize) -> (DVector<f64>, DMatrix<f64>) {
    let mut mean = alpha.clone();
    let mut cov = DMatrix::zeros(phi.nrows(), phi.ncols());
    for _ in 0..k {
        mean = phi * mean;
        cov = phi * cov * phi.transpose() + sigma;
    }
    (mean, cov)
}

/// `α(T) = [d(T), d(T-1), …]` from a factor path; periods before the
/// start repeat the first row.
pub fn terminal_state(path: &FactorPath, order: usize) -> DVector<f64> {
    let (t_len, k) = (path.len(), path.dim());
    let mut a = DVector::zeros(k * order);
    for lag in 0..order {
        if t_len == 0 {
            break;
        }
        let t = t_len.saturating_sub(1 + lag);
        a.rows_mut(lag * k, k).copy_from(&path.values.row(t).transpose());
    }
    a
}

fn is_explosive(m: &DMatrix<f64>) -> bool {
    m.iter().any(|v| !v.is_finite() || v.abs() > EXPLOSIVE_LIMIT)
}

fn noise_chol(cov: &DMatrix<f64>) -> DMatrix<f64> {
    match linalg::cholesky(cov) {
        Ok(c) => c.l(),
        // PSD fallback: clamp negative eigenvalues
        Err(_) => linalg::sym_fn(cov, |v| v.max(0.0).sqrt()),
    }
}

fn gaussian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    linalg::standard_normal_vec(n, rng)
}

/// Composition sampling: for each retained draw, propagate the companion
/// state from `α(T)` with state noise, then add observation noise.
pub fn forecast_unconditional<R: Rng + ?Sized>(chains: &[PosteriorDraws], opts: &ForecastOptions, rng: &mut R) -> Result<ForecastResult> {
    let k_h = opts.horizon;
    let mut out = Vec::new();
    let mut n_series = 0;
    let mut explosive = 0;
    for chain in chains {
        for (params, path) in chain.params.iter().zip(&chain.factors) {
            let ss = params.state_space()?;
            let q_chol = &ss.input * noise_chol(&ss.state_noise_cov);
            let ny = params.meas.n_y();
            n_series = ny;
            let alpha_t = terminal_state(path, ss.order);
            for _ in 0..opts.replicates.max(1) {
                let mut alpha = alpha_t.clone();
                let mut y = DMatrix::zeros(k_h, ny);
                for k in 0..k_h {
                    alpha = &ss.transition * alpha + &q_chol * gaussian(q_chol.ncols(), rng);
                    let g = alpha.rows(0, params.m());
                    let mean = &params.meas.mean_y + &params.meas.hy * g;
                    for i in 0..ny {
                        y[(k, i)] = mean[i] + params.meas.obs_var_y[i].sqrt() * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                if is_explosive(&y) {
                    explosive += 1;
                } else {
                    out.push(y);
                }
            }
        }
    }
    ForecastResult::from_draws(out, k_h, n_series, opts.level, explosive, 0)
}

/// `f_k = H_x†(X_k - m_x)` for each row of `x_future`.
pub fn conditional_factors(hx: &DMatrix<f64>, mean_x: &DVector<f64>, x_future: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x_future.ncols() != hx.nrows() || mean_x.len() != hx.nrows() {
        return Err(dim_err("future X width differs from H_x rows"));
    }
    let pinv = linalg::left_pinv(hx).map_err(|_| Error::RankDeficientLoadings)?;
    let mut f = DMatrix::zeros(x_future.nrows(), hx.ncols());
    for k in 0..x_future.nrows() {
        let xc = x_future.row(k).transpose() - mean_x;
        f.row_mut(k).copy_from(&(&pinv * xc).transpose());
    }
    Ok(f)
}

/// `g(T+k)` given the `f` path implied by `x_future` (`K × ñ_x`).
fn conditional_g_path<R: Rng + ?Sized>(
    dynamics: &FactorDynamics,
    path: &FactorPath,
    f_future: &DMatrix<f64>,
    deterministic: bool,
    rng: &mut R,
) -> DMatrix<f64> {
    let (m, l) = (dynamics.m(), dynamics.l());
    let t_len = path.len();
    let k_h = f_future.nrows();
    let xi_chol = noise_chol(&dynamics.state_cov_g);
    let mut g = DMatrix::zeros(k_h, m);
    // value of g or f at absolute period index `s` (0-based, s < t_len is history)
    let hist = |s: isize, off: usize, width: usize| -> DVector<f64> {
        let s = s.clamp(0, t_len as isize - 1) as usize;
        DVector::from_iterator(width, (0..width).map(|j| path.values[(s, off + j)]))
    };
    for k in 0..k_h {
        let now = (t_len + k) as isize;
        let mut v = DVector::zeros(m);
        for (i, c) in dynamics.c.iter().enumerate() {
            let s = now - 1 - i as isize;
            let gs = if s >= t_len as isize { g.row(s as usize - t_len).transpose() } else { hist(s, 0, m) };
            v += c * gs;
        }
        for (i, d) in dynamics.d.iter().enumerate() {
            let s = now - 1 - i as isize;
            let fs = if s >= t_len as isize { f_future.row(s as usize - t_len).transpose() } else { hist(s, m, l) };
            v += d * fs;
        }
        if !deterministic {
            v += &xi_chol * gaussian(m, rng);
        }
        g.row_mut(k).copy_from(&v.transpose());
    }
    g
}

/// Scenario forecast: each draw maps the future `X` (`K × ñ_x`) to `f`
/// through its loading pseudo-inverse and carries `g` forward.
pub fn forecast_conditional<R: Rng + ?Sized>(
    chains: &[PosteriorDraws],
    x_future: &DMatrix<f64>,
    opts: &ForecastOptions,
    rng: &mut R,
) -> Result<ForecastResult> {
    let k_h = x_future.nrows();
    if k_h == 0 {
        return Err(dim_err("empty future X"));
    }
    if x_future.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("future X must be complete".into()));
    }
    let mut out = Vec::new();
    let (mut n_series, mut explosive, mut skipped) = (0, 0, 0);
    for chain in chains {
        for (params, path) in chain.params.iter().zip(&chain.factors) {
            n_series = params.meas.n_y();
            let f_future = match conditional_factors(&params.meas.hx, &params.meas.mean_x, x_future) {
                Ok(f) => f,
                Err(Error::RankDeficientLoadings) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let dynamics = params.dynamics()?;
            for _ in 0..opts.replicates.max(1) {
                let g = conditional_g_path(&dynamics, path, &f_future, opts.deterministic, rng);
                let y = y_from_g(params, &g, rng);
                if is_explosive(&y) {
                    explosive += 1;
                } else {
                    out.push(y);
                }
            }
        }
    }
    ForecastResult::from_draws(out, k_h, n_series, opts.level, explosive, skipped)
}

fn y_from_g<R: Rng + ?Sized>(params: &SdSemParams, g: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
    let fitted = g * params.meas.hy.transpose();
    DMatrix::from_fn(fitted.nrows(), fitted.ncols(), |k, i| {
        params.meas.mean_y[i] + fitted[(k, i)] + params.meas.obs_var_y[i].sqrt() * rng.sample::<f64, _>(StandardNormal)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub cp: f64,
    pub aiw: f64,
    pub level: f64,
    pub n_cells: usize,
}

/// `(rmse, mae)` of a list of errors.
pub fn rmse_mae(errors: &[f64]) -> (f64, f64) {
    if errors.is_empty() {
        return (0.0, 0.0);
    }
    let n = errors.len() as f64;
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    (rmse, mae)
}

/// Accuracy of the median forecast against held-out values (`K × ñ_y`,
/// same units as the forecast). With `back_transform` every quantity is
/// mapped through `exp` first. Missing truth cells are skipped.
pub fn forecast_metrics(result: &ForecastResult, truth: &DMatrix<f64>, back_transform: bool) -> Result<ForecastMetrics> {
    if truth.shape() != result.median.shape() {
        return Err(Error::AlignmentMismatch(format!(
            "truth is {}x{}, forecast is {}x{}",
            truth.nrows(),
            truth.ncols(),
            result.median.nrows(),
            result.median.ncols()
        )));
    }
    let tr = |v: f64| if back_transform { v.exp() } else { v };
    let mut errors = Vec::new();
    let (mut inside, mut width) = (0usize, 0.0);
    for k in 0..truth.nrows() {
        for i in 0..truth.ncols() {
            let y = truth[(k, i)];
            if y.is_nan() {
                continue;
            }
            let (y, med, lo, hi) = (tr(y), tr(result.median[(k, i)]), tr(result.lower[(k, i)]), tr(result.upper[(k, i)]));
            errors.push(y - med);
            if lo <= y && y <= hi {
                inside += 1;
            }
            width += hi - lo;
        }
    }
    let n = errors.len();
    let (rmse, mae) = rmse_mae(&errors);
    debug_assert!(rmse + 1e-12 >= mae);
    Ok(ForecastMetrics {
        rmse,
        mae,
        cp: if n > 0 { inside as f64 / n as f64 } else { 0.0 },
        aiw: if n > 0 { width / n as f64 } else { 0.0 },
        level: result.level,
        n_cells: n,
    })
}
