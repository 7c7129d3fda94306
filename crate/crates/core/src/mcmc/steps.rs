//! Full-conditional updates of the Gibbs sweep.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};

use super::params::{ModelSpec, PriorConfig, SdSemParams, StateNoiseMode};
use crate::ecm::EcmBlocks;
use crate::error::{dim_err, Error, Result};
use crate::gmrf::{build_joint_precision, is_pd_matrix, spatial_core, AdjacencyMatrix, GmrfSpec};
use crate::linalg;
use crate::state_space::{FactorPath, MeasurementModel, StatePath};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Observed panels, one row per period.
#[derive(Debug, Clone, Copy)]
pub struct SweepData<'a> {
    pub y: &'a DMatrix<f64>,
    pub x: &'a DMatrix<f64>,
    pub adjacency: &'a AdjacencyMatrix,
    pub spec: &'a ModelSpec,
    pub prior: &'a PriorConfig,
}

impl SweepData<'_> {
    pub fn n_periods(&self) -> usize {
        self.y.nrows()
    }

    /// `[Y, X]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let t = self.y.nrows();
        let (ny, nx) = (self.y.ncols(), self.x.ncols());
        let mut z = DMatrix::zeros(t, ny + nx);
        z.columns_mut(0, ny).copy_from(self.y);
        z.columns_mut(ny, nx).copy_from(self.x);
        z
    }
}

/// ECM coefficients in the non-identified coordinates used by the sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct EcmBar {
    pub a: DMatrix<f64>,
    /// `(m+l) × r_d`.
    pub b: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub af: DMatrix<f64>,
    pub bf: DMatrix<f64>,
    pub k: Vec<DMatrix<f64>>,
    pub phi2: Vec<DMatrix<f64>>,
}

impl EcmBar {
    pub fn zeros(spec: &ModelSpec) -> Self {
        let (m, l, rd, rf, lags) = (spec.m, spec.l, spec.r_d, spec.r_f, spec.order - 1);
        EcmBar {
            a: DMatrix::zeros(m, rd),
            b: DMatrix::zeros(m + l, rd),
            a2: DMatrix::zeros(m, rf),
            af: DMatrix::zeros(l, rf),
            bf: DMatrix::zeros(l, rf),
            k: vec![DMatrix::zeros(m, m + l); lags],
            phi2: vec![DMatrix::zeros(l, l); lags],
        }
    }

    pub fn to_blocks(&self) -> EcmBlocks {
        let m = self.a.nrows();
        EcmBlocks::from_bar(m, &self.a, &self.b, &self.a2, &self.af, &self.bf, self.k.clone(), self.phi2.clone())
    }

    /// Concatenated `(ā, k, φ)` vectors in the SSVS layout.
    pub fn ssvs_coefs(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut a: Vec<f64> = self.a.iter().cloned().collect();
        a.extend(self.a2.iter());
        a.extend(self.af.iter());
        let k = self.k.iter().flat_map(|m| m.iter().cloned()).collect();
        let p = self.phi2.iter().flat_map(|m| m.iter().cloned()).collect();
        (a, k, p)
    }
}

/// Random-walk tuning and acceptance counters for one GMRF column.
#[derive(Debug, Clone, PartialEq)]
pub struct MhTuning {
    pub step: f64,
    window_accepted: usize,
    window_proposed: usize,
    pub coef_accepted: usize,
    pub coef_proposed: usize,
    pub prec_accepted: usize,
    pub prec_proposed: usize,
}

impl MhTuning {
    pub fn new(step: f64) -> Self {
        MhTuning { step, window_accepted: 0, window_proposed: 0, coef_accepted: 0, coef_proposed: 0, prec_accepted: 0, prec_proposed: 0 }
    }

    /// Moves the step toward a 25–40% acceptance window.
    pub fn adapt(&mut self) {
        if self.window_proposed == 0 {
            return;
        }
        let rate = self.window_accepted as f64 / self.window_proposed as f64;
        if rate < 0.25 {
            self.step *= 0.8;
        } else if rate > 0.40 {
            self.step *= 1.25;
        }
        self.window_accepted = 0;
        self.window_proposed = 0;
    }

    pub fn coef_rate(&self) -> f64 {
        ratio(self.coef_accepted, self.coef_proposed)
    }

    pub fn prec_rate(&self) -> f64 {
        ratio(self.prec_accepted, self.prec_proposed)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Everything that changes during a sweep.
#[derive(Debug, Clone)]
pub struct SamplerState {
    pub params: SdSemParams,
    pub bars: EcmBar,
    pub path: StatePath,
    /// One entry per loading column, Y columns first.
    pub tuning: Vec<MhTuning>,
}

impl SamplerState {
    pub fn factors(&self) -> FactorPath {
        self.path.factor_path()
    }
}

/// Minus twice the Gaussian log-likelihood of the panels given the factor
/// path. Missing cells are skipped.
pub fn deviance(meas: &MeasurementModel, y: &DMatrix<f64>, x: &DMatrix<f64>, factors: &FactorPath) -> Result<f64> {
    let (m, l) = (meas.m(), meas.l());
    if factors.dim() != m + l || y.nrows() != factors.len() || x.nrows() != factors.len() {
        return Err(dim_err("deviance: factor path does not match the panels"));
    }
    let g = factors.values.columns(0, m);
    let f = factors.values.columns(m, l);
    let mut total = 0.0;
    for (data, h, mean, var, fac) in [
        (y, &meas.hy, &meas.mean_y, &meas.obs_var_y, g),
        (x, &meas.hx, &meas.mean_x, &meas.obs_var_x, f),
    ] {
        if data.ncols() != h.nrows() {
            return Err(dim_err("deviance: panel width differs from loadings"));
        }
        let fitted = fac * h.transpose();
        for i in 0..data.ncols() {
            let s2 = var[i];
            if !(s2 > 0.0) || !s2.is_finite() {
                return Err(Error::SingularObsCov(format!("variance {s2} for series {i}")));
            }
            for t in 0..data.nrows() {
                let z = data[(t, i)];
                if z.is_nan() {
                    continue;
                }
                let r = z - mean[i] - fitted[(t, i)];
                total += LN_2PI + s2.ln() + r * r / s2;
            }
        }
    }
    Ok(total)
}

/// Loading columns and GMRF mean coefficients for both panels.
pub fn sample_loadings<R: Rng + ?Sized>(state: &mut SamplerState, data: &SweepData, rng: &mut R) -> Result<()> {
    let fac = state.factors().values;
    let (m, l) = (data.spec.m, data.spec.l);
    let g = fac.columns(0, m).into_owned();
    let f = fac.columns(m, l).into_owned();
    let p = &mut state.params;
    sample_side_loadings(
        data.y,
        &p.meas.mean_y,
        &p.meas.obs_var_y,
        &mut p.meas.hy,
        &g,
        &mut p.gmrf_y,
        &data.spec.anchors_y,
        data.adjacency,
        data.prior.loading_mean_var,
        rng,
    )?;
    sample_side_loadings(
        data.x,
        &p.meas.mean_x,
        &p.meas.obs_var_x,
        &mut p.meas.hx,
        &f,
        &mut p.gmrf_x,
        &data.spec.anchors_x,
        data.adjacency,
        data.prior.loading_mean_var,
        rng,
    )
}

/// Column-wise Gaussian update of `h` given the other columns, with the
/// GMRF prior and the anchor constraints, then the conjugate `β` draw.
#[allow(clippy::too_many_arguments)]
pub fn sample_side_loadings<R: Rng + ?Sized>(
    data: &DMatrix<f64>,
    mean: &DVector<f64>,
    var: &DVector<f64>,
    h: &mut DMatrix<f64>,
    factors: &DMatrix<f64>,
    gmrf: &mut [GmrfSpec],
    anchors: &[usize],
    adjacency: &AdjacencyMatrix,
    beta_var: f64,
    rng: &mut R,
) -> Result<()> {
    let (t_len, n) = data.shape();
    let k = h.ncols();
    // residuals with every column removed
    let mut resid = DMatrix::zeros(t_len, n);
    let fitted = factors * h.transpose();
    for i in 0..n {
        for t in 0..t_len {
            resid[(t, i)] = data[(t, i)] - mean[i] - fitted[(t, i)];
        }
    }
    for j in 0..k {
        let fj = factors.column(j);
        let mut w = DVector::zeros(n);
        let mut c = DVector::zeros(n);
        for i in 0..n {
            let hij = h[(i, j)];
            let (mut ww, mut cc) = (0.0, 0.0);
            for t in 0..t_len {
                let r = resid[(t, i)];
                if r.is_nan() {
                    continue;
                }
                let ft = fj[t];
                ww += ft * ft;
                cc += (r + hij * ft) * ft;
            }
            w[i] = ww / var[i];
            c[i] = cc / var[i];
        }
        let joint = build_joint_precision(adjacency, &gmrf[j])?;
        let mut prec = joint.precision.clone();
        for i in 0..n {
            prec[(i, i)] += w[i];
        }
        let lin = &joint.precision * &joint.mean + c;
        let fixed = ModelSpec::fixed_loadings(anchors, j);
        let new_col = conditional_gaussian_draw(&prec, &lin, &fixed, rng)?;
        for i in 0..n {
            let delta = new_col[i] - h[(i, j)];
            if delta != 0.0 {
                for t in 0..t_len {
                    resid[(t, i)] -= delta * fj[t];
                }
            }
            h[(i, j)] = new_col[i];
        }
        // β | h_j
        let spec = &mut gmrf[j];
        let d = &spec.mean_design;
        let q = &joint.precision;
        let mut bp = d.transpose() * q * d;
        for a in 0..bp.nrows() {
            bp[(a, a)] += 1.0 / beta_var;
        }
        let bl = d.transpose() * (q * h.column(j));
        spec.mean_coef = linalg::mvn_from_precision(&bp, &bl, rng)?.0;
    }
    Ok(())
}

/// Draws `x ~ N(P^{-1} b, P^{-1})` with the listed entries held fixed.
pub fn conditional_gaussian_draw<R: Rng + ?Sized>(
    prec: &DMatrix<f64>,
    lin: &DVector<f64>,
    fixed: &[(usize, f64)],
    rng: &mut R,
) -> Result<DVector<f64>> {
    let n = lin.len();
    let mut is_fixed = vec![None; n];
    for &(i, v) in fixed {
        is_fixed[i] = Some(v);
    }
    let free: Vec<usize> = (0..n).filter(|i| is_fixed[*i].is_none()).collect();
    let mut out = DVector::zeros(n);
    for &(i, v) in fixed {
        out[i] = v;
    }
    if free.is_empty() {
        return Ok(out);
    }
    let nf = free.len();
    let puu = DMatrix::from_fn(nf, nf, |a, b| prec[(free[a], free[b])]);
    let bu = DVector::from_fn(nf, |a, _| {
        let i = free[a];
        let adj: f64 = fixed.iter().map(|&(j, v)| prec[(i, j)] * v).sum();
        lin[i] - adj
    });
    let (draw, _) = linalg::mvn_from_precision(&puu, &bu, rng)?;
    for (a, &i) in free.iter().enumerate() {
        out[i] = draw[a];
    }
    Ok(out)
}

/// Unnormalized Wishart log-density `W(X; ν, V)`; terms depending only on
/// `(ν, p)` are dropped.
pub fn wishart_log_density(x: &DMatrix<f64>, df: f64, scale: &DMatrix<f64>) -> Result<f64> {
    let p = x.nrows() as f64;
    let ld_x = linalg::log_det_spd(x)?;
    let ld_v = linalg::log_det_spd(scale)?;
    let vinv = linalg::spd_inverse(scale)?;
    let tr = (&vinv * x).trace();
    Ok(0.5 * (df - p - 1.0) * ld_x - 0.5 * tr - 0.5 * df * ld_v)
}

/// Bartlett draw from `W(ν, V)`.
pub fn sample_wishart<R: Rng + ?Sized>(df: f64, scale: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    let chol = linalg::cholesky(scale)?;
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64).map_err(|e| Error::InvalidInput(format!("Wishart df: {e}")))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let la = chol.l() * a;
    let mut x = &la * la.transpose();
    linalg::symmetrize(&mut x);
    Ok(x)
}

/// Log full conditional of `(T^{-1}, F~)` for one loading column, or
/// `None` when the implied precision is not positive definite.
pub fn gmrf_log_target(
    adjacency: &AdjacencyMatrix,
    tinv: &DMatrix<f64>,
    ftilde: &DMatrix<f64>,
    centered: &DVector<f64>,
    wishart_df: f64,
    wishart_scale: f64,
    coef_scale: f64,
) -> Option<f64> {
    let k = tinv.nrows();
    let n = adjacency.n_sites();
    let core = spatial_core(adjacency, ftilde);
    if !is_pd_matrix(&core) {
        return None;
    }
    let ld_core = linalg::log_det_spd(&core).ok()?;
    let ld_tinv = linalg::log_det_spd(tinv).ok()?;
    let s = linalg::sym_sqrt(tinv).ok()?;
    let mut y = DVector::zeros(n * k);
    for i in 0..n {
        let blk = &s * centered.rows(i * k, k);
        y.rows_mut(i * k, k).copy_from(&blk);
    }
    let quad = y.dot(&(&core * &y));
    // prior scale (ϱ S)^{-1}
    let prior_scale = DMatrix::identity(k, k) / (wishart_df * wishart_scale);
    let lw = wishart_log_density(tinv, wishart_df, &prior_scale).ok()?;
    let coef = ftilde.iter().map(|v| v * v).sum::<f64>() / (coef_scale * coef_scale);
    Some(0.5 * (n as f64 * ld_tinv + ld_core) - 0.5 * quad + lw - coef)
}

/// Metropolis–Hastings log acceptance ratio for a joint move of
/// `(T^{-1}, F~)`. `proposal_log_ratio` is `log q(cur|prop) - log q(prop|cur)`.
#[allow(clippy::too_many_arguments)]
pub fn mh_log_ratio(
    adjacency: &AdjacencyMatrix,
    current: (&DMatrix<f64>, &DMatrix<f64>),
    proposed: (&DMatrix<f64>, &DMatrix<f64>),
    centered: &DVector<f64>,
    wishart_df: f64,
    wishart_scale: f64,
    coef_scale: f64,
    proposal_log_ratio: f64,
) -> f64 {
    let cur = gmrf_log_target(adjacency, current.0, current.1, centered, wishart_df, wishart_scale, coef_scale);
    let prop = gmrf_log_target(adjacency, proposed.0, proposed.1, centered, wishart_df, wishart_scale, coef_scale);
    match (cur, prop) {
        (_, None) => f64::NEG_INFINITY,
        (None, Some(_)) => f64::INFINITY,
        (Some(c), Some(p)) => p - c + proposal_log_ratio,
    }
}

fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if !log_ratio.is_finite() {
        return false;
    }
    rng.random::<f64>().ln() < log_ratio
}

/// MH updates of `F~` (random walk) then `T^{-1}` (Wishart proposal) for
/// every loading column. Non-PD proposals are rejected.
pub fn sample_gmrf_hypers<R: Rng + ?Sized>(state: &mut SamplerState, data: &SweepData, adapt: bool, rng: &mut R) -> Result<()> {
    let prior = data.prior;
    let m = data.spec.m;
    let cols = state.params.gmrf_y.len() + state.params.gmrf_x.len();
    for c in 0..cols {
        let (spec, h, df) = if c < m {
            (&mut state.params.gmrf_y[c], state.params.meas.hy.column(c).into_owned(), prior.wishart_df_y)
        } else {
            (&mut state.params.gmrf_x[c - m], state.params.meas.hx.column(c - m).into_owned(), prior.wishart_df_x)
        };
        let tuning = &mut state.tuning[c];
        let centered = h - spec.mean();
        let k = spec.n_vars();

        // F~ random walk
        let step = tuning.step;
        let prop_f = DMatrix::from_fn(k, k, |a, b| spec.ftilde[(a, b)] + step * rng.sample::<f64, _>(StandardNormal));
        let lr = mh_log_ratio(
            data.adjacency,
            (&spec.cond_prec, &spec.ftilde),
            (&spec.cond_prec, &prop_f),
            &centered,
            df,
            prior.wishart_scale,
            prior.gmrf_coef_scale,
            0.0,
        );
        tuning.coef_proposed += 1;
        tuning.window_proposed += 1;
        if accept(lr, rng) {
            spec.ftilde = prop_f;
            tuning.coef_accepted += 1;
            tuning.window_accepted += 1;
        }

        // T^{-1} Wishart proposal centred at the current value
        let nu = prior.mh_wishart_df;
        let cur = spec.cond_prec.clone();
        let prop_t = sample_wishart(nu, &(&cur / nu), rng)?;
        let q_fwd = wishart_log_density(&prop_t, nu, &(&cur / nu));
        let q_bwd = wishart_log_density(&cur, nu, &(&prop_t / nu));
        tuning.prec_proposed += 1;
        if let (Ok(qf), Ok(qb)) = (q_fwd, q_bwd) {
            let lr = mh_log_ratio(
                data.adjacency,
                (&cur, &spec.ftilde),
                (&prop_t, &spec.ftilde),
                &centered,
                df,
                prior.wishart_scale,
                prior.gmrf_coef_scale,
                qb - qf,
            );
            if accept(lr, rng) {
                spec.cond_prec = prop_t;
                tuning.prec_accepted += 1;
            }
        }
        if adapt {
            tuning.adapt();
        }
    }
    Ok(())
}

/// Conjugate Gamma update of each observation precision.
pub fn sample_obs_precisions<R: Rng + ?Sized>(state: &mut SamplerState, data: &SweepData, rng: &mut R) -> Result<()> {
    let fac = state.factors().values;
    let (m, l) = (data.spec.m, data.spec.l);
    let prior = data.prior;
    let meas = &mut state.params.meas;
    let g = fac.columns(0, m);
    let f = fac.columns(m, l);
    let fy = g * meas.hy.transpose();
    let fx = f * meas.hx.transpose();
    for (panel, fitted, mean, var) in [(data.y, &fy, &meas.mean_y, &mut meas.obs_var_y), (data.x, &fx, &meas.mean_x, &mut meas.obs_var_x)] {
        for i in 0..panel.ncols() {
            let (mut n, mut sse) = (0usize, 0.0);
            for t in 0..panel.nrows() {
                let z = panel[(t, i)];
                if z.is_nan() {
                    continue;
                }
                let r = z - mean[i] - fitted[(t, i)];
                sse += r * r;
                n += 1;
            }
            let prec = gamma_draw(prior.obs_precision_shape + 0.5 * n as f64, prior.obs_precision_rate + 0.5 * sse, rng)?;
            var[i] = 1.0 / prec;
        }
    }
    Ok(())
}

/// Gamma draw with the shape/rate parameterization.
pub fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::InvalidInput(format!("Gamma({shape}, {rate}): {e}")))?;
    let v = g.sample(rng);
    // guard against underflow to exactly zero for tiny shapes
    Ok(v.max(f64::MIN_POSITIVE))
}

/// Regressors of the two ECM equations built from `d(1-p..T)`.
#[derive(Debug, Clone)]
pub struct EcmDesign {
    /// `Δd(t)`, `T × (m+l)`.
    pub diff: DMatrix<f64>,
    /// `d(t-1)`.
    pub prev: DMatrix<f64>,
    /// `[Δd(t-1), …, Δd(t-p+1)]`.
    pub lags: DMatrix<f64>,
    pub m: usize,
    pub l: usize,
}

impl EcmDesign {
    pub fn new(extended: &DMatrix<f64>, m: usize, l: usize, order: usize) -> Result<Self> {
        let k = m + l;
        if extended.ncols() != k || extended.nrows() < order {
            return Err(dim_err("extended path shape"));
        }
        let t_len = extended.nrows() - order;
        let p = order;
        let diff = DMatrix::from_fn(t_len, k, |t, j| extended[(t + p, j)] - extended[(t + p - 1, j)]);
        let prev = DMatrix::from_fn(t_len, k, |t, j| extended[(t + p - 1, j)]);
        let lags = DMatrix::from_fn(t_len, k * (p - 1), |t, c| {
            let (i, j) = (c / k + 1, c % k);
            extended[(t + p - i, j)] - extended[(t + p - i - 1, j)]
        });
        Ok(EcmDesign { diff, prev, lags, m, l })
    }

    fn f_lags(&self) -> DMatrix<f64> {
        let (m, l) = (self.m, self.l);
        let k = m + l;
        let nl = self.lags.ncols() / k;
        DMatrix::from_fn(self.lags.nrows(), l * nl, |t, c| self.lags[(t, (c / l) * k + m + c % l)])
    }

    fn g_regressors(&self, bars: &EcmBar) -> DMatrix<f64> {
        let m = self.m;
        let fprev = self.prev.columns(m, self.l);
        hcat(&[&(&self.prev * &bars.b), &(fprev * &bars.bf), &self.lags])
    }

    fn f_regressors(&self, bars: &EcmBar) -> DMatrix<f64> {
        let fprev = self.prev.columns(self.m, self.l);
        hcat(&[&(fprev * &bars.bf), &self.f_lags()])
    }

    /// `(ξ, η)` residual matrices at the given coefficients.
    pub fn residuals(&self, bars: &EcmBar) -> (DMatrix<f64>, DMatrix<f64>) {
        let (m, l) = (self.m, self.l);
        let coef_g = hcat(&[&bars.a, &bars.a2, &hcat(&bars.k.iter().collect::<Vec<_>>())]);
        let coef_f = hcat(&[&bars.af, &hcat(&bars.phi2.iter().collect::<Vec<_>>())]);
        let xi = self.diff.columns(0, m) - self.g_regressors(bars) * coef_g.transpose();
        let eta = self.diff.columns(m, l) - self.f_regressors(bars) * coef_f.transpose();
        (xi, eta)
    }
}

fn hcat(mats: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = mats.iter().map(|m| m.nrows()).max().unwrap_or(0);
    let cols: usize = mats.iter().map(|m| m.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for m in mats {
        if m.ncols() > 0 {
            out.columns_mut(c, m.ncols()).copy_from(*m);
        }
        c += m.ncols();
    }
    out
}

/// `Y = X Γ' + E`, `E_t ~ N(0, Σ)`, independent `N(0, v_i)` priors on
/// `vec(Γ)` (column-major). Returns a draw of `Γ` (`q × k`).
pub fn draw_matrix_regression<R: Rng + ?Sized>(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    sigma_inv: &DMatrix<f64>,
    prior_var: &[f64],
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let (q, k) = (y.ncols(), x.ncols());
    if prior_var.len() != q * k {
        return Err(dim_err("regression prior length"));
    }
    if q * k == 0 {
        return Ok(DMatrix::zeros(q, k));
    }
    let xtx = x.transpose() * x;
    let mut prec = xtx.kronecker(sigma_inv);
    for (i, v) in prior_var.iter().enumerate() {
        prec[(i, i)] += 1.0 / v;
    }
    let rhs = sigma_inv * y.transpose() * x;
    let lin = DVector::from_column_slice(rhs.as_slice());
    let (draw, _) = linalg::mvn_from_precision(&prec, &lin, rng)?;
    Ok(DMatrix::from_column_slice(q, k, draw.as_slice()))
}

/// Cointegration-space draw: `Y_j = W B' A_j' + E_j` summed over terms,
/// with `vec(B) ~ N(0, v I)`. `B` is `dim(W) × r`.
pub fn draw_coint_space<R: Rng + ?Sized>(
    terms: &[(&DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>)],
    prior_var: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let (_, w0, a0, _) = terms.first().ok_or_else(|| dim_err("no regression terms"))?;
    let (dw, r) = (w0.ncols(), a0.ncols());
    if dw * r == 0 {
        return Ok(DMatrix::zeros(dw, r));
    }
    let mut prec = DMatrix::zeros(dw * r, dw * r);
    let mut lin = DVector::zeros(dw * r);
    for (y, w, a, sinv) in terms {
        let asa = a.transpose() * *sinv * *a;
        let wtw = w.transpose() * *w;
        prec += asa.kronecker(&wtw);
        let rhs = w.transpose() * *y * *sinv * *a;
        lin += DVector::from_column_slice(rhs.as_slice());
    }
    for i in 0..dw * r {
        prec[(i, i)] += 1.0 / prior_var;
    }
    let (draw, _) = linalg::mvn_from_precision(&prec, &lin, rng)?;
    Ok(DMatrix::from_column_slice(dw, r, draw.as_slice()))
}

/// Gibbs updates of `(Ā, Ā2, K)`, `(Āf, Φ~2)`, `B̄` and `B̄f` given the
/// factor path, then refreshes the identified blocks.
pub fn sample_ecm_coeffs<R: Rng + ?Sized>(state: &mut SamplerState, data: &SweepData, rng: &mut R) -> Result<()> {
    let spec = data.spec;
    let (m, l, rd, rf, p) = (spec.m, spec.l, spec.r_d, spec.r_f, spec.order);
    let design = EcmDesign::new(&state.path.extended_path(), m, l, p)?;
    let sxi_inv = linalg::spd_inverse(&state.params.state_cov_g)?;
    let seta_inv = linalg::spd_inverse(&state.params.state_cov_f)?;
    let ssvs = &state.params.ssvs;
    let bars = &mut state.bars;
    let lags = p - 1;

    // g equation: coefficients [Ā, Ā2, K_1..]
    let xg = design.g_regressors(bars);
    let kx = xg.ncols();
    let mut var_g = Vec::with_capacity(m * kx);
    for c in 0..kx {
        for i in 0..m {
            let v = if c < rd {
                ssvs.var_a(c * m + i)
            } else if c < rd + rf {
                ssvs.var_a(m * rd + (c - rd) * m + i)
            } else {
                let cc = c - rd - rf;
                let (lag, kc) = (cc / (m + l), cc % (m + l));
                ssvs.var_k(lag * m * (m + l) + kc * m + i)
            };
            var_g.push(v);
        }
    }
    let dg = design.diff.columns(0, m).into_owned();
    let coef_g = draw_matrix_regression(&dg, &xg, &sxi_inv, &var_g, rng)?;
    bars.a = coef_g.columns(0, rd).into_owned();
    bars.a2 = coef_g.columns(rd, rf).into_owned();
    for lag in 0..lags {
        bars.k[lag] = coef_g.columns(rd + rf + lag * (m + l), m + l).into_owned();
    }

    // f equation: coefficients [Āf, Φ~2_1..]
    let xf = design.f_regressors(bars);
    let kf = xf.ncols();
    let mut var_f = Vec::with_capacity(l * kf);
    for c in 0..kf {
        for i in 0..l {
            let v = if c < rf {
                ssvs.var_a(m * rd + m * rf + c * l + i)
            } else {
                let cc = c - rf;
                let (lag, kc) = (cc / l, cc % l);
                ssvs.var_phi(lag * l * l + kc * l + i)
            };
            var_f.push(v);
        }
    }
    let df = design.diff.columns(m, l).into_owned();
    let coef_f = draw_matrix_regression(&df, &xf, &seta_inv, &var_f, rng)?;
    bars.af = coef_f.columns(0, rf).into_owned();
    for lag in 0..lags {
        bars.phi2[lag] = coef_f.columns(rf + lag * l, l).into_owned();
    }

    let fprev = design.prev.columns(m, l).into_owned();
    let k_all = hcat(&bars.k.iter().collect::<Vec<_>>());
    let short_g = if lags > 0 { &design.lags * k_all.transpose() } else { DMatrix::zeros(dg.nrows(), m) };

    // B̄ | rest
    if rd > 0 {
        let y = &dg - &fprev * &bars.bf * bars.a2.transpose() - &short_g;
        bars.b = draw_coint_space(&[(&y, &design.prev, &bars.a, &sxi_inv)], data.prior.coint_space_var, rng)?;
    }
    // B̄f | rest, entering both equations
    if rf > 0 {
        let yg = &dg - &design.prev * &bars.b * bars.a.transpose() - &short_g;
        let phi_all = hcat(&bars.phi2.iter().collect::<Vec<_>>());
        let short_f = if lags > 0 { design.f_lags() * phi_all.transpose() } else { DMatrix::zeros(df.nrows(), l) };
        let yf = &df - &short_f;
        bars.bf = draw_coint_space(&[(&yg, &fprev, &bars.a2, &sxi_inv), (&yf, &fprev, &bars.af, &seta_inv)], data.prior.coint_space_var, rng)?;
    }
    state.params.ecm = bars.to_blocks();
    Ok(())
}

fn log_normal_density(x: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln() + x * x / var)
}

/// `P(indicator = 1 | coefficient)` under the spike/slab mixture.
pub fn inclusion_probability(coef: f64, spike_var: f64, slab_var: f64, prior_incl: f64) -> f64 {
    if prior_incl <= 0.0 {
        return 0.0;
    }
    if prior_incl >= 1.0 {
        return 1.0;
    }
    let l1 = prior_incl.ln() + log_normal_density(coef, slab_var);
    let l0 = (1.0 - prior_incl).ln() + log_normal_density(coef, spike_var);
    1.0 / (1.0 + (l0 - l1).exp())
}

/// Bernoulli updates of `ρ`, `δ` and `δ_φ`.
pub fn sample_ssvs_indicators<R: Rng + ?Sized>(state: &mut SamplerState, prior: &PriorConfig, rng: &mut R) {
    let (a, k, phi) = state.bars.ssvs_coefs();
    let s = &mut state.params.ssvs;
    for (i, v) in a.iter().enumerate() {
        s.rho[i] = rng.random::<f64>() < inclusion_probability(*v, s.v0[i], s.v1[i], prior.ssvs_inclusion_a);
    }
    for (i, v) in k.iter().enumerate() {
        s.delta[i] = rng.random::<f64>() < inclusion_probability(*v, s.tau0[i], s.tau1[i], prior.ssvs_inclusion_k);
    }
    for (i, v) in phi.iter().enumerate() {
        s.delta_phi[i] = rng.random::<f64>() < inclusion_probability(*v, s.kappa0[i], s.kappa1[i], prior.ssvs_inclusion_phi);
    }
}

/// State-noise covariances from the ECM residuals.
pub fn sample_state_noise<R: Rng + ?Sized>(state: &mut SamplerState, data: &SweepData, rng: &mut R) -> Result<()> {
    let spec = data.spec;
    let design = EcmDesign::new(&state.path.extended_path(), spec.m, spec.l, spec.order)?;
    let (xi, eta) = design.residuals(&state.bars);
    let prior = data.prior;
    match spec.state_noise {
        StateNoiseMode::Diagonal => {
            state.params.state_cov_g = diagonal_noise(&xi, prior, rng)?;
            state.params.state_cov_f = diagonal_noise(&eta, prior, rng)?;
        }
        StateNoiseMode::Triangular => {
            let nm = super::params::tri_count(spec.m);
            let mut omega_g = state.params.ssvs.omega[..nm].to_vec();
            let mut omega_f = state.params.ssvs.omega[nm..].to_vec();
            state.params.state_cov_g = triangular_noise(&xi, prior, &mut omega_g, rng)?;
            state.params.state_cov_f = triangular_noise(&eta, prior, &mut omega_f, rng)?;
            omega_g.extend(omega_f);
            state.params.ssvs.omega = omega_g;
        }
    }
    Ok(())
}

fn diagonal_noise<R: Rng + ?Sized>(resid: &DMatrix<f64>, prior: &PriorConfig, rng: &mut R) -> Result<DMatrix<f64>> {
    let k = resid.ncols();
    let n = resid.nrows() as f64;
    let mut cov = DMatrix::zeros(k, k);
    for j in 0..k {
        let sse: f64 = resid.column(j).iter().map(|v| v * v).sum();
        let prec = gamma_draw(prior.state_precision_shape + 0.5 * n, prior.state_precision_rate + 0.5 * sse, rng)?;
        cov[(j, j)] = 1.0 / prec;
    }
    Ok(cov)
}

/// `Σ^{-1} = V V'` with `V` upper triangular: Gamma draws for the squared
/// diagonal and spike/slab Gaussian draws above it.
fn triangular_noise<R: Rng + ?Sized>(resid: &DMatrix<f64>, prior: &PriorConfig, omega: &mut [bool], rng: &mut R) -> Result<DMatrix<f64>> {
    let k = resid.ncols();
    let n = resid.nrows() as f64;
    let s = resid.transpose() * resid;
    let mut v = DMatrix::zeros(k, k);
    let mut idx = 0;
    for j in 0..k {
        if j == 0 {
            let psi2 = gamma_draw(prior.state_precision_shape + 0.5 * n, prior.state_precision_rate + 0.5 * s[(0, 0)], rng)?;
            v[(0, 0)] = psi2.sqrt();
            continue;
        }
        let sj = s.view((0, j), (j, 1)).into_owned();
        let mut prec = s.view((0, 0), (j, j)).into_owned();
        for i in 0..j {
            let var = if omega[idx + i] { prior.cov_slab_var } else { prior.cov_spike_var };
            prec[(i, i)] += 1.0 / var;
        }
        let delta = linalg::spd_inverse(&prec)?;
        let quad = (sj.transpose() * &delta * &sj)[(0, 0)];
        let b = (s[(j, j)] - quad).max(0.0);
        let psi2 = gamma_draw(prior.state_precision_shape + 0.5 * n, prior.state_precision_rate + 0.5 * b, rng)?;
        let psi = psi2.sqrt();
        let mean = -(&delta * &sj) * psi;
        let eta = linalg::mvn_from_cov(&mean.column(0).into_owned(), &delta, rng)?;
        for i in 0..j {
            v[(i, j)] = eta[i];
            omega[idx + i] = rng.random::<f64>() < inclusion_probability(eta[i], prior.cov_spike_var, prior.cov_slab_var, prior.cov_inclusion);
        }
        v[(j, j)] = psi;
        idx += j;
    }
    let prec = &v * v.transpose();
    linalg::spd_inverse(&prec)
}

/// Conjugate normal update of `m_y`, `m_x`; the prior is centred at the
/// sample mean of each series.
pub fn sample_means<R: Rng + ?Sized>(state: &mut SamplerState, data: &SweepData, rng: &mut R) -> Result<()> {
    let fac = state.factors().values;
    let (m, l) = (data.spec.m, data.spec.l);
    let prior_var = data.prior.mean_prior_var;
    let meas = &mut state.params.meas;
    let fy = fac.columns(0, m) * meas.hy.transpose();
    let fx = fac.columns(m, l) * meas.hx.transpose();
    for (panel, fitted, mean, var) in [(data.y, &fy, &mut meas.mean_y, &meas.obs_var_y), (data.x, &fx, &mut meas.mean_x, &meas.obs_var_x)] {
        for i in 0..panel.ncols() {
            let (mut n, mut s, mut raw) = (0usize, 0.0, 0.0);
            for t in 0..panel.nrows() {
                let z = panel[(t, i)];
                if z.is_nan() {
                    continue;
                }
                s += z - fitted[(t, i)];
                raw += z;
                n += 1;
            }
            let center = if n > 0 { raw / n as f64 } else { 0.0 };
            let prec = n as f64 / var[i] + 1.0 / prior_var;
            let mu = (s / var[i] + center / prior_var) / prec;
            let z: f64 = rng.sample(StandardNormal);
            mean[i] = mu + z / prec.sqrt();
        }
    }
    Ok(())
}
