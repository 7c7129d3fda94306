//! Kalman filter, RTS smoother and forward-filtering backward-sampling.
//!
//! Observations are processed one series at a time, which is exact because
//! `Σ_u` is diagonal. Missing values (`NaN`) are skipped. The covariance
//! update is the Joseph form written as rank-one corrections, followed by
//! symmetrization at every period.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::model::{FactorPath, StateSpaceForm};
use crate::error::{dim_err, Error, Result};
use crate::linalg;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Prior `α(0) ~ N(a0, Σ_α0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl InitialState {
    /// `a0 = 0`, `Σ_α0 = κ I`.
    pub fn diffuse(dim: usize, kappa: f64) -> Self {
        InitialState { mean: DVector::zeros(dim), cov: DMatrix::identity(dim, dim) * kappa }
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    /// `a(t|t)` for `t = 0..=T`; index 0 is the prior.
    pub filtered_means: Vec<DVector<f64>>,
    pub filtered_covs: Vec<DMatrix<f64>>,
    /// `a(t|t-1)` for `t = 1..=T`, stored at index `t-1`.
    pub predicted_means: Vec<DVector<f64>>,
    pub predicted_covs: Vec<DMatrix<f64>>,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone)]
pub struct SmootherOutput {
    /// `E[α(t) | Z]` for `t = 0..=T`.
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
}

/// Stacked state draw `α(0..=T)`, one row per period.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    pub states: DMatrix<f64>,
    pub block_dim: usize,
}

impl StatePath {
    pub fn n_periods(&self) -> usize {
        self.states.nrows() - 1
    }

    pub fn order(&self) -> usize {
        self.states.ncols() / self.block_dim
    }

    /// `d(1..=T)` as a factor path.
    pub fn factor_path(&self) -> FactorPath {
        let t = self.n_periods();
        FactorPath { values: self.states.view((1, 0), (t, self.block_dim)).into_owned() }
    }

    /// `d(t)` for `t = 1-p..=T`, row `j` holding `d(j + 1 - p)`.
    pub fn extended_path(&self) -> DMatrix<f64> {
        let (t, p, k) = (self.n_periods(), self.order(), self.block_dim);
        let mut out = DMatrix::zeros(t + p, k);
        for lag in 0..p {
            // α(0) block `lag` is d(-lag)
            let row = p - 1 - lag;
            out.row_mut(row).copy_from(&self.states.view((0, lag * k), (1, k)));
        }
        out.view_mut((p, 0), (t, k)).copy_from(&self.states.view((1, 0), (t, k)));
        out
    }

    pub fn last_state(&self) -> DVector<f64> {
        self.states.row(self.states.nrows() - 1).transpose()
    }
}

fn check_inputs(ss: &StateSpaceForm, data: &DMatrix<f64>, init: &InitialState) -> Result<()> {
    if data.ncols() != ss.n_obs() {
        return Err(dim_err(format!("data has {} series, model expects {}", data.ncols(), ss.n_obs())));
    }
    if init.mean.len() != ss.state_dim() || init.cov.shape() != (ss.state_dim(), ss.state_dim()) {
        return Err(dim_err("initial state does not match state dimension"));
    }
    Ok(())
}

/// Forward pass. `data` is `T × n`, one row per period.
pub fn kalman_filter(ss: &StateSpaceForm, data: &DMatrix<f64>, init: &InitialState) -> Result<FilterOutput> {
    check_inputs(ss, data, init)?;
    let t_len = data.nrows();
    let dim = ss.state_dim();
    let k = ss.block_dim();
    let phi = &ss.transition;
    let q = ss.state_cov();

    let mut filtered_means = Vec::with_capacity(t_len + 1);
    let mut filtered_covs = Vec::with_capacity(t_len + 1);
    let mut predicted_means = Vec::with_capacity(t_len);
    let mut predicted_covs = Vec::with_capacity(t_len);
    filtered_means.push(init.mean.clone());
    filtered_covs.push(linalg::symmetrized(&init.cov));
    let mut loglik = 0.0;

    let mut u = DVector::zeros(dim);
    for t in 0..t_len {
        let mut a = phi * &filtered_means[t];
        let mut p = phi * &filtered_covs[t] * phi.transpose() + &q;
        linalg::symmetrize(&mut p);
        predicted_means.push(a.clone());
        predicted_covs.push(p.clone());

        for i in 0..ss.n_obs() {
            let z = data[(t, i)];
            if z.is_nan() {
                continue;
            }
            // H only touches the first block of the state.
            let h = DVector::from_iterator(k, (0..k).map(|j| ss.meas[(i, j)]));
            u.gemv(1.0, &p.columns(0, k), &h, 0.0);
            let hu: f64 = (0..k).map(|j| h[j] * u[j]).sum();
            let f = hu + ss.obs_noise_var[i];
            if !(f > 0.0) || !f.is_finite() {
                return Err(Error::InnovationCovSingular { t: t + 1, series: i });
            }
            let ha: f64 = (0..k).map(|j| h[j] * a[j]).sum();
            let v = z - ss.obs_offset[i] - ha;
            let gain = &u / f;
            a.axpy(v, &gain, 1.0);
            // Joseph form (I - K h') P (I - K h')' + σ² K K'
            p.ger(-1.0, &gain, &u, 1.0);
            p.ger(-1.0, &u, &gain, 1.0);
            p.ger(f, &gain, &gain, 1.0);
            loglik -= 0.5 * (LN_2PI + f.ln() + v * v / f);
        }
        linalg::symmetrize(&mut p);
        filtered_means.push(a);
        filtered_covs.push(p);
    }
    if !loglik.is_finite() {
        return Err(Error::FactorizationFailure("non-finite filter log-likelihood".into()));
    }
    Ok(FilterOutput { filtered_means, filtered_covs, predicted_means, predicted_covs, log_likelihood: loglik })
}

/// `J_t = P(t|t) Φ' P(t+1|t)^{-1}`.
fn smoother_gain(ss: &StateSpaceForm, filtered_cov: &DMatrix<f64>, predicted_cov: &DMatrix<f64>) -> DMatrix<f64> {
    // J' = P(t+1|t)^{-1} Φ P(t|t)
    let rhs = &ss.transition * filtered_cov;
    linalg::robust_spd_solve(predicted_cov, &rhs).transpose()
}

/// Rauch–Tung–Striebel smoother over the filter output.
pub fn kalman_smoother(ss: &StateSpaceForm, data: &DMatrix<f64>, init: &InitialState) -> Result<SmootherOutput> {
    let filt = kalman_filter(ss, data, init)?;
    Ok(smooth_filtered(ss, &filt))
}

pub fn smooth_filtered(ss: &StateSpaceForm, filt: &FilterOutput) -> SmootherOutput {
    let t_len = filt.predicted_means.len();
    let mut means = filt.filtered_means.clone();
    let mut covs = filt.filtered_covs.clone();
    for t in (0..t_len).rev() {
        let j = smoother_gain(ss, &filt.filtered_covs[t], &filt.predicted_covs[t]);
        let dm = &means[t + 1] - &filt.predicted_means[t];
        means[t] = &filt.filtered_means[t] + &j * dm;
        let dp = &covs[t + 1] - &filt.predicted_covs[t];
        let mut c = &filt.filtered_covs[t] + &j * dp * j.transpose();
        linalg::symmetrize(&mut c);
        covs[t] = c;
    }
    SmootherOutput { means, covs }
}

/// Joint draw of `α(0..=T)` given the data.
pub fn ffbs_draw<R: Rng + ?Sized>(ss: &StateSpaceForm, data: &DMatrix<f64>, init: &InitialState, rng: &mut R) -> Result<StatePath> {
    let filt = kalman_filter(ss, data, init)?;
    ffbs_from_filter(ss, &filt, rng)
}

/// Backward sampling pass. Given `α(t+1)`, the first `p-1` blocks of
/// `α(t)` are known exactly (shift structure), so only the oldest block is
/// drawn, from its conditional given `α(t+1)` and the data up to `t`.
pub fn ffbs_from_filter<R: Rng + ?Sized>(ss: &StateSpaceForm, filt: &FilterOutput, rng: &mut R) -> Result<StatePath> {
    let t_len = filt.predicted_means.len();
    let dim = ss.state_dim();
    let k = ss.block_dim();
    let mut states = DMatrix::zeros(t_len + 1, dim);
    let last = linalg::mvn_from_cov(&filt.filtered_means[t_len], &filt.filtered_covs[t_len], rng)?;
    states.row_mut(t_len).copy_from(&last.transpose());

    let tail = dim - k;
    for t in (0..t_len).rev() {
        let next = states.row(t + 1).transpose();
        let j = smoother_gain(ss, &filt.filtered_covs[t], &filt.predicted_covs[t]);
        let mean = &filt.filtered_means[t] + &j * (&next - &filt.predicted_means[t]);
        let cov = &filt.filtered_covs[t] - &j * &ss.transition * &filt.filtered_covs[t];
        let mean_last = mean.rows(tail, k).into_owned();
        let cov_last = cov.view((tail, tail), (k, k)).into_owned();
        let oldest = linalg::mvn_from_cov(&mean_last, &cov_last, rng)?;
        let mut row = DVector::zeros(dim);
        if tail > 0 {
            row.rows_mut(0, tail).copy_from(&next.rows(k, tail));
        }
        row.rows_mut(tail, k).copy_from(&oldest);
        states.row_mut(t).copy_from(&row.transpose());
    }
    if states.iter().any(|v| !v.is_finite()) {
        return Err(Error::FactorizationFailure("non-finite FFBS draw".into()));
    }
    Ok(StatePath { states, block_dim: k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state_space::model::{assemble_companion, FactorDynamics, MeasurementModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    /// State dimension 1, one observed series.
    fn scalar_model(phi: f64, psi: f64, sigma_u: f64) -> StateSpaceForm {
        StateSpaceForm {
            m: 1,
            l: 0,
            order: 1,
            transition: scalar(phi),
            input: scalar(1.0),
            meas: scalar(1.0),
            state_noise_cov: scalar(psi),
            obs_noise_var: DVector::from_element(1, sigma_u),
            obs_offset: DVector::zeros(1),
        }
    }

    #[test]
    fn one_scalar_step() {
        let ss = scalar_model(0.5, 1.0, 1.0);
        let init = InitialState { mean: DVector::zeros(1), cov: scalar(1.0) };
        let out = kalman_filter(&ss, &scalar(1.0), &init).unwrap();
        assert!((out.predicted_covs[0][(0, 0)] - 1.25).abs() < 1e-15);
        assert!((out.filtered_means[1][0] - 1.25 / 2.25).abs() < 1e-15);
        assert!((out.filtered_covs[1][(0, 0)] - (1.25 - 1.25 * 1.25 / 2.25)).abs() < 1e-15);
    }

    #[test]
    fn uninformative_observation_is_ignored() {
        let ss = scalar_model(0.5, 1.0, 1e12);
        let init = InitialState { mean: DVector::from_element(1, 2.0), cov: scalar(1.0) };
        let out = kalman_filter(&ss, &scalar(5.0), &init).unwrap();
        assert!((out.filtered_means[1][0] - out.predicted_means[0][0]).abs() < 1e-6);
    }

    #[test]
    fn missing_value_is_skipped() {
        let ss = scalar_model(0.5, 1.0, 1.0);
        let init = InitialState { mean: DVector::from_element(1, 2.0), cov: scalar(1.0) };
        let out = kalman_filter(&ss, &scalar(f64::NAN), &init).unwrap();
        assert_eq!(out.filtered_means[1], out.predicted_means[0]);
        assert_eq!(out.log_likelihood, 0.0);
    }

    #[test]
    fn smoother_equals_filter_at_final_period() {
        let ss = scalar_model(0.8, 0.5, 0.3);
        let init = InitialState::diffuse(1, 10.0);
        let data = DMatrix::from_column_slice(1, 1, &[0.4]);
        let filt = kalman_filter(&ss, &data, &init).unwrap();
        let sm = smooth_filtered(&ss, &filt);
        assert_eq!(sm.means[1], filt.filtered_means[1]);
        assert_eq!(sm.covs[1], filt.filtered_covs[1]);
    }

    #[test]
    fn deterministic_state_is_smoothed_onto_dynamics() {
        let phi = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 0.7]);
        let ss = StateSpaceForm {
            m: 1,
            l: 1,
            order: 1,
            transition: phi.clone(),
            input: DMatrix::identity(2, 2),
            meas: DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]),
            state_noise_cov: DMatrix::zeros(2, 2),
            obs_noise_var: DVector::from_element(3, 0.5),
            obs_offset: DVector::zeros(3),
        };
        let data = DMatrix::from_row_slice(4, 3, &[1.0, 0.2, 0.9, 0.8, -0.1, 0.5, 0.6, 0.0, 0.7, 0.3, -0.3, 0.1]);
        let sm = kalman_smoother(&ss, &data, &InitialState::diffuse(2, 1e4)).unwrap();
        for t in 1..=4 {
            let pred = &phi * &sm.means[t - 1];
            assert!((&sm.means[t] - pred).norm() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn noiseless_ffbs_inverts_loadings() {
        let hy = DMatrix::from_row_slice(1, 1, &[2.0]);
        let hx = DMatrix::from_row_slice(1, 1, &[-0.5]);
        let meas = MeasurementModel {
            hy,
            hx,
            mean_y: DVector::zeros(1),
            mean_x: DVector::zeros(1),
            obs_var_y: DVector::from_element(1, 1e-14),
            obs_var_x: DVector::from_element(1, 1e-14),
        };
        let dynamics = FactorDynamics {
            c: vec![scalar(0.6)],
            d: vec![scalar(0.3)],
            r: vec![scalar(0.5)],
            state_cov_g: scalar(1.0),
            state_cov_f: scalar(1.0),
        };
        let ss = assemble_companion(&dynamics, &meas).unwrap();
        let data = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.4, 0.2, 0.6, -1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let path = ffbs_draw(&ss, &data, &InitialState::diffuse(2, 1e4), &mut rng).unwrap();
        for t in 0..3 {
            assert!((path.states[(t + 1, 0)] - data[(t, 0)] / 2.0).abs() < 1e-6);
            assert!((path.states[(t + 1, 1)] - data[(t, 1)] / -0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn ffbs_is_reproducible() {
        let ss = scalar_model(0.7, 1.0, 0.5);
        let data = DMatrix::from_column_slice(5, 1, &[0.1, 0.3, -0.2, 0.8, 0.4]);
        let init = InitialState::diffuse(1, 100.0);
        let a = ffbs_draw(&ss, &data, &init, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = ffbs_draw(&ss, &data, &init, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn extended_path_unpacks_initial_lags() {
        let states = DMatrix::from_row_slice(3, 4, &[
            1.0, 2.0, 3.0, 4.0, // α(0) = [d(0); d(-1)]
            5.0, 6.0, 1.0, 2.0, //
            7.0, 8.0, 5.0, 6.0,
        ]);
        let path = StatePath { states, block_dim: 2 };
        let ext = path.extended_path();
        assert_eq!(ext, DMatrix::from_row_slice(4, 2, &[3.0, 4.0, 1.0, 2.0, 5.0, 6.0, 7.0, 8.0]));
        assert_eq!(path.factor_path().values, DMatrix::from_row_slice(2, 2, &[5.0, 6.0, 7.0, 8.0]));
    }
}
