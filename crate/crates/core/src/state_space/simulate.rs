use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::model::{assemble_companion, FactorDynamics, FactorPath, MeasurementModel};
use crate::error::{Error, Result};
use crate::linalg;

const STATIONARY_BURN_IN: usize = 200;

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Simulates `d(1..=T)` from the state equations. `init` is the stacked
/// `α(0)` (defaults to zero). Stationary systems are run through a
/// discarded burn-in first, in which case `init` only seeds the burn-in.
pub fn simulate_factors<R: Rng + ?Sized>(
    dynamics: &FactorDynamics,
    t_len: usize,
    init: Option<&DVector<f64>>,
    rng: &mut R,
) -> Result<FactorPath> {
    dynamics.validate()?;
    let (m, l) = (dynamics.m(), dynamics.l());
    let k = m + l;
    let p = dynamics.order();
    let blocks = dynamics.var_blocks();
    let noise = dynamics.innovation_cov();
    let chol = linalg::cholesky(&noise).ok();

    let mut companion = DMatrix::zeros(k * p, k * p);
    for (i, b) in blocks.iter().enumerate() {
        companion.view_mut((0, i * k), (k, k)).copy_from(b);
    }
    for i in 1..p {
        companion.view_mut((i * k, (i - 1) * k), (k, k)).fill_with_identity();
    }
    let burn = if spectral_radius(&companion) < 1.0 { STATIONARY_BURN_IN } else { 0 };

    let mut state = init.cloned().unwrap_or_else(|| DVector::zeros(k * p));
    if state.len() != k * p {
        return Err(crate::error::dim_err("initial state length"));
    }
    let mut out = DMatrix::zeros(t_len, k);
    let zero_mean = DVector::zeros(k);
    for step in 0..(burn + t_len) {
        let eps = match &chol {
            Some(c) => c.l() * linalg::standard_normal_vec(k, rng),
            None => linalg::mvn_from_cov(&zero_mean, &noise, rng)?,
        };
        let next = &companion * &state;
        let mut new_state = DVector::zeros(k * p);
        new_state.rows_mut(0, k).copy_from(&(next.rows(0, k) + eps));
        if p > 1 {
            new_state.rows_mut(k, k * (p - 1)).copy_from(&state.rows(0, k * (p - 1)));
        }
        state = new_state;
        if step >= burn {
            let t = step - burn;
            if state.rows(0, k).iter().any(|v| !v.is_finite() || v.abs() > 1e150) {
                return Err(Error::NonFiniteSample(t + 1));
            }
            out.row_mut(t).copy_from(&state.rows(0, k).transpose());
        }
    }
    Ok(FactorPath { values: out })
}

/// Draws `[Y(t)', X(t)']` given a factor path, one row per period.
pub fn simulate_observations<R: Rng + ?Sized>(meas: &MeasurementModel, factors: &FactorPath, rng: &mut R) -> Result<DMatrix<f64>> {
    let dynamics_stub = FactorDynamics {
        c: vec![],
        d: vec![],
        r: vec![],
        state_cov_g: DMatrix::identity(meas.m(), meas.m()),
        state_cov_f: DMatrix::identity(meas.l(), meas.l()),
    };
    let ss = assemble_companion(&dynamics_stub, meas)?;
    if factors.dim() != meas.m() + meas.l() {
        return Err(crate::error::dim_err("factor path width differs from m + l"));
    }
    let n = ss.n_obs();
    let mut out = DMatrix::zeros(factors.len(), n);
    for t in 0..factors.len() {
        let d = factors.row(t);
        let z = &ss.obs_offset + &ss.meas * &d;
        for i in 0..n {
            let e: f64 = rng.sample(rand_distr::StandardNormal);
            let v = z[i] + ss.obs_noise_var[i].sqrt() * e;
            if !v.is_finite() {
                return Err(Error::NonFiniteSample(t + 1));
            }
            out[(t, i)] = v;
        }
    }
    Ok(out)
}
