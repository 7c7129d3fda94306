use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};
use crate::linalg;

/// Measurement equations for `Y` and `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementModel {
    /// `H_y`, `ñ_y × m`.
    pub hy: DMatrix<f64>,
    /// `H_x`, `ñ_x × l`.
    pub hx: DMatrix<f64>,
    pub mean_y: DVector<f64>,
    pub mean_x: DVector<f64>,
    /// Diagonal of `Σ_uy`.
    pub obs_var_y: DVector<f64>,
    /// Diagonal of `Σ_ux`.
    pub obs_var_x: DVector<f64>,
}

impl MeasurementModel {
    pub fn m(&self) -> usize {
        self.hy.ncols()
    }

    pub fn l(&self) -> usize {
        self.hx.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.hy.nrows()
    }

    pub fn n_x(&self) -> usize {
        self.hx.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean_y.len() != self.n_y() || self.obs_var_y.len() != self.n_y() {
            return Err(dim_err("Y mean/variance length differs from H_y rows"));
        }
        if self.mean_x.len() != self.n_x() || self.obs_var_x.len() != self.n_x() {
            return Err(dim_err("X mean/variance length differs from H_x rows"));
        }
        if self.m() > self.n_y() || self.l() > self.n_x() {
            return Err(dim_err("more factors than series"));
        }
        Ok(())
    }

    pub fn obs_mean(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.n_y() + self.n_x());
        v.rows_mut(0, self.n_y()).copy_from(&self.mean_y);
        v.rows_mut(self.n_y(), self.n_x()).copy_from(&self.mean_x);
        v
    }

    pub fn obs_var(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.n_y() + self.n_x());
        v.rows_mut(0, self.n_y()).copy_from(&self.obs_var_y);
        v.rows_mut(self.n_y(), self.n_x()).copy_from(&self.obs_var_x);
        v
    }
}

/// State equations: a VARX for `g` driven by `f`, and a VAR for `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDynamics {
    /// `C_1..C_p`, each `m × m`.
    pub c: Vec<DMatrix<f64>>,
    /// `D_1..D_q`, each `m × l`.
    pub d: Vec<DMatrix<f64>>,
    /// `R_1..R_s`, each `l × l`.
    pub r: Vec<DMatrix<f64>>,
    /// `Σ_ξ`.
    pub state_cov_g: DMatrix<f64>,
    /// `Σ_η`.
    pub state_cov_f: DMatrix<f64>,
}

impl FactorDynamics {
    pub fn m(&self) -> usize {
        self.state_cov_g.nrows()
    }

    pub fn l(&self) -> usize {
        self.state_cov_f.nrows()
    }

    /// `p* = max(p, q, s)`, at least one.
    pub fn order(&self) -> usize {
        self.c.len().max(self.d.len()).max(self.r.len()).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, l) = (self.m(), self.l());
        if !linalg::is_square(&self.state_cov_g) || !linalg::is_square(&self.state_cov_f) {
            return Err(dim_err("state covariances must be square"));
        }
        if self.c.iter().any(|c| c.shape() != (m, m)) {
            return Err(dim_err("C_i must be m x m"));
        }
        if self.d.iter().any(|d| d.shape() != (m, l)) {
            return Err(dim_err("D_j must be m x l"));
        }
        if self.r.iter().any(|r| r.shape() != (l, l)) {
            return Err(dim_err("R_k must be l x l"));
        }
        Ok(())
    }

    /// `Φ_i = [[C_i, D_i], [0, R_i]]` with zero padding beyond each list,
    /// for `i` in `1..=order`.
    pub fn var_block(&self, i: usize) -> DMatrix<f64> {
        let (m, l) = (self.m(), self.l());
        let mut phi = DMatrix::zeros(m + l, m + l);
        if let Some(c) = self.c.get(i - 1) {
            phi.view_mut((0, 0), (m, m)).copy_from(c);
        }
        if let Some(d) = self.d.get(i - 1) {
            phi.view_mut((0, m), (m, l)).copy_from(d);
        }
        if let Some(r) = self.r.get(i - 1) {
            phi.view_mut((m, m), (l, l)).copy_from(r);
        }
        phi
    }

    pub fn var_blocks(&self) -> Vec<DMatrix<f64>> {
        (1..=self.order()).map(|i| self.var_block(i)).collect()
    }

    /// Inverse of `var_blocks`: splits `Φ_i` into `(C_i, D_i, R_i)`.
    pub fn from_var_blocks(phis: &[DMatrix<f64>], m: usize, l: usize, state_cov_g: DMatrix<f64>, state_cov_f: DMatrix<f64>) -> Result<Self> {
        if phis.iter().any(|p| p.shape() != (m + l, m + l)) {
            return Err(dim_err("VAR blocks must be (m+l) x (m+l)"));
        }
        let c = phis.iter().map(|p| p.view((0, 0), (m, m)).into_owned()).collect();
        let d = phis.iter().map(|p| p.view((0, m), (m, l)).into_owned()).collect();
        let r = phis.iter().map(|p| p.view((m, m), (l, l)).into_owned()).collect();
        let dynamics = FactorDynamics { c, d, r, state_cov_g, state_cov_f };
        dynamics.validate()?;
        Ok(dynamics)
    }

    /// `Σ_ε = diag(Σ_ξ, Σ_η)`.
    pub fn innovation_cov(&self) -> DMatrix<f64> {
        linalg::block_diag(&[&self.state_cov_g, &self.state_cov_f])
    }
}

/// Companion-form linear Gaussian state space model
/// `α(t) = Φ α(t-1) + Ξ ε(t)`, `z(t) = offset + H α(t) + u(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceForm {
    pub m: usize,
    pub l: usize,
    pub order: usize,
    /// `Φ`, `(m+l)p* × (m+l)p*`.
    pub transition: DMatrix<f64>,
    /// `Ξ = [I; 0; …; 0]`.
    pub input: DMatrix<f64>,
    /// `H = [diag(H_y, H_x), 0, …, 0]`.
    pub meas: DMatrix<f64>,
    /// `Ψ = Σ_ε`, covariance of the innovation entering through `Ξ`.
    pub state_noise_cov: DMatrix<f64>,
    /// Diagonal of `Σ_u`.
    pub obs_noise_var: DVector<f64>,
    /// Observation mean `[m_y; m_x]`, subtracted before filtering.
    pub obs_offset: DVector<f64>,
}

impl StateSpaceForm {
    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn block_dim(&self) -> usize {
        self.m + self.l
    }

    pub fn n_obs(&self) -> usize {
        self.meas.nrows()
    }

    /// `Ξ Ψ Ξ'`.
    pub fn state_cov(&self) -> DMatrix<f64> {
        &self.input * &self.state_noise_cov * self.input.transpose()
    }

    /// Blocks `Φ_1..Φ_p*` of the top block row.
    pub fn var_blocks(&self) -> Vec<DMatrix<f64>> {
        let k = self.block_dim();
        (0..self.order).map(|i| self.transition.view((0, i * k), (k, k)).into_owned()).collect()
    }

    /// Recovers `(C_i, D_i, R_i)` for `i = 1..p*`.
    pub fn extract_dynamics(&self) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let (m, l) = (self.m, self.l);
        let blocks = self.var_blocks();
        let c = blocks.iter().map(|p| p.view((0, 0), (m, m)).into_owned()).collect();
        let d = blocks.iter().map(|p| p.view((0, m), (m, l)).into_owned()).collect();
        let r = blocks.iter().map(|p| p.view((m, m), (l, l)).into_owned()).collect();
        (c, d, r)
    }
}

/// Assembles `(Φ, Ξ, H, Ψ, Σ_u)` from the dynamics and the measurement
/// equations.
pub fn assemble_companion(dynamics: &FactorDynamics, meas: &MeasurementModel) -> Result<StateSpaceForm> {
    dynamics.validate()?;
    meas.validate()?;
    let (m, l) = (dynamics.m(), dynamics.l());
    if meas.m() != m || meas.l() != l {
        return Err(dim_err(format!("dynamics have (m,l)=({m},{l}), loadings have ({},{})", meas.m(), meas.l())));
    }
    let p = dynamics.order();
    let k = m + l;
    let dim = k * p;
    let mut transition = DMatrix::zeros(dim, dim);
    for i in 0..p {
        transition.view_mut((0, i * k), (k, k)).copy_from(&dynamics.var_block(i + 1));
    }
    for i in 1..p {
        transition.view_mut((i * k, (i - 1) * k), (k, k)).fill_with_identity();
    }
    let mut input = DMatrix::zeros(dim, k);
    input.view_mut((0, 0), (k, k)).fill_with_identity();
    let (ny, nx) = (meas.n_y(), meas.n_x());
    let mut h = DMatrix::zeros(ny + nx, dim);
    h.view_mut((0, 0), (ny, m)).copy_from(&meas.hy);
    h.view_mut((ny, m), (nx, l)).copy_from(&meas.hx);
    Ok(StateSpaceForm {
        m,
        l,
        order: p,
        transition,
        input,
        meas: h,
        state_noise_cov: dynamics.innovation_cov(),
        obs_noise_var: meas.obs_var(),
        obs_offset: meas.obs_mean(),
    })
}

/// Latent factor path `d(t) = [g(t); f(t)]`, one row per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorPath {
    pub values: DMatrix<f64>,
}

impl FactorPath {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, t: usize) -> DVector<f64> {
        self.values.row(t).transpose()
    }
}
