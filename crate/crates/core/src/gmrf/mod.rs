//! Multivariate Gaussian Markov random fields on a lattice.
//!
//! Each loading column is a GMRF over `N` sites with `n_vars` values per
//! site. The joint precision is built from the adjacency `W`, the
//! conditional covariance `T` and the reparametrized spatial coefficient
//! `F~ = T^{-1/2} F T^{1/2}`:
//!
//! `Q = (I_N ⊗ T^{-1/2}) [I + W^U ⊗ F~ + W^L ⊗ F~'] (I_N ⊗ T^{-1/2})`.
//!
//! Sign convention: the off-diagonal precision block between neighbours is
//! `T^{-1} F`, so a positive conditional-mean coefficient `θ` corresponds to
//! `F = -θ`.

mod adjacency;

pub use adjacency::AdjacencyMatrix;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, PD_TOLERANCE};

/// Hyperparameters of one loading-column GMRF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmrfSpec {
    /// `T^{-1}`, the conditional precision within a site.
    pub cond_prec: DMatrix<f64>,
    /// `F~`, the reparametrized spatial coefficient.
    pub ftilde: DMatrix<f64>,
    /// `D*`, an `N·n_vars × q` design matrix for the field mean.
    pub mean_design: DMatrix<f64>,
    /// `β`.
    pub mean_coef: DVector<f64>,
}

/// Mean and precision of the joint field.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGmrf {
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
}

/// `1_N ⊗ I_{n_vars}`: a spatially constant mean per variable.
pub fn intercept_design(n_sites: usize, n_vars: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n_sites * n_vars, n_vars, |r, c| if r % n_vars == c { 1.0 } else { 0.0 })
}

impl GmrfSpec {
    /// Builds a spec from the conditional covariance `T` and `F~`.
    pub fn new(cond_cov: &DMatrix<f64>, ftilde: DMatrix<f64>, mean_design: DMatrix<f64>, mean_coef: DVector<f64>) -> Result<Self> {
        let n = cond_cov.nrows();
        if !linalg::is_square(cond_cov) || ftilde.shape() != (n, n) {
            return Err(dim_err("GmrfSpec: T and F~ must be n_vars x n_vars"));
        }
        if mean_design.ncols() != mean_coef.len() || mean_design.nrows() % n.max(1) != 0 {
            return Err(dim_err("GmrfSpec: design matrix does not match β"));
        }
        let cond_prec = linalg::spd_inverse(cond_cov).map_err(|_| Error::NotPositiveDefinite("conditional covariance T".into()))?;
        Ok(GmrfSpec { cond_prec, ftilde, mean_design, mean_coef })
    }

    /// Builds a spec from `T` and the un-reparametrized `F`.
    pub fn from_spatial_coef(
        cond_cov: &DMatrix<f64>,
        spatial_coef: &DMatrix<f64>,
        mean_design: DMatrix<f64>,
        mean_coef: DVector<f64>,
    ) -> Result<Self> {
        let t_half = linalg::sym_sqrt(cond_cov)?;
        let t_inv_half = linalg::sym_inv_sqrt(cond_cov)?;
        let ftilde = &t_inv_half * spatial_coef * &t_half;
        Self::new(cond_cov, ftilde, mean_design, mean_coef)
    }

    /// Intercept-only spec with zero mean.
    pub fn intercept_only(n_sites: usize, cond_cov: &DMatrix<f64>, ftilde: DMatrix<f64>) -> Result<Self> {
        let n_vars = cond_cov.nrows();
        Self::new(cond_cov, ftilde, intercept_design(n_sites, n_vars), DVector::zeros(n_vars))
    }

    pub fn n_vars(&self) -> usize {
        self.cond_prec.nrows()
    }

    pub fn cond_cov(&self) -> Result<DMatrix<f64>> {
        linalg::spd_inverse(&self.cond_prec)
    }

    /// `F = T^{1/2} F~ T^{-1/2}`.
    pub fn spatial_coef(&self) -> Result<DMatrix<f64>> {
        let t = self.cond_cov()?;
        Ok(linalg::sym_sqrt(&t)? * &self.ftilde * linalg::sym_inv_sqrt(&t)?)
    }

    /// `μ = D* β`.
    pub fn mean(&self) -> DVector<f64> {
        &self.mean_design * &self.mean_coef
    }

    /// Neighbour block of the joint precision, `T^{-1/2} F~ T^{-1/2}`.
    pub fn neighbour_block(&self) -> Result<DMatrix<f64>> {
        let s = linalg::sym_sqrt(&self.cond_prec)?;
        Ok(&s * &self.ftilde * &s)
    }
}

/// `I + W^U ⊗ F~ + W^L ⊗ F~'`, the scale-free core of the precision.
pub fn spatial_core(w: &AdjacencyMatrix, ftilde: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.n_sites();
    let k = ftilde.nrows();
    let mut core = DMatrix::identity(n * k, n * k);
    let ft = ftilde.transpose();
    for (i, j) in w.edges() {
        core.view_mut((i * k, j * k), (k, k)).copy_from(ftilde);
        core.view_mut((j * k, i * k), (k, k)).copy_from(&ft);
    }
    core
}

/// `(I_N ⊗ S) M (I_N ⊗ S)` for a per-site symmetric scale `S`.
pub(crate) fn scale_blocks(core: &DMatrix<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    let k = s.nrows();
    let n = core.nrows() / k.max(1);
    let mut out = DMatrix::zeros(core.nrows(), core.ncols());
    for i in 0..n {
        for j in 0..n {
            let blk = core.view((i * k, j * k), (k, k));
            if blk.iter().all(|v| *v == 0.0) {
                continue;
            }
            let scaled = s * blk * s;
            out.view_mut((i * k, j * k), (k, k)).copy_from(&scaled);
        }
    }
    out
}

/// Joint mean and precision of the field; fails when the precision is not
/// positive definite.
pub fn build_joint_precision(w: &AdjacencyMatrix, spec: &GmrfSpec) -> Result<JointGmrf> {
    let k = spec.n_vars();
    let n = w.n_sites();
    if spec.mean_design.nrows() != n * k {
        return Err(dim_err(format!("design has {} rows, lattice needs {}", spec.mean_design.nrows(), n * k)));
    }
    let core = spatial_core(w, &spec.ftilde);
    let s = linalg::sym_sqrt(&spec.cond_prec)?;
    let mut precision = scale_blocks(&core, &s);
    linalg::symmetrize(&mut precision);
    let g = JointGmrf { mean: spec.mean(), precision };
    if !check_positive_definite(&g) {
        return Err(Error::NotPositiveDefinite("joint GMRF precision; spatial coefficients outside the valid region".into()));
    }
    Ok(g)
}

/// Diagonal dominance first, smallest eigenvalue above `1e-10` otherwise.
pub fn check_positive_definite(g: &JointGmrf) -> bool {
    is_pd_matrix(&g.precision)
}

pub(crate) fn is_pd_matrix(m: &DMatrix<f64>) -> bool {
    if m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    if linalg::is_strictly_diagonally_dominant(m) {
        return true;
    }
    linalg::min_eigenvalue(m) > PD_TOLERANCE
}

/// One draw from `N(mean, precision^{-1})`.
pub fn sample_gmrf<R: Rng + ?Sized>(g: &JointGmrf, rng: &mut R) -> Result<DVector<f64>> {
    let z = linalg::standard_normal_vec(g.mean.len(), rng);
    sample_gmrf_with_deviates(g, &z)
}

/// Deterministic map from standard normal deviates to a field draw:
/// `μ + L'^{-1} z` with `L L' = Q`.
pub fn sample_gmrf_with_deviates(g: &JointGmrf, z: &DVector<f64>) -> Result<DVector<f64>> {
    if z.len() != g.mean.len() {
        return Err(dim_err("deviate vector length"));
    }
    let chol = linalg::cholesky(&g.precision)?;
    let x = chol
        .l()
        .transpose()
        .solve_upper_triangular(z)
        .ok_or_else(|| Error::FactorizationFailure("GMRF triangular solve".into()))?;
    Ok(&g.mean + x)
}

/// Conditional correlation of two neighbouring sites given the rest,
/// `Δ^{-1/2} Σ Δ^{-1/2}` where `Σ` inverts the 2-block precision.
pub fn conditional_correlation(spec: &GmrfSpec) -> Result<DMatrix<f64>> {
    let k = spec.n_vars();
    let b = spec.neighbour_block()?;
    let mut p2 = DMatrix::zeros(2 * k, 2 * k);
    p2.view_mut((0, 0), (k, k)).copy_from(&spec.cond_prec);
    p2.view_mut((k, k), (k, k)).copy_from(&spec.cond_prec);
    p2.view_mut((0, k), (k, k)).copy_from(&b);
    p2.view_mut((k, 0), (k, k)).copy_from(&b.transpose());
    let sigma = linalg::spd_inverse(&p2).map_err(|_| Error::NotPositiveDefinite("pairwise conditional precision".into()))?;
    let d: Vec<f64> = (0..2 * k).map(|i| 1.0 / sigma[(i, i)].sqrt()).collect();
    let mut omega = DMatrix::from_fn(2 * k, 2 * k, |i, j| sigma[(i, j)] * d[i] * d[j]);
    for i in 0..2 * k {
        omega[(i, i)] = 1.0;
    }
    Ok(omega)
}
