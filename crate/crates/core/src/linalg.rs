//! Dense linear-algebra helpers shared by the samplers.
//!
//! Everything here works on `nalgebra` dynamic matrices. The model sizes
//! handled by this crate (tens of sites, a handful of factors) keep dense
//! factorizations cheap.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{dim_err, Error, Result};

/// Eigenvalue floor used by the positive-definiteness checks.
pub const PD_TOLERANCE: f64 = 1e-10;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    symmetrize(&mut out);
    out
}

pub fn is_square(m: &DMatrix<f64>) -> bool {
    m.nrows() == m.ncols()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let eig = SymmetricEigen::new(symmetrized(m));
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Strict row diagonal dominance with positive diagonal (sufficient for PD
/// when the matrix is symmetric).
pub fn is_strictly_diagonally_dominant(m: &DMatrix<f64>) -> bool {
    (0..m.nrows()).all(|i| {
        let d = m[(i, i)];
        let off: f64 = (0..m.ncols()).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
        d > 0.0 && d > off
    })
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
pub fn sym_fn(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrized(m));
    let vals = eig.eigenvalues.map(f);
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&vals) * v.transpose();
    symmetrize(&mut out);
    out
}

/// Symmetric (spectral) square root of an SPD matrix.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if min_eigenvalue(m) <= 0.0 {
        return Err(Error::NotPositiveDefinite("square root of non-PD matrix".into()));
    }
    Ok(sym_fn(m, f64::sqrt))
}

pub fn sym_inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if min_eigenvalue(m) <= 0.0 {
        return Err(Error::NotPositiveDefinite("inverse square root of non-PD matrix".into()));
    }
    Ok(sym_fn(m, |x| 1.0 / x.sqrt()))
}

pub fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(symmetrized(m))
        .ok_or_else(|| Error::FactorizationFailure(format!("Cholesky of {}x{} matrix", m.nrows(), m.ncols())))
}

pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut inv = cholesky(m)?.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = cholesky(m)?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Moore–Penrose style pseudo-inverse of a PSD matrix; eigenvalues below
/// `rel_tol * max_eig` are treated as zero.
pub fn psd_pinv(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrized(m));
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
    let cut = rel_tol * max.max(f64::MIN_POSITIVE);
    let vals = eig.eigenvalues.map(|x| if x > cut { 1.0 / x } else { 0.0 });
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&vals) * v.transpose()
}

/// Solves `S X = B` for symmetric PSD `S`, falling back to the
/// pseudo-inverse when Cholesky fails.
pub fn robust_spd_solve(s: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    match Cholesky::new(symmetrized(s)) {
        Some(chol) => chol.solve(b),
        None => psd_pinv(s, 1e-13) * b,
    }
}

pub fn standard_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Draws from `N(mean, cov)` for a PSD covariance. Cholesky is tried
/// first; on failure the eigen-decomposition with clipped eigenvalues is
/// used so that degenerate directions get exactly zero variance.
pub fn mvn_from_cov<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> Result<DVector<f64>> {
    let n = mean.len();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(dim_err("mvn_from_cov: covariance does not match mean"));
    }
    let z = standard_normal_vec(n, rng);
    let sym = symmetrized(cov);
    if let Some(chol) = Cholesky::new(sym.clone()) {
        return Ok(mean + chol.l() * z);
    }
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    let draw = mean + &eig.eigenvectors * DVector::from_iterator(n, scale.iter().zip(z.iter()).map(|(s, z)| s * z));
    if draw.iter().all(|v| v.is_finite()) {
        Ok(draw)
    } else {
        Err(Error::FactorizationFailure("eigen-decomposition draw is not finite".into()))
    }
}

/// Gaussian draw in canonical form: precision `q` and linear term `b`,
/// so that the mean is `q^{-1} b`. Returns `(draw, mean)`.
pub fn mvn_from_precision<R: Rng + ?Sized>(
    q: &DMatrix<f64>,
    b: &DVector<f64>,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = b.len();
    if q.nrows() != n || q.ncols() != n {
        return Err(dim_err("mvn_from_precision: precision does not match linear term"));
    }
    if n == 0 {
        return Ok((DVector::zeros(0), DVector::zeros(0)));
    }
    let chol = cholesky(q)?;
    let mean = chol.solve(b);
    let z = standard_normal_vec(n, rng);
    let lt = chol.l().transpose();
    let x = lt
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::FactorizationFailure("triangular solve in precision draw".into()))?;
    Ok((&mean + x, mean))
}

/// Left pseudo-inverse `(H'H)^{-1} H'` of a full-column-rank matrix.
pub fn left_pinv(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let hth = h.transpose() * h;
    if hth.nrows() == 0 {
        return Ok(DMatrix::zeros(0, h.nrows()));
    }
    let eig = SymmetricEigen::new(symmetrized(&hth));
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(Error::RankDeficientLoadings);
    }
    let chol = cholesky(&hth).map_err(|_| Error::RankDeficientLoadings)?;
    Ok(chol.solve(&h.transpose()))
}

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Linear-interpolation quantile (type 7) of an unsorted sample.
pub fn quantile(values: &[f64], prob: f64) -> f64 {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&sorted, prob)
}

pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * prob.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}
