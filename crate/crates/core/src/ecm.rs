//! Error-correction form of the factor VAR and cointegrating ranks.
//!
//! `Δd(t) = Ã d(t-1) + Σ Φ~_i Δd(t-i) + ε(t)`. With the block
//! parameterization the two state equations read
//!
//! `Δg(t) = A B' d(t-1) + A2 Bf' f(t-1) + Σ K_i Δd(t-i) + ξ(t)`
//! `Δf(t) = Af Bf' f(t-1) + Σ Φ~2_i Δf(t-i) + η(t)`
//!
//! so `Ã = [[A B1', A B2' + A2 Bf'], [0, Af Bf']]`.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg;

/// Default singular-value cutoff for the rank rule.
pub const DEFAULT_RANK_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmForm {
    pub m: usize,
    pub l: usize,
    /// `Ã`.
    pub longrun: DMatrix<f64>,
    /// `Φ~_1..Φ~_{p-1}`.
    pub shortrun: Vec<DMatrix<f64>>,
}

impl EcmForm {
    pub fn dim(&self) -> usize {
        self.m + self.l
    }

    pub fn order(&self) -> usize {
        self.shortrun.len() + 1
    }
}

/// Block parameterization of the ECM in identified coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmBlocks {
    /// `m × r_d`.
    pub a: DMatrix<f64>,
    /// `m × r_d`.
    pub b1: DMatrix<f64>,
    /// `l × r_d`.
    pub b2: DMatrix<f64>,
    /// `m × r_f`.
    pub a2: DMatrix<f64>,
    /// `l × r_f`.
    pub af: DMatrix<f64>,
    /// `l × r_f`.
    pub bf: DMatrix<f64>,
    /// `K_1..K_{p-1}`, each `m × (m+l)`.
    pub k: Vec<DMatrix<f64>>,
    /// `Φ~2_1..Φ~2_{p-1}`, each `l × l`.
    pub phi2: Vec<DMatrix<f64>>,
    /// Mixing matrix `E`, `r_d × r_d`.
    pub e: DMatrix<f64>,
    /// Mixing matrix `E_f`, `r_f × r_f`.
    pub ef: DMatrix<f64>,
}

impl EcmBlocks {
    /// All-zero blocks: a pure random walk in `d`.
    pub fn zeros(m: usize, l: usize, r_d: usize, r_f: usize, order: usize) -> Self {
        let lags = order.saturating_sub(1);
        EcmBlocks {
            a: DMatrix::zeros(m, r_d),
            b1: DMatrix::zeros(m, r_d),
            b2: DMatrix::zeros(l, r_d),
            a2: DMatrix::zeros(m, r_f),
            af: DMatrix::zeros(l, r_f),
            bf: DMatrix::zeros(l, r_f),
            k: vec![DMatrix::zeros(m, m + l); lags],
            phi2: vec![DMatrix::zeros(l, l); lags],
            e: DMatrix::identity(r_d, r_d),
            ef: DMatrix::identity(r_f, r_f),
        }
    }

    /// Normalizes draws in the non-identified coordinates:
    /// `E = (B̄'B̄)^{-1/2}`, `B = B̄ E`, `A = Ā E^{-1}`, and likewise for
    /// `(Ā2, Āf, B̄f)` with `E_f`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_bar(
        m: usize,
        a_bar: &DMatrix<f64>,
        b_bar: &DMatrix<f64>,
        a2_bar: &DMatrix<f64>,
        af_bar: &DMatrix<f64>,
        bf_bar: &DMatrix<f64>,
        k: Vec<DMatrix<f64>>,
        phi2: Vec<DMatrix<f64>>,
    ) -> Self {
        let (e, e_inv) = mixing(b_bar);
        let (ef, ef_inv) = mixing(bf_bar);
        let b = b_bar * &e;
        let l = b_bar.nrows() - m;
        EcmBlocks {
            a: a_bar * &e_inv,
            b1: b.rows(0, m).into_owned(),
            b2: b.rows(m, l).into_owned(),
            a2: a2_bar * &ef_inv,
            af: af_bar * &ef_inv,
            bf: bf_bar * &ef,
            k,
            phi2,
            e,
            ef,
        }
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn l(&self) -> usize {
        self.af.nrows()
    }

    pub fn r_d(&self) -> usize {
        self.a.ncols()
    }

    pub fn r_f(&self) -> usize {
        self.af.ncols()
    }

    pub fn order(&self) -> usize {
        self.k.len() + 1
    }

    /// `B = [B1; B2]`.
    pub fn b(&self) -> DMatrix<f64> {
        let (m, l, r) = (self.m(), self.l(), self.r_d());
        let mut b = DMatrix::zeros(m + l, r);
        b.rows_mut(0, m).copy_from(&self.b1);
        b.rows_mut(m, l).copy_from(&self.b2);
        b
    }

    /// `Π_gd = A B'`, `m × (m+l)`.
    pub fn pi_gd(&self) -> DMatrix<f64> {
        &self.a * self.b().transpose()
    }

    /// `Π_f = Af Bf'`.
    pub fn pi_f(&self) -> DMatrix<f64> {
        &self.af * self.bf.transpose()
    }

    /// `A B2'`.
    pub fn pi_c1(&self) -> DMatrix<f64> {
        &self.a * self.b2.transpose()
    }

    /// `A2 Bf'`.
    pub fn pi_c2(&self) -> DMatrix<f64> {
        &self.a2 * self.bf.transpose()
    }

    /// `A B2' + A2 Bf'`, the cross block of `Ã`.
    pub fn pi_c(&self) -> DMatrix<f64> {
        self.pi_c1() + self.pi_c2()
    }

    pub fn validate(&self) -> Result<()> {
        let (m, l, rd, rf) = (self.m(), self.l(), self.r_d(), self.r_f());
        let ok = self.b1.shape() == (m, rd)
            && self.b2.shape() == (l, rd)
            && self.a2.shape() == (m, rf)
            && self.bf.shape() == (l, rf)
            && self.e.shape() == (rd, rd)
            && self.ef.shape() == (rf, rf)
            && self.k.len() == self.phi2.len()
            && self.k.iter().all(|k| k.shape() == (m, m + l))
            && self.phi2.iter().all(|p| p.shape() == (l, l));
        if ok {
            Ok(())
        } else {
            Err(dim_err("ECM block dimensions are inconsistent"))
        }
    }
}

/// `(E, E^{-1})` with `E = (B̄'B̄)^{-1/2}`; a zero `B̄` gives the identity.
fn mixing(b_bar: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let r = b_bar.ncols();
    let btb = b_bar.transpose() * b_bar;
    if r == 0 || linalg::min_eigenvalue(&btb) <= 1e-300 {
        return (DMatrix::identity(r, r), DMatrix::identity(r, r));
    }
    (linalg::sym_fn(&btb, |x| 1.0 / x.sqrt()), linalg::sym_fn(&btb, f64::sqrt))
}

fn check_block_triangular(mat: &DMatrix<f64>, m: usize, what: &str) -> Result<()> {
    let n = mat.nrows();
    if mat.view((m, 0), (n - m, m)).iter().any(|v| *v != 0.0) {
        return Err(Error::BlockStructureViolation(format!("{what}: lower-left block is not zero")));
    }
    Ok(())
}

/// `Ã = -I + Σ Φ_i`, `Φ~_i = -Σ_{j>i} Φ_j`.
pub fn var_to_ecm(phis: &[DMatrix<f64>], m: usize) -> Result<EcmForm> {
    let first = phis.first().ok_or_else(|| dim_err("at least one VAR matrix is required"))?;
    let n = first.nrows();
    if m > n || phis.iter().any(|p| p.shape() != (n, n)) {
        return Err(dim_err("VAR matrices must be square and equal in size"));
    }
    for (i, p) in phis.iter().enumerate() {
        check_block_triangular(p, m, &format!("Φ_{}", i + 1))?;
    }
    let p = phis.len();
    let mut longrun = -DMatrix::identity(n, n);
    for phi in phis {
        longrun += phi;
    }
    let mut shortrun = Vec::with_capacity(p - 1);
    for i in 1..p {
        let mut acc = DMatrix::zeros(n, n);
        for phi in &phis[i..] {
            acc -= phi;
        }
        shortrun.push(acc);
    }
    Ok(EcmForm { m, l: n - m, longrun, shortrun })
}

/// Inverse of [`var_to_ecm`].
pub fn ecm_to_var(ecm: &EcmForm) -> Result<Vec<DMatrix<f64>>> {
    let n = ecm.dim();
    if ecm.longrun.shape() != (n, n) || ecm.shortrun.iter().any(|s| s.shape() != (n, n)) {
        return Err(dim_err("ECM matrices must be (m+l) x (m+l)"));
    }
    let p = ecm.order();
    let mut phis = Vec::with_capacity(p);
    let id = DMatrix::<f64>::identity(n, n);
    if p == 1 {
        phis.push(&id + &ecm.longrun);
        return Ok(phis);
    }
    let s = &ecm.shortrun;
    phis.push(&id + &ecm.longrun + &s[0]);
    for i in 1..(p - 1) {
        phis.push(&s[i] - &s[i - 1]);
    }
    phis.push(-&s[p - 2]);
    Ok(phis)
}

/// Assembles `Ã` and `Φ~_i` from the blocks.
pub fn blocks_to_ecm(blocks: &EcmBlocks) -> Result<EcmForm> {
    blocks.validate()?;
    let (m, l) = (blocks.m(), blocks.l());
    let n = m + l;
    let mut longrun = DMatrix::zeros(n, n);
    longrun.view_mut((0, 0), (m, m)).copy_from(&(&blocks.a * blocks.b1.transpose()));
    longrun.view_mut((0, m), (m, l)).copy_from(&blocks.pi_c());
    longrun.view_mut((m, m), (l, l)).copy_from(&blocks.pi_f());
    let shortrun = blocks
        .k
        .iter()
        .zip(&blocks.phi2)
        .map(|(k, p2)| {
            let mut s = DMatrix::zeros(n, n);
            s.rows_mut(0, m).copy_from(k);
            s.view_mut((m, m), (l, l)).copy_from(p2);
            s
        })
        .collect();
    Ok(EcmForm { m, l, longrun, shortrun })
}

/// Number of singular values strictly above `threshold`.
pub fn rank_estimate(mat: &DMatrix<f64>, threshold: f64) -> usize {
    if mat.nrows() == 0 || mat.ncols() == 0 {
        return 0;
    }
    mat.clone().singular_values().iter().filter(|s| **s > threshold).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CointRanks {
    pub r_f: usize,
    pub r_d: usize,
    pub r_c: usize,
    pub r_c1: usize,
    pub r_c2: usize,
}

impl CointRanks {
    pub fn of(blocks: &EcmBlocks, threshold: f64) -> Self {
        CointRanks {
            r_f: rank_estimate(&blocks.pi_f(), threshold),
            r_d: rank_estimate(&blocks.pi_gd(), threshold),
            r_c: rank_estimate(&blocks.pi_c(), threshold),
            r_c1: rank_estimate(&blocks.pi_c1(), threshold),
            r_c2: rank_estimate(&blocks.pi_c2(), threshold),
        }
    }
}

/// Posterior rank frequencies; `probs[j][r]` is `P(rank_j = r)` for
/// `j` over `(r_f, r_d, r_c, r_c1, r_c2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankPosterior {
    pub n_draws: usize,
    pub probs: [Vec<f64>; 5],
}

pub const RANK_NAMES: [&str; 5] = ["r_f", "r_d", "r_c", "r_c1", "r_c2"];

impl RankPosterior {
    pub fn mode(&self, which: usize) -> usize {
        let p = &self.probs[which];
        let mut best = 0;
        for (r, v) in p.iter().enumerate() {
            if *v > p[best] {
                best = r;
            }
        }
        best
    }

    pub fn max_rank(&self) -> usize {
        self.probs.iter().map(|p| p.len()).max().unwrap_or(1).saturating_sub(1)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["rank".to_string()];
        header.extend(RANK_NAMES.iter().map(|s| s.to_string()));
        wr.write_record(&header)?;
        for r in 0..=self.max_rank() {
            let mut row = vec![r.to_string()];
            for p in &self.probs {
                row.push(format!("{}", p.get(r).copied().unwrap_or(0.0)));
            }
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Tabulates ranks over a sequence of block draws.
pub fn rank_posterior<'a, I>(draws: I, threshold: f64) -> Result<RankPosterior>
where
    I: IntoIterator<Item = &'a EcmBlocks>,
{
    let mut counts: [Vec<usize>; 5] = Default::default();
    let mut n = 0usize;
    for blocks in draws {
        let r = CointRanks::of(blocks, threshold);
        let (m, l) = (blocks.m(), blocks.l());
        let caps = [l, m, m.min(l), m.min(l), m.min(l)];
        for (j, (v, cap)) in [r.r_f, r.r_d, r.r_c, r.r_c1, r.r_c2].into_iter().zip(caps).enumerate() {
            let len = (cap + 1).max(v + 1);
            if counts[j].len() < len {
                counts[j].resize(len, 0);
            }
            counts[j][v] += 1;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyChain);
    }
    let probs = counts.map(|c| c.into_iter().map(|k| k as f64 / n as f64).collect());
    Ok(RankPosterior { n_draws: n, probs })
}
