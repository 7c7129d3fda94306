//! Synthetic panels with known parameters.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ecm::EcmBlocks;
use crate::error::Result;
use crate::gmrf::{build_joint_precision, sample_gmrf, AdjacencyMatrix, GmrfSpec};
use crate::mcmc::{ModelSpec, SdSemParams, SsvsState};
use crate::state_space::{simulate_factors, simulate_observations, FactorPath, MeasurementModel};

/// Ground truth for a simulated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub spec: ModelSpec,
    pub grid: (usize, usize),
    pub params: SdSemParams,
}

impl SyntheticTruth {
    pub fn adjacency(&self) -> Result<AdjacencyMatrix> {
        AdjacencyMatrix::grid(self.grid.0, self.grid.1)
    }
}

/// Simulated output: `Y` and `X` (one row per period) and the factor path.
#[derive(Debug, Clone)]
pub struct SyntheticPanel {
    pub y: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub factors: FactorPath,
}

/// The 3×3 lattice reference system: two factors per panel, two lags, one
/// cointegrating relation inside `d` and one inside `f`. The loadings are
/// drawn from a positively correlated GMRF and then pinned to the identity
/// at the anchor sites 0 and 8.
pub fn desk_truth<R: Rng + ?Sized>(rng: &mut R) -> Result<SyntheticTruth> {
    let adjacency = AdjacencyMatrix::grid(3, 3)?;
    let mut spec = ModelSpec::new(9, 1, 1, 2, 2, 2);
    spec.anchors_y = vec![0, 8];
    spec.anchors_x = vec![0, 8];

    let ftilde = DMatrix::from_element(1, 1, -0.3);
    let one = DMatrix::identity(1, 1);
    let mut draw_side = |anchors: &[usize]| -> Result<(DMatrix<f64>, Vec<GmrfSpec>)> {
        let mut h = DMatrix::zeros(9, 2);
        let mut specs = Vec::new();
        for (j, beta) in [1.0, 0.5].into_iter().enumerate() {
            let mut g = GmrfSpec::intercept_only(9, &one, ftilde.clone())?;
            g.mean_coef = DVector::from_element(1, beta);
            let col = sample_gmrf(&build_joint_precision(&adjacency, &g)?, rng)?;
            h.set_column(j, &col);
            specs.push(g);
        }
        for (c, &row) in anchors.iter().enumerate() {
            for j in 0..2 {
                h[(row, j)] = if j == c { 1.0 } else { 0.0 };
            }
        }
        Ok((h, specs))
    };
    let (hy, gmrf_y) = draw_side(&spec.anchors_y)?;
    let (hx, gmrf_x) = draw_side(&spec.anchors_x)?;

    let col = |v: &[f64]| DMatrix::from_column_slice(v.len(), 1, v);
    let ecm = EcmBlocks {
        a: col(&[-0.3, 0.0]),
        b1: col(&[1.0, 0.0]),
        b2: col(&[-1.0, 0.0]),
        a2: col(&[0.0, 0.0]),
        af: col(&[-0.3, 0.0]),
        bf: col(&[1.0, -1.0]),
        k: vec![DMatrix::from_row_slice(2, 4, &[0.2, 0.0, 0.1, 0.0, 0.0, 0.2, 0.0, 0.1])],
        phi2: vec![DMatrix::identity(2, 2) * 0.2],
        e: DMatrix::identity(1, 1),
        ef: DMatrix::identity(1, 1),
    };
    let meas = MeasurementModel {
        hy,
        hx,
        mean_y: DVector::from_element(9, 5.0),
        mean_x: DVector::from_element(9, 3.0),
        obs_var_y: DVector::from_element(9, 0.0625),
        obs_var_x: DVector::from_element(9, 0.0625),
    };
    let params = SdSemParams {
        meas,
        gmrf_y,
        gmrf_x,
        ecm,
        state_cov_g: DMatrix::identity(2, 2) * 0.09,
        state_cov_f: DMatrix::identity(2, 2) * 0.09,
        ssvs: SsvsState::flat(&spec, 1.0),
    };
    Ok(SyntheticTruth { spec, grid: (3, 3), params })
}

/// Draws factors from the ECM dynamics (started at zero) and then the panels.
pub fn simulate_panel<R: Rng + ?Sized>(params: &SdSemParams, t_len: usize, rng: &mut R) -> Result<SyntheticPanel> {
    let factors = simulate_factors(&params.dynamics()?, t_len, None, rng)?;
    let z = simulate_observations(&params.meas, &factors, rng)?;
    let ny = params.meas.n_y();
    let y = z.columns(0, ny).into_owned();
    let x = z.columns(ny, z.ncols() - ny).into_owned();
    Ok(SyntheticPanel { y, x, factors })
}
