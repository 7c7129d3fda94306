use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ecm::{blocks_to_ecm, ecm_to_var, EcmBlocks};
use crate::error::{dim_err, Error, Result};
use crate::gmrf::{intercept_design, GmrfSpec};
use crate::state_space::{assemble_companion, FactorDynamics, MeasurementModel, StateSpaceForm};

/// Prior hyperparameters. Defaults follow the housing application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// Gamma shape/rate for each observation precision.
    pub obs_precision_shape: f64,
    pub obs_precision_rate: f64,
    /// `σ_β²`, prior variance of the GMRF mean coefficients.
    pub loading_mean_var: f64,
    /// Wishart degrees of freedom for `T^{-1}` (Y and X columns).
    pub wishart_df_y: f64,
    pub wishart_df_x: f64,
    /// `S = s I`.
    pub wishart_scale: f64,
    /// `ς` in the `exp(-υ'υ/ς²)` prior on `F~`.
    pub gmrf_coef_scale: f64,
    pub ssvs_inclusion_a: f64,
    pub ssvs_inclusion_k: f64,
    pub ssvs_inclusion_phi: f64,
    pub ssvs_spike_mult: f64,
    pub ssvs_slab_mult: f64,
    /// Floor on the preliminary-run variance estimates.
    pub ssvs_variance_floor: f64,
    /// Prior variance used in place of SSVS during the preliminary run.
    pub prelim_coef_var: f64,
    /// Prior variance of the entries of `B̄` and `B̄f`.
    pub coint_space_var: f64,
    /// `α(0) ~ N(a0 1, κ I)`.
    pub init_state_mean: f64,
    pub init_state_var: f64,
    /// Gamma prior on state-noise precisions (diagonal mode) or on the
    /// squared diagonal of `V` (triangular mode).
    pub state_precision_shape: f64,
    pub state_precision_rate: f64,
    /// Spike/slab variances and inclusion probability for the
    /// off-diagonal entries of `V` in triangular mode.
    pub cov_spike_var: f64,
    pub cov_slab_var: f64,
    pub cov_inclusion: f64,
    /// Prior variance of the measurement means around the sample mean.
    pub mean_prior_var: f64,
    /// Initial random-walk step for `F~` proposals.
    pub mh_coef_step: f64,
    /// Degrees of freedom of the Wishart proposal for `T^{-1}`.
    pub mh_wishart_df: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            obs_precision_shape: 0.01,
            obs_precision_rate: 0.01,
            loading_mean_var: 100.0,
            wishart_df_y: 20.0,
            wishart_df_x: 20.0,
            wishart_scale: 1.0,
            gmrf_coef_scale: 0.05,
            ssvs_inclusion_a: 0.5,
            ssvs_inclusion_k: 0.5,
            ssvs_inclusion_phi: 0.5,
            ssvs_spike_mult: 0.1,
            ssvs_slab_mult: 10.0,
            ssvs_variance_floor: 1e-8,
            prelim_coef_var: 100.0,
            coint_space_var: 1.0,
            init_state_mean: 0.0,
            init_state_var: 1e4,
            state_precision_shape: 0.01,
            state_precision_rate: 0.01,
            cov_spike_var: 0.01,
            cov_slab_var: 1.0,
            cov_inclusion: 0.5,
            mean_prior_var: 1e4,
            mh_coef_step: 0.01,
            mh_wishart_df: 50.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self, n_y_vars: usize, n_x_vars: usize) -> Result<()> {
        let positive = [
            self.obs_precision_shape,
            self.obs_precision_rate,
            self.loading_mean_var,
            self.wishart_scale,
            self.gmrf_coef_scale,
            self.ssvs_spike_mult,
            self.ssvs_slab_mult,
            self.ssvs_variance_floor,
            self.prelim_coef_var,
            self.coint_space_var,
            self.init_state_var,
            self.state_precision_shape,
            self.state_precision_rate,
            self.cov_spike_var,
            self.cov_slab_var,
            self.mean_prior_var,
            self.mh_coef_step,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig("prior variances, scales and rates must be positive".into()));
        }
        if self.wishart_df_y <= (n_y_vars as f64 - 1.0) || self.wishart_df_x <= (n_x_vars as f64 - 1.0) {
            return Err(Error::InvalidConfig("Wishart degrees of freedom too small for the block dimension".into()));
        }
        if self.mh_wishart_df <= n_y_vars.max(n_x_vars) as f64 {
            return Err(Error::InvalidConfig("Wishart proposal degrees of freedom too small".into()));
        }
        for p in [self.ssvs_inclusion_a, self.ssvs_inclusion_k, self.ssvs_inclusion_phi, self.cov_inclusion] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig("inclusion probabilities must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// How the state-noise covariances are parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StateNoiseMode {
    /// Diagonal `Σ_ξ`, `Σ_η` with Gamma priors on the precisions.
    #[default]
    Diagonal,
    /// `Σ^{-1} = V V'` with `V` upper triangular and SSVS on the
    /// off-diagonal entries.
    Triangular,
}

/// Dimensions and identification layout shared by every draw of a fit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_sites: usize,
    pub n_y_vars: usize,
    pub n_x_vars: usize,
    pub m: usize,
    pub l: usize,
    /// `p*`.
    pub order: usize,
    pub r_d: usize,
    pub r_f: usize,
    /// Rows of `H_y` forming the anchor block, in factor order. The block
    /// is held at the identity.
    pub anchors_y: Vec<usize>,
    pub anchors_x: Vec<usize>,
    pub state_noise: StateNoiseMode,
}

impl ModelSpec {
    /// Uses the maximal cointegration dimensions `r_d = m-1`, `r_f = l-1`.
    pub fn new(n_sites: usize, n_y_vars: usize, n_x_vars: usize, m: usize, l: usize, order: usize) -> Self {
        ModelSpec {
            n_sites,
            n_y_vars,
            n_x_vars,
            m,
            l,
            order: order.max(1),
            r_d: m.saturating_sub(1),
            r_f: l.saturating_sub(1),
            anchors_y: (0..m).map(|j| j * n_y_vars).collect(),
            anchors_x: (0..l).map(|j| j * n_x_vars).collect(),
            state_noise: StateNoiseMode::Diagonal,
        }
    }

    pub fn n_y(&self) -> usize {
        self.n_sites * self.n_y_vars
    }

    pub fn n_x(&self) -> usize {
        self.n_sites * self.n_x_vars
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.l == 0 {
            return Err(Error::InvalidConfig("m and l must be positive".into()));
        }
        if self.m > self.n_y() || self.l > self.n_x() {
            return Err(Error::InvalidConfig("more factors than series".into()));
        }
        if self.r_d > self.m || self.r_f > self.l {
            return Err(Error::InvalidConfig("cointegration dimension exceeds factor count".into()));
        }
        check_anchors(&self.anchors_y, self.m, self.n_y(), "Y")?;
        check_anchors(&self.anchors_x, self.l, self.n_x(), "X")?;
        Ok(())
    }

    /// Number of SSVS-governed coefficients `(ā, k, φ)`.
    pub fn ssvs_sizes(&self) -> (usize, usize, usize) {
        let (m, l, p) = (self.m, self.l, self.order);
        (m * self.r_d + m * self.r_f + l * self.r_f, m * (m + l) * (p - 1), l * l * (p - 1))
    }

    /// Fixed entries `(row, value)` of loading column `col`: the anchor
    /// block is the identity.
    pub fn fixed_loadings(anchors: &[usize], col: usize) -> Vec<(usize, f64)> {
        anchors.iter().enumerate().map(|(k, &row)| (row, if k == col { 1.0 } else { 0.0 })).collect()
    }
}

fn check_anchors(anchors: &[usize], k: usize, n: usize, what: &str) -> Result<()> {
    if anchors.len() != k {
        return Err(Error::InvalidConfig(format!("{what} needs {k} anchor rows, got {}", anchors.len())));
    }
    let mut seen = anchors.to_vec();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != k || anchors.iter().any(|&a| a >= n) {
        return Err(Error::InvalidConfig(format!("{what} anchors must be distinct rows below {n}")));
    }
    Ok(())
}

/// Spike-and-slab indicators and variances for the ECM coefficients.
///
/// `rho` covers `vec(Ā)`, `vec(Ā2)` and `vec(Āf)` in that order; `delta`
/// covers `vec(K_1), …`; `delta_phi` covers `vec(Φ~2_1), …`. All vecs are
/// column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsvsState {
    pub rho: Vec<bool>,
    pub delta: Vec<bool>,
    pub delta_phi: Vec<bool>,
    pub v0: Vec<f64>,
    pub v1: Vec<f64>,
    pub tau0: Vec<f64>,
    pub tau1: Vec<f64>,
    pub kappa0: Vec<f64>,
    pub kappa1: Vec<f64>,
    /// Indicators on the off-diagonal entries of `V_ξ`, `V_η` (triangular
    /// mode only).
    pub omega: Vec<bool>,
}

impl SsvsState {
    /// Equal spike and slab variances: a plain Gaussian prior.
    pub fn flat(spec: &ModelSpec, var: f64) -> Self {
        let (na, nk, np) = spec.ssvs_sizes();
        SsvsState {
            rho: vec![true; na],
            delta: vec![true; nk],
            delta_phi: vec![true; np],
            v0: vec![var; na],
            v1: vec![var; na],
            tau0: vec![var; nk],
            tau1: vec![var; nk],
            kappa0: vec![var; np],
            kappa1: vec![var; np],
            omega: vec![true; tri_count(spec.m) + tri_count(spec.l)],
        }
    }

    /// Scales `0.1 σ̂²` and `10 σ̂²` from preliminary variance estimates.
    pub fn from_variances(spec: &ModelSpec, prior: &PriorConfig, var_a: &[f64], var_k: &[f64], var_phi: &[f64]) -> Result<Self> {
        let (na, nk, np) = spec.ssvs_sizes();
        if var_a.len() != na || var_k.len() != nk || var_phi.len() != np {
            return Err(dim_err("variance estimates do not match the SSVS layout"));
        }
        let floor = |v: &f64| if v.is_finite() { v.max(prior.ssvs_variance_floor) } else { prior.ssvs_variance_floor };
        let scale = |vals: &[f64], mult: f64| vals.iter().map(|v| mult * floor(v)).collect::<Vec<_>>();
        let mut s = SsvsState::flat(spec, 1.0);
        s.v0 = scale(var_a, prior.ssvs_spike_mult);
        s.v1 = scale(var_a, prior.ssvs_slab_mult);
        s.tau0 = scale(var_k, prior.ssvs_spike_mult);
        s.tau1 = scale(var_k, prior.ssvs_slab_mult);
        s.kappa0 = scale(var_phi, prior.ssvs_spike_mult);
        s.kappa1 = scale(var_phi, prior.ssvs_slab_mult);
        Ok(s)
    }

    pub fn var_a(&self, i: usize) -> f64 {
        if self.rho[i] {
            self.v1[i]
        } else {
            self.v0[i]
        }
    }

    pub fn var_k(&self, i: usize) -> f64 {
        if self.delta[i] {
            self.tau1[i]
        } else {
            self.tau0[i]
        }
    }

    pub fn var_phi(&self, i: usize) -> f64 {
        if self.delta_phi[i] {
            self.kappa1[i]
        } else {
            self.kappa0[i]
        }
    }
}

pub(crate) fn tri_count(k: usize) -> usize {
    k * k.saturating_sub(1) / 2
}

/// Full parameter set of one draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdSemParams {
    pub meas: MeasurementModel,
    pub gmrf_y: Vec<GmrfSpec>,
    pub gmrf_x: Vec<GmrfSpec>,
    pub ecm: EcmBlocks,
    /// `Σ_ξ`.
    pub state_cov_g: DMatrix<f64>,
    /// `Σ_η`.
    pub state_cov_f: DMatrix<f64>,
    pub ssvs: SsvsState,
}

impl SdSemParams {
    pub fn m(&self) -> usize {
        self.meas.m()
    }

    pub fn l(&self) -> usize {
        self.meas.l()
    }

    pub fn order(&self) -> usize {
        self.ecm.order()
    }

    /// VAR coefficients implied by the ECM blocks.
    pub fn dynamics(&self) -> Result<FactorDynamics> {
        let ecm = blocks_to_ecm(&self.ecm)?;
        let phis = ecm_to_var(&ecm)?;
        FactorDynamics::from_var_blocks(&phis, self.m(), self.l(), self.state_cov_g.clone(), self.state_cov_f.clone())
    }

    pub fn state_space(&self) -> Result<StateSpaceForm> {
        assemble_companion(&self.dynamics()?, &self.meas)
    }

    /// Numeric values in the order of [`named_values`](Self::named_values).
    pub fn values(&self) -> Vec<f64> {
        self.named_values().into_iter().map(|(_, v)| v).collect()
    }

    pub fn is_finite(&self) -> bool {
        let m = &self.meas;
        let e = &self.ecm;
        let mats = [&m.hy, &m.hx, &e.a, &e.b1, &e.b2, &e.a2, &e.af, &e.bf, &e.e, &e.ef, &self.state_cov_g, &self.state_cov_f];
        let vecs = [&m.obs_var_y, &m.obs_var_x, &m.mean_y, &m.mean_x];
        mats.iter().all(|x| x.iter().all(|v| v.is_finite()))
            && vecs.iter().all(|x| x.iter().all(|v| v.is_finite()))
            && e.k.iter().chain(e.phi2.iter()).all(|x| x.iter().all(|v| v.is_finite()))
            && self.gmrf_y.iter().chain(self.gmrf_x.iter()).all(|g| {
                g.cond_prec.iter().chain(g.ftilde.iter()).chain(g.mean_coef.iter()).all(|v| v.is_finite())
            })
    }

    /// Flat `(name, value)` listing used for draw files.
    pub fn named_values(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        push_mat(&mut out, "hy", &self.meas.hy);
        push_mat(&mut out, "hx", &self.meas.hx);
        push_vec(&mut out, "sigma2_y", &self.meas.obs_var_y);
        push_vec(&mut out, "sigma2_x", &self.meas.obs_var_x);
        push_vec(&mut out, "my", &self.meas.mean_y);
        push_vec(&mut out, "mx", &self.meas.mean_x);
        for (side, specs) in [("gmrf_y", &self.gmrf_y), ("gmrf_x", &self.gmrf_x)] {
            for (j, g) in specs.iter().enumerate() {
                push_mat(&mut out, &format!("{side}.{j}.tinv"), &g.cond_prec);
                push_mat(&mut out, &format!("{side}.{j}.ftilde"), &g.ftilde);
                push_vec(&mut out, &format!("{side}.{j}.beta"), &g.mean_coef);
            }
        }
        let e = &self.ecm;
        for (name, mat) in [("a", &e.a), ("b1", &e.b1), ("b2", &e.b2), ("a2", &e.a2), ("af", &e.af), ("bf", &e.bf), ("e", &e.e), ("ef", &e.ef)] {
            push_mat(&mut out, &format!("ecm.{name}"), mat);
        }
        for (i, k) in e.k.iter().enumerate() {
            push_mat(&mut out, &format!("ecm.k{}", i + 1), k);
        }
        for (i, p) in e.phi2.iter().enumerate() {
            push_mat(&mut out, &format!("ecm.phi2_{}", i + 1), p);
        }
        push_mat(&mut out, "sigma_xi", &self.state_cov_g);
        push_mat(&mut out, "sigma_eta", &self.state_cov_f);
        for (name, flags) in [("rho", &self.ssvs.rho), ("delta", &self.ssvs.delta), ("delta_phi", &self.ssvs.delta_phi), ("omega", &self.ssvs.omega)] {
            for (i, f) in flags.iter().enumerate() {
                out.push((format!("ssvs.{name}.{i}"), if *f { 1.0 } else { 0.0 }));
            }
        }
        out
    }

    /// Inverse of [`named_values`](Self::named_values); values must come in
    /// the same order. Spike/slab variances are taken from `ssvs`.
    pub fn from_values(spec: &ModelSpec, values: &[f64], ssvs: &SsvsState) -> Result<Self> {
        let mut r = Reader { vals: values, pos: 0 };
        let (ny, nx, m, l) = (spec.n_y(), spec.n_x(), spec.m, spec.l);
        let hy = r.mat(ny, m)?;
        let hx = r.mat(nx, l)?;
        let obs_var_y = r.vec(ny)?;
        let obs_var_x = r.vec(nx)?;
        let mean_y = r.vec(ny)?;
        let mean_x = r.vec(nx)?;
        let mut gmrf = Vec::new();
        for (count, k) in [(m, spec.n_y_vars), (l, spec.n_x_vars)] {
            let mut side = Vec::with_capacity(count);
            for _ in 0..count {
                let cond_prec = r.mat(k, k)?;
                let ftilde = r.mat(k, k)?;
                let mean_coef = r.vec(k)?;
                side.push(GmrfSpec { cond_prec, ftilde, mean_design: intercept_design(spec.n_sites, k), mean_coef });
            }
            gmrf.push(side);
        }
        let gmrf_x = gmrf.pop().unwrap_or_default();
        let gmrf_y = gmrf.pop().unwrap_or_default();
        let (rd, rf, lags) = (spec.r_d, spec.r_f, spec.order - 1);
        let a = r.mat(m, rd)?;
        let b1 = r.mat(m, rd)?;
        let b2 = r.mat(l, rd)?;
        let a2 = r.mat(m, rf)?;
        let af = r.mat(l, rf)?;
        let bf = r.mat(l, rf)?;
        let e = r.mat(rd, rd)?;
        let ef = r.mat(rf, rf)?;
        let k = (0..lags).map(|_| r.mat(m, m + l)).collect::<Result<Vec<_>>>()?;
        let phi2 = (0..lags).map(|_| r.mat(l, l)).collect::<Result<Vec<_>>>()?;
        let state_cov_g = r.mat(m, m)?;
        let state_cov_f = r.mat(l, l)?;
        let mut s = ssvs.clone();
        s.rho = r.flags(ssvs.rho.len())?;
        s.delta = r.flags(ssvs.delta.len())?;
        s.delta_phi = r.flags(ssvs.delta_phi.len())?;
        s.omega = r.flags(ssvs.omega.len())?;
        if r.pos != values.len() {
            return Err(dim_err(format!("{} trailing values in parameter row", values.len() - r.pos)));
        }
        Ok(SdSemParams {
            meas: MeasurementModel { hy, hx, mean_y, mean_x, obs_var_y, obs_var_x },
            gmrf_y,
            gmrf_x,
            ecm: EcmBlocks { a, b1, b2, a2, af, bf, k, phi2, e, ef },
            state_cov_g,
            state_cov_f,
            ssvs: s,
        })
    }
}

fn push_mat(out: &mut Vec<(String, f64)>, name: &str, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push((format!("{name}.{r}.{c}"), m[(r, c)]));
        }
    }
}

fn push_vec(out: &mut Vec<(String, f64)>, name: &str, v: &DVector<f64>) {
    for (i, x) in v.iter().enumerate() {
        out.push((format!("{name}.{i}"), *x));
    }
}

struct Reader<'a> {
    vals: &'a [f64],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[f64]> {
        if self.pos + n > self.vals.len() {
            return Err(dim_err("parameter row is too short"));
        }
        let s = &self.vals[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn mat(&mut self, r: usize, c: usize) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_row_slice(r, c, self.take(r * c)?))
    }

    fn vec(&mut self, n: usize) -> Result<DVector<f64>> {
        Ok(DVector::from_column_slice(self.take(n)?))
    }

    fn flags(&mut self, n: usize) -> Result<Vec<bool>> {
        Ok(self.take(n)?.iter().map(|v| *v != 0.0).collect())
    }
}
