//! Chain driver: initial values, the preliminary SSVS run and retained draws.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::{ModelSpec, SdSemParams, SsvsState};
use super::steps::{self, EcmBar, MhTuning, SamplerState, SweepData};
use crate::error::{Error, Result};
use crate::gmrf::GmrfSpec;
use crate::state_space::{ffbs_draw, FactorPath, InitialState, MeasurementModel, StatePath};
use crate::RandomSource;

/// Iteration counts and seeding for one or more chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    pub n_chains: usize,
    /// Length of the SSVS calibration run.
    pub prelim_iterations: usize,
    pub prelim_burn_in: usize,
    /// Spread of the starting loadings around the principal-component fit.
    pub init_jitter: f64,
    /// Iterations between step-size adaptations during burn-in.
    pub adapt_interval: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 250_000,
            burn_in: 100_000,
            thinning: 10,
            seed: 1,
            n_chains: 4,
            prelim_iterations: 2_000,
            prelim_burn_in: 1_000,
            init_jitter: 0.3,
            adapt_interval: 50,
        }
    }
}

impl ChainConfig {
    /// Small run used for tests and the desk preset.
    pub fn desk() -> Self {
        ChainConfig { iterations: 5_000, burn_in: 2_000, thinning: 5, prelim_iterations: 1_000, prelim_burn_in: 500, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thinning == 0 {
            return Err(Error::InvalidConfig("thinning must be at least 1".into()));
        }
        if self.burn_in > self.iterations || self.prelim_burn_in > self.prelim_iterations {
            return Err(Error::InvalidConfig("burn-in exceeds iterations".into()));
        }
        if self.n_chains == 0 {
            return Err(Error::InvalidConfig("need at least one chain".into()));
        }
        if self.adapt_interval == 0 {
            return Err(Error::InvalidConfig("adapt_interval must be positive".into()));
        }
        Ok(())
    }

    /// Number of draws kept by the burn-in/thinning rule.
    pub fn n_retained(&self) -> usize {
        retained_count(self.iterations, self.burn_in, self.thinning)
    }
}

pub fn retained_count(iterations: usize, burn_in: usize, thinning: usize) -> usize {
    iterations.saturating_sub(burn_in) / thinning.max(1)
}

fn is_retained(it: usize, burn_in: usize, thinning: usize) -> bool {
    it >= burn_in && (it + 1 - burn_in) % thinning == 0
}

/// Generator for chain `chain_id` (stream 0 is the preliminary run).
pub fn chain_rng(seed: u64, stream: u64) -> RandomSource {
    let mut rng = RandomSource::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub chain_id: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    pub n_retained: usize,
    /// Per loading column, Y columns first.
    pub coef_acceptance: Vec<f64>,
    pub prec_acceptance: Vec<f64>,
    pub final_step: Vec<f64>,
}

/// Retained output of one chain.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub params: Vec<SdSemParams>,
    pub factors: Vec<FactorPath>,
    pub deviance: Vec<f64>,
    pub meta: ChainMeta,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Trace of the `idx`-th entry of [`SdSemParams::named_values`].
    pub fn trace(&self, idx: usize) -> Vec<f64> {
        self.params.iter().map(|p| p.values()[idx]).collect()
    }
}

/// Starting values: principal components rotated onto the anchor
/// constraints, then perturbed per chain.
pub fn initial_state<R: Rng + ?Sized>(data: &SweepData, ssvs: &SsvsState, jitter: f64, rng: &mut R) -> Result<SamplerState> {
    let spec = data.spec;
    let prior = data.prior;
    let (g, hy, mean_y, var_y) = pca_side(data.y, spec.m, &spec.anchors_y, jitter, rng);
    let (f, hx, mean_x, var_x) = pca_side(data.x, spec.l, &spec.anchors_x, jitter, rng);
    let meas = MeasurementModel { hy, hx, mean_y, mean_x, obs_var_y: var_y, obs_var_x: var_x };

    let gmrf_side = |h: &DMatrix<f64>, k: usize| -> Result<Vec<GmrfSpec>> {
        (0..h.ncols())
            .map(|j| {
                let mut s = GmrfSpec::intercept_only(spec.n_sites, &DMatrix::identity(k, k), DMatrix::zeros(k, k))?;
                s.mean_coef = DVector::from_fn(k, |v, _| (0..spec.n_sites).map(|i| h[(i * k + v, j)]).sum::<f64>() / spec.n_sites as f64);
                Ok(s)
            })
            .collect()
    };
    let gmrf_y = gmrf_side(&meas.hy, spec.n_y_vars)?;
    let gmrf_x = gmrf_side(&meas.hx, spec.n_x_vars)?;

    let mut bars = EcmBar::zeros(spec);
    bars.b = DMatrix::from_fn(bars.b.nrows(), bars.b.ncols(), |_, _| rng.sample(StandardNormal));
    bars.bf = DMatrix::from_fn(bars.bf.nrows(), bars.bf.ncols(), |_, _| rng.sample(StandardNormal));

    let t_len = data.n_periods();
    let k = spec.m + spec.l;
    let mut d = DMatrix::zeros(t_len, k);
    d.columns_mut(0, spec.m).copy_from(&g);
    d.columns_mut(spec.m, spec.l).copy_from(&f);
    let diff_var = |cols: std::ops::Range<usize>| {
        let n = cols.len();
        DMatrix::from_fn(n, n, |a, b| {
            if a != b || t_len < 2 {
                return if a == b { 1.0 } else { 0.0 };
            }
            let j = cols.start + a;
            let diffs: Vec<f64> = (1..t_len).map(|t| d[(t, j)] - d[(t - 1, j)]).collect();
            let mu = diffs.iter().sum::<f64>() / diffs.len() as f64;
            (diffs.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / diffs.len() as f64).max(1e-4)
        })
    };
    let state_cov_g = diff_var(0..spec.m);
    let state_cov_f = diff_var(spec.m..k);

    let p = spec.order;
    let states = DMatrix::from_fn(t_len + 1, k * p, |t, c| {
        let (lag, j) = (c / k, c % k);
        let src = (t as isize - lag as isize).clamp(1, t_len.max(1) as isize) as usize - 1;
        if t_len == 0 {
            0.0
        } else {
            d[(src, j)]
        }
    });
    let params = SdSemParams { meas, gmrf_y, gmrf_x, ecm: bars.to_blocks(), state_cov_g, state_cov_f, ssvs: ssvs.clone() };
    let tuning = vec![MhTuning::new(prior.mh_coef_step); spec.m + spec.l];
    Ok(SamplerState { params, bars, path: StatePath { states, block_dim: k }, tuning })
}

type SideInit = (DMatrix<f64>, DMatrix<f64>, DVector<f64>, DVector<f64>);

fn pca_side<R: Rng + ?Sized>(z: &DMatrix<f64>, k: usize, anchors: &[usize], jitter: f64, rng: &mut R) -> SideInit {
    let (t_len, n) = z.shape();
    let mean = DVector::from_fn(n, |i, _| {
        let obs: Vec<f64> = z.column(i).iter().cloned().filter(|v| !v.is_nan()).collect();
        if obs.is_empty() {
            0.0
        } else {
            obs.iter().sum::<f64>() / obs.len() as f64
        }
    });
    let zc = DMatrix::from_fn(t_len, n, |t, i| if z[(t, i)].is_nan() { 0.0 } else { z[(t, i)] - mean[i] });
    let (mut scores, mut h) = if t_len > 0 && n > 0 {
        let svd = zc.clone().svd(false, true);
        let vt = svd.v_t.expect("requested V");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
        let h = DMatrix::from_fn(n, k, |i, j| order.get(j).map_or(0.0, |&r| vt[(r, i)]));
        (&zc * &h, h)
    } else {
        (DMatrix::zeros(t_len, k), DMatrix::zeros(n, k))
    };
    // rotate so the anchor block is the identity
    let a = DMatrix::from_fn(k, k, |r, c| h[(anchors[r], c)]);
    if let Some(a_inv) = a.clone().try_inverse().filter(|m| m.iter().all(|v| v.is_finite() && v.abs() < 1e8)) {
        h = &h * a_inv;
        scores = &scores * a.transpose();
    }
    for (c, &row) in anchors.iter().enumerate() {
        for j in 0..k {
            h[(row, j)] = if j == c { 1.0 } else { 0.0 };
        }
    }
    let fixed: Vec<Vec<usize>> = (0..k).map(|j| ModelSpec::fixed_loadings(anchors, j).into_iter().map(|(r, _)| r).collect()).collect();
    for j in 0..k {
        for i in 0..n {
            if !fixed[j].contains(&i) {
                h[(i, j)] += jitter * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let resid = &zc - &scores * h.transpose();
    let var = DVector::from_fn(n, |i, _| {
        let v = resid.column(i).iter().map(|r| r * r).sum::<f64>() / t_len.max(1) as f64;
        let scale = if jitter > 0.0 { rng.random_range(0.5..2.0) } else { 1.0 };
        (v * scale).max(1e-4)
    });
    (scores, h, mean, var)
}

/// Runs the sweep `iterations` times from `state`, calling `keep` on each
/// retained iteration with its deviance.
fn run_sweeps<R: Rng + ?Sized>(
    data: &SweepData,
    state: &mut SamplerState,
    iterations: usize,
    burn_in: usize,
    thinning: usize,
    adapt_interval: usize,
    sample_indicators: bool,
    rng: &mut R,
    mut keep: impl FnMut(&SamplerState, f64),
) -> Result<()> {
    let z = data.stacked();
    let prior = data.prior;
    let dim = (data.spec.m + data.spec.l) * data.spec.order;
    let init = InitialState { mean: DVector::from_element(dim, prior.init_state_mean), cov: DMatrix::identity(dim, dim) * prior.init_state_var };
    let diverged = |iteration: usize, e: Error| Error::ChainDiverged { iteration, reason: e.to_string() };
    for it in 0..iterations {
        let ss = state.params.state_space().map_err(|e| diverged(it, e))?;
        state.path = ffbs_draw(&ss, &z, &init, rng).map_err(|e| diverged(it, e))?;
        steps::sample_loadings(state, data, rng).map_err(|e| diverged(it, e))?;
        let adapt = it < burn_in && (it + 1) % adapt_interval == 0;
        steps::sample_gmrf_hypers(state, data, adapt, rng).map_err(|e| diverged(it, e))?;
        steps::sample_obs_precisions(state, data, rng).map_err(|e| diverged(it, e))?;
        steps::sample_ecm_coeffs(state, data, rng).map_err(|e| diverged(it, e))?;
        steps::sample_state_noise(state, data, rng).map_err(|e| diverged(it, e))?;
        if sample_indicators {
            steps::sample_ssvs_indicators(state, prior, rng);
        }
        steps::sample_means(state, data, rng).map_err(|e| diverged(it, e))?;
        if !state.params.is_finite() {
            return Err(Error::ChainDiverged { iteration: it, reason: "non-finite parameter".into() });
        }
        if is_retained(it, burn_in, thinning) {
            let dev = steps::deviance(&state.params.meas, data.y, data.x, &state.factors()).map_err(|e| diverged(it, e))?;
            if !dev.is_finite() {
                return Err(Error::ChainDiverged { iteration: it, reason: "non-finite deviance".into() });
            }
            keep(state, dev);
        }
    }
    Ok(())
}

/// One chain with the given spike/slab calibration.
pub fn run_chain(data: &SweepData, config: &ChainConfig, ssvs: &SsvsState, chain_id: usize, rng: &mut RandomSource) -> Result<PosteriorDraws> {
    config.validate()?;
    data.spec.validate()?;
    let mut state = initial_state(data, ssvs, config.init_jitter, rng)?;
    let mut params = Vec::with_capacity(config.n_retained());
    let mut factors = Vec::with_capacity(config.n_retained());
    let mut deviance = Vec::with_capacity(config.n_retained());
    run_sweeps(data, &mut state, config.iterations, config.burn_in, config.thinning, config.adapt_interval, true, rng, |s, dev| {
        params.push(s.params.clone());
        factors.push(s.factors());
        deviance.push(dev);
    })?;
    let meta = ChainMeta {
        chain_id,
        iterations: config.iterations,
        burn_in: config.burn_in,
        thinning: config.thinning,
        seed: config.seed,
        n_retained: params.len(),
        coef_acceptance: state.tuning.iter().map(|t| t.coef_rate()).collect(),
        prec_acceptance: state.tuning.iter().map(|t| t.prec_rate()).collect(),
        final_step: state.tuning.iter().map(|t| t.step).collect(),
    };
    Ok(PosteriorDraws { params, factors, deviance, meta })
}

/// Short run with a wide Gaussian prior; returns spike/slab variances
/// scaled from the posterior variance of each ECM coefficient.
pub fn preliminary_run(data: &SweepData, config: &ChainConfig, rng: &mut RandomSource) -> Result<SsvsState> {
    config.validate()?;
    let flat = SsvsState::flat(data.spec, data.prior.prelim_coef_var);
    let mut state = initial_state(data, &flat, config.init_jitter, rng)?;
    let (na, nk, np) = data.spec.ssvs_sizes();
    let mut acc = [Welford::new(na), Welford::new(nk), Welford::new(np)];
    run_sweeps(data, &mut state, config.prelim_iterations, config.prelim_burn_in, 1, config.adapt_interval, false, rng, |s, _| {
        let (a, k, p) = s.bars.ssvs_coefs();
        acc[0].push(&a);
        acc[1].push(&k);
        acc[2].push(&p);
    })?;
    SsvsState::from_variances(data.spec, data.prior, &acc[0].variance(), &acc[1].variance(), &acc[2].variance())
}

/// Preliminary run followed by `n_chains` chains in parallel, each on its
/// own stream of the master seed.
pub fn run_chains(data: &SweepData, config: &ChainConfig) -> Result<(SsvsState, Vec<PosteriorDraws>)> {
    config.validate()?;
    let mut prelim_rng = chain_rng(config.seed, 0);
    let ssvs = preliminary_run(data, config, &mut prelim_rng)?;
    let chains = (0..config.n_chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = chain_rng(config.seed, c as u64 + 1);
            run_chain(data, config, &ssvs, c, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ssvs, chains))
}

struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Welford { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        for (i, v) in x.iter().enumerate() {
            let d = v - self.mean[i];
            self.mean[i] += d / self.n as f64;
            self.m2[i] += d * (v - self.mean[i]);
        }
    }

    fn variance(&self) -> Vec<f64> {
        if self.n < 2 {
            return vec![0.0; self.mean.len()];
        }
        self.m2.iter().map(|m| m / (self.n - 1) as f64).collect()
    }
}
