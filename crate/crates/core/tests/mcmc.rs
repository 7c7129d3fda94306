mod common;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sdsem_core::gmrf::{build_joint_precision, sample_gmrf, AdjacencyMatrix, GmrfSpec};
use sdsem_core::mcmc::{
    chain_rng, initial_state, preliminary_run, run_chain, run_chains, sample_gmrf_hypers, sample_side_loadings, ChainConfig, ModelSpec, PriorConfig,
    SsvsState, SweepData,
};
use sdsem_core::synthetic::{desk_truth, simulate_panel};

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

#[test]
fn gmrf_hyperparameters_recover_known_field() {
    let (rows, cols) = (12, 12);
    let w = AdjacencyMatrix::grid(rows, cols).unwrap();
    let n = w.n_sites();
    let truth_f = -0.2;
    let truth = GmrfSpec::intercept_only(n, &scalar(0.5), scalar(truth_f)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let field = sample_gmrf(&build_joint_precision(&w, &truth).unwrap(), &mut rng).unwrap();

    let t_len = 20;
    let mut spec = ModelSpec::new(n, 1, 1, 1, 1, 1);
    spec.anchors_y = vec![0];
    spec.anchors_x = vec![0];
    let y = DMatrix::from_fn(t_len, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let prior = PriorConfig { gmrf_coef_scale: 10.0, wishart_df_y: 3.0, ..Default::default() };
    let data = SweepData { y: &y, x: &y, adjacency: &w, spec: &spec, prior: &prior };
    let mut state = initial_state(&data, &SsvsState::flat(&spec, 1.0), 0.0, &mut rng).unwrap();
    state.params.meas.hy.set_column(0, &field);
    state.params.gmrf_y[0] = truth.clone();

    let (burn, keep) = (2_000, 20_000);
    let mut draws = Vec::with_capacity(keep);
    for it in 0..burn + keep {
        let adapt = it < burn && (it + 1) % 50 == 0;
        sample_gmrf_hypers(&mut state, &data, adapt, &mut rng).unwrap();
        if it >= burn {
            draws.push(state.params.gmrf_y[0].ftilde[(0, 0)]);
        }
    }
    draws.sort_by(f64::total_cmp);
    let lo = draws[(0.025 * keep as f64) as usize];
    let hi = draws[(0.975 * keep as f64) as usize];
    let mean = draws.iter().sum::<f64>() / keep as f64;
    assert!(lo <= truth_f && truth_f <= hi, "[{lo}, {hi}] mean {mean}");
    assert!(mean < 0.0);
}

fn orthogonal_factor(t_len: usize) -> DMatrix<f64> {
    DMatrix::from_fn(t_len, 1, |t, _| if t % 2 == 0 { 1.0 } else { -1.0 } * (1.0 + (t / 2) as f64 * 0.1))
}

#[test]
fn loading_update_limits() {
    let w = AdjacencyMatrix::grid(2, 2).unwrap();
    let t_len = 30;
    let f = orthogonal_factor(t_len);
    let h_true = DVector::from_vec(vec![0.8, -0.3, 1.2, 0.5]);
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let data = DMatrix::from_fn(t_len, 4, |t, i| f[(t, 0)] * h_true[i] + 0.1 * rng.sample::<f64, _>(StandardNormal));
    let mean = DVector::zeros(4);

    // prior-dominated: draw collapses on the prior mean
    let mut g = vec![GmrfSpec::intercept_only(4, &scalar(1e-12), scalar(0.0)).unwrap()];
    g[0].mean_coef = DVector::from_element(1, 0.4);
    let mut h = DMatrix::zeros(4, 1);
    sample_side_loadings(&data, &mean, &DVector::from_element(4, 1.0), &mut h, &f, &mut g, &[], &w, 1.0, &mut rng).unwrap();
    assert!(h.iter().all(|v| (v - 0.4).abs() < 1e-4), "{h}");

    // flat prior, near-noiseless likelihood: draw equals least squares
    let mut g = vec![GmrfSpec::intercept_only(4, &scalar(1e12), scalar(0.0)).unwrap()];
    let mut h = DMatrix::zeros(4, 1);
    sample_side_loadings(&data, &mean, &DVector::from_element(4, 1e-16), &mut h, &f, &mut g, &[], &w, 1.0, &mut rng).unwrap();
    let ff = f.column(0).dot(&f.column(0));
    for i in 0..4 {
        let ols = f.column(0).dot(&data.column(i)) / ff;
        assert!((h[(i, 0)] - ols).abs() < 1e-6);
    }
}

fn small_problem(seed: u64) -> (ModelSpec, DMatrix<f64>, DMatrix<f64>, AdjacencyMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = desk_truth(&mut rng).unwrap();
    let panel = simulate_panel(&truth.params, 60, &mut rng).unwrap();
    (truth.spec.clone(), panel.y, panel.x, truth.adjacency().unwrap())
}

#[test]
fn no_retained_draws_is_not_an_error() {
    let (spec, y, x, w) = small_problem(53);
    let prior = PriorConfig::default();
    let data = SweepData { y: &y, x: &x, adjacency: &w, spec: &spec, prior: &prior };
    let cfg = ChainConfig { iterations: 20, burn_in: 20, thinning: 1, ..ChainConfig::desk() };
    let mut rng = chain_rng(1, 1);
    let draws = run_chain(&data, &cfg, &SsvsState::flat(&spec, 1.0), 0, &mut rng).unwrap();
    assert!(draws.is_empty());
    assert_eq!(draws.meta.n_retained, 0);
}

#[test]
fn identical_seeds_give_identical_chains() {
    let (spec, y, x, w) = small_problem(54);
    let prior = PriorConfig::default();
    let data = SweepData { y: &y, x: &x, adjacency: &w, spec: &spec, prior: &prior };
    let cfg = ChainConfig { iterations: 60, burn_in: 20, thinning: 2, n_chains: 2, prelim_iterations: 30, prelim_burn_in: 10, seed: 77, ..ChainConfig::desk() };
    let (s1, a) = run_chains(&data, &cfg).unwrap();
    let (s2, b) = run_chains(&data, &cfg).unwrap();
    assert_eq!(s1, s2);
    for (ca, cb) in a.iter().zip(&b) {
        assert_eq!(ca.len(), 20);
        assert_eq!(ca.params, cb.params);
        assert_eq!(ca.deviance, cb.deviance);
        for (fa, fb) in ca.factors.iter().zip(&cb.factors) {
            assert_eq!(fa, fb);
        }
    }
    assert_ne!(a[0].params[19], a[1].params[19]);
}

#[test]
fn preliminary_scales_are_positive() {
    let (spec, y, x, w) = small_problem(55);
    let prior = PriorConfig::default();
    let data = SweepData { y: &y, x: &x, adjacency: &w, spec: &spec, prior: &prior };
    let cfg = ChainConfig { prelim_iterations: 40, prelim_burn_in: 10, ..ChainConfig::desk() };
    let s = preliminary_run(&data, &cfg, &mut chain_rng(3, 0)).unwrap();
    for v in [&s.v0, &s.v1, &s.tau0, &s.tau1, &s.kappa0, &s.kappa1] {
        assert!(!v.is_empty() && v.iter().all(|x| *x > 0.0));
    }
}

#[test]
fn unit_variance_estimates_give_tenfold_scales() {
    let spec = ModelSpec::new(9, 1, 1, 2, 2, 2);
    let prior = PriorConfig::default();
    let (na, nk, np) = spec.ssvs_sizes();
    let s = SsvsState::from_variances(&spec, &prior, &vec![1.0; na], &vec![1.0; nk], &vec![1.0; np]).unwrap();
    for v in [&s.v0, &s.tau0, &s.kappa0] {
        assert!(v.iter().all(|x| (x - 0.1).abs() < 1e-12));
    }
    for v in [&s.v1, &s.tau1, &s.kappa1] {
        assert!(v.iter().all(|x| (x - 10.0).abs() < 1e-12));
    }
    let z = SsvsState::from_variances(&spec, &prior, &vec![0.0; na], &vec![0.0; nk], &vec![0.0; np]).unwrap();
    assert!(z.v0.iter().chain(&z.tau0).chain(&z.kappa0).all(|x| *x > 0.0));
}
