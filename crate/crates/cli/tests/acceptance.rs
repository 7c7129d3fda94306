//! End-to-end acceptance run. Every criterion reports one PASS/FAIL line on
//! stderr; the test fails if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{normal_matrix, perturbation_multipliers, random_system, DenseJoint};
use sdsem_core::ecm::{blocks_to_ecm, ecm_to_var, rank_posterior, var_to_ecm, EcmBlocks};
use sdsem_core::forecast::{
    conditional_factors, forecast_conditional, forecast_metrics, forecast_unconditional, rmse_mae, state_forecast_moments, ForecastOptions,
};
use sdsem_core::gmrf::{build_joint_precision, conditional_correlation, AdjacencyMatrix, GmrfSpec};
use sdsem_core::linalg::{left_pinv, quantile_sorted};
use sdsem_core::mcmc::{gelman_rubin, monitored_parameters, run_chains, ChainConfig, PosteriorDraws, PriorConfig, SweepData};
use sdsem_core::multipliers::{build_jqb, multipliers_from_parts};
use sdsem_core::selection::{grid_search, pmcc_from_replicates, GridInput};
use sdsem_core::state_space::{
    assemble_companion, ffbs_draw, kalman_filter, kalman_smoother, FactorDynamics, InitialState, MeasurementModel, StateSpaceForm,
};
use sdsem_core::synthetic::{desk_truth, simulate_panel, SyntheticPanel, SyntheticTruth};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn report(id: usize, name: &str, out: &Outcome, took: Duration) {
    let tag = if out.pass { "PASS" } else { "FAIL" };
    let line = format!("[{tag}] criterion {id:>2} {name}: {} ({:.1}s)\n", out.detail, took.as_secs_f64());
    // bypasses the test harness capture so the lines always show up
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn max_abs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

fn vmax_abs(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).abs().max()
}

fn truth_and_panel(seed: u64, t_len: usize) -> (SyntheticTruth, SyntheticPanel, AdjacencyMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = desk_truth(&mut rng).unwrap();
    let panel = simulate_panel(&truth.params, t_len, &mut rng).unwrap();
    let adj = truth.adjacency().unwrap();
    (truth, panel, adj)
}

fn fit(truth: &SyntheticTruth, y: &DMatrix<f64>, x: &DMatrix<f64>, adj: &AdjacencyMatrix, cfg: &ChainConfig) -> Vec<PosteriorDraws> {
    let prior = PriorConfig::default();
    let data = SweepData { y, x, adjacency: adj, spec: &truth.spec, prior: &prior };
    run_chains(&data, cfg).unwrap().1
}

fn kalman_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let (mut moment_err, mut ll_err) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let t_len = rand::Rng::random_range(&mut rng, 1..=5);
        let (ss, init, data) = random_system(&mut rng, t_len);
        let oracle = DenseJoint::new(&ss, &init, t_len);
        let filt = kalman_filter(&ss, &data, &init).unwrap();
        let smooth = kalman_smoother(&ss, &data, &init).unwrap();
        for t in 0..=t_len {
            let (fm, fc) = oracle.state_given(t, t, &data);
            let (sm, sc) = oracle.state_given(t, t_len, &data);
            moment_err = moment_err
                .max(vmax_abs(&filt.filtered_means[t], &fm))
                .max(max_abs(&filt.filtered_covs[t], &fc))
                .max(vmax_abs(&smooth.means[t], &sm))
                .max(max_abs(&smooth.covs[t], &sc));
        }
        ll_err = ll_err.max((filt.log_likelihood - oracle.log_density(&data)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        moment_err < 1e-8 && ll_err < 1e-6 && secs < 10.0,
        format!("max moment error {moment_err:.2e}, max log-likelihood error {ll_err:.2e}"),
    )
}

fn ffbs_system() -> (StateSpaceForm, InitialState, DMatrix<f64>) {
    let dynamics = FactorDynamics {
        c: vec![scalar(0.6), scalar(-0.2)],
        d: vec![scalar(0.3)],
        r: vec![scalar(0.8)],
        state_cov_g: scalar(0.5),
        state_cov_f: scalar(0.4),
    };
    let meas = MeasurementModel {
        hy: DMatrix::from_column_slice(2, 1, &[1.0, 0.7]),
        hx: DMatrix::from_column_slice(2, 1, &[1.0, -0.4]),
        mean_y: DVector::from_vec(vec![0.1, 0.0]),
        mean_x: DVector::from_vec(vec![0.0, -0.2]),
        obs_var_y: DVector::from_vec(vec![0.3, 0.5]),
        obs_var_x: DVector::from_vec(vec![0.2, 0.6]),
    };
    let ss = assemble_companion(&dynamics, &meas).unwrap();
    let init = InitialState::diffuse(ss.state_dim(), 1.0);
    let data = DMatrix::from_row_slice(4, 4, &[0.5, 0.2, -0.1, 0.3, 0.9, 0.4, 0.2, 0.1, 0.1, -0.3, 0.6, 0.0, -0.4, 0.2, 0.5, -0.6]);
    (ss, init, data)
}

fn ffbs_moments() -> Outcome {
    let start = Instant::now();
    let (ss, init, data) = ffbs_system();
    let smooth = kalman_smoother(&ss, &data, &init).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let n = 50_000;
    let (t1, dim) = (data.nrows() + 1, ss.state_dim());
    let mut sum = DMatrix::zeros(t1, dim);
    let mut sq = DMatrix::zeros(t1, dim);
    for _ in 0..n {
        let path = ffbs_draw(&ss, &data, &init, &mut rng).unwrap();
        sum += &path.states;
        sq += path.states.component_mul(&path.states);
    }
    let (mut worst_z, mut worst_rel) = (0.0f64, 0.0f64);
    for t in 0..t1 {
        for j in 0..dim {
            let var = smooth.covs[t][(j, j)];
            if var < 1e-10 {
                continue;
            }
            let mean = sum[(t, j)] / n as f64;
            let emp = sq[(t, j)] / n as f64 - mean * mean;
            worst_z = worst_z.max((mean - smooth.means[t][j]).abs() / (var / n as f64).sqrt());
            worst_rel = worst_rel.max((emp - var).abs() / var);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_z < 4.0 && worst_rel < 0.10 && secs < 60.0,
        format!("worst mean deviation {worst_z:.2} SE, worst variance error {:.1}%", 100.0 * worst_rel),
    )
}

fn gmrf_closed_form() -> Outcome {
    let w = AdjacencyMatrix::from_edges(2, &[(0, 1)], false).unwrap();
    let mut err = 0.0f64;
    for (tv, f) in [(1.0, 0.2), (2.0, -0.5), (0.4, 0.9)] {
        let spec = GmrfSpec::intercept_only(2, &scalar(tv), scalar(f)).unwrap();
        let cov = build_joint_precision(&w, &spec).unwrap().precision.try_inverse().unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[1.0, -f, -f, 1.0]) * (tv / (1.0 - f * f));
        err = err.max(max_abs(&cov, &want));
    }
    let w9 = AdjacencyMatrix::grid(3, 3).unwrap();
    let t = DMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 0.8]);
    let spec = GmrfSpec::intercept_only(9, &t, DMatrix::zeros(2, 2)).unwrap();
    let cov = build_joint_precision(&w9, &spec).unwrap().precision.try_inverse().unwrap();
    let block = DMatrix::identity(9, 9).kronecker(&t);
    let block_err = max_abs(&cov, &block);
    let rho = conditional_correlation(&GmrfSpec::intercept_only(2, &scalar(1.0), scalar(-0.2)).unwrap()).unwrap();
    let rho_err = (rho[(0, 1)] - 0.2).abs();
    outcome(
        err < 1e-10 && block_err < 1e-10 && rho_err < 1e-10,
        format!("closed form {err:.1e}, block-diagonal {block_err:.1e}, correlation {rho_err:.1e}"),
    )
}

fn ecm_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let mut trip = 0.0f64;
    let mut lower_left = true;
    for _ in 0..100 {
        let (m, l, p) = (rand::Rng::random_range(&mut rng, 1..=3), rand::Rng::random_range(&mut rng, 1..=3), rand::Rng::random_range(&mut rng, 1..=4));
        let phis: Vec<DMatrix<f64>> = (0..p)
            .map(|_| {
                let mut b = normal_matrix(m + l, m + l, 0.5, &mut rng);
                b.view_mut((m, 0), (l, m)).fill(0.0);
                b
            })
            .collect();
        let back = ecm_to_var(&var_to_ecm(&phis, m).unwrap()).unwrap();
        for (a, b) in phis.iter().zip(&back) {
            trip = trip.max(max_abs(a, b));
        }
        let (rd, rf) = (rand::Rng::random_range(&mut rng, 0..=m), rand::Rng::random_range(&mut rng, 0..=l));
        let lags = rand::Rng::random_range(&mut rng, 0..=2);
        let blocks = EcmBlocks {
            a: normal_matrix(m, rd, 1.0, &mut rng),
            b1: normal_matrix(m, rd, 1.0, &mut rng),
            b2: normal_matrix(l, rd, 1.0, &mut rng),
            a2: normal_matrix(m, rf, 1.0, &mut rng),
            af: normal_matrix(l, rf, 1.0, &mut rng),
            bf: normal_matrix(l, rf, 1.0, &mut rng),
            k: (0..lags).map(|_| normal_matrix(m, m + l, 1.0, &mut rng)).collect(),
            phi2: (0..lags).map(|_| normal_matrix(l, l, 1.0, &mut rng)).collect(),
            e: DMatrix::identity(rd, rd),
            ef: DMatrix::identity(rf, rf),
        };
        let ecm = blocks_to_ecm(&blocks).unwrap();
        lower_left &= ecm.longrun.view((m, 0), (l, m)).iter().all(|v| *v == 0.0);
    }
    let unit = var_to_ecm(&[DMatrix::identity(3, 3)], 2).unwrap();
    let zero_longrun = unit.longrun.iter().all(|v| *v == 0.0);
    outcome(
        trip < 1e-12 && zero_longrun && lower_left,
        format!("round trip {trip:.1e}, Φ=I gives Ã=0: {zero_longrun}, lower-left zero: {lower_left}"),
    )
}

fn multiplier_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    let (mut g0_zero, mut g1_err, mut sim_err) = (true, 0.0f64, 0.0f64);
    for _ in 0..30 {
        let (m, l) = (rand::Rng::random_range(&mut rng, 1..=2), rand::Rng::random_range(&mut rng, 1..=2));
        let (p, q, s) = (rand::Rng::random_range(&mut rng, 1..=3), rand::Rng::random_range(&mut rng, 1..=3), rand::Rng::random_range(&mut rng, 1..=2));
        let dynamics = FactorDynamics {
            c: (0..p).map(|_| normal_matrix(m, m, 0.4 / p as f64, &mut rng)).collect(),
            d: (0..q).map(|_| normal_matrix(m, l, 0.5, &mut rng)).collect(),
            r: (0..s).map(|_| normal_matrix(l, l, 0.4, &mut rng)).collect(),
            state_cov_g: DMatrix::identity(m, m),
            state_cov_f: DMatrix::identity(l, l),
        };
        let (ny, nx) = (rand::Rng::random_range(&mut rng, m..=5), rand::Rng::random_range(&mut rng, l..=5));
        let hy = normal_matrix(ny, m, 1.0, &mut rng);
        let hx = normal_matrix(nx, l, 1.0, &mut rng);
        let pinv = left_pinv(&hx).unwrap();
        let gamma = multipliers_from_parts(&hy, &build_jqb(&dynamics).unwrap(), &pinv, 8).unwrap();
        let oracle = perturbation_multipliers(&dynamics, &hy, &pinv, 8, &mut rng);
        g0_zero &= gamma[0].iter().all(|v| *v == 0.0);
        g1_err = g1_err.max(max_abs(&gamma[1], &(&hy * &dynamics.d[0] * &pinv)));
        for k in 0..=8 {
            sim_err = sim_err.max(max_abs(&gamma[k], &oracle[k]));
        }
    }
    let scalar_dyn = FactorDynamics {
        c: vec![scalar(0.5)],
        d: vec![scalar(0.3)],
        r: vec![scalar(0.4)],
        state_cov_g: scalar(1.0),
        state_cov_f: scalar(1.0),
    };
    let one = scalar(1.0);
    let gamma = multipliers_from_parts(&one, &build_jqb(&scalar_dyn).unwrap(), &one, 10).unwrap();
    let scalar_err = (1..=10).map(|k| (gamma[k][(0, 0)] - 0.3 * 0.5f64.powi(k as i32 - 1)).abs()).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        g0_zero && g1_err < 1e-10 && scalar_err < 1e-10 && sim_err < 1e-8 && secs < 10.0,
        format!("Γ0 zero: {g0_zero}, Γ1 {g1_err:.1e}, scalar {scalar_err:.1e}, perturbation {sim_err:.1e}"),
    )
}

fn parameter_recovery() -> Outcome {
    let (truth, panel, adj) = truth_and_panel(2006, 300);
    let cfg = ChainConfig { seed: 2006, ..ChainConfig::desk() };
    let chains = fit(&truth, &panel.y, &panel.x, &adj, &cfg);

    let dev: Vec<Vec<f64>> = chains.iter().map(|c| c.deviance.clone()).collect();
    let r_dev = gelman_rubin(&dev).unwrap();
    let monitored = monitored_parameters(&chains);
    let mut pick = ChaCha8Rng::seed_from_u64(6);
    let mut r_max = r_dev;
    for i in sample(&mut pick, monitored.len(), 10) {
        let idx = monitored[i].1;
        let traces: Vec<Vec<f64>> = chains.iter().map(|c| c.trace(idx)).collect();
        r_max = r_max.max(gelman_rubin(&traces).unwrap());
    }

    let names = truth.params.named_values();
    let anchors_y = &truth.spec.anchors_y;
    let anchors_x = &truth.spec.anchors_x;
    let (mut covered, mut total) = (0, 0);
    for (idx, (name, tv)) in names.iter().enumerate() {
        let parts: Vec<&str> = name.split('.').collect();
        let anchored = match parts[0] {
            "hy" => anchors_y.contains(&parts[1].parse().unwrap()),
            "hx" => anchors_x.contains(&parts[1].parse().unwrap()),
            _ => continue,
        };
        if anchored {
            continue;
        }
        let mut all: Vec<f64> = chains.iter().flat_map(|c| c.trace(idx)).collect();
        all.sort_by(f64::total_cmp);
        total += 1;
        if quantile_sorted(&all, 0.025) <= *tv && *tv <= quantile_sorted(&all, 0.975) {
            covered += 1;
        }
    }
    let coverage = covered as f64 / total as f64;

    let mut signs = Vec::new();
    for (idx, (name, tv)) in names.iter().enumerate() {
        if name.contains(".ftilde.") {
            let all: Vec<f64> = chains.iter().flat_map(|c| c.trace(idx)).collect();
            let mean = all.iter().sum::<f64>() / all.len() as f64;
            signs.push((mean.signum() == tv.signum(), mean));
        }
    }
    let signs_ok = !signs.is_empty() && signs.iter().all(|s| s.0);
    let means: Vec<String> = signs.iter().map(|s| format!("{:.4}", s.1)).collect();
    outcome(
        r_max < 1.1 && coverage >= 0.85 && signs_ok,
        format!("max R {r_max:.3} (deviance {r_dev:.3}), coverage {covered}/{total}, F̃ means [{}] vs truth -0.3", means.join(", ")),
    )
}

fn reduced_chains(seed: u64) -> ChainConfig {
    ChainConfig {
        seed,
        iterations: 1_500,
        burn_in: 500,
        thinning: 5,
        n_chains: 2,
        prelim_iterations: 400,
        prelim_burn_in: 200,
        ..ChainConfig::desk()
    }
}

fn rank_recovery() -> Outcome {
    let mut hits = 0;
    let mut modes = Vec::new();
    for seed in 0..10u64 {
        let (truth, panel, adj) = truth_and_panel(7000 + seed, 400);
        let chains = fit(&truth, &panel.y, &panel.x, &adj, &reduced_chains(7000 + seed));
        let post = rank_posterior(chains.iter().flat_map(|c| c.params.iter().map(|p| &p.ecm)), 0.05).unwrap();
        let (rf, rd) = (post.mode(0), post.mode(1));
        modes.push(format!("{rf}{rd}"));
        if rf == 1 && rd == 1 {
            hits += 1;
        }
    }
    outcome(hits >= 8, format!("{hits}/10 seeds with modal (r_f, r_d) = (1, 1); modes {}", modes.join(" ")))
}

fn pmcc_selection() -> Outcome {
    let prior = PriorConfig::default();
    let mut wins = 0;
    let mut winners = Vec::new();
    for seed in 0..10u64 {
        let (_, panel, adj) = truth_and_panel(8000 + seed, 300);
        let input = GridInput { y: &panel.y, x: &panel.x, adjacency: &adj, n_y_vars: 1, n_x_vars: 1, order: 2, prior: &prior, regions: None };
        let cfg = ChainConfig { n_chains: 1, ..reduced_chains(8000 + seed) };
        let points = grid_search(&input, &[(1, 1), (2, 2), (4, 4)], &cfg, None).unwrap();
        let best = &points[0];
        winners.push(format!("({},{})", best.m, best.l));
        if best.result.is_ok() && (best.m, best.l) == (2, 2) {
            wins += 1;
        }
    }
    // G + P identity on arbitrary replicates
    let mut rng = ChaCha8Rng::seed_from_u64(1008);
    let y = normal_matrix(6, 5, 1.0, &mut rng);
    let reps: Vec<DMatrix<f64>> = (0..40).map(|_| normal_matrix(6, 5, 2.0, &mut rng)).collect();
    let (g, p, v) = pmcc_from_replicates(&reps, &y, None).unwrap();
    let ident = (v - (g + p)).abs();
    outcome(wins >= 8 && ident < 1e-12, format!("(2,2) ranked first in {wins}/10 seeds; winners {}; |PMCC-(G+P)| {ident:.1e}", winners.join(" ")))
}

fn forecast_contracts() -> Outcome {
    let (mean, var) = state_forecast_moments(&scalar(0.5), &scalar(1.0), &DVector::from_element(1, 1.0), 2);
    let scalar_err = (mean[0] - 0.25).abs().max((var[(0, 0)] - 1.25).abs());

    let mut rng = ChaCha8Rng::seed_from_u64(1009);
    let hx = normal_matrix(9, 2, 1.0, &mut rng);
    let mu = normal_matrix(9, 1, 1.0, &mut rng).column(0).into_owned();
    let f_star = normal_matrix(5, 2, 1.0, &mut rng);
    let x = DMatrix::from_fn(5, 9, |k, i| mu[i] + (hx.row(i) * f_star.row(k).transpose())[(0, 0)]);
    let f_err = max_abs(&conditional_factors(&hx, &mu, &x).unwrap(), &f_star);

    let (rmse, mae) = rmse_mae(&[1.0, -1.0, 3.0, -3.0]);
    let metric_ok = mae == 2.0 && rmse == 5f64.sqrt() && rmse >= mae;

    let horizon = 8;
    let mut better = 0;
    let mut pairs = Vec::new();
    for seed in 0..10u64 {
        let (truth, panel, adj) = truth_and_panel(9000 + seed, 300 + horizon);
        let y_train = panel.y.rows(0, 300).into_owned();
        let x_train = panel.x.rows(0, 300).into_owned();
        let chains = fit(&truth, &y_train, &x_train, &adj, &reduced_chains(9000 + seed));
        let opts = ForecastOptions { horizon, replicates: 1, level: 0.95, deterministic: false };
        let mut frng = ChaCha8Rng::seed_from_u64(9100 + seed);
        let unc = forecast_unconditional(&chains, &opts, &mut frng).unwrap();
        let x_future = panel.x.rows(300, horizon).into_owned();
        let con = forecast_conditional(&chains, &x_future, &opts, &mut frng).unwrap();
        let y_future = panel.y.rows(300, horizon).into_owned();
        let ru = forecast_metrics(&unc, &y_future, false).unwrap().rmse;
        let rc = forecast_metrics(&con, &y_future, false).unwrap().rmse;
        pairs.push(format!("{rc:.3}/{ru:.3}"));
        if rc <= ru {
            better += 1;
        }
    }
    outcome(
        scalar_err < 1e-12 && f_err < 1e-10 && metric_ok && better >= 8,
        format!(
            "scalar moments {scalar_err:.1e}, f* recovery {f_err:.1e}, metric identities {metric_ok}, conditional beats unconditional in {better}/10 (cond/uncond RMSE {})",
            pairs.join(" ")
        ),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sdsem")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("`{}` exited {:?}: {}", args[0], out.status.code(), String::from_utf8_lossy(&out.stderr)))
    }
}

fn pipeline(root: &Path) -> Result<(), String> {
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    std::fs::write(root.join("run.toml"), "seed = 20240\nholdout = 4\nhorizon = 4\nanchors_y = [\"s0\", \"s8\"]\nanchors_x = [\"s0\", \"s8\"]\n")
        .map_err(|e| e.to_string())?;
    let cfg = p("run.toml");
    run_cli(&["simulate", "--config", &cfg, "--out", &p("sim"), "--periods", "304"])?;
    let (data, adj) = (p("sim/panel.csv"), p("sim/adjacency.csv"));
    run_cli(&["fit", "--config", &cfg, "--data", &data, "--adjacency", &adj, "--out", &p("fit")])?;
    run_cli(&["ranks", "--config", &cfg, "--draws", &p("fit"), "--out", &p("ranks.csv")])?;
    run_cli(&["forecast", "--config", &cfg, "--data", &data, "--adjacency", &adj, "--draws", &p("fit"), "--out", &p("forecast.csv")])?;
    run_cli(&["irf", "--config", &cfg, "--draws", &p("fit"), "--out", &p("irf.csv")])?;
    run_cli(&["diagnose", "--config", &cfg, "--draws", &p("fit"), "--out", &p("diagnose.csv")])
}

fn reproducibility() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        if let Err(e) = pipeline(dir.path()) {
            return outcome(false, e);
        }
    }
    let mut files: Vec<String> = vec!["forecast.csv".into(), "irf.csv".into()];
    let mut fit_files: Vec<String> = std::fs::read_dir(a.path().join("fit")).unwrap().map(|e| format!("fit/{}", e.unwrap().file_name().to_string_lossy())).collect();
    fit_files.sort();
    files.extend(fit_files);
    let differing: Vec<&String> = files
        .iter()
        .filter(|f| std::fs::read(a.path().join(f)).ok() != std::fs::read(b.path().join(f)).ok())
        .collect();
    outcome(differing.is_empty(), format!("pipeline exits 0 twice, {} files compared, differing: {:?}", files.len(), differing))
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("Kalman filter and smoother oracle", kalman_oracle),
        ("FFBS distributional check", ffbs_moments),
        ("GMRF closed forms", gmrf_closed_form),
        ("ECM algebra", ecm_algebra),
        ("dynamic multiplier oracle", multiplier_oracle),
        ("synthetic parameter recovery", parameter_recovery),
        ("cointegration rank recovery", rank_recovery),
        ("PMCC selection", pmcc_selection),
        ("forecast contracts", forecast_contracts),
        ("end-to-end reproducibility", reproducibility),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        report(i + 1, name, &out, start.elapsed());
        if !out.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
