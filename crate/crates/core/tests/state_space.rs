mod common;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_system, DenseJoint};
use sdsem_core::state_space::{assemble_companion, ffbs_draw, kalman_filter, kalman_smoother, FactorDynamics, InitialState, MeasurementModel, StateSpaceForm};

fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

fn vec_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).abs().max()
}

#[test]
fn filter_and_smoother_match_dense_conditioning() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..20 {
        let t_len = rng.random_range(1..=5);
        let (ss, init, mut data) = random_system(&mut rng, t_len);
        if rng.random_bool(0.3) {
            data[(0, 0)] = f64::NAN;
        }
        let oracle = DenseJoint::new(&ss, &init, t_len);
        let filt = kalman_filter(&ss, &data, &init).unwrap();
        let smooth = kalman_smoother(&ss, &data, &init).unwrap();
        for t in 0..=t_len {
            let (fm, fc) = oracle.state_given(t, t, &data);
            assert!(vec_diff(&filt.filtered_means[t], &fm) < 1e-8);
            assert!(max_diff(&filt.filtered_covs[t], &fc) < 1e-8);
            let (sm, sc) = oracle.state_given(t, t_len, &data);
            assert!(vec_diff(&smooth.means[t], &sm) < 1e-8);
            assert!(max_diff(&smooth.covs[t], &sc) < 1e-8);
        }
        assert!((filt.log_likelihood - oracle.log_density(&data)).abs() < 1e-6);
    }
}

fn fixed_system() -> (StateSpaceForm, InitialState, DMatrix<f64>) {
    let dynamics = FactorDynamics {
        c: vec![DMatrix::from_element(1, 1, 0.6), DMatrix::from_element(1, 1, -0.2)],
        d: vec![DMatrix::from_element(1, 1, 0.3)],
        r: vec![DMatrix::from_element(1, 1, 0.8)],
        state_cov_g: DMatrix::from_element(1, 1, 0.5),
        state_cov_f: DMatrix::from_element(1, 1, 0.4),
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

#[test]
fn ffbs_moments_match_smoother() {
    let (ss, init, data) = fixed_system();
    let smooth = kalman_smoother(&ss, &data, &init).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let n = 50_000;
    let dim = ss.state_dim();
    let t1 = data.nrows() + 1;
    let mut sum = DMatrix::zeros(t1, dim);
    let mut sq = DMatrix::zeros(t1, dim);
    for _ in 0..n {
        let path = ffbs_draw(&ss, &data, &init, &mut rng).unwrap();
        sum += &path.states;
        sq += path.states.component_mul(&path.states);
    }
    for t in 0..t1 {
        for j in 0..dim {
            let var = smooth.covs[t][(j, j)];
            if var < 1e-10 {
                continue;
            }
            let mean = sum[(t, j)] / n as f64;
            let emp_var = sq[(t, j)] / n as f64 - mean * mean;
            let se = (var / n as f64).sqrt();
            assert!((mean - smooth.means[t][j]).abs() < 4.0 * se, "t={t} j={j}");
            assert!((emp_var - var).abs() / var < 0.10, "t={t} j={j}");
        }
    }
}

#[test]
fn companion_layout_for_two_lags() {
    let dynamics = FactorDynamics {
        c: vec![DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 0.1)],
        d: vec![DMatrix::from_element(1, 1, 0.2)],
        r: vec![DMatrix::from_element(1, 1, 0.3), DMatrix::from_element(1, 1, 0.05)],
        state_cov_g: DMatrix::identity(1, 1),
        state_cov_f: DMatrix::identity(1, 1),
    };
    let meas = MeasurementModel {
        hy: DMatrix::identity(1, 1),
        hx: DMatrix::identity(1, 1),
        mean_y: DVector::zeros(1),
        mean_x: DVector::zeros(1),
        obs_var_y: DVector::from_element(1, 1.0),
        obs_var_x: DVector::from_element(1, 1.0),
    };
    let ss = assemble_companion(&dynamics, &meas).unwrap();
    let want = DMatrix::from_row_slice(4, 4, &[0.5, 0.2, 0.1, 0.0, 0.0, 0.3, 0.0, 0.05, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    assert_eq!(ss.transition, want);
}
