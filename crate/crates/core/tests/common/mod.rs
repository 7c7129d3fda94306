//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use sdsem_core::state_space::{FactorDynamics, InitialState, StateSpaceForm};

pub fn normal_matrix<R: Rng>(r: usize, c: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn rand_spd<R: Rng>(k: usize, rng: &mut R) -> DMatrix<f64> {
    let a = normal_matrix(k, k, 1.0, rng);
    &a * a.transpose() / k as f64 + DMatrix::identity(k, k) * 0.5
}

/// A random companion-form system with state dimension ≤ 4 and at most 4
/// series, plus data simulated from it (some cells may be missing).
pub fn random_system<R: Rng>(rng: &mut R, t_len: usize) -> (StateSpaceForm, InitialState, DMatrix<f64>) {
    let (m, l, order) = match rng.random_range(0..4) {
        0 => (1, 0, rng.random_range(1..=4)),
        1 => (1, 1, rng.random_range(1..=2)),
        2 => (2, 1, 1),
        _ => (2, 2, 1),
    };
    let k = m + l;
    let dim = k * order;
    let n = rng.random_range(1..=4);
    let mut transition = DMatrix::zeros(dim, dim);
    let top = normal_matrix(k, dim, 0.5 / order as f64, rng);
    transition.rows_mut(0, k).copy_from(&top);
    for i in 1..order {
        transition.view_mut((i * k, (i - 1) * k), (k, k)).fill_with_identity();
    }
    let mut input = DMatrix::zeros(dim, k);
    input.view_mut((0, 0), (k, k)).fill_with_identity();
    let mut meas = DMatrix::zeros(n, dim);
    meas.columns_mut(0, k).copy_from(&normal_matrix(n, k, 1.0, rng));
    let ss = StateSpaceForm {
        m,
        l,
        order,
        transition,
        input,
        meas,
        state_noise_cov: rand_spd(k, rng),
        obs_noise_var: DVector::from_fn(n, |_, _| rng.random_range(0.2..1.5)),
        obs_offset: DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)),
    };
    let init = InitialState { mean: DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal)), cov: rand_spd(dim, rng) };
    let data = normal_matrix(t_len, n, 1.5, rng);
    (ss, init, data)
}

/// Joint Gaussian of `(α(0..=T), z(1..=T))` written out densely.
pub struct DenseJoint {
    pub dim: usize,
    pub n: usize,
    pub t_len: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl DenseJoint {
    pub fn new(ss: &StateSpaceForm, init: &InitialState, t_len: usize) -> Self {
        let dim = ss.transition.nrows();
        let n = ss.meas.nrows();
        let na = dim * (t_len + 1);
        let total = na + n * t_len;
        let q = &ss.input * &ss.state_noise_cov * ss.input.transpose();
        // marginal means and variances of α(t)
        let mut means = vec![init.mean.clone()];
        let mut vars = vec![init.cov.clone()];
        for t in 1..=t_len {
            means.push(&ss.transition * &means[t - 1]);
            vars.push(&ss.transition * &vars[t - 1] * ss.transition.transpose() + &q);
        }
        let phi_pow = |k: usize| {
            let mut p = DMatrix::identity(dim, dim);
            for _ in 0..k {
                p = &ss.transition * p;
            }
            p
        };
        // Cov(α(t), α(s)) = Φ^{t-s} V_s for t ≥ s
        let cross = |t: usize, s: usize| -> DMatrix<f64> {
            if t >= s {
                phi_pow(t - s) * &vars[s]
            } else {
                (phi_pow(s - t) * &vars[t]).transpose()
            }
        };
        let mut mean = DVector::zeros(total);
        let mut cov = DMatrix::zeros(total, total);
        let h = &ss.meas;
        for t in 0..=t_len {
            mean.rows_mut(t * dim, dim).copy_from(&means[t]);
            for s in 0..=t_len {
                cov.view_mut((t * dim, s * dim), (dim, dim)).copy_from(&cross(t, s));
            }
        }
        for t in 1..=t_len {
            let zo = na + (t - 1) * n;
            mean.rows_mut(zo, n).copy_from(&(&ss.obs_offset + h * &means[t]));
            for s in 0..=t_len {
                let c = h * cross(t, s);
                cov.view_mut((zo, s * dim), (n, dim)).copy_from(&c);
                cov.view_mut((s * dim, zo), (dim, n)).copy_from(&c.transpose());
            }
            for s in 1..=t_len {
                let zs = na + (s - 1) * n;
                let mut c = h * cross(t, s) * h.transpose();
                if s == t {
                    for i in 0..n {
                        c[(i, i)] += ss.obs_noise_var[i];
                    }
                }
                cov.view_mut((zo, zs), (n, n)).copy_from(&c);
            }
        }
        DenseJoint { dim, n, t_len, mean, cov }
    }

    fn obs_index(&self, upto: usize, data: &DMatrix<f64>) -> (Vec<usize>, Vec<f64>) {
        let na = self.dim * (self.t_len + 1);
        let mut idx = Vec::new();
        let mut vals = Vec::new();
        for t in 1..=upto {
            for i in 0..self.n {
                let z = data[(t - 1, i)];
                if !z.is_nan() {
                    idx.push(na + (t - 1) * self.n + i);
                    vals.push(z);
                }
            }
        }
        (idx, vals)
    }

    /// Moments of `α(t)` given `z(1..=upto)`.
    pub fn state_given(&self, t: usize, upto: usize, data: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let a: Vec<usize> = (t * self.dim..(t + 1) * self.dim).collect();
        let (o, vals) = self.obs_index(upto, data);
        let sub = |r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |i, j| self.cov[(r[i], c[j])]);
        let saa = sub(&a, &a);
        let ma = DVector::from_fn(a.len(), |i, _| self.mean[a[i]]);
        if o.is_empty() {
            return (ma, saa);
        }
        let sao = sub(&a, &o);
        let soo = sub(&o, &o);
        let resid = DVector::from_fn(o.len(), |i, _| vals[i] - self.mean[o[i]]);
        let soo_inv = soo.clone().try_inverse().expect("observation covariance invertible");
        (ma + &sao * &soo_inv * resid, saa - &sao * soo_inv * sao.transpose())
    }

    /// Gaussian log-density of all observed cells.
    pub fn log_density(&self, data: &DMatrix<f64>) -> f64 {
        let (o, vals) = self.obs_index(self.t_len, data);
        let soo = DMatrix::from_fn(o.len(), o.len(), |i, j| self.cov[(o[i], o[j])]);
        let r = DVector::from_fn(o.len(), |i, _| vals[i] - self.mean[o[i]]);
        let chol = soo.cholesky().expect("SPD");
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let quad = r.dot(&chol.solve(&r));
        -0.5 * (o.len() as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
    }
}

/// Response of `y(k) = H_y g(k)` to a one-off change `Δx` in `X` at time 0,
/// found by running the `g`-recursion on baseline and shocked paths from
/// the same random history. `f` is treated as given: only its time-0
/// value moves, by `H_x† Δx`.
pub fn perturbation_multipliers<R: Rng>(
    dynamics: &FactorDynamics,
    hy: &DMatrix<f64>,
    hx_pinv: &DMatrix<f64>,
    horizon: usize,
    rng: &mut R,
) -> Vec<DMatrix<f64>> {
    let (m, l) = (dynamics.m(), dynamics.l());
    let nx = hx_pinv.ncols();
    let p = dynamics.c.len().max(dynamics.d.len()).max(1);
    let hist = p + horizon + 1;
    let base_g0: Vec<DVector<f64>> = (0..p).map(|_| DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal))).collect();
    let base_f: Vec<DVector<f64>> = (0..hist).map(|_| DVector::from_fn(l, |_, _| rng.sample::<f64, _>(StandardNormal))).collect();
    let run = |f: &[DVector<f64>]| -> Vec<DVector<f64>> {
        // g index p+k is time k; earlier entries are pre-sample history
        let mut g = base_g0.clone();
        for k in 0..=horizon {
            let t = p + k;
            let mut next = DVector::zeros(m);
            for (i, c) in dynamics.c.iter().enumerate() {
                next += c * &g[t - 1 - i];
            }
            for (j, d) in dynamics.d.iter().enumerate() {
                next += d * &f[t - 1 - j];
            }
            g.push(next);
        }
        g
    };
    let g0 = run(&base_f);
    let mut out = vec![DMatrix::zeros(hy.nrows(), nx); horizon + 1];
    for j in 0..nx {
        let mut f = base_f.clone();
        f[p] += hx_pinv.column(j);
        let g1 = run(&f);
        for k in 0..=horizon {
            let dy = hy * (&g1[p + k] - &g0[p + k]);
            out[k].set_column(j, &dy);
        }
    }
    out
}
