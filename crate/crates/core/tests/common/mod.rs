//! Reference implementations that avoid the library's Cholesky path:
//! explicit Gauss-Jordan inversion and elimination/permutation determinants.

#![allow(dead_code)]

use cascal::kernels::{Hyperparameters, PriorMean};
use nalgebra::DMatrix;
use rand::Rng;

pub fn gauss_jordan_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = DMatrix::<f64>::identity(n, n);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
            .unwrap();
        assert!(m[(piv, col)].abs() > 0.0, "singular matrix in oracle");
        m.swap_rows(col, piv);
        inv.swap_rows(col, piv);
        let p = m[(col, col)];
        for j in 0..n {
            m[(col, j)] /= p;
            inv[(col, j)] /= p;
        }
        for i in 0..n {
            if i != col {
                let f = m[(i, col)];
                if f != 0.0 {
                    for j in 0..n {
                        m[(i, j)] -= f * m[(col, j)];
                        inv[(i, j)] -= f * inv[(col, j)];
                    }
                }
            }
        }
    }
    inv
}

/// Determinant by the Leibniz permutation sum. Only for tiny matrices.
pub fn leibniz_det(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    permute(&mut perm, 0, a, &mut total);
    total
}

fn permute(p: &mut Vec<usize>, k: usize, a: &DMatrix<f64>, total: &mut f64) {
    let n = p.len();
    if k == n {
        let mut inversions = 0;
        for i in 0..n {
            for j in i + 1..n {
                if p[i] > p[j] {
                    inversions += 1;
                }
            }
        }
        let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
        *total += sign * (0..n).map(|i| a[(i, p[i])]).product::<f64>();
        return;
    }
    for i in k..n {
        p.swap(k, i);
        permute(p, k + 1, a, total);
        p.swap(k, i);
    }
}

/// log|det A| by Gaussian elimination with partial pivoting.
pub fn elimination_log_abs_det(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut m = a.clone();
    let mut acc = 0.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
            .unwrap();
        m.swap_rows(col, piv);
        let p = m[(col, col)];
        acc += p.abs().ln();
        for i in col + 1..n {
            let f = m[(i, col)] / p;
            for j in col..n {
                m[(i, j)] -= f * m[(col, j)];
            }
        }
    }
    acc
}

pub fn se(a: f64, b: f64, hp: &Hyperparameters) -> f64 {
    let d = a - b;
    hp.signal_variance * (-d * d / (2.0 * hp.length_scale * hp.length_scale)).exp()
}

pub fn gram(a: &[f64], b: &[f64], hp: &Hyperparameters) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| se(a[i], b[j], hp))
}

/// Posterior mean, covariance and evidence from explicit inverses.
pub struct OracleGp {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub lml: f64,
}

pub fn oracle_gp(
    x: &[f64],
    t: &[f64],
    sigma: &DMatrix<f64>,
    hp: &Hyperparameters,
    mean: &PriorMean,
    ystar: &[f64],
) -> OracleGp {
    let n = x.len();
    let kt = gram(x, x, hp) + sigma + DMatrix::<f64>::identity(n, n) * hp.noise_variance;
    let kinv = gauss_jordan_inverse(&kt);
    let r =
        nalgebra::DVector::from_iterator(n, x.iter().zip(t).map(|(&xi, &ti)| ti - mean.eval(xi)));
    let ks = gram(ystar, x, hp);
    let w = &kinv * &r;
    let m = &ks * &w;
    let mean_out = ystar
        .iter()
        .zip(m.iter())
        .map(|(&y, v)| mean.eval(y) + v)
        .collect();
    let cov = gram(ystar, ystar, hp) - &ks * &kinv * ks.transpose();
    let lml = -0.5 * r.dot(&w)
        - 0.5 * elimination_log_abs_det(&kt)
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    OracleGp {
        mean: mean_out,
        cov,
        lml,
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// `‖a − b‖_max ≤ tol · max(‖b‖_max, floor)`.
pub fn rel_close_mat(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64, floor: f64) -> bool {
    max_abs(&(a - b)) <= tol * max_abs(b).max(floor)
}

pub fn rel_close_vec(a: &[f64], b: &[f64], tol: f64, floor: f64) -> bool {
    let scale = b.iter().fold(floor, |s, v| s.max(v.abs()));
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Random SPD matrix `B Bᵀ + shift·I`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, shift: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(n, n) * shift
}

/// A random small GP regression problem with a structured target covariance.
pub struct Problem {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub sigma: DMatrix<f64>,
    pub hp: Hyperparameters,
    pub mean: PriorMean,
    pub ystar: Vec<f64>,
}

pub fn random_problem<R: Rng>(rng: &mut R, n: usize) -> Problem {
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let t: Vec<f64> = x.iter().map(|&v| v + rng.gen_range(-0.1..0.1)).collect();
    let sv = rng.gen_range(0.1..2.0);
    let hp =
        Hyperparameters::new(rng.gen_range(0.05..1.0), sv, sv * rng.gen_range(1e-3..1e-1)).unwrap();
    let sigma = random_spd(rng, n, 0.0) * (sv * rng.gen_range(0.0..0.05));
    let mean = match rng.gen_range(0..3) {
        0 => PriorMean::Identity,
        1 => PriorMean::Zero,
        _ => PriorMean::Affine {
            slope: rng.gen_range(0.5..1.5),
            intercept: rng.gen_range(-0.1..0.1),
        },
    };
    let ystar: Vec<f64> = (0..7).map(|_| rng.gen_range(-0.2..1.2)).collect();
    Problem {
        x,
        t,
        sigma,
        hp,
        mean,
        ystar,
    }
}
