//! Squared-exponential covariance and prior means for scalar inputs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of one GP stage. Units: meters for the length scale,
/// meters² for both variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl Hyperparameters {
    pub fn new(length_scale: f64, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        let hp = Hyperparameters {
            length_scale,
            signal_variance,
            noise_variance,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.length_scale > 0.0
            && self.signal_variance > 0.0
            && self.noise_variance >= 0.0
            && self.length_scale.is_finite()
            && self.signal_variance.is_finite()
            && self.noise_variance.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid hyperparameters {self:?}")))
        }
    }

    /// `(log ℓ, log σ_f², log σ_n²)`.
    pub fn to_log(&self) -> [f64; 3] {
        [
            self.length_scale.ln(),
            self.signal_variance.ln(),
            self.noise_variance.ln(),
        ]
    }

    pub fn from_log(p: [f64; 3]) -> Self {
        Hyperparameters {
            length_scale: p[0].exp(),
            signal_variance: p[1].exp(),
            noise_variance: p[2].exp(),
        }
    }
}

/// A stationary covariance function on scalar inputs.
pub trait Kernel {
    fn eval(&self, a: f64, b: f64) -> f64;

    /// Gram matrix with entry `(p, q) = k(ya[p], yb[q])`.
    fn matrix(&self, ya: &[f64], yb: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(ya.len(), yb.len(), |p, q| self.eval(ya[p], yb[q]))
    }

    /// Symmetric Gram matrix of one point set; only the upper triangle is
    /// evaluated.
    fn gram(&self, y: &[f64]) -> DMatrix<f64> {
        let n = y.len();
        let mut k = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let v = self.eval(y[i], y[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}

/// `σ_f² exp(-(a-b)² / (2ℓ²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquaredExponential {
    pub length_scale: f64,
    pub signal_variance: f64,
}

impl From<&Hyperparameters> for SquaredExponential {
    fn from(hp: &Hyperparameters) -> Self {
        SquaredExponential {
            length_scale: hp.length_scale,
            signal_variance: hp.signal_variance,
        }
    }
}

impl Kernel for SquaredExponential {
    #[inline]
    fn eval(&self, a: f64, b: f64) -> f64 {
        let d = (a - b) / self.length_scale;
        self.signal_variance * (-0.5 * d * d).exp()
    }
}

pub fn se_kernel(a: f64, b: f64, hp: &Hyperparameters) -> f64 {
    SquaredExponential::from(hp).eval(a, b)
}

pub fn kernel_matrix(ya: &[f64], yb: &[f64], hp: &Hyperparameters) -> DMatrix<f64> {
    let k = SquaredExponential::from(hp);
    if std::ptr::eq(ya, yb) {
        k.gram(ya)
    } else {
        k.matrix(ya, yb)
    }
}

/// Prior mean of a calibration map. `Identity` encodes "without data, the
/// more accurate sensor reads the same as the less accurate one".
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorMean {
    #[default]
    Identity,
    Zero,
    Affine {
        slope: f64,
        intercept: f64,
    },
}

impl PriorMean {
    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            PriorMean::Identity => y,
            PriorMean::Zero => 0.0,
            PriorMean::Affine { slope, intercept } => slope * y + intercept,
        }
    }
}

pub fn eval_prior_mean(m: &PriorMean, y: &[f64]) -> Vec<f64> {
    y.iter().map(|&v| m.eval(v)).collect()
}
