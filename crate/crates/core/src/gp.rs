//! Exact GP regression with a full observation covariance, and empirical
//! Bayes hyperparameter selection.
//!
//! Observations are modelled as `targets = f(inputs) + e` with
//! `e ~ N(0, target_cov + σ_n² I)`. The posterior caches the Cholesky factor
//! of `K + target_cov + σ_n² I` and the weight vector, so predictions are a
//! kernel evaluation plus a matrix-vector product.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Hyperparameters, Kernel, PriorMean, SquaredExponential};
use crate::numerics::{factor_psd, symmetrize, PsdFactor};
use crate::simplex::{self, SimplexOptions};

/// Upper bound on diagonal jitter, relative to the largest diagonal entry of
/// the matrix being factored.
pub const MAX_RELATIVE_JITTER: f64 = 1e-6;

/// Symmetry tolerance for `target_cov`.
const SYMMETRY_TOL: f64 = 1e-9;

/// Regression data with a full target covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    target_cov: DMatrix<f64>,
}

impl TrainingSet {
    pub fn new(inputs: Vec<f64>, targets: Vec<f64>, target_cov: DMatrix<f64>) -> Result<Self> {
        let n = inputs.len();
        if targets.len() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("{n} targets"),
                got: format!("{}", targets.len()),
            });
        }
        if target_cov.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: format!("{n}x{n} target covariance"),
                got: format!("{}x{}", target_cov.nrows(), target_cov.ncols()),
            });
        }
        if inputs.iter().chain(&targets).any(|v| !v.is_finite())
            || target_cov.iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidData("non-finite training value".into()));
        }
        let scale = target_cov.amax().max(1.0);
        for i in 0..n {
            if target_cov[(i, i)] < -SYMMETRY_TOL * scale {
                return Err(Error::InvalidData(format!(
                    "negative target variance at index {i}"
                )));
            }
            for j in (i + 1)..n {
                if (target_cov[(i, j)] - target_cov[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidData(format!(
                        "target covariance not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(TrainingSet {
            inputs,
            targets,
            target_cov,
        })
    }

    /// Training set with zero target covariance.
    pub fn noiseless(inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        let n = inputs.len();
        Self::new(inputs, targets, DMatrix::zeros(n, n))
    }

    pub fn empty() -> Self {
        TrainingSet {
            inputs: Vec::new(),
            targets: Vec::new(),
            target_cov: DMatrix::zeros(0, 0),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn target_cov(&self) -> &DMatrix<f64> {
        &self.target_cov
    }

    pub fn residuals(&self, mean: &PriorMean) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.inputs
                .iter()
                .zip(&self.targets)
                .map(|(&x, &y)| y - mean.eval(x)),
        )
    }

    /// Same data with `target_cov` replaced.
    pub fn with_target_cov(&self, target_cov: DMatrix<f64>) -> Result<Self> {
        Self::new(self.inputs.clone(), self.targets.clone(), target_cov)
    }
}

/// `K(X,X) + target_cov + σ_n² I`.
pub fn observation_gram(ts: &TrainingSet, hp: &Hyperparameters) -> DMatrix<f64> {
    let mut k = SquaredExponential::from(hp).gram(ts.inputs());
    k += ts.target_cov();
    for i in 0..ts.len() {
        k[(i, i)] += hp.noise_variance;
    }
    k
}

fn factor_gram(gram: &DMatrix<f64>) -> Result<PsdFactor> {
    let max_diag = gram.diagonal().iter().fold(0.0f64, |m, &d| m.max(d.abs()));
    factor_psd(gram, MAX_RELATIVE_JITTER * max_diag.max(f64::MIN_POSITIVE))
}

/// A fitted GP stage.
#[derive(Debug, Clone)]
pub struct GPPosterior {
    hp: Hyperparameters,
    mean: PriorMean,
    data: TrainingSet,
    gram_factor: PsdFactor,
    weights: DVector<f64>,
}

/// Conditions the GP prior `(hp, mean)` on `ts`.
pub fn fit(ts: &TrainingSet, hp: &Hyperparameters, mean: PriorMean) -> Result<GPPosterior> {
    hp.validate()?;
    let gram_factor = factor_gram(&observation_gram(ts, hp))?;
    let weights = gram_factor.solve_vec(&ts.residuals(&mean))?;
    Ok(GPPosterior {
        hp: *hp,
        mean,
        data: ts.clone(),
        gram_factor,
        weights,
    })
}

impl GPPosterior {
    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hp
    }

    pub fn prior_mean(&self) -> PriorMean {
        self.mean
    }

    pub fn training_set(&self) -> &TrainingSet {
        &self.data
    }

    pub fn train_inputs(&self) -> &[f64] {
        self.data.inputs()
    }

    pub fn gram_factor(&self) -> &PsdFactor {
        &self.gram_factor
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    fn kernel(&self) -> SquaredExponential {
        SquaredExponential::from(&self.hp)
    }

    /// `m(Y*) + K(Y*, X) w`.
    pub fn predict_mean(&self, ystar: &[f64]) -> Vec<f64> {
        let k = self.kernel();
        let x = self.data.inputs();
        ystar
            .iter()
            .map(|&y| {
                let s: f64 = x
                    .iter()
                    .zip(self.weights.iter())
                    .map(|(&xi, &wi)| k.eval(y, xi) * wi)
                    .sum();
                self.mean.eval(y) + s
            })
            .collect()
    }

    /// `K(Y*,Y*) - K(Y*,X) [K(X,X) + Σ]⁻¹ K(X,Y*)`, symmetrized, with the
    /// diagonal clamped at zero.
    pub fn predict_cov(&self, ystar: &[f64]) -> DMatrix<f64> {
        let k = self.kernel();
        let mut cov = k.gram(ystar);
        if !self.data.is_empty() {
            let cross = k.matrix(self.data.inputs(), ystar);
            let v = self
                .gram_factor
                .half_solve(&cross)
                .expect("factor dimension matches training set");
            cov -= v.transpose() * v;
            symmetrize(&mut cov);
        }
        for i in 0..cov.nrows() {
            if cov[(i, i)] < 0.0 {
                cov[(i, i)] = 0.0;
            }
        }
        cov
    }

    /// Diagonal of [`predict_cov`](Self::predict_cov) without forming the
    /// full matrix.
    pub fn predict_var(&self, ystar: &[f64]) -> Vec<f64> {
        let k = self.kernel();
        if self.data.is_empty() {
            return ystar.iter().map(|&y| k.eval(y, y)).collect();
        }
        let cross = k.matrix(self.data.inputs(), ystar);
        let v = self
            .gram_factor
            .half_solve(&cross)
            .expect("factor dimension matches training set");
        ystar
            .iter()
            .enumerate()
            .map(|(j, &y)| (k.eval(y, y) - v.column(j).norm_squared()).max(0.0))
            .collect()
    }

    pub fn to_doc(&self) -> GpModelDoc {
        let n = self.data.len();
        GpModelDoc {
            hyperparameters: self.hp,
            prior_mean: self.mean,
            train_inputs: self.data.inputs().to_vec(),
            train_targets: self.data.targets().to_vec(),
            target_cov: (0..n)
                .map(|i| self.data.target_cov().row(i).iter().copied().collect())
                .collect(),
        }
    }

    /// Refits from a serialized document; factors are never serialized.
    pub fn from_doc(doc: &GpModelDoc) -> Result<Self> {
        let n = doc.train_inputs.len();
        if doc.target_cov.len() != n || doc.target_cov.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: format!("{n}x{n} target_cov"),
                got: format!("{} rows", doc.target_cov.len()),
            });
        }
        let cov = DMatrix::from_fn(n, n, |i, j| doc.target_cov[i][j]);
        let ts = TrainingSet::new(doc.train_inputs.clone(), doc.train_targets.clone(), cov)?;
        fit(&ts, &doc.hyperparameters, doc.prior_mean)
    }
}

/// Serialized form of a [`GPPosterior`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpModelDoc {
    pub hyperparameters: Hyperparameters,
    pub prior_mean: PriorMean,
    pub train_inputs: Vec<f64>,
    pub train_targets: Vec<f64>,
    pub target_cov: Vec<Vec<f64>>,
}

/// `-½ rᵀK̃⁻¹r - ½ log|K̃| - (N/2) log 2π` with `r = targets - m(inputs)` and
/// `K̃ = K + target_cov + σ_n² I`.
pub fn log_marginal_likelihood(
    ts: &TrainingSet,
    hp: &Hyperparameters,
    mean: &PriorMean,
) -> Result<f64> {
    if ts.is_empty() {
        return Ok(0.0);
    }
    let factor = factor_gram(&observation_gram(ts, hp))?;
    Ok(lml_from_factor(&factor, &ts.residuals(mean)))
}

fn lml_from_factor(factor: &PsdFactor, r: &DVector<f64>) -> f64 {
    let n = r.len() as f64;
    let mut z = r.clone();
    factor
        .lower_triangular()
        .solve_lower_triangular_unchecked_mut(&mut z);
    -0.5 * z.norm_squared() - 0.5 * factor.log_det() - 0.5 * n * (2.0 * PI).ln()
}

/// Settings for the multi-start simplex search over
/// `(log ℓ, log σ_f², log σ_n²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub log_lower: f64,
    pub log_upper: f64,
    /// Offsets added to every log-parameter of `hp0`, one start each.
    pub start_offsets: Vec<f64>,
    /// When false, σ_n² stays at its `hp0` value (which may be zero).
    pub learn_noise: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iter: 400,
            rel_tol: 1e-9,
            log_lower: -20.0,
            log_upper: 5.0,
            start_offsets: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            learn_noise: true,
        }
    }
}

/// Data-driven starting point: ℓ is 10% of the input range, σ_f² the
/// residual variance, σ_n² = 1e-8.
pub fn default_initial_hyperparameters(ts: &TrainingSet, mean: &PriorMean) -> Hyperparameters {
    let (lo, hi) = ts
        .inputs()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let range = hi - lo;
    let length_scale = if range.is_finite() && range > 0.0 {
        0.1 * range
    } else {
        1.0
    };
    let r = ts.residuals(mean);
    let n = r.len().max(1) as f64;
    let mu = r.sum() / n;
    let var = r.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    Hyperparameters {
        length_scale,
        signal_variance: var.max(1e-12),
        noise_variance: 1e-8,
    }
}

/// Report from [`optimize_hyperparameters`].
#[derive(Debug, Clone)]
pub struct OptimizationReport {
    pub hp: Hyperparameters,
    pub lml: f64,
    pub evaluations: usize,
}

/// Maximizes the log marginal likelihood with a multi-start simplex search
/// in log-parameter space. The returned point is never worse than `hp0`.
pub fn optimize_hyperparameters(
    ts: &TrainingSet,
    hp0: &Hyperparameters,
    mean: &PriorMean,
    cfg: &OptimizerConfig,
) -> Result<Hyperparameters> {
    optimize_with_report(ts, hp0, mean, cfg).map(|r| r.hp)
}

pub fn optimize_with_report(
    ts: &TrainingSet,
    hp0: &Hyperparameters,
    mean: &PriorMean,
    cfg: &OptimizerConfig,
) -> Result<OptimizationReport> {
    if ts.len() < 2 {
        return Err(Error::InvalidData(format!(
            "hyperparameter optimization needs at least 2 points, got {}",
            ts.len()
        )));
    }
    if cfg.log_lower >= cfg.log_upper {
        return Err(Error::Config("optimizer box is empty".into()));
    }
    let evaluator = LmlEvaluator::new(ts, mean);
    let fixed_noise = hp0.noise_variance;
    let to_hp = |p: &[f64]| -> Hyperparameters {
        Hyperparameters {
            length_scale: p[0].exp(),
            signal_variance: p[1].exp(),
            noise_variance: if cfg.learn_noise {
                p[2].exp()
            } else {
                fixed_noise
            },
        }
    };
    let dim = if cfg.learn_noise { 3 } else { 2 };
    let base = hp0.to_log();

    let mut best: Option<(Hyperparameters, f64)> = None;
    let mut consider = |hp: Hyperparameters, lml: f64| {
        if lml.is_finite() && best.is_none_or(|(_, b)| lml > b) {
            best = Some((hp, lml));
        }
    };
    if hp0.validate().is_ok() {
        consider(*hp0, evaluator.lml(hp0));
    }

    let opts = SimplexOptions {
        max_iter: cfg.max_iter,
        rel_tol: cfg.rel_tol,
        lower: cfg.log_lower,
        upper: cfg.log_upper,
        initial_step: 1.0,
    };
    let mut evaluations = 0;
    for &offset in &cfg.start_offsets {
        let start: Vec<f64> = base[..dim]
            .iter()
            .map(|&b| {
                if b.is_finite() {
                    b + offset
                } else {
                    cfg.log_lower
                }
            })
            .collect();
        let res = simplex::minimize(|p| -evaluator.lml(&to_hp(p)), &start, &opts);
        evaluations += res.evaluations;
        if res.value.is_finite() {
            consider(to_hp(&res.x), -res.value);
        }
    }
    match best {
        Some((hp, lml)) => Ok(OptimizationReport {
            hp,
            lml,
            evaluations,
        }),
        None => Err(Error::OptimizationFailed(
            "no start produced a finite log marginal likelihood".into(),
        )),
    }
}

/// Caches squared input distances and residuals for repeated LML
/// evaluation.
struct LmlEvaluator<'a> {
    ts: &'a TrainingSet,
    sq_dist: DMatrix<f64>,
    residuals: DVector<f64>,
}

impl<'a> LmlEvaluator<'a> {
    fn new(ts: &'a TrainingSet, mean: &PriorMean) -> Self {
        let x = ts.inputs();
        let n = x.len();
        let sq_dist = DMatrix::from_fn(n, n, |i, j| (x[i] - x[j]) * (x[i] - x[j]));
        LmlEvaluator {
            ts,
            sq_dist,
            residuals: ts.residuals(mean),
        }
    }

    /// `-∞` when the Gram matrix cannot be factored.
    fn lml(&self, hp: &Hyperparameters) -> f64 {
        if hp.validate().is_err() {
            return f64::NEG_INFINITY;
        }
        let inv = -0.5 / (hp.length_scale * hp.length_scale);
        let sf2 = hp.signal_variance;
        let mut gram = self.sq_dist.map(|d| sf2 * (d * inv).exp());
        gram += self.ts.target_cov();
        for i in 0..gram.nrows() {
            gram[(i, i)] += hp.noise_variance;
        }
        match factor_gram(&gram) {
            Ok(f) => lml_from_factor(&f, &self.residuals),
            Err(_) => f64::NEG_INFINITY,
        }
    }
}
