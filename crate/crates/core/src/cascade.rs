//! Two-stage calibration: test bed against reference, then production
//! sensor against the calibrated test bed.
//!
//! Stage one fits `f̂₂→₃` on `D₂`. Its posterior at the test-bed readings of
//! `D₁` provides both the stage-two targets and their joint covariance,
//! which enters the stage-two Gram matrix as observation noise.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{
    self, default_initial_hyperparameters, optimize_hyperparameters, GPPosterior, GpModelDoc,
    OptimizerConfig, TrainingSet,
};
use crate::kernels::PriorMean;

/// Paired readings `(x, y)` where `x` comes from the less accurate sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationDataset {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl CalibrationDataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} y values", x.len()),
                got: format!("{}", y.len()),
            });
        }
        if let Some(i) = x.iter().chain(&y).position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite reading at position {}",
                i % x.len().max(1)
            )));
        }
        Ok(CalibrationDataset { x, y })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodTag {
    /// Stage two sees the full propagated covariance.
    Bayesian,
    /// Stage two sees `σ_{n,3}² I`, with σ_{n,3}² the stage-one noise.
    Alt1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeConfig {
    pub optimizer: OptimizerConfig,
    /// Drop the learned stage-two noise term, leaving only the propagated
    /// covariance on the Gram diagonal.
    pub strict_paper: bool,
    pub stage_one_mean: PriorMean,
    pub stage_two_mean: PriorMean,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            optimizer: OptimizerConfig::default(),
            strict_paper: false,
            stage_one_mean: PriorMean::Identity,
            stage_two_mean: PriorMean::Identity,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CascadeModel {
    pub method: MethodTag,
    pub stage_one: GPPosterior,
    pub stage_two: GPPosterior,
    pub config: CascadeConfig,
}

impl CascadeModel {
    /// Corrected positions for production-sensor readings `y1`.
    pub fn apply(&self, y1: &[f64]) -> Vec<f64> {
        self.stage_two.predict_mean(y1)
    }

    pub fn apply_variance(&self, y1: &[f64]) -> Vec<f64> {
        self.stage_two.predict_var(y1)
    }

    pub fn to_doc(&self) -> CascadeModelDoc {
        CascadeModelDoc {
            method_tag: self.method,
            stage_one: self.stage_one.to_doc(),
            stage_two: self.stage_two.to_doc(),
            config: self.config.clone(),
        }
    }

    pub fn from_doc(doc: &CascadeModelDoc) -> Result<Self> {
        Ok(CascadeModel {
            method: doc.method_tag,
            stage_one: GPPosterior::from_doc(&doc.stage_one)?,
            stage_two: GPPosterior::from_doc(&doc.stage_two)?,
            config: doc.config.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeModelDoc {
    pub method_tag: MethodTag,
    pub stage_one: GpModelDoc,
    pub stage_two: GpModelDoc,
    pub config: CascadeConfig,
}

fn require_len(d: &CalibrationDataset, what: &str) -> Result<()> {
    if d.len() < 2 {
        return Err(Error::InvalidData(format!(
            "{what} needs at least 2 pairs, got {}",
            d.len()
        )));
    }
    Ok(())
}

/// Fits `f̂₂→₃` on `D₂` with empirically optimized hyperparameters.
pub fn calibrate_stage_one(d2: &CalibrationDataset, cfg: &CascadeConfig) -> Result<GPPosterior> {
    require_len(d2, "stage-one dataset")?;
    let ts = TrainingSet::noiseless(d2.x().to_vec(), d2.y().to_vec())?;
    let mean = cfg.stage_one_mean;
    let hp0 = default_initial_hyperparameters(&ts, &mean);
    let opt = OptimizerConfig {
        learn_noise: true,
        ..cfg.optimizer.clone()
    };
    let hp = optimize_hyperparameters(&ts, &hp0, &mean, &opt)?;
    gp::fit(&ts, &hp, mean)
}

/// Builds `D₁′`: stage-one posterior mean and joint covariance at the
/// test-bed readings of `D₁`, keyed by the production-sensor readings.
pub fn propagate(d1: &CalibrationDataset, stage_one: &GPPosterior) -> Result<TrainingSet> {
    TrainingSet::new(
        d1.x().to_vec(),
        stage_one.predict_mean(d1.y()),
        stage_one.predict_cov(d1.y()),
    )
}

/// Stage-two training data for `method`.
pub fn stage_two_training_set(
    d1: &CalibrationDataset,
    stage_one: &GPPosterior,
    method: MethodTag,
) -> Result<TrainingSet> {
    let propagated = propagate(d1, stage_one)?;
    match method {
        MethodTag::Bayesian => Ok(propagated),
        MethodTag::Alt1 => {
            let n = propagated.len();
            let sn2 = stage_one.hyperparameters().noise_variance;
            propagated.with_target_cov(DMatrix::identity(n, n) * sn2)
        }
    }
}

fn fit_stage_two(ts: &TrainingSet, cfg: &CascadeConfig) -> Result<GPPosterior> {
    let mean = cfg.stage_two_mean;
    let mut hp0 = default_initial_hyperparameters(ts, &mean);
    if cfg.strict_paper {
        hp0.noise_variance = 0.0;
    }
    let opt = OptimizerConfig {
        learn_noise: !cfg.strict_paper,
        ..cfg.optimizer.clone()
    };
    let hp = optimize_hyperparameters(ts, &hp0, &mean, &opt)?;
    gp::fit(ts, &hp, mean)
}

/// Completes the cascade from an already fitted stage one.
pub fn calibrate_from_stage_one(
    d1: &CalibrationDataset,
    stage_one: GPPosterior,
    method: MethodTag,
    cfg: &CascadeConfig,
) -> Result<CascadeModel> {
    require_len(d1, "stage-two dataset")?;
    let ts = stage_two_training_set(d1, &stage_one, method)?;
    let stage_two = fit_stage_two(&ts, cfg)?;
    Ok(CascadeModel {
        method,
        stage_one,
        stage_two,
        config: cfg.clone(),
    })
}

/// Cascaded calibration with full covariance propagation.
pub fn calibrate_cascaded(
    d1: &CalibrationDataset,
    d2: &CalibrationDataset,
    cfg: &CascadeConfig,
) -> Result<CascadeModel> {
    require_len(d1, "stage-two dataset")?;
    let stage_one = calibrate_stage_one(d2, cfg)?;
    calibrate_from_stage_one(d1, stage_one, MethodTag::Bayesian, cfg)
}

/// Same pipeline with the propagated covariance replaced by `σ_{n,3}² I`.
pub fn calibrate_alternative1(
    d1: &CalibrationDataset,
    d2: &CalibrationDataset,
    cfg: &CascadeConfig,
) -> Result<CascadeModel> {
    require_len(d1, "stage-two dataset")?;
    let stage_one = calibrate_stage_one(d2, cfg)?;
    calibrate_from_stage_one(d1, stage_one, MethodTag::Alt1, cfg)
}

pub fn calibrate(
    method: MethodTag,
    d1: &CalibrationDataset,
    d2: &CalibrationDataset,
    cfg: &CascadeConfig,
) -> Result<CascadeModel> {
    match method {
        MethodTag::Bayesian => calibrate_cascaded(d1, d2, cfg),
        MethodTag::Alt1 => calibrate_alternative1(d1, d2, cfg),
    }
}
