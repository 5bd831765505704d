use serde::{Deserialize, Serialize};

use crate::cascade::CascadeConfig;
use crate::error::{Error, Result};
use crate::gp::OptimizerConfig;
use crate::lut::Extrapolation;
use crate::sim::{d2_kept_indices, TruthParams};

/// Every knob of a simulation campaign. Serialized as flat JSON; the CLI
/// exposes each field as a kebab-case flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Fourier terms per sensor.
    pub n_s: usize,
    pub coeff_var: f64,
    pub freq_var: f64,
    /// Measurement noise variance of every sensor (m²).
    pub noise_var: f64,
    pub range_min: f64,
    pub range_max: f64,
    pub n_grid: usize,
    pub edge_remove: usize,
    pub center_remove: usize,
    pub n1: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub log_lower: f64,
    pub log_upper: f64,
    pub strict_paper: bool,
    pub extrapolation: Extrapolation,
    pub n_quad: usize,
    pub n_bins: usize,
    pub seed: u64,
    pub trials: usize,
    pub parallel: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        let truth = TruthParams::default();
        RunConfig {
            n_s: truth.n_terms,
            coeff_var: truth.coeff_var,
            freq_var: truth.freq_var,
            noise_var: truth.noise_var,
            range_min: 0.0,
            range_max: 1.0,
            n_grid: 100,
            edge_remove: 8,
            center_remove: 20,
            n1: 100,
            max_iter: opt.max_iter,
            rel_tol: opt.rel_tol,
            log_lower: opt.log_lower,
            log_upper: opt.log_upper,
            strict_paper: false,
            extrapolation: Extrapolation::Slope,
            n_quad: 2001,
            n_bins: 40,
            seed: 1,
            trials: 200,
            parallel: 1,
        }
    }
}

/// Trial count of the full-scale campaign.
pub const FULL_SCALE_TRIALS: usize = 12000;

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        d2_kept_indices(self.n_grid, self.edge_remove, self.center_remove)?;
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.n1 < 2 {
            return bad("n1 must be ≥ 2");
        }
        if self.n_quad < 2 {
            return bad("n_quad must be ≥ 2");
        }
        if self.n_bins < 1 {
            return bad("n_bins must be ≥ 1");
        }
        if self.trials < 1 {
            return bad("trials must be ≥ 1");
        }
        if self.parallel < 1 {
            return bad("parallel must be ≥ 1");
        }
        if !(self.range_min < self.range_max) {
            return bad("range_min must be < range_max");
        }
        for (name, v) in [
            ("coeff_var", self.coeff_var),
            ("freq_var", self.freq_var),
            ("noise_var", self.noise_var),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and ≥ 0")));
            }
        }
        if !(self.log_lower < self.log_upper) {
            return bad("log_lower must be < log_upper");
        }
        if !(self.rel_tol > 0.0) || self.max_iter == 0 {
            return bad("optimizer needs max_iter ≥ 1 and rel_tol > 0");
        }
        Ok(())
    }

    pub fn truth_params(&self) -> TruthParams {
        TruthParams {
            n_terms: self.n_s,
            coeff_var: self.coeff_var,
            freq_var: self.freq_var,
            noise_var: self.noise_var,
        }
    }

    pub fn range(&self) -> [f64; 2] {
        [self.range_min, self.range_max]
    }

    pub fn cascade_config(&self) -> CascadeConfig {
        CascadeConfig {
            optimizer: OptimizerConfig {
                max_iter: self.max_iter,
                rel_tol: self.rel_tol,
                log_lower: self.log_lower,
                log_upper: self.log_upper,
                ..OptimizerConfig::default()
            },
            strict_paper: self.strict_paper,
            ..CascadeConfig::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}
