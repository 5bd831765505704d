//! Synthetic sensors with random-Fourier inaccuracies, dataset generation
//! and the integrated calibration cost.
//!
//! A sensor reads `y* + Σ_k (s_k sin(ω_k y*) + c_k cos(ω_k y*)) + ε`. The
//! reference instrument reads `y* + ε`, so its reading stands in for the
//! true position.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cascade::CalibrationDataset;
use crate::error::{Error, Result};

/// Points in the monotonicity check of a sensor over its padded range.
pub const MONOTONE_GRID: usize = 4001;
/// Padding of the nominal range on each side, as a fraction of its width.
pub const RANGE_PADDING: f64 = 0.1;
/// Default tolerance on `|read(y*) - y_obs|` when inverting a sensor.
pub const INVERT_TOL: f64 = 1e-10;
/// Redraws allowed before giving up on a monotone truth pair.
pub const MAX_TRUTH_ATTEMPTS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorTruth {
    pub sin_coeffs: Vec<f64>,
    pub cos_coeffs: Vec<f64>,
    pub freqs: Vec<f64>,
    pub noise_variance: f64,
}

/// Distribution parameters for [`sample_truth`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthParams {
    pub n_terms: usize,
    pub coeff_var: f64,
    pub freq_var: f64,
    pub noise_var: f64,
}

impl Default for TruthParams {
    fn default() -> Self {
        TruthParams {
            n_terms: 10,
            coeff_var: 1e-4,
            freq_var: 6.0,
            noise_var: 1e-8,
        }
    }
}

fn normal(var: f64) -> Result<Normal<f64>> {
    if !(var >= 0.0) || !var.is_finite() {
        return Err(Error::Config(format!(
            "variance must be finite and ≥ 0, got {var}"
        )));
    }
    Normal::new(0.0, var.sqrt()).map_err(|e| Error::Config(e.to_string()))
}

impl SensorTruth {
    pub fn identity(noise_variance: f64) -> Self {
        SensorTruth {
            sin_coeffs: Vec::new(),
            cos_coeffs: Vec::new(),
            freqs: Vec::new(),
            noise_variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.freqs.len();
        if self.sin_coeffs.len() != n || self.cos_coeffs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("{n} sin and cos coefficients"),
                got: format!("{} and {}", self.sin_coeffs.len(), self.cos_coeffs.len()),
            });
        }
        if !(self.noise_variance >= 0.0) {
            return Err(Error::Config("sensor noise variance must be ≥ 0".into()));
        }
        Ok(())
    }

    /// Reading without measurement noise.
    pub fn noiseless(&self, y_star: f64) -> f64 {
        let mut y = y_star;
        for ((&s, &c), &w) in self
            .sin_coeffs
            .iter()
            .zip(&self.cos_coeffs)
            .zip(&self.freqs)
        {
            let (sin, cos) = (w * y_star).sin_cos();
            y += s * sin + c * cos;
        }
        y
    }

    /// Derivative of [`noiseless`](Self::noiseless) with respect to `y*`.
    pub fn slope(&self, y_star: f64) -> f64 {
        let mut d = 1.0;
        for ((&s, &c), &w) in self
            .sin_coeffs
            .iter()
            .zip(&self.cos_coeffs)
            .zip(&self.freqs)
        {
            let (sin, cos) = (w * y_star).sin_cos();
            d += w * (s * cos - c * sin);
        }
        d
    }

    /// Noisy reading at true position `y_star`.
    pub fn read<R: Rng + ?Sized>(&self, y_star: f64, rng: &mut R) -> f64 {
        let eps = if self.noise_variance > 0.0 {
            Normal::new(0.0, self.noise_variance.sqrt())
                .expect("validated variance")
                .sample(rng)
        } else {
            0.0
        };
        self.noiseless(y_star) + eps
    }
}

pub fn sensor_read<R: Rng + ?Sized>(t: &SensorTruth, y_star: f64, rng: &mut R) -> f64 {
    t.read(y_star, rng)
}

/// Draws coefficients i.i.d. `N(0, coeff_var)` and frequencies i.i.d.
/// `N(0, freq_var)`.
pub fn sample_truth_with<R: Rng + ?Sized>(rng: &mut R, p: &TruthParams) -> Result<SensorTruth> {
    let coeff = normal(p.coeff_var)?;
    let freq = normal(p.freq_var)?;
    normal(p.noise_var)?;
    let sin_coeffs = (0..p.n_terms).map(|_| coeff.sample(rng)).collect();
    let cos_coeffs = (0..p.n_terms).map(|_| coeff.sample(rng)).collect();
    let freqs = (0..p.n_terms).map(|_| freq.sample(rng)).collect();
    Ok(SensorTruth {
        sin_coeffs,
        cos_coeffs,
        freqs,
        noise_variance: p.noise_var,
    })
}

pub fn sample_truth(seed: u64, p: &TruthParams) -> Result<SensorTruth> {
    sample_truth_with(&mut ChaCha8Rng::seed_from_u64(seed), p)
}

fn padded(range: [f64; 2]) -> [f64; 2] {
    let w = range[1] - range[0];
    [range[0] - RANGE_PADDING * w, range[1] + RANGE_PADDING * w]
}

/// Inverse of a sensor's noiseless reading over a padded range. Building it
/// verifies strict monotonicity on a [`MONOTONE_GRID`]-point grid.
#[derive(Debug, Clone)]
pub struct SensorInverse<'a> {
    sensor: &'a SensorTruth,
    grid: Vec<f64>,
    readings: Vec<f64>,
}

impl<'a> SensorInverse<'a> {
    pub fn new(sensor: &'a SensorTruth, range: [f64; 2]) -> Result<Self> {
        sensor.validate()?;
        let [lo, hi] = padded(range);
        let n = MONOTONE_GRID;
        let grid: Vec<f64> = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        let readings: Vec<f64> = grid.iter().map(|&y| sensor.noiseless(y)).collect();
        if let Some(i) = readings.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::NonMonotonic { at: grid[i] });
        }
        Ok(SensorInverse {
            sensor,
            grid,
            readings,
        })
    }

    /// Range of noiseless readings covered by the padded grid.
    pub fn reading_range(&self) -> (f64, f64) {
        (self.readings[0], *self.readings.last().unwrap())
    }

    /// `y*` with `|noiseless(y*) - y_obs| ≤ tol`, by bisection inside the
    /// grid cell that brackets `y_obs`.
    pub fn invert(&self, y_obs: f64, tol: f64) -> Result<f64> {
        let (rlo, rhi) = self.reading_range();
        if !(y_obs >= rlo && y_obs <= rhi) {
            return Err(Error::OutOfRange {
                value: y_obs,
                lo: rlo,
                hi: rhi,
            });
        }
        let idx = self.readings.partition_point(|&r| r < y_obs);
        if idx < self.readings.len() && self.readings[idx] == y_obs {
            return Ok(self.grid[idx]);
        }
        // readings[idx-1] < y_obs < readings[idx]
        let (mut a, mut b) = (self.grid[idx - 1], self.grid[idx]);
        let mut fa = self.readings[idx - 1] - y_obs;
        loop {
            let m = 0.5 * (a + b);
            let fm = self.sensor.noiseless(m) - y_obs;
            if fm.abs() <= tol || m <= a || m >= b {
                return Ok(m);
            }
            if (fm < 0.0) == (fa < 0.0) {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
    }
}

/// Inverts a sensor over the padded default range `[0, 1]`.
pub fn invert_sensor(t: &SensorTruth, y_obs: f64, tol: f64) -> Result<f64> {
    SensorInverse::new(t, [0.0, 1.0])?.invert(y_obs, tol)
}

/// Sensor 1 is the production sensor, sensor 2 the test bed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthPair {
    pub sensor1: SensorTruth,
    pub sensor2: SensorTruth,
    #[serde(default = "default_range")]
    pub range: [f64; 2],
}

fn default_range() -> [f64; 2] {
    [0.0, 1.0]
}

impl TruthPair {
    pub fn new(sensor1: SensorTruth, sensor2: SensorTruth, range: [f64; 2]) -> Result<Self> {
        if !(range[0] < range[1]) || range.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "range {range:?} is not well ordered"
            )));
        }
        sensor1.validate()?;
        sensor2.validate()?;
        Ok(TruthPair {
            sensor1,
            sensor2,
            range,
        })
    }

    pub fn inverse1(&self) -> Result<SensorInverse<'_>> {
        SensorInverse::new(&self.sensor1, self.range)
    }

    pub fn inverse2(&self) -> Result<SensorInverse<'_>> {
        SensorInverse::new(&self.sensor2, self.range)
    }

    /// `[y₁ᵐⁱⁿ, y₁ᵐᵃˣ]`: the noiseless image of the range under sensor 1.
    pub fn y1_range(&self) -> (f64, f64) {
        (
            self.sensor1.noiseless(self.range[0]),
            self.sensor1.noiseless(self.range[1]),
        )
    }
}

/// Substream `stream` of the counter-based generator seeded with `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub const STREAM_D2: u64 = 1 << 40;
pub const STREAM_D1: u64 = (1 << 40) + 1;

/// Draws a truth pair, redrawing (on fresh substreams) until both sensors
/// are strictly increasing on the padded range. Returns the number of
/// rejected draws alongside the pair.
pub fn sample_truth_pair(
    seed: u64,
    params: &TruthParams,
    range: [f64; 2],
) -> Result<(TruthPair, u64)> {
    for attempt in 0..MAX_TRUTH_ATTEMPTS {
        let s1 = sample_truth_with(&mut substream(seed, 2 * attempt), params)?;
        let s2 = sample_truth_with(&mut substream(seed, 2 * attempt + 1), params)?;
        let pair = TruthPair::new(s1, s2, range)?;
        if pair.inverse1().is_ok() && pair.inverse2().is_ok() {
            return Ok((pair, attempt));
        }
    }
    Err(Error::NonMonotonic { at: f64::NAN })
}

/// Indices kept after removing `edge_remove` points at each end and
/// `center_remove` consecutive points centered on the middle of the grid.
pub fn d2_kept_indices(
    n_grid: usize,
    edge_remove: usize,
    center_remove: usize,
) -> Result<Vec<usize>> {
    if n_grid < 4 {
        return Err(Error::Config(format!("n_grid must be ≥ 4, got {n_grid}")));
    }
    let removed = 2 * edge_remove + center_remove;
    if removed + 2 > n_grid {
        return Err(Error::Config(format!(
            "removing {removed} of {n_grid} grid points leaves fewer than 2"
        )));
    }
    let center_start = (n_grid - center_remove) / 2;
    let center_end = center_start + center_remove;
    if center_remove > 0 && (center_start < edge_remove || center_end > n_grid - edge_remove) {
        return Err(Error::Config(
            "center removal overlaps the edge removals".into(),
        ));
    }
    Ok((0..n_grid)
        .filter(|&i| {
            i >= edge_remove && i < n_grid - edge_remove && !(i >= center_start && i < center_end)
        })
        .collect())
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Test-bed calibration data: `x` = test-bed reading, `y` = reference
/// reading, on an equally spaced true-position grid with gaps.
pub fn generate_d2<R: Rng + ?Sized>(
    pair: &TruthPair,
    n_grid: usize,
    edge_remove: usize,
    center_remove: usize,
    rng: &mut R,
) -> Result<CalibrationDataset> {
    let kept = d2_kept_indices(n_grid, edge_remove, center_remove)?;
    let reference = SensorTruth::identity(pair.sensor2.noise_variance);
    let grid = linspace(pair.range[0], pair.range[1], n_grid);
    let mut xs = Vec::with_capacity(n_grid);
    let mut ys = Vec::with_capacity(n_grid);
    for &y_star in &grid {
        ys.push(reference.read(y_star, rng));
        xs.push(pair.sensor2.read(y_star, rng));
    }
    CalibrationDataset::new(
        kept.iter().map(|&i| xs[i]).collect(),
        kept.iter().map(|&i| ys[i]).collect(),
    )
}

/// Production-sensor calibration data: `x` = production reading on an
/// equally spaced grid over its range, `y` = test-bed reading at the same
/// true position.
pub fn generate_d1<R: Rng + ?Sized>(
    pair: &TruthPair,
    n1: usize,
    rng: &mut R,
) -> Result<CalibrationDataset> {
    if n1 < 2 {
        return Err(Error::Config(format!("n1 must be ≥ 2, got {n1}")));
    }
    let inv = pair.inverse1()?;
    let (lo, hi) = pair.y1_range();
    let noise = normal(pair.sensor1.noise_variance)?;
    let mut xs = Vec::with_capacity(n1);
    let mut ys = Vec::with_capacity(n1);
    for y1 in linspace(lo, hi, n1) {
        let y_star = inv.invert(y1, INVERT_TOL)?;
        ys.push(pair.sensor2.read(y_star, rng));
        xs.push(y1 + noise.sample(rng));
    }
    CalibrationDataset::new(xs, ys)
}

/// Ground-truth map from a production reading to the true position. Builds
/// the inverse on every call; use [`TruthPair::inverse1`] for many points.
pub fn true_f13(pair: &TruthPair, y1: f64) -> Result<f64> {
    pair.inverse1()?.invert(y1, INVERT_TOL)
}

/// Pointwise errors of a calibration map on the `n_quad`-point grid over
/// `[y₁ᵐⁱⁿ, y₁ᵐᵃˣ]`: `(y1, model, truth)`.
pub fn error_profile<F>(
    model_apply: F,
    pair: &TruthPair,
    n_quad: usize,
) -> Result<Vec<(f64, f64, f64)>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if n_quad < 2 {
        return Err(Error::Config(format!("n_quad must be ≥ 2, got {n_quad}")));
    }
    let inv = pair.inverse1()?;
    let (lo, hi) = pair.y1_range();
    let grid = linspace(lo, hi, n_quad);
    let model = model_apply(&grid);
    if model.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} model outputs", grid.len()),
            got: format!("{}", model.len()),
        });
    }
    grid.iter()
        .zip(model)
        .map(|(&y1, m)| Ok((y1, m, inv.invert(y1, INVERT_TOL)?)))
        .collect()
}

/// Normalized root-integrated-squared error of `model_apply` against the
/// true map, by composite trapezoid on `n_quad` points.
pub fn cost_j<F>(model_apply: F, pair: &TruthPair, n_quad: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let profile = error_profile(model_apply, pair, n_quad)?;
    let width = profile.last().unwrap().0 - profile[0].0;
    let sq: Vec<f64> = profile.iter().map(|(_, m, t)| (m - t) * (m - t)).collect();
    let h = width / (n_quad - 1) as f64;
    let inner: f64 = sq[1..n_quad - 1].iter().sum();
    let integral = h * (0.5 * (sq[0] + sq[n_quad - 1]) + inner);
    Ok((integral / width).sqrt())
}
