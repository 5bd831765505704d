//! Lookup-table baseline: linear interpolation, cascaded through two tables.

use serde::{Deserialize, Serialize};

use crate::cascade::CalibrationDataset;
use crate::error::{Error, Result};

/// Behaviour outside the breakpoint range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extrapolation {
    /// Extend the first/last segment's slope.
    #[default]
    Slope,
    /// Hold the first/last value.
    Clamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    #[serde(default)]
    extrapolation: Extrapolation,
}

impl LookupTable {
    /// Validates strictly increasing breakpoints of matching length ≥ 2.
    pub fn new(
        breakpoints: Vec<f64>,
        values: Vec<f64>,
        extrapolation: Extrapolation,
    ) -> Result<Self> {
        if breakpoints.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} values", breakpoints.len()),
                got: format!("{}", values.len()),
            });
        }
        if breakpoints.len() < 2 {
            return Err(Error::DegenerateTable(breakpoints.len()));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidData(
                "lookup table breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(LookupTable {
            breakpoints,
            values,
            extrapolation,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn extrapolation(&self) -> Extrapolation {
        self.extrapolation
    }

    pub fn eval(&self, y: f64) -> f64 {
        lut_eval(self, y)
    }

    pub fn eval_many(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| lut_eval(self, y)).collect()
    }
}

/// Sorts pairs by `x` and averages the `y` of exactly repeated `x`.
pub fn build_lut(pairs: &CalibrationDataset, extrapolation: Extrapolation) -> Result<LookupTable> {
    let mut xy: Vec<(f64, f64)> = pairs
        .x()
        .iter()
        .copied()
        .zip(pairs.y().iter().copied())
        .collect();
    xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut breakpoints = Vec::with_capacity(xy.len());
    let mut values = Vec::with_capacity(xy.len());
    let mut i = 0;
    while i < xy.len() {
        let x = xy[i].0;
        let mut j = i;
        let mut sum = 0.0;
        while j < xy.len() && xy[j].0 == x {
            sum += xy[j].1;
            j += 1;
        }
        breakpoints.push(x);
        values.push(sum / (j - i) as f64);
        i = j;
    }
    if breakpoints.len() < 2 {
        return Err(Error::DegenerateTable(breakpoints.len()));
    }
    LookupTable::new(breakpoints, values, extrapolation)
}

/// Piecewise-linear interpolation; outside the table, see [`Extrapolation`].
pub fn lut_eval(t: &LookupTable, y: f64) -> f64 {
    let bp = &t.breakpoints;
    let v = &t.values;
    let n = bp.len();
    if y <= bp[0] || y >= bp[n - 1] {
        let (a, b) = if y <= bp[0] { (0, 1) } else { (n - 2, n - 1) };
        if y == bp[a] {
            return v[a];
        }
        if y == bp[b] {
            return v[b];
        }
        return match t.extrapolation {
            Extrapolation::Clamp => {
                if y < bp[0] {
                    v[0]
                } else {
                    v[n - 1]
                }
            }
            Extrapolation::Slope => {
                let slope = (v[b] - v[a]) / (bp[b] - bp[a]);
                let (x0, y0) = if y < bp[0] {
                    (bp[0], v[0])
                } else {
                    (bp[n - 1], v[n - 1])
                };
                y0 + slope * (y - x0)
            }
        };
    }
    // first index with bp[idx] > y; 1 <= idx <= n-1
    let idx = bp.partition_point(|&b| b <= y);
    let (x0, x1) = (bp[idx - 1], bp[idx]);
    if y == x0 {
        return v[idx - 1];
    }
    let t = (y - x0) / (x1 - x0);
    v[idx - 1] + t * (v[idx] - v[idx - 1])
}

/// Two cascaded tables: test bed → reference, then production → reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LutCascade {
    pub stage_one: LookupTable,
    pub stage_two: LookupTable,
}

impl LutCascade {
    pub fn apply(&self, y1: &[f64]) -> Vec<f64> {
        self.stage_two.eval_many(y1)
    }
}

pub fn calibrate_lut_cascade(
    d1: &CalibrationDataset,
    d2: &CalibrationDataset,
    extrapolation: Extrapolation,
) -> Result<LutCascade> {
    let stage_one = build_lut(d2, extrapolation)?;
    let mapped = stage_one.eval_many(d1.y());
    let d1_prime = CalibrationDataset::new(d1.x().to_vec(), mapped)?;
    let stage_two = build_lut(&d1_prime, extrapolation)?;
    Ok(LutCascade {
        stage_one,
        stage_two,
    })
}
