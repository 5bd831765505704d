//! Seeded Monte Carlo comparison of the cascaded GP calibration against the
//! diagonal-noise and lookup-table baselines.
//!
//! Trial `k` of a campaign uses seed `base_seed + k`; every random draw
//! inside a trial comes from a counter-based substream of that seed, so any
//! trial can be re-run on its own and results do not depend on scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cascade::{
    calibrate_from_stage_one, calibrate_stage_one, CalibrationDataset, MethodTag,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::kernels::Hyperparameters;
use crate::lut::calibrate_lut_cascade;
use crate::sim::{
    cost_j, generate_d1, generate_d2, sample_truth_pair, substream, TruthPair, STREAM_D1, STREAM_D2,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bayes,
    Alt1,
    Alt2,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Bayes, Method::Alt1, Method::Alt2];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bayes => "bayes",
            Method::Alt1 => "alt1",
            Method::Alt2 => "alt2",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodTimes {
    pub bayes_ms: f64,
    pub alt1_ms: f64,
    pub alt2_ms: f64,
}

/// Outcome of one seed. Costs are `NaN` when the trial is flagged.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub j_bayes: f64,
    pub j_alt1: f64,
    pub j_alt2: f64,
    /// Stage-two hyperparameters of the Bayesian run.
    pub hp1: Option<Hyperparameters>,
    /// Stage-one hyperparameters (shared by both GP methods).
    pub hp2: Option<Hyperparameters>,
    pub rejected_draws: u64,
    pub wall_time_ms: MethodTimes,
    /// Digest of `(D₁, D₂)` as seen by each method, in [`Method::ALL`] order.
    pub dataset_checksums: [String; 3],
    pub flag: Option<String>,
}

impl TrialResult {
    pub fn is_flagged(&self) -> bool {
        self.flag.is_some()
    }

    pub fn j(&self, m: Method) -> f64 {
        match m {
            Method::Bayes => self.j_bayes,
            Method::Alt1 => self.j_alt1,
            Method::Alt2 => self.j_alt2,
        }
    }

    pub fn row(&self) -> TrialRow {
        TrialRow {
            seed: self.seed,
            j: [self.j_bayes, self.j_alt1, self.j_alt2],
            flag: self.flag.clone(),
        }
    }

    /// Equality on everything except wall-clock timings.
    pub fn same_outcome(&self, other: &TrialResult) -> bool {
        let bits = |v: f64| v.to_bits();
        self.seed == other.seed
            && bits(self.j_bayes) == bits(other.j_bayes)
            && bits(self.j_alt1) == bits(other.j_alt1)
            && bits(self.j_alt2) == bits(other.j_alt2)
            && self.hp1 == other.hp1
            && self.hp2 == other.hp2
            && self.rejected_draws == other.rejected_draws
            && self.dataset_checksums == other.dataset_checksums
            && self.flag == other.flag
    }
}

/// SHA-256 over the little-endian bits of both datasets.
pub fn dataset_checksum(d1: &CalibrationDataset, d2: &CalibrationDataset) -> String {
    let mut h = Sha256::new();
    for d in [d1, d2] {
        h.update((d.len() as u64).to_le_bytes());
        for v in d.x().iter().chain(d.y()) {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize()
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Truth pair and both datasets for one seed.
pub struct TrialData {
    pub pair: TruthPair,
    pub rejected_draws: u64,
    pub d1: CalibrationDataset,
    pub d2: CalibrationDataset,
}

pub fn trial_data(seed: u64, cfg: &RunConfig) -> Result<TrialData> {
    let (pair, rejected_draws) = sample_truth_pair(seed, &cfg.truth_params(), cfg.range())?;
    let d2 = generate_d2(
        &pair,
        cfg.n_grid,
        cfg.edge_remove,
        cfg.center_remove,
        &mut substream(seed, STREAM_D2),
    )?;
    let d1 = generate_d1(&pair, cfg.n1, &mut substream(seed, STREAM_D1))?;
    Ok(TrialData {
        pair,
        rejected_draws,
        d1,
        d2,
    })
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs all three methods on one seed's datasets and scores each with the
/// integrated cost. A failure in any method flags the whole trial.
pub fn run_trial(seed: u64, cfg: &RunConfig) -> Result<TrialResult> {
    cfg.validate()?;
    let data = trial_data(seed, cfg)?;
    let TrialData {
        pair,
        rejected_draws,
        d1,
        d2,
    } = &data;
    let cascade_cfg = cfg.cascade_config();
    let mut result = TrialResult {
        seed,
        j_bayes: f64::NAN,
        j_alt1: f64::NAN,
        j_alt2: f64::NAN,
        hp1: None,
        hp2: None,
        rejected_draws: *rejected_draws,
        wall_time_ms: MethodTimes::default(),
        dataset_checksums: Default::default(),
        flag: None,
    };

    let outcome = (|| -> std::result::Result<(), (Method, Error)> {
        let t = Instant::now();
        result.dataset_checksums[Method::Bayes.index()] = dataset_checksum(d1, d2);
        result.dataset_checksums[Method::Alt1.index()] = dataset_checksum(d1, d2);
        let stage_one = calibrate_stage_one(d2, &cascade_cfg).map_err(|e| (Method::Bayes, e))?;
        result.hp2 = Some(*stage_one.hyperparameters());
        let stage_one_ms = elapsed_ms(t);

        let t = Instant::now();
        let bayes =
            calibrate_from_stage_one(d1, stage_one.clone(), MethodTag::Bayesian, &cascade_cfg)
                .map_err(|e| (Method::Bayes, e))?;
        result.hp1 = Some(*bayes.stage_two.hyperparameters());
        result.j_bayes =
            cost_j(|y| bayes.apply(y), pair, cfg.n_quad).map_err(|e| (Method::Bayes, e))?;
        result.wall_time_ms.bayes_ms = stage_one_ms + elapsed_ms(t);

        let t = Instant::now();
        let alt1 = calibrate_from_stage_one(d1, stage_one, MethodTag::Alt1, &cascade_cfg)
            .map_err(|e| (Method::Alt1, e))?;
        result.j_alt1 =
            cost_j(|y| alt1.apply(y), pair, cfg.n_quad).map_err(|e| (Method::Alt1, e))?;
        result.wall_time_ms.alt1_ms = stage_one_ms + elapsed_ms(t);

        let t = Instant::now();
        result.dataset_checksums[Method::Alt2.index()] = dataset_checksum(d1, d2);
        let lut =
            calibrate_lut_cascade(d1, d2, cfg.extrapolation).map_err(|e| (Method::Alt2, e))?;
        result.j_alt2 =
            cost_j(|y| lut.apply(y), pair, cfg.n_quad).map_err(|e| (Method::Alt2, e))?;
        result.wall_time_ms.alt2_ms = elapsed_ms(t);
        Ok(())
    })();

    if let Err((method, e)) = outcome {
        result.flag = Some(format!("{}_failed: {}", method.name(), e));
        result.j_bayes = f64::NAN;
        result.j_alt1 = f64::NAN;
        result.j_alt2 = f64::NAN;
    }
    Ok(result)
}

/// Runs seeds `base_seed .. base_seed + n_trials` on up to `max_parallel`
/// threads. Results are returned in seed order.
pub fn run_campaign(
    n_trials: usize,
    base_seed: u64,
    cfg: &RunConfig,
    max_parallel: usize,
) -> Result<Vec<TrialResult>> {
    if n_trials < 1 {
        return Err(Error::Config("n_trials must be ≥ 1".into()));
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_parallel.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| {
        (0..n_trials as u64)
            .into_par_iter()
            .map(|k| run_trial(base_seed.wrapping_add(k), cfg))
            .collect()
    })
}

/// The per-trial columns that are exported and re-summarized.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub seed: u64,
    pub j: [f64; 3],
    pub flag: Option<String>,
}

pub const TRIALS_CSV_HEADER: &str = "seed,j_bayes,j_alt1,j_alt2,flag";

/// One row per trial with header `seed,j_bayes,j_alt1,j_alt2,flag`; the flag
/// column is `ok` for unflagged trials.
pub fn write_trials_csv<W: Write>(rows: &[TrialRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIALS_CSV_HEADER.split(','))
        .map_err(csv_io)?;
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            r.j[0].to_string(),
            r.j[1].to_string(),
            r.j[2].to_string(),
            r.flag.clone().unwrap_or_else(|| "ok".into()),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

pub fn read_trials_csv<R: Read>(input: R, path: &str) -> Result<Vec<TrialRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv {
            path: path.into(),
            row: 0,
            msg: e.to_string(),
        })?
        .clone();
    let expected: Vec<&str> = TRIALS_CSV_HEADER.split(',').collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Csv {
            path: path.into(),
            row: 0,
            msg: format!("expected header `{TRIALS_CSV_HEADER}`"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let err = |msg: String| Error::Csv {
            path: path.into(),
            row,
            msg,
        };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let seed = rec[0]
            .trim()
            .parse::<u64>()
            .map_err(|e| err(format!("seed: {e}")))?;
        let mut j = [0.0; 3];
        for (k, v) in j.iter_mut().enumerate() {
            *v = rec[k + 1]
                .trim()
                .parse::<f64>()
                .map_err(|e| err(format!("{}: {e}", expected[k + 1])))?;
        }
        let flag = match rec[4].trim() {
            "ok" => None,
            other => Some(other.to_string()),
        };
        rows.push(TrialRow { seed, j, flag });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub method: Method,
    pub median: f64,
    pub mean: f64,
    pub q05: f64,
    pub q25: f64,
    pub q75: f64,
    pub q95: f64,
    /// Fraction of trials where this method's cost is strictly lower.
    pub win_rate: BTreeMap<Method, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    /// Per method, counts divided by `(included samples × bin width)`.
    pub density: BTreeMap<Method, Vec<f64>>,
    /// Samples above the last edge, excluded from the densities.
    pub overflow: BTreeMap<Method, usize>,
}

/// Empirical CDF: `p[i]` is the fraction of samples `≤ x[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        let mut x = Vec::new();
        let mut p = Vec::new();
        for (i, &v) in s.iter().enumerate() {
            if i + 1 < s.len() && s[i + 1] == v {
                continue;
            }
            x.push(v);
            p.push((i + 1) as f64 / n);
        }
        EmpiricalCdf { x, p }
    }

    pub fn eval(&self, v: f64) -> f64 {
        let k = self.x.partition_point(|&x| x <= v);
        if k == 0 {
            0.0
        } else {
            self.p[k - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub n_trials: usize,
    pub n_flagged: usize,
    pub per_method: Vec<MethodStats>,
    pub histogram: Histogram,
    pub cdf: BTreeMap<Method, EmpiricalCdf>,
}

impl CampaignSummary {
    pub fn stats(&self, m: Method) -> &MethodStats {
        self.per_method
            .iter()
            .find(|s| s.method == m)
            .expect("summary covers every method")
    }

    /// Fraction of unflagged trials where `a` is strictly better than `b`.
    pub fn win_rate(&self, a: Method, b: Method) -> f64 {
        // strict comparison: a method never beats itself
        self.stats(a).win_rate.get(&b).copied().unwrap_or(0.0)
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Upper quantile of the pooled costs that sets the last histogram edge.
pub const HISTOGRAM_UPPER_QUANTILE: f64 = 0.995;

pub fn summarize(rows: &[TrialRow], n_bins: usize) -> Result<CampaignSummary> {
    if n_bins < 1 {
        return Err(Error::Config("n_bins must be ≥ 1".into()));
    }
    let valid: Vec<&TrialRow> = rows
        .iter()
        .filter(|r| r.flag.is_none() && r.j.iter().all(|v| v.is_finite()))
        .collect();
    if valid.is_empty() {
        return Err(Error::EmptyCampaign);
    }
    let n = valid.len();
    let samples: Vec<Vec<f64>> = Method::ALL
        .iter()
        .map(|m| valid.iter().map(|r| r.j[m.index()]).collect())
        .collect();

    let per_method = Method::ALL
        .iter()
        .map(|&m| {
            let mut s = samples[m.index()].clone();
            s.sort_by(f64::total_cmp);
            let win_rate = Method::ALL
                .iter()
                .filter(|&&o| o != m)
                .map(|&o| {
                    let wins = valid
                        .iter()
                        .filter(|r| r.j[m.index()] < r.j[o.index()])
                        .count();
                    (o, wins as f64 / n as f64)
                })
                .collect();
            MethodStats {
                method: m,
                median: quantile(&s, 0.5),
                mean: s.iter().sum::<f64>() / n as f64,
                q05: quantile(&s, 0.05),
                q25: quantile(&s, 0.25),
                q75: quantile(&s, 0.75),
                q95: quantile(&s, 0.95),
                win_rate,
            }
        })
        .collect();

    let mut pooled: Vec<f64> = samples.concat();
    pooled.sort_by(f64::total_cmp);
    // a single trial keeps every sample in one bin
    let mut upper = if n == 1 {
        *pooled.last().unwrap()
    } else {
        quantile(&pooled, HISTOGRAM_UPPER_QUANTILE)
    };
    if !(upper > 0.0) {
        upper = *pooled.last().unwrap();
    }
    if !(upper > 0.0) {
        upper = 1.0;
    }
    let bins = if n == 1 { 1 } else { n_bins };
    let width = upper / bins as f64;
    let bin_edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { upper } else { i as f64 * width })
        .collect();
    let mut density = BTreeMap::new();
    let mut overflow = BTreeMap::new();
    for &m in &Method::ALL {
        let mut counts = vec![0usize; bins];
        let mut over = 0;
        for &v in &samples[m.index()] {
            if v > upper {
                over += 1;
                continue;
            }
            let k = ((v / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        let included = (n - over).max(1) as f64;
        let d: Vec<f64> = counts
            .iter()
            .enumerate()
            .map(|(k, &c)| c as f64 / (included * (bin_edges[k + 1] - bin_edges[k])))
            .collect();
        density.insert(m, d);
        overflow.insert(m, over);
    }

    let cdf = Method::ALL
        .iter()
        .map(|&m| (m, EmpiricalCdf::from_samples(&samples[m.index()])))
        .collect();

    Ok(CampaignSummary {
        n_trials: rows.len(),
        n_flagged: rows.len() - n,
        per_method,
        histogram: Histogram {
            bin_edges,
            density,
            overflow,
        },
        cdf,
    })
}

pub fn summarize_results(results: &[TrialResult], n_bins: usize) -> Result<CampaignSummary> {
    let rows: Vec<TrialRow> = results.iter().map(TrialResult::row).collect();
    summarize(&rows, n_bins)
}
