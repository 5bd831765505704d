//! File formats: `x,y` dataset CSV, single-column input CSV, and the model
//! JSON envelope shared by the GP cascades and the lookup-table baseline.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cascade::{CalibrationDataset, CascadeConfig, CascadeModel, CascadeModelDoc, MethodTag};
use crate::error::{Error, Result};
use crate::gp::GpModelDoc;
use crate::lut::{LookupTable, LutCascade};
use crate::sim::TruthPair;

fn csv_err(path: &str, row: usize, msg: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_string(),
        row,
        msg: msg.into(),
    }
}

/// Reads the named numeric columns. Rows are numbered from 1 for the first
/// data row (the header is row 0).
pub fn read_columns<R: Read>(input: R, path: &str, columns: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| csv_err(path, 0, e.to_string()))?
        .clone();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| csv_err(path, 0, format!("missing column `{c}` in header")))
        })
        .collect::<Result<_>>()?;
    let mut out = vec![Vec::new(); columns.len()];
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| csv_err(path, row, e.to_string()))?;
        for (k, &col) in idx.iter().enumerate() {
            let cell = rec.get(col).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| {
                csv_err(
                    path,
                    row,
                    format!(
                        "column `{}`: `{cell}` is not a number (line {})",
                        columns[k],
                        row + 1
                    ),
                )
            })?;
            if !v.is_finite() {
                return Err(csv_err(
                    path,
                    row,
                    format!("column `{}` is not finite", columns[k]),
                ));
            }
            out[k].push(v);
        }
    }
    Ok(out)
}

pub fn read_dataset<R: Read>(input: R, path: &str) -> Result<CalibrationDataset> {
    let mut cols = read_columns(input, path, &["x", "y"])?;
    let y = cols.pop().unwrap();
    let x = cols.pop().unwrap();
    CalibrationDataset::new(x, y)
}

pub fn read_dataset_file(path: &Path) -> Result<CalibrationDataset> {
    let f = File::open(path)?;
    read_dataset(BufReader::new(f), &path.display().to_string())
}

pub fn write_dataset<W: Write>(d: &CalibrationDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y"]).map_err(to_io)?;
    for (x, y) in d.x().iter().zip(d.y()) {
        w.write_record([x.to_string(), y.to_string()])
            .map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_file(d: &CalibrationDataset, path: &Path) -> Result<()> {
    write_dataset(d, File::create(path)?)
}

fn to_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Writes rows under `header`; every row must match the header width.
pub fn write_table<W: Write>(header: &[&str], rows: &[Vec<f64>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(to_io)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))
            .map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

/// On-disk model: a GP cascade (either method) or the lookup-table cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method_tag", rename_all = "snake_case")]
pub enum ModelFile {
    Bayesian {
        stage_one: GpModelDoc,
        stage_two: GpModelDoc,
        config: CascadeConfig,
    },
    Alt1 {
        stage_one: GpModelDoc,
        stage_two: GpModelDoc,
        config: CascadeConfig,
    },
    Lut {
        stage_one: LookupTable,
        stage_two: LookupTable,
    },
}

/// A loaded, ready-to-apply calibration map.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum CalibrationModel {
    Gp(CascadeModel),
    Lut(LutCascade),
}

impl CalibrationModel {
    pub fn apply(&self, y1: &[f64]) -> Vec<f64> {
        match self {
            CalibrationModel::Gp(m) => m.apply(y1),
            CalibrationModel::Lut(m) => m.apply(y1),
        }
    }

    /// Posterior variance, or `None` for lookup tables.
    pub fn variance(&self, y1: &[f64]) -> Option<Vec<f64>> {
        match self {
            CalibrationModel::Gp(m) => Some(m.apply_variance(y1)),
            CalibrationModel::Lut(_) => None,
        }
    }

    pub fn to_file(&self) -> ModelFile {
        match self {
            CalibrationModel::Gp(m) => {
                let doc = m.to_doc();
                match doc.method_tag {
                    MethodTag::Bayesian => ModelFile::Bayesian {
                        stage_one: doc.stage_one,
                        stage_two: doc.stage_two,
                        config: doc.config,
                    },
                    MethodTag::Alt1 => ModelFile::Alt1 {
                        stage_one: doc.stage_one,
                        stage_two: doc.stage_two,
                        config: doc.config,
                    },
                }
            }
            CalibrationModel::Lut(l) => ModelFile::Lut {
                stage_one: l.stage_one.clone(),
                stage_two: l.stage_two.clone(),
            },
        }
    }

    pub fn from_file(f: &ModelFile) -> Result<Self> {
        let gp =
            |method_tag, stage_one: &GpModelDoc, stage_two: &GpModelDoc, config: &CascadeConfig| {
                CascadeModel::from_doc(&CascadeModelDoc {
                    method_tag,
                    stage_one: stage_one.clone(),
                    stage_two: stage_two.clone(),
                    config: config.clone(),
                })
                .map(CalibrationModel::Gp)
            };
        match f {
            ModelFile::Bayesian {
                stage_one,
                stage_two,
                config,
            } => gp(MethodTag::Bayesian, stage_one, stage_two, config),
            ModelFile::Alt1 {
                stage_one,
                stage_two,
                config,
            } => gp(MethodTag::Alt1, stage_one, stage_two, config),
            ModelFile::Lut {
                stage_one,
                stage_two,
            } => Ok(CalibrationModel::Lut(LutCascade {
                stage_one: LookupTable::new(
                    stage_one.breakpoints().to_vec(),
                    stage_one.values().to_vec(),
                    stage_one.extrapolation(),
                )?,
                stage_two: LookupTable::new(
                    stage_two.breakpoints().to_vec(),
                    stage_two.values().to_vec(),
                    stage_two.extrapolation(),
                )?,
            })),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        Self::from_file(&f)
    }
}

pub fn read_truth(text: &str) -> Result<TruthPair> {
    let p: TruthPair = serde_json::from_str(text)?;
    TruthPair::new(p.sensor1, p.sensor2, p.range)
}
