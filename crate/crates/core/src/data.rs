//! Observed-data records, the canonical dataset container and CSV ingestion.
//!
//! A record is the tuple `(c, r_obs, z, w, s, x, delta)`. Missing values are
//! written as the literal token `NA`; empty cells are rejected.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Token used for missing values in CSV input and output.
pub const NA: &str = "NA";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("row {row}: column `{column}` has malformed value `{value}`")]
    MalformedRow {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: {reason}")]
    InvariantViolation { row: usize, reason: String },
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("records disagree on covariate dimensions (row {row})")]
    DimensionMismatch { row: usize },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Survival outcome `(x, delta)` with `x = min(T, C)` and `delta = 1{T <= C}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub x: f64,
    pub event: bool,
}

/// One subject's observed data.
///
/// `w` entries may be missing only for observed non-dropouts (`r_obs = true`).
/// `source_row` is the 1-based data row the record came from (0 when the
/// record was built in memory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedRecord {
    pub c: f64,
    pub r_obs: bool,
    pub z: Vec<f64>,
    pub w: Vec<Option<f64>>,
    pub s: bool,
    pub outcome: Option<Outcome>,
    pub source_row: usize,
}

impl ObservedRecord {
    /// Complete case: survival data observed (`r_obs = 1` or double-sampled).
    pub fn is_complete(&self) -> bool {
        self.outcome.is_some()
    }

    /// Stratum index used throughout the crate: 0 for observed dropouts,
    /// 1 for observed non-dropouts.
    pub fn stratum(&self) -> usize {
        usize::from(self.r_obs)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(format!("c must be a positive finite number, got {}", self.c));
        }
        if self.r_obs && self.s {
            return Err("s = 1 is not allowed when r_obs = 1".into());
        }
        if let Some(v) = self.z.iter().find(|v| !v.is_finite()) {
            return Err(format!("z contains non-finite value {v}"));
        }
        for w in self.w.iter() {
            match w {
                Some(v) if !v.is_finite() => {
                    return Err(format!("w contains non-finite value {v}"))
                }
                None if !self.r_obs => {
                    return Err("w may only be NA when r_obs = 1".into());
                }
                _ => {}
            }
        }
        let dropout_unsampled = !self.r_obs && !self.s;
        match (dropout_unsampled, self.outcome) {
            (true, Some(_)) => Err("(x, delta) must be NA when r_obs = 0 and s = 0".into()),
            (false, None) => Err("(x, delta) must be observed unless r_obs = 0 and s = 0".into()),
            (_, Some(o)) if !(o.x.is_finite() && o.x > 0.0) => {
                Err(format!("x must be positive, got {}", o.x))
            }
            (_, Some(o)) if o.x > self.c => Err(format!("x = {} exceeds c = {}", o.x, self.c)),
            _ => Ok(()),
        }
    }

    fn block(&self) -> u8 {
        match (self.r_obs, self.s) {
            (false, true) => 0,
            (false, false) => 1,
            (true, _) => 2,
        }
    }
}

/// Validated records in canonical order: double-sampled dropouts, then
/// unsampled dropouts, then observed non-dropouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<ObservedRecord>,
    z_dim: usize,
    w_dim: usize,
    m: usize,
    m1: usize,
}

impl Dataset {
    /// Validates every record and returns the canonically ordered dataset.
    pub fn from_records(records: Vec<ObservedRecord>) -> Result<Self, DataError> {
        let first = records.first().ok_or(DataError::EmptyDataset)?;
        let (z_dim, w_dim) = (first.z.len(), first.w.len());
        for (i, rec) in records.iter().enumerate() {
            let row = if rec.source_row > 0 { rec.source_row } else { i + 1 };
            if rec.z.len() != z_dim || rec.w.len() != w_dim {
                return Err(DataError::DimensionMismatch { row });
            }
            rec.validate()
                .map_err(|reason| DataError::InvariantViolation { row, reason })?;
        }
        Ok(canonical_sort(records))
    }

    pub fn records(&self) -> &[ObservedRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ObservedRecord> {
        self.records
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    /// Number of observed dropouts.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of double-sampled dropouts.
    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn z_dim(&self) -> usize {
        self.z_dim
    }

    pub fn w_dim(&self) -> usize {
        self.w_dim
    }

    /// Records of one stratum (0 = observed dropouts, 1 = non-dropouts).
    pub fn stratum(&self, r: usize) -> &[ObservedRecord] {
        if r == 0 {
            &self.records[..self.m]
        } else {
            &self.records[self.m..]
        }
    }

    pub fn complete_cases(&self) -> impl Iterator<Item = &ObservedRecord> {
        self.records.iter().filter(|r| r.is_complete())
    }
}

/// Stable reorder into the canonical block order and count `n, m, m1`.
///
/// Records are assumed individually valid; dimensions are taken from the
/// first record.
pub fn canonical_sort(mut records: Vec<ObservedRecord>) -> Dataset {
    records.sort_by_key(ObservedRecord::block);
    let m = records.iter().filter(|r| !r.r_obs).count();
    let m1 = records.iter().filter(|r| !r.r_obs && r.s).count();
    let (z_dim, w_dim) = records
        .first()
        .map(|r| (r.z.len(), r.w.len()))
        .unwrap_or((0, 0));
    Dataset {
        records,
        z_dim,
        w_dim,
        m,
        m1,
    }
}

/// Column names for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub c: String,
    pub r_obs: String,
    pub s: String,
    pub x: String,
    pub delta: String,
    pub z: Vec<String>,
    pub w: Vec<String>,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        Self {
            c: "c".into(),
            r_obs: "r_obs".into(),
            s: "s".into(),
            x: "x".into(),
            delta: "delta".into(),
            z: Vec::new(),
            w: Vec::new(),
        }
    }
}

impl ColumnSpec {
    pub fn with_covariates(z: &[&str], w: &[&str]) -> Self {
        Self {
            z: z.iter().map(|s| s.to_string()).collect(),
            w: w.iter().map(|s| s.to_string()).collect(),
            ..Self::default()
        }
    }

    fn header(&self) -> Vec<&str> {
        let mut cols = vec![self.c.as_str(), self.r_obs.as_str()];
        cols.extend(self.z.iter().map(String::as_str));
        cols.extend(self.w.iter().map(String::as_str));
        cols.extend([self.s.as_str(), self.x.as_str(), self.delta.as_str()]);
        cols
    }
}

pub fn parse_csv(path: impl AsRef<Path>, spec: &ColumnSpec) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    parse_csv_reader(file, spec)
}

pub fn parse_csv_reader<R: Read>(reader: R, spec: &ColumnSpec) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let c_col = find(&spec.c)?;
    let r_col = find(&spec.r_obs)?;
    let s_col = find(&spec.s)?;
    let x_col = find(&spec.x)?;
    let d_col = find(&spec.delta)?;
    let z_cols = spec.z.iter().map(|n| find(n)).collect::<Result<Vec<_>, _>>()?;
    let w_cols = spec.w.iter().map(|n| find(n)).collect::<Result<Vec<_>, _>>()?;

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let cell = |col: usize| -> Result<Option<f64>, DataError> {
            let raw = row.get(col).unwrap_or("");
            let malformed = || DataError::MalformedRow {
                row: row_no,
                column: headers.get(col).unwrap_or("?").to_string(),
                value: raw.to_string(),
            };
            if raw == NA {
                return Ok(None);
            }
            let v: f64 = raw.parse().map_err(|_| malformed())?;
            if !v.is_finite() {
                return Err(malformed());
            }
            Ok(Some(v))
        };
        let required = |col: usize| -> Result<f64, DataError> {
            cell(col)?.ok_or_else(|| DataError::InvariantViolation {
                row: row_no,
                reason: format!("column `{}` may not be NA", &headers[col]),
            })
        };
        let flag = |col: usize| -> Result<Option<bool>, DataError> {
            match cell(col)? {
                None => Ok(None),
                Some(0.0) => Ok(Some(false)),
                Some(1.0) => Ok(Some(true)),
                Some(_) => Err(DataError::MalformedRow {
                    row: row_no,
                    column: headers[col].to_string(),
                    value: row.get(col).unwrap_or("").to_string(),
                }),
            }
        };
        let required_flag = |col: usize| -> Result<bool, DataError> {
            flag(col)?.ok_or_else(|| DataError::InvariantViolation {
                row: row_no,
                reason: format!("column `{}` may not be NA", &headers[col]),
            })
        };

        let c = required(c_col)?;
        let r_obs = required_flag(r_col)?;
        let s = required_flag(s_col)?;
        let z = z_cols.iter().map(|&k| required(k)).collect::<Result<Vec<_>, _>>()?;
        let w = w_cols.iter().map(|&k| cell(k)).collect::<Result<Vec<_>, _>>()?;
        let outcome = match (cell(x_col)?, flag(d_col)?) {
            (Some(x), Some(event)) => Some(Outcome { x, event }),
            (None, None) => None,
            _ => {
                return Err(DataError::InvariantViolation {
                    row: row_no,
                    reason: "x and delta must be NA jointly".into(),
                })
            }
        };
        records.push(ObservedRecord {
            c,
            r_obs,
            z,
            w,
            s,
            outcome,
            source_row: row_no,
        });
    }
    Dataset::from_records(records)
}

/// Formats an optional value in the CSV dialect (`NA` for missing).
pub fn format_value(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v}"),
        None => NA.to_string(),
    }
}

pub fn write_csv<W: Write>(data: &Dataset, spec: &ColumnSpec, writer: W) -> Result<(), DataError> {
    if spec.z.len() != data.z_dim() || spec.w.len() != data.w_dim() {
        return Err(DataError::DimensionMismatch { row: 0 });
    }
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(spec.header())?;
    let mut line = Vec::with_capacity(5 + data.z_dim() + data.w_dim());
    for rec in data.records() {
        line.clear();
        line.push(format_value(Some(rec.c)));
        line.push(u8::from(rec.r_obs).to_string());
        line.extend(rec.z.iter().map(|&v| format_value(Some(v))));
        line.extend(rec.w.iter().map(|&v| format_value(v)));
        line.push(u8::from(rec.s).to_string());
        match rec.outcome {
            Some(o) => {
                line.push(format_value(Some(o.x)));
                line.push(u8::from(o.event).to_string());
            }
            None => {
                line.push(NA.into());
                line.push(NA.into());
            }
        }
        wtr.write_record(&line)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_csv_path(data: &Dataset, spec: &ColumnSpec, path: impl AsRef<Path>) -> Result<(), DataError> {
    let file = std::fs::File::create(path)?;
    write_csv(data, spec, std::io::BufWriter::new(file))
}

/// One-line summary of the stratum counts.
pub fn describe_counts(data: &Dataset) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "n={} m={} m1={} complete={}",
        data.n(),
        data.m(),
        data.m1(),
        data.complete_cases().count()
    );
    s
}
