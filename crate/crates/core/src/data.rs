//! CSV ingestion, covariate encoding and length-of-stay standardization.
//!
//! Numeric columns pass through; any column with a non-numeric value is
//! categorical and expands to indicator columns named `col=level`, one per
//! level except the lexicographically first (the reference level).

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::DesignMatrix;
use crate::stepdist::StepDistribution;

pub const INTERCEPT: &str = "(intercept)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnEncoding {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

/// How raw covariate columns become design columns.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Encoding {
    pub intercept: bool,
    pub columns: Vec<ColumnEncoding>,
}

impl Encoding {
    /// Names of the expanded design columns.
    pub fn design_columns(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.intercept {
            out.push(INTERCEPT.to_string());
        }
        for c in &self.columns {
            match &c.kind {
                ColumnKind::Numeric => out.push(c.name.clone()),
                ColumnKind::Categorical { levels } => {
                    out.extend(levels.iter().skip(1).map(|l| format!("{}={l}", c.name)))
                }
            }
        }
        out
    }
}

/// Which columns of a CSV file play which role.
#[derive(Debug, Clone, Default)]
pub struct DatasetSpec {
    pub response: Option<String>,
    pub index_col: Option<String>,
    pub hour_col: Option<String>,
    /// Extra columns to leave out of the design (ids, point forecasts, ...).
    pub exclude: Vec<String>,
    /// Covariate columns; `None` means every column not used otherwise.
    pub covariates: Option<Vec<String>>,
    pub intercept: bool,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub headers: Vec<String>,
    pub design: DesignMatrix,
    pub encoding: Encoding,
    pub response: Option<Vec<f64>>,
    pub index: Option<Vec<f64>>,
    pub hours: Option<Vec<f64>>,
    raw: Vec<csv::StringRecord>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.design.n_rows()
    }

    /// Numeric values of an arbitrary column.
    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        let pos = column_position(&self.headers, name)?;
        self.raw
            .iter()
            .enumerate()
            .map(|(i, rec)| parse_number(rec.get(pos).unwrap_or(""), i + 1, name))
            .collect()
    }

    /// Keeps only the listed rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let pick = |v: &Option<Vec<f64>>| v.as_ref().map(|v| rows.iter().map(|&i| v[i]).collect());
        Dataset {
            headers: self.headers.clone(),
            design: self.design.select_rows(rows),
            encoding: self.encoding.clone(),
            response: pick(&self.response),
            index: pick(&self.index),
            hours: pick(&self.hours),
            raw: rows.iter().map(|&i| self.raw[i].clone()).collect(),
        }
    }
}

fn column_position(headers: &[String], name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema(format!("column `{name}` not found in header {headers:?}")))
}

fn parse_number(raw: &str, row: usize, column: &str) -> Result<f64> {
    let s = raw.trim();
    if s.is_empty() {
        return Err(Error::Data {
            row,
            column: column.to_string(),
            message: "missing value".into(),
        });
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Data {
            row,
            column: column.to_string(),
            message: format!("cannot parse `{s}` as a finite number"),
        }),
    }
}

/// Reads a CSV file with a header row. With `encoding = None` the covariate
/// encoding is inferred (training); otherwise the given encoding is applied
/// (prediction), and unseen categorical levels are data errors.
pub fn ingest(path: &Path, spec: &DatasetSpec, encoding: Option<&Encoding>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let raw = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    from_records(headers, raw, spec, encoding)
}

/// Same as [`ingest`] for in-memory CSV text.
pub fn ingest_str(text: &str, spec: &DatasetSpec, encoding: Option<&Encoding>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let raw = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    from_records(headers, raw, spec, encoding)
}

fn from_records(
    headers: Vec<String>,
    raw: Vec<csv::StringRecord>,
    spec: &DatasetSpec,
    encoding: Option<&Encoding>,
) -> Result<Dataset> {
    for (i, rec) in raw.iter().enumerate() {
        if rec.len() != headers.len() {
            return Err(Error::Data {
                row: i + 1,
                column: String::new(),
                message: format!("{} fields, header has {}", rec.len(), headers.len()),
            });
        }
    }
    let numeric = |name: &str| -> Result<Vec<f64>> {
        let pos = column_position(&headers, name)?;
        raw.iter()
            .enumerate()
            .map(|(i, rec)| parse_number(&rec[pos], i + 1, name))
            .collect()
    };
    let response = spec.response.as_deref().map(numeric).transpose()?;
    let index = spec.index_col.as_deref().map(numeric).transpose()?;
    let hours = spec.hour_col.as_deref().map(numeric).transpose()?;

    let encoding = match encoding {
        Some(e) => e.clone(),
        None => infer_encoding(&headers, &raw, spec)?,
    };
    let design = encode(&headers, &raw, &encoding)?;

    Ok(Dataset {
        headers,
        design,
        encoding,
        response,
        index,
        hours,
        raw,
    })
}

fn infer_encoding(
    headers: &[String],
    raw: &[csv::StringRecord],
    spec: &DatasetSpec,
) -> Result<Encoding> {
    let reserved: Vec<&str> = [&spec.response, &spec.index_col, &spec.hour_col]
        .into_iter()
        .flatten()
        .map(String::as_str)
        .chain(spec.exclude.iter().map(String::as_str))
        .collect();
    let names: Vec<String> = match &spec.covariates {
        Some(c) => c.clone(),
        None => headers
            .iter()
            .filter(|h| !reserved.contains(&h.as_str()))
            .cloned()
            .collect(),
    };
    let mut columns = Vec::with_capacity(names.len());
    for name in names {
        let pos = column_position(headers, &name)?;
        if let Some(i) = raw.iter().position(|r| r[pos].trim().is_empty()) {
            return Err(Error::Data {
                row: i + 1,
                column: name,
                message: "missing value".into(),
            });
        }
        let is_numeric = raw.iter().all(|r| r[pos].trim().parse::<f64>().is_ok());
        let kind = if is_numeric {
            ColumnKind::Numeric
        } else {
            let levels: BTreeSet<String> = raw.iter().map(|r| r[pos].trim().to_string()).collect();
            ColumnKind::Categorical {
                levels: levels.into_iter().collect(),
            }
        };
        columns.push(ColumnEncoding { name, kind });
    }
    Ok(Encoding {
        intercept: spec.intercept,
        columns,
    })
}

fn encode(headers: &[String], raw: &[csv::StringRecord], enc: &Encoding) -> Result<DesignMatrix> {
    let names = enc.design_columns();
    let positions = enc
        .columns
        .iter()
        .map(|c| column_position(headers, &c.name))
        .collect::<Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity(raw.len() * names.len());
    for (i, rec) in raw.iter().enumerate() {
        if enc.intercept {
            data.push(1.0);
        }
        for (c, &pos) in enc.columns.iter().zip(&positions) {
            let cell = rec[pos].trim();
            match &c.kind {
                ColumnKind::Numeric => data.push(parse_number(cell, i + 1, &c.name)?),
                ColumnKind::Categorical { levels } => {
                    let level = levels.iter().position(|l| l == cell).ok_or_else(|| Error::Data {
                        row: i + 1,
                        column: c.name.clone(),
                        message: format!("unknown level `{cell}`"),
                    })?;
                    data.extend((1..levels.len()).map(|k| f64::from(k == level)));
                }
            }
        }
    }
    DesignMatrix::from_row_major(names, raw.len(), data)
}

/// Standardized length of stay `y - 1 + h/24`, measured from the first
/// midnight after admission. Rows with a nonpositive result are dropped by
/// callers.
pub fn standardize_los(y_raw: f64, hour: f64) -> Result<f64> {
    if !(0.0..=23.0).contains(&hour) {
        return Err(Error::invalid(format!("admission hour {hour} outside [0, 23]")));
    }
    if !y_raw.is_finite() || y_raw < 0.0 {
        return Err(Error::invalid(format!("length of stay {y_raw} must be nonnegative")));
    }
    Ok(y_raw - 1.0 + hour / 24.0)
}

/// `P(Y > 1 + t | Y > 1)` for the raw length of stay, from a forecast of the
/// standardized length of stay (conditioned on a positive value):
/// `S(t + h/24) / S(h/24)` with `S = 1 - F`.
pub fn destandardize_survival(f_tilde: &StepDistribution, hour: f64, t: f64) -> Result<f64> {
    if !(0.0..=23.0).contains(&hour) {
        return Err(Error::invalid(format!("admission hour {hour} outside [0, 23]")));
    }
    let shift = hour / 24.0;
    let denom = 1.0 - f_tilde.cdf_at(shift);
    if denom <= 0.0 {
        return Err(Error::DegenerateConditioning(format!(
            "forecast puts no mass above {shift}"
        )));
    }
    Ok((1.0 - f_tilde.cdf_at(t + shift)) / denom)
}
