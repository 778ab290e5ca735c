//! Learner CSV files: header `learner_id,y,x1,...,xp`, one row per observation.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::SubDataset;
use crate::error::{Error, Result};

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        line,
        reason: reason.into(),
    }
}

fn parse_cell(cell: &str, line: usize, column: &str) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("column {column}: not a number: {cell:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("column {column}: non-finite value")));
    }
    Ok(v)
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

/// Parse learner rows from any reader. Learners are returned sorted by id;
/// rows of one learner keep their file order.
pub fn parse_learners<R: Read>(input: R) -> Result<Vec<SubDataset>> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(parse_err(1, "empty file"));
    }
    let id_col = headers
        .iter()
        .position(|h| h == "learner_id")
        .ok_or_else(|| parse_err(1, "missing learner_id column"))?;
    let y_col = headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| parse_err(1, "missing y column"))?;
    let x_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != id_col && c != y_col).collect();
    if x_cols.is_empty() {
        return Err(parse_err(1, "no feature columns"));
    }
    let width = headers.len();

    let mut groups: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != width {
            return Err(parse_err(
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        let id_raw = parse_cell(&rec[id_col], line, "learner_id")?;
        if id_raw < 0.0 || id_raw.fract() != 0.0 {
            return Err(parse_err(line, format!("learner_id must be a non-negative integer, got {}", &rec[id_col])));
        }
        let entry = groups.entry(id_raw as usize).or_default();
        entry.1.push(parse_cell(&rec[y_col], line, "y")?);
        for &c in &x_cols {
            entry.0.push(parse_cell(&rec[c], line, &headers[c])?);
        }
    }
    if groups.is_empty() {
        return Err(parse_err(2, "no data rows"));
    }
    let p = x_cols.len();
    groups
        .into_iter()
        .map(|(id, (xs, ys))| {
            let n = ys.len();
            let x = Array2::from_shape_vec((n, p), xs).expect("row-major fill");
            SubDataset::new(id, x, Array1::from(ys))
        })
        .collect()
}

pub fn read_learners_csv(path: impl AsRef<Path>) -> Result<Vec<SubDataset>> {
    parse_learners(File::open(path)?)
}

pub fn write_learners<W: Write>(learners: &[SubDataset], out: W) -> Result<()> {
    let p = learners.first().map(|d| d.dim()).unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["learner_id".to_string(), "y".to_string()];
    header.extend((1..=p).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for d in learners {
        if d.dim() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: d.dim(),
            });
        }
        for i in 0..d.len() {
            let mut row = vec![d.learner_id().to_string(), d.responses()[i].to_string()];
            row.extend(d.features().row(i).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Values are written in shortest round-trip form, so reading back is exact.
pub fn write_learners_csv(learners: &[SubDataset], path: impl AsRef<Path>) -> Result<()> {
    write_learners(learners, File::create(path)?)
}

/// Feature rows for prediction: columns `x1..xp`, optionally with a
/// `learner_id` column routing each row to that learner's cluster.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub learner_ids: Option<Vec<usize>>,
    pub features: Array2<f64>,
}

pub fn parse_features<R: Read>(input: R) -> Result<FeatureTable> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(parse_err(1, "empty file"));
    }
    let id_col = headers.iter().position(|h| h == "learner_id");
    let x_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| Some(c) != id_col && &headers[c] != "y")
        .collect();
    let width = headers.len();
    let mut ids = Vec::new();
    let mut xs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != width {
            return Err(parse_err(line, format!("expected {width} fields, found {}", rec.len())));
        }
        if let Some(c) = id_col {
            ids.push(parse_cell(&rec[c], line, "learner_id")? as usize);
        }
        for &c in &x_cols {
            xs.push(parse_cell(&rec[c], line, &headers[c])?);
        }
    }
    let n = xs.len() / x_cols.len().max(1);
    if n == 0 {
        return Err(parse_err(2, "no data rows"));
    }
    Ok(FeatureTable {
        learner_ids: id_col.map(|_| ids),
        features: Array2::from_shape_vec((n, x_cols.len()), xs).expect("row-major fill"),
    })
}

pub fn read_features_csv(path: impl AsRef<Path>) -> Result<FeatureTable> {
    parse_features(File::open(path)?)
}
