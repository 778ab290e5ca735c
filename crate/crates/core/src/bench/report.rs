use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One replication of one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    /// Cell label such as `snr=16 p=5 n=50`.
    pub cell: String,
    pub replication: usize,
    pub seed: u64,
    pub k_hat: Option<usize>,
    pub accuracy: Option<f64>,
    pub exact: Option<bool>,
    /// Test MSE per arm.
    pub mse: BTreeMap<String, f64>,
}

impl Record {
    pub fn new(cell: impl Into<String>, replication: usize, seed: u64) -> Self {
        Record {
            cell: cell.into(),
            replication,
            seed,
            k_hat: None,
            accuracy: None,
            exact: None,
            mse: BTreeMap::new(),
        }
    }

    /// Every numeric metric of the record, keyed by name.
    pub fn metrics(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        if let Some(e) = self.exact {
            out.push(("exact".to_string(), if e { 1.0 } else { 0.0 }));
        }
        if let Some(a) = self.accuracy {
            out.push(("accuracy".to_string(), a));
        }
        if let Some(k) = self.k_hat {
            out.push(("k_hat".to_string(), k as f64));
        }
        for (arm, v) in &self.mse {
            out.push((format!("mse:{arm}"), *v));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub cell: String,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1).
    pub sd: f64,
    /// `sd / sqrt(count)`.
    pub se: f64,
}

/// Mean, sd and se of every metric per cell, cells in first-seen order.
pub fn aggregate(records: &[Record]) -> Vec<Aggregate> {
    let mut cells: Vec<String> = Vec::new();
    let mut values: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        let c = match cells.iter().position(|c| *c == r.cell) {
            Some(c) => c,
            None => {
                cells.push(r.cell.clone());
                cells.len() - 1
            }
        };
        for (m, v) in r.metrics() {
            values.entry((c, m)).or_default().push(v);
        }
    }
    values
        .into_iter()
        .map(|((c, metric), xs)| {
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let sd = if n > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            Aggregate {
                cell: cells[c].clone(),
                metric,
                count: n,
                mean,
                sd,
                se: sd / (n as f64).sqrt(),
            }
        })
        .collect()
}

/// Format with 4 significant digits.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        return format!("{x:.3e}");
    }
    let decimals = (3 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub replications: usize,
    pub records: Vec<Record>,
    pub aggregates: Vec<Aggregate>,
    pub runtime_secs: f64,
    /// Extra CSV files (name, contents) written next to the report.
    #[serde(skip)]
    pub files: Vec<(String, String)>,
}

impl ExperimentReport {
    pub fn new(experiment: &str, replications: usize, records: Vec<Record>, runtime_secs: f64) -> Self {
        ExperimentReport {
            experiment: experiment.to_string(),
            replications,
            aggregates: aggregate(&records),
            records,
            runtime_secs,
            files: Vec::new(),
        }
    }

    pub fn find(&self, cell: &str, metric: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.cell == cell && a.metric == metric)
    }

    pub fn mean(&self, cell: &str, metric: &str) -> Option<f64> {
        self.find(cell, metric).map(|a| a.mean)
    }

    pub fn cell_records<'a>(&'a self, cell: &'a str) -> impl Iterator<Item = &'a Record> + 'a {
        self.records.iter().filter(move |r| r.cell == cell)
    }

    /// Human-readable table: one line per cell and metric.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} ({} replications, {:.1}s)",
            self.experiment, self.replications, self.runtime_secs
        );
        let cw = self
            .aggregates
            .iter()
            .map(|a| a.cell.len())
            .max()
            .unwrap_or(4)
            .max(4);
        let mw = self
            .aggregates
            .iter()
            .map(|a| a.metric.len())
            .max()
            .unwrap_or(6)
            .max(6);
        let _ = writeln!(out, "{:<cw$}  {:<mw$}  {:>10}  {:>10}  {:>10}", "cell", "metric", "mean", "se", "sd");
        for a in &self.aggregates {
            let _ = writeln!(
                out,
                "{:<cw$}  {:<mw$}  {:>10}  {:>10}  {:>10}",
                a.cell,
                a.metric,
                sig4(a.mean),
                sig4(a.se),
                sig4(a.sd)
            );
        }
        out
    }

    /// Write `records.jsonl`, `summary.txt`, `report.json` and any extra files.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut rec = std::io::BufWriter::new(std::fs::File::create(dir.join("records.jsonl"))?);
        for r in &self.records {
            serde_json::to_writer(&mut rec, r)?;
            rec.write_all(b"\n")?;
        }
        rec.flush()?;
        std::fs::write(dir.join("summary.txt"), self.summary())?;
        let f = std::io::BufWriter::new(std::fs::File::create(dir.join("report.json"))?);
        serde_json::to_writer_pretty(f, self)?;
        for (name, body) in &self.files {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregates_recompute() {
        let mut records = Vec::new();
        for r in 0..5 {
            let mut rec = Record::new("a", r, r as u64);
            rec.exact = Some(r % 2 == 0);
            rec.mse.insert("x".into(), r as f64);
            records.push(rec);
        }
        let mut b = Record::new("b", 0, 9);
        b.k_hat = Some(3);
        records.push(b);
        let rep = ExperimentReport::new("t", 5, records, 0.0);
        let exact = rep.find("a", "exact").unwrap();
        assert!((exact.mean - 0.6).abs() < 1e-12);
        let mse = rep.find("a", "mse:x").unwrap();
        assert!((mse.mean - 2.0).abs() < 1e-12);
        assert!((mse.sd - 2.5f64.sqrt()).abs() < 1e-12);
        assert!((mse.se - (2.5f64 / 5.0).sqrt()).abs() < 1e-12);
        assert_eq!(rep.find("b", "k_hat").unwrap().count, 1);
        assert_eq!(rep.aggregates[0].cell, "a");
    }

    #[test]
    fn four_significant_digits() {
        assert_eq!(sig4(0.123456), "0.1235");
        assert_eq!(sig4(12.3456), "12.35");
        assert_eq!(sig4(1234.56), "1235");
        assert_eq!(sig4(0.0), "0");
        assert_eq!(sig4(1.5e-7), "1.500e-7");
    }

    #[test]
    fn writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut rep = ExperimentReport::new("t", 1, vec![Record::new("a", 0, 1)], 0.5);
        rep.files.push(("extra.csv".into(), "a,b\n".into()));
        rep.write(dir.path()).unwrap();
        let lines = std::fs::read_to_string(dir.path().join("records.jsonl")).unwrap();
        assert_eq!(lines.lines().count(), 1);
        let back: Record = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
        assert_eq!(back, rep.records[0]);
        assert!(dir.path().join("summary.txt").exists());
        assert_eq!(std::fs::read_to_string(dir.path().join("extra.csv")).unwrap(), "a,b\n");
    }
}
