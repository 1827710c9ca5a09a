use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::ExperimentConfig;
use crate::gp::KernelParams;
use crate::grid::{f1_score, F1Score};
use crate::lse::Observation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub level: Vec<f64>,
    pub truth: u8,
    pub pred: u8,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssuranceReport {
    pub config: ExperimentConfig,
    /// The threshold actually used, after resolving relative thresholds.
    pub threshold: f64,
    pub dimensions: Vec<String>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub predicted_positives: usize,
    pub oracle_calls: u64,
    pub assurance_set_size: Option<usize>,
    pub synthetic_accepted: Option<usize>,
    pub kernel: Option<KernelParams>,
    pub history: Vec<Observation>,
    pub points: Vec<GridRecord>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

impl AssuranceReport {
    /// Scores recomputed from the per-point labels.
    pub fn rescore(&self) -> Result<F1Score> {
        let truth: Vec<u8> = self.points.iter().map(|p| p.truth).collect();
        let pred: Vec<u8> = self.points.iter().map(|p| p.pred).collect();
        f1_score(&truth, &pred)
    }

    /// The report with timing cleared, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        AssuranceReport {
            wall_clock_seconds: 0.0,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format(0, format!("report JSON: {e}")))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = self.dimensions.clone();
        header.extend(["truth", "pred", "mu", "sigma"].map(String::from));
        w.write_record(&header).map_err(csv_err)?;
        for p in &self.points {
            let mut row: Vec<String> = p.level.iter().map(f64::to_string).collect();
            row.push(p.truth.to_string());
            row.push(p.pred.to_string());
            row.push(p.mu.to_string());
            row.push(p.sigma.to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::input(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn write(&self, path: &Path, format: ReportFormat) -> Result<()> {
        let body = match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv()?,
        };
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Writes `report.json` and `report.csv` under the config's run
    /// directory and returns that directory.
    pub fn persist(&self, out: &Path) -> Result<PathBuf> {
        let dir = self.config.run_dir(out);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        self.write(&dir.join("report.json"), ReportFormat::Json)?;
        self.write(&dir.join("report.csv"), ReportFormat::Csv)?;
        Ok(dir)
    }
}

fn csv_err(e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte());
    Error::format(offset, e.to_string())
}

/// Parses the per-point CSV back into dimension names and records.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<GridRecord>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(String::from)
        .collect();
    if header.len() < 5 || header[header.len() - 4..] != ["truth", "pred", "mu", "sigma"] {
        return Err(Error::format(
            0,
            "CSV header must end with truth,pred,mu,sigma",
        ));
    }
    let d = header.len() - 4;
    let mut records = Vec::new();
    for row in r.records() {
        let row = row.map_err(csv_err)?;
        let offset = row.position().map_or(0, |p| p.byte());
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse()
                .map_err(|_| Error::format(offset, format!("`{}` is not a number", &row[i])))
        };
        let label = |i: usize| -> Result<u8> {
            match &row[i] {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(Error::format(
                    offset,
                    format!("`{other}` is not a 0/1 label"),
                )),
            }
        };
        records.push(GridRecord {
            level: (0..d).map(num).collect::<Result<_>>()?,
            truth: label(d)?,
            pred: label(d + 1)?,
            mu: num(d + 2)?,
            sigma: num(d + 3)?,
        });
    }
    Ok((header[..d].to_vec(), records))
}
