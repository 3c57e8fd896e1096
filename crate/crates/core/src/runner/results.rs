//! The per-round results table.

use std::io::Write;
use std::path::Path;

use crate::active::RoundRecord;
use crate::error::{Error, Result};

pub const RESULTS_HEADER: &str =
    "round,labels,accuracy,precision_macro,f1_macro,ece,ece_calibrated,acquisition,estimator,mode,seconds";

/// Index of the wall-clock column, the only one allowed to differ between reruns.
pub const SECONDS_COLUMN: usize = 10;

fn num(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn format_row(r: &RoundRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{:.3}",
        r.round,
        r.labels,
        num(r.accuracy),
        num(r.precision_macro),
        num(r.f1_macro),
        num(r.ece),
        r.ece_calibrated.map(num).unwrap_or_default(),
        r.acquisition.as_str(),
        r.estimator.as_str(),
        r.mode.as_str(),
        r.seconds,
    )
}

/// Header plus one line per record.
pub fn write_results(records: &[RoundRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::from(RESULTS_HEADER);
    text.push('\n');
    for r in records {
        text.push_str(&format_row(r));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Appends rows as they arrive and flushes after each one.
pub struct ResultsWriter {
    file: std::fs::File,
    path: std::path::PathBuf,
}

impl ResultsWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(file, "{RESULTS_HEADER}").map_err(|e| Error::io(&path, e))?;
        file.flush().map_err(|e| Error::io(&path, e))?;
        Ok(Self { file, path })
    }

    pub fn append(&mut self, r: &RoundRecord) -> Result<()> {
        writeln!(self.file, "{}", format_row(r)).map_err(|e| Error::io(&self.path, e))?;
        self.file.sync_data().map_err(|e| Error::io(&self.path, e))
    }
}

/// One parsed results line.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub round: usize,
    pub labels: usize,
    pub accuracy: f64,
    pub precision_macro: f64,
    pub f1_macro: f64,
    pub ece: f64,
    pub ece_calibrated: Option<f64>,
    pub acquisition: String,
    pub estimator: String,
    pub mode: String,
    pub seconds: f64,
}

pub fn parse_results(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(RESULTS_HEADER) {
        return Err(Error::Data("results file does not start with the expected header".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = |what: &str| Error::Data(format!("results line {}: bad {what}", i + 2));
            if f.len() != 11 {
                return Err(bad("field count"));
            }
            let float = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
            Ok(ResultRow {
                round: f[0].parse().map_err(|_| bad("round"))?,
                labels: f[1].parse().map_err(|_| bad("labels"))?,
                accuracy: float(f[2], "accuracy")?,
                precision_macro: float(f[3], "precision_macro")?,
                f1_macro: float(f[4], "f1_macro")?,
                ece: float(f[5], "ece")?,
                ece_calibrated: if f[6].is_empty() { None } else { Some(float(f[6], "ece_calibrated")?) },
                acquisition: f[7].to_string(),
                estimator: f[8].to_string(),
                mode: f[9].to_string(),
                seconds: float(f[10], "seconds")?,
            })
        })
        .collect()
}

/// The file with the wall-clock column blanked, for reproducibility checks.
pub fn without_seconds(text: &str) -> String {
    text.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            if f.len() > SECONDS_COLUMN {
                f[SECONDS_COLUMN] = "";
            }
            f.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}
