//! CSV reports.
//!
//! Every file starts with one comment line carrying the report format version
//! and the config hash, then a header row.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::training::EpochMetrics;

pub const REPORT_VERSION: u32 = 1;

/// In-memory table written in one go so that files are byte-stable.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self, kind: &str, config_hash: &str) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        writeln!(out, "# qsched {kind} format_version={REPORT_VERSION} config_sha256={config_hash}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| e.into_error().into())
    }

    pub fn write(&self, path: &Path, kind: &str, config_hash: &str) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_bytes(kind, config_hash)?)?;
        Ok(())
    }

    /// Parse a report written by [`Table::write`], skipping the comment line.
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

pub const METRICS_COLUMNS: &[&str] =
    &["epoch", "mean_loss", "mean_reward", "val_det", "val_sto", "epsilon", "alpha", "seconds"];

pub fn metrics_table(history: &[EpochMetrics]) -> Table {
    let mut t = Table::new(METRICS_COLUMNS);
    for m in history {
        t.push(vec![
            m.epoch.to_string(),
            m.mean_loss.to_string(),
            m.mean_reward.to_string(),
            m.val_det.to_string(),
            m.val_sto.to_string(),
            m.epsilon.to_string(),
            m.alpha.to_string(),
            m.seconds.to_string(),
        ]);
    }
    t
}

/// Sample mean and standard deviation (n - 1 denominator; zero for one value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
