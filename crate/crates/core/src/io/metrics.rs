use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of a run's training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub env_steps: u64,
    /// Mean raw return of the last 100 finished episodes (NaN before any).
    pub mean_episodic_return: f64,
    pub episodes_completed: u64,
    pub loss_ppo: f64,
    pub loss_value: f64,
    pub loss_kl: f64,
    pub loss_entropy: f64,
    pub wall_time_s: f64,
}

pub const METRICS_HEADER: [&str; 9] = [
    "run_id",
    "env_steps",
    "mean_episodic_return",
    "episodes_completed",
    "loss_ppo",
    "loss_value",
    "loss_kl",
    "loss_entropy",
    "wall_time_s",
];

/// Append-only CSV sink. Every row is flushed as one complete line so
/// readers can inspect the file mid-run.
pub struct MetricsWriter {
    file: File,
    last_step: Option<u64>,
}

impl MetricsWriter {
    /// Creates (truncating) `path` and writes the header.
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = File::create(path)?;
        writeln!(file, "{}", METRICS_HEADER.join(","))?;
        file.flush()?;
        Ok(Self { file, last_step: None })
    }

    /// Opens an existing metrics file for appending.
    pub fn append(path: &Path) -> Result<Self> {
        let last_step = read_metrics(path)?.last().map(|r| r.env_steps);
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self { file, last_step })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        if self.last_step.is_some_and(|s| row.env_steps <= s) {
            return Err(Error::Usage(format!(
                "env_steps must increase within a run ({} after {})",
                row.env_steps,
                self.last_step.unwrap_or_default()
            )));
        }
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.serialize(row)?;
        let line = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        self.file.write_all(&line)?;
        self.file.flush()?;
        self.last_step = Some(row.env_steps);
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != METRICS_HEADER {
        return Err(Error::Format(format!("unexpected metrics header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
