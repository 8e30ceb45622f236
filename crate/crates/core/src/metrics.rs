//! JSON-lines metrics records.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    /// Emitted when an episode ends.
    Episode,
    /// Emitted every `train.log_interval` steps once updates have started.
    Losses,
}

/// One line of `metrics.jsonl`. Absent values are omitted from the JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub kind: RecordKind,
    pub step: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_return: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_cost: Option<f64>,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empirical_cvar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critic_cvar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_loss: Option<f64>,
    pub alpha: f64,
}

impl MetricsRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("metrics records always serialize")
    }
}

/// Destination for records; enforces nondecreasing steps.
pub trait MetricsSink {
    fn write(&mut self, rec: &MetricsRecord) -> Result<()>;
}

#[derive(Debug, Default)]
pub struct MemorySink {
    pub records: Vec<MetricsRecord>,
}

impl MetricsSink for MemorySink {
    fn write(&mut self, rec: &MetricsRecord) -> Result<()> {
        check_order(self.records.last().map(|r| r.step), rec.step)?;
        self.records.push(rec.clone());
        Ok(())
    }
}

/// Discards records.
pub struct NullSink;

impl MetricsSink for NullSink {
    fn write(&mut self, _rec: &MetricsRecord) -> Result<()> {
        Ok(())
    }
}

pub struct JsonlSink {
    out: BufWriter<File>,
    last: Option<u64>,
}

impl JsonlSink {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            out: BufWriter::new(File::create(path)?),
            last: None,
        })
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

impl MetricsSink for JsonlSink {
    fn write(&mut self, rec: &MetricsRecord) -> Result<()> {
        check_order(self.last, rec.step)?;
        self.last = Some(rec.step);
        writeln!(self.out, "{}", rec.to_line())?;
        Ok(())
    }
}

impl Drop for JsonlSink {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}

fn check_order(last: Option<u64>, step: u64) -> Result<()> {
    match last {
        Some(l) if step < l => Err(Error::InvalidArgument(format!(
            "metrics step {step} precedes previous step {l}"
        ))),
        _ => Ok(()),
    }
}

/// Parses a metrics file, returning the records and the number of
/// malformed lines that were skipped.
pub fn read_jsonl(text: &str) -> (Vec<MetricsRecord>, usize) {
    let mut recs = Vec::new();
    let mut bad = 0;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<MetricsRecord>(line) {
            Ok(r) => recs.push(r),
            Err(_) => bad += 1,
        }
    }
    (recs, bad)
}
