use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::LossBreakdown;
use crate::error::Result;

/// One line of `metrics.jsonl`: either a loss snapshot taken at a logging
/// interval or an evaluation, or both when the two coincide.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub updates: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossBreakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_std: Option<f64>,
    /// Epsilon for the Q agent, alpha for SAC.
    pub exploration: f64,
}

impl MetricsRecord {
    pub fn is_eval(&self) -> bool {
        self.eval_mean.is_some()
    }
}

pub fn write_metrics<W: Write>(mut out: W, records: &[MetricsRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Eval rows only: `step,updates,eval_mean,eval_std,exploration`.
pub fn write_summary<W: Write>(out: W, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "updates", "eval_mean", "eval_std", "exploration"])?;
    for r in records.iter().filter(|r| r.is_eval()) {
        w.write_record([
            r.step.to_string(),
            r.updates.to_string(),
            r.eval_mean.unwrap_or(f64::NAN).to_string(),
            r.eval_std.unwrap_or(f64::NAN).to_string(),
            r.exploration.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
