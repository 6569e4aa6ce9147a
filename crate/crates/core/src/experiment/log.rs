use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tracing::warn;

use super::ExperimentError;
use crate::dataset::Quadruple;
use crate::parser::Diagnostic;
use crate::scoring::{
    report_csv, report_table, score_example, Counts, MatchPolicy, ScoreReport, ScoringError, SweepPoint,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRef {
    pub id: String,
    /// Absent for random selection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
}

/// Wall-clock facts about a record; excluded from determinism checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_at: DateTime<Utc>,
    pub elapsed_ms: u64,
    pub from_cache: bool,
}

/// One test example's audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub test_id: String,
    pub shots: Vec<ShotRef>,
    /// Cache key of the rendered prompt.
    pub prompt_digest: String,
    pub raw_response: Option<String>,
    /// Selection or completion failure; the example then scores as zero predictions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub gold: Vec<Quadruple>,
    pub parsed: Vec<Quadruple>,
    pub diagnostics: Vec<Diagnostic>,
    pub timing: Timing,
}

impl RunRecord {
    pub fn counts(&self, policy: MatchPolicy) -> Counts {
        score_example(&self.parsed, &self.gold, policy)
    }

    /// The record as JSON without the `timing` field.
    pub fn deterministic_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("records serialize");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("timing");
        }
        value.to_string()
    }
}

/// Reads a run log. Any unparseable line is a positioned error.
pub fn load_log(path: &Path) -> Result<Vec<RunRecord>, ExperimentError> {
    let content = fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_log(&content, path)
}

fn parse_log(content: &str, path: &Path) -> Result<Vec<RunRecord>, ExperimentError> {
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| ExperimentError::CorruptLog {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Loads an existing log for resumption. A partial final line left by a
/// crash is cut off; corruption anywhere else is an error.
pub(crate) fn recover_log(path: &Path) -> Result<Vec<RunRecord>, ExperimentError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let io_err = |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    };
    let content = fs::read_to_string(path).map_err(io_err)?;
    if content.is_empty() || content.ends_with('\n') {
        return parse_log(&content, path);
    }
    let complete_len = content.rfind('\n').map_or(0, |i| i + 1);
    let tail = &content[complete_len..];
    if serde_json::from_str::<RunRecord>(tail).is_ok() {
        // Complete record that only lacks its newline.
        OpenOptions::new()
            .append(true)
            .open(path)
            .and_then(|mut f| f.write_all(b"\n"))
            .map_err(io_err)?;
        return parse_log(&content, path);
    }
    warn!(path = %path.display(), "dropping partial last line of run log");
    let file = OpenOptions::new().write(true).open(path).map_err(io_err)?;
    file.set_len(complete_len as u64).map_err(io_err)?;
    parse_log(&content[..complete_len], path)
}

/// Single appender for a run log; every line is flushed as written.
pub(crate) struct LogWriter {
    path: PathBuf,
    file: File,
}

impl LogWriter {
    pub(crate) fn open(path: &Path) -> Result<Self, ExperimentError> {
        let io_err = |source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    pub(crate) fn append(&mut self, record: &RunRecord) -> Result<(), ExperimentError> {
        let mut line = serde_json::to_string(record).expect("records serialize");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|source| ExperimentError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

/// Scores of one run under exact match and each relaxed threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub num_examples: usize,
    pub failed_examples: usize,
    pub exact: ScoreReport,
    pub relaxed: Vec<SweepPoint>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    fn rows(&self) -> Vec<(String, ScoreReport)> {
        std::iter::once(("exact".to_string(), self.exact))
            .chain(
                self.relaxed
                    .iter()
                    .map(|p| (format!("iou>={}", p.threshold), p.report)),
            )
            .collect()
    }

    pub fn to_table(&self) -> String {
        report_table(&self.rows())
    }

    /// `policy,precision,recall,f1` rows.
    pub fn to_csv(&self) -> String {
        report_csv("policy", &self.rows())
    }
}

/// Re-scores logged records; no model calls involved.
pub fn report_records(records: &[RunRecord], iou_thresholds: &[f64]) -> Result<RunReport, ScoringError> {
    let relaxed = iou_thresholds
        .iter()
        .map(|&t| {
            let policy = MatchPolicy::relaxed(t)?;
            let report = ScoreReport::from_counts(records.iter().map(|r| r.counts(policy)).sum());
            Ok(SweepPoint { threshold: t, report })
        })
        .collect::<Result<Vec<_>, ScoringError>>()?;
    Ok(RunReport {
        num_examples: records.len(),
        failed_examples: records.iter().filter(|r| r.error.is_some()).count(),
        exact: ScoreReport::from_counts(records.iter().map(|r| r.counts(MatchPolicy::Exact)).sum()),
        relaxed,
    })
}

/// Loads a log and scores it.
pub fn report_log(path: &Path, iou_thresholds: &[f64]) -> Result<RunReport, ExperimentError> {
    Ok(report_records(&load_log(path)?, iou_thresholds)?)
}
