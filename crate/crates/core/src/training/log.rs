//! JSON Lines run log, the wall-clock sidecar, and curve export.

use std::fs::{File, OpenOptions};
use std::io::{self, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TrainingError;
use crate::judge::Aggregate;
use crate::reward::RewardBreakdown;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Teacher,
    Student,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Teacher => "teacher",
            Phase::Student => "student",
        }
    }
}

/// One sampled output with its reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub iteration: u32,
    pub phase: Phase,
    pub step: u32,
    pub problem_id: String,
    pub candidate: usize,
    pub text: String,
    /// Oracle verdict on a teacher revision; absent when the format gate
    /// already failed.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub equivalent: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
    /// Judge verdict of the solution (teacher phase: the student's attempt on
    /// this revision).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub verdict: Option<Aggregate>,
    pub reward: RewardBreakdown,
}

/// A teacher rewrite produced during a student phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteRecord {
    pub iteration: u32,
    pub step: u32,
    pub problem_id: String,
    pub text: String,
    pub well_formed: bool,
    pub equivalent: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
    /// Whether the rewrite became a student training prompt.
    pub used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub iteration: u32,
    pub phase: Phase,
    pub step: u32,
    pub problem_ids: Vec<String>,
    pub candidates: usize,
    /// Mean total reward over all candidates; absent when the step had none.
    pub mean_reward: Option<f64>,
    /// Mean of each reward component, in breakdown order.
    pub component_means: Vec<(String, f64)>,
    /// Group-relative advantages, one list per trained group.
    pub advantages: Vec<Vec<f64>>,
    pub update_applied: bool,
}

impl StepSummary {
    pub fn component(&self, name: &str) -> Option<f64> {
        self.component_means.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Candidate(CandidateRecord),
    Rewrite(RewriteRecord),
    Step(StepSummary),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub(crate) struct TimingRecord {
    pub iteration: u32,
    pub phase: Phase,
    pub step: u32,
    pub wall_secs: f64,
}

/// Append-only JSONL file that tracks its byte length as a resume cursor.
pub(crate) struct JsonlWriter {
    path: PathBuf,
    file: File,
    len: u64,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        let file = File::create(path)?;
        Ok(Self { path: path.to_path_buf(), file, len: 0 })
    }

    /// Reopens `path` and drops everything after `cursor`.
    pub fn truncate_to(path: &Path, cursor: u64) -> io::Result<Self> {
        let mut file = OpenOptions::new().read(true).write(true).open(path)?;
        let actual = file.metadata()?.len();
        if actual < cursor {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("{} has {actual} bytes, checkpoint expects at least {cursor}", path.display()),
            ));
        }
        file.set_len(cursor)?;
        file.seek(SeekFrom::End(0))?;
        Ok(Self { path: path.to_path_buf(), file, len: cursor })
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> io::Result<()> {
        let mut line = serde_json::to_vec(record).map_err(io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        self.len += line.len() as u64;
        Ok(())
    }

    pub fn cursor(&self) -> u64 {
        self.len
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Parses a run log, naming the first line that fails.
pub fn parse_run_log(text: &str) -> Result<Vec<LogRecord>, TrainingError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| TrainingError::CorruptLog { line: i + 1, message: e.to_string() })
        })
        .collect()
}

pub fn read_run_log(path: &Path) -> Result<Vec<LogRecord>, TrainingError> {
    let text = std::fs::read_to_string(path).map_err(|source| TrainingError::Io { path: path.into(), source })?;
    parse_run_log(&text)
}

pub fn step_summaries(records: &[LogRecord]) -> Vec<StepSummary> {
    records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Step(s) => Some(s.clone()),
            _ => None,
        })
        .collect()
}

pub const CURVE_COLUMNS: [&str; 12] = [
    "iteration",
    "phase",
    "step",
    "mean_reward",
    "r_sfm",
    "r_cmp",
    "r_acc",
    "r_pfm",
    "r_eqv",
    "r_dvg",
    "r_nvt",
    "r_adv",
];

/// One CSV row per step summary; components that do not apply to the phase,
/// and means of empty steps, are left blank.
pub fn export_curves(log_text: &str) -> Result<String, TrainingError> {
    let steps = step_summaries(&parse_run_log(log_text)?);
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| TrainingError::Export(e.to_string());
    w.write_record(CURVE_COLUMNS).map_err(csv_err)?;
    for s in &steps {
        let mut row = vec![
            s.iteration.to_string(),
            s.phase.as_str().to_string(),
            s.step.to_string(),
            s.mean_reward.map_or(String::new(), |m| m.to_string()),
        ];
        for name in &CURVE_COLUMNS[4..] {
            row.push(s.component(name).map_or(String::new(), |v| v.to_string()));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| TrainingError::Export(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Mean of one component over the steps of a phase, skipping steps without
/// candidates.
pub fn phase_component_mean(steps: &[StepSummary], iteration: u32, phase: Phase, component: &str) -> Option<f64> {
    let values: Vec<f64> = steps
        .iter()
        .filter(|s| s.iteration == iteration && s.phase == phase)
        .filter_map(|s| s.component(component))
        .collect();
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}
