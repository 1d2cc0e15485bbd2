//! Phase-boundary checkpoints.
//!
//! Layout: `<output>/checkpoints/iterNNN_<phase>/state.json`, one directory
//! per completed phase.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::log::Phase;
use super::TrainingError;
use crate::corpus::write_atomic;
use crate::policy::PolicyState;
use crate::similarity::TfidfModel;

pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const STATE_FILE: &str = "state.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PhaseId {
    pub iteration: u32,
    pub phase: Phase,
}

impl PhaseId {
    pub fn dir_name(&self) -> String {
        format!("iter{:03}_{}", self.iteration, self.phase.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionEntry {
    pub id: String,
    pub revisions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub completed: PhaseId,
    pub seed: u64,
    pub teacher: PolicyState,
    pub student: PolicyState,
    pub similarity: Option<TfidfModel>,
    pub revisions: Vec<RevisionEntry>,
    /// Byte length of the run log when the phase finished.
    pub log_cursor: u64,
    pub timings_cursor: u64,
}

impl Checkpoint {
    pub fn save(&self, output: &Path) -> Result<PathBuf, TrainingError> {
        let dir = output.join(CHECKPOINT_DIR).join(self.completed.dir_name());
        let json = serde_json::to_vec_pretty(self).expect("checkpoint serializes");
        write_atomic(&dir.join(STATE_FILE), &json).map_err(|e| TrainingError::Checkpoint(e.to_string()))?;
        Ok(dir)
    }

    /// Accepts either a checkpoint directory or its state file.
    pub fn load(path: &Path) -> Result<Self, TrainingError> {
        let file = if path.is_dir() { path.join(STATE_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&file).map_err(|source| TrainingError::Io { path: file.clone(), source })?;
        let mut cp: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| TrainingError::Checkpoint(format!("{}: {e}", file.display())))?;
        cp.similarity = cp.similarity.map(TfidfModel::reindex);
        Ok(cp)
    }
}

/// Most recent checkpoint under `output`, if any.
pub fn latest_checkpoint(output: &Path) -> Option<PathBuf> {
    let entries = std::fs::read_dir(output.join(CHECKPOINT_DIR)).ok()?;
    entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.join(STATE_FILE).is_file())
        .filter_map(|p| Checkpoint::load(&p).ok().map(|cp| (cp.completed, p)))
        .max_by_key(|(id, _)| *id)
        .map(|(_, p)| p)
}
