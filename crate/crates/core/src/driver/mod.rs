//! Search orchestration: the proposal engine, resumable search runs and
//! optimizer races.

pub mod engine;
pub mod race;
pub mod search;

use std::io::Write;
use std::path::Path;

pub use engine::{run_objective, Engine, EngineState, Optimizer, Phase, Proposal, RngState};
pub use race::{run_race, OptimizerSummary, RaceReport, Trajectory, MIN_SEEDS, TARGET_FRACTION};
pub use search::{
    load_state, read_trial_log, resume, run_search, save_state, SearchContext, SearchState, Trial,
    TrialMetrics,
};

use crate::error::{Error, Result};

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
