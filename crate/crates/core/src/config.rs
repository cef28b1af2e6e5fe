//! The search run configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::driver::Optimizer;
use crate::error::{Error, Result};
use crate::evalsim::{EvalOptions, SyntheticTask, TrainOptions};
use crate::hw::{ConstraintSet, HardwareSpec};
use crate::sensitivity::Estimator;
use crate::space::default_bit_subsets;
use crate::tpe::TpeParams;

pub const SCHEMA_VERSION: u32 = 1;

/// Template network: a dense ReLU chain from the task's 2-D inputs through
/// `hidden` units to one output per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetSpec {
    pub hidden: Vec<u64>,
    pub pretrain: TrainOptions,
}

impl Default for NetSpec {
    fn default() -> Self {
        NetSpec {
            hidden: vec![16, 16],
            pretrain: TrainOptions {
                epochs: 40,
                ..TrainOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruningMode {
    /// Every layer searches the full bit-width set.
    #[default]
    Off,
    /// Run the Hessian-trace analysis on the pre-trained template.
    Compute,
    /// Read a previously written sensitivity report.
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruningSpec {
    pub mode: PruningMode,
    /// Sensitivity report path, for `mode = "report"`.
    pub report: Option<PathBuf>,
    pub k: usize,
    /// Candidate bit-widths per cluster, most sensitive cluster first.
    pub subsets: Vec<Vec<u32>>,
    pub exempt_first_last: bool,
    pub probes: usize,
    pub samples: usize,
    pub estimator: Estimator,
}

impl Default for PruningSpec {
    fn default() -> Self {
        PruningSpec {
            mode: PruningMode::Off,
            report: None,
            k: 4,
            subsets: default_bit_subsets(),
            exempt_first_last: false,
            probes: 100,
            samples: 512,
            estimator: Estimator::Hutchinson,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub trial_log: PathBuf,
    pub state: PathBuf,
    /// Adds wall-clock times to trials; logs are then no longer reproducible
    /// byte for byte.
    pub log_wall_time: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            trial_log: PathBuf::from("trials.jsonl"),
            state: PathBuf::from("state.json"),
            log_wall_time: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_optimizer")]
    pub optimizer: Optimizer,
    #[serde(default)]
    pub task: SyntheticTask,
    #[serde(default)]
    pub net: NetSpec,
    #[serde(default)]
    pub evaluation: EvalOptions,
    #[serde(default)]
    pub pruning: PruningSpec,
    #[serde(default)]
    pub tpe: TpeParams,
    #[serde(default)]
    pub constraints: ConstraintSet,
    #[serde(default)]
    pub hardware: HardwareSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_optimizer() -> Optimizer {
    Optimizer::KmeansTpe
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            optimizer: default_optimizer(),
            task: SyntheticTask::default(),
            net: NetSpec::default(),
            evaluation: EvalOptions::default(),
            pruning: PruningSpec::default(),
            tpe: TpeParams::default(),
            constraints: ConstraintSet::default(),
            hardware: HardwareSpec::default(),
            output: OutputSpec::default(),
        }
    }
}

impl RunConfig {
    /// Parses and validates a configuration; relative paths are resolved
    /// against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::config(format!("invalid run configuration: {e}")))?;
        config.resolve_paths(base_dir);
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::from_json(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.output.trial_log);
        resolve(&mut self.output.state);
        if let Some(report) = self.pruning.report.as_mut() {
            resolve(report);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.task.validate()?;
        if self.net.hidden.is_empty() || self.net.hidden.contains(&0) {
            return Err(Error::config(
                "net.hidden needs at least one non-empty layer",
            ));
        }
        self.net.pretrain.validate()?;
        self.evaluation.train.validate()?;
        if !(self.evaluation.penalty >= 0.0 && self.evaluation.penalty.is_finite()) {
            return Err(Error::config("evaluation.penalty must be non-negative"));
        }
        self.tpe.validate()?;
        self.constraints.validate()?;
        self.hardware.validate()?;
        let layers = self.net.hidden.len() + 1;
        let p = &self.pruning;
        if p.mode != PruningMode::Off {
            if p.k == 0 || p.k > layers {
                return Err(Error::config(format!(
                    "pruning.k = {} must lie in 1..={layers} for a {layers}-layer network",
                    p.k
                )));
            }
            if p.subsets.len() != p.k {
                return Err(Error::config(format!(
                    "pruning.k = {} but {} subsets given",
                    p.k,
                    p.subsets.len()
                )));
            }
        }
        if p.mode == PruningMode::Report && p.report.is_none() {
            return Err(Error::config(
                "pruning.mode = \"report\" needs pruning.report",
            ));
        }
        if p.mode == PruningMode::Compute && (p.probes == 0 || p.samples == 0) {
            return Err(Error::config(
                "pruning needs at least one probe and one sample",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let c = RunConfig::from_json(r#"{"schema_version": 1}"#, Path::new("/tmp/run")).unwrap();
        assert_eq!(c.tpe.n_initial, 20);
        assert_eq!(c.output.trial_log, PathBuf::from("/tmp/run/trials.jsonl"));
    }

    #[test]
    fn rejects_unknown_keys() {
        let r = RunConfig::from_json(
            r#"{"schema_version": 1, "tpe": {"n_init": 3}}"#,
            Path::new("."),
        );
        assert!(matches!(r, Err(Error::Config(_))));
        let r = RunConfig::from_json(r#"{"schema_version": 1, "extra": 0}"#, Path::new("."));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn rejects_other_schema() {
        let r = RunConfig::from_json(r#"{"schema_version": 2}"#, Path::new("."));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn pruning_k_checked_against_layers() {
        let r = RunConfig::from_json(
            r#"{"schema_version": 1, "pruning": {"mode": "compute", "k": 4}}"#,
            Path::new("."),
        );
        assert!(r.is_err());
        let ok = RunConfig::from_json(
            r#"{"schema_version": 1, "pruning": {"mode": "compute", "k": 2, "subsets": [[8, 6], [4, 3, 2]]}}"#,
            Path::new("."),
        );
        assert!(ok.is_ok());
    }
}
