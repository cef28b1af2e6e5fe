//! End-to-end search runs with a JSON-lines trial log and a checksummed,
//! resumable state snapshot.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use crate::config::{PruningMode, RunConfig};
use crate::driver::engine::{Engine, EngineState, Phase};
use crate::driver::write_atomic;
use crate::error::{Error, Result};
use crate::evalsim::{evaluate, pretrain};
use crate::hw::Violation;
use crate::net::{Dataset, TinyNet};
use crate::rng::derive_seed;
use crate::sensitivity::{analyze_hessian, SensitivityOptions, SensitivityReport};
use crate::space::{build_pruned_space, Configuration, SearchSpace};

pub const LOG_SCHEMA: u32 = 1;
pub const STATE_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub accuracy: f64,
    pub model_size_bytes: u64,
    pub latency_cycles: u64,
    pub energy_proxy: f64,
    /// Total penalty subtracted from the accuracy.
    pub penalty: f64,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: Configuration,
    /// Absent for failed trials (their objective is −∞).
    pub objective: Option<f64>,
    pub failed: bool,
    pub metrics: TrialMetrics,
    pub phase: Phase,
    pub k_used: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

impl Trial {
    pub fn objective_value(&self) -> f64 {
        self.objective.unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Serialize)]
struct LogLine<'a> {
    schema: u32,
    #[serde(flatten)]
    trial: &'a Trial,
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchState {
    pub run: RunConfig,
    pub space: SearchSpace,
    pub sensitivity: Option<SensitivityReport>,
    pub engine: EngineState,
    pub trials: Vec<Trial>,
    /// Index of the best non-failed trial (earliest on ties).
    pub best: Option<usize>,
    pub complete: bool,
}

impl SearchState {
    pub fn best_trial(&self) -> Option<&Trial> {
        self.best.map(|i| &self.trials[i])
    }

    fn update_best(&mut self) {
        self.best = self
            .trials
            .iter()
            .filter(|t| !t.failed)
            .fold(None::<&Trial>, |best, t| match best {
                Some(b) if b.objective_value() >= t.objective_value() => Some(b),
                _ => Some(t),
            })
            .map(|t| t.index);
    }
}

/// Pre-trained template and data, rebuilt deterministically from the config.
pub struct SearchContext {
    pub template: TinyNet,
    pub train: Dataset,
    pub test: Dataset,
}

impl SearchContext {
    pub fn prepare(run: &RunConfig) -> Result<Self> {
        let task = run.task.clone();
        let (template, train, test) =
            pretrain(&task, &run.net.hidden, &run.net.pretrain, run.seed)?;
        Ok(SearchContext {
            template,
            train,
            test,
        })
    }
}

fn build_space(
    run: &RunConfig,
    ctx: &SearchContext,
) -> Result<(SearchSpace, Option<SensitivityReport>)> {
    let p = &run.pruning;
    let layers = ctx.template.layers.clone();
    let report = match p.mode {
        PruningMode::Off => return Ok((SearchSpace::full(layers)?, None)),
        PruningMode::Compute => {
            let options = SensitivityOptions {
                k: p.k,
                probes: p.probes,
                samples: p.samples,
                estimator: p.estimator,
                seed: derive_seed(run.seed, u64::MAX),
            };
            analyze_hessian(&ctx.template, &ctx.train, &options)?
        }
        PruningMode::Report => {
            let path = p.report.as_deref().expect("validated");
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?
        }
    };
    let space = build_pruned_space(&layers, &report, p.k, &p.subsets, p.exempt_first_last)?;
    Ok((space, Some(report)))
}

fn log_line(trial: &Trial) -> Result<String> {
    let line = LogLine {
        schema: LOG_SCHEMA,
        trial,
    };
    serde_json::to_string(&line).map_err(|e| Error::json("trial log", e))
}

struct Runner {
    state: SearchState,
    engine: Engine,
    ctx: SearchContext,
    log: File,
}

impl Runner {
    fn step(&mut self) -> Result<()> {
        let proposal = self.engine.propose()?;
        let config = self.state.space.from_indices(&proposal.point);
        let index = self.state.trials.len();
        let run = &self.state.run;
        let started = Instant::now();
        let eval = evaluate(
            &config,
            &self.ctx.template,
            &self.ctx.train,
            &self.ctx.test,
            &run.constraints,
            &run.hardware,
            &run.evaluation,
            derive_seed(run.seed, index as u64),
        )?;
        let wall_time_ms = run
            .output
            .log_wall_time
            .then(|| started.elapsed().as_secs_f64() * 1e3);
        let trial = Trial {
            index,
            config,
            objective: (!eval.failed).then_some(eval.objective),
            failed: eval.failed,
            metrics: TrialMetrics {
                accuracy: eval.accuracy,
                model_size_bytes: eval.model_size_bytes,
                latency_cycles: eval.latency_cycles,
                energy_proxy: eval.energy_proxy,
                penalty: eval.penalty,
                violations: eval.violations,
            },
            phase: proposal.phase,
            k_used: proposal.k_used,
            wall_time_ms,
        };
        if trial.failed {
            log::warn!("trial {index} failed: non-finite training loss");
        }
        log::info!(
            "trial {index} ({:?}) objective {:?} accuracy {:.4}",
            trial.phase,
            trial.objective,
            trial.metrics.accuracy
        );
        self.engine
            .record(proposal.point, trial.objective_value())?;
        writeln!(self.log, "{}", log_line(&trial)?)
            .and_then(|_| self.log.flush())
            .map_err(|e| Error::io(&self.state.run.output.trial_log, e))?;
        self.state.trials.push(trial);
        self.state.update_best();
        self.state.engine = self.engine.state();
        self.state.complete = self.engine.is_done();
        save_state(&self.state, &self.state.run.output.state)
    }

    fn run(mut self, stop_after: Option<usize>) -> Result<SearchState> {
        while !self.engine.is_done() && stop_after.is_none_or(|n| self.state.trials.len() < n) {
            self.step()?;
        }
        Ok(self.state)
    }
}

fn create_log(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map_err(|e| Error::io(path, e))
}

/// Runs a search from scratch. With `stop_after`, stops once that many trials
/// exist (the state file then allows [`resume`]).
pub fn run_search(run: &RunConfig, stop_after: Option<usize>) -> Result<SearchState> {
    run.validate()?;
    let ctx = SearchContext::prepare(run)?;
    let (space, sensitivity) = build_space(run, &ctx)?;
    let engine = Engine::new(space.domain(), run.tpe.clone(), run.optimizer, run.seed)?;
    let log = create_log(&run.output.trial_log)?;
    let state = SearchState {
        run: run.clone(),
        space,
        sensitivity,
        engine: engine.state(),
        trials: Vec::new(),
        best: None,
        complete: engine.is_done(),
    };
    save_state(&state, &run.output.state)?;
    Runner {
        state,
        engine,
        ctx,
        log,
    }
    .run(stop_after)
}

/// Continues an interrupted run from its state file. The trial log is
/// rewritten from the saved trials and then extended, so it ends up
/// identical to the log of an uninterrupted run. A completed run is
/// returned unchanged.
pub fn resume(state_path: &Path, stop_after: Option<usize>) -> Result<SearchState> {
    let state = load_state(state_path)?;
    if state.complete {
        return Ok(state);
    }
    let run = state.run.clone();
    let mut history = Vec::with_capacity(state.trials.len());
    for (i, t) in state.trials.iter().enumerate() {
        if t.index != i {
            return Err(Error::Integrity(format!(
                "trial {i} is stored with index {}",
                t.index
            )));
        }
        let point = state
            .space
            .to_indices(&t.config)
            .map_err(|e| Error::Integrity(format!("trial {i}: {e}")))?;
        history.push((point, t.objective_value()));
    }
    let engine = Engine::restore(
        state.space.domain(),
        run.tpe.clone(),
        run.optimizer,
        run.seed,
        &state.engine,
        history,
    )?;
    let ctx = SearchContext::prepare(&run)?;
    let mut log = create_log(&run.output.trial_log)?;
    for t in &state.trials {
        writeln!(log, "{}", log_line(t)?).map_err(|e| Error::io(&run.output.trial_log, e))?;
    }
    log.flush()
        .map_err(|e| Error::io(&run.output.trial_log, e))?;
    let mut state = state;
    state.run.output.state = state_path.to_path_buf();
    Runner {
        state,
        engine,
        ctx,
        log,
    }
    .run(stop_after)
}

#[derive(Deserialize)]
struct Envelope<'a> {
    schema_version: u32,
    checksum: String,
    #[serde(borrow)]
    body: &'a RawValue,
}

fn digest(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

/// Serializes `state` as `{"schema_version", "checksum", "body"}` where the
/// checksum is the SHA-256 of the body text, and writes it atomically.
pub fn save_state(state: &SearchState, path: &Path) -> Result<()> {
    let body = serde_json::to_string(state).map_err(|e| Error::json("search state", e))?;
    let text = format!(
        "{{\"schema_version\":{STATE_SCHEMA},\"checksum\":\"{}\",\"body\":{body}}}\n",
        digest(&body)
    );
    write_atomic(path, text.as_bytes())
}

pub fn load_state(path: &Path) -> Result<SearchState> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let envelope: Envelope = serde_json::from_str(&text)
        .map_err(|e| Error::Integrity(format!("unreadable state file {}: {e}", path.display())))?;
    if envelope.schema_version != STATE_SCHEMA {
        return Err(Error::Integrity(format!(
            "state schema {} is not supported",
            envelope.schema_version
        )));
    }
    if digest(envelope.body.get()) != envelope.checksum {
        return Err(Error::Integrity(format!(
            "checksum mismatch in {}",
            path.display()
        )));
    }
    serde_json::from_str(envelope.body.get())
        .map_err(|e| Error::Integrity(format!("malformed state body: {e}")))
}

/// Reads a trial log back.
pub fn read_trial_log(path: &Path) -> Result<Vec<Trial>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let mut value: serde_json::Value =
                serde_json::from_str(line).map_err(|e| Error::json("trial log", e))?;
            if value.get("schema").and_then(|s| s.as_u64()) != Some(u64::from(LOG_SCHEMA)) {
                return Err(Error::input("trial log line has an unsupported schema"));
            }
            value.as_object_mut().expect("object").remove("schema");
            serde_json::from_value(value).map_err(|e| Error::json("trial log", e))
        })
        .collect()
}
