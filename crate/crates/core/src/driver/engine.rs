//! The sequential proposal loop, independent of what is being evaluated.

use std::collections::HashSet;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, STREAM_PROPOSALS, STREAM_RANDOM_PHASE};
use crate::tpe::{
    classic_threshold, fit_surrogate, kmeans_split, propose, propose_new, Domain, Surrogate,
    TpeParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    /// Dual threshold from 1-D k-means over the objectives, annealed k.
    KmeansTpe,
    /// Single (1−γ)-quantile threshold.
    ClassicTpe,
    /// Uniform sampling throughout.
    Random,
}

impl Optimizer {
    pub const ALL: [Optimizer; 3] = [
        Optimizer::KmeansTpe,
        Optimizer::ClassicTpe,
        Optimizer::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Optimizer::KmeansTpe => "kmeans-tpe",
            Optimizer::ClassicTpe => "classic-tpe",
            Optimizer::Random => "random",
        }
    }
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Optimizer::ALL
            .into_iter()
            .find(|o| o.name() == s || o.name().replace('-', "_") == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown optimizer `{s}` (expected kmeans-tpe, classic-tpe or random)"
                ))
            })
    }
}

impl std::fmt::Display for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Random,
    Surrogate,
}

/// Position of a ChaCha stream, enough to restore it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    /// 128-bit word position, decimal (JSON numbers cannot carry it losslessly).
    pub word_pos: String,
}

impl RngState {
    fn capture(seed: u64, rng: &ChaCha8Rng) -> Self {
        RngState {
            seed,
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    fn restore(&self) -> Result<ChaCha8Rng> {
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::Integrity(format!("bad rng word position `{}`", self.word_pos)))?;
        let mut rng = seeded(self.seed, self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

/// Serializable engine state, excluding the trial history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub c: f64,
    pub surrogate_done: usize,
    pub random_rng: RngState,
    pub proposal_rng: RngState,
}

/// What the engine asks to evaluate next.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub point: Vec<usize>,
    pub phase: Phase,
    pub k_used: Option<usize>,
}

/// Runs n₀ uniform draws followed by surrogate-guided proposals. Failed
/// evaluations (non-finite objective) are kept in the history but excluded
/// from every split.
#[derive(Debug, Clone)]
pub struct Engine {
    pub domain: Domain,
    pub params: TpeParams,
    pub optimizer: Optimizer,
    seed: u64,
    points: Vec<Vec<usize>>,
    objectives: Vec<f64>,
    c: f64,
    surrogate_done: usize,
    random_rng: ChaCha8Rng,
    proposal_rng: ChaCha8Rng,
}

impl Engine {
    pub fn new(domain: Domain, params: TpeParams, optimizer: Optimizer, seed: u64) -> Result<Self> {
        params.validate()?;
        if domain.dims.is_empty() || domain.dims.iter().any(|d| d.is_empty()) {
            return Err(Error::config("search domain has an empty dimension"));
        }
        Ok(Engine {
            c: params.c0,
            domain,
            params,
            optimizer,
            seed,
            points: Vec::new(),
            objectives: Vec::new(),
            surrogate_done: 0,
            random_rng: seeded(seed, STREAM_RANDOM_PHASE),
            proposal_rng: seeded(seed, STREAM_PROPOSALS),
        })
    }

    /// Rebuilds an engine from a saved state and its history.
    pub fn restore(
        domain: Domain,
        params: TpeParams,
        optimizer: Optimizer,
        seed: u64,
        state: &EngineState,
        history: Vec<(Vec<usize>, f64)>,
    ) -> Result<Self> {
        let mut engine = Engine::new(domain, params, optimizer, seed)?;
        for (p, _) in &history {
            if !engine.domain.contains(p) {
                return Err(Error::Integrity(
                    "saved point lies outside the search domain".into(),
                ));
            }
        }
        let expected_surrogate = history.len().saturating_sub(engine.params.n_initial);
        if state.surrogate_done != expected_surrogate {
            return Err(Error::Integrity(format!(
                "state records {} surrogate iterations for {} trials",
                state.surrogate_done,
                history.len()
            )));
        }
        (engine.points, engine.objectives) = history.into_iter().unzip();
        engine.c = state.c;
        engine.surrogate_done = state.surrogate_done;
        engine.random_rng = state.random_rng.restore()?;
        engine.proposal_rng = state.proposal_rng.restore()?;
        Ok(engine)
    }

    pub fn state(&self) -> EngineState {
        EngineState {
            c: self.c,
            surrogate_done: self.surrogate_done,
            random_rng: RngState::capture(self.seed, &self.random_rng),
            proposal_rng: RngState::capture(self.seed, &self.proposal_rng),
        }
    }

    /// Total evaluations the run will perform.
    pub fn budget(&self) -> usize {
        self.params.n_initial + self.params.surrogate_iterations()
    }

    pub fn evaluated(&self) -> usize {
        self.points.len()
    }

    pub fn is_done(&self) -> bool {
        self.evaluated() >= self.budget()
    }

    /// Current annealing scale c = c₀·α^(completed annealing steps).
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn history(&self) -> impl Iterator<Item = (&[usize], f64)> {
        self.points
            .iter()
            .map(Vec::as_slice)
            .zip(self.objectives.iter().copied())
    }

    /// Next point to evaluate.
    pub fn propose(&mut self) -> Result<Proposal> {
        if self.is_done() {
            return Err(Error::config("evaluation budget exhausted"));
        }
        if self.evaluated() < self.params.n_initial || self.optimizer == Optimizer::Random {
            let phase = if self.evaluated() < self.params.n_initial {
                Phase::Random
            } else {
                Phase::Surrogate
            };
            return Ok(Proposal {
                point: self.domain.sample_uniform(&mut self.random_rng),
                phase,
                k_used: None,
            });
        }
        let finite: Vec<usize> = (0..self.objectives.len())
            .filter(|&i| self.objectives[i].is_finite())
            .collect();
        if finite.is_empty() {
            return Ok(Proposal {
                point: self.domain.sample_uniform(&mut self.proposal_rng),
                phase: Phase::Surrogate,
                k_used: None,
            });
        }
        let values: Vec<f64> = finite.iter().map(|&i| self.objectives[i]).collect();
        let split = match self.optimizer {
            Optimizer::KmeansTpe => kmeans_split(&values, self.c)?,
            _ => classic_threshold(&values, self.params.gamma)?,
        };
        let good = self.fit(&split.desirable, &finite)?;
        let bad = self.fit(&split.undesirable, &finite)?;
        let n_ei = self.params.n_ei_candidates;
        let point = if self.params.skip_evaluated {
            let seen: HashSet<&[usize]> = self.points.iter().map(Vec::as_slice).collect();
            propose_new(&good, &bad, n_ei, &mut self.proposal_rng, |x| {
                !seen.contains(x)
            })
        } else {
            propose(&good, &bad, n_ei, &mut self.proposal_rng)
        };
        Ok(Proposal {
            point,
            phase: Phase::Surrogate,
            k_used: split.k_used,
        })
    }

    fn fit(&self, members: &[usize], finite: &[usize]) -> Result<Surrogate> {
        let points: Vec<&[usize]> = members
            .iter()
            .map(|&j| self.points[finite[j]].as_slice())
            .collect();
        fit_surrogate(&points, &self.domain, self.params.fit_mode)
    }

    /// Records the objective of the last proposal (−∞ marks a failure) and
    /// anneals c after surrogate iterations.
    pub fn record(&mut self, point: Vec<usize>, objective: f64) -> Result<()> {
        if !self.domain.contains(&point) {
            return Err(Error::input(
                "recorded point lies outside the search domain",
            ));
        }
        if objective.is_nan() {
            return Err(Error::input("objective is NaN"));
        }
        let surrogate = self.evaluated() >= self.params.n_initial;
        self.points.push(point);
        self.objectives.push(objective);
        if surrogate {
            self.surrogate_done += 1;
            let steps = self.surrogate_done / self.params.anneal_every;
            self.c = self.params.c0 * self.params.alpha.powi(steps as i32);
        }
        Ok(())
    }
}

/// Runs a complete search against an in-memory objective; returns the
/// objectives in evaluation order.
pub fn run_objective<F>(
    domain: Domain,
    params: TpeParams,
    optimizer: Optimizer,
    seed: u64,
    mut objective: F,
) -> Result<Vec<f64>>
where
    F: FnMut(&[usize]) -> f64,
{
    let mut engine = Engine::new(domain, params, optimizer, seed)?;
    while !engine.is_done() {
        let proposal = engine.propose()?;
        let value = objective(&proposal.point);
        engine.record(proposal.point, value)?;
    }
    Ok(engine.objectives)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n0: usize, n: usize) -> TpeParams {
        TpeParams {
            n_initial: n0,
            n_total: n,
            ..TpeParams::default()
        }
    }

    #[test]
    fn budget_and_phases() {
        let mut e =
            Engine::new(Domain::grid(3, 4), params(5, 12), Optimizer::KmeansTpe, 1).unwrap();
        let mut phases = Vec::new();
        while !e.is_done() {
            let p = e.propose().unwrap();
            phases.push(p.phase);
            let v = p.point.iter().sum::<usize>() as f64;
            e.record(p.point, v).unwrap();
        }
        assert_eq!(phases.len(), 12);
        assert!(phases[..5].iter().all(|&p| p == Phase::Random));
        assert!(phases[5..].iter().all(|&p| p == Phase::Surrogate));
        assert!((e.c() - 0.25 * 0.98f64.powi(7)).abs() < 1e-15);
    }

    #[test]
    fn optimizers_share_random_phase() {
        let f = |x: &[usize]| x[0] as f64;
        let a = run_objective(
            Domain::grid(4, 5),
            params(10, 20),
            Optimizer::KmeansTpe,
            3,
            f,
        )
        .unwrap();
        let b = run_objective(
            Domain::grid(4, 5),
            params(10, 20),
            Optimizer::ClassicTpe,
            3,
            f,
        )
        .unwrap();
        assert_eq!(a[..10], b[..10]);
    }

    #[test]
    fn restore_continues_identically() {
        let f = |x: &[usize]| -((x[0] as f64) - 2.0).powi(2) - x[1] as f64;
        let mut full =
            Engine::new(Domain::grid(3, 5), params(4, 15), Optimizer::KmeansTpe, 9).unwrap();
        let mut cut = full.clone();
        for _ in 0..8 {
            let p = cut.propose().unwrap();
            let v = f(&p.point);
            cut.record(p.point, v).unwrap();
        }
        let history: Vec<(Vec<usize>, f64)> = cut.history().map(|(p, v)| (p.to_vec(), v)).collect();
        let mut resumed = Engine::restore(
            cut.domain.clone(),
            cut.params.clone(),
            cut.optimizer,
            9,
            &cut.state(),
            history,
        )
        .unwrap();
        while !full.is_done() {
            let p = full.propose().unwrap();
            let v = f(&p.point);
            full.record(p.point, v).unwrap();
        }
        while !resumed.is_done() {
            let p = resumed.propose().unwrap();
            let v = f(&p.point);
            resumed.record(p.point, v).unwrap();
        }
        assert_eq!(full.points, resumed.points);
    }

    #[test]
    fn parses_optimizer_names() {
        assert_eq!(
            "kmeans-tpe".parse::<Optimizer>().unwrap(),
            Optimizer::KmeansTpe
        );
        assert_eq!(
            "classic_tpe".parse::<Optimizer>().unwrap(),
            Optimizer::ClassicTpe
        );
        assert!("bayes".parse::<Optimizer>().is_err());
    }
}
