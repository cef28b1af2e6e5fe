//! Optimizer races on analytic benchmark objectives.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::driver::engine::{run_objective, Optimizer};
use crate::driver::write_atomic;
use crate::error::{Error, Result};
use crate::evalsim::BenchObjective;
use crate::rng::derive_seed;
use crate::tpe::TpeParams;

/// Minimum number of seeds for a race.
pub const MIN_SEEDS: usize = 20;
/// A run has converged once its best value is within this fraction of the optimum.
pub const TARGET_FRACTION: f64 = 0.99;

/// Best-so-far value after every evaluation of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub optimizer: Optimizer,
    pub seed: u64,
    pub best_so_far: Vec<f64>,
}

impl Trajectory {
    /// One-based count of evaluations until `target` was reached, or
    /// budget + 1 if it never was.
    pub fn evaluations_to(&self, target: f64) -> usize {
        self.best_so_far
            .iter()
            .position(|&v| v >= target)
            .map_or(self.best_so_far.len() + 1, |i| i + 1)
    }

    pub fn final_best(&self) -> f64 {
        self.best_so_far
            .last()
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSummary {
    pub optimizer: Optimizer,
    pub runs: usize,
    /// Runs that reached the target within the budget.
    pub reached: usize,
    /// Median evaluations-to-target, counting misses as budget + 1.
    pub median_evaluations_to_target: f64,
    pub median_final_best: f64,
    pub mean_final_best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceReport {
    pub objective: BenchObjective,
    pub params: TpeParams,
    pub budget: usize,
    pub seeds: Vec<u64>,
    pub target_fraction: f64,
    pub summaries: Vec<OptimizerSummary>,
    /// Fraction of seeds where k-means TPE's final best is at least classic
    /// TPE's (present when both raced).
    pub kmeans_win_fraction: Option<f64>,
    /// Median evaluations-to-target of k-means TPE over classic TPE.
    pub kmeans_to_classic_ratio: Option<f64>,
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Races each optimizer on each seed. Seed s optimizes the landscape
/// instance keyed by (objective.seed, s) so every seed sees a fresh optimum
/// location, shared across optimizers.
pub fn run_race(
    objective: &BenchObjective,
    optimizers: &[Optimizer],
    seeds: &[u64],
    params: &TpeParams,
) -> Result<RaceReport> {
    if optimizers.len() < 2 {
        return Err(Error::config("a race needs at least two optimizers"));
    }
    if seeds.len() < MIN_SEEDS {
        return Err(Error::config(format!(
            "a race needs at least {MIN_SEEDS} seeds, got {}",
            seeds.len()
        )));
    }
    params.validate()?;
    objective.validate()?;
    let domain = objective.domain();
    let mut trajectories = Vec::with_capacity(optimizers.len() * seeds.len());
    for &seed in seeds {
        let bench = BenchObjective {
            seed: derive_seed(objective.seed, seed),
            ..objective.clone()
        }
        .instantiate()?;
        for &optimizer in optimizers {
            let values = run_objective(domain.clone(), params.clone(), optimizer, seed, |x| {
                bench.value(x)
            })?;
            let best_so_far = values
                .iter()
                .scan(f64::NEG_INFINITY, |best, &v| {
                    *best = best.max(v);
                    Some(*best)
                })
                .collect();
            trajectories.push(Trajectory {
                optimizer,
                seed,
                best_so_far,
            });
        }
    }

    let budget = params.n_initial + params.surrogate_iterations();
    // every instance has optimum value 1
    let target = TARGET_FRACTION;
    let summaries = optimizers
        .iter()
        .map(|&optimizer| {
            let runs: Vec<&Trajectory> = trajectories
                .iter()
                .filter(|t| t.optimizer == optimizer)
                .collect();
            let mut evals: Vec<f64> = runs
                .iter()
                .map(|t| t.evaluations_to(target) as f64)
                .collect();
            let mut finals: Vec<f64> = runs.iter().map(|t| t.final_best()).collect();
            OptimizerSummary {
                optimizer,
                runs: runs.len(),
                reached: runs
                    .iter()
                    .filter(|t| t.evaluations_to(target) <= budget)
                    .count(),
                median_evaluations_to_target: median(&mut evals),
                mean_final_best: finals.iter().sum::<f64>() / finals.len() as f64,
                median_final_best: median(&mut finals),
            }
        })
        .collect::<Vec<_>>();

    let by = |o: Optimizer| trajectories.iter().filter(move |t| t.optimizer == o);
    let both =
        optimizers.contains(&Optimizer::KmeansTpe) && optimizers.contains(&Optimizer::ClassicTpe);
    let kmeans_win_fraction = both.then(|| {
        let wins = by(Optimizer::KmeansTpe)
            .zip(by(Optimizer::ClassicTpe))
            .filter(|(k, c)| k.final_best() >= c.final_best())
            .count();
        wins as f64 / seeds.len() as f64
    });
    let summary_of = |o: Optimizer| summaries.iter().find(|s| s.optimizer == o);
    let kmeans_to_classic_ratio = both.then(|| {
        summary_of(Optimizer::KmeansTpe)
            .unwrap()
            .median_evaluations_to_target
            / summary_of(Optimizer::ClassicTpe)
                .unwrap()
                .median_evaluations_to_target
    });

    Ok(RaceReport {
        objective: objective.clone(),
        params: params.clone(),
        budget,
        seeds: seeds.to_vec(),
        target_fraction: TARGET_FRACTION,
        summaries,
        kmeans_win_fraction,
        kmeans_to_classic_ratio,
        trajectories,
    })
}

impl RaceReport {
    pub fn summary(&self, optimizer: Optimizer) -> Option<&OptimizerSummary> {
        self.summaries.iter().find(|s| s.optimizer == optimizer)
    }

    /// Long-format CSV: optimizer, seed, trial_index, best_so_far.
    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::input(format!("csv: {e}"));
        writer
            .write_record(["optimizer", "seed", "trial_index", "best_so_far"])
            .map_err(csv_err)?;
        for t in &self.trajectories {
            for (i, v) in t.best_so_far.iter().enumerate() {
                writer
                    .write_record([
                        t.optimizer.name(),
                        &t.seed.to_string(),
                        &i.to_string(),
                        &v.to_string(),
                    ])
                    .map_err(csv_err)?;
            }
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::input(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes the trajectory CSV and the summary JSON.
    pub fn write(&self, csv_path: &Path, summary_path: &Path) -> Result<()> {
        write_atomic(csv_path, self.to_csv()?.as_bytes())?;
        let json =
            serde_json::to_string_pretty(self).map_err(|e| Error::json("race summary", e))?;
        write_atomic(summary_path, format!("{json}\n").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalsim::BenchKind;

    fn small_params() -> TpeParams {
        TpeParams {
            n_initial: 5,
            n_total: 15,
            ..TpeParams::default()
        }
    }

    #[test]
    fn evaluations_to_target() {
        let t = Trajectory {
            optimizer: Optimizer::Random,
            seed: 0,
            best_so_far: vec![0.2, 0.5, 0.995, 1.0],
        };
        assert_eq!(t.evaluations_to(0.99), 3);
        assert_eq!(t.evaluations_to(1.5), 5);
    }

    #[test]
    fn needs_enough_seeds() {
        let seeds: Vec<u64> = (0..5).collect();
        let r = run_race(
            &BenchObjective::default(),
            &[Optimizer::KmeansTpe, Optimizer::ClassicTpe],
            &seeds,
            &small_params(),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn random_race_is_reproducible() {
        let seeds: Vec<u64> = (0..20).collect();
        let objective = BenchObjective {
            kind: BenchKind::QuadraticMixed,
            dims: 3,
            ..BenchObjective::default()
        };
        let run = || {
            run_race(
                &objective,
                &[Optimizer::Random, Optimizer::Random],
                &seeds,
                &small_params(),
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
        assert_eq!(a.trajectories[0], a.trajectories[1]);
    }
}
