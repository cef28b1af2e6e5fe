//! Synthetic black-box objectives on a categorical grid, with analytically
//! known optima, for optimizer races.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, STREAM_BENCH};
use crate::tpe::Domain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchKind {
    /// Stepped weighted quadratic whose lower `flat_fraction` is one tied plateau.
    PlateauGrid,
    /// Flat floor with a broad local hill and a narrower global peak.
    DeceptiveFlat,
    /// Smooth weighted quadratic.
    QuadraticMixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchObjective {
    pub kind: BenchKind,
    pub dims: usize,
    pub levels: usize,
    pub flat_fraction: f64,
    /// Value quantization steps of the plateau grid.
    pub steps: usize,
    pub seed: u64,
}

impl Default for BenchObjective {
    fn default() -> Self {
        BenchObjective {
            kind: BenchKind::PlateauGrid,
            dims: 6,
            levels: 4,
            flat_fraction: 0.75,
            steps: 20,
            seed: 0,
        }
    }
}

/// Height of the local hill below the global optimum.
pub const DECEPTIVE_MARGIN: f64 = 0.1;
/// Floor value of the deceptive landscape.
pub const DECEPTIVE_FLOOR: f64 = 0.5;

/// An objective instance with its per-seed optimum and weights resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Bench {
    pub spec: BenchObjective,
    pub optimum: Vec<usize>,
    pub weights: Vec<f64>,
    /// Plateau cut-off on the smooth score (plateau grid only).
    pub plateau_cut: f64,
    /// Local hill centre (deceptive only).
    pub decoy: Vec<usize>,
}

impl BenchObjective {
    pub fn validate(&self) -> Result<()> {
        if self.dims == 0 || self.levels < 2 {
            return Err(Error::config(
                "benchmarks need at least one dimension of two levels",
            ));
        }
        if !(0.0..1.0).contains(&self.flat_fraction) {
            return Err(Error::config("flat_fraction must lie in [0, 1)"));
        }
        if self.steps == 0 {
            return Err(Error::config("steps must be positive"));
        }
        Ok(())
    }

    pub fn domain(&self) -> Domain {
        Domain::grid(self.dims, self.levels)
    }

    pub fn instantiate(&self) -> Result<Bench> {
        self.validate()?;
        let mut rng = seeded(self.seed, STREAM_BENCH);
        let optimum: Vec<usize> = (0..self.dims)
            .map(|_| rng.random_range(0..self.levels))
            .collect();
        let weights: Vec<f64> = (0..self.dims).map(|_| rng.random_range(0.5..1.5)).collect();
        let decoy = optimum.iter().map(|&o| self.levels - 1 - o).collect();
        let mut bench = Bench {
            spec: self.clone(),
            optimum,
            weights,
            plateau_cut: 0.0,
            decoy,
        };
        if self.kind == BenchKind::PlateauGrid && self.flat_fraction > 0.0 {
            bench.plateau_cut = bench.smooth_quantile(self.flat_fraction, &mut rng);
        }
        Ok(bench)
    }
}

impl Bench {
    fn unit(&self, index: usize) -> f64 {
        index as f64 / (self.spec.levels - 1) as f64
    }

    /// Weighted mean squared distance in unit coordinates, in [0, 1].
    fn distance2(&self, x: &[usize], centre: &[usize]) -> f64 {
        let total: f64 = self.weights.iter().sum();
        x.iter()
            .zip(centre)
            .zip(&self.weights)
            .map(|((&a, &b), w)| w * (self.unit(a) - self.unit(b)).powi(2))
            .sum::<f64>()
            / total
    }

    /// Smooth score 1 − d²(x, x*), maximal (1) at the optimum.
    pub fn smooth(&self, x: &[usize]) -> f64 {
        1.0 - self.distance2(x, &self.optimum)
    }

    fn smooth_quantile<R: Rng + ?Sized>(&self, q: f64, rng: &mut R) -> f64 {
        let cells = (self.spec.levels as f64).powi(self.spec.dims as i32);
        let mut scores: Vec<f64> = if cells <= 2e6 {
            let mut x = vec![0usize; self.spec.dims];
            let mut out = Vec::with_capacity(cells as usize);
            loop {
                out.push(self.smooth(&x));
                let mut d = 0;
                loop {
                    if d == x.len() {
                        return finish(out, q);
                    }
                    x[d] += 1;
                    if x[d] < self.spec.levels {
                        break;
                    }
                    x[d] = 0;
                    d += 1;
                }
            }
        } else {
            (0..200_000)
                .map(|_| {
                    let x: Vec<usize> = (0..self.spec.dims)
                        .map(|_| rng.random_range(0..self.spec.levels))
                        .collect();
                    self.smooth(&x)
                })
                .collect()
        };
        scores.sort_by(f64::total_cmp);
        scores[((scores.len() - 1) as f64 * q) as usize]
    }

    pub fn value(&self, x: &[usize]) -> f64 {
        let steps = self.spec.steps as f64;
        match self.spec.kind {
            BenchKind::QuadraticMixed => self.smooth(x),
            BenchKind::PlateauGrid => {
                let s = self.smooth(x).max(self.plateau_cut);
                (s * steps + 1e-9).floor() / steps
            }
            BenchKind::DeceptiveFlat => {
                let reach = 0.25 * (1.0 - self.spec.flat_fraction).max(0.05);
                let slope_local = (1.0 - DECEPTIVE_MARGIN - DECEPTIVE_FLOOR) / reach;
                let slope_global = (1.0 - DECEPTIVE_FLOOR) / (0.5 * reach);
                let local = 1.0 - DECEPTIVE_MARGIN - slope_local * self.distance2(x, &self.decoy);
                let global = 1.0 - slope_global * self.distance2(x, &self.optimum);
                DECEPTIVE_FLOOR.max(local).max(global)
            }
        }
    }

    /// Known maximum value.
    pub fn optimum_value(&self) -> f64 {
        1.0
    }
}

fn finish(mut scores: Vec<f64>, q: f64) -> f64 {
    scores.sort_by(f64::total_cmp);
    scores[((scores.len() - 1) as f64 * q) as usize]
}
