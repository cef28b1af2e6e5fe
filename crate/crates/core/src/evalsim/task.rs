use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Dataset, Targets};
use crate::rng::{seeded, STREAM_DATA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Gaussian blobs with centres evenly spaced on a circle.
    Blobs2d,
    /// Two interleaved spirals.
    TwoSpirals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticTask {
    pub kind: TaskKind,
    pub train_count: usize,
    pub test_count: usize,
    pub noise: f64,
    /// Class count for blobs; spirals always have two.
    pub classes: usize,
    pub seed: u64,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        SyntheticTask {
            kind: TaskKind::Blobs2d,
            train_count: 400,
            test_count: 400,
            noise: 0.9,
            classes: 4,
            seed: 0,
        }
    }
}

impl SyntheticTask {
    pub fn class_count(&self) -> usize {
        match self.kind {
            TaskKind::Blobs2d => self.classes,
            TaskKind::TwoSpirals => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_count == 0 || self.test_count == 0 {
            return Err(Error::config("task needs non-empty train and test splits"));
        }
        if self.kind == TaskKind::Blobs2d && self.classes < 2 {
            return Err(Error::config("blobs need at least two classes"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::config("noise must be a non-negative number"));
        }
        Ok(())
    }

    /// Train and test splits; class of sample i is i mod classes.
    pub fn generate(&self) -> Result<(Dataset, Dataset)> {
        self.validate()?;
        let mut rng = seeded(self.seed, STREAM_DATA);
        let train = self.draw(self.train_count, &mut rng);
        let test = self.draw(self.test_count, &mut rng);
        Ok((train, test))
    }

    fn draw<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Dataset {
        let classes = self.class_count();
        let normal = Normal::new(0.0, self.noise.max(1e-12)).expect("valid std");
        let mut inputs = Vec::with_capacity(count);
        let mut labels = Vec::with_capacity(count);
        for i in 0..count {
            let class = i % classes;
            let point = match self.kind {
                TaskKind::Blobs2d => {
                    let angle = 2.0 * PI * class as f64 / classes as f64;
                    vec![
                        2.0 * angle.cos() + normal.sample(rng),
                        2.0 * angle.sin() + normal.sample(rng),
                    ]
                }
                TaskKind::TwoSpirals => {
                    let t: f64 = rng.random_range(0.25..1.0);
                    let angle = 3.0 * PI * t + PI * class as f64;
                    vec![
                        2.0 * t * angle.cos() + 0.2 * normal.sample(rng),
                        2.0 * t * angle.sin() + 0.2 * normal.sample(rng),
                    ]
                }
            };
            inputs.push(point);
            labels.push(class);
        }
        Dataset {
            inputs,
            targets: Targets::Classes(labels),
        }
    }
}
