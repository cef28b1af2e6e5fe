//! Desk-scale objective evaluation: quantization-aware fine-tuning of a tiny
//! network for one configuration, plus analytic benchmark objectives.

pub mod bench;
pub mod task;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use crate::quant::quantize_tensor;
pub use bench::{Bench, BenchKind, BenchObjective};
pub use task::{SyntheticTask, TaskKind};

use crate::error::{Error, Result};
use crate::hw::{cost_report, ConstraintSet, HardwareSpec, Violation, BASELINE_BITS};
use crate::net::{Dataset, DenseParams, Loss, TinyNet};
use crate::quant::FULL_PRECISION_BITS;
use crate::rng::{seeded, STREAM_EVALUATION, STREAM_INIT};
use crate::space::{scale_layers, Configuration};

/// Training hyperparameters shared by pre-training and per-trial fine-tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 4,
            learning_rate: 0.01,
            batch_size: 32,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        Ok(())
    }
}

/// Per-trial evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub train: TrainOptions,
    /// Lagrangian multiplier applied to every normalized violation.
    pub penalty: f64,
    pub baseline_bits: u32,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            train: TrainOptions::default(),
            penalty: 10.0,
            baseline_bits: BASELINE_BITS,
        }
    }
}

/// Outcome of evaluating one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Accuracy minus penalties; −∞ for a failed trial.
    pub objective: f64,
    pub accuracy: f64,
    pub model_size_bytes: u64,
    pub latency_cycles: u64,
    pub energy_proxy: f64,
    pub violations: Vec<Violation>,
    /// Σ λ · normalized violation.
    pub penalty: f64,
    pub failed: bool,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
    rate: f64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(net: &TinyNet, rate: f64) -> Self {
        let shapes: Vec<usize> = net
            .params
            .iter()
            .flat_map(|p| [p.weights.len(), p.bias.len()])
            .collect();
        Adam {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            rate,
        }
    }

    fn update(&mut self, net: &mut TinyNet, weights: &[Vec<f64>], bias: &[Vec<f64>]) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        for (l, p) in net.params.iter_mut().enumerate() {
            for (slot, (param, grad)) in [(&mut p.weights, &weights[l]), (&mut p.bias, &bias[l])]
                .into_iter()
                .enumerate()
            {
                let m = &mut self.m[2 * l + slot];
                let v = &mut self.v[2 * l + slot];
                for i in 0..param.len() {
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
                    param[i] -= self.rate * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// Mini-batch Adam on the mean loss, with optional fake quantization.
/// Returns the mean loss of the final epoch; a non-finite loss aborts with a
/// numeric error.
pub fn train<R: Rng + ?Sized>(
    net: &mut TinyNet,
    data: &Dataset,
    bits: Option<&[u32]>,
    options: &TrainOptions,
    rng: &mut R,
) -> Result<f64> {
    options.validate()?;
    if data.is_empty() {
        return Err(Error::input("cannot train on an empty dataset"));
    }
    let mut adam = Adam::new(net, options.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_loss = 0.0;
    for _ in 0..options.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(options.batch_size) {
            let batch = data.select(chunk);
            let (loss, grads) = net.loss_and_gradient(&batch, bits)?;
            if !loss.is_finite() {
                return Err(Error::Numeric {
                    layer: "loss".into(),
                    message: format!("training loss became {loss}"),
                });
            }
            total += loss * chunk.len() as f64;
            adam.update(net, &grads.weights, &grads.bias);
        }
        epoch_loss = total / data.len() as f64;
    }
    Ok(epoch_loss)
}

/// Generates the task data and trains a full-precision template network with
/// the given hidden layer sizes.
pub fn pretrain(
    task: &SyntheticTask,
    hidden: &[u64],
    options: &TrainOptions,
    seed: u64,
) -> Result<(TinyNet, Dataset, Dataset)> {
    let (train_set, test_set) = task.generate()?;
    let mut units = vec![2u64];
    units.extend_from_slice(hidden);
    units.push(task.class_count() as u64);
    let mut init = seeded(seed, STREAM_INIT);
    let mut net = TinyNet::new(TinyNet::mlp_shapes(&units), Loss::CrossEntropy, &mut init)?;
    let mut rng = seeded(seed, STREAM_EVALUATION);
    train(&mut net, &train_set, None, options, &mut rng)?;
    Ok((net, train_set, test_set))
}

/// Width-scaled copy of `template`: weights of units present in both keep
/// their trained values, units added by a multiplier above one are freshly
/// He-initialized.
pub fn scaled_net<R: Rng + ?Sized>(
    template: &TinyNet,
    widths: &[f64],
    rng: &mut R,
) -> Result<TinyNet> {
    if widths.len() != template.layers.len() {
        return Err(Error::input(format!(
            "{} width multipliers for {} layers",
            widths.len(),
            template.layers.len()
        )));
    }
    let layers = scale_layers(&template.layers, widths);
    let params = layers
        .iter()
        .zip(&template.layers)
        .zip(&template.params)
        .map(|((new, old), p)| {
            let (din, dout) = (new.in_channels as usize, new.out_channels as usize);
            let old_in = old.in_channels as usize;
            let normal = Normal::new(0.0, (2.0 / din as f64).sqrt()).expect("positive std");
            let mut weights = Vec::with_capacity(din * dout);
            for o in 0..dout {
                for i in 0..din {
                    let inherited = (o < old.out_channels as usize && i < old_in)
                        .then(|| p.weights[o * old_in + i]);
                    weights.push(inherited.unwrap_or_else(|| normal.sample(rng)));
                }
            }
            let bias = (0..dout)
                .map(|o| p.bias.get(o).copied().unwrap_or(0.0))
                .collect();
            DenseParams { weights, bias }
        })
        .collect();
    Ok(TinyNet {
        layers,
        params,
        activation: template.activation,
        loss: template.loss,
    })
}

fn check_bits(config: &Configuration) -> Result<()> {
    match config
        .bits
        .iter()
        .find(|&&b| !(2..=FULL_PRECISION_BITS).contains(&b))
    {
        Some(b) => Err(Error::input(format!("bit-width {b} outside [2, 16]"))),
        None => Ok(()),
    }
}

/// Fine-tunes the width-scaled template under `config`'s quantization and
/// scores it: test accuracy minus λ · Σ normalized constraint violations.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    config: &Configuration,
    template: &TinyNet,
    train_set: &Dataset,
    test_set: &Dataset,
    constraints: &ConstraintSet,
    hw: &HardwareSpec,
    options: &EvalOptions,
    seed: u64,
) -> Result<Evaluation> {
    options.train.validate()?;
    constraints.validate()?;
    if config.len() != template.layers.len() || config.widths.len() != config.len() {
        return Err(Error::input(format!(
            "configuration has {} entries for {} layers",
            config.len(),
            template.layers.len()
        )));
    }
    check_bits(config)?;
    let cost = cost_report(&template.layers, config, hw, options.baseline_bits)?;
    let violations = constraints.violations(&cost);
    let penalty: f64 = violations
        .iter()
        .map(|v| options.penalty * v.normalized)
        .sum();

    let mut init = seeded(seed, STREAM_INIT);
    let mut net = scaled_net(template, &config.widths, &mut init)?;
    let mut rng = seeded(seed, STREAM_EVALUATION);
    let trained = train(
        &mut net,
        train_set,
        Some(&config.bits),
        &options.train,
        &mut rng,
    );
    let (accuracy, failed) = match trained {
        Ok(_) => (net.accuracy(test_set, Some(&config.bits))?, false),
        Err(Error::Numeric { .. }) => (0.0, true),
        Err(e) => return Err(e),
    };
    Ok(Evaluation {
        objective: if failed {
            f64::NEG_INFINITY
        } else {
            accuracy - penalty
        },
        accuracy,
        model_size_bytes: cost.model_size_bytes,
        latency_cycles: cost.latency_cycles,
        energy_proxy: cost.energy_proxy,
        violations,
        penalty,
        failed,
    })
}
