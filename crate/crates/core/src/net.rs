//! Small fully connected ReLU networks with exact reverse-mode gradients,
//! optionally under per-layer fake quantization of weights and input
//! activations (straight-through gradients).

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::quantize_in_place;
use crate::space::{validate_layers, LayerKind, LayerShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    CrossEntropy,
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Targets {
    Classes(Vec<usize>),
    Values(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Targets,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Samples at the given indices, in order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: match &self.targets {
                Targets::Classes(c) => Targets::Classes(indices.iter().map(|&i| c[i]).collect()),
                Targets::Values(v) => {
                    Targets::Values(indices.iter().map(|&i| v[i].clone()).collect())
                }
            },
        }
    }

    pub fn head(&self, count: usize) -> Dataset {
        let idx: Vec<usize> = (0..count.min(self.len())).collect();
        self.select(&idx)
    }
}

/// Weights (row-major, out × in) and biases of one dense layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TinyNet {
    pub layers: Vec<LayerShape>,
    pub params: Vec<DenseParams>,
    pub activation: Activation,
    pub loss: Loss,
}

/// Per-layer gradients of the mean loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

struct Pass {
    /// Input to each layer as multiplied (after activation quantization).
    inputs: Vec<Vec<f64>>,
    /// Effective (possibly quantized) weights.
    weights: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
}

impl TinyNet {
    /// Builds a net with He-initialized weights and zero biases.
    pub fn new<R: Rng + ?Sized>(layers: Vec<LayerShape>, loss: Loss, rng: &mut R) -> Result<Self> {
        validate_layers(&layers)?;
        for (i, layer) in layers.iter().enumerate() {
            if layer.kind != LayerKind::Dense {
                return Err(Error::input(format!(
                    "layer `{}`: only dense layers are supported by the tiny network",
                    layer.name
                )));
            }
            if layer.input_from.is_some_and(|src| src + 1 != i) {
                return Err(Error::input(format!(
                    "layer `{}`: the tiny network is a plain chain",
                    layer.name
                )));
            }
        }
        let params = layers
            .iter()
            .map(|l| {
                let std = (2.0 / l.in_channels as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                DenseParams {
                    weights: (0..l.weight_count()).map(|_| normal.sample(rng)).collect(),
                    bias: vec![0.0; l.out_channels as usize],
                }
            })
            .collect();
        Ok(TinyNet {
            layers,
            params,
            activation: Activation::Relu,
            loss,
        })
    }

    /// Dense chain with the given unit counts; the last layer keeps its width.
    pub fn mlp_shapes(units: &[u64]) -> Vec<LayerShape> {
        let n = units.len() - 1;
        units
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let layer = LayerShape::dense(format!("fc{i}"), w[0], w[1]);
                if i + 1 == n {
                    layer.fixed_width()
                } else {
                    layer
                }
            })
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_channels as usize
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_channels as usize)
    }

    pub fn parameter_count(&self) -> usize {
        self.params
            .iter()
            .map(|p| p.weights.len() + p.bias.len())
            .sum()
    }

    /// Checks that stored parameters match the declared shapes.
    pub fn validate(&self) -> Result<()> {
        validate_layers(&self.layers)?;
        if self.params.len() != self.layers.len() {
            return Err(Error::input("parameter list does not match layer list"));
        }
        for (l, p) in self.layers.iter().zip(&self.params) {
            if l.kind != LayerKind::Dense {
                return Err(Error::input(format!("layer `{}` is not dense", l.name)));
            }
            if p.weights.len() as u64 != l.weight_count() || p.bias.len() as u64 != l.out_channels {
                return Err(Error::input(format!(
                    "layer `{}` parameters do not match its shape",
                    l.name
                )));
            }
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Dataset) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::input("empty batch"));
        }
        let d = self.input_dim();
        if let Some(x) = batch.inputs.iter().find(|x| x.len() != d) {
            return Err(Error::input(format!(
                "input of length {} for a network expecting {d}",
                x.len()
            )));
        }
        let out = self.output_dim();
        match (&batch.targets, self.loss) {
            (Targets::Classes(c), Loss::CrossEntropy) => {
                if c.len() != batch.len() {
                    return Err(Error::input("target count differs from input count"));
                }
                if let Some(y) = c.iter().find(|&&y| y >= out) {
                    return Err(Error::input(format!(
                        "class {y} out of range for {out} outputs"
                    )));
                }
            }
            (Targets::Values(v), Loss::Mse) => {
                if v.len() != batch.len() {
                    return Err(Error::input("target count differs from input count"));
                }
                if v.iter().any(|y| y.len() != out) {
                    return Err(Error::input(format!(
                        "regression targets must have {out} entries"
                    )));
                }
            }
            (Targets::Classes(_), Loss::Mse) => {
                return Err(Error::input("mse loss needs real-valued targets"));
            }
            (Targets::Values(_), Loss::CrossEntropy) => {
                return Err(Error::input("cross-entropy loss needs class targets"));
            }
        }
        Ok(())
    }

    fn forward_pass(&self, batch: &Dataset, bits: Option<&[u32]>) -> Pass {
        let n = batch.len();
        let mut x: Vec<f64> = batch.inputs.iter().flatten().copied().collect();
        let mut pass = Pass {
            inputs: Vec::with_capacity(self.layers.len()),
            weights: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let last = self.layers.len() - 1;
        for (l, (shape, p)) in self.layers.iter().zip(&self.params).enumerate() {
            let din = shape.in_channels as usize;
            let dout = shape.out_channels as usize;
            let mut w = p.weights.clone();
            if let Some(bits) = bits {
                quantize_in_place(&mut x, bits[l]);
                quantize_in_place(&mut w, bits[l]);
            }
            let mut z = vec![0.0; n * dout];
            for s in 0..n {
                let xs = &x[s * din..(s + 1) * din];
                for o in 0..dout {
                    let row = &w[o * din..(o + 1) * din];
                    z[s * dout + o] =
                        p.bias[o] + row.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            let next = if l == last {
                z.clone()
            } else {
                z.iter().map(|v| v.max(0.0)).collect()
            };
            pass.inputs.push(std::mem::replace(&mut x, next));
            pass.weights.push(w);
            pass.pre.push(z);
        }
        pass
    }

    /// Loss value and gradient of the loss w.r.t. the logits (both means over the batch).
    fn loss_and_seed(&self, logits: &[f64], batch: &Dataset) -> (f64, Vec<f64>) {
        let n = batch.len();
        let k = self.output_dim();
        let mut seed = vec![0.0; n * k];
        let mut total = 0.0;
        match &batch.targets {
            Targets::Classes(classes) => {
                for s in 0..n {
                    let z = &logits[s * k..(s + 1) * k];
                    let peak = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    let exps: Vec<f64> = z.iter().map(|v| (v - peak).exp()).collect();
                    let sum: f64 = exps.iter().sum();
                    total += sum.ln() + peak - z[classes[s]];
                    for o in 0..k {
                        let target = if o == classes[s] { 1.0 } else { 0.0 };
                        seed[s * k + o] = (exps[o] / sum - target) / n as f64;
                    }
                }
            }
            Targets::Values(values) => {
                for s in 0..n {
                    for o in 0..k {
                        let diff = logits[s * k + o] - values[s][o];
                        total += diff * diff;
                        seed[s * k + o] = 2.0 * diff / n as f64;
                    }
                }
            }
        }
        (total / n as f64, seed)
    }

    /// Logits for every sample, row-major (samples × outputs).
    pub fn logits(&self, batch: &Dataset, bits: Option<&[u32]>) -> Result<Vec<f64>> {
        self.check_batch_inputs(batch)?;
        let pass = self.forward_pass(batch, bits);
        let last = pass.pre.len() - 1;
        Ok(pass.pre[last].clone())
    }

    fn check_batch_inputs(&self, batch: &Dataset) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::input("empty batch"));
        }
        let d = self.input_dim();
        if batch.inputs.iter().any(|x| x.len() != d) {
            return Err(Error::input(format!(
                "network expects inputs of length {d}"
            )));
        }
        Ok(())
    }

    pub fn loss(&self, batch: &Dataset) -> Result<f64> {
        self.check_batch(batch)?;
        let pass = self.forward_pass(batch, None);
        Ok(self.loss_and_seed(&pass.pre[pass.pre.len() - 1], batch).0)
    }

    /// Exact gradient of the mean loss.
    pub fn gradient(&self, batch: &Dataset) -> Result<Gradients> {
        Ok(self.loss_and_gradient(batch, None)?.1)
    }

    /// Mean loss and its gradient. With `bits`, weights and layer inputs are
    /// fake-quantized in the forward pass and gradients pass straight through
    /// the rounding.
    pub fn loss_and_gradient(
        &self,
        batch: &Dataset,
        bits: Option<&[u32]>,
    ) -> Result<(f64, Gradients)> {
        self.check_batch(batch)?;
        if let Some(b) = bits {
            if b.len() != self.layers.len() {
                return Err(Error::input("one bit-width per layer required"));
            }
        }
        let n = batch.len();
        let pass = self.forward_pass(batch, bits);
        let last = self.layers.len() - 1;
        let (loss, mut dz) = self.loss_and_seed(&pass.pre[last], batch);

        let mut gw = vec![Vec::new(); self.layers.len()];
        let mut gb = vec![Vec::new(); self.layers.len()];
        for l in (0..self.layers.len()).rev() {
            let din = self.layers[l].in_channels as usize;
            let dout = self.layers[l].out_channels as usize;
            let x = &pass.inputs[l];
            let w = &pass.weights[l];
            let mut dw = vec![0.0; dout * din];
            let mut db = vec![0.0; dout];
            for s in 0..n {
                let xs = &x[s * din..(s + 1) * din];
                for o in 0..dout {
                    let g = dz[s * dout + o];
                    if g == 0.0 {
                        continue;
                    }
                    db[o] += g;
                    for (slot, xi) in dw[o * din..(o + 1) * din].iter_mut().zip(xs) {
                        *slot += g * xi;
                    }
                }
            }
            gw[l] = dw;
            gb[l] = db;
            if l > 0 {
                let prev_pre = &pass.pre[l - 1];
                let mut dx = vec![0.0; n * din];
                for s in 0..n {
                    for o in 0..dout {
                        let g = dz[s * dout + o];
                        if g == 0.0 {
                            continue;
                        }
                        let row = &w[o * din..(o + 1) * din];
                        for (slot, wi) in dx[s * din..(s + 1) * din].iter_mut().zip(row) {
                            *slot += g * wi;
                        }
                    }
                }
                for (d, z) in dx.iter_mut().zip(prev_pre) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
                dz = dx;
            }
        }
        Ok((
            loss,
            Gradients {
                weights: gw,
                bias: gb,
            },
        ))
    }

    /// Classification accuracy in [0, 1].
    pub fn accuracy(&self, batch: &Dataset, bits: Option<&[u32]>) -> Result<f64> {
        let Targets::Classes(classes) = &batch.targets else {
            return Err(Error::input("accuracy needs class targets"));
        };
        let logits = self.logits(batch, bits)?;
        let k = self.output_dim();
        let correct = classes
            .iter()
            .enumerate()
            .filter(|(s, &y)| {
                let z = &logits[s * k..(s + 1) * k];
                let arg = (0..k).fold(0, |best, o| if z[o] > z[best] { o } else { best });
                arg == y
            })
            .count();
        Ok(correct as f64 / batch.len() as f64)
    }

    /// Copy of the network with layer `layer`'s weights replaced.
    pub fn with_layer_weights(&self, layer: usize, weights: &[f64]) -> TinyNet {
        let mut net = self.clone();
        net.params[layer].weights.copy_from_slice(weights);
        net
    }
}
