//! Per-layer Hessian-trace sensitivity.
//!
//! Second-order quantities are obtained from finite differences of the exact
//! reverse-mode gradient: full Hessians for small layers, Hutchinson trace
//! estimates with Rademacher probes otherwise. Normalized traces
//! (trace / weight count) are clustered with exact 1-D k-means and ranked so
//! that label 0 is the most sensitive cluster.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cluster::k_means_and_sort;
use crate::error::{Error, Result};
use crate::net::{Dataset, Loss, TinyNet};
use crate::rng::{seeded, STREAM_PROBES};

/// Largest layer for which a dense Hessian is formed.
pub const MAX_EXACT_WEIGHTS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Exact,
    Hutchinson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSensitivity {
    pub name: String,
    pub weight_count: u64,
    pub raw_trace: f64,
    pub normalized_trace: f64,
    /// Rank of the layer's cluster; 0 has the largest centroid.
    pub cluster_label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    /// Requested cluster count.
    pub k: usize,
    pub estimator: Estimator,
    pub probe_count: usize,
    pub sample_count: usize,
    pub layers: Vec<LayerSensitivity>,
    /// Centroids of the normalized traces, non-increasing.
    pub centroids: Vec<f64>,
}

impl SensitivityReport {
    /// Clusters normalized traces and assembles the report.
    pub fn from_traces(
        names: &[String],
        weight_counts: &[u64],
        raw_traces: &[f64],
        k: usize,
        estimator: Estimator,
        probe_count: usize,
        sample_count: usize,
    ) -> Result<Self> {
        if k == 0 || k > names.len() {
            return Err(Error::config(format!(
                "cluster count {k} must lie in 1..={}",
                names.len()
            )));
        }
        let normalized: Vec<f64> = raw_traces
            .iter()
            .zip(weight_counts)
            .map(|(t, &w)| t / w as f64)
            .collect();
        let clustering = k_means_and_sort(&normalized, k)?;
        let layers = names
            .iter()
            .enumerate()
            .map(|(i, name)| LayerSensitivity {
                name: name.clone(),
                weight_count: weight_counts[i],
                raw_trace: raw_traces[i],
                normalized_trace: normalized[i],
                cluster_label: clustering.labels[i],
            })
            .collect();
        Ok(SensitivityReport {
            k,
            estimator,
            probe_count,
            sample_count,
            layers,
            centroids: clustering.centroids,
        })
    }
}

fn check_layer(net: &TinyNet, layer: usize) -> Result<()> {
    if layer >= net.layers.len() {
        return Err(Error::input(format!(
            "layer index {layer} out of range for {} layers",
            net.layers.len()
        )));
    }
    Ok(())
}

/// Gradient of the mean loss w.r.t. one layer's weights.
pub fn layer_gradient(net: &TinyNet, layer: usize, batch: &Dataset) -> Result<Vec<f64>> {
    check_layer(net, layer)?;
    Ok(net.gradient(batch)?.weights.swap_remove(layer))
}

fn inf_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Finite-difference step for Hessian-vector products: 1e-3·(1 + ‖w‖∞).
pub fn hvp_step(weights: &[f64]) -> f64 {
    1e-3 * (1.0 + inf_norm(weights))
}

fn gradient_at(net: &TinyNet, layer: usize, batch: &Dataset, weights: &[f64]) -> Result<Vec<f64>> {
    layer_gradient(&net.with_layer_weights(layer, weights), layer, batch)
}

/// H·v by central differences of the layer gradient.
pub fn hessian_vector_product(
    net: &TinyNet,
    layer: usize,
    batch: &Dataset,
    v: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    let w = &net.params[layer].weights;
    let plus: Vec<f64> = w.iter().zip(v).map(|(a, b)| a + step * b).collect();
    let minus: Vec<f64> = w.iter().zip(v).map(|(a, b)| a - step * b).collect();
    let gp = gradient_at(net, layer, batch, &plus)?;
    let gm = gradient_at(net, layer, batch, &minus)?;
    Ok(gp
        .iter()
        .zip(&gm)
        .map(|(p, m)| (p - m) / (2.0 * step))
        .collect())
}

/// Column-by-column finite-difference Hessian, before symmetrization.
pub fn hessian_unsymmetrized(net: &TinyNet, layer: usize, batch: &Dataset) -> Result<DMatrix<f64>> {
    check_layer(net, layer)?;
    let d = net.params[layer].weights.len();
    if d > MAX_EXACT_WEIGHTS {
        return Err(Error::Capacity(format!(
            "layer `{}` has {d} weights; dense Hessians are limited to {MAX_EXACT_WEIGHTS}",
            net.layers[layer].name
        )));
    }
    let step = 1e-4 * (1.0 + inf_norm(&net.params[layer].weights));
    let mut h = DMatrix::zeros(d, d);
    let mut e = vec![0.0; d];
    for j in 0..d {
        e[j] = 1.0;
        let col = hessian_vector_product(net, layer, batch, &e, step)?;
        e[j] = 0.0;
        for (i, v) in col.into_iter().enumerate() {
            h[(i, j)] = v;
        }
    }
    Ok(h)
}

/// Symmetrized finite-difference Hessian of the loss w.r.t. one layer.
pub fn hessian_exact(net: &TinyNet, layer: usize, batch: &Dataset) -> Result<DMatrix<f64>> {
    let h = hessian_unsymmetrized(net, layer, batch)?;
    Ok((&h + h.transpose()) * 0.5)
}

/// Gauss-Newton curvature Jᵀ·H_out·J averaged over the batch, where J is
/// the Jacobian of the logits w.r.t. the layer weights and H_out the
/// Hessian of the loss w.r.t. the logits. Positive semidefinite.
pub fn gauss_newton(net: &TinyNet, layer: usize, batch: &Dataset) -> Result<DMatrix<f64>> {
    check_layer(net, layer)?;
    let w = net.params[layer].weights.clone();
    let d = w.len();
    if d > MAX_EXACT_WEIGHTS {
        return Err(Error::Capacity(format!(
            "layer `{}` has {d} weights; dense curvature is limited to {MAX_EXACT_WEIGHTS}",
            net.layers[layer].name
        )));
    }
    let n = batch.len();
    let k = net.output_dim();
    let step = 1e-5 * (1.0 + inf_norm(&w));
    // jac[j] holds d logits / d w_j for every sample (n × k)
    let mut jac = Vec::with_capacity(d);
    let mut probe = w.clone();
    for j in 0..d {
        probe[j] = w[j] + step;
        let up = net.with_layer_weights(layer, &probe).logits(batch, None)?;
        probe[j] = w[j] - step;
        let down = net.with_layer_weights(layer, &probe).logits(batch, None)?;
        probe[j] = w[j];
        jac.push(
            up.iter()
                .zip(&down)
                .map(|(a, b)| (a - b) / (2.0 * step))
                .collect::<Vec<f64>>(),
        );
    }
    let logits = net.logits(batch, None)?;
    let mut g = DMatrix::zeros(d, d);
    for s in 0..n {
        let js = DMatrix::from_fn(k, d, |o, j| jac[j][s * k + o]);
        let h_out = match net.loss {
            Loss::Mse => DMatrix::identity(k, k) * 2.0,
            Loss::CrossEntropy => {
                let z = &logits[s * k..(s + 1) * k];
                let peak = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let e: Vec<f64> = z.iter().map(|v| (v - peak).exp()).collect();
                let total: f64 = e.iter().sum();
                let p = DVector::from_iterator(k, e.iter().map(|v| v / total));
                DMatrix::from_diagonal(&p) - &p * p.transpose()
            }
        };
        g += js.transpose() * h_out * js;
    }
    Ok(g / n as f64)
}

/// Hutchinson estimate (1/probes)·Σ vᵀHv with Rademacher probes.
pub fn hutchinson_trace(
    net: &TinyNet,
    layer: usize,
    batch: &Dataset,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    check_layer(net, layer)?;
    if probes == 0 {
        return Err(Error::config("at least one probe is required"));
    }
    let d = net.params[layer].weights.len();
    let step = hvp_step(&net.params[layer].weights);
    let mut rng = seeded(seed, STREAM_PROBES);
    let mut total = 0.0;
    for _ in 0..probes {
        let v: Vec<f64> = (0..d)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let hv = hessian_vector_product(net, layer, batch, &v, step)?;
        let q: f64 = v.iter().zip(&hv).map(|(a, b)| a * b).sum();
        if !q.is_finite() {
            return Err(Error::Numeric {
                layer: net.layers[layer].name.clone(),
                message: "non-finite Hessian-vector product".into(),
            });
        }
        total += q;
    }
    Ok(total / probes as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub trace: f64,
    /// max over trials of ½ΔwᵀHΔw / (½Tr H).
    pub max_ratio: f64,
    pub violations: usize,
    pub trials: usize,
    /// False when Tr H ≤ 0 and the bound says nothing.
    pub applicable: bool,
}

/// Samples unit-norm perturbations and checks ½ΔwᵀHΔw ≤ ½Tr(H).
pub fn lemma1_check_matrix(h: &DMatrix<f64>, trials: usize, seed: u64) -> LemmaCheck {
    let d = h.nrows();
    let trace = h.trace();
    if trace <= 0.0 {
        return LemmaCheck {
            trace,
            max_ratio: f64::NAN,
            violations: 0,
            trials: 0,
            applicable: false,
        };
    }
    let bound = 0.5 * trace;
    let mut rng = seeded(seed, STREAM_PROBES);
    let mut max_ratio = f64::NEG_INFINITY;
    let mut violations = 0;
    for _ in 0..trials {
        let mut dw = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = dw.norm();
        if norm == 0.0 {
            continue;
        }
        dw /= norm;
        let q = 0.5 * dw.dot(&(h * &dw));
        max_ratio = max_ratio.max(q / bound);
        if q > bound * (1.0 + 1e-9) {
            violations += 1;
        }
    }
    LemmaCheck {
        trace,
        max_ratio,
        violations,
        trials,
        applicable: true,
    }
}

/// Lemma check on the finite-difference Hessian of a layer.
pub fn lemma1_check(
    net: &TinyNet,
    layer: usize,
    batch: &Dataset,
    trials: usize,
    seed: u64,
) -> Result<LemmaCheck> {
    let h = hessian_exact(net, layer, batch)?;
    Ok(lemma1_check_matrix(&h, trials, seed))
}

/// Options of [`analyze_hessian`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivityOptions {
    pub k: usize,
    pub probes: usize,
    /// Samples drawn (from the front of the dataset) for the estimate.
    pub samples: usize,
    pub estimator: Estimator,
    pub seed: u64,
}

impl Default for SensitivityOptions {
    fn default() -> Self {
        SensitivityOptions {
            k: 4,
            probes: 100,
            samples: 512,
            estimator: Estimator::Hutchinson,
            seed: 0,
        }
    }
}

/// Normalized per-layer Hessian traces, clustered and ranked.
pub fn analyze_hessian(
    net: &TinyNet,
    dataset: &Dataset,
    options: &SensitivityOptions,
) -> Result<SensitivityReport> {
    net.validate()?;
    let batch = dataset.head(options.samples);
    let mut traces = Vec::with_capacity(net.layers.len());
    for layer in 0..net.layers.len() {
        let trace = match options.estimator {
            Estimator::Hutchinson => hutchinson_trace(
                net,
                layer,
                &batch,
                options.probes,
                crate::rng::derive_seed(options.seed, layer as u64),
            )?,
            Estimator::Exact => hessian_exact(net, layer, &batch)?.trace(),
        };
        traces.push(trace);
    }
    let names: Vec<String> = net.layers.iter().map(|l| l.name.clone()).collect();
    let counts: Vec<u64> = net.layers.iter().map(|l| l.weight_count()).collect();
    let probes = match options.estimator {
        Estimator::Hutchinson => options.probes,
        Estimator::Exact => 0,
    };
    SensitivityReport::from_traces(
        &names,
        &counts,
        &traces,
        options.k,
        options.estimator,
        probes,
        batch.len(),
    )
}
