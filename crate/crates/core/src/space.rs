//! Joint bit-width × layer-width search space.
//!
//! A [`SearchSpace`] assigns every layer an ordered set of candidate
//! bit-widths (descending) and width multipliers (ascending). The pruned
//! variant is built from a [`SensitivityReport`]: layers in clusters with
//! larger normalized Hessian traces receive subsets with larger bit-widths.

use std::collections::HashMap;

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::sensitivity::SensitivityReport;
use crate::tpe::{Dimension, Domain};

/// Candidate bit-widths shared by weights and input activations.
pub const BIT_CHOICES: [u32; 5] = [8, 6, 4, 3, 2];

/// Layer-width multipliers applied to the filter count.
pub const WIDTH_CHOICES: [f64; 5] = [0.75, 0.875, 1.0, 1.125, 1.25];

/// Default candidate subsets for four sensitivity clusters, highest trace first.
pub fn default_bit_subsets() -> Vec<Vec<u32>> {
    vec![vec![8, 6], vec![6, 4, 3], vec![4, 3, 2], vec![3, 2]]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d,
    Dense,
    /// One filter per input channel; `in_channels` holds the per-group fan-in (1)
    /// and the channel count follows the producing layer.
    DepthwiseConv2d,
}

fn one() -> u64 {
    1
}

fn yes() -> bool {
    true
}

fn is_true(v: &bool) -> bool {
    *v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerShape {
    pub name: String,
    pub kind: LayerKind,
    pub in_channels: u64,
    pub out_channels: u64,
    #[serde(default = "one")]
    pub kernel_h: u64,
    #[serde(default = "one")]
    pub kernel_w: u64,
    #[serde(default = "one")]
    pub out_h: u64,
    #[serde(default = "one")]
    pub out_w: u64,
    /// Index of the layer whose output feeds this one; `None` means the
    /// previous layer in the list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_from: Option<usize>,
    /// Classifier heads keep their output count regardless of multiplier.
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub width_scalable: bool,
}

impl LayerShape {
    pub fn dense(name: impl Into<String>, inputs: u64, outputs: u64) -> Self {
        LayerShape {
            name: name.into(),
            kind: LayerKind::Dense,
            in_channels: inputs,
            out_channels: outputs,
            kernel_h: 1,
            kernel_w: 1,
            out_h: 1,
            out_w: 1,
            input_from: None,
            width_scalable: true,
        }
    }

    pub fn conv(
        name: impl Into<String>,
        in_channels: u64,
        out_channels: u64,
        kernel: u64,
        out_hw: u64,
    ) -> Self {
        LayerShape {
            name: name.into(),
            kind: LayerKind::Conv2d,
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            out_h: out_hw,
            out_w: out_hw,
            input_from: None,
            width_scalable: true,
        }
    }

    pub fn depthwise(name: impl Into<String>, channels: u64, kernel: u64, out_hw: u64) -> Self {
        LayerShape {
            kind: LayerKind::DepthwiseConv2d,
            ..LayerShape::conv(name, 1, channels, kernel, out_hw)
        }
    }

    pub fn with_input_from(mut self, index: usize) -> Self {
        self.input_from = Some(index);
        self
    }

    pub fn fixed_width(mut self) -> Self {
        self.width_scalable = false;
        self
    }

    pub fn weight_count(&self) -> u64 {
        self.in_channels * self.out_channels * self.kernel_h * self.kernel_w
    }

    pub fn mac_count(&self) -> u64 {
        self.weight_count() * self.out_h * self.out_w
    }

    /// Entries in one input feature patch (N′).
    pub fn patch_len(&self) -> u64 {
        self.kernel_h * self.kernel_w * self.in_channels
    }
}

fn source_index(layers: &[LayerShape], index: usize) -> Option<usize> {
    match layers[index].input_from {
        Some(src) => Some(src),
        None if index > 0 => Some(index - 1),
        None => None,
    }
}

/// Checks dimensions and producer/consumer channel agreement.
pub fn validate_layers(layers: &[LayerShape]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::config("layer list is empty"));
    }
    let mut names = HashMap::new();
    for (i, layer) in layers.iter().enumerate() {
        if names.insert(layer.name.as_str(), i).is_some() {
            return Err(Error::config(format!(
                "duplicate layer name `{}`",
                layer.name
            )));
        }
        let dims = [
            layer.in_channels,
            layer.out_channels,
            layer.kernel_h,
            layer.kernel_w,
            layer.out_h,
            layer.out_w,
        ];
        if dims.contains(&0) {
            return Err(Error::config(format!(
                "layer `{}` has a zero dimension",
                layer.name
            )));
        }
        match layer.kind {
            LayerKind::Dense if layer.kernel_h != 1 || layer.kernel_w != 1 => {
                return Err(Error::config(format!(
                    "dense layer `{}` must have a 1x1 kernel",
                    layer.name
                )));
            }
            LayerKind::DepthwiseConv2d if layer.in_channels != 1 => {
                return Err(Error::config(format!(
                    "depthwise layer `{}` must declare in_channels = 1",
                    layer.name
                )));
            }
            _ => {}
        }
        if let Some(src) = layer.input_from {
            if src >= i {
                return Err(Error::config(format!(
                    "layer `{}` reads from layer {src}, which does not precede it",
                    layer.name
                )));
            }
        }
        if let Some(src) = source_index(layers, i) {
            let produced = layers[src].out_channels;
            let consumed = match layer.kind {
                LayerKind::DepthwiseConv2d => layer.out_channels,
                _ => layer.in_channels,
            };
            if produced != consumed {
                return Err(Error::config(format!(
                    "layer `{}` expects {consumed} input channels but `{}` produces {produced}",
                    layer.name, layers[src].name
                )));
            }
        } else if layer.kind == LayerKind::DepthwiseConv2d {
            return Err(Error::config(format!(
                "depthwise layer `{}` needs a producing layer",
                layer.name
            )));
        }
    }
    Ok(())
}

/// Applies width multipliers to filter counts and chains the resulting
/// channel counts into consumers.
///
/// Scaled counts are `round(out_channels * multiplier)`, at least 1.
/// Depthwise layers follow their producer and ignore their own multiplier.
pub fn scale_layers(layers: &[LayerShape], widths: &[f64]) -> Vec<LayerShape> {
    assert_eq!(layers.len(), widths.len(), "one width multiplier per layer");
    let mut scaled: Vec<LayerShape> = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let mut out = layer.clone();
        let source = source_index(layers, i);
        match layer.kind {
            LayerKind::DepthwiseConv2d => {
                // validated to have a producer
                out.out_channels = scaled[source.unwrap_or(0)].out_channels;
            }
            _ => {
                if let Some(src) = source {
                    out.in_channels = scaled[src].out_channels;
                }
                if layer.width_scalable {
                    out.out_channels =
                        ((layer.out_channels as f64 * widths[i]).round() as u64).max(1);
                }
            }
        }
        scaled.push(out);
    }
    scaled
}

/// One choice of bit-width and width multiplier per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Configuration {
    pub bits: Vec<u32>,
    pub widths: Vec<f64>,
}

impl Configuration {
    pub fn uniform(layers: usize, bits: u32, width: f64) -> Self {
        Configuration {
            bits: vec![bits; layers],
            widths: vec![width; layers],
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub layers: Vec<LayerShape>,
    pub bit_candidates: Vec<Vec<u32>>,
    pub width_candidates: Vec<Vec<f64>>,
}

impl SearchSpace {
    /// Unpruned space: every layer may take any bit-width in [`BIT_CHOICES`]
    /// and any multiplier in [`WIDTH_CHOICES`].
    pub fn full(layers: Vec<LayerShape>) -> Result<Self> {
        let n = layers.len();
        SearchSpace::new(
            layers,
            vec![BIT_CHOICES.to_vec(); n],
            vec![WIDTH_CHOICES.to_vec(); n],
        )
    }

    /// Builds a space from explicit candidate sets. Sets are sorted
    /// (bits descending, widths ascending) and deduplicated.
    pub fn new(
        layers: Vec<LayerShape>,
        mut bit_candidates: Vec<Vec<u32>>,
        mut width_candidates: Vec<Vec<f64>>,
    ) -> Result<Self> {
        validate_layers(&layers)?;
        if bit_candidates.len() != layers.len() || width_candidates.len() != layers.len() {
            return Err(Error::config(format!(
                "{} layers but {} bit sets and {} width sets",
                layers.len(),
                bit_candidates.len(),
                width_candidates.len()
            )));
        }
        for (l, bits) in bit_candidates.iter_mut().enumerate() {
            normalize_bits(bits)
                .map_err(|e| Error::config(format!("layer `{}`: {e}", layers[l].name)))?;
        }
        for (l, widths) in width_candidates.iter_mut().enumerate() {
            if widths.is_empty() {
                return Err(Error::config(format!(
                    "layer `{}` has no width candidates",
                    layers[l].name
                )));
            }
            if widths.iter().any(|w| !w.is_finite() || *w <= 0.0) {
                return Err(Error::config(format!(
                    "layer `{}` has a non-positive width multiplier",
                    layers[l].name
                )));
            }
            widths.sort_by(f64::total_cmp);
            widths.dedup();
        }
        Ok(SearchSpace {
            layers,
            bit_candidates,
            width_candidates,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn contains(&self, config: &Configuration) -> bool {
        self.validate(config).is_ok()
    }

    pub fn validate(&self, config: &Configuration) -> Result<()> {
        if config.bits.len() != self.num_layers() || config.widths.len() != self.num_layers() {
            return Err(Error::input(format!(
                "configuration has {} bit and {} width entries for {} layers",
                config.bits.len(),
                config.widths.len(),
                self.num_layers()
            )));
        }
        for l in 0..self.num_layers() {
            if !self.bit_candidates[l].contains(&config.bits[l]) {
                return Err(Error::input(format!(
                    "layer `{}`: bit-width {} not among {:?}",
                    self.layers[l].name, config.bits[l], self.bit_candidates[l]
                )));
            }
            if !self.width_candidates[l].contains(&config.widths[l]) {
                return Err(Error::input(format!(
                    "layer `{}`: width {} not among {:?}",
                    self.layers[l].name, config.widths[l], self.width_candidates[l]
                )));
            }
        }
        Ok(())
    }

    /// Categorical view used by the surrogate models: dimensions alternate
    /// bit-width and width multiplier per layer.
    pub fn domain(&self) -> Domain {
        let mut dims = Vec::with_capacity(2 * self.num_layers());
        for (l, layer) in self.layers.iter().enumerate() {
            dims.push(Dimension {
                name: format!("{}.bits", layer.name),
                values: self.bit_candidates[l]
                    .iter()
                    .map(|&b| f64::from(b))
                    .collect(),
            });
            dims.push(Dimension {
                name: format!("{}.width", layer.name),
                values: self.width_candidates[l].clone(),
            });
        }
        Domain { dims }
    }

    pub fn to_indices(&self, config: &Configuration) -> Result<Vec<usize>> {
        self.validate(config)?;
        let mut out = Vec::with_capacity(2 * self.num_layers());
        for l in 0..self.num_layers() {
            out.push(
                self.bit_candidates[l]
                    .iter()
                    .position(|&b| b == config.bits[l])
                    .unwrap(),
            );
            out.push(
                self.width_candidates[l]
                    .iter()
                    .position(|&w| w == config.widths[l])
                    .unwrap(),
            );
        }
        Ok(out)
    }

    pub fn from_indices(&self, indices: &[usize]) -> Configuration {
        assert_eq!(indices.len(), 2 * self.num_layers());
        let bits = (0..self.num_layers())
            .map(|l| self.bit_candidates[l][indices[2 * l]])
            .collect();
        let widths = (0..self.num_layers())
            .map(|l| self.width_candidates[l][indices[2 * l + 1]])
            .collect();
        Configuration { bits, widths }
    }
}

fn normalize_bits(bits: &mut Vec<u32>) -> std::result::Result<(), String> {
    if bits.is_empty() {
        return Err("empty bit-width candidate set".into());
    }
    if let Some(b) = bits.iter().find(|b| !BIT_CHOICES.contains(b)) {
        return Err(format!("bit-width {b} not in {BIT_CHOICES:?}"));
    }
    bits.sort_unstable_by(|a, b| b.cmp(a));
    bits.dedup();
    Ok(())
}

/// Assigns each layer the candidate subset of its sensitivity cluster.
///
/// `subsets[r]` belongs to the cluster with the r-th largest centroid. With
/// `exempt_first_last`, the first and last layers always get `subsets[0]`.
pub fn build_pruned_space(
    layers: &[LayerShape],
    report: &SensitivityReport,
    k: usize,
    subsets: &[Vec<u32>],
    exempt_first_last: bool,
) -> Result<SearchSpace> {
    if k != subsets.len() {
        return Err(Error::config(format!(
            "{k} clusters requested but {} candidate subsets given",
            subsets.len()
        )));
    }
    let mut normalized = Vec::with_capacity(subsets.len());
    for (r, subset) in subsets.iter().enumerate() {
        let mut s = subset.clone();
        normalize_bits(&mut s).map_err(|e| Error::config(format!("subset {r}: {e}")))?;
        normalized.push(s);
    }
    let by_name: HashMap<&str, usize> = report
        .layers
        .iter()
        .map(|entry| (entry.name.as_str(), entry.cluster_label))
        .collect();
    let last = layers.len().saturating_sub(1);
    let mut bit_candidates = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate() {
        let label = *by_name.get(layer.name.as_str()).ok_or_else(|| {
            Error::config(format!(
                "layer `{}` missing from sensitivity report",
                layer.name
            ))
        })?;
        if label >= k {
            return Err(Error::config(format!(
                "layer `{}` has cluster label {label} but only {k} subsets exist",
                layer.name
            )));
        }
        let rank = if exempt_first_last && (l == 0 || l == last) {
            0
        } else {
            label
        };
        bit_candidates.push(normalized[rank].clone());
    }
    SearchSpace::new(
        layers.to_vec(),
        bit_candidates,
        vec![WIDTH_CHOICES.to_vec(); layers.len()],
    )
}

/// Number of distinct configurations, as an exact integer.
pub fn space_size(space: &SearchSpace) -> BigUint {
    space
        .bit_candidates
        .iter()
        .zip(&space.width_candidates)
        .fold(BigUint::from(1u32), |acc, (b, w)| {
            acc * BigUint::from(b.len()) * BigUint::from(w.len())
        })
}

/// Draws `count` configurations, each coordinate uniform over its candidate set.
pub fn sample_randomly(space: &SearchSpace, count: usize, seed: u64) -> Result<Vec<Configuration>> {
    if space.bit_candidates.iter().any(Vec::is_empty)
        || space.width_candidates.iter().any(Vec::is_empty)
    {
        return Err(Error::config("search space has an empty candidate set"));
    }
    let mut rng = seeded(seed, crate::rng::STREAM_RANDOM_PHASE);
    let configs = (0..count)
        .map(|_| {
            let bits = space
                .bit_candidates
                .iter()
                .map(|set| set[rng.random_range(0..set.len())])
                .collect();
            let widths = space
                .width_candidates
                .iter()
                .map(|set| set[rng.random_range(0..set.len())])
                .collect();
            Configuration { bits, widths }
        })
        .collect();
    Ok(configs)
}
