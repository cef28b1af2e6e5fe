//! Hardware-aware cost models for an output-stationary systolic array of
//! DSP-based processing elements.
//!
//! Per layer with M′ filters and patch length N′ on an M×N array, packing
//! p multiplications per DSP:
//!
//! ```text
//! cycles = ⌈M′/M⌉ · (⌈N′/(N·p)⌉ · out_h · out_w + (M + N − 1))
//! ```
//!
//! The `M + N − 1` term is the pipeline fill paid once per array invocation.

pub mod packing;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{scale_layers, Configuration, LayerShape};

pub use packing::{
    capacity_check, packed_conv_simulate, packed_mac_simulate, CapacityRow, CapacityStatus,
    PackingLayout,
};

/// Bit-width of the fixed-point reference design.
pub const BASELINE_BITS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackingEntry {
    pub bits: u32,
    pub mults_per_dsp: u32,
    pub adds_per_dsp: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardwareSpec {
    /// Array rows (M): output filters processed per invocation.
    pub rows: u64,
    /// Array columns (N): patch entries consumed per cycle.
    pub cols: u64,
    pub dsp_a_width: u32,
    pub dsp_b_width: u32,
    pub accumulator_width: u32,
    pub packing_table: Vec<PackingEntry>,
    /// Used only to convert cycles to time in reports.
    pub clock_mhz: f64,
}

impl Default for HardwareSpec {
    fn default() -> Self {
        let entry = |bits, mults_per_dsp, adds_per_dsp| PackingEntry {
            bits,
            mults_per_dsp,
            adds_per_dsp,
        };
        HardwareSpec {
            rows: 32,
            cols: 32,
            dsp_a_width: 27,
            dsp_b_width: 18,
            accumulator_width: 48,
            packing_table: vec![
                entry(8, 2, 0),
                entry(6, 2, 0),
                entry(4, 6, 2),
                entry(3, 6, 2),
                entry(2, 15, 8),
            ],
            clock_mhz: 200.0,
        }
    }
}

impl HardwareSpec {
    // `!(x > 0.0)` also rejects NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::config(
                "systolic array dimensions must be at least 1",
            ));
        }
        if !(2..=63).contains(&self.dsp_a_width)
            || !(2..=63).contains(&self.dsp_b_width)
            || !(2..=63).contains(&self.accumulator_width)
        {
            return Err(Error::config("DSP port widths must lie in 2..=63 bits"));
        }
        if self.packing_table.iter().any(|e| e.mults_per_dsp == 0) {
            return Err(Error::config(
                "packing table entries need at least one multiplication",
            ));
        }
        if !(self.clock_mhz > 0.0) {
            return Err(Error::config("clock frequency must be positive"));
        }
        Ok(())
    }

    /// Multiplications per DSP per cycle; the 16-bit reference uses one.
    pub fn mults_per_dsp(&self, bits: u32) -> Result<u32> {
        if let Some(entry) = self.packing_table.iter().find(|e| e.bits == bits) {
            return Ok(entry.mults_per_dsp);
        }
        if bits == BASELINE_BITS {
            return Ok(1);
        }
        Err(Error::config(format!(
            "bit-width {bits} has no packing table entry"
        )))
    }
}

/// Upper bounds μ, τ, ε and lower bound π; absent bounds are inactive.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintSet {
    pub model_size_bytes: Option<f64>,
    pub latency_cycles: Option<f64>,
    pub energy: Option<f64>,
    pub throughput: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub bound: f64,
    pub value: f64,
    /// Excess relative to the bound; zero when satisfied.
    pub normalized: f64,
}

impl ConstraintSet {
    // `!(x > 0.0)` also rejects NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        for (name, bound) in self.bounds() {
            if let Some(b) = bound {
                if !(b > 0.0) {
                    return Err(Error::config(format!("constraint {name} must be positive")));
                }
            }
        }
        Ok(())
    }

    fn bounds(&self) -> [(&'static str, Option<f64>); 4] {
        [
            ("model_size_bytes", self.model_size_bytes),
            ("latency_cycles", self.latency_cycles),
            ("energy", self.energy),
            ("throughput", self.throughput),
        ]
    }

    pub fn is_empty(&self) -> bool {
        self.bounds().iter().all(|(_, b)| b.is_none())
    }

    /// Normalized violation of each active constraint.
    pub fn violations(&self, report: &CostReport) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut upper = |name: &str, bound: Option<f64>, value: f64| {
            if let Some(bound) = bound {
                out.push(Violation {
                    constraint: name.to_string(),
                    bound,
                    value,
                    normalized: ((value - bound) / bound).max(0.0),
                });
            }
        };
        upper(
            "model_size_bytes",
            self.model_size_bytes,
            report.model_size_bytes as f64,
        );
        upper(
            "latency_cycles",
            self.latency_cycles,
            report.latency_cycles as f64,
        );
        upper("energy", self.energy, report.energy_proxy);
        if let Some(bound) = self.throughput {
            let value = report.throughput_proxy;
            out.push(Violation {
                constraint: "throughput".into(),
                bound,
                value,
                normalized: ((bound - value) / bound).max(0.0),
            });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub name: String,
    pub bits: u32,
    pub width: f64,
    pub in_channels: u64,
    pub out_channels: u64,
    pub weight_count: u64,
    pub mac_count: u64,
    pub size_bytes: u64,
    pub cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub model_size_bytes: u64,
    pub latency_cycles: u64,
    pub latency_ms: f64,
    pub speedup_vs_baseline: f64,
    pub baseline_bits: u32,
    /// Packed-cycle count Σ MACs / mults-per-DSP; a proxy, not joules.
    pub energy_proxy: f64,
    /// 1 / latency_cycles.
    pub throughput_proxy: f64,
    pub layers: Vec<LayerCost>,
    /// Bit-widths in use whose tabulated packing exceeds admitted capacity.
    pub packing_warnings: Vec<String>,
}

fn check_config(layers: &[LayerShape], config: &Configuration) -> Result<()> {
    if config.bits.len() != layers.len() || config.widths.len() != layers.len() {
        return Err(Error::input(format!(
            "configuration covers {} bit and {} width entries for {} layers",
            config.bits.len(),
            config.widths.len(),
            layers.len()
        )));
    }
    if config.bits.contains(&0) {
        return Err(Error::input("bit-width 0 is not a valid choice"));
    }
    if config.widths.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::input("width multipliers must be positive"));
    }
    Ok(())
}

fn layer_bytes(weights: u64, bits: u32) -> u64 {
    (u128::from(weights) * u128::from(bits)).div_ceil(8) as u64
}

/// Weight storage in bytes after width scaling; each layer is rounded up to
/// whole bytes.
pub fn model_size(layers: &[LayerShape], config: &Configuration) -> Result<u64> {
    check_config(layers, config)?;
    Ok(scale_layers(layers, &config.widths)
        .iter()
        .zip(&config.bits)
        .map(|(l, &b)| layer_bytes(l.weight_count(), b))
        .sum())
}

fn layer_cycles(layer: &LayerShape, mults_per_dsp: u32, hw: &HardwareSpec) -> u64 {
    let invocations = layer.out_channels.div_ceil(hw.rows);
    let inner = layer
        .patch_len()
        .div_ceil(hw.cols * u64::from(mults_per_dsp));
    let passes = layer.out_h * layer.out_w;
    invocations * (inner * passes + hw.rows + hw.cols - 1)
}

pub fn latency_cycles(
    layers: &[LayerShape],
    config: &Configuration,
    hw: &HardwareSpec,
) -> Result<u64> {
    check_config(layers, config)?;
    let scaled = scale_layers(layers, &config.widths);
    let mut total = 0;
    for (layer, &bits) in scaled.iter().zip(&config.bits) {
        total += layer_cycles(layer, hw.mults_per_dsp(bits)?, hw);
    }
    Ok(total)
}

/// Latency of `baseline` divided by latency of `config`.
pub fn speedup(
    layers: &[LayerShape],
    config: &Configuration,
    baseline: &Configuration,
    hw: &HardwareSpec,
) -> Result<f64> {
    let base = latency_cycles(layers, baseline, hw)?;
    let this = latency_cycles(layers, config, hw)?;
    Ok(base as f64 / this as f64)
}

/// All cost metrics for `config`, with speedup measured against the
/// unscaled model at `baseline_bits`.
pub fn cost_report(
    layers: &[LayerShape],
    config: &Configuration,
    hw: &HardwareSpec,
    baseline_bits: u32,
) -> Result<CostReport> {
    hw.validate()?;
    check_config(layers, config)?;
    let scaled = scale_layers(layers, &config.widths);
    let mut per_layer = Vec::with_capacity(layers.len());
    let mut energy = 0.0;
    for ((layer, &bits), &width) in scaled.iter().zip(&config.bits).zip(&config.widths) {
        let p = hw.mults_per_dsp(bits)?;
        let cycles = layer_cycles(layer, p, hw);
        energy += layer.mac_count() as f64 / f64::from(p);
        per_layer.push(LayerCost {
            name: layer.name.clone(),
            bits,
            width,
            in_channels: layer.in_channels,
            out_channels: layer.out_channels,
            weight_count: layer.weight_count(),
            mac_count: layer.mac_count(),
            size_bytes: layer_bytes(layer.weight_count(), bits),
            cycles,
        });
    }
    let latency: u64 = per_layer.iter().map(|l| l.cycles).sum();
    let baseline = Configuration::uniform(layers.len(), baseline_bits, 1.0);
    let base_latency = latency_cycles(layers, &baseline, hw)?;

    let flagged: Vec<CapacityRow> = capacity_check(hw)
        .into_iter()
        .filter(|row| !row.is_admitted())
        .collect();
    let mut packing_warnings = Vec::new();
    for row in flagged {
        if config.bits.contains(&row.bits) {
            packing_warnings.push(format!(
                "{}-bit packing of {} mults/{} adds per DSP exceeds the admitted bit-exact layout",
                row.bits, row.mults_per_dsp, row.adds_per_dsp
            ));
        }
    }

    Ok(CostReport {
        model_size_bytes: per_layer.iter().map(|l| l.size_bytes).sum(),
        latency_cycles: latency,
        latency_ms: latency as f64 / (hw.clock_mhz * 1e3),
        speedup_vs_baseline: base_latency as f64 / latency as f64,
        baseline_bits,
        energy_proxy: energy,
        throughput_proxy: 1.0 / latency as f64,
        layers: per_layer,
        packing_warnings,
    })
}
