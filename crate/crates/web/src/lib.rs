//! WebAssembly bindings for the browser demo: a cost explorer over the
//! built-in model shapes, 1-D k-means on user-typed values, and optimizer
//! races on the benchmark objectives.
//!
//! Every binding is a thin wrapper over a plain function returning JSON, so
//! the same code paths are testable natively.

use kmtpe_core::cluster::k_means_and_sort;
use kmtpe_core::driver::{run_race, Optimizer};
use kmtpe_core::evalsim::{BenchKind, BenchObjective};
use kmtpe_core::hw::{cost_report, HardwareSpec, BASELINE_BITS};
use kmtpe_core::models;
use kmtpe_core::space::Configuration;
use kmtpe_core::tpe::TpeParams;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct CostSummary {
    layers: usize,
    model_size_mb: f64,
    baseline_size_mb: f64,
    compression: f64,
    latency_cycles: u64,
    latency_ms: f64,
    speedup: f64,
    packing_warnings: Vec<String>,
}

/// Cost of `model` with every layer at `bits` and `width`.
pub fn cost(model: &str, bits: u32, width: f64, rows: u64, cols: u64) -> Result<String, String> {
    let layers = models::by_name(model).map_err(|e| e.to_string())?;
    let hw = HardwareSpec {
        rows,
        cols,
        ..HardwareSpec::default()
    };
    let config = Configuration::uniform(layers.len(), bits, width);
    let report = cost_report(&layers, &config, &hw, BASELINE_BITS).map_err(|e| e.to_string())?;
    let baseline = Configuration::uniform(layers.len(), BASELINE_BITS, 1.0);
    let base = cost_report(&layers, &baseline, &hw, BASELINE_BITS).map_err(|e| e.to_string())?;
    let summary = CostSummary {
        layers: layers.len(),
        model_size_mb: report.model_size_bytes as f64 / 1e6,
        baseline_size_mb: base.model_size_bytes as f64 / 1e6,
        compression: base.model_size_bytes as f64 / report.model_size_bytes as f64,
        latency_cycles: report.latency_cycles,
        latency_ms: report.latency_ms,
        speedup: report.speedup_vs_baseline,
        packing_warnings: report.packing_warnings,
    };
    serde_json::to_string(&summary).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct ClusterView {
    labels: Vec<usize>,
    centroids: Vec<f64>,
    inertia: f64,
}

/// Optimal 1-D k-means of comma- or space-separated numbers; cluster 0 has
/// the largest centroid.
pub fn cluster(values: &str, k: usize) -> Result<String, String> {
    let parsed: Vec<f64> = values
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| format!("`{s}` is not a number"))
        })
        .collect::<Result<_, _>>()?;
    let clustering = k_means_and_sort(&parsed, k).map_err(|e| e.to_string())?;
    serde_json::to_string(&ClusterView {
        labels: clustering.labels,
        centroids: clustering.centroids,
        inertia: clustering.inertia,
    })
    .map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct RaceView {
    optimizer: String,
    /// Median best-so-far value after each evaluation, across seeds.
    median_best: Vec<f64>,
    median_evaluations_to_target: f64,
}

/// Races the three optimizers on `kind` over `seeds` seeds and returns the
/// median best-so-far curve of each.
pub fn race(
    kind: &str,
    dims: usize,
    levels: usize,
    flat_fraction: f64,
    seeds: usize,
) -> Result<String, String> {
    let kind: BenchKind = serde_json::from_value(serde_json::Value::String(kind.into()))
        .map_err(|_| format!("unknown benchmark `{kind}`"))?;
    let objective = BenchObjective {
        kind,
        dims,
        levels,
        flat_fraction,
        ..BenchObjective::default()
    };
    let seeds: Vec<u64> = (0..seeds as u64).collect();
    let report = run_race(&objective, &Optimizer::ALL, &seeds, &TpeParams::default())
        .map_err(|e| e.to_string())?;
    let views: Vec<RaceView> = Optimizer::ALL
        .iter()
        .map(|&o| {
            let runs: Vec<&Vec<f64>> = report
                .trajectories
                .iter()
                .filter(|t| t.optimizer == o)
                .map(|t| &t.best_so_far)
                .collect();
            let median_best = (0..report.budget)
                .map(|i| {
                    let mut column: Vec<f64> = runs.iter().map(|r| r[i]).collect();
                    column.sort_by(f64::total_cmp);
                    let n = column.len();
                    if n % 2 == 1 {
                        column[n / 2]
                    } else {
                        0.5 * (column[n / 2 - 1] + column[n / 2])
                    }
                })
                .collect();
            RaceView {
                optimizer: o.name().to_string(),
                median_best,
                median_evaluations_to_target: report
                    .summary(o)
                    .map_or(f64::NAN, |s| s.median_evaluations_to_target),
            }
        })
        .collect();
    serde_json::to_string(&views).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = costReport)]
pub fn cost_js(
    model: &str,
    bits: u32,
    width: f64,
    rows: u64,
    cols: u64,
) -> Result<String, JsValue> {
    cost(model, bits, width, rows, cols).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = kmeans)]
pub fn cluster_js(values: &str, k: usize) -> Result<String, JsValue> {
    cluster(values, k).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = race)]
pub fn race_js(
    kind: &str,
    dims: usize,
    levels: usize,
    flat_fraction: f64,
    seeds: usize,
) -> Result<String, JsValue> {
    race(kind, dims, levels, flat_fraction, seeds).map_err(|e| JsValue::from_str(&e))
}
