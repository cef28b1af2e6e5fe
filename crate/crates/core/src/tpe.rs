//! Parzen-style surrogates over categorical dimensions and the two ways of
//! splitting observed trials into desirable and undesirable sets: the
//! classic single quantile threshold and the k-means dual threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{k_means_and_sort, top_bottom_indices};
use crate::error::{Error, Result};

/// One categorical search dimension; `values` are the numeric candidates,
/// used only by the ordinal-Gaussian fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub values: Vec<f64>,
}

impl Dimension {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub dims: Vec<Dimension>,
}

impl Domain {
    /// A domain of `dims` dimensions with `levels` candidates each, valued 0..levels.
    pub fn grid(dims: usize, levels: usize) -> Self {
        Domain {
            dims: (0..dims)
                .map(|d| Dimension {
                    name: format!("x{d}"),
                    values: (0..levels).map(|v| v as f64).collect(),
                })
                .collect(),
        }
    }

    pub fn contains(&self, point: &[usize]) -> bool {
        point.len() == self.dims.len() && point.iter().zip(&self.dims).all(|(&i, d)| i < d.len())
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        self.dims
            .iter()
            .map(|d| rng.random_range(0..d.len()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Laplace-smoothed category frequencies.
    #[default]
    Categorical,
    /// Gaussian kernels over the numeric candidate values, renormalized on
    /// the support and mixed with a uniform prior.
    OrdinalGaussian,
}

/// Pseudo-count of the smoothing prior.
pub const SMOOTHING: f64 = 1.0;

/// Independent per-dimension categorical distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub probs: Vec<Vec<f64>>,
}

impl Surrogate {
    pub fn uniform(domain: &Domain) -> Self {
        Surrogate {
            probs: domain
                .dims
                .iter()
                .map(|d| vec![1.0 / d.len() as f64; d.len()])
                .collect(),
        }
    }

    pub fn log_density(&self, point: &[usize]) -> f64 {
        point.iter().zip(&self.probs).map(|(&i, p)| p[i].ln()).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        self.probs
            .iter()
            .map(|p| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, &pi) in p.iter().enumerate() {
                    acc += pi;
                    if u < acc {
                        return i;
                    }
                }
                p.len() - 1
            })
            .collect()
    }
}

/// Fits a surrogate to `points`; an empty set yields the uniform distribution.
pub fn fit_surrogate(points: &[&[usize]], domain: &Domain, mode: FitMode) -> Result<Surrogate> {
    for p in points {
        if !domain.contains(p) {
            return Err(Error::input("point outside the search domain"));
        }
    }
    if points.is_empty() {
        return Ok(Surrogate::uniform(domain));
    }
    let n = points.len() as f64;
    let probs = domain
        .dims
        .iter()
        .enumerate()
        .map(|(d, dim)| match mode {
            FitMode::Categorical => {
                let mut counts = vec![0.0; dim.len()];
                for p in points {
                    counts[p[d]] += 1.0;
                }
                let denom = n + SMOOTHING * dim.len() as f64;
                counts.iter().map(|c| (c + SMOOTHING) / denom).collect()
            }
            FitMode::OrdinalGaussian => ordinal_gaussian(points, d, dim),
        })
        .collect();
    Ok(Surrogate { probs })
}

fn ordinal_gaussian(points: &[&[usize]], d: usize, dim: &Dimension) -> Vec<f64> {
    let len = dim.len();
    let n = points.len() as f64;
    let (lo, hi) = dim
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if len == 1 || hi <= lo {
        return vec![1.0 / len as f64; len];
    }
    let mut probs = vec![SMOOTHING / len as f64; len];
    // Scott-style bandwidth on the value range, floored at half the mean gap
    let bandwidth = ((hi - lo) * n.powf(-0.2)).max(0.5 * (hi - lo) / (len - 1) as f64);
    for p in points {
        let centre = dim.values[p[d]];
        let kernel: Vec<f64> = dim
            .values
            .iter()
            .map(|v| (-0.5 * ((v - centre) / bandwidth).powi(2)).exp())
            .collect();
        let total: f64 = kernel.iter().sum();
        for (slot, k) in probs.iter_mut().zip(kernel) {
            *slot += k / total;
        }
    }
    let norm = n + SMOOTHING;
    probs.iter().map(|p| p / norm).collect()
}

/// Draws `candidates` points from `good` and returns the one maximizing
/// log good(x) − log bad(x); ties keep the earliest draw.
pub fn propose<R: Rng + ?Sized>(
    good: &Surrogate,
    bad: &Surrogate,
    candidates: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..candidates.max(1) {
        let x = good.sample(rng);
        let score = good.log_density(&x) - bad.log_density(&x);
        match &best {
            Some((s, _)) if score <= *s => {}
            _ => best = Some((score, x)),
        }
    }
    best.map(|(_, x)| x).unwrap_or_default()
}

/// Like [`propose`], but prefers candidates for which `is_new` holds: the
/// best-scoring new candidate wins, and only when every draw was evaluated
/// before does the overall best come back.
pub fn propose_new<R, F>(
    good: &Surrogate,
    bad: &Surrogate,
    candidates: usize,
    rng: &mut R,
    is_new: F,
) -> Vec<usize>
where
    R: Rng + ?Sized,
    F: Fn(&[usize]) -> bool,
{
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut best_new: Option<(f64, Vec<usize>)> = None;
    for _ in 0..candidates.max(1) {
        let x = good.sample(rng);
        let score = good.log_density(&x) - bad.log_density(&x);
        let slot = if is_new(&x) { &mut best_new } else { &mut best };
        match slot {
            Some((s, _)) if score <= *s => {}
            _ => *slot = Some((score, x)),
        }
    }
    best_new.or(best).map(|(_, x)| x).unwrap_or_default()
}

/// Type-7 (linear interpolation) quantile of `values` at probability `p`.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Indices of desirable and undesirable trials under one threshold rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub desirable: Vec<usize>,
    pub undesirable: Vec<usize>,
    /// Number of clusters used (k-means split only).
    pub k_used: Option<usize>,
}

/// Classic TPE split for maximization: threshold at the (1−γ) quantile,
/// everything at or above it desirable.
pub fn classic_threshold(objectives: &[f64], gamma: f64) -> Result<Split> {
    if objectives.is_empty() {
        return Err(Error::input("no objective values to split"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::config(format!("gamma {gamma} outside (0, 1)")));
    }
    let threshold = quantile(objectives, 1.0 - gamma);
    let (desirable, undesirable) = (0..objectives.len()).partition(|&i| objectives[i] >= threshold);
    Ok(Split {
        desirable,
        undesirable,
        k_used: None,
    })
}

/// Cluster count for the current annealing scale `c`: ⌈1/c⌉.
pub fn cluster_count(c: f64) -> usize {
    // the tolerance keeps exact reciprocals such as 1/0.25 from rounding up
    (1.0 / c - 1e-9).ceil().max(1.0) as usize
}

/// k-means dual-threshold split: the top cluster is desirable, the bottom
/// cluster undesirable, middle clusters are discarded.
///
/// k = ⌈1/c⌉ clamped to [2, distinct values]; a flat landscape with a single
/// distinct value yields one cluster and an empty undesirable set.
pub fn kmeans_split(objectives: &[f64], c: f64) -> Result<Split> {
    if objectives.is_empty() {
        return Err(Error::input("no objective values to split"));
    }
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::config(format!("annealing scale {c} outside (0, 1]")));
    }
    let k = cluster_count(c).max(2);
    let clustering = k_means_and_sort(objectives, k)?;
    let (desirable, undesirable) = top_bottom_indices(&clustering);
    Ok(Split {
        desirable,
        undesirable,
        k_used: Some(clustering.k()),
    })
}

/// Hyperparameters of the search loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TpeParams {
    /// Random configurations evaluated before the first surrogate fit.
    pub n_initial: usize,
    /// Total evaluation budget.
    pub n_total: usize,
    /// Initial annealing scale; the first surrogate step uses k = ⌈1/c⌉.
    pub c0: f64,
    /// Multiplicative decay of c.
    pub alpha: f64,
    /// Safety cap on surrogate iterations.
    pub max_iters: usize,
    pub n_ei_candidates: usize,
    /// Quantile of the classic threshold.
    pub gamma: f64,
    /// Surrogate iterations between annealing steps.
    pub anneal_every: usize,
    /// Prefer candidates that have not been evaluated yet.
    pub skip_evaluated: bool,
    pub fit_mode: FitMode,
}

impl Default for TpeParams {
    fn default() -> Self {
        TpeParams {
            n_initial: 20,
            n_total: 100,
            c0: 0.25,
            alpha: 0.98,
            max_iters: 100,
            n_ei_candidates: 24,
            gamma: 0.25,
            anneal_every: 1,
            skip_evaluated: true,
            fit_mode: FitMode::Categorical,
        }
    }
}

impl TpeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(format!(
                "alpha {} outside (0, 1]",
                self.alpha
            )));
        }
        if !(self.c0 > 0.0 && self.c0 <= 1.0) {
            return Err(Error::config(format!("c0 {} outside (0, 1]", self.c0)));
        }
        if self.n_initial < 1 {
            return Err(Error::config("n_initial must be at least 1"));
        }
        if self.n_total < self.n_initial {
            return Err(Error::config(format!(
                "n_total {} smaller than n_initial {}",
                self.n_total, self.n_initial
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config(format!(
                "gamma {} outside (0, 1)",
                self.gamma
            )));
        }
        if self.anneal_every == 0 {
            return Err(Error::config("anneal_every must be at least 1"));
        }
        Ok(())
    }

    /// Surrogate iterations actually run: n − n₀, capped by `max_iters`.
    pub fn surrogate_iterations(&self) -> usize {
        (self.n_total - self.n_initial).min(self.max_iters)
    }
}
