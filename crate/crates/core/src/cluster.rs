//! Exact one-dimensional k-means.
//!
//! Optimal 1-D clusters are contiguous in sorted order, so the partition is
//! found by dynamic programming over the sorted distinct values in
//! O(k·m²) time (m distinct values). Equal values are never split, which
//! caps the number of clusters at m.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    /// Cluster rank per input point; 0 is the cluster with the largest centroid.
    pub labels: Vec<usize>,
    /// Centroids sorted non-increasing.
    pub centroids: Vec<f64>,
    /// Within-cluster sum of squares.
    pub inertia: f64,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Clusters `values` into at most `k` groups and ranks groups by centroid,
/// largest first. `k` is clamped to the number of distinct values.
///
/// When two partitions have equal cost the boundary value goes to the
/// cluster with the larger centroid.
#[allow(clippy::needless_range_loop)] // the DP indexes two tables by the same bounds
pub fn k_means_and_sort(values: &[f64], k: usize) -> Result<Clustering> {
    if values.is_empty() {
        return Err(Error::input("cannot cluster an empty list"));
    }
    if k == 0 {
        return Err(Error::input("cluster count must be at least 1"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("cannot cluster non-finite values"));
    }

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    // distinct ascending values with multiplicities
    let mut distinct: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    let mut group_of = vec![0usize; values.len()];
    for &i in &order {
        let v = values[i];
        if distinct.last() != Some(&v) {
            distinct.push(v);
            counts.push(0.0);
        }
        counts[distinct.len() - 1] += 1.0;
        group_of[i] = distinct.len() - 1;
    }
    let m = distinct.len();
    let k = k.min(m);

    // Work on values mapped to [0, 1] so that costs are scale and shift free.
    let lo = distinct[0];
    let span = distinct[m - 1] - lo;
    let z: Vec<f64> = if span > 0.0 {
        distinct.iter().map(|v| (v - lo) / span).collect()
    } else {
        vec![0.0; m]
    };
    let mut w = vec![0.0; m + 1];
    let mut s = vec![0.0; m + 1];
    let mut q = vec![0.0; m + 1];
    for i in 0..m {
        w[i + 1] = w[i] + counts[i];
        s[i + 1] = s[i] + counts[i] * z[i];
        q[i + 1] = q[i] + counts[i] * z[i] * z[i];
    }
    let cost = |a: usize, b: usize| -> f64 {
        let n = w[b] - w[a];
        let sum = s[b] - s[a];
        (q[b] - q[a] - sum * sum / n).max(0.0)
    };

    // best[j][i]: cost of splitting the first i distinct values into j+1 clusters
    let mut best = vec![vec![f64::INFINITY; m + 1]; k];
    let mut split = vec![vec![0usize; m + 1]; k];
    for i in 1..=m {
        best[0][i] = cost(0, i);
    }
    for j in 1..k {
        for i in (j + 1)..=m {
            let mut arg = j;
            let mut val = f64::INFINITY;
            for start in j..i {
                let c = best[j - 1][start] + cost(start, i);
                if c < val {
                    val = c;
                    arg = start;
                }
            }
            best[j][i] = val;
            split[j][i] = arg;
        }
    }

    // segments in ascending order of value
    let mut bounds = vec![m];
    let mut end = m;
    for j in (1..k).rev() {
        let start = split[j][end];
        bounds.push(start);
        end = start;
    }
    bounds.push(0);
    bounds.reverse();

    let mut segment_of = vec![0usize; m];
    for seg in 0..k {
        for slot in &mut segment_of[bounds[seg]..bounds[seg + 1]] {
            *slot = seg;
        }
    }

    let labels: Vec<usize> = group_of.iter().map(|&g| k - 1 - segment_of[g]).collect();
    let mut sums = vec![0.0; k];
    let mut sizes = vec![0usize; k];
    for (i, &label) in labels.iter().enumerate() {
        sums[label] += values[i];
        sizes[label] += 1;
    }
    let centroids: Vec<f64> = sums
        .iter()
        .zip(&sizes)
        .map(|(s, &n)| s / n as f64)
        .collect();
    let inertia = values
        .iter()
        .zip(&labels)
        .map(|(v, &l)| (v - centroids[l]).powi(2))
        .sum();

    Ok(Clustering {
        labels,
        centroids,
        inertia,
    })
}

/// Indices of points in the top cluster (desirable) and the bottom cluster
/// (undesirable). Middle clusters belong to neither; with a single cluster
/// everything is desirable.
pub fn top_bottom_indices(clustering: &Clustering) -> (Vec<usize>, Vec<usize>) {
    let bottom = clustering.k() - 1;
    let mut top = Vec::new();
    let mut low = Vec::new();
    for (i, &label) in clustering.labels.iter().enumerate() {
        if label == 0 {
            top.push(i);
        } else if label == bottom {
            low.push(i);
        }
    }
    (top, low)
}

pub fn top_bottom<T: Clone>(clustering: &Clustering, items: &[T]) -> (Vec<T>, Vec<T>) {
    assert_eq!(
        clustering.labels.len(),
        items.len(),
        "one item per clustered value"
    );
    let (top, low) = top_bottom_indices(clustering);
    (
        top.into_iter().map(|i| items[i].clone()).collect(),
        low.into_iter().map(|i| items[i].clone()).collect(),
    )
}
