//! Chemical-space probes: roughness index, k-means and Rand index,
//! activity-cliff pairs, QSPR correlations and three-stage clustering.

mod cliffs;
mod correlation;
mod hierarchy;
mod kmeans;
mod rogi;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::Matrix;

pub use cliffs::{cliff_noncliff_ratio, detect_mmps, MmpConfig, MmpRecord};
pub use correlation::{
    correlation_report, qspr_correlation, ChannelCorrelation, QsprCorrelation, DEFAULT_PAIR_SAMPLE,
};
pub use hierarchy::{
    hierarchical_three_stage, ClusterReport, HierarchyConfig, HierarchyInput, HierarchyResult,
};
pub use kmeans::{default_k, kmeans, rand_index, ClusterAssignment, KMeans, KMeansConfig};
pub use rogi::{minmax_scale, rogi, rogi_from_distances, rogi_trace, LabeledSpace, RogiTrace};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("label {index} = {value} is outside [0, 1]")]
    LabelOutOfRange { index: usize, value: f64 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("k = {k} exceeds the number of points {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be positive")]
    ZeroK,
    #[error("no {0} pairs")]
    EmptyClass(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    /// `1 − a·b / (a·a + b·b − a·b)`; equals bit Tanimoto on 0/1 vectors.
    Tanimoto,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => euclidean(a, b),
            Metric::Tanimoto => {
                let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    ab += x * y;
                    aa += x * x;
                    bb += y * y;
                }
                let denom = aa + bb - ab;
                if denom <= 0.0 {
                    0.0
                } else {
                    (1.0 - ab / denom).max(0.0)
                }
            }
        }
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Symmetric `n x n` distances between the rows of `vectors`.
pub fn pairwise_distances(vectors: &Matrix, metric: Metric) -> Matrix {
    let n = vectors.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = metric.distance(vectors.row(i), vectors.row(j));
            d.set(i, j, v);
            d.set(j, i, v);
        }
    }
    d
}

/// Pearson correlation; a zero-variance series gives 0 with a warning.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "pearson series lengths");
    let n = x.len() as f64;
    if x.is_empty() {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        log::warn!("zero variance series, correlation set to 0");
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// All `i < j` pairs when there are at most `size` of them, otherwise
/// `size` distinct pairs drawn uniformly. Output is sorted.
pub fn sample_pairs<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let total = n * n.saturating_sub(1) / 2;
    let unrank = |mut r: usize| {
        let mut i = 0;
        while r >= n - 1 - i {
            r -= n - 1 - i;
            i += 1;
        }
        (i, i + 1 + r)
    };
    if total <= size {
        return (0..total).map(unrank).collect();
    }
    let mut ranks = sample(rng, total, size).into_vec();
    ranks.sort_unstable();
    ranks.into_iter().map(unrank).collect()
}
