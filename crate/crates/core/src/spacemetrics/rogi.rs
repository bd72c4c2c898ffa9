//! Roughness index over a complete-linkage dendrogram.

use super::{pairwise_distances, Metric, MetricsError};
use crate::encoder::Matrix;

#[derive(Debug, Clone)]
pub struct LabeledSpace {
    pub vectors: Matrix,
    /// Scaled to `[0, 1]`; see [`minmax_scale`].
    pub labels: Vec<f64>,
    pub metric: Metric,
}

/// `σ_t` after every merge, with `t` the normalised merge distance.
#[derive(Debug, Clone, PartialEq)]
pub struct RogiTrace {
    pub sigma0: f64,
    pub thresholds: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub value: f64,
}

/// Min-max scaling to `[0, 1]`; a constant series maps to zeros.
pub fn minmax_scale(labels: &[f64]) -> Vec<f64> {
    let lo = labels.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; labels.len()];
    }
    labels.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

fn check_labels(labels: &[f64]) -> Result<(), MetricsError> {
    if labels.len() < 2 {
        return Err(MetricsError::TooFewPoints {
            needed: 2,
            got: labels.len(),
        });
    }
    match labels.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(index) => Err(MetricsError::LabelOutOfRange {
            index,
            value: labels[index],
        }),
        None => Ok(()),
    }
}

/// Complete-linkage merges `(a, b, height)` by nearest-neighbour chain.
/// Slot `a` keeps the merged cluster, so point `a` is always inside it.
fn complete_linkage(dist: &Matrix) -> Vec<(usize, usize, f64)> {
    let n = dist.rows();
    let mut d = dist.clone();
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut chain: Vec<usize> = Vec::new();
    while merges.len() + 1 < n {
        if chain.is_empty() {
            chain.push(active.iter().position(|&x| x).expect("an active cluster"));
        }
        let a = *chain.last().expect("non-empty chain");
        let prev = chain.len().checked_sub(2).map(|i| chain[i]);
        let mut best = prev;
        let mut best_d = prev.map_or(f64::INFINITY, |p| d.get(a, p));
        for x in 0..n {
            if active[x] && x != a && d.get(a, x) < best_d {
                best = Some(x);
                best_d = d.get(a, x);
            }
        }
        let b = best.expect("two active clusters");
        if Some(b) == prev {
            chain.truncate(chain.len() - 2);
            let (keep, gone) = (a.min(b), a.max(b));
            merges.push((keep, gone, best_d));
            active[gone] = false;
            for x in 0..n {
                if active[x] && x != keep {
                    let v = d.get(keep, x).max(d.get(gone, x));
                    d.set(keep, x, v);
                    d.set(x, keep, v);
                }
            }
        } else {
            chain.push(b);
        }
    }
    merges.sort_by(|x, y| x.2.total_cmp(&y.2));
    merges
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Traces `σ_t` over a distance matrix, normalising distances by their
/// maximum, and integrates `2(σ0 − σ_t)` exactly over `t ∈ [0, 1]`.
pub fn rogi_trace(dist: &Matrix, labels: &[f64]) -> Result<RogiTrace, MetricsError> {
    check_labels(labels)?;
    let n = labels.len();
    if dist.shape() != (n, n) {
        return Err(MetricsError::LengthMismatch(dist.rows(), n));
    }
    let max = dist.data().iter().copied().fold(0.0, f64::max);
    let mean = labels.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = labels.iter().map(|v| v - mean).collect();
    // n·σ² = Σ_c S_c² / n_c over centred cluster sums S_c
    let ss: f64 = centered.iter().map(|c| c * c).sum();
    let sigma0 = (ss / n as f64).sqrt();
    if max <= 0.0 {
        return Ok(RogiTrace {
            sigma0,
            thresholds: Vec::new(),
            sigmas: Vec::new(),
            value: 0.0,
        });
    }
    let norm = dist.scale(1.0 / max);
    let mut parent: Vec<usize> = (0..n).collect();
    let mut sum = centered;
    let mut size = vec![1usize; n];
    let mut roots: Vec<usize> = (0..n).collect();
    let mut trace = RogiTrace {
        sigma0,
        thresholds: Vec::with_capacity(n - 1),
        sigmas: Vec::with_capacity(n - 1),
        value: 0.0,
    };
    let (mut sigma, mut last_t) = (sigma0, 0.0);
    for (a, b, t) in complete_linkage(&norm) {
        trace.value += 2.0 * (sigma0 - sigma) * (t - last_t);
        last_t = t;
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[rb] = ra;
        sum[ra] += sum[rb];
        size[ra] += size[rb];
        roots.retain(|&r| r != rb);
        // direct sum keeps a single cluster at exactly its centred total
        let ss: f64 = roots
            .iter()
            .map(|&r| sum[r] * sum[r] / size[r] as f64)
            .sum();
        // rounding must not break monotonicity
        let next = (ss / n as f64).sqrt().min(sigma);
        debug_assert!(next <= sigma);
        sigma = next;
        trace.thresholds.push(t);
        trace.sigmas.push(sigma);
    }
    trace.value += 2.0 * (sigma0 - sigma) * (1.0 - last_t);
    Ok(trace)
}

pub fn rogi_from_distances(dist: &Matrix, labels: &[f64]) -> Result<f64, MetricsError> {
    rogi_trace(dist, labels).map(|t| t.value)
}

pub fn rogi(space: &LabeledSpace) -> Result<f64, MetricsError> {
    if space.vectors.rows() != space.labels.len() {
        return Err(MetricsError::LengthMismatch(
            space.vectors.rows(),
            space.labels.len(),
        ));
    }
    check_labels(&space.labels)?;
    rogi_from_distances(
        &pairwise_distances(&space.vectors, space.metric),
        &space.labels,
    )
}
