//! Seeded k-means++ / Lloyd clustering and the Rand index.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::encoder::Matrix;

/// Cluster ids in `0..k`, every cluster non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub assignment: Vec<usize>,
    pub k: usize,
}

impl ClusterAssignment {
    /// Relabels arbitrary ids to `0..k` in order of first appearance.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let assignment = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        ClusterAssignment {
            assignment,
            k: map.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &a in &self.assignment {
            s[a] += 1;
        }
        s
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.assignment[i] == cluster)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeans {
    pub clusters: ClusterAssignment,
    pub centroids: Matrix,
    pub inertia: f64,
    pub iterations: usize,
}

/// Cluster count for Rand-index probes: `max(2, round(√(n/2)))`.
pub fn default_k(n: usize) -> usize {
    ((n as f64 / 2.0).sqrt().round() as usize)
        .max(2)
        .min(n.max(1))
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &Matrix) -> (usize, f64) {
    (0..centroids.rows())
        .map(|c| (c, sq(x, centroids.row(c))))
        .fold(
            (0, f64::INFINITY),
            |best, cur| if cur.1 < best.1 { cur } else { best },
        )
}

fn seed_plus_plus<R: Rng + ?Sized>(v: &Matrix, k: usize, rng: &mut R) -> Matrix {
    let n = v.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq(v.row(i), v.row(chosen[0]))).collect();
    while chosen.len() < k {
        // fewer distinct points than k: stop seeding
        let Ok(dist) = WeightedIndex::new(&d2) else {
            break;
        };
        let c = dist.sample(rng);
        chosen.push(c);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq(v.row(i), v.row(c)));
        }
    }
    v.select_rows(&chosen)
}

/// k-means++ seeding then Lloyd iterations. Empty clusters are re-seeded
/// at the point farthest from its centroid. With fewer than `k` distinct
/// points the returned `k` is smaller.
pub fn kmeans<R: Rng + ?Sized>(
    vectors: &Matrix,
    k: usize,
    cfg: &KMeansConfig,
    rng: &mut R,
) -> Result<KMeans, MetricsError> {
    let n = vectors.rows();
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    if k > n {
        return Err(MetricsError::KTooLarge { k, n });
    }
    let mut centroids = seed_plus_plus(vectors, k, rng);
    let kk = centroids.rows();
    if kk < k {
        log::warn!("only {kk} distinct points for k = {k}");
    }
    let dim = vectors.cols();
    let mut assign = vec![0usize; n];
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let mut dists = vec![0.0; n];
        for i in 0..n {
            (assign[i], dists[i]) = nearest(vectors.row(i), &centroids);
        }
        let mut counts = vec![0usize; kk];
        let mut next = Matrix::zeros(kk, dim);
        for i in 0..n {
            counts[assign[i]] += 1;
            for (s, x) in next.row_mut(assign[i]).iter_mut().zip(vectors.row(i)) {
                *s += x;
            }
        }
        for c in 0..kk {
            if counts[c] == 0 {
                let far = (0..n).fold(0, |b, i| if dists[i] > dists[b] { i } else { b });
                next.row_mut(c).copy_from_slice(vectors.row(far));
                dists[far] = 0.0;
            } else {
                for s in next.row_mut(c) {
                    *s /= counts[c] as f64;
                }
            }
        }
        let shift = (0..kk)
            .map(|c| sq(next.row(c), centroids.row(c)).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < cfg.tol {
            break;
        }
    }
    let mut inertia = 0.0;
    for i in 0..n {
        let (c, d) = nearest(vectors.row(i), &centroids);
        assign[i] = c;
        inertia += d;
    }
    // drop clusters left empty by duplicate centroids
    let mut used: Vec<usize> = assign.clone();
    used.sort_unstable();
    used.dedup();
    let remap: std::collections::HashMap<usize, usize> = used
        .iter()
        .enumerate()
        .map(|(new, &old)| (old, new))
        .collect();
    let assignment: Vec<usize> = assign.iter().map(|a| remap[a]).collect();
    Ok(KMeans {
        clusters: ClusterAssignment {
            assignment,
            k: used.len(),
        },
        centroids: centroids.select_rows(&used),
        inertia,
        iterations,
    })
}

/// Fraction of point pairs on which the two clusterings agree.
pub fn rand_index(a: &ClusterAssignment, b: &ClusterAssignment) -> Result<f64, MetricsError> {
    let n = a.len();
    if b.len() != n {
        return Err(MetricsError::LengthMismatch(n, b.len()));
    }
    if n < 2 {
        return Ok(1.0);
    }
    let ka = a.assignment.iter().max().map_or(0, |m| m + 1);
    let kb = b.assignment.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0u64; ka * kb];
    let mut ra = vec![0u64; ka];
    let mut rb = vec![0u64; kb];
    for (&x, &y) in a.assignment.iter().zip(&b.assignment) {
        table[x * kb + y] += 1;
        ra[x] += 1;
        rb[y] += 1;
    }
    let pairs = |c: u64| c * c.saturating_sub(1) / 2;
    let both: u64 = table.iter().map(|&c| pairs(c)).sum();
    let in_a: u64 = ra.iter().map(|&c| pairs(c)).sum();
    let in_b: u64 = rb.iter().map(|&c| pairs(c)).sum();
    let total = pairs(n as u64);
    // together in both + apart in both
    let agree = total + 2 * both - in_a - in_b;
    Ok(agree as f64 / total as f64)
}
