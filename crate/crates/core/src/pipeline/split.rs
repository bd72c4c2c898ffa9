//! Train / validation / test partitions.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, SplitKind, TrainConfig};
use crate::chemfeat::{bemis_murcko_scaffold, ecfp4};
use crate::encoder::Matrix;
use crate::molgraph::{graphs_isomorphic, write_smiles, MolecularGraph};
use crate::spacemetrics::{kmeans, KMeansConfig};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn quotas(n: usize, ratios: [f64; 3]) -> (usize, usize) {
    let train = ((ratios[0] * n as f64).round() as usize).min(n);
    let valid = ((ratios[1] * n as f64).round() as usize).min(n - train);
    (train, valid)
}

/// Molecules grouped by isomorphic Bemis-Murcko scaffold. All acyclic
/// molecules share the empty-scaffold group. Each group carries the
/// written SMILES of its first scaffold as a sort key.
pub fn scaffold_groups(molecules: &[MolecularGraph]) -> Vec<(String, Vec<usize>)> {
    let mut groups: Vec<(MolecularGraph, u64, String, Vec<usize>)> = Vec::new();
    for (i, g) in molecules.iter().enumerate() {
        let s = bemis_murcko_scaffold(g);
        let key = ecfp4(&s)
            .on_bits()
            .iter()
            .fold(s.num_atoms() as u64, |h, &b| {
                crate::chemfeat::hash::mix(h, b as u64)
            });
        let found = groups.iter_mut().find(|(other, k, _, _)| {
            *k == key
                && other.num_atoms() == s.num_atoms()
                && other.num_bonds() == s.num_bonds()
                && graphs_isomorphic(other, &s)
                    .unwrap_or_else(|_| write_smiles(other) == write_smiles(&s))
        });
        match found {
            Some(entry) => entry.3.push(i),
            None => {
                let text = write_smiles(&s);
                groups.push((s, key, text, vec![i]));
            }
        }
    }
    groups
        .into_iter()
        .map(|(_, _, text, members)| (text, members))
        .collect()
}

/// Largest scaffold groups first (ties by scaffold SMILES); a group goes
/// to the first split whose quota is not yet met, so groups never straddle
/// splits.
pub fn scaffold_split(ds: &Dataset, ratios: [f64; 3]) -> SplitIndices {
    let mut groups = scaffold_groups(&ds.molecules);
    groups.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(&b.0)));
    let (q_train, q_valid) = quotas(ds.len(), ratios);
    let mut out = SplitIndices::default();
    for (_, members) in groups {
        let target = if out.train.len() < q_train {
            &mut out.train
        } else if out.valid.len() < q_valid {
            &mut out.valid
        } else {
            &mut out.test
        };
        target.extend(members);
    }
    out
}

pub fn random_split<R: Rng + ?Sized>(n: usize, ratios: [f64; 3], rng: &mut R) -> SplitIndices {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (q_train, q_valid) = quotas(n, ratios);
    SplitIndices {
        train: idx[..q_train].to_vec(),
        valid: idx[q_train..q_train + q_valid].to_vec(),
        test: idx[q_train + q_valid..].to_vec(),
    }
}

/// Order in which the points of `pool` are picked: k-means over their
/// rows of `vectors`, then round robin across clusters, nearest to the
/// centroid first.
pub fn stratified_order<R: Rng + ?Sized>(
    vectors: &Matrix,
    pool: &[usize],
    k: usize,
    rng: &mut R,
) -> Vec<usize> {
    if pool.is_empty() {
        return Vec::new();
    }
    let sub = vectors.select_rows(pool);
    let km = kmeans(&sub, k.clamp(1, pool.len()), &KMeansConfig::default(), rng)
        .expect("k within pool size");
    let mut queues: Vec<Vec<(f64, usize)>> = vec![Vec::new(); km.clusters.k];
    for (local, &c) in km.clusters.assignment.iter().enumerate() {
        let d: f64 = sub
            .row(local)
            .iter()
            .zip(km.centroids.row(c))
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        queues[c].push((d, pool[local]));
    }
    for q in &mut queues {
        // farthest first so that pop() yields the nearest
        q.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
    }
    let mut order = Vec::with_capacity(pool.len());
    while order.len() < pool.len() {
        for q in queues.iter_mut() {
            if let Some((_, i)) = q.pop() {
                order.push(i);
            }
        }
    }
    order
}

/// Fingerprint-stratified split: the training quota is taken first from
/// the round-robin order and the remainder fills validation, then test.
pub fn stratified_split<R: Rng + ?Sized>(
    fingerprints: &Matrix,
    ratios: [f64; 3],
    k: usize,
    rng: &mut R,
) -> SplitIndices {
    let n = fingerprints.rows();
    let all: Vec<usize> = (0..n).collect();
    let order = stratified_order(fingerprints, &all, k, rng);
    let (q_train, q_valid) = quotas(n, ratios);
    SplitIndices {
        train: order[..q_train].to_vec(),
        valid: order[q_train..q_train + q_valid].to_vec(),
        test: order[q_train + q_valid..].to_vec(),
    }
}

/// Diverse `fraction` of `train` by the same round-robin rule.
pub fn few_shot<R: Rng + ?Sized>(
    fingerprints: &Matrix,
    train: &[usize],
    fraction: f64,
    k: usize,
    rng: &mut R,
) -> Vec<usize> {
    if fraction >= 1.0 {
        return train.to_vec();
    }
    let quota = ((fraction * train.len() as f64).round() as usize).clamp(1, train.len());
    let mut picked = stratified_order(fingerprints, train, k, rng);
    picked.truncate(quota);
    picked
}

/// The configured split, with the training set reduced to the few-shot
/// fraction. Validation and test are unaffected by the fraction.
pub fn split_dataset(ds: &Dataset, cfg: &TrainConfig) -> SplitIndices {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(4);
    let fps = fingerprint_matrix(ds);
    let mut split = match cfg.split {
        SplitKind::Scaffold => scaffold_split(ds, cfg.split_ratios),
        SplitKind::Stratified => stratified_split(&fps, cfg.split_ratios, cfg.stratify_k, &mut rng),
        SplitKind::Random => random_split(ds.len(), cfg.split_ratios, &mut rng),
    };
    split.train = few_shot(
        &fps,
        &split.train,
        cfg.few_shot_fraction,
        cfg.stratify_k,
        &mut rng,
    );
    split
}

pub fn fingerprint_matrix(ds: &Dataset) -> Matrix {
    Matrix::from_rows(
        &ds.molecules
            .iter()
            .map(|g| ecfp4(g).to_f64())
            .collect::<Vec<_>>(),
    )
}
