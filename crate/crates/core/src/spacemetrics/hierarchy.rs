//! Three-stage clustering: functional context (CP), then scaffold (SCD)
//! within each CP cluster, then molecule (MCD) within each SCD cluster.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{kmeans, pairwise_distances, ClusterAssignment, KMeansConfig, Metric, MetricsError};
use crate::chemfeat::Fingerprint;
use crate::encoder::{Channel, Matrix};

#[derive(Debug, Clone, Copy)]
pub struct HierarchyInput<'a> {
    /// Graph vectors indexed by [`Channel::index`].
    pub channels: [&'a Matrix; 3],
    /// Normalised functional-group counts, one row per molecule.
    pub fg_descriptors: &'a Matrix,
    pub scaffold_fingerprints: &'a [Fingerprint],
    /// Scaffold identity per molecule, for unique-scaffold counts.
    pub scaffold_ids: &'a [usize],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchyConfig {
    /// k for the CP, SCD and MCD stages.
    pub ks: [usize; 3],
    pub top_m: usize,
    pub kmeans: KMeansConfig,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            ks: [4, 3, 2],
            top_m: 10,
            kmeans: KMeansConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    /// 1, 2 or 3.
    pub stage: usize,
    pub cluster: usize,
    pub size: usize,
    pub unique_scaffolds: usize,
    /// Mean intra-cluster over mean member-to-outsider distance, both
    /// divided by the largest pairwise distance. Functional-group
    /// descriptors at stage 1, scaffold fingerprints at stage 2.
    pub distance_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyResult {
    /// Global cluster ids per stage; stage `s + 1` refines stage `s`.
    pub stages: [ClusterAssignment; 3],
    /// Top-m largest clusters of every stage.
    pub report: Vec<ClusterReport>,
}

const STAGE_CHANNELS: [Channel; 3] = [Channel::Cp, Channel::Scd, Channel::Mcd];

fn refine<R: Rng + ?Sized>(
    parent: &ClusterAssignment,
    v: &Matrix,
    k: usize,
    cfg: &KMeansConfig,
    rng: &mut R,
) -> Result<ClusterAssignment, MetricsError> {
    let mut labels = vec![0usize; parent.len()];
    let mut next = 0;
    for c in 0..parent.k {
        let members = parent.members(c);
        if members.len() < k {
            // too small to split: passes through whole
            for &m in &members {
                labels[m] = next;
            }
            next += 1;
            continue;
        }
        let sub = kmeans(&v.select_rows(&members), k, cfg, rng)?;
        for (&m, &a) in members.iter().zip(&sub.clusters.assignment) {
            labels[m] = next + a;
        }
        next += sub.clusters.k;
    }
    Ok(ClusterAssignment::from_labels(&labels))
}

fn distance_ratio(dist: &Matrix, members: &[usize]) -> Option<f64> {
    let n = dist.rows();
    let max = dist.data().iter().copied().fold(0.0, f64::max);
    if max <= 0.0 || members.len() < 2 || members.len() == n {
        return None;
    }
    let inside: BTreeSet<usize> = members.iter().copied().collect();
    let (mut intra, mut ni) = (0.0, 0usize);
    let (mut inter, mut no) = (0.0, 0usize);
    for &i in members {
        for j in 0..n {
            if inside.contains(&j) {
                if j > i {
                    intra += dist.get(i, j);
                    ni += 1;
                }
            } else {
                inter += dist.get(i, j);
                no += 1;
            }
        }
    }
    let inter = inter / no as f64 / max;
    (inter > 0.0).then(|| intra / ni as f64 / max / inter)
}

pub fn hierarchical_three_stage<R: Rng + ?Sized>(
    input: &HierarchyInput,
    cfg: &HierarchyConfig,
    rng: &mut R,
) -> Result<HierarchyResult, MetricsError> {
    let n = input.channels[0].rows();
    for len in [
        input.channels[1].rows(),
        input.channels[2].rows(),
        input.fg_descriptors.rows(),
        input.scaffold_fingerprints.len(),
        input.scaffold_ids.len(),
    ] {
        if len != n {
            return Err(MetricsError::LengthMismatch(n, len));
        }
    }
    if n == 0 {
        return Err(MetricsError::TooFewPoints { needed: 1, got: 0 });
    }
    let mut current = ClusterAssignment {
        assignment: vec![0; n],
        k: 1,
    };
    let mut stages = Vec::with_capacity(3);
    for (s, c) in STAGE_CHANNELS.iter().enumerate() {
        current = refine(
            &current,
            input.channels[c.index()],
            cfg.ks[s],
            &cfg.kmeans,
            rng,
        )?;
        stages.push(current.clone());
    }
    let fg_dist = pairwise_distances(input.fg_descriptors, Metric::Euclidean);
    let scaffold_bits = Matrix::from_rows(
        &input
            .scaffold_fingerprints
            .iter()
            .map(Fingerprint::to_f64)
            .collect::<Vec<_>>(),
    );
    let scaffold_dist = pairwise_distances(&scaffold_bits, Metric::Tanimoto);
    let mut report = Vec::new();
    for (s, stage) in stages.iter().enumerate() {
        let sizes = stage.sizes();
        let mut order: Vec<usize> = (0..stage.k).collect();
        order.sort_by_key(|&c| (std::cmp::Reverse(sizes[c]), c));
        for &c in order.iter().take(cfg.top_m) {
            let members = stage.members(c);
            let unique: BTreeSet<usize> = members.iter().map(|&m| input.scaffold_ids[m]).collect();
            let distance_ratio = match s {
                0 => distance_ratio(&fg_dist, &members),
                1 => distance_ratio(&scaffold_dist, &members),
                _ => None,
            };
            report.push(ClusterReport {
                stage: s + 1,
                cluster: c,
                size: sizes[c],
                unique_scaffolds: unique.len(),
                distance_ratio,
            });
        }
    }
    let stages: [ClusterAssignment; 3] = stages.try_into().expect("three stages");
    Ok(HierarchyResult { stages, report })
}
