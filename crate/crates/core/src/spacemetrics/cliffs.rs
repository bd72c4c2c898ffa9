//! Matched molecular pairs and the cliff/non-cliff distance ratio.

use serde::{Deserialize, Serialize};

use super::{euclidean, MetricsError};
use crate::chemfeat::{tanimoto, Fingerprint};
use crate::encoder::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmpConfig {
    pub sim_threshold: f64,
    /// In log potency units; 1.0 is a tenfold change.
    pub cliff_gap: f64,
}

impl Default for MmpConfig {
    fn default() -> Self {
        MmpConfig {
            sim_threshold: 0.9,
            cliff_gap: 1.0,
        }
    }
}

/// A pair `(i, j)` with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmpRecord {
    pub pair: (usize, usize),
    pub similarity: f64,
    pub label_gap: f64,
    pub is_cliff: bool,
}

fn scaffold_similarity(a: &Fingerprint, b: &Fingerprint) -> f64 {
    // acyclic molecules share no scaffold
    if a.popcount() == 0 || b.popcount() == 0 {
        return 0.0;
    }
    tanimoto(a, b).expect("equal fingerprint sizes")
}

/// Exhaustive scan: a pair is matched when the larger of its molecule and
/// scaffold Tanimoto similarities reaches the threshold.
pub fn detect_mmps(
    fingerprints: &[Fingerprint],
    scaffolds: &[Fingerprint],
    labels: &[f64],
    cfg: &MmpConfig,
) -> Result<Vec<MmpRecord>, MetricsError> {
    let n = fingerprints.len();
    if scaffolds.len() != n {
        return Err(MetricsError::LengthMismatch(n, scaffolds.len()));
    }
    if labels.len() != n {
        return Err(MetricsError::LengthMismatch(n, labels.len()));
    }
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let mol =
                tanimoto(&fingerprints[i], &fingerprints[j]).expect("equal fingerprint sizes");
            let similarity = mol.max(scaffold_similarity(&scaffolds[i], &scaffolds[j]));
            if similarity >= cfg.sim_threshold {
                let label_gap = (labels[i] - labels[j]).abs();
                out.push(MmpRecord {
                    pair: (i, j),
                    similarity,
                    label_gap,
                    is_cliff: label_gap >= cfg.cliff_gap,
                });
            }
        }
    }
    Ok(out)
}

/// Mean embedding distance over cliff pairs divided by the mean over
/// non-cliff pairs; `0 / 0` is taken as 1.
pub fn cliff_noncliff_ratio(embeddings: &Matrix, mmps: &[MmpRecord]) -> Result<f64, MetricsError> {
    let mean = |cliff: bool| {
        let d: Vec<f64> = mmps
            .iter()
            .filter(|m| m.is_cliff == cliff)
            .map(|m| euclidean(embeddings.row(m.pair.0), embeddings.row(m.pair.1)))
            .collect();
        (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
    };
    let cliff = mean(true).ok_or(MetricsError::EmptyClass("cliff"))?;
    let non = mean(false).ok_or(MetricsError::EmptyClass("non-cliff"))?;
    if non == 0.0 {
        if cliff == 0.0 {
            log::warn!("all matched-pair distances are zero, ratio set to 1");
            return Ok(1.0);
        }
        log::warn!("non-cliff pairs have zero mean distance");
        return Ok(f64::INFINITY);
    }
    Ok(cliff / non)
}
