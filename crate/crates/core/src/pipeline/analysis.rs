//! Representation probes shared by fine-tuning and the command line.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::split::scaffold_groups;
use super::Dataset;
use crate::chemfeat::{tanimoto, Fingerprint, MoleculeFeatures, NUM_GROUPS};
use crate::encoder::Matrix;
use crate::spacemetrics::{
    cliff_noncliff_ratio, default_k, detect_mmps, kmeans, minmax_scale, rand_index, rogi,
    ClusterAssignment, KMeansConfig, LabeledSpace, Metric, MetricsError, MmpConfig, MmpRecord,
};

/// Pairwise Tanimoto similarities; bit vectors of equal width only.
pub fn tanimoto_matrix(fps: &[Fingerprint]) -> Matrix {
    let n = fps.len();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        m.set(i, i, 1.0);
        for j in i + 1..n {
            let s = tanimoto(&fps[i], &fps[j]).expect("fingerprints share one width");
            m.set(i, j, s);
            m.set(j, i, s);
        }
    }
    m
}

/// Conventional similarities matched to the channels: molecule
/// fingerprint (MCD), scaffold fingerprint (SCD), functional-group
/// presence (CP).
pub fn conventional_similarities(features: &[MoleculeFeatures]) -> [Matrix; 3] {
    [
        tanimoto_matrix(
            &features
                .iter()
                .map(|f| f.fingerprint.clone())
                .collect::<Vec<_>>(),
        ),
        tanimoto_matrix(
            &features
                .iter()
                .map(|f| f.scaffold_fingerprint.clone())
                .collect::<Vec<_>>(),
        ),
        tanimoto_matrix(
            &features
                .iter()
                .map(MoleculeFeatures::group_fingerprint)
                .collect::<Vec<_>>(),
        ),
    ]
}

/// Heavy-atom-normalised functional-group counts, one row per molecule.
pub fn fg_matrix(features: &[MoleculeFeatures]) -> Matrix {
    let mut m = Matrix::zeros(features.len(), NUM_GROUPS);
    for (i, f) in features.iter().enumerate() {
        m.row_mut(i).copy_from_slice(&f.groups.normalized);
    }
    m
}

/// Scaffold group index per molecule.
pub fn scaffold_ids(ds: &Dataset) -> Vec<usize> {
    let mut ids = vec![0; ds.len()];
    for (g, (_, members)) in scaffold_groups(&ds.molecules).into_iter().enumerate() {
        for i in members {
            ids[i] = g;
        }
    }
    ids
}

/// Fingerprint rows for k-means.
pub fn ecfp_matrix(features: &[MoleculeFeatures]) -> Matrix {
    Matrix::from_rows(
        &features
            .iter()
            .map(|f| f.fingerprint.to_f64())
            .collect::<Vec<_>>(),
    )
}

/// Matched pairs among `features` with their labels.
pub fn matched_pairs(
    features: &[MoleculeFeatures],
    labels: &[f64],
) -> Result<Vec<MmpRecord>, MetricsError> {
    detect_mmps(
        &features
            .iter()
            .map(|f| f.fingerprint.clone())
            .collect::<Vec<_>>(),
        &features
            .iter()
            .map(|f| f.scaffold_fingerprint.clone())
            .collect::<Vec<_>>(),
        labels,
        &MmpConfig::default(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceProbe {
    pub rogi: f64,
    /// Agreement with k-means on ECFP4 at the same k.
    pub rand_index: f64,
    /// Absent without cliff or non-cliff pairs.
    pub cliff_ratio: Option<f64>,
}

/// The per-space probes of one representation: ROGI on min-max scaled
/// labels, Rand index against fingerprint clusters and cliff ratio.
pub fn probe_space<R: Rng + ?Sized>(
    vectors: &Matrix,
    features: &[MoleculeFeatures],
    labels: &[f64],
    rng: &mut R,
) -> Result<SpaceProbe, MetricsError> {
    let k = default_k(vectors.rows());
    let fp = fingerprint_clusters(features, k, rng)?;
    let emb = kmeans(vectors, k, &KMeansConfig::default(), rng)?.clusters;
    let mmps = matched_pairs(features, labels)?;
    Ok(SpaceProbe {
        rogi: rogi(&LabeledSpace {
            vectors: vectors.clone(),
            labels: minmax_scale(labels),
            metric: Metric::Euclidean,
        })?,
        rand_index: rand_index(&emb, &fp)?,
        cliff_ratio: cliff_noncliff_ratio(vectors, &mmps).ok(),
    })
}

pub fn fingerprint_clusters<R: Rng + ?Sized>(
    features: &[MoleculeFeatures],
    k: usize,
    rng: &mut R,
) -> Result<ClusterAssignment, MetricsError> {
    Ok(kmeans(&ecfp_matrix(features), k, &KMeansConfig::default(), rng)?.clusters)
}
