//! Correlations between structural similarity, labels and learned
//! representation distances over sampled molecule pairs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{euclidean, pearson, sample_pairs, MetricsError};
use crate::encoder::Matrix;

pub const DEFAULT_PAIR_SAMPLE: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QsprCorrelation {
    /// Pearson r per similarity channel.
    pub raw: [f64; 3],
    /// Negatives clamped to 0, then scaled to sum to 1 (all zero when no
    /// raw value is positive).
    pub normalized: [f64; 3],
}

/// Per similarity channel (molecule fp, scaffold fp, functional groups),
/// Pearson r between `1 − sim` and `|Δlabel|` over sampled pairs.
pub fn qspr_correlation<R: Rng + ?Sized>(
    sims: [&Matrix; 3],
    labels: &[f64],
    sample: usize,
    rng: &mut R,
) -> Result<QsprCorrelation, MetricsError> {
    let n = labels.len();
    if n < 2 {
        return Err(MetricsError::TooFewPoints { needed: 2, got: n });
    }
    if let Some(s) = sims.iter().find(|s| s.shape() != (n, n)) {
        return Err(MetricsError::LengthMismatch(s.rows(), n));
    }
    let pairs = sample_pairs(n, sample, rng);
    let gaps: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| (labels[i] - labels[j]).abs())
        .collect();
    let raw = sims.map(|s| {
        let dissim: Vec<f64> = pairs.iter().map(|&(i, j)| 1.0 - s.get(i, j)).collect();
        pearson(&dissim, &gaps)
    });
    let clamped = raw.map(|r| r.max(0.0));
    let total: f64 = clamped.iter().sum();
    let normalized = if total > 0.0 {
        clamped.map(|r| r / total)
    } else {
        log::warn!("no channel correlates positively with label gaps");
        [0.0; 3]
    };
    Ok(QsprCorrelation { raw, normalized })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelCorrelation {
    /// Pearson r between normalised embedding distance and similarity.
    pub r: f64,
    pub pairs: Vec<(usize, usize)>,
    /// Embedding L2 distances divided by their maximum over the sample.
    pub distance: Vec<f64>,
    pub similarity: Vec<f64>,
}

/// Pairs channel `c` embeddings with conventional similarity `c`
/// (MCD with molecule fp, SCD with scaffold fp, CP with functional
/// groups). The same pair sample serves all channels.
pub fn correlation_report<R: Rng + ?Sized>(
    channels: [&Matrix; 3],
    sims: [&Matrix; 3],
    sample: usize,
    rng: &mut R,
) -> Result<[ChannelCorrelation; 3], MetricsError> {
    let n = channels[0].rows();
    if n < 2 {
        return Err(MetricsError::TooFewPoints { needed: 2, got: n });
    }
    for m in channels.iter() {
        if m.rows() != n {
            return Err(MetricsError::LengthMismatch(m.rows(), n));
        }
    }
    for s in sims.iter() {
        if s.shape() != (n, n) {
            return Err(MetricsError::LengthMismatch(s.rows(), n));
        }
    }
    let pairs = sample_pairs(n, sample, rng);
    Ok([0, 1, 2].map(|c| {
        let mut distance: Vec<f64> = pairs
            .iter()
            .map(|&(i, j)| euclidean(channels[c].row(i), channels[c].row(j)))
            .collect();
        let max = distance.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            distance.iter_mut().for_each(|d| *d /= max);
        }
        let similarity: Vec<f64> = pairs.iter().map(|&(i, j)| sims[c].get(i, j)).collect();
        ChannelCorrelation {
            r: pearson(&distance, &similarity),
            pairs: pairs.clone(),
            distance,
            similarity,
        }
    }))
}
