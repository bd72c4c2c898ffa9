//! Prompt weights over the three channels and their ROGI-driven start.

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::encoder::Matrix;
use crate::spacemetrics::{minmax_scale, pairwise_distances, rogi_from_distances, Metric};

/// Added inside the logarithm when turning weights into logits.
pub const LOGIT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PromptWeights {
    /// `[MCD, SCD, CP]`, on the simplex.
    pub weights: [f64; 3],
    pub logits: [f64; 3],
}

impl PromptWeights {
    pub fn from_weights(weights: [f64; 3]) -> Self {
        PromptWeights {
            weights,
            logits: weights.map(|w| (w + LOGIT_EPS).ln()),
        }
    }

    pub fn from_logits(logits: [f64; 3]) -> Self {
        PromptWeights {
            weights: softmax(logits),
            logits,
        }
    }
}

pub fn softmax(x: [f64; 3]) -> [f64; 3] {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = x.map(|v| (v - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

/// `{(a, b, c) : a + b + c = 1}` on multiples of `step`, in
/// lexicographic order.
pub fn simplex_grid(step: f64) -> Vec<[f64; 3]> {
    let m = (1.0 / step).round() as usize;
    let mut out = Vec::new();
    for i in 0..=m {
        for j in 0..=m - i {
            out.push([
                i as f64 / m as f64,
                j as f64 / m as f64,
                (m - i - j) as f64 / m as f64,
            ]);
        }
    }
    out
}

/// `Σ_c w_c · h_c` row-wise.
pub fn composite(channels: &[Matrix; 3], w: [f64; 3]) -> Matrix {
    let mut out = Matrix::zeros(channels[0].rows(), channels[0].cols());
    for (c, m) in channels.iter().enumerate() {
        for (o, v) in out.data_mut().iter_mut().zip(m.data()) {
            *o += w[c] * v;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptInit {
    pub prompt: PromptWeights,
    pub rogi: f64,
    /// Every grid point with its ROGI, in grid order.
    pub grid: Vec<([f64; 3], f64)>,
}

/// Exhaustive simplex search for the mixture whose composite
/// representation has the lowest ROGI against min-max scaled labels;
/// ties go to the lexicographically smallest weights.
pub fn init_prompt_weights(
    channels: &[Matrix; 3],
    labels: &[f64],
    step: f64,
) -> Result<PromptInit, PipelineError> {
    let scaled = minmax_scale(labels);
    let mut grid = Vec::new();
    let mut best: Option<([f64; 3], f64)> = None;
    for w in simplex_grid(step) {
        let d = pairwise_distances(&composite(channels, w), Metric::Euclidean);
        let r = rogi_from_distances(&d, &scaled)?;
        if best.is_none_or(|(_, b)| r < b) {
            best = Some((w, r));
        }
        grid.push((w, r));
    }
    let (w, rogi) = best.expect("grid is never empty");
    Ok(PromptInit {
        prompt: PromptWeights::from_weights(w),
        rogi,
        grid,
    })
}
