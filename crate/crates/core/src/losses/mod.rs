//! Pre-training objectives.
//!
//! * Adaptive-margin quadruplet loss (MCD on molecule fingerprints, SCD on
//!   scaffold fingerprints): margins scale with structural dissimilarity.
//! * Context prediction (CP): multi-label presence of elements and bond
//!   orders in a masked region, plus regression of functional-group counts.
//! * Regularisers: attention targets per channel and descriptor alignment
//!   of preset channel mixtures.
//!
//! `total = mcd + scd + cp + 0.1 · regu`.

mod batch;

use std::collections::BTreeSet;
use std::rc::Rc;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chemfeat::{FunctionalGroupVector, NUM_GROUPS};
use crate::encoder::{Matrix, NodeId, ParamId, ParamStore, Tape};
use crate::molgraph::{BondOrder, Element, MolecularGraph};

pub use batch::{
    pretrain_loss, LossBreakdown, LossNodes, PretrainBatch, PretrainBatchConfig, PretrainSample,
};

/// Weight of the summed regularisers in the overall loss.
pub const REGULARIZATION_FACTOR: f64 = 0.1;
pub const DEFAULT_ALPHA_OFFSET: f64 = 1.0;
pub const DEFAULT_BUDGET: usize = 4;
/// Sampling weight floor added to every margin gap.
pub const GAP_FLOOR: f64 = 1e-6;

pub const ATOM_VOCAB: usize = Element::ALL.len();
pub const BOND_VOCAB: usize = BondOrder::ALL.len();
pub const PRESENCE_DIM: usize = ATOM_VOCAB + BOND_VOCAB;

/// Channel mixtures `[MCD, SCD, CP]` for the three alignment tasks:
/// molecular weight, scaffold weight, heavy-atom count.
pub const ALIGNMENT_PRESETS: [[f64; 3]; 3] = [
    [0.45, 0.1, 0.45],
    [0.1, 0.45, 0.45],
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
];

/// What a context-prediction head must recover about a masked region.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextLabel {
    /// Multi-hot over [`Element::ALL`].
    pub atom_presence: Vec<f64>,
    /// Multi-hot over [`BondOrder::ALL`].
    pub bond_presence: Vec<f64>,
    /// Normalised functional-group counts of the whole molecule.
    pub fg_target: Vec<f64>,
}

impl ContextLabel {
    /// Elements of the region's atoms and orders of bonds with both ends
    /// inside the region.
    pub fn from_region(
        g: &MolecularGraph,
        region: &BTreeSet<usize>,
        groups: &FunctionalGroupVector,
    ) -> Self {
        let mut atom_presence = vec![0.0; ATOM_VOCAB];
        let mut bond_presence = vec![0.0; BOND_VOCAB];
        for &v in region {
            atom_presence[g.atom(v).element.index()] = 1.0;
        }
        for b in g.bonds() {
            let (x, y) = b.endpoints;
            if region.contains(&x) && region.contains(&y) {
                bond_presence[b.order.index()] = 1.0;
            }
        }
        ContextLabel {
            atom_presence,
            bond_presence,
            fg_target: groups.normalized.to_vec(),
        }
    }

    /// `atom_presence ⊕ bond_presence`.
    pub fn presence(&self) -> Vec<f64> {
        let mut v = self.atom_presence.clone();
        v.extend_from_slice(&self.bond_presence);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margins {
    pub alpha1_ij: f64,
    pub alpha1_ik: f64,
    pub alpha2_ijk: f64,
}

pub fn adaptive_margins(sim_ij: f64, sim_ik: f64, alpha_offset: f64) -> Margins {
    Margins {
        alpha1_ij: alpha_offset * (1.0 - sim_ij),
        alpha1_ik: alpha_offset * (1.0 - sim_ik),
        alpha2_ijk: alpha_offset * (sim_ij - sim_ik),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadruplet {
    pub anchor: usize,
    /// Which of the anchor's augmentations is the positive.
    pub positive: usize,
    pub neg_j: usize,
    pub neg_k: usize,
    pub alpha1_ij: f64,
    pub alpha1_ik: f64,
    pub alpha2_ijk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Pair weight `max(0, sim_ij − sim_ik) + 1e-6`.
    GapWeighted,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum MarginMode {
    /// Similarity-scaled `α1` plus the negative-ordering term `α2`.
    Adaptive,
    /// Constant `α1`, no `α2` term: the plain triplet structure.
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub budget: usize,
    pub alpha_offset: f64,
    pub mode: SamplingMode,
    pub margins: MarginMode,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            budget: DEFAULT_BUDGET,
            alpha_offset: DEFAULT_ALPHA_OFFSET,
            mode: SamplingMode::GapWeighted,
            margins: MarginMode::Adaptive,
        }
    }
}

/// Up to `budget` quadruplets per anchor, drawn without replacement from
/// ordered negative pairs `(j, k)`. Anchors with `positives[i] == 0` are
/// skipped (they still serve as negatives). Under adaptive margins, pairs
/// with `α2 < 0` are never kept.
pub fn sample_quadruplets<R: Rng + ?Sized>(
    sim: &Matrix,
    positives: &[usize],
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Vec<Quadruplet> {
    let n = sim.rows();
    assert_eq!(sim.shape(), (n, n), "similarity matrix must be square");
    assert_eq!(positives.len(), n, "one positive count per anchor");
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    for i in 0..n {
        if positives[i] == 0 {
            continue;
        }
        let mut pairs = Vec::new();
        for j in 0..n {
            for k in 0..n {
                if j == i || k == i || j == k {
                    continue;
                }
                let gap = sim.get(i, j) - sim.get(i, k);
                if matches!(cfg.margins, MarginMode::Adaptive) && cfg.alpha_offset * gap < 0.0 {
                    continue;
                }
                pairs.push((j, k, gap));
            }
        }
        let amount = cfg.budget.min(pairs.len());
        let chosen: Vec<(usize, usize, f64)> = match cfg.mode {
            SamplingMode::Uniform => pairs.choose_multiple(rng, amount).copied().collect(),
            SamplingMode::GapWeighted => pairs
                .choose_multiple_weighted(rng, amount, |p| p.2.max(0.0) + GAP_FLOOR)
                .expect("weights are positive and finite")
                .copied()
                .collect(),
        };
        for (j, k, _) in chosen {
            let positive = rng.random_range(0..positives[i]);
            let m = match cfg.margins {
                MarginMode::Adaptive => {
                    adaptive_margins(sim.get(i, j), sim.get(i, k), cfg.alpha_offset)
                }
                MarginMode::Constant(a) => Margins {
                    alpha1_ij: a,
                    alpha1_ik: a,
                    alpha2_ijk: 0.0,
                },
            };
            out.push(Quadruplet {
                anchor: i,
                positive,
                neg_j: j,
                neg_k: k,
                alpha1_ij: m.alpha1_ij,
                alpha1_ik: m.alpha1_ik,
                alpha2_ijk: m.alpha2_ijk,
            });
        }
    }
    out
}

/// Mean over quadruplets of the three hinges
/// `[α1_ij + d(i,i′) − d(i,j)]₊ + [α1_ik + d(i,i′) − d(i,k)]₊ + [α2 + d(i,j) − d(i,k)]₊`.
/// Anchors and negatives index rows of `emb` directly; the positive of
/// quadruplet `q` is row `positive_start[q.anchor] + q.positive`. With
/// `use_alpha2 = false` the third hinge is dropped. Zero quadruplets give 0.
pub fn adaptive_margin_loss(
    tape: &mut Tape,
    emb: NodeId,
    quads: &[Quadruplet],
    positive_start: &[usize],
    use_alpha2: bool,
) -> NodeId {
    if quads.is_empty() {
        return tape.constant(Matrix::scalar(0.0));
    }
    let col = |f: &dyn Fn(&Quadruplet) -> f64| Matrix::column_vector(quads.iter().map(f).collect());
    let pos = Rc::new(
        quads
            .iter()
            .map(|q| (q.anchor, positive_start[q.anchor] + q.positive))
            .collect(),
    );
    let ij = Rc::new(quads.iter().map(|q| (q.anchor, q.neg_j)).collect());
    let ik = Rc::new(quads.iter().map(|q| (q.anchor, q.neg_k)).collect());
    let d_pos = tape.pair_dist(emb, emb, pos);
    let d_ij = tape.pair_dist(emb, emb, ij);
    let d_ik = tape.pair_dist(emb, emb, ik);

    let hinge = |tape: &mut Tape, margin: Matrix, plus: NodeId, minus: NodeId| {
        let m = tape.constant(margin);
        let diff = tape.sub(plus, minus);
        let arg = tape.add(diff, m);
        let h = tape.relu(arg);
        tape.sum(h)
    };
    let h1 = hinge(tape, col(&|q| q.alpha1_ij), d_pos, d_ij);
    let h2 = hinge(tape, col(&|q| q.alpha1_ik), d_pos, d_ik);
    let mut total = tape.add(h1, h2);
    if use_alpha2 {
        let h3 = hinge(tape, col(&|q| q.alpha2_ijk), d_ij, d_ik);
        total = tape.add(total, h3);
    }
    tape.scale(total, 1.0 / quads.len() as f64)
}

/// `mean BCE(presence logits) + mean smooth-L1(fg prediction)` over
/// graphs. `presence_logits` is `G x 14`, `fg_pred` is `G x 16`.
pub fn cp_loss(
    tape: &mut Tape,
    presence_logits: NodeId,
    fg_pred: NodeId,
    labels: &[ContextLabel],
) -> NodeId {
    if labels.is_empty() {
        return tape.constant(Matrix::scalar(0.0));
    }
    let presence = Matrix::from_rows(
        &labels
            .iter()
            .map(ContextLabel::presence)
            .collect::<Vec<_>>(),
    );
    let fg = Matrix::from_rows(
        &labels
            .iter()
            .map(|l| l.fg_target.clone())
            .collect::<Vec<_>>(),
    );
    let bce = tape.bce_logits(presence_logits, presence);
    let bce = tape.mean(bce);
    let sl1 = tape.smooth_l1(fg_pred, fg);
    let sl1 = tape.mean(sl1);
    tape.add(bce, sl1)
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttentionTarget {
    /// Uniform over all atoms.
    AllAtoms,
    /// Uniform over the `true` atoms, zero elsewhere; graphs without any
    /// `true` atom contribute nothing.
    Subset(Vec<bool>),
}

/// Smooth-L1 between head-averaged attention (`atoms x heads`, segmented
/// by `offsets`) and per-graph targets, summed over atoms and averaged over
/// contributing graphs. `None` targets are skipped.
pub fn attention_regularizer(
    tape: &mut Tape,
    alpha: NodeId,
    offsets: &[usize],
    targets: &[Option<AttentionTarget>],
) -> NodeId {
    let (n, heads) = tape.value(alpha).shape();
    assert_eq!(offsets.len(), targets.len() + 1, "one target per graph");
    let mut target = vec![0.0; n];
    let mut weight = vec![0.0; n];
    let mut graphs = 0usize;
    for (g, t) in targets.iter().enumerate() {
        let (lo, hi) = (offsets[g], offsets[g + 1]);
        let keep: Vec<bool> = match t {
            None => continue,
            Some(AttentionTarget::AllAtoms) => vec![true; hi - lo],
            Some(AttentionTarget::Subset(mask)) => {
                assert_eq!(mask.len(), hi - lo, "scaffold mask length");
                mask.clone()
            }
        };
        let count = keep.iter().filter(|&&k| k).count();
        if count == 0 {
            continue;
        }
        graphs += 1;
        for (x, &k) in (lo..hi).zip(&keep) {
            weight[x] = 1.0;
            target[x] = if k { 1.0 / count as f64 } else { 0.0 };
        }
    }
    if graphs == 0 {
        return tape.constant(Matrix::scalar(0.0));
    }
    let avg_w = tape.constant(Matrix::filled(heads, 1, 1.0 / heads as f64));
    let avg = tape.matmul(alpha, avg_w);
    let sl1 = tape.smooth_l1(avg, Matrix::column_vector(target));
    let w = tape.constant(Matrix::column_vector(weight));
    let masked = tape.mul(sl1, w);
    let s = tape.sum(masked);
    tape.scale(s, 1.0 / graphs as f64)
}

/// Linear heads of the pre-training objectives.
#[derive(Debug, Clone)]
pub struct PretrainHeads {
    /// `D x 14` presence logits and `D x 16` group regression.
    pub cp_w: ParamId,
    pub cp_b: ParamId,
    pub fg_w: ParamId,
    pub fg_b: ParamId,
    /// One `D x 1` head per alignment task.
    pub align_w: [ParamId; 3],
    pub align_b: [ParamId; 3],
}

impl PretrainHeads {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, dim: usize, rng: &mut R) -> Self {
        let s = 1.0 / (dim as f64).sqrt();
        PretrainHeads {
            cp_w: store.add_uniform("heads.cp_w", dim, PRESENCE_DIM, s, rng),
            cp_b: store.add_uniform("heads.cp_b", 1, PRESENCE_DIM, s, rng),
            fg_w: store.add_uniform("heads.fg_w", dim, NUM_GROUPS, s, rng),
            fg_b: store.add_uniform("heads.fg_b", 1, NUM_GROUPS, s, rng),
            align_w: [0, 1, 2]
                .map(|t| store.add_uniform(&format!("heads.align{t}_w"), dim, 1, s, rng)),
            align_b: [0, 1, 2]
                .map(|t| store.add_uniform(&format!("heads.align{t}_b"), 1, 1, s, rng)),
        }
    }

    /// `(presence logits, fg prediction)` for graph vectors `h`.
    pub fn cp_predict(&self, tape: &mut Tape, store: &ParamStore, h: NodeId) -> (NodeId, NodeId) {
        let (w, b) = (tape.param(store, self.cp_w), tape.param(store, self.cp_b));
        let logits = tape.matmul(h, w);
        let logits = tape.add_row(logits, b);
        let (w, b) = (tape.param(store, self.fg_w), tape.param(store, self.fg_b));
        let fg = tape.matmul(h, w);
        (logits, tape.add_row(fg, b))
    }
}

/// For each task `t`: composite `Σ_c preset_t[c]·h_c`, linear head,
/// mean smooth-L1 against column `t` of `targets` (`B x 3`, standardised).
/// Task losses are summed.
pub fn alignment_regularizer(
    tape: &mut Tape,
    store: &ParamStore,
    heads: &PretrainHeads,
    channels: [NodeId; 3],
    targets: &Matrix,
) -> NodeId {
    let mut total: Option<NodeId> = None;
    for (t, preset) in ALIGNMENT_PRESETS.iter().enumerate() {
        let mut comp: Option<NodeId> = None;
        for (c, &w) in preset.iter().enumerate() {
            let term = tape.scale(channels[c], w);
            comp = Some(match comp {
                None => term,
                Some(acc) => tape.add(acc, term),
            });
        }
        let (w, b) = (
            tape.param(store, heads.align_w[t]),
            tape.param(store, heads.align_b[t]),
        );
        let pred = tape.matmul(comp.unwrap(), w);
        let pred = tape.add_row(pred, b);
        let column =
            Matrix::column_vector((0..targets.rows()).map(|r| targets.get(r, t)).collect());
        let sl1 = tape.smooth_l1(pred, column);
        let loss = tape.mean(sl1);
        total = Some(match total {
            None => loss,
            Some(acc) => tape.add(acc, loss),
        });
    }
    total.unwrap()
}

/// `mcd + scd + cp + 0.1 · regu`.
pub fn overall_loss_value(mcd: f64, scd: f64, cp: f64, regu: f64) -> f64 {
    mcd + scd + cp + REGULARIZATION_FACTOR * regu
}

pub fn overall_loss(tape: &mut Tape, mcd: NodeId, scd: NodeId, cp: NodeId, regu: NodeId) -> NodeId {
    let a = tape.add(mcd, scd);
    let a = tape.add(a, cp);
    let r = tape.scale(regu, REGULARIZATION_FACTOR);
    tape.add(a, r)
}
