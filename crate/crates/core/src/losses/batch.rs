//! One pre-training batch: positives for both contrastive channels,
//! sampled quadruplets, and the overall loss built on a tape.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    adaptive_margin_loss, alignment_regularizer, attention_regularizer, cp_loss, overall_loss,
    sample_quadruplets, AttentionTarget, ContextLabel, MarginMode, PretrainHeads, Quadruplet,
    SamplerConfig,
};
use crate::chemfeat::{tanimoto, Fingerprint, MoleculeFeatures};
use crate::encoder::{Channel, GraphBatch, GraphInput, Matrix, MultiChannelModel, NodeId, Tape};
use crate::molgraph::MolecularGraph;
use crate::perturb::{
    scaffold_invariant_perturb, subgraph_mask, FragmentPool, MaskedGraph, POSITIVES_PER_ANCHOR,
};

/// A corpus molecule with its precomputed features.
#[derive(Debug, Clone, Copy)]
pub struct PretrainSample<'a> {
    pub graph: &'a MolecularGraph,
    pub features: &'a MoleculeFeatures,
    /// Standardised `[molecular weight, scaffold weight, heavy atoms]`.
    pub descriptor_z: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainBatchConfig {
    pub positives: usize,
    /// Perturbation attempts per requested positive.
    pub perturb_attempts: usize,
    pub sampler: SamplerConfig,
}

impl Default for PretrainBatchConfig {
    fn default() -> Self {
        PretrainBatchConfig {
            positives: POSITIVES_PER_ANCHOR,
            perturb_attempts: 3,
            sampler: SamplerConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainBatch<'a> {
    pub samples: Vec<PretrainSample<'a>>,
    pub masked: Vec<Vec<MaskedGraph>>,
    pub perturbed: Vec<Vec<MolecularGraph>>,
    pub mcd_quads: Vec<Quadruplet>,
    pub scd_quads: Vec<Quadruplet>,
    pub use_alpha2: bool,
}

fn sim_matrix(fps: &[&Fingerprint]) -> Matrix {
    let n = fps.len();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m.set(
                i,
                j,
                tanimoto(fps[i], fps[j]).expect("equal fingerprint sizes"),
            );
        }
    }
    m
}

impl<'a> PretrainBatch<'a> {
    /// Draws positives and quadruplets; all randomness happens here so the
    /// loss itself is a deterministic function of the parameters.
    pub fn build<R: Rng + ?Sized>(
        samples: Vec<PretrainSample<'a>>,
        pool: &FragmentPool,
        cfg: &PretrainBatchConfig,
        rng: &mut R,
    ) -> Self {
        let mut masked = Vec::with_capacity(samples.len());
        let mut perturbed = Vec::with_capacity(samples.len());
        for s in &samples {
            let m: Vec<MaskedGraph> = (0..cfg.positives)
                .filter_map(|_| subgraph_mask(s.graph, &s.features.groups, rng).ok())
                .collect();
            masked.push(m);
            let mut p = Vec::new();
            for _ in 0..cfg.positives * cfg.perturb_attempts {
                if p.len() == cfg.positives {
                    break;
                }
                match scaffold_invariant_perturb(s.graph, pool, rng) {
                    Ok(x) => p.push(x.graph),
                    Err(crate::perturb::PerturbError::NoValidFragment) => continue,
                    Err(_) => break,
                }
            }
            perturbed.push(p);
        }
        let mol_sim = sim_matrix(
            &samples
                .iter()
                .map(|s| &s.features.fingerprint)
                .collect::<Vec<_>>(),
        );
        let scaf_sim = sim_matrix(
            &samples
                .iter()
                .map(|s| &s.features.scaffold_fingerprint)
                .collect::<Vec<_>>(),
        );
        let mcd_quads = sample_quadruplets(
            &mol_sim,
            &masked.iter().map(Vec::len).collect::<Vec<_>>(),
            &cfg.sampler,
            rng,
        );
        let scd_quads = sample_quadruplets(
            &scaf_sim,
            &perturbed.iter().map(Vec::len).collect::<Vec<_>>(),
            &cfg.sampler,
            rng,
        );
        PretrainBatch {
            samples,
            masked,
            perturbed,
            mcd_quads,
            scd_quads,
            use_alpha2: matches!(cfg.sampler.margins, MarginMode::Adaptive),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub mcd: NodeId,
    pub scd: NodeId,
    pub cp: NodeId,
    pub regu: NodeId,
    pub total: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub mcd: f64,
    pub scd: f64,
    pub cp: f64,
    pub regu: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn read(tape: &Tape, n: &LossNodes) -> Self {
        LossBreakdown {
            mcd: tape.value(n.mcd).item(),
            scd: tape.value(n.scd).item(),
            cp: tape.value(n.cp).item(),
            regu: tape.value(n.regu).item(),
            total: tape.value(n.total).item(),
        }
    }
}

/// Positive-row starts for a readout laid out as anchors then positives.
fn starts(b: usize, counts: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut acc = b;
    counts
        .map(|c| {
            let s = acc;
            acc += c;
            s
        })
        .collect()
}

/// Encodes anchors, masked positives and perturbed positives as one graph
/// batch and assembles the overall loss.
pub fn pretrain_loss(
    tape: &mut Tape,
    model: &MultiChannelModel,
    heads: &PretrainHeads,
    batch: &PretrainBatch,
) -> LossNodes {
    let b = batch.len();
    let mut inputs: Vec<GraphInput> = batch.samples.iter().map(|s| s.graph.into()).collect();
    let masked_base = inputs.len();
    inputs.extend(batch.masked.iter().flatten().map(GraphInput::from));
    let perturbed_base = inputs.len();
    inputs.extend(batch.perturbed.iter().flatten().map(GraphInput::from));
    let graphs = GraphBatch::new(inputs);
    let nodes = model.encode(tape, &graphs);
    let anchors: Vec<usize> = (0..b).collect();

    // MCD: anchors then masked positives
    let mut view = anchors.clone();
    view.extend(masked_base..perturbed_base);
    let (mcd_emb, mcd_alpha) = model.readout(tape, nodes, &graphs, Channel::Mcd, &view);
    let mcd_start = starts(b, batch.masked.iter().map(Vec::len));
    let mcd = adaptive_margin_loss(
        tape,
        mcd_emb,
        &batch.mcd_quads,
        &mcd_start,
        batch.use_alpha2,
    );
    let mcd_offsets = graphs.subset(&view).1;

    // SCD: anchors then perturbed positives
    let mut view = anchors.clone();
    view.extend(perturbed_base..graphs.num_graphs());
    let (scd_emb, scd_alpha) = model.readout(tape, nodes, &graphs, Channel::Scd, &view);
    let scd_start = starts(b, batch.perturbed.iter().map(Vec::len));
    let scd = adaptive_margin_loss(
        tape,
        scd_emb,
        &batch.scd_quads,
        &scd_start,
        batch.use_alpha2,
    );
    let scd_offsets = graphs.subset(&view).1;

    // CP: anchors then the first masked version of each anchor
    let mut view = anchors.clone();
    let mut labels: Vec<ContextLabel> = Vec::new();
    let mut next = masked_base;
    for m in &batch.masked {
        if let Some(first) = m.first() {
            view.push(next);
            labels.push(first.context_label.clone());
        }
        next += m.len();
    }
    let (cp_emb, _) = model.readout(tape, nodes, &graphs, Channel::Cp, &view);
    let masked_rows = tape.gather_rows(cp_emb, std::rc::Rc::new((b..view.len()).collect()));
    let (logits, fg) = heads.cp_predict(tape, &model.store, masked_rows);
    let cp = cp_loss(tape, logits, fg, &labels);

    // regularisers on the anchors only
    let extra_mcd = mcd_offsets.len() - 1 - b;
    let mut mcd_targets: Vec<Option<AttentionTarget>> = vec![Some(AttentionTarget::AllAtoms); b];
    mcd_targets.extend(std::iter::repeat_n(None, extra_mcd));
    let att_mcd = attention_regularizer(tape, mcd_alpha, &mcd_offsets, &mcd_targets);
    let extra_scd = scd_offsets.len() - 1 - b;
    let mut scd_targets: Vec<Option<AttentionTarget>> = batch
        .samples
        .iter()
        .map(|s| Some(AttentionTarget::Subset(s.features.scaffold_mask.clone())))
        .collect();
    scd_targets.extend(std::iter::repeat_n(None, extra_scd));
    let att_scd = attention_regularizer(tape, scd_alpha, &scd_offsets, &scd_targets);

    let first_b = std::rc::Rc::new(anchors);
    let channels = [mcd_emb, scd_emb, cp_emb].map(|e| tape.gather_rows(e, first_b.clone()));
    let targets = Matrix::from_rows(
        &batch
            .samples
            .iter()
            .map(|s| s.descriptor_z.to_vec())
            .collect::<Vec<_>>(),
    );
    let align = alignment_regularizer(tape, &model.store, heads, channels, &targets);

    let regu = tape.add(att_mcd, att_scd);
    let regu = tape.add(regu, align);
    let total = overall_loss(tape, mcd, scd, cp, regu);
    LossNodes {
        mcd,
        scd,
        cp,
        regu,
        total,
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::encoder::{numeric_gradient, EncoderConfig, ParamId, ParamStore};
    use crate::molgraph::parse_smiles;

    #[test]
    fn gradient_matches_finite_differences() {
        let smiles = ["CC(=O)Nc1ccc(O)cc1", "CCc1ccccc1", "OCC1CCNCC1"];
        let graphs: Vec<MolecularGraph> = smiles.iter().map(|s| parse_smiles(s).unwrap()).collect();
        let feats: Vec<MoleculeFeatures> = graphs.iter().map(MoleculeFeatures::compute).collect();
        let samples: Vec<PretrainSample> = graphs
            .iter()
            .zip(&feats)
            .enumerate()
            .map(|(i, (g, f))| PretrainSample {
                graph: g,
                features: f,
                descriptor_z: [i as f64 - 1.0, 0.5, -0.3],
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = EncoderConfig {
            dim: 8,
            layers: 2,
            heads: 2,
            ..EncoderConfig::default()
        };
        let mut model = MultiChannelModel::new(cfg, &mut rng);
        let heads = PretrainHeads::new(&mut model.store, 8, &mut rng);
        let batch = PretrainBatch::build(
            samples,
            &FragmentPool::builtin(),
            &PretrainBatchConfig::default(),
            &mut rng,
        );
        assert!(!batch.mcd_quads.is_empty() && !batch.scd_quads.is_empty());
        let mut tape = Tape::new();
        let nodes = pretrain_loss(&mut tape, &model, &heads, &batch);
        let grads = tape.backward(nodes.total).unwrap();
        let f = |s: &ParamStore| {
            let m = MultiChannelModel {
                store: s.clone(),
                ..model.clone()
            };
            let mut t = Tape::new();
            let n = pretrain_loss(&mut t, &m, &heads, &batch);
            t.value(n.total).item()
        };
        // central differences carry about ulp(f)/h of rounding noise
        let noise = 8.0 * f64::EPSILON * f(&model.store).abs() / 1e-5;
        let mut store = model.store.clone();
        let ids: Vec<ParamId> = model.store.ids().collect();
        for id in ids {
            let num = numeric_gradient(&mut store, id, 1e-5, f);
            for (i, n) in num.data().iter().enumerate() {
                let a = grads.get(id).map_or(0.0, |g| g.data()[i]);
                assert!(
                    (a - n).abs() <= 1e-5 * a.abs() + noise,
                    "{} [{i}]: analytic {a:e} numeric {n:e}",
                    model.store.name(id)
                );
            }
        }
    }
}
