//! Dense numerics core: a GIN-style message-passing encoder with three
//! prompt-guided attention readouts (MCD, SCD, CP), reverse-mode gradients
//! on a per-pass tape, finite-difference checks and an Adam optimiser.

mod attention;
mod gin;
pub mod gradcheck;
mod matrix;
mod optim;
mod params;
mod tape;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use attention::{prompt_aggregate, PromptAggregator};
pub use gin::{
    atom_feature_rows, encode_nodes, EncoderConfig, EncoderParams, GinLayer, GraphBatch, GraphInput,
};
pub use gradcheck::{finite_diff_check, numeric_gradient, GradCheckReport};
pub use matrix::Matrix;
pub use optim::{Adam, AdamConfig};
pub use params::{
    read_checkpoint, CheckpointError, ParamId, ParamStore, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use tape::{Gradients, NodeId, Tape, TapeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    Mcd,
    Scd,
    Cp,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Mcd, Channel::Scd, Channel::Cp];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Mcd => "mcd",
            Channel::Scd => "scd",
            Channel::Cp => "cp",
        }
    }
}

/// Encoder plus one prompt aggregator per channel, all in one store.
#[derive(Debug, Clone)]
pub struct MultiChannelModel {
    pub config: EncoderConfig,
    pub store: ParamStore,
    pub encoder: EncoderParams,
    pub aggregators: [PromptAggregator; 3],
}

/// One forward pass over a [`GraphBatch`].
#[derive(Debug, Clone, Copy)]
pub struct ChannelNodes {
    pub nodes: NodeId,
    pub graphs: [NodeId; 3],
    pub attention: [NodeId; 3],
}

/// Per-molecule outputs of a trained model.
#[derive(Debug, Clone)]
pub struct ChannelEmbeddings {
    pub node_embeddings: Matrix,
    /// Indexed by [`Channel::index`].
    pub graph_vectors: [Vec<f64>; 3],
    /// `heads x atoms` per channel.
    pub attention: [Matrix; 3],
}

impl MultiChannelModel {
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let encoder = EncoderParams::new(&config, &mut store, rng);
        let aggregators = Channel::ALL
            .map(|c| PromptAggregator::new(&format!("agg.{}", c.name()), &config, &mut store, rng));
        MultiChannelModel {
            config,
            store,
            encoder,
            aggregators,
        }
    }

    pub fn aggregator(&self, c: Channel) -> &PromptAggregator {
        &self.aggregators[c.index()]
    }

    pub fn aggregator_param_ids(&self) -> Vec<ParamId> {
        self.aggregators
            .iter()
            .flat_map(|a| a.param_ids())
            .collect()
    }

    pub fn freeze_aggregators(&mut self, frozen: bool) {
        for a in &self.aggregators {
            a.set_frozen(&mut self.store, frozen);
        }
    }

    pub fn encode(&self, tape: &mut Tape, batch: &GraphBatch) -> NodeId {
        encode_nodes(tape, &self.store, &self.encoder, batch)
    }

    /// Reads out channel `c` over the listed graphs of `batch`, in order.
    pub fn readout(
        &self,
        tape: &mut Tape,
        nodes: NodeId,
        batch: &GraphBatch,
        c: Channel,
        graphs: &[usize],
    ) -> (NodeId, NodeId) {
        let all =
            graphs.len() == batch.num_graphs() && graphs.iter().enumerate().all(|(i, &g)| i == g);
        if all {
            return prompt_aggregate(
                tape,
                &self.store,
                self.aggregator(c),
                nodes,
                batch.offsets.clone(),
            );
        }
        let (rows, offsets) = batch.subset(graphs);
        let sub = tape.gather_rows(nodes, rows);
        prompt_aggregate(tape, &self.store, self.aggregator(c), sub, offsets)
    }

    /// All three channels over every graph of the batch.
    pub fn forward(&self, tape: &mut Tape, batch: &GraphBatch) -> ChannelNodes {
        let nodes = self.encode(tape, batch);
        let mut graphs = [nodes; 3];
        let mut attention = [nodes; 3];
        for c in Channel::ALL {
            let (g, a) = prompt_aggregate(
                tape,
                &self.store,
                self.aggregator(c),
                nodes,
                batch.offsets.clone(),
            );
            graphs[c.index()] = g;
            attention[c.index()] = a;
        }
        ChannelNodes {
            nodes,
            graphs,
            attention,
        }
    }

    /// Per-molecule embeddings, computed in chunks of `chunk` molecules.
    pub fn embed<'a>(&self, inputs: &[GraphInput<'a>], chunk: usize) -> Vec<ChannelEmbeddings> {
        let mut out = Vec::with_capacity(inputs.len());
        for part in inputs.chunks(chunk.max(1)) {
            let batch = GraphBatch::new(part.iter().copied());
            let mut tape = Tape::new();
            let f = self.forward(&mut tape, &batch);
            for g in 0..batch.num_graphs() {
                let rows: Vec<usize> = batch.atoms_of(g).collect();
                let att = |c: usize| tape.value(f.attention[c]).select_rows(&rows).transpose();
                out.push(ChannelEmbeddings {
                    node_embeddings: tape.value(f.nodes).select_rows(&rows),
                    graph_vectors: [0, 1, 2].map(|c| tape.value(f.graphs[c]).row(g).to_vec()),
                    attention: [att(0), att(1), att(2)],
                });
            }
        }
        out
    }

    /// `[MCD, SCD, CP]` graph-vector matrices, one row per molecule.
    pub fn channel_matrices<'a>(&self, inputs: &[GraphInput<'a>], chunk: usize) -> [Matrix; 3] {
        let d = self.config.dim;
        let mut mats = [0, 1, 2].map(|_| Vec::with_capacity(inputs.len() * d));
        for part in inputs.chunks(chunk.max(1)) {
            let batch = GraphBatch::new(part.iter().copied());
            let mut tape = Tape::new();
            let f = self.forward(&mut tape, &batch);
            for (c, m) in mats.iter_mut().enumerate() {
                m.extend_from_slice(tape.value(f.graphs[c]).data());
            }
        }
        mats.map(|m| Matrix::from_vec(inputs.len(), d, m))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::molgraph::{parse_smiles, MolecularGraph};

    fn model(seed: u64, dim: usize, layers: usize, heads: usize) -> MultiChannelModel {
        let cfg = EncoderConfig {
            dim,
            layers,
            heads,
            ..EncoderConfig::default()
        };
        MultiChannelModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn mv(x: &[f64], w: &Matrix) -> Vec<f64> {
        (0..w.cols())
            .map(|j| (0..w.rows()).map(|i| x[i] * w.get(i, j)).sum())
            .collect()
    }

    /// Straight-line re-implementation of the encoder and one readout.
    fn oracle(
        m: &MultiChannelModel,
        g: &MolecularGraph,
        c: Channel,
    ) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
        let s = &m.store;
        let d = m.config.dim;
        let table = s.value(m.encoder.atom_embedding);
        let bonds = s.value(m.encoder.bond_embedding);
        let mut h: Vec<Vec<f64>> = (0..g.num_atoms())
            .map(|i| {
                let mut v = vec![0.0; d];
                for r in atom_feature_rows(g, i) {
                    for k in 0..d {
                        v[k] += table.get(r, k);
                    }
                }
                v
            })
            .collect();
        for (li, layer) in m.encoder.layers.iter().enumerate() {
            let eps = s.value(layer.epsilon).item();
            let mut next = Vec::new();
            for v in 0..g.num_atoms() {
                let mut z: Vec<f64> = h[v].iter().map(|x| (1.0 + eps) * x).collect();
                for &(u, b) in g.neighbors(v) {
                    let o = g.bond(b).order.index();
                    for k in 0..d {
                        z[k] += h[u][k] + bonds.get(o, k);
                    }
                }
                let mut a = mv(&z, s.value(layer.w1));
                for k in 0..d {
                    a[k] = (a[k] + s.value(layer.b1).get(0, k)).max(0.0);
                }
                let mut o = mv(&a, s.value(layer.w2));
                for k in 0..d {
                    o[k] += s.value(layer.b2).get(0, k);
                    if li + 1 < m.encoder.layers.len() {
                        o[k] = o[k].max(0.0);
                    }
                }
                next.push(o);
            }
            h = next;
        }
        let agg = m.aggregator(c);
        let heads = agg.heads;
        let dk = d / heads;
        let q = mv(s.value(agg.prompt).data(), s.value(agg.w_q));
        let keys: Vec<Vec<f64>> = h.iter().map(|x| mv(x, s.value(agg.w_k))).collect();
        let vals: Vec<Vec<f64>> = h.iter().map(|x| mv(x, s.value(agg.w_v))).collect();
        let mut pooled = vec![0.0; d];
        let mut att = vec![vec![0.0; g.num_atoms()]; heads];
        for hd in 0..heads {
            let logits: Vec<f64> = keys
                .iter()
                .map(|k| {
                    (hd * dk..(hd + 1) * dk).map(|j| q[j] * k[j]).sum::<f64>() / (dk as f64).sqrt()
                })
                .collect();
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
            for (x, l) in logits.iter().enumerate() {
                let a = (l - mx).exp() / z;
                att[hd][x] = a;
                for j in hd * dk..(hd + 1) * dk {
                    pooled[j] += a * vals[x][j];
                }
            }
        }
        let mut out = mv(&pooled, s.value(agg.out_w));
        for k in 0..d {
            out[k] += s.value(agg.out_b).get(0, k);
        }
        (h, out, att)
    }

    #[test]
    fn matches_straight_line_oracle() {
        let m = model(7, 8, 3, 2);
        for smi in ["CC(=O)Nc1ccc(O)cc1", "C1CC1CN", "O"] {
            let g = parse_smiles(smi).unwrap();
            let e = &m.embed(&[(&g).into()], 4)[0];
            for c in Channel::ALL {
                let (nodes, vec, att) = oracle(&m, &g, c);
                for (i, row) in nodes.iter().enumerate() {
                    for (k, v) in row.iter().enumerate() {
                        assert!((e.node_embeddings.get(i, k) - v).abs() < 1e-12);
                    }
                }
                for (a, b) in e.graph_vectors[c.index()].iter().zip(&vec) {
                    assert!((a - b).abs() < 1e-12, "{smi} {c:?}");
                }
                for (hd, row) in att.iter().enumerate() {
                    for (x, a) in row.iter().enumerate() {
                        assert!((e.attention[c.index()].get(hd, x) - a).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn single_atom_attention_is_one() {
        let m = model(1, 8, 2, 4);
        let g = parse_smiles("C").unwrap();
        let e = &m.embed(&[(&g).into()], 1)[0];
        for c in 0..3 {
            assert_eq!(e.attention[c].shape(), (4, 1));
            assert!(e.attention[c]
                .data()
                .iter()
                .all(|&a| (a - 1.0).abs() < 1e-15));
        }
    }

    #[test]
    fn zero_keys_give_uniform_attention() {
        let mut m = model(2, 8, 2, 2);
        let wk = m.aggregator(Channel::Scd).w_k;
        *m.store.value_mut(wk) = Matrix::zeros(8, 8);
        let g = parse_smiles("CCOC(=O)c1ccccc1").unwrap();
        let e = &m.embed(&[(&g).into()], 1)[0];
        let n = g.num_atoms() as f64;
        assert!(e.attention[Channel::Scd.index()]
            .data()
            .iter()
            .all(|&a| (a - 1.0 / n).abs() < 1e-15));
    }

    #[test]
    fn zero_mlp_single_atom() {
        let mut m = model(3, 8, 2, 2);
        for l in m.encoder.layers.clone() {
            for id in [l.w1, l.b1, l.w2, l.b2] {
                let (r, c) = m.store.value(id).shape();
                *m.store.value_mut(id) = Matrix::zeros(r, c);
            }
        }
        let g = parse_smiles("N").unwrap();
        let e = &m.embed(&[(&g).into()], 1)[0];
        assert!(e.node_embeddings.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn permutation_invariance() {
        let m = model(4, 16, 3, 4);
        let a = parse_smiles("CC(=O)Nc1ccc(O)cc1").unwrap();
        let b = parse_smiles("Oc1ccc(NC(C)=O)cc1").unwrap();
        let ea = &m.embed(&[(&a).into()], 1)[0];
        let eb = &m.embed(&[(&b).into()], 1)[0];
        for c in 0..3 {
            for (x, y) in ea.graph_vectors[c].iter().zip(&eb.graph_vectors[c]) {
                assert!((x - y).abs() < 1e-10);
            }
        }
        let mut ra: Vec<Vec<u64>> = (0..a.num_atoms())
            .map(|i| {
                ea.node_embeddings
                    .row(i)
                    .iter()
                    .map(|v| (v * 1e8).round() as u64)
                    .collect()
            })
            .collect();
        let mut rb: Vec<Vec<u64>> = (0..b.num_atoms())
            .map(|i| {
                eb.node_embeddings
                    .row(i)
                    .iter()
                    .map(|v| (v * 1e8).round() as u64)
                    .collect()
            })
            .collect();
        ra.sort();
        rb.sort();
        assert_eq!(ra, rb);
    }

    #[test]
    fn batching_matches_single() {
        let m = model(5, 8, 2, 2);
        let gs: Vec<MolecularGraph> = ["CCO", "c1ccncc1", "CC(C)(C)Br"]
            .iter()
            .map(|s| parse_smiles(s).unwrap())
            .collect();
        let inputs: Vec<GraphInput> = gs.iter().map(Into::into).collect();
        let together = m.channel_matrices(&inputs, 8);
        for (i, inp) in inputs.iter().enumerate() {
            let alone = m.channel_matrices(&[*inp], 1);
            for c in 0..3 {
                for (x, y) in together[c].row(i).iter().zip(alone[c].row(0)) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn subset_readout_matches_full() {
        let m = model(6, 8, 2, 2);
        let gs: Vec<MolecularGraph> = ["CCO", "c1ccncc1", "CC(C)(C)Br"]
            .iter()
            .map(|s| parse_smiles(s).unwrap())
            .collect();
        let batch = GraphBatch::new(gs.iter().map(Into::into));
        let mut tape = Tape::new();
        let f = m.forward(&mut tape, &batch);
        let (sub, _) = m.readout(&mut tape, f.nodes, &batch, Channel::Cp, &[2, 0]);
        let full = tape.value(f.graphs[Channel::Cp.index()]).clone();
        assert_eq!(tape.value(sub).row(0), full.row(2));
        assert_eq!(tape.value(sub).row(1), full.row(0));
    }
}
