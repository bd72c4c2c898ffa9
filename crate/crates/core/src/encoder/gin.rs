//! GIN-style message passing with bond-type messages.

use std::collections::BTreeSet;
use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use super::tape::{NodeId, Tape};
use crate::molgraph::{Atom, BondOrder, Element, MolecularGraph};

/// Row layout of the atom embedding table: one block per discrete feature,
/// then the mask token.
pub(crate) const ELEMENT_ROWS: usize = Element::ALL.len();
const AROMATIC_OFFSET: usize = ELEMENT_ROWS;
const CHARGE_OFFSET: usize = AROMATIC_OFFSET + 2;
const CHARGE_BUCKETS: usize = 5;
const DEGREE_OFFSET: usize = CHARGE_OFFSET + CHARGE_BUCKETS;
const DEGREE_BUCKETS: usize = 6;
const HYDROGEN_OFFSET: usize = DEGREE_OFFSET + DEGREE_BUCKETS;
const HYDROGEN_BUCKETS: usize = 5;
const RING_OFFSET: usize = HYDROGEN_OFFSET + HYDROGEN_BUCKETS;
pub(crate) const MASK_ROW: usize = RING_OFFSET + 2;
pub(crate) const ATOM_TABLE_ROWS: usize = MASK_ROW + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    /// Per-layer row standardisation after each MLP.
    pub layer_norm: bool,
    /// Pool raw node embeddings instead of value projections.
    pub literal_values: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 64,
            layers: 5,
            heads: 4,
            layer_norm: false,
            literal_values: false,
        }
    }
}

impl EncoderConfig {
    /// Panics unless `dim`, `layers` and `heads` are positive and `heads`
    /// divides `dim`.
    pub fn validate(&self) {
        assert!(
            self.dim > 0 && self.layers > 0 && self.heads > 0,
            "encoder sizes must be positive"
        );
        assert_eq!(self.dim % self.heads, 0, "heads must divide dim");
    }

    pub fn init_scale(&self) -> f64 {
        1.0 / (self.dim as f64).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct GinLayer {
    pub epsilon: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub atom_embedding: ParamId,
    pub bond_embedding: ParamId,
    pub layers: Vec<GinLayer>,
    pub layer_norm: bool,
}

impl EncoderParams {
    pub fn new<R: Rng + ?Sized>(cfg: &EncoderConfig, store: &mut ParamStore, rng: &mut R) -> Self {
        cfg.validate();
        let (d, s) = (cfg.dim, cfg.init_scale());
        let atom_embedding =
            store.add_uniform("encoder.atom_embedding", ATOM_TABLE_ROWS, d, s, rng);
        let bond_embedding =
            store.add_uniform("encoder.bond_embedding", BondOrder::ALL.len(), d, s, rng);
        let layers = (0..cfg.layers)
            .map(|k| GinLayer {
                epsilon: store.add(
                    &format!("encoder.layer{k}.epsilon"),
                    super::Matrix::scalar(0.0),
                ),
                w1: store.add_uniform(&format!("encoder.layer{k}.w1"), d, d, s, rng),
                b1: store.add_uniform(&format!("encoder.layer{k}.b1"), 1, d, s, rng),
                w2: store.add_uniform(&format!("encoder.layer{k}.w2"), d, d, s, rng),
                b2: store.add_uniform(&format!("encoder.layer{k}.b2"), 1, d, s, rng),
            })
            .collect();
        EncoderParams {
            atom_embedding,
            bond_embedding,
            layers,
            layer_norm: cfg.layer_norm,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.atom_embedding, self.bond_embedding];
        for l in &self.layers {
            ids.extend([l.epsilon, l.w1, l.b1, l.w2, l.b2]);
        }
        ids
    }
}

/// Embedding-table rows summed to form an atom's input vector.
pub fn atom_feature_rows(g: &MolecularGraph, i: usize) -> [usize; 6] {
    let a: &Atom = g.atom(i);
    let charge = (a.formal_charge.clamp(-2, 2) + 2) as usize;
    [
        a.element.index(),
        AROMATIC_OFFSET + a.aromatic as usize,
        CHARGE_OFFSET + charge,
        DEGREE_OFFSET + g.degree(i).min(DEGREE_BUCKETS - 1),
        HYDROGEN_OFFSET + (a.explicit_h as usize).min(HYDROGEN_BUCKETS - 1),
        RING_OFFSET + a.in_ring as usize,
    ]
}

/// One molecule for encoding, optionally with masked atoms.
#[derive(Debug, Clone, Copy)]
pub struct GraphInput<'a> {
    pub graph: &'a MolecularGraph,
    pub masked: Option<&'a BTreeSet<usize>>,
}

impl<'a> From<&'a MolecularGraph> for GraphInput<'a> {
    fn from(graph: &'a MolecularGraph) -> Self {
        GraphInput {
            graph,
            masked: None,
        }
    }
}

impl<'a> From<&'a crate::perturb::MaskedGraph> for GraphInput<'a> {
    fn from(m: &'a crate::perturb::MaskedGraph) -> Self {
        GraphInput {
            graph: &m.base,
            masked: Some(&m.masked_atoms),
        }
    }
}

/// Several molecules laid out as one disjoint graph; atoms of graph `g`
/// occupy rows `offsets[g]..offsets[g + 1]`.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub offsets: Rc<Vec<usize>>,
    pub atom_rows: Rc<Vec<Vec<usize>>>,
    pub neighbors: Rc<Vec<Vec<usize>>>,
    pub incident_bonds: Rc<Vec<Vec<usize>>>,
}

impl GraphBatch {
    pub fn new<'a>(inputs: impl IntoIterator<Item = GraphInput<'a>>) -> Self {
        let mut offsets = vec![0];
        let mut atom_rows = Vec::new();
        let mut neighbors = Vec::new();
        let mut incident = Vec::new();
        for input in inputs {
            let g = input.graph;
            let base = *offsets.last().unwrap();
            for i in 0..g.num_atoms() {
                let masked = input.masked.is_some_and(|m| m.contains(&i));
                atom_rows.push(if masked {
                    vec![MASK_ROW]
                } else {
                    atom_feature_rows(g, i).to_vec()
                });
                neighbors.push(g.neighbors(i).iter().map(|&(u, _)| base + u).collect());
                incident.push(
                    g.neighbors(i)
                        .iter()
                        .map(|&(_, b)| g.bond(b).order.index())
                        .collect(),
                );
            }
            offsets.push(base + g.num_atoms());
        }
        GraphBatch {
            offsets: Rc::new(offsets),
            atom_rows: Rc::new(atom_rows),
            neighbors: Rc::new(neighbors),
            incident_bonds: Rc::new(incident),
        }
    }

    pub fn num_graphs(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_atoms(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn atoms_of(&self, g: usize) -> std::ops::Range<usize> {
        self.offsets[g]..self.offsets[g + 1]
    }

    /// Row indices and segment offsets for the listed graphs, in order.
    pub fn subset(&self, graphs: &[usize]) -> (Rc<Vec<usize>>, Rc<Vec<usize>>) {
        let mut rows = Vec::new();
        let mut offsets = vec![0];
        for &g in graphs {
            rows.extend(self.atoms_of(g));
            offsets.push(rows.len());
        }
        (Rc::new(rows), Rc::new(offsets))
    }
}

/// `h_v^k = mlp_k((1 + ε_k)·h_v^{k−1} + Σ_{u∈N(v)} (h_u^{k−1} + e_uv))`;
/// a rectifier follows every layer except the last.
pub fn encode_nodes(
    tape: &mut Tape,
    store: &ParamStore,
    params: &EncoderParams,
    batch: &GraphBatch,
) -> NodeId {
    let table = tape.param(store, params.atom_embedding);
    let bonds = tape.param(store, params.bond_embedding);
    let mut h = tape.gather_sum(table, batch.atom_rows.clone());
    let edge = tape.gather_sum(bonds, batch.incident_bonds.clone());
    let last = params.layers.len() - 1;
    for (k, layer) in params.layers.iter().enumerate() {
        let nbr = tape.gather_sum(h, batch.neighbors.clone());
        let msg = tape.add(nbr, edge);
        let eps = tape.param(store, layer.epsilon);
        let one_plus = tape.add_scalar(eps, 1.0);
        let own = tape.scale_by(h, one_plus);
        let z = tape.add(own, msg);
        let (w1, b1, w2, b2) = (
            tape.param(store, layer.w1),
            tape.param(store, layer.b1),
            tape.param(store, layer.w2),
            tape.param(store, layer.b2),
        );
        let a = tape.matmul(z, w1);
        let a = tape.add_row(a, b1);
        let a = tape.relu(a);
        let o = tape.matmul(a, w2);
        let mut o = tape.add_row(o, b2);
        if params.layer_norm {
            o = tape.row_norm(o);
        }
        h = if k == last { o } else { tape.relu(o) };
    }
    h
}
