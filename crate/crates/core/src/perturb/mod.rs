//! Positive-sample generation for the two contrastive channels.
//!
//! * [`subgraph_mask`]: attribute-level masking of one atom and its
//!   neighbours; the topology is untouched and the encoder swaps in a mask
//!   token for the masked atoms.
//! * [`scaffold_invariant_perturb`]: replaces a small terminal side chain
//!   with a fragment from a [`FragmentPool`], keeping the Bemis-Murcko
//!   scaffold intact and changing fewer than five atoms on either side.

mod pool;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::chemfeat::{bemis_murcko_scaffold, scaffold_mask, FunctionalGroupVector};
use crate::losses::ContextLabel;
use crate::molgraph::{graphs_isomorphic, Atom, Bond, BondOrder, GraphError, MolecularGraph};

pub use pool::{
    build_fragment_pool, Fragment, FragmentPool, FragmentSource, PoolError, MAX_FRAGMENT_ATOMS,
};

/// Default number of positives generated per anchor in both channels.
pub const POSITIVES_PER_ANCHOR: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerturbError {
    #[error("molecule has {0} atoms; masking needs at least 2")]
    TooSmall(usize),
    #[error("no side chain hangs off a non-empty scaffold")]
    NoPerturbationSite,
    #[error("no pool fragment fits the free valence")]
    NoValidFragment,
}

#[derive(Debug, Clone)]
pub struct MaskedGraph {
    pub base: MolecularGraph,
    pub center: usize,
    pub masked_atoms: BTreeSet<usize>,
    pub context_label: ContextLabel,
}

impl MaskedGraph {
    pub fn is_masked(&self, atom: usize) -> bool {
        self.masked_atoms.contains(&atom)
    }
}

/// Masks the one-hop subgraph around a uniformly drawn center atom.
pub fn subgraph_mask<R: Rng + ?Sized>(
    g: &MolecularGraph,
    groups: &FunctionalGroupVector,
    rng: &mut R,
) -> Result<MaskedGraph, PerturbError> {
    if g.num_atoms() < 2 {
        return Err(PerturbError::TooSmall(g.num_atoms()));
    }
    let center = rng.random_range(0..g.num_atoms());
    Ok(subgraph_mask_at(g, center, groups))
}

pub fn subgraph_mask_at(
    g: &MolecularGraph,
    center: usize,
    groups: &FunctionalGroupVector,
) -> MaskedGraph {
    let mut masked: BTreeSet<usize> = g.neighbors(center).iter().map(|&(u, _)| u).collect();
    masked.insert(center);
    let context_label = ContextLabel::from_region(g, &masked, groups);
    MaskedGraph {
        base: g.clone(),
        center,
        masked_atoms: masked,
        context_label,
    }
}

/// A scaffold-preserving edit and its bookkeeping.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub graph: MolecularGraph,
    /// Atoms of the input removed by the edit.
    pub deleted: usize,
    /// Atoms of the output that came from the pool fragment.
    pub added: usize,
    /// Index (in the input) of the atom the fragment was attached to.
    pub anchor: usize,
}

struct SideChain {
    atoms: Vec<usize>,
    root: usize,
}

fn side_chains(g: &MolecularGraph, scaffold: &[bool]) -> Vec<SideChain> {
    let mut seen = vec![false; g.num_atoms()];
    let mut chains = Vec::new();
    for s in 0..g.num_atoms() {
        if !scaffold[s] {
            continue;
        }
        for &(r, _) in g.neighbors(s) {
            if scaffold[r] || seen[r] {
                continue;
            }
            let mut atoms = vec![r];
            seen[r] = true;
            let mut head = 0;
            while head < atoms.len() {
                let v = atoms[head];
                head += 1;
                for &(u, _) in g.neighbors(v) {
                    if !scaffold[u] && !seen[u] {
                        seen[u] = true;
                        atoms.push(u);
                    }
                }
            }
            chains.push(SideChain { atoms, root: r });
        }
    }
    chains
}

/// Terminal pieces of an oversized side chain: `(anchor, subtree atoms)`
/// for every chain bond whose far side has at most `MAX_FRAGMENT_ATOMS`.
fn terminal_cuts(
    g: &MolecularGraph,
    scaffold: &[bool],
    chain: &SideChain,
) -> Vec<(usize, Vec<usize>)> {
    let in_chain: BTreeSet<usize> = chain.atoms.iter().copied().collect();
    // parent pointers rooted at the attachment atom; side chains are trees
    let mut parent = vec![usize::MAX; g.num_atoms()];
    let mut order = vec![chain.root];
    parent[chain.root] = g
        .neighbors(chain.root)
        .iter()
        .find(|&&(u, _)| scaffold[u])
        .map(|&(u, _)| u)
        .unwrap();
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        for &(u, _) in g.neighbors(v) {
            if in_chain.contains(&u) && u != parent[v] && parent[u] == usize::MAX {
                parent[u] = v;
                order.push(u);
            }
        }
    }
    let mut subtree: Vec<Vec<usize>> = vec![Vec::new(); g.num_atoms()];
    for &v in order.iter().rev() {
        let mut atoms = vec![v];
        for &(u, _) in g.neighbors(v) {
            if in_chain.contains(&u) && parent[u] == v {
                atoms.extend(subtree[u].iter().copied());
            }
        }
        subtree[v] = atoms;
    }
    order
        .iter()
        .filter(|&&v| v != chain.root && subtree[v].len() <= MAX_FRAGMENT_ATOMS)
        .map(|&v| (parent[v], subtree[v].clone()))
        .collect()
}

/// Replaces one terminal side chain (or a terminal piece of at most four
/// atoms of a longer one) with a pool fragment.
pub fn scaffold_invariant_perturb<R: Rng + ?Sized>(
    g: &MolecularGraph,
    pool: &FragmentPool,
    rng: &mut R,
) -> Result<Perturbation, PerturbError> {
    let scaffold = scaffold_mask(g);
    if !scaffold.iter().any(|&s| s) {
        return Err(PerturbError::NoPerturbationSite);
    }
    let chains = side_chains(g, &scaffold);
    if chains.is_empty() {
        return Err(PerturbError::NoPerturbationSite);
    }
    let chain = &chains[rng.random_range(0..chains.len())];
    let (anchor, removed) = if chain.atoms.len() <= MAX_FRAGMENT_ATOMS {
        let anchor = g
            .neighbors(chain.root)
            .iter()
            .find(|&&(u, _)| scaffold[u])
            .map(|&(u, _)| u)
            .unwrap();
        (anchor, chain.atoms.clone())
    } else {
        let cuts = terminal_cuts(g, &scaffold, chain);
        cuts[rng.random_range(0..cuts.len())].clone()
    };

    let reference = bemis_murcko_scaffold(g);
    let mut candidates: Vec<&Fragment> = pool.fragments().iter().collect();
    candidates.shuffle(rng);
    for fragment in candidates {
        if let Ok(Some(p)) = attach(g, anchor, &removed, fragment).map(|graph| {
            let same =
                graphs_isomorphic(&bemis_murcko_scaffold(&graph), &reference).unwrap_or(false);
            same.then(|| Perturbation {
                deleted: removed.len(),
                added: fragment.graph.num_atoms(),
                anchor,
                graph,
            })
        }) {
            return Ok(p);
        }
    }
    Err(PerturbError::NoValidFragment)
}

fn attach(
    g: &MolecularGraph,
    anchor: usize,
    removed: &[usize],
    fragment: &Fragment,
) -> Result<MolecularGraph, GraphError> {
    let mut keep = vec![true; g.num_atoms()];
    for &r in removed {
        keep[r] = false;
    }
    let (trimmed, map) = g.induced_subgraph(&keep)?;
    let anchor = map[anchor].expect("anchor is kept");
    let mut atoms: Vec<Atom> = trimmed.atoms().to_vec();
    let mut bonds: Vec<Bond> = trimmed.bonds().to_vec();
    if atoms[anchor].explicit_h == 0 {
        return Err(GraphError::Valence {
            atom: anchor,
            element: atoms[anchor].element,
            used: 0,
            max: 0,
        });
    }
    atoms[anchor].explicit_h -= 1;
    let offset = atoms.len();
    for (i, atom) in fragment.graph.atoms().iter().enumerate() {
        let mut atom = atom.clone();
        if i == fragment.attachment {
            atom.explicit_h -= 1;
        }
        atoms.push(atom);
    }
    for bond in fragment.graph.bonds() {
        let (x, y) = bond.endpoints;
        bonds.push(Bond::new(x + offset, y + offset, bond.order));
    }
    bonds.push(Bond::new(
        anchor,
        offset + fragment.attachment,
        BondOrder::Single,
    ));
    MolecularGraph::new(atoms, bonds)
}
