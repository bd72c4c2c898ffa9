//! Attributed molecular graphs: SMILES parsing and writing, ring perception
//! and small-graph isomorphism.
//!
//! Hydrogens are always suppressed. Every heavy atom carries its hydrogen
//! count in [`Atom::explicit_h`]; for organic-subset atoms that count is
//! resolved from the valence table when the SMILES is parsed.

mod iso;
mod rings;
mod smiles;
mod writer;

use std::fmt;

use thiserror::Error;

use crate::chemfeat::tables;

pub use iso::{graphs_isomorphic, IsoError, MAX_ISO_ATOMS};
pub use rings::{perceive_rings, RingSet};
pub use smiles::{
    parse_smiles, parse_smiles_with_warnings, ParseWarning, SmilesError, SmilesErrorKind,
};
pub use writer::write_smiles;

/// Supported chemical elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    B,
    C,
    N,
    O,
    P,
    S,
    F,
    Cl,
    Br,
    I,
}

impl Element {
    pub const ALL: [Element; 10] = [
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::P,
        Element::S,
        Element::F,
        Element::Cl,
        Element::Br,
        Element::I,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::P => "P",
            Element::S => "S",
            Element::F => "F",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Element> {
        Element::ALL.iter().copied().find(|e| e.symbol() == s)
    }

    /// Position in [`Element::ALL`]; used as a vocabulary index.
    pub fn index(self) -> usize {
        Element::ALL.iter().position(|&e| e == self).unwrap()
    }

    /// Elements that may be written lowercase (aromatic) in SMILES.
    pub fn can_be_aromatic(self) -> bool {
        matches!(
            self,
            Element::B | Element::C | Element::N | Element::O | Element::P | Element::S
        )
    }

    /// Standard valences, ascending, adjusted for a formal charge.
    pub fn valences(self, charge: i8) -> Vec<u8> {
        let base = tables::chem_tables().valences(self);
        let shift: i32 = match self {
            Element::B => -(charge as i32),
            Element::C => -(charge as i32).abs(),
            _ => charge as i32,
        };
        base.iter()
            .filter_map(|&v| {
                let adjusted = v as i32 + shift;
                (adjusted >= 0).then_some(adjusted as u8)
            })
            .collect()
    }

    pub fn max_valence(self, charge: i8) -> Option<u8> {
        self.valences(charge).last().copied()
    }

    pub fn atomic_mass(self) -> f64 {
        tables::chem_tables().mass(self.symbol())
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    pub const ALL: [BondOrder; 4] = [
        BondOrder::Single,
        BondOrder::Double,
        BondOrder::Triple,
        BondOrder::Aromatic,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Contribution to the valence of each endpoint. Aromatic bonds count as
    /// one; the extra pi electron is accounted for per atom.
    pub fn valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    /// Mass-free numeric code mixed into fingerprint hashes.
    pub fn code(self) -> u64 {
        self as u64 + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub formal_charge: i8,
    /// Hydrogens attached to this heavy atom.
    pub explicit_h: u8,
    pub aromatic: bool,
    /// Derived by ring perception when the graph is built.
    pub in_ring: bool,
}

impl Atom {
    pub fn new(element: Element) -> Self {
        Atom {
            element,
            formal_charge: 0,
            explicit_h: 0,
            aromatic: false,
            in_ring: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bond {
    pub endpoints: (usize, usize),
    pub order: BondOrder,
    pub in_ring: bool,
}

impl Bond {
    pub fn new(a: usize, b: usize, order: BondOrder) -> Self {
        Bond {
            endpoints: (a, b),
            order,
            in_ring: false,
        }
    }

    pub fn other(&self, atom: usize) -> usize {
        if self.endpoints.0 == atom {
            self.endpoints.1
        } else {
            self.endpoints.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("bond {0} connects atom {1} to itself")]
    SelfLoop(usize, usize),
    #[error("bond {bond} references atom {atom}, but the graph has {n} atoms")]
    DanglingBond { bond: usize, atom: usize, n: usize },
    #[error("atoms {0} and {1} are bonded more than once")]
    DuplicateBond(usize, usize),
    #[error("graph is not connected")]
    Disconnected,
    #[error("atom {atom} ({element}) has valence {used}, allowed at most {max}")]
    Valence {
        atom: usize,
        element: Element,
        used: u8,
        max: u8,
    },
    #[error("atom {0} is aromatic but not in a ring")]
    AromaticOutsideRing(usize),
}

/// An attributed, connected, undirected molecular graph.
///
/// The empty graph (no atoms) is valid and represents an empty scaffold.
#[derive(Debug, Clone, PartialEq)]
pub struct MolecularGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl MolecularGraph {
    /// Builds a graph, checking structural invariants and valences, and
    /// derives ring flags.
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Result<Self, GraphError> {
        let n = atoms.len();
        let mut adjacency = vec![Vec::new(); n];
        for (bi, bond) in bonds.iter().enumerate() {
            let (a, b) = bond.endpoints;
            for atom in [a, b] {
                if atom >= n {
                    return Err(GraphError::DanglingBond { bond: bi, atom, n });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop(bi, a));
            }
            if adjacency[a].iter().any(|&(nb, _)| nb == b) {
                return Err(GraphError::DuplicateBond(a.min(b), a.max(b)));
            }
            adjacency[a].push((b, bi));
            adjacency[b].push((a, bi));
        }
        let mut graph = MolecularGraph {
            atoms,
            bonds,
            adjacency,
        };
        if !graph.is_connected() {
            return Err(GraphError::Disconnected);
        }
        for i in 0..n {
            let atom = &graph.atoms[i];
            let used = graph.bond_valence(i) + atom.explicit_h;
            let max = atom.element.max_valence(atom.formal_charge).unwrap_or(0);
            if used > max {
                return Err(GraphError::Valence {
                    atom: i,
                    element: atom.element,
                    used,
                    max,
                });
            }
        }
        let rings = perceive_rings(&graph);
        for (i, atom) in graph.atoms.iter_mut().enumerate() {
            atom.in_ring = rings.ring_atoms.contains(&i);
        }
        for (i, bond) in graph.bonds.iter_mut().enumerate() {
            bond.in_ring = rings.ring_bonds.contains(&i);
        }
        if let Some(i) = graph.atoms.iter().position(|a| a.aromatic && !a.in_ring) {
            return Err(GraphError::AromaticOutsideRing(i));
        }
        Ok(graph)
    }

    pub fn empty() -> Self {
        MolecularGraph {
            atoms: Vec::new(),
            bonds: Vec::new(),
            adjacency: Vec::new(),
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn bond(&self, i: usize) -> &Bond {
        &self.bonds[i]
    }

    /// `(neighbor, bond index)` pairs of atom `i`.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn adjacency(&self) -> &[Vec<(usize, usize)>] {
        &self.adjacency
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn num_bonds(&self) -> usize {
        self.bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency[a]
            .iter()
            .find(|&&(nb, _)| nb == b)
            .map(|&(_, bi)| bi)
    }

    /// Sum of bond valence contributions at atom `i`.
    pub fn bond_valence(&self, i: usize) -> u8 {
        self.adjacency[i]
            .iter()
            .map(|&(_, bi)| self.bonds[bi].order.valence())
            .sum()
    }

    pub fn total_hydrogens(&self) -> usize {
        self.atoms.iter().map(|a| a.explicit_h as usize).sum()
    }

    fn is_connected(&self) -> bool {
        let n = self.atoms.len();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &(u, _) in &self.adjacency[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == n
    }

    /// Subgraph induced by the atoms with `keep[i] == true`. Atoms that lose
    /// bonds get the freed valence back as hydrogens. Returns the new graph
    /// and the old-to-new index map.
    pub fn induced_subgraph(
        &self,
        keep: &[bool],
    ) -> Result<(MolecularGraph, Vec<Option<usize>>), GraphError> {
        let mut map = vec![None; self.atoms.len()];
        let mut atoms = Vec::new();
        for (i, atom) in self.atoms.iter().enumerate() {
            if keep[i] {
                map[i] = Some(atoms.len());
                atoms.push(atom.clone());
            }
        }
        let mut bonds = Vec::new();
        for bond in &self.bonds {
            let (a, b) = bond.endpoints;
            match (map[a], map[b]) {
                (Some(na), Some(nb)) => bonds.push(Bond::new(na, nb, bond.order)),
                (Some(na), None) => atoms[na].explicit_h += bond.order.valence(),
                (None, Some(nb)) => atoms[nb].explicit_h += bond.order.valence(),
                (None, None) => {}
            }
        }
        // a kept atom can lose aromaticity only if its ring was cut, which an
        // induced subgraph on whole rings never does; ring flags are re-derived
        let graph = MolecularGraph::new(atoms, bonds)?;
        Ok((graph, map))
    }
}

impl fmt::Display for MolecularGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&write_smiles(self))
    }
}
