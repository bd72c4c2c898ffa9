//! SMILES reader for the organic subset plus bracket atoms.
//!
//! Supported: organic-subset atoms `B C N O P S F Cl Br I`, aromatic
//! `b c n o p s`, bracket atoms with isotope (ignored), chirality (ignored),
//! hydrogen count and charge, branches, ring closures `1`-`9` and `%nn`, and
//! the bond symbols `- = # :`. The directional bonds `/` and `\` are read as
//! single bonds. Stereo marks produce a [`ParseWarning`].

use std::collections::BTreeMap;

use thiserror::Error;

use super::{Atom, Bond, BondOrder, Element, GraphError, MolecularGraph};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesErrorKind {
    #[error("empty input")]
    Empty,
    #[error("non-ASCII input")]
    NonAscii,
    #[error("unknown element {0:?}")]
    UnknownElement(String),
    #[error("unexpected character {0:?}")]
    Unexpected(char),
    #[error("unbalanced branch: ')' without matching '('")]
    UnmatchedCloseBranch,
    #[error("unbalanced branch: '(' never closed")]
    UnclosedBranch,
    #[error("unclosed bracket atom")]
    UnclosedBracket,
    #[error("unclosed ring {0}")]
    UnclosedRing(u32),
    #[error("bond or ring closure without a preceding atom")]
    MissingAtom,
    #[error("dangling bond symbol")]
    DanglingBond,
    #[error("ring closure {0} has conflicting bond symbols")]
    RingBondMismatch(u32),
    #[error("ring closure {0} joins an atom to itself")]
    RingSelfLoop(u32),
    #[error("atoms are bonded twice")]
    DuplicateBond,
    #[error("{element} exceeds its valence ({used} > {max})")]
    Valence { element: Element, used: u8, max: u8 },
    #[error("aromatic atom outside any ring")]
    AromaticOutsideRing,
    #[error("'.' separated fragments are not supported")]
    MultiFragment,
    #[error("element {0} cannot be aromatic")]
    BadAromatic(Element),
    #[error("invalid charge or hydrogen count")]
    BadBracketContent,
}

/// A parse failure at a 0-based character offset.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("SMILES error at offset {position}: {kind}")]
pub struct SmilesError {
    pub position: usize,
    pub kind: SmilesErrorKind,
}

impl SmilesError {
    fn new(position: usize, kind: SmilesErrorKind) -> Self {
        SmilesError { position, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseWarning {
    /// A stereo mark (`@`, `/`, `\`) was read and discarded.
    StereoIgnored {
        position: usize,
        mark: char,
    },
    IsotopeIgnored {
        position: usize,
    },
}

pub fn parse_smiles(text: &str) -> Result<MolecularGraph, SmilesError> {
    parse_smiles_with_warnings(text).map(|(g, _)| g)
}

pub fn parse_smiles_with_warnings(
    text: &str,
) -> Result<(MolecularGraph, Vec<ParseWarning>), SmilesError> {
    if text.is_empty() {
        return Err(SmilesError::new(0, SmilesErrorKind::Empty));
    }
    if let Some(pos) = text.chars().position(|c| !c.is_ascii()) {
        return Err(SmilesError::new(pos, SmilesErrorKind::NonAscii));
    }
    let mut parser = Parser {
        bytes: text.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonded_h: Vec::new(),
        bonds: Vec::new(),
        warnings: Vec::new(),
    };
    parser.run()?;
    let Parser {
        atoms,
        bonded_h,
        bonds,
        warnings,
        ..
    } = parser;
    let graph = finish(atoms, bonded_h, bonds)?;
    Ok((graph, warnings))
}

struct RawAtom {
    atom: Atom,
    position: usize,
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<RawAtom>,
    // hydrogen count from a bracket atom, None for organic-subset atoms
    bonded_h: Vec<Option<u8>>,
    bonds: Vec<Bond>,
    warnings: Vec<ParseWarning>,
}

struct PendingBond {
    order: Option<BondOrder>,
    position: usize,
}

impl Parser<'_> {
    fn err(&self, kind: SmilesErrorKind) -> SmilesError {
        SmilesError::new(self.pos, kind)
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        let mut prev: Option<usize> = None;
        let mut branches: Vec<(usize, usize)> = Vec::new();
        let mut pending: Option<PendingBond> = None;
        let mut rings: BTreeMap<u32, (usize, Option<BondOrder>, usize)> = BTreeMap::new();

        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    let Some(p) = prev else {
                        return Err(self.err(SmilesErrorKind::MissingAtom));
                    };
                    if pending.is_some() {
                        return Err(self.err(SmilesErrorKind::DanglingBond));
                    }
                    branches.push((p, self.pos));
                    self.pos += 1;
                }
                b')' => {
                    if pending.is_some() {
                        return Err(self.err(SmilesErrorKind::DanglingBond));
                    }
                    let Some((p, _)) = branches.pop() else {
                        return Err(self.err(SmilesErrorKind::UnmatchedCloseBranch));
                    };
                    prev = Some(p);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if prev.is_none() {
                        return Err(self.err(SmilesErrorKind::MissingAtom));
                    }
                    if pending.is_some() {
                        return Err(self.err(SmilesErrorKind::DanglingBond));
                    }
                    let order = match c {
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        b':' => BondOrder::Aromatic,
                        b'-' => BondOrder::Single,
                        _ => {
                            self.warnings.push(ParseWarning::StereoIgnored {
                                position: self.pos,
                                mark: c as char,
                            });
                            BondOrder::Single
                        }
                    };
                    pending = Some(PendingBond {
                        order: Some(order),
                        position: self.pos,
                    });
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => {
                    let start = self.pos;
                    let Some(current) = prev else {
                        return Err(self.err(SmilesErrorKind::MissingAtom));
                    };
                    let number = self.ring_number()?;
                    let order = pending.take().and_then(|p| p.order);
                    match rings.remove(&number) {
                        None => {
                            rings.insert(number, (current, order, start));
                        }
                        Some((other, other_order, _)) => {
                            if other == current {
                                return Err(SmilesError::new(
                                    start,
                                    SmilesErrorKind::RingSelfLoop(number),
                                ));
                            }
                            let order = match (order, other_order) {
                                (Some(a), Some(b)) if a != b => {
                                    return Err(SmilesError::new(
                                        start,
                                        SmilesErrorKind::RingBondMismatch(number),
                                    ));
                                }
                                (Some(a), _) | (None, Some(a)) => a,
                                (None, None) => self.default_order(other, current),
                            };
                            self.add_bond(other, current, order, start)?;
                        }
                    }
                }
                b'.' => return Err(self.err(SmilesErrorKind::MultiFragment)),
                _ => {
                    let start = self.pos;
                    let idx = self.atom()?;
                    if let Some(p) = prev {
                        let order = match pending.take() {
                            Some(PendingBond { order: Some(o), .. }) => o,
                            _ => self.default_order(p, idx),
                        };
                        self.add_bond(p, idx, order, start)?;
                    } else if let Some(pb) = pending.take() {
                        return Err(SmilesError::new(pb.position, SmilesErrorKind::MissingAtom));
                    }
                    prev = Some(idx);
                }
            }
        }
        if let Some(pb) = pending {
            return Err(SmilesError::new(pb.position, SmilesErrorKind::DanglingBond));
        }
        if let Some(&(_, pos)) = branches.last() {
            return Err(SmilesError::new(pos, SmilesErrorKind::UnclosedBranch));
        }
        if let Some((&number, &(_, _, pos))) = rings.iter().next() {
            return Err(SmilesError::new(pos, SmilesErrorKind::UnclosedRing(number)));
        }
        Ok(())
    }

    fn default_order(&self, a: usize, b: usize) -> BondOrder {
        if self.atoms[a].atom.aromatic && self.atoms[b].atom.aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn add_bond(
        &mut self,
        a: usize,
        b: usize,
        order: BondOrder,
        position: usize,
    ) -> Result<(), SmilesError> {
        if self.bonds.iter().any(|bd| {
            let (x, y) = bd.endpoints;
            (x == a && y == b) || (x == b && y == a)
        }) {
            return Err(SmilesError::new(position, SmilesErrorKind::DuplicateBond));
        }
        self.bonds.push(Bond::new(a, b, order));
        Ok(())
    }

    fn ring_number(&mut self) -> Result<u32, SmilesError> {
        let c = self.peek().unwrap();
        if c == b'%' {
            let digits = self.bytes.get(self.pos + 1..self.pos + 3);
            match digits {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    Ok(((d[0] - b'0') * 10 + (d[1] - b'0')) as u32)
                }
                _ => Err(self.err(SmilesErrorKind::Unexpected('%'))),
            }
        } else {
            self.pos += 1;
            Ok((c - b'0') as u32)
        }
    }

    fn push_atom(&mut self, atom: Atom, position: usize, hydrogens: Option<u8>) -> usize {
        self.atoms.push(RawAtom { atom, position });
        self.bonded_h.push(hydrogens);
        self.atoms.len() - 1
    }

    fn atom(&mut self) -> Result<usize, SmilesError> {
        let start = self.pos;
        if self.peek() == Some(b'[') {
            return self.bracket_atom();
        }
        let rest = &self.bytes[self.pos..];
        let (element, aromatic, len) = match rest {
            [b'C', b'l', ..] => (Element::Cl, false, 2),
            [b'B', b'r', ..] => (Element::Br, false, 2),
            [b'B', ..] => (Element::B, false, 1),
            [b'C', ..] => (Element::C, false, 1),
            [b'N', ..] => (Element::N, false, 1),
            [b'O', ..] => (Element::O, false, 1),
            [b'P', ..] => (Element::P, false, 1),
            [b'S', ..] => (Element::S, false, 1),
            [b'F', ..] => (Element::F, false, 1),
            [b'I', ..] => (Element::I, false, 1),
            [b'b', ..] => (Element::B, true, 1),
            [b'c', ..] => (Element::C, true, 1),
            [b'n', ..] => (Element::N, true, 1),
            [b'o', ..] => (Element::O, true, 1),
            [b'p', ..] => (Element::P, true, 1),
            [b's', ..] => (Element::S, true, 1),
            [c, ..] if c.is_ascii_alphabetic() || *c == b'*' => {
                return Err(self.err(SmilesErrorKind::UnknownElement((*c as char).to_string())));
            }
            [c, ..] => return Err(self.err(SmilesErrorKind::Unexpected(*c as char))),
            [] => unreachable!(),
        };
        self.pos += len;
        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;
        Ok(self.push_atom(atom, start, None))
    }

    fn bracket_atom(&mut self) -> Result<usize, SmilesError> {
        let open = self.pos;
        let close = self.bytes[open..]
            .iter()
            .position(|&c| c == b']')
            .map(|off| open + off)
            .ok_or_else(|| SmilesError::new(open, SmilesErrorKind::UnclosedBracket))?;
        self.pos += 1;

        let isotope_start = self.pos;
        while self.pos < close && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos > isotope_start {
            self.warnings.push(ParseWarning::IsotopeIgnored {
                position: isotope_start,
            });
        }

        let sym_start = self.pos;
        let mut sym_len = 0;
        if self.pos < close && self.bytes[self.pos].is_ascii_alphabetic() {
            sym_len = 1;
            if self.pos + 1 < close && self.bytes[self.pos + 1].is_ascii_lowercase() {
                let two = std::str::from_utf8(&self.bytes[self.pos..self.pos + 2]).unwrap();
                if Element::from_symbol(two).is_some() {
                    sym_len = 2;
                }
            }
        }
        if sym_len == 0 {
            return Err(SmilesError::new(
                sym_start,
                SmilesErrorKind::UnknownElement(
                    String::from_utf8_lossy(&self.bytes[sym_start..close]).into(),
                ),
            ));
        }
        let sym = std::str::from_utf8(&self.bytes[sym_start..sym_start + sym_len]).unwrap();
        let (element, aromatic) = if let Some(e) = Element::from_symbol(sym) {
            (e, false)
        } else {
            let upper = sym.to_ascii_uppercase();
            match Element::from_symbol(&upper) {
                Some(e) if sym.len() == 1 => (e, true),
                _ => {
                    return Err(SmilesError::new(
                        sym_start,
                        SmilesErrorKind::UnknownElement(sym.into()),
                    ))
                }
            }
        };
        if aromatic && !element.can_be_aromatic() {
            return Err(SmilesError::new(
                sym_start,
                SmilesErrorKind::BadAromatic(element),
            ));
        }
        self.pos += sym_len;

        while self.pos < close && self.bytes[self.pos] == b'@' {
            self.warnings.push(ParseWarning::StereoIgnored {
                position: self.pos,
                mark: '@',
            });
            self.pos += 1;
        }

        let mut hydrogens = 0u8;
        if self.pos < close && self.bytes[self.pos] == b'H' {
            self.pos += 1;
            hydrogens = 1;
            if self.pos < close && self.bytes[self.pos].is_ascii_digit() {
                hydrogens = self.bytes[self.pos] - b'0';
                self.pos += 1;
            }
        }

        let mut charge: i32 = 0;
        if self.pos < close && matches!(self.bytes[self.pos], b'+' | b'-') {
            let sign = if self.bytes[self.pos] == b'+' { 1 } else { -1 };
            let symbol = self.bytes[self.pos];
            self.pos += 1;
            let mut magnitude = 1;
            if self.pos < close && self.bytes[self.pos].is_ascii_digit() {
                magnitude = (self.bytes[self.pos] - b'0') as i32;
                self.pos += 1;
            } else {
                while self.pos < close && self.bytes[self.pos] == symbol {
                    magnitude += 1;
                    self.pos += 1;
                }
            }
            charge = sign * magnitude;
        }
        if self.pos < close && self.bytes[self.pos] == b':' {
            // atom class
            self.pos += 1;
            while self.pos < close && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if self.pos != close || !(-4..=4).contains(&charge) {
            return Err(self.err(SmilesErrorKind::BadBracketContent));
        }
        self.pos = close + 1;

        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;
        atom.formal_charge = charge as i8;
        Ok(self.push_atom(atom, open, Some(hydrogens)))
    }
}

/// Hydrogens implied for an organic-subset atom given its bond valence.
/// Returns `None` when the bonds alone exceed every allowed valence.
pub(crate) fn implicit_hydrogens(element: Element, aromatic: bool, bond_valence: u8) -> Option<u8> {
    let valences = element.valences(0);
    let max = *valences.last()?;
    if bond_valence > max {
        return None;
    }
    if aromatic {
        let lowest = valences[0];
        return Some(lowest.saturating_sub(bond_valence + 1));
    }
    valences
        .iter()
        .find(|&&v| v >= bond_valence)
        .map(|&v| v - bond_valence)
}

fn finish(
    raw: Vec<RawAtom>,
    bonded_h: Vec<Option<u8>>,
    bonds: Vec<Bond>,
) -> Result<MolecularGraph, SmilesError> {
    let mut bond_valence = vec![0u8; raw.len()];
    for b in &bonds {
        bond_valence[b.endpoints.0] += b.order.valence();
        bond_valence[b.endpoints.1] += b.order.valence();
    }
    let mut atoms = Vec::with_capacity(raw.len());
    for (i, r) in raw.iter().enumerate() {
        let mut atom = r.atom.clone();
        atom.explicit_h = match bonded_h[i] {
            Some(h) => h,
            None => implicit_hydrogens(atom.element, atom.aromatic, bond_valence[i]).ok_or_else(
                || {
                    SmilesError::new(
                        r.position,
                        SmilesErrorKind::Valence {
                            element: atom.element,
                            used: bond_valence[i],
                            max: atom.element.max_valence(0).unwrap_or(0),
                        },
                    )
                },
            )?,
        };
        atoms.push(atom);
    }
    let position_of = |i: usize| raw.get(i).map_or(0, |r| r.position);
    MolecularGraph::new(atoms, bonds).map_err(|e| match e {
        GraphError::Valence {
            atom,
            element,
            used,
            max,
        } => SmilesError::new(
            position_of(atom),
            SmilesErrorKind::Valence { element, used, max },
        ),
        GraphError::AromaticOutsideRing(atom) => {
            SmilesError::new(position_of(atom), SmilesErrorKind::AromaticOutsideRing)
        }
        GraphError::Disconnected => SmilesError::new(0, SmilesErrorKind::MultiFragment),
        GraphError::DuplicateBond(a, _)
        | GraphError::SelfLoop(_, a)
        | GraphError::DanglingBond { atom: a, .. } => {
            SmilesError::new(position_of(a), SmilesErrorKind::DuplicateBond)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kind(s: &str) -> SmilesErrorKind {
        parse_smiles(s).unwrap_err().kind
    }

    #[test]
    fn methane() {
        let g = parse_smiles("C").unwrap();
        assert_eq!(g.num_atoms(), 1);
        assert_eq!(g.num_bonds(), 0);
        assert_eq!(g.atom(0).explicit_h, 4);
    }

    #[test]
    fn benzene() {
        let g = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(g.num_atoms(), 6);
        assert_eq!(g.num_bonds(), 6);
        assert!(g
            .atoms()
            .iter()
            .all(|a| a.aromatic && a.in_ring && a.explicit_h == 1));
        assert!(g
            .bonds()
            .iter()
            .all(|b| b.order == BondOrder::Aromatic && b.in_ring));
    }

    #[test]
    fn benzoic_acid_kekule() {
        let g = parse_smiles("C1=CC=CC=C1C(=O)O").unwrap();
        assert_eq!(g.num_atoms(), 9);
        for i in 0..6 {
            assert!(g.atom(i).in_ring);
        }
        for i in 6..9 {
            assert!(!g.atom(i).in_ring);
        }
        let carboxyl = 6;
        let doubles: Vec<_> = g
            .neighbors(carboxyl)
            .iter()
            .filter(|&&(_, b)| g.bond(b).order == BondOrder::Double)
            .map(|&(n, _)| g.atom(n).element)
            .collect();
        assert_eq!(doubles, vec![Element::O]);
        assert_eq!(g.atom(8).explicit_h, 1);
    }

    #[test]
    fn bracket_atoms() {
        let g = parse_smiles("C[NH3+]").unwrap();
        assert_eq!(g.atom(1).formal_charge, 1);
        assert_eq!(g.atom(1).explicit_h, 3);
        let g = parse_smiles("c1cc[nH]c1").unwrap();
        assert_eq!(g.atom(3).explicit_h, 1);
        let g = parse_smiles("C[N+](=O)[O-]").unwrap();
        assert_eq!(g.atom(3).formal_charge, -1);
        let g = parse_smiles("[13CH4]").unwrap();
        assert_eq!(g.atom(0).explicit_h, 4);
    }

    #[test]
    fn aromatic_hydrogens() {
        assert_eq!(parse_smiles("c1ccncc1").unwrap().atom(3).explicit_h, 0);
        assert_eq!(parse_smiles("c1ccsc1").unwrap().atom(3).explicit_h, 0);
        let naphthalene = parse_smiles("c1ccc2ccccc2c1").unwrap();
        assert_eq!(naphthalene.atom(3).explicit_h, 0);
    }

    #[test]
    fn stereo_is_dropped_with_warning() {
        let (g, w) = parse_smiles_with_warnings("F/C=C/F").unwrap();
        assert_eq!(g.num_atoms(), 4);
        assert_eq!(w.len(), 2);
        let (_, w) = parse_smiles_with_warnings("N[C@@H](C)C(=O)O").unwrap();
        assert!(matches!(
            w[0],
            ParseWarning::StereoIgnored { mark: '@', .. }
        ));
    }

    #[test]
    fn percent_ring_closures() {
        let g = parse_smiles("C%12CCCCC%12").unwrap();
        assert_eq!(g.num_bonds(), 6);
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_smiles("C1CC").unwrap_err();
        assert_eq!(e.kind, SmilesErrorKind::UnclosedRing(1));
        assert_eq!(e.position, 1);
        let e = parse_smiles("CC(C").unwrap_err();
        assert_eq!((e.position, e.kind), (2, SmilesErrorKind::UnclosedBranch));
        let e = parse_smiles("CC)C").unwrap_err();
        assert_eq!(
            (e.position, e.kind),
            (2, SmilesErrorKind::UnmatchedCloseBranch)
        );
        let e = parse_smiles("CCX").unwrap_err();
        assert_eq!(e.position, 2);
        assert!(matches!(e.kind, SmilesErrorKind::UnknownElement(_)));
        let e = parse_smiles("CC(C)(C)(C)C").unwrap_err();
        assert_eq!(e.position, 1);
        assert!(matches!(e.kind, SmilesErrorKind::Valence { .. }));
        let e = parse_smiles("CC.O").unwrap_err();
        assert_eq!((e.position, e.kind), (2, SmilesErrorKind::MultiFragment));
        assert_eq!(kind("[CH4"), SmilesErrorKind::UnclosedBracket);
        assert_eq!(kind(""), SmilesErrorKind::Empty);
        assert_eq!(kind("C11"), SmilesErrorKind::RingSelfLoop(1));
        assert_eq!(kind("cc"), SmilesErrorKind::AromaticOutsideRing);
        assert_eq!(kind("C=1CCCC#1"), SmilesErrorKind::RingBondMismatch(1));
        assert!(matches!(kind("[Xe]"), SmilesErrorKind::UnknownElement(_)));
        assert_eq!(kind("C="), SmilesErrorKind::DanglingBond);
    }

    #[test]
    fn charged_valence_checks() {
        assert!(parse_smiles("C[N+](C)(C)C").is_ok());
        assert!(matches!(kind("CN(C)(C)C"), SmilesErrorKind::Valence { .. }));
        assert!(parse_smiles("CS(=O)(=O)C").is_ok());
    }
}
