//! Functional-group counts over the fixed 16-entry detector table.
//!
//! Detectors run in table order. Once a heteroatom has been claimed by a
//! pattern, later patterns skip it, so an ester oxygen is never also an
//! ether and an amide carbonyl is never also a ketone.

use crate::molgraph::{perceive_rings, BondOrder, Element, MolecularGraph};

pub const NUM_GROUPS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionalGroup {
    Hydroxyl,
    PrimaryAmine,
    SecondaryTertiaryAmine,
    CarboxylicAcid,
    Ester,
    Amide,
    Carbonyl,
    Ether,
    Thioether,
    Nitrile,
    Nitro,
    Halogen,
    AromaticRing,
    AliphaticRing,
    Sulfonyl,
    TerminalAlkyne,
}

impl FunctionalGroup {
    pub const ALL: [FunctionalGroup; NUM_GROUPS] = [
        FunctionalGroup::Hydroxyl,
        FunctionalGroup::PrimaryAmine,
        FunctionalGroup::SecondaryTertiaryAmine,
        FunctionalGroup::CarboxylicAcid,
        FunctionalGroup::Ester,
        FunctionalGroup::Amide,
        FunctionalGroup::Carbonyl,
        FunctionalGroup::Ether,
        FunctionalGroup::Thioether,
        FunctionalGroup::Nitrile,
        FunctionalGroup::Nitro,
        FunctionalGroup::Halogen,
        FunctionalGroup::AromaticRing,
        FunctionalGroup::AliphaticRing,
        FunctionalGroup::Sulfonyl,
        FunctionalGroup::TerminalAlkyne,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Name as listed in the bundled detector table.
    pub fn name(self) -> &'static str {
        &super::tables::chem_tables().functional_groups[self.index()].name
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalGroupVector {
    pub counts: [u32; NUM_GROUPS],
    pub normalized: [f64; NUM_GROUPS],
}

impl FunctionalGroupVector {
    pub fn count(&self, group: FunctionalGroup) -> u32 {
        self.counts[group.index()]
    }

    /// Presence pattern, used for Tanimoto over functional groups.
    pub fn binarized(&self) -> Vec<usize> {
        (0..NUM_GROUPS).filter(|&i| self.counts[i] > 0).collect()
    }
}

struct Ctx<'a> {
    g: &'a MolecularGraph,
    claimed: Vec<bool>,
}

impl Ctx<'_> {
    fn element(&self, i: usize) -> Element {
        self.g.atom(i).element
    }

    fn order(&self, b: usize) -> BondOrder {
        self.g.bond(b).order
    }

    /// Heteroatom partners (O/N/S) double-bonded to atom `i`.
    fn double_hetero(&self, i: usize) -> Vec<usize> {
        self.g
            .neighbors(i)
            .iter()
            .filter(|&&(u, b)| {
                self.order(b) == BondOrder::Double
                    && matches!(self.element(u), Element::O | Element::N | Element::S)
            })
            .map(|&(u, _)| u)
            .collect()
    }

    fn carbonyl_oxygen(&self, c: usize) -> Option<usize> {
        if self.element(c) != Element::C || self.g.atom(c).aromatic {
            return None;
        }
        self.g
            .neighbors(c)
            .iter()
            .find(|&&(u, b)| self.order(b) == BondOrder::Double && self.element(u) == Element::O)
            .map(|&(u, _)| u)
    }

    fn is_carbonyl_carbon(&self, c: usize) -> bool {
        self.carbonyl_oxygen(c).is_some()
    }

    fn single_carbon_neighbors(&self, i: usize) -> Option<Vec<usize>> {
        self.g
            .neighbors(i)
            .iter()
            .map(|&(u, b)| {
                (self.order(b) == BondOrder::Single && self.element(u) == Element::C).then_some(u)
            })
            .collect()
    }
}

pub fn functional_group_descriptors(g: &MolecularGraph) -> FunctionalGroupVector {
    let mut ctx = Ctx {
        g,
        claimed: vec![false; g.num_atoms()],
    };
    let mut counts = [0u32; NUM_GROUPS];
    let n = g.num_atoms();

    for i in 0..n {
        let atom = g.atom(i);
        match atom.element {
            Element::O
                if !ctx.claimed[i]
                    && !atom.aromatic
                    && atom.explicit_h == 1
                    && g.degree(i) == 1
                    && ctx.double_hetero(g.neighbors(i)[0].0).is_empty() =>
            {
                counts[FunctionalGroup::Hydroxyl.index()] += 1;
                ctx.claimed[i] = true;
            }
            Element::N
                if !ctx.claimed[i]
                    && !atom.aromatic
                    && atom.formal_charge == 0
                    && ctx.double_hetero(i).is_empty() =>
            {
                let Some(carbons) = ctx.single_carbon_neighbors(i) else {
                    continue;
                };
                if carbons.iter().any(|&c| ctx.is_carbonyl_carbon(c)) {
                    continue;
                }
                if atom.explicit_h == 2 && carbons.len() == 1 {
                    counts[FunctionalGroup::PrimaryAmine.index()] += 1;
                    ctx.claimed[i] = true;
                } else if (2..=3).contains(&carbons.len()) {
                    counts[FunctionalGroup::SecondaryTertiaryAmine.index()] += 1;
                    ctx.claimed[i] = true;
                }
            }
            _ => {}
        }
    }
    // hydroxyl and amine patterns never match heteroatoms on a carbonyl
    // carbon, so the acyl patterns below still see them unclaimed
    let mut acid = 0;
    let mut ester = 0;
    let mut amide = 0;
    for c in 0..n {
        let Some(o_dbl) = ctx.carbonyl_oxygen(c) else {
            continue;
        };
        for &(u, b) in g.neighbors(c) {
            if ctx.order(b) != BondOrder::Single || ctx.claimed[u] || ctx.claimed[o_dbl] {
                continue;
            }
            let atom = g.atom(u);
            match atom.element {
                Element::O if !atom.aromatic && atom.explicit_h == 1 && g.degree(u) == 1 => {
                    acid += 1;
                    ctx.claimed[u] = true;
                    ctx.claimed[o_dbl] = true;
                }
                Element::O
                    if !atom.aromatic
                        && g.degree(u) == 2
                        && g.neighbors(u).iter().all(|&(x, bx)| {
                            ctx.order(bx) == BondOrder::Single && ctx.element(x) == Element::C
                        }) =>
                {
                    ester += 1;
                    ctx.claimed[u] = true;
                    ctx.claimed[o_dbl] = true;
                }
                Element::N if !atom.aromatic && atom.formal_charge == 0 => {
                    amide += 1;
                    ctx.claimed[u] = true;
                    ctx.claimed[o_dbl] = true;
                }
                _ => {}
            }
        }
    }

    counts[FunctionalGroup::CarboxylicAcid.index()] = acid;
    counts[FunctionalGroup::Ester.index()] = ester;
    counts[FunctionalGroup::Amide.index()] = amide;

    for i in 0..n {
        let atom = g.atom(i);
        match atom.element {
            Element::C => {
                if let Some(o) = ctx.carbonyl_oxygen(i) {
                    if !ctx.claimed[o] && g.degree(o) == 1 {
                        counts[FunctionalGroup::Carbonyl.index()] += 1;
                        ctx.claimed[o] = true;
                    }
                }
                for &(u, b) in g.neighbors(i) {
                    if ctx.order(b) != BondOrder::Triple {
                        continue;
                    }
                    if ctx.element(u) == Element::N && g.degree(u) == 1 {
                        counts[FunctionalGroup::Nitrile.index()] += 1;
                        ctx.claimed[u] = true;
                    }
                    if ctx.element(u) == Element::C
                        && u > i
                        && (g.degree(u) == 1 || g.degree(i) == 1)
                    {
                        counts[FunctionalGroup::TerminalAlkyne.index()] += 1;
                    }
                }
            }
            Element::O
                if !ctx.claimed[i]
                    && !atom.aromatic
                    && atom.explicit_h == 0
                    && g.degree(i) == 2 =>
            {
                if ctx.single_carbon_neighbors(i).is_some() {
                    counts[FunctionalGroup::Ether.index()] += 1;
                    ctx.claimed[i] = true;
                }
            }
            Element::S if !atom.aromatic && g.degree(i) == 2 => {
                if ctx.single_carbon_neighbors(i).is_some() {
                    counts[FunctionalGroup::Thioether.index()] += 1;
                }
            }
            Element::S => {
                let oxo = g
                    .neighbors(i)
                    .iter()
                    .filter(|&&(u, b)| {
                        ctx.order(b) == BondOrder::Double && ctx.element(u) == Element::O
                    })
                    .count();
                if oxo >= 2 {
                    counts[FunctionalGroup::Sulfonyl.index()] += 1;
                }
            }
            Element::N => {
                let oxygens: Vec<_> = g
                    .neighbors(i)
                    .iter()
                    .filter(|&&(u, _)| ctx.element(u) == Element::O)
                    .collect();
                if oxygens.len() == 2
                    && oxygens
                        .iter()
                        .any(|&&(_, b)| ctx.order(b) == BondOrder::Double)
                {
                    counts[FunctionalGroup::Nitro.index()] += 1;
                }
            }
            Element::F | Element::Cl | Element::Br | Element::I => {
                counts[FunctionalGroup::Halogen.index()] += 1;
            }
            _ => {}
        }
    }

    let rings = perceive_rings(g);
    for ring in rings.cycle_atoms(g) {
        if ring.iter().all(|&a| g.atom(a).aromatic) {
            counts[FunctionalGroup::AromaticRing.index()] += 1;
        } else {
            counts[FunctionalGroup::AliphaticRing.index()] += 1;
        }
    }

    let denom = n.max(1) as f64;
    let mut normalized = [0.0; NUM_GROUPS];
    for (slot, &c) in normalized.iter_mut().zip(&counts) {
        *slot = c as f64 / denom;
    }
    FunctionalGroupVector { counts, normalized }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    fn fg(s: &str) -> FunctionalGroupVector {
        functional_group_descriptors(&parse_smiles(s).unwrap())
    }

    fn only(v: &FunctionalGroupVector, expected: &[(FunctionalGroup, u32)]) {
        for g in FunctionalGroup::ALL {
            let want = expected
                .iter()
                .find(|(e, _)| *e == g)
                .map_or(0, |&(_, c)| c);
            assert_eq!(v.count(g), want, "{g:?}");
        }
    }

    #[test]
    fn ethanol() {
        only(&fg("CCO"), &[(FunctionalGroup::Hydroxyl, 1)]);
    }

    #[test]
    fn benzene() {
        only(&fg("c1ccccc1"), &[(FunctionalGroup::AromaticRing, 1)]);
    }

    #[test]
    fn methyl_acetate_ester_subsumes() {
        only(&fg("CC(=O)OC"), &[(FunctionalGroup::Ester, 1)]);
    }

    #[test]
    fn acid_amide_amine() {
        only(&fg("CC(=O)O"), &[(FunctionalGroup::CarboxylicAcid, 1)]);
        only(&fg("CC(=O)NC"), &[(FunctionalGroup::Amide, 1)]);
        only(&fg("CCN"), &[(FunctionalGroup::PrimaryAmine, 1)]);
        only(
            &fg("CN(C)C"),
            &[(FunctionalGroup::SecondaryTertiaryAmine, 1)],
        );
        only(&fg("CC(C)=O"), &[(FunctionalGroup::Carbonyl, 1)]);
        only(&fg("COC"), &[(FunctionalGroup::Ether, 1)]);
        only(&fg("CSC"), &[(FunctionalGroup::Thioether, 1)]);
    }

    #[test]
    fn misc_groups() {
        only(&fg("CC#N"), &[(FunctionalGroup::Nitrile, 1)]);
        only(&fg("C[N+](=O)[O-]"), &[(FunctionalGroup::Nitro, 1)]);
        only(&fg("FC(Cl)Br"), &[(FunctionalGroup::Halogen, 3)]);
        only(&fg("CS(C)(=O)=O"), &[(FunctionalGroup::Sulfonyl, 1)]);
        only(&fg("CC#C"), &[(FunctionalGroup::TerminalAlkyne, 1)]);
        only(&fg("C1CCCCC1"), &[(FunctionalGroup::AliphaticRing, 1)]);
    }

    #[test]
    fn paracetamol() {
        only(
            &fg("CC(=O)Nc1ccc(O)cc1"),
            &[
                (FunctionalGroup::Amide, 1),
                (FunctionalGroup::Hydroxyl, 1),
                (FunctionalGroup::AromaticRing, 1),
            ],
        );
    }

    #[test]
    fn normalized_is_fraction_of_heavy_atoms() {
        let v = fg("CCO");
        assert!((v.normalized[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!(v.normalized.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }
}
