//! Scalar descriptors used as alignment targets.

use super::scaffold::bemis_murcko_scaffold;
use super::tables::chem_tables;
use crate::molgraph::MolecularGraph;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarDescriptors {
    /// Daltons, implicit hydrogens included.
    pub molecular_weight: f64,
    /// Molecular weight of the Bemis-Murcko scaffold, 0 when it is empty.
    pub scaffold_weight: f64,
    pub heavy_atom_count: usize,
}

pub fn molecular_weight(g: &MolecularGraph) -> f64 {
    let h = chem_tables().mass("H");
    g.atoms()
        .iter()
        .map(|a| a.element.atomic_mass() + a.explicit_h as f64 * h)
        .sum()
}

pub fn scalar_descriptors(g: &MolecularGraph) -> ScalarDescriptors {
    ScalarDescriptors {
        molecular_weight: molecular_weight(g),
        scaffold_weight: molecular_weight(&bemis_murcko_scaffold(g)),
        heavy_atom_count: g.num_atoms(),
    }
}
