//! Conventional structural features: circular fingerprints, Tanimoto
//! similarity, Bemis-Murcko scaffolds, functional-group counts and scalar
//! descriptors.

mod descriptors;
mod fingerprint;
mod groups;
pub(crate) mod hash;
mod scaffold;
pub mod tables;

pub use descriptors::{molecular_weight, scalar_descriptors, ScalarDescriptors};
pub use fingerprint::{
    ecfp4, morgan_fingerprint, morgan_invariants, tanimoto, Fingerprint, FingerprintError,
    DEFAULT_NBITS, DEFAULT_RADIUS,
};
pub use groups::{
    functional_group_descriptors, FunctionalGroup, FunctionalGroupVector, NUM_GROUPS,
};
pub use scaffold::{bemis_murcko_scaffold, scaffold_mask};

use crate::molgraph::MolecularGraph;

/// Everything the training and probing code needs about one molecule.
#[derive(Debug, Clone)]
pub struct MoleculeFeatures {
    pub fingerprint: Fingerprint,
    pub scaffold_fingerprint: Fingerprint,
    pub scaffold_mask: Vec<bool>,
    pub groups: FunctionalGroupVector,
    pub descriptors: ScalarDescriptors,
}

impl MoleculeFeatures {
    pub fn compute(g: &MolecularGraph) -> Self {
        let scaffold = bemis_murcko_scaffold(g);
        MoleculeFeatures {
            fingerprint: ecfp4(g),
            scaffold_fingerprint: ecfp4(&scaffold),
            scaffold_mask: scaffold_mask(g),
            groups: functional_group_descriptors(g),
            descriptors: ScalarDescriptors {
                molecular_weight: molecular_weight(g),
                scaffold_weight: molecular_weight(&scaffold),
                heavy_atom_count: g.num_atoms(),
            },
        }
    }

    /// Fingerprint over functional-group presence bits.
    pub fn group_fingerprint(&self) -> Fingerprint {
        Fingerprint::from_bits(64, &self.groups.binarized())
    }
}
