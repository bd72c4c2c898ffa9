//! Bemis-Murcko scaffolds.
//!
//! The scaffold is the ring systems plus linker atoms, together with atoms
//! attached to them by a double or triple bond (exocyclic carbonyls and the
//! like). Everything else is a side chain.

use crate::molgraph::{BondOrder, MolecularGraph};

/// `true` for every atom that belongs to the scaffold.
pub fn scaffold_mask(g: &MolecularGraph) -> Vec<bool> {
    let n = g.num_atoms();
    let mut core: Vec<bool> = vec![true; n];
    if !g.atoms().iter().any(|a| a.in_ring) {
        return vec![false; n];
    }
    // prune terminal non-ring atoms until only rings and linkers remain
    let mut degree: Vec<usize> = (0..n).map(|i| g.degree(i)).collect();
    let mut stack: Vec<usize> = (0..n)
        .filter(|&i| degree[i] <= 1 && !g.atom(i).in_ring)
        .collect();
    while let Some(v) = stack.pop() {
        if !core[v] {
            continue;
        }
        core[v] = false;
        for &(u, _) in g.neighbors(v) {
            if core[u] {
                degree[u] -= 1;
                if degree[u] <= 1 && !g.atom(u).in_ring {
                    stack.push(u);
                }
            }
        }
    }
    let mut mask = core.clone();
    for v in 0..n {
        if core[v] {
            continue;
        }
        let exo = g.neighbors(v).iter().any(|&(u, b)| {
            core[u] && matches!(g.bond(b).order, BondOrder::Double | BondOrder::Triple)
        });
        if exo {
            mask[v] = true;
        }
    }
    mask
}

/// The Bemis-Murcko scaffold; empty for acyclic molecules.
pub fn bemis_murcko_scaffold(g: &MolecularGraph) -> MolecularGraph {
    let mask = scaffold_mask(g);
    if !mask.iter().any(|&k| k) {
        return MolecularGraph::empty();
    }
    g.induced_subgraph(&mask)
        .expect("scaffold of a valid graph is valid")
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::{graphs_isomorphic, parse_smiles, write_smiles};

    fn scaffold(s: &str) -> MolecularGraph {
        bemis_murcko_scaffold(&parse_smiles(s).unwrap())
    }

    #[test]
    fn acyclic_is_empty() {
        assert!(scaffold("CCCC").is_empty());
    }

    #[test]
    fn side_chain_pruned() {
        let s = scaffold("c1ccccc1CC(=O)O");
        assert!(graphs_isomorphic(&s, &parse_smiles("c1ccccc1").unwrap()).unwrap());
    }

    #[test]
    fn toluene_and_ethylbenzene_share_scaffold() {
        let a = scaffold("Cc1ccccc1");
        let b = scaffold("CCc1ccccc1");
        assert!(graphs_isomorphic(&a, &b).unwrap());
    }

    #[test]
    fn linkers_and_exocyclic_double_bonds_kept() {
        let s = scaffold("c1ccccc1CCC1CCC(=O)CC1");
        assert_eq!(s.num_atoms(), 6 + 2 + 6 + 1);
        let s = scaffold("CC(=O)c1ccccc1");
        assert_eq!(write_smiles(&s), "c1ccccc1");
    }

    #[test]
    fn idempotent() {
        for smi in [
            "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
            "O=C1CCCN1Cc1ccccc1",
            "c1ccc2[nH]ccc2c1",
        ] {
            let s1 = scaffold(smi);
            let s2 = bemis_murcko_scaffold(&s1);
            assert!(graphs_isomorphic(&s1, &s2).unwrap(), "{smi}");
        }
    }
}
