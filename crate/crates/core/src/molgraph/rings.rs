//! Ring perception from a minimum cycle basis (Horton candidates reduced by
//! Gaussian elimination over GF(2)).

use std::collections::{BTreeSet, VecDeque};

use super::MolecularGraph;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RingSet {
    pub ring_atoms: BTreeSet<usize>,
    pub ring_bonds: BTreeSet<usize>,
    /// Minimum cycle basis, each ring as a sorted list of bond indices.
    pub cycles: Vec<Vec<usize>>,
}

impl RingSet {
    /// Atom indices of each basis ring.
    pub fn cycle_atoms(&self, g: &MolecularGraph) -> Vec<BTreeSet<usize>> {
        self.cycles
            .iter()
            .map(|c| {
                c.iter()
                    .flat_map(|&b| {
                        let (x, y) = g.bond(b).endpoints;
                        [x, y]
                    })
                    .collect()
            })
            .collect()
    }
}

type BitSet = Vec<u64>;

fn bitset(n: usize) -> BitSet {
    vec![0; n.div_ceil(64)]
}

fn set_bit(s: &mut BitSet, i: usize) {
    s[i / 64] |= 1 << (i % 64);
}

fn bits(s: &BitSet) -> Vec<usize> {
    let mut out = Vec::new();
    for (w, &word) in s.iter().enumerate() {
        let mut word = word;
        while word != 0 {
            let t = word.trailing_zeros() as usize;
            out.push(w * 64 + t);
            word &= word - 1;
        }
    }
    out
}

pub fn perceive_rings(g: &MolecularGraph) -> RingSet {
    let n = g.num_atoms();
    let m = g.num_bonds();
    if n == 0 || m < n {
        return RingSet::default();
    }
    let cyclomatic = m + 1 - n;

    // shortest-path trees from every vertex
    let mut candidates: Vec<BitSet> = Vec::new();
    for root in 0..n {
        let mut parent_bond = vec![usize::MAX; n];
        let mut dist = vec![usize::MAX; n];
        dist[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            let mut nbrs: Vec<_> = g.neighbors(v).to_vec();
            nbrs.sort_unstable();
            for (u, bi) in nbrs {
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    parent_bond[u] = bi;
                    queue.push_back(u);
                }
            }
        }
        let path = |mut v: usize| {
            let mut atoms = vec![v];
            let mut bonds = Vec::new();
            while v != root {
                let b = parent_bond[v];
                bonds.push(b);
                v = g.bond(b).other(v);
                atoms.push(v);
            }
            (atoms, bonds)
        };
        for (bi, bond) in g.bonds().iter().enumerate() {
            let (x, y) = bond.endpoints;
            if parent_bond[x] == bi || parent_bond[y] == bi {
                continue;
            }
            let (ax, bx) = path(x);
            let (ay, by) = path(y);
            // the two paths must meet only at the root
            let shared = ax.iter().filter(|a| ay.contains(a)).count();
            if shared != 1 {
                continue;
            }
            let mut set = bitset(m);
            for &b in bx.iter().chain(by.iter()) {
                set_bit(&mut set, b);
            }
            set_bit(&mut set, bi);
            candidates.push(set);
        }
    }
    candidates.sort_by(|a, b| {
        let la: u32 = a.iter().map(|w| w.count_ones()).sum();
        let lb: u32 = b.iter().map(|w| w.count_ones()).sum();
        la.cmp(&lb).then_with(|| bits(a).cmp(&bits(b)))
    });
    candidates.dedup();

    // greedy independent selection
    let mut reduced: Vec<(usize, BitSet)> = Vec::new();
    let mut cycles = Vec::new();
    for cand in candidates {
        let mut v = cand.clone();
        for (pivot, row) in &reduced {
            if v[pivot / 64] >> (pivot % 64) & 1 == 1 {
                for (a, b) in v.iter_mut().zip(row) {
                    *a ^= b;
                }
            }
        }
        let lead = bits(&v).first().copied();
        if let Some(pivot) = lead {
            for (_, row) in reduced.iter_mut() {
                if row[pivot / 64] >> (pivot % 64) & 1 == 1 {
                    for (a, b) in row.iter_mut().zip(&v) {
                        *a ^= b;
                    }
                }
            }
            reduced.push((pivot, v));
            cycles.push(bits(&cand));
            if cycles.len() == cyclomatic {
                break;
            }
        }
    }

    let mut out = RingSet {
        cycles,
        ..Default::default()
    };
    for c in &out.cycles {
        for &b in c {
            out.ring_bonds.insert(b);
            let (x, y) = g.bond(b).endpoints;
            out.ring_atoms.insert(x);
            out.ring_atoms.insert(y);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    fn rings(s: &str) -> RingSet {
        perceive_rings(&parse_smiles(s).unwrap())
    }

    #[test]
    fn chain_has_no_rings() {
        let r = rings("CCCC");
        assert!(r.ring_atoms.is_empty() && r.ring_bonds.is_empty());
    }

    #[test]
    fn benzene_single_ring() {
        let r = rings("c1ccccc1");
        assert_eq!(r.ring_atoms.len(), 6);
        assert_eq!(r.ring_bonds.len(), 6);
        assert_eq!(r.cycles.len(), 1);
    }

    #[test]
    fn linked_cyclopropanes() {
        let g = parse_smiles("C1CC1CC2CC2").unwrap();
        let r = perceive_rings(&g);
        assert_eq!(r.ring_atoms, BTreeSet::from([0, 1, 2, 4, 5, 6]));
        assert_eq!(r.ring_bonds.len(), 6);
        // linker bonds C2-C3 and C3-C4
        for (bi, bond) in g.bonds().iter().enumerate() {
            let (x, y) = bond.endpoints;
            if x == 3 || y == 3 {
                assert!(!r.ring_bonds.contains(&bi));
            }
        }
    }

    #[test]
    fn fused_rings_use_smallest_basis() {
        let r = rings("c1ccc2ccccc2c1");
        assert_eq!(r.cycles.len(), 2);
        assert!(r.cycles.iter().all(|c| c.len() == 6));
        let r = rings("C12CC1C2");
        assert_eq!(r.cycles.len(), 2);
        assert!(r.cycles.iter().all(|c| c.len() == 3));
    }
}
