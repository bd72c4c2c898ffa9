//! Attribute-preserving graph isomorphism by backtracking, pruned with
//! iteratively refined atom invariants.

use thiserror::Error;

use super::MolecularGraph;
use crate::chemfeat::hash::{hash_seq, mix};

pub const MAX_ISO_ATOMS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("isomorphism check limited to {MAX_ISO_ATOMS} atoms, got {0}")]
pub struct IsoError(pub usize);

fn atom_label(g: &MolecularGraph, i: usize) -> u64 {
    let a = g.atom(i);
    hash_seq(&[
        a.element.index() as u64,
        (a.formal_charge as i64) as u64,
        a.aromatic as u64,
        a.explicit_h as u64,
    ])
}

/// Labels refined until the partition stops splitting. Equal labels across
/// two graphs are a necessary condition for atoms to correspond.
pub(crate) fn refined_labels(g: &MolecularGraph) -> Vec<u64> {
    let n = g.num_atoms();
    let mut labels: Vec<u64> = (0..n).map(|i| atom_label(g, i)).collect();
    let count = |l: &[u64]| {
        let mut v = l.to_vec();
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    let mut classes = count(&labels);
    for _ in 0..n {
        let next: Vec<u64> = (0..n)
            .map(|v| {
                let mut nb: Vec<u64> = g
                    .neighbors(v)
                    .iter()
                    .map(|&(u, b)| mix(g.bond(b).order.code(), labels[u]))
                    .collect();
                nb.sort_unstable();
                nb.insert(0, labels[v]);
                hash_seq(&nb)
            })
            .collect();
        let next_classes = count(&next);
        labels = next;
        if next_classes == classes {
            break;
        }
        classes = next_classes;
    }
    labels
}

pub fn graphs_isomorphic(a: &MolecularGraph, b: &MolecularGraph) -> Result<bool, IsoError> {
    for g in [a, b] {
        if g.num_atoms() > MAX_ISO_ATOMS {
            return Err(IsoError(g.num_atoms()));
        }
    }
    if a.num_atoms() != b.num_atoms() || a.num_bonds() != b.num_bonds() {
        return Ok(false);
    }
    let n = a.num_atoms();
    if n == 0 {
        return Ok(true);
    }
    let la = refined_labels(a);
    let lb = refined_labels(b);
    let (mut sa, mut sb) = (la.clone(), lb.clone());
    sa.sort_unstable();
    sb.sort_unstable();
    if sa != sb {
        return Ok(false);
    }

    // visit order: BFS from the atom with the rarest label
    let rarity = |l: u64| sa.iter().filter(|&&x| x == l).count();
    let start = (0..n).min_by_key(|&i| (rarity(la[i]), i)).unwrap();
    let mut order = vec![start];
    let mut seen = vec![false; n];
    seen[start] = true;
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        for &(u, _) in a.neighbors(v) {
            if !seen[u] {
                seen[u] = true;
                order.push(u);
            }
        }
    }

    let mut map_ab = vec![usize::MAX; n];
    let mut map_ba = vec![usize::MAX; n];
    Ok(extend(a, b, &la, &lb, &order, 0, &mut map_ab, &mut map_ba))
}

#[allow(clippy::too_many_arguments)]
fn extend(
    a: &MolecularGraph,
    b: &MolecularGraph,
    la: &[u64],
    lb: &[u64],
    order: &[usize],
    depth: usize,
    map_ab: &mut [usize],
    map_ba: &mut [usize],
) -> bool {
    if depth == order.len() {
        return true;
    }
    let va = order[depth];
    for vb in 0..b.num_atoms() {
        if map_ba[vb] != usize::MAX || lb[vb] != la[va] || b.degree(vb) != a.degree(va) {
            continue;
        }
        let consistent = a.neighbors(va).iter().all(|&(ua, bond_a)| {
            let ub = map_ab[ua];
            ub == usize::MAX
                || b.bond_between(vb, ub)
                    .is_some_and(|bond_b| b.bond(bond_b).order == a.bond(bond_a).order)
        }) && b.neighbors(vb).iter().all(|&(ub, _)| {
            let ua = map_ba[ub];
            ua == usize::MAX || a.bond_between(va, ua).is_some()
        });
        if !consistent {
            continue;
        }
        map_ab[va] = vb;
        map_ba[vb] = va;
        if extend(a, b, la, lb, order, depth + 1, map_ab, map_ba) {
            return true;
        }
        map_ab[va] = usize::MAX;
        map_ba[vb] = usize::MAX;
    }
    false
}
