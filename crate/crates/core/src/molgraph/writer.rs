//! Deterministic SMILES writer.
//!
//! Atom order comes from iteratively refined neighbourhood ranks; remaining
//! ties are broken by input index, so the output is stable for a given
//! graph but not canonical across relabelings of symmetric atoms.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::smiles::implicit_hydrogens;
use super::{BondOrder, MolecularGraph};

/// Ranks 0..n, lower ranks visited first.
pub(crate) fn canonical_ranks(g: &MolecularGraph) -> Vec<usize> {
    let n = g.num_atoms();
    let initial: Vec<(usize, i8, usize, u8, bool, bool)> = g
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            (
                a.element.index(),
                a.formal_charge,
                g.degree(i),
                a.explicit_h,
                a.aromatic,
                a.in_ring,
            )
        })
        .collect();
    let mut ranks = dense_ranks(&initial);
    let distinct = |r: &[usize]| r.iter().max().map_or(0, |m| m + 1);
    loop {
        let keys: Vec<(usize, Vec<(u64, usize)>)> = (0..n)
            .map(|v| {
                let mut nb: Vec<(u64, usize)> = g
                    .neighbors(v)
                    .iter()
                    .map(|&(u, b)| (g.bond(b).order.code(), ranks[u]))
                    .collect();
                nb.sort_unstable();
                (ranks[v], nb)
            })
            .collect();
        let next = dense_ranks(&keys);
        let grew = distinct(&next) > distinct(&ranks);
        ranks = next;
        if !grew {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (ranks[i], initial[i].0, initial[i].1, initial[i].2, i));
    let mut out = vec![0; n];
    for (r, &i) in order.iter().enumerate() {
        out[i] = r;
    }
    out
}

fn dense_ranks<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let mut sorted: Vec<K> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(k).unwrap())
        .collect()
}

struct Plan {
    // tree children of each atom in visit order
    children: Vec<Vec<(usize, usize)>>,
    // ring closures: (bond, partner) opened at an atom
    opens: Vec<Vec<(usize, usize)>>,
    // ring closures closed at an atom
    closes: Vec<Vec<(usize, usize)>>,
}

fn plan(g: &MolecularGraph, ranks: &[usize], root: usize) -> Plan {
    let n = g.num_atoms();
    let mut plan = Plan {
        children: vec![Vec::new(); n],
        opens: vec![Vec::new(); n],
        closes: vec![Vec::new(); n],
    };
    let mut visited = vec![false; n];
    let mut used_bond = vec![false; g.num_bonds()];
    // iterative DFS; each frame holds the atom and its sorted neighbour cursor
    let sorted_nbrs = |v: usize| {
        let mut nb = g.neighbors(v).to_vec();
        nb.sort_by_key(|&(u, _)| ranks[u]);
        nb
    };
    visited[root] = true;
    let mut stack = vec![(root, sorted_nbrs(root), 0usize)];
    while let Some((v, nbrs, cursor)) = stack.last_mut() {
        if *cursor == nbrs.len() {
            stack.pop();
            continue;
        }
        let (u, b) = nbrs[*cursor];
        *cursor += 1;
        let v = *v;
        if used_bond[b] {
            continue;
        }
        used_bond[b] = true;
        if visited[u] {
            // u was written earlier: it opens the ring, v closes it
            plan.opens[u].push((b, v));
            plan.closes[v].push((b, u));
        } else {
            visited[u] = true;
            plan.children[v].push((u, b));
            stack.push((u, sorted_nbrs(u), 0));
        }
    }
    plan
}

fn bond_symbol(g: &MolecularGraph, b: usize) -> &'static str {
    let bond = g.bond(b);
    let (x, y) = bond.endpoints;
    let both_aromatic = g.atom(x).aromatic && g.atom(y).aromatic;
    match bond.order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

fn write_atom(g: &MolecularGraph, i: usize, out: &mut String) {
    let atom = g.atom(i);
    let symbol = if atom.aromatic {
        atom.element.symbol().to_ascii_lowercase()
    } else {
        atom.element.symbol().to_string()
    };
    let implied = implicit_hydrogens(atom.element, atom.aromatic, g.bond_valence(i));
    if atom.formal_charge == 0 && implied == Some(atom.explicit_h) {
        out.push_str(&symbol);
        return;
    }
    out.push('[');
    out.push_str(&symbol);
    match atom.explicit_h {
        0 => {}
        1 => out.push('H'),
        h => write!(out, "H{h}").unwrap(),
    }
    match atom.formal_charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => write!(out, "+{c}").unwrap(),
        c => write!(out, "-{}", -c).unwrap(),
    }
    out.push(']');
}

fn ring_label(d: usize) -> String {
    if d < 10 {
        d.to_string()
    } else {
        format!("%{d:02}")
    }
}

pub fn write_smiles(g: &MolecularGraph) -> String {
    if g.is_empty() {
        return String::new();
    }
    let ranks = canonical_ranks(g);
    let root = (0..g.num_atoms()).min_by_key(|&i| ranks[i]).unwrap();
    let mut emitter = Emitter {
        g,
        plan: plan(g, &ranks, root),
        out: String::new(),
        digits: BTreeMap::new(),
        free: (0..100).map(|d| d != 0).collect(),
    };
    emitter.emit(root, None);
    emitter.out
}

struct Emitter<'a> {
    g: &'a MolecularGraph,
    plan: Plan,
    out: String,
    // bond -> ring digit currently open for it
    digits: BTreeMap<usize, usize>,
    free: Vec<bool>,
}

impl Emitter<'_> {
    fn emit(&mut self, v: usize, via: Option<usize>) {
        if let Some(b) = via {
            self.out.push_str(bond_symbol(self.g, b));
        }
        write_atom(self.g, v, &mut self.out);
        for k in 0..self.plan.closes[v].len() {
            let (b, _) = self.plan.closes[v][k];
            let d = self.digits.remove(&b).unwrap();
            self.free[d] = true;
            self.out.push_str(&ring_label(d));
        }
        for k in 0..self.plan.opens[v].len() {
            let (b, _) = self.plan.opens[v][k];
            let d = self
                .free
                .iter()
                .position(|&f| f)
                .expect("fewer than 100 open rings");
            self.free[d] = false;
            self.digits.insert(b, d);
            self.out.push_str(bond_symbol(self.g, b));
            self.out.push_str(&ring_label(d));
        }
        let kids = self.plan.children[v].clone();
        for (k, &(u, b)) in kids.iter().enumerate() {
            if k + 1 < kids.len() {
                self.out.push('(');
                self.emit(u, Some(b));
                self.out.push(')');
            } else {
                self.emit(u, Some(b));
            }
        }
    }
}
