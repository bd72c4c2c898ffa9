//! Circular (Morgan/ECFP-style) fingerprints and Tanimoto similarity.

use thiserror::Error;

use super::hash::{hash_seq, mix};
use crate::molgraph::MolecularGraph;

pub const DEFAULT_NBITS: usize = 512;
pub const DEFAULT_RADIUS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FingerprintError {
    #[error("fingerprint lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("nbits must be a power of two >= 64, got {0}")]
    InvalidSize(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    words: Vec<u64>,
    nbits: usize,
    radius: usize,
}

impl Fingerprint {
    pub fn zeros(nbits: usize, radius: usize) -> Self {
        Fingerprint {
            words: vec![0; nbits.div_ceil(64)],
            nbits,
            radius,
        }
    }

    pub fn from_bits(nbits: usize, on: &[usize]) -> Self {
        let mut fp = Fingerprint::zeros(nbits, 0);
        for &b in on {
            fp.set(b);
        }
        fp
    }

    pub fn nbits(&self) -> usize {
        self.nbits
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn set(&mut self, bit: usize) {
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn popcount(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn on_bits(&self) -> Vec<usize> {
        (0..self.nbits).filter(|&b| self.get(b)).collect()
    }

    /// Dense 0/1 vector, e.g. as input to k-means.
    pub fn to_f64(&self) -> Vec<f64> {
        (0..self.nbits)
            .map(|b| if self.get(b) { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Per-round atom invariants: `result[r][atom]` for r in 0..=radius.
pub fn morgan_invariants(g: &MolecularGraph, radius: usize) -> Vec<Vec<u64>> {
    let initial: Vec<u64> = (0..g.num_atoms())
        .map(|i| {
            let a = g.atom(i);
            hash_seq(&[
                a.element.index() as u64,
                g.degree(i) as u64,
                (a.formal_charge as i64) as u64,
                a.explicit_h as u64,
                a.in_ring as u64,
                a.aromatic as u64,
            ])
        })
        .collect();
    let mut rounds = vec![initial];
    for _ in 0..radius {
        let prev = rounds.last().unwrap();
        let next = (0..g.num_atoms())
            .map(|v| {
                let mut env: Vec<(u64, u64)> = g
                    .neighbors(v)
                    .iter()
                    .map(|&(u, b)| (g.bond(b).order.code(), prev[u]))
                    .collect();
                env.sort_unstable();
                env.iter()
                    .fold(mix(prev[v], env.len() as u64), |h, &(o, inv)| {
                        mix(mix(h, o), inv)
                    })
            })
            .collect();
        rounds.push(next);
    }
    rounds
}

pub fn morgan_fingerprint(
    g: &MolecularGraph,
    radius: usize,
    nbits: usize,
) -> Result<Fingerprint, FingerprintError> {
    if nbits < 64 || !nbits.is_power_of_two() {
        return Err(FingerprintError::InvalidSize(nbits));
    }
    let mut fp = Fingerprint::zeros(nbits, radius);
    for round in morgan_invariants(g, radius) {
        for inv in round {
            fp.set((inv % nbits as u64) as usize);
        }
    }
    Ok(fp)
}

/// ECFP4-style default: radius 2, 512 bits.
pub fn ecfp4(g: &MolecularGraph) -> Fingerprint {
    morgan_fingerprint(g, DEFAULT_RADIUS, DEFAULT_NBITS).expect("default size is valid")
}

/// |a ∧ b| / |a ∨ b|, with two all-zero fingerprints counted as identical.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, FingerprintError> {
    if a.nbits != b.nbits {
        return Err(FingerprintError::LengthMismatch(a.nbits, b.nbits));
    }
    let (mut inter, mut union) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}
