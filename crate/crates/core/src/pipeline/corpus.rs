//! Bundled molecule sets.
//!
//! The toy corpus has 25 molecules on each of 12 scaffolds, drawn by a
//! seeded enumeration of substituents. Its synthetic label is
//!
//! ```text
//! y = 4 + 0.25·s + Σ_{b ∈ ECFP4(512) on-bits} w_b
//! w_b = 0.4·(u_b − 0.5),  u_b = mix(b, 0x5EED) / 2^64
//! ```
//!
//! with `s` the scaffold index and `mix` the fingerprint hash, so
//! structure determines the label by construction.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::chemfeat::{ecfp4, hash::mix};
use crate::molgraph::{parse_smiles, MolecularGraph};

/// Scaffold templates; each `{}` takes an optional substituent branch.
pub const TOY_SCAFFOLDS: [(&str, &str); 12] = [
    ("benzene", "c1cc{}cc{}c1{}"),
    ("pyridine", "c1cc{}cnc1{}"),
    ("cyclohexane", "C1CC{}CCC1{}"),
    ("piperidine", "C1CN{}CCC1{}"),
    ("naphthalene", "c1ccc2cc{}ccc2c1{}"),
    ("thiophene", "c1cc{}sc1{}"),
    ("furan", "c1cc{}oc1{}"),
    ("pyrimidine", "c1nc{}cc{}n1"),
    ("cyclopentane", "C1CC{}CC1{}"),
    ("morpholine", "C1COCC{}N1{}"),
    ("indole", "c1ccc2[nH]cc{}c2c1{}"),
    ("biphenyl", "c1ccc(cc1{})-c1ccc{}cc1"),
];

const SUBSTITUENTS: [&str; 16] = [
    "", "C", "CC", "O", "OC", "N", "F", "Cl", "Br", "C(=O)O", "C(F)(F)F", "C#N", "C(N)=O",
    "NC(C)=O", "CCO", "C(C)C",
];

pub const TOY_PER_SCAFFOLD: usize = 25;
const TOY_SEED: u64 = 2024;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyMolecule {
    pub smiles: String,
    pub scaffold: usize,
    pub label: f64,
}

fn bit_weight(bit: usize) -> f64 {
    let u = mix(bit as u64, 0x5EED) as f64 / 2f64.powi(64);
    0.4 * (u - 0.5)
}

/// The label formula above.
pub fn toy_label(g: &MolecularGraph, scaffold: usize) -> f64 {
    4.0 + 0.25 * scaffold as f64 + ecfp4(g).on_bits().into_iter().map(bit_weight).sum::<f64>()
}

fn fill(template: &str, subs: &[&str]) -> String {
    let mut out = String::new();
    let mut parts = template.split("{}");
    out.push_str(parts.next().unwrap_or(""));
    for (part, sub) in parts.zip(subs) {
        if !sub.is_empty() {
            out.push('(');
            out.push_str(sub);
            out.push(')');
        }
        out.push_str(part);
    }
    out
}

/// Regenerates the bundled toy corpus.
pub fn generate_toy_corpus() -> Vec<ToyMolecule> {
    let mut rng = ChaCha8Rng::seed_from_u64(TOY_SEED);
    let mut out = Vec::new();
    for (s, (_, template)) in TOY_SCAFFOLDS.iter().enumerate() {
        let slots = template.matches("{}").count();
        let mut seen = BTreeSet::new();
        let mut combos: Vec<Vec<usize>> = Vec::new();
        while combos.len() < TOY_PER_SCAFFOLD {
            let c: Vec<usize> = (0..slots)
                .map(|_| rng.random_range(0..SUBSTITUENTS.len()))
                .collect();
            if seen.insert(c.clone()) {
                combos.push(c);
            }
        }
        combos.shuffle(&mut rng);
        for c in combos {
            let subs: Vec<&str> = c.iter().map(|&i| SUBSTITUENTS[i]).collect();
            let smiles = fill(template, &subs);
            let g = parse_smiles(&smiles).expect("toy templates produce valid SMILES");
            out.push(ToyMolecule {
                label: toy_label(&g, s),
                smiles,
                scaffold: s,
            });
        }
    }
    out
}

/// `smiles,scaffold,label` with labels printed to 6 decimals.
pub fn toy_corpus_csv(mols: &[ToyMolecule]) -> String {
    let mut s = String::from("smiles,scaffold,label\n");
    for m in mols {
        s.push_str(&format!(
            "{},{},{:.6}\n",
            m.smiles, TOY_SCAFFOLDS[m.scaffold].0, m.label
        ));
    }
    s
}

pub const TOY_CORPUS_CSV: &str = include_str!("../../data/toy_corpus.csv");
pub const DRUG_CORPUS: &str = include_str!("../../data/drugs.smi");

/// The bundled toy corpus as a labelled dataset.
pub fn toy_dataset() -> Dataset {
    let rows: Vec<(&str, f64)> = TOY_CORPUS_CSV
        .lines()
        .skip(1)
        .map(|l| {
            let mut f = l.split(',');
            let smiles = f.next().expect("smiles field");
            let label = f.nth(1).and_then(|v| v.parse().ok()).expect("label field");
            (smiles, label)
        })
        .collect();
    let smiles: Vec<&str> = rows.iter().map(|r| r.0).collect();
    Dataset::from_smiles("toy", &smiles, Some(rows.iter().map(|r| r.1).collect()))
        .expect("bundled corpus is valid")
}

/// `(name, smiles)` pairs of the bundled drug set.
pub fn drug_corpus() -> Vec<(&'static str, &'static str)> {
    DRUG_CORPUS
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('\t'))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::write_smiles;

    #[test]
    fn bundled_file_matches_generator() {
        assert_eq!(toy_corpus_csv(&generate_toy_corpus()), TOY_CORPUS_CSV);
    }

    #[test]
    fn toy_dataset_loads() {
        let ds = toy_dataset();
        assert_eq!(ds.len(), 300);
        let gen = generate_toy_corpus();
        for (l, m) in ds.labels().unwrap().iter().zip(&gen) {
            assert!((l - m.label).abs() <= 5e-7);
        }
    }

    #[test]
    fn toy_corpus_shape() {
        let mols = generate_toy_corpus();
        assert_eq!(mols.len(), 300);
        let unique: BTreeSet<&str> = mols.iter().map(|m| m.smiles.as_str()).collect();
        assert!(unique.len() >= 290);
        assert!(mols.iter().all(|m| m.label.is_finite()));
    }

    #[test]
    fn drug_corpus_parses() {
        let drugs = drug_corpus();
        assert!(drugs.len() >= 50);
        for (name, s) in drugs {
            let g = parse_smiles(s).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(parse_smiles(&write_smiles(&g)).is_ok(), "{name}");
        }
    }

    #[test]
    fn fill_template() {
        assert_eq!(fill("c1cc{}cc{}c1{}", &["C", "", "O"]), "c1cc(C)ccc1(O)");
    }
}
