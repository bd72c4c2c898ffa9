//! Cross-module invariants checked on generated inputs.

use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use molprompt::chemfeat::{
    bemis_murcko_scaffold, ecfp4, functional_group_descriptors, tanimoto, Fingerprint,
};
use molprompt::encoder::{EncoderConfig, Matrix, MultiChannelModel, Tape};
use molprompt::losses::{adaptive_margin_loss, adaptive_margins, Quadruplet};
use molprompt::molgraph::{
    graphs_isomorphic, parse_smiles, write_smiles, Atom, Bond, MolecularGraph,
};
use molprompt::perturb::{scaffold_invariant_perturb, subgraph_mask, FragmentPool};
use molprompt::pipeline::corpus::{drug_corpus, toy_dataset};
use molprompt::pipeline::{random_split, softmax};
use molprompt::spacemetrics::{qspr_correlation, rand_index, ClusterAssignment};

fn corpus() -> &'static [MolecularGraph] {
    static CORPUS: OnceLock<Vec<MolecularGraph>> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let mut v = toy_dataset().molecules;
        v.extend(
            drug_corpus()
                .into_iter()
                .map(|(_, s)| parse_smiles(s).expect("bundled drugs parse")),
        );
        v
    })
}

fn model() -> &'static MultiChannelModel {
    static MODEL: OnceLock<MultiChannelModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let cfg = EncoderConfig {
            dim: 16,
            layers: 3,
            heads: 4,
            ..EncoderConfig::default()
        };
        MultiChannelModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(11))
    })
}

fn pool() -> &'static FragmentPool {
    static POOL: OnceLock<FragmentPool> = OnceLock::new();
    POOL.get_or_init(FragmentPool::builtin)
}

/// The same molecule with atom `i` moved to position `perm[i]`.
fn relabel(g: &MolecularGraph, perm: &[usize]) -> MolecularGraph {
    let mut atoms = vec![Atom::new(g.atom(0).element); g.num_atoms()];
    for (i, a) in g.atoms().iter().enumerate() {
        atoms[perm[i]] = a.clone();
    }
    let mut bonds: Vec<Bond> = g
        .bonds()
        .iter()
        .map(|b| Bond::new(perm[b.endpoints.0], perm[b.endpoints.1], b.order))
        .collect();
    bonds.reverse();
    MolecularGraph::new(atoms, bonds).expect("relabeling keeps a valid graph")
}

fn molecule_and_perm() -> impl Strategy<Value = (usize, Vec<usize>)> {
    (0..corpus().len()).prop_flat_map(|m| {
        let n = corpus()[m].num_atoms();
        (Just(m), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn round_trip_is_isomorphic(m in 0..corpus().len()) {
        let g = &corpus()[m];
        let back = parse_smiles(&write_smiles(g)).unwrap();
        prop_assert!(graphs_isomorphic(g, &back).unwrap());
    }

    #[test]
    fn ring_flags_follow_relabeling((m, perm) in molecule_and_perm()) {
        let g = &corpus()[m];
        let h = relabel(g, &perm);
        for i in 0..g.num_atoms() {
            prop_assert_eq!(g.atom(i).in_ring, h.atom(perm[i]).in_ring);
        }
        for b in g.bonds() {
            let hb = h.bond_between(perm[b.endpoints.0], perm[b.endpoints.1]).unwrap();
            prop_assert_eq!(b.in_ring, h.bond(hb).in_ring);
        }
    }

    #[test]
    fn parser_output_is_valid_or_positioned(s in "[CNOcn()=#1-2\\[\\]H+]{1,14}") {
        match parse_smiles(&s) {
            Ok(g) => {
                // rebuilding re-runs every structural and valence check
                prop_assert!(MolecularGraph::new(g.atoms().to_vec(), g.bonds().to_vec()).is_ok());
            }
            Err(e) => prop_assert!(e.position <= s.len()),
        }
    }

    #[test]
    fn fingerprints_ignore_atom_order((m, perm) in molecule_and_perm()) {
        let g = &corpus()[m];
        prop_assert_eq!(ecfp4(g), ecfp4(&relabel(g, &perm)));
    }

    #[test]
    fn tanimoto_symmetric_and_bounded(a in 0..corpus().len(), b in 0..corpus().len()) {
        let (fa, fb) = (ecfp4(&corpus()[a]), ecfp4(&corpus()[b]));
        let ab = tanimoto(&fa, &fb).unwrap();
        prop_assert_eq!(ab, tanimoto(&fb, &fa).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(tanimoto(&fa, &fa).unwrap(), 1.0);
    }

    #[test]
    fn scaffold_is_idempotent(m in 0..corpus().len()) {
        let s = bemis_murcko_scaffold(&corpus()[m]);
        prop_assert!(graphs_isomorphic(&bemis_murcko_scaffold(&s), &s).unwrap());
    }

    #[test]
    fn group_counts_bounded_by_atoms(m in 0..corpus().len()) {
        let g = &corpus()[m];
        let groups = functional_group_descriptors(g);
        prop_assert!(groups.counts.iter().all(|&c| c as usize <= g.num_atoms()));
    }

    #[test]
    fn perturbation_keeps_scaffold(m in 0..corpus().len(), seed in any::<u64>()) {
        let g = &corpus()[m];
        if let Ok(p) = scaffold_invariant_perturb(g, pool(), &mut ChaCha8Rng::seed_from_u64(seed)) {
            prop_assert!(graphs_isomorphic(&bemis_murcko_scaffold(&p.graph), &bemis_murcko_scaffold(g)).unwrap());
            prop_assert!(p.deleted < 5 && p.added < 5);
        }
    }

    #[test]
    fn masking_keeps_bonds(m in 0..corpus().len(), seed in any::<u64>()) {
        let g = &corpus()[m];
        if let Ok(mg) = subgraph_mask(g, &functional_group_descriptors(g), &mut ChaCha8Rng::seed_from_u64(seed)) {
            prop_assert_eq!(mg.base.bonds(), g.bonds());
        }
    }

    #[test]
    fn embeddings_ignore_atom_order((m, perm) in molecule_and_perm()) {
        let g = &corpus()[m];
        let h = relabel(g, &perm);
        let e = model().embed(&[g.into(), (&h).into()], 2);
        for c in 0..3 {
            for (x, y) in e[0].graph_vectors[c].iter().zip(&e[1].graph_vectors[c]) {
                prop_assert!((x - y).abs() <= 1e-10);
            }
            let a = &e[0].attention[c];
            for r in 0..a.rows() {
                prop_assert!(a.row(r).iter().all(|&v| v >= 0.0));
                prop_assert!((a.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn alpha2_antisymmetric(s1 in 0.0..1.0f64, s2 in 0.0..1.0f64, off in 0.0..2.0f64) {
        prop_assert_eq!(adaptive_margins(s1, s2, off).alpha2_ijk, -adaptive_margins(s2, s1, off).alpha2_ijk);
    }

    #[test]
    fn margin_loss_nonnegative_and_monotone(
        rows in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 3), 4),
        margins in (0.0..1.0f64, 0.0..1.0f64, -1.0..1.0f64),
        push in 0.0..3.0f64,
    ) {
        let q = Quadruplet { anchor: 0, positive: 0, neg_j: 1, neg_k: 2, alpha1_ij: margins.0, alpha1_ik: margins.1, alpha2_ijk: margins.2 };
        let loss = |rows: &[Vec<f64>], alpha2: bool| {
            let mut t = Tape::new();
            let e = t.constant(Matrix::from_rows(rows));
            let l = adaptive_margin_loss(&mut t, e, &[q], &[3], alpha2);
            t.value(l).item()
        };
        let base = loss(&rows, false);
        prop_assert!(base >= 0.0 && base.is_finite());
        prop_assert!(loss(&rows, true) >= base);
        // moving j straight away from the anchor only grows d(i,j)
        let mut far = rows.clone();
        let dir: Vec<f64> = (0..3).map(|c| rows[1][c] - rows[0][c]).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-6);
        for c in 0..3 {
            far[1][c] += push * dir[c] / norm;
        }
        prop_assert!(loss(&far, false) <= base + 1e-12);
    }

    #[test]
    fn rand_index_ignores_cluster_ids(a in prop::collection::vec(0usize..5, 2..60), shift in 1usize..7) {
        let b: Vec<usize> = a.iter().map(|x| (x * 3 + 1) % 5).collect();
        let renamed: Vec<usize> = a.iter().map(|x| x + shift * 10).collect();
        let (ca, cb) = (ClusterAssignment::from_labels(&a), ClusterAssignment::from_labels(&b));
        let r = rand_index(&ca, &cb).unwrap();
        prop_assert_eq!(r, rand_index(&ClusterAssignment::from_labels(&renamed), &cb).unwrap());
        prop_assert_eq!(r, rand_index(&cb, &ca).unwrap());
    }

    #[test]
    fn qspr_weights_on_simplex(seed in any::<u64>()) {
        let n = 30;
        let mols = &corpus()[..n];
        let fps: Vec<Fingerprint> = mols.iter().map(ecfp4).collect();
        let sim = Matrix::from_rows(&(0..n).map(|i| (0..n).map(|j| tanimoto(&fps[i], &fps[j]).unwrap()).collect()).collect::<Vec<_>>());
        let labels: Vec<f64> = mols.iter().map(|g| g.num_atoms() as f64).collect();
        let q = qspr_correlation([&sim, &sim, &sim], &labels, 200, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        if q.raw.iter().any(|&r| r > 0.0) {
            prop_assert!((q.normalized.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn random_split_partitions(n in 0usize..300, seed in any::<u64>(), t in 0.1..0.9f64) {
        let v = (1.0 - t) / 2.0;
        let s = random_split(n, [t, v, 1.0 - t - v], &mut ChaCha8Rng::seed_from_u64(seed));
        let mut all: Vec<usize> = s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn softmax_on_simplex(x in prop::array::uniform3(-50.0..50.0f64)) {
        let w = softmax(x);
        prop_assert!(w.iter().all(|&v| v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
}
