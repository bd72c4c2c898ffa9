//! Acceptance suite: one pass/fail line per criterion, non-zero exit when
//! any criterion fails. Run with `cargo test --test acceptance`.

use std::f64::consts::LN_2;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use molprompt::chemfeat::{bemis_murcko_scaffold, tanimoto, Fingerprint, MoleculeFeatures};
use molprompt::encoder::{
    finite_diff_check, Channel, EncoderConfig, GraphInput, Matrix, MultiChannelModel, ParamStore,
    Tape,
};
use molprompt::losses::{
    adaptive_margin_loss, cp_loss, overall_loss, pretrain_loss, ContextLabel, LossBreakdown,
    PretrainBatch, PretrainBatchConfig, PretrainHeads, PretrainSample, Quadruplet, ATOM_VOCAB,
    BOND_VOCAB, PRESENCE_DIM, REGULARIZATION_FACTOR,
};
use molprompt::molgraph::{graphs_isomorphic, parse_smiles, write_smiles, MolecularGraph};
use molprompt::perturb::{scaffold_invariant_perturb, FragmentPool};
use molprompt::pipeline::corpus::{drug_corpus, toy_dataset};
use molprompt::pipeline::{
    embed_dataset, finetune, init_prompt_weights, initial_model, pretrain, split_dataset, Dataset,
    PromptMode, SplitKind, Task, TrainConfig,
};
use molprompt::spacemetrics::{
    detect_mmps, euclidean, kmeans, minmax_scale, pairwise_distances, pearson, rand_index, rogi,
    rogi_trace, sample_pairs, ClusterAssignment, KMeansConfig, LabeledSpace, Metric, MmpConfig,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn check(
    results: &mut Vec<bool>,
    id: usize,
    name: &str,
    budget: Duration,
    f: impl FnOnce() -> Outcome,
) {
    let start = Instant::now();
    let o = f();
    let took = start.elapsed();
    let in_time = took <= budget;
    let ok = o.passed && in_time;
    let timing = if in_time {
        String::new()
    } else {
        format!(" over budget {budget:?}")
    };
    println!(
        "[{}] {id}. {name}: {} ({:.2?}{timing})",
        if ok { "PASS" } else { "FAIL" },
        o.detail,
        took
    );
    results.push(ok);
}

fn small_molecules() -> Vec<MolecularGraph> {
    let ds = toy_dataset();
    let mut out: Vec<MolecularGraph> = ds
        .molecules
        .into_iter()
        .filter(|g| (3..=12).contains(&g.num_atoms()))
        .collect();
    out.extend(
        drug_corpus()
            .into_iter()
            .map(|(_, s)| parse_smiles(s).expect("bundled drugs parse"))
            .filter(|g| (3..=12).contains(&g.num_atoms())),
    );
    out
}

fn gradient_correctness() -> Outcome {
    let pool = FragmentPool::builtin();
    let candidates = small_molecules();
    let cfg = EncoderConfig {
        dim: 8,
        layers: 2,
        heads: 2,
        ..EncoderConfig::default()
    };
    let (mut worst, mut max_abs, mut checked, mut failing, mut coords_over, mut kinks) =
        (0.0f64, 0.0f64, 0, 0, 0, 0);
    let mut worst_at = String::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graphs: Vec<&MolecularGraph> = candidates.choose_multiple(&mut rng, 3).collect();
        let feats: Vec<MoleculeFeatures> = graphs
            .iter()
            .map(|g| MoleculeFeatures::compute(g))
            .collect();
        let samples: Vec<PretrainSample> = graphs
            .iter()
            .zip(&feats)
            .map(|(g, f)| PretrainSample {
                graph: g,
                features: f,
                descriptor_z: [
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-1.5..1.5),
                ],
            })
            .collect();
        let mut model = MultiChannelModel::new(cfg, &mut rng);
        let heads = PretrainHeads::new(&mut model.store, cfg.dim, &mut rng);
        let batch = PretrainBatch::build(samples, &pool, &PretrainBatchConfig::default(), &mut rng);
        let mut tape = Tape::new();
        let nodes = pretrain_loss(&mut tape, &model, &heads, &batch);
        let grads = tape.backward(nodes.total).expect("scalar loss");
        let f = |s: &ParamStore| {
            let m = MultiChannelModel {
                store: s.clone(),
                ..model.clone()
            };
            let mut t = Tape::new();
            let n = pretrain_loss(&mut t, &m, &heads, &batch);
            t.value(n.total).item()
        };
        let ids: Vec<_> = model.store.ids().collect();
        let mut store = model.store.clone();
        let r = finite_diff_check(&mut store, &ids, &grads, f, 1e-5, 1e-5);
        checked += r.checked;
        kinks += r.kinks;
        coords_over += r.failing;
        max_abs = max_abs.max(r.max_abs_error);
        if !r.passed {
            failing += 1;
        }
        if r.max_rel_error > worst {
            worst = r.max_rel_error;
            if let Some(w) = &r.worst {
                worst_at = format!(
                    " at seed {seed} {}[{}] analytic {:.3e} numeric {:.3e}",
                    w.param, w.index, w.analytic, w.numeric
                );
            }
        }
    }
    outcome(
        worst <= 1e-5,
        format!(
            "max rel error {worst:.3e}{worst_at}; {failing}/20 instances and {coords_over}/{checked} coordinates over 1e-5, max abs error {max_abs:.1e}, {kinks} kinks"
        ),
    )
}

fn parser_round_trip() -> Outcome {
    let drugs = drug_corpus();
    let mut ok = 0;
    let mut bad = Vec::new();
    for (name, s) in &drugs {
        let g = parse_smiles(s).expect("bundled drugs parse");
        let back = parse_smiles(&write_smiles(&g));
        match back {
            Ok(h) if graphs_isomorphic(&g, &h).unwrap_or(false) => ok += 1,
            _ => bad.push(*name),
        }
    }
    outcome(
        drugs.len() >= 50 && ok == drugs.len(),
        format!(
            "{ok}/{} molecules round-trip{}",
            drugs.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!(", failed: {bad:?}")
            }
        ),
    )
}

fn scaffold_invariance() -> Outcome {
    let ds = toy_dataset();
    let pool = FragmentPool::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut done, mut invariant, mut small, mut skipped) = (0, 0, 0, 0);
    let mut i = 0;
    while done < 1000 {
        let g = &ds.molecules[i % ds.len()];
        i += 1;
        let Ok(p) = scaffold_invariant_perturb(g, &pool, &mut rng) else {
            skipped += 1;
            continue;
        };
        done += 1;
        let reparsed = parse_smiles(&write_smiles(&p.graph)).expect("perturbed molecule is valid");
        if graphs_isomorphic(&bemis_murcko_scaffold(g), &bemis_murcko_scaffold(&reparsed))
            .unwrap_or(false)
        {
            invariant += 1;
        }
        if p.deleted < 5
            && p.added < 5
            && p.graph.num_atoms() + p.deleted == g.num_atoms() + p.added
        {
            small += 1;
        }
    }
    outcome(
        invariant == 1000 && small == 1000,
        format!("{invariant}/1000 scaffold-isomorphic, {small}/1000 with < 5 atoms changed ({skipped} molecules without a site skipped)"),
    )
}

fn brute_rand(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut agree, mut total) = (0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            total += 1;
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        agree as f64 / total as f64
    }
}

fn bit_tanimoto(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut rand_ok = 0;
    for _ in 0..50 {
        let n = rng.random_range(2..=200);
        let (ka, kb) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..ka)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..kb)).collect();
        let got = rand_index(
            &ClusterAssignment::from_labels(&a),
            &ClusterAssignment::from_labels(&b),
        )
        .expect("equal lengths");
        if (got - brute_rand(&a, &b)).abs() <= 1e-12 {
            rand_ok += 1;
        }
    }

    let mut blobs_ok = 0;
    for _ in 0..20 {
        let dim = rng.random_range(2..=5);
        let sizes = [rng.random_range(3..=40), rng.random_range(3..=40)];
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for (c, &s) in sizes.iter().enumerate() {
            for _ in 0..s {
                rows.push(
                    (0..dim)
                        .map(|d| if d == 0 { 100.0 * c as f64 } else { 0.0 } + rng.random::<f64>())
                        .collect(),
                );
                truth.push(c);
            }
        }
        let km = kmeans(
            &Matrix::from_rows(&rows),
            2,
            &KMeansConfig::default(),
            &mut rng,
        )
        .expect("two clusters fit");
        if brute_rand(&km.clusters.assignment, &truth) == 1.0 {
            blobs_ok += 1;
        }
    }

    let mut mmp_ok = 0;
    let cfg = MmpConfig::default();
    for _ in 0..10 {
        let n = rng.random_range(10..=40);
        let nbits = 64;
        let mut bits = Vec::new();
        let mut scaf = Vec::new();
        for _ in 0..n {
            // near-copies of a few templates give pairs above the threshold
            let t = rng.random_range(0..4u64);
            let mut b: Vec<bool> = (0..nbits)
                .map(|i| (i as u64 * 7 + t * 13).is_multiple_of(5))
                .collect();
            for _ in 0..rng.random_range(0..3) {
                let k = rng.random_range(0..nbits);
                b[k] = !b[k];
            }
            bits.push(b);
            let s: Vec<bool> = if rng.random_bool(0.2) {
                vec![false; nbits]
            } else {
                (0..nbits)
                    .map(|i| (i as u64 + t).is_multiple_of(3))
                    .collect()
            };
            scaf.push(s);
        }
        let labels: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let to_fp = |b: &Vec<bool>| {
            Fingerprint::from_bits(nbits, &(0..nbits).filter(|&i| b[i]).collect::<Vec<_>>())
        };
        let got = detect_mmps(
            &bits.iter().map(to_fp).collect::<Vec<_>>(),
            &scaf.iter().map(to_fp).collect::<Vec<_>>(),
            &labels,
            &cfg,
        )
        .expect("equal lengths");
        let mut expected = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let mol = bit_tanimoto(&bits[i], &bits[j]);
                let sc = if scaf[i].iter().any(|&x| x) && scaf[j].iter().any(|&x| x) {
                    bit_tanimoto(&scaf[i], &scaf[j])
                } else {
                    0.0
                };
                let sim = mol.max(sc);
                if sim >= cfg.sim_threshold {
                    let gap = (labels[i] - labels[j]).abs();
                    expected.push(((i, j), sim, gap, gap >= cfg.cliff_gap));
                }
            }
        }
        let same = got.len() == expected.len()
            && got.iter().zip(&expected).all(|(g, e)| {
                g.pair == e.0
                    && (g.similarity - e.1).abs() < 1e-15
                    && g.label_gap == e.2
                    && g.is_cliff == e.3
            });
        if same && expected.iter().any(|e| e.3) && expected.iter().any(|e| !e.3) {
            mmp_ok += 1;
        }
    }
    outcome(
        rand_ok == 50 && blobs_ok == 20 && mmp_ok == 10,
        format!("rand index {rand_ok}/50 equal to pair counting, k-means {blobs_ok}/20 blob partitions recovered, MMP scan {mmp_ok}/10 identical"),
    )
}

/// Naive complete linkage; size-weighted spread of cluster label means
/// after every merge.
fn naive_sigmas(dist: &Matrix, labels: &[f64]) -> Vec<f64> {
    let n = labels.len();
    let mean = labels.iter().sum::<f64>() / n as f64;
    let spread = |clusters: &[Vec<usize>]| {
        let v: f64 = clusters
            .iter()
            .map(|c| {
                let m = c.iter().map(|&i| labels[i]).sum::<f64>() / c.len() as f64;
                c.len() as f64 * (m - mean).powi(2)
            })
            .sum();
        (v / n as f64).sqrt()
    };
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut out = Vec::new();
    while clusters.len() > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let d = clusters[a]
                    .iter()
                    .flat_map(|&i| clusters[b].iter().map(move |&j| (i, j)))
                    .map(|(i, j)| dist.get(i, j))
                    .fold(0.0, f64::max);
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        let moved = clusters.remove(best.2);
        clusters[best.1].extend(moved);
        out.push(spread(&clusters));
    }
    out
}

fn rogi_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut constant_worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(2..=50);
        let v = Matrix::from_vec(n, 3, (0..3 * n).map(|_| rng.random::<f64>()).collect());
        let c = rng.random::<f64>();
        let r = rogi(&LabeledSpace {
            vectors: v,
            labels: vec![c; n],
            metric: Metric::Euclidean,
        })
        .expect("valid space");
        constant_worst = constant_worst.max(r.abs());
    }

    let (mut monotone, mut matches) = (0, 0);
    for _ in 0..100 {
        let n = rng.random_range(2..=40);
        let v = Matrix::from_vec(n, 3, (0..3 * n).map(|_| rng.random::<f64>()).collect());
        let labels: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let d = pairwise_distances(&v, Metric::Euclidean);
        let naive = naive_sigmas(&d, &labels);
        if naive.windows(2).all(|w| w[1] <= w[0] + 1e-12) {
            monotone += 1;
        }
        let t = rogi_trace(&d, &labels).expect("valid instance");
        if t.sigmas.len() == naive.len()
            && t.sigmas
                .iter()
                .zip(&naive)
                .all(|(a, b)| (a - b).abs() <= 1e-9)
        {
            matches += 1;
        }
    }

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for blob in 0..2 {
        for _ in 0..10 {
            rows.push(vec![
                blob as f64 * 10.0 + rng.random::<f64>(),
                rng.random::<f64>(),
            ]);
            labels.push(blob as f64);
        }
    }
    let vectors = Matrix::from_rows(&rows);
    let space = |labels: Vec<f64>| LabeledSpace {
        vectors: vectors.clone(),
        labels,
        metric: Metric::Euclidean,
    };
    let base = rogi(&space(labels.clone())).expect("valid space");
    let mut lower = 0;
    for _ in 0..100 {
        let mut p = labels.clone();
        p.shuffle(&mut rng);
        if base < rogi(&space(p)).expect("valid space") {
            lower += 1;
        }
    }
    outcome(
        constant_worst <= 1e-12 && monotone == 100 && matches == 100 && lower >= 95,
        format!(
            "constant labels max |ROGI| {constant_worst:.1e}; sigma non-increasing on {monotone}/100 (trace agrees with naive linkage on {matches}/100); structured below permuted in {lower}/100"
        ),
    )
}

fn loss_contracts() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut slack_worst = 0.0f64;
    for _ in 0..20 {
        // anchor = positive at the origin, negatives far beyond every margin
        let dim = 4;
        let a1 = rng.random_range(0.0..1.0);
        let a2 = rng.random_range(0.0..1.0);
        let dj = 2.0 + rng.random::<f64>();
        let dk = dj + a2 + 0.5 + rng.random::<f64>();
        let mut rows = vec![vec![0.0; dim]; 4];
        rows[1][0] = dj;
        rows[2][1] = dk;
        let mut tape = Tape::new();
        let e = tape.constant(Matrix::from_rows(&rows));
        let q = Quadruplet {
            anchor: 0,
            positive: 0,
            neg_j: 1,
            neg_k: 2,
            alpha1_ij: a1,
            alpha1_ik: a1,
            alpha2_ijk: a2,
        };
        let l = adaptive_margin_loss(&mut tape, e, &[q], &[3], true);
        slack_worst = slack_worst.max(tape.value(l).item().abs());
    }

    let mut tape = Tape::new();
    let e = tape.constant(Matrix::from_rows(&vec![vec![0.7, -0.2, 0.1]; 4]));
    let q = Quadruplet {
        anchor: 0,
        positive: 0,
        neg_j: 1,
        neg_k: 2,
        alpha1_ij: 0.5,
        alpha1_ik: 0.5,
        alpha2_ijk: 0.5,
    };
    let l = adaptive_margin_loss(&mut tape, e, &[q], &[3], true);
    let collapsed = tape.value(l).item();

    let mut bce_worst = 0.0f64;
    for _ in 0..10 {
        let presence: Vec<f64> = (0..PRESENCE_DIM)
            .map(|_| rng.random_range(0..2) as f64)
            .collect();
        let mut t = Tape::new();
        let z = t.constant(Matrix::zeros(1, PRESENCE_DIM));
        let per_entry = t.bce_logits(z, Matrix::row_vector(presence.clone()));
        for v in t.value(per_entry).data() {
            bce_worst = bce_worst.max((v - LN_2).abs());
        }
        let label = ContextLabel {
            atom_presence: presence[..ATOM_VOCAB].to_vec(),
            bond_presence: presence[ATOM_VOCAB..ATOM_VOCAB + BOND_VOCAB].to_vec(),
            fg_target: vec![0.0; molprompt::chemfeat::NUM_GROUPS],
        };
        let logits = t.constant(Matrix::zeros(1, PRESENCE_DIM));
        let fg = t.constant(Matrix::zeros(1, molprompt::chemfeat::NUM_GROUPS));
        let l = cp_loss(&mut t, logits, fg, &[label]);
        bce_worst = bce_worst.max((t.value(l).item() - LN_2).abs());
    }

    let mut t = Tape::new();
    let parts = [0.7, 1.3, 0.4, 2.5].map(|v| t.constant(Matrix::scalar(v)));
    let total = overall_loss(&mut t, parts[0], parts[1], parts[2], parts[3]);
    let direct = 0.7 + 1.3 + 0.4 + 0.1 * 2.5;
    let mut factor_ok =
        REGULARIZATION_FACTOR == 0.1 && (t.value(total).item() - direct).abs() < 1e-15;
    // the same composition inside the full objective
    let ds = toy_dataset();
    let feats: Vec<MoleculeFeatures> = ds.molecules[..4]
        .iter()
        .map(MoleculeFeatures::compute)
        .collect();
    let samples = ds.molecules[..4]
        .iter()
        .zip(&feats)
        .map(|(g, f)| PretrainSample {
            graph: g,
            features: f,
            descriptor_z: [0.3, -0.2, 0.1],
        })
        .collect();
    let cfg = EncoderConfig {
        dim: 16,
        layers: 2,
        heads: 2,
        ..EncoderConfig::default()
    };
    let mut model = MultiChannelModel::new(cfg, &mut rng);
    let heads = PretrainHeads::new(&mut model.store, cfg.dim, &mut rng);
    let batch = PretrainBatch::build(
        samples,
        &FragmentPool::builtin(),
        &PretrainBatchConfig::default(),
        &mut rng,
    );
    let mut t = Tape::new();
    let nodes = pretrain_loss(&mut t, &model, &heads, &batch);
    let b = LossBreakdown::read(&t, &nodes);
    factor_ok &=
        (b.total - (b.mcd + b.scd + b.cp + 0.1 * b.regu)).abs() <= 1e-12 * b.total.abs().max(1.0);

    outcome(
        slack_worst == 0.0 && (collapsed - 1.5).abs() < 1e-12 && bce_worst <= 1e-12 && factor_ok,
        format!(
            "slack instances max loss {slack_worst:.1e}; collapsed {collapsed}; zero-logit BCE max deviation from ln 2 {bce_worst:.1e}; regularisation factor {REGULARIZATION_FACTOR}{}",
            if factor_ok { "" } else { " (composition mismatch)" }
        ),
    )
}

/// Mean over molecules with a scaffold of the head-averaged attention
/// mass that channel `c` puts on scaffold atoms.
fn scaffold_mass(
    model: &MultiChannelModel,
    ds: &Dataset,
    feats: &[MoleculeFeatures],
    c: Channel,
) -> f64 {
    let inputs: Vec<GraphInput> = ds.molecules.iter().map(GraphInput::from).collect();
    let emb = model.embed(&inputs, 64);
    let (mut total, mut count) = (0.0, 0);
    for (e, f) in emb.iter().zip(feats) {
        if !f.scaffold_mask.iter().any(|&s| s) {
            continue;
        }
        let a = &e.attention[c.index()];
        let mut mass = 0.0;
        for h in 0..a.rows() {
            mass += (0..a.cols())
                .filter(|&j| f.scaffold_mask[j])
                .map(|j| a.get(h, j))
                .sum::<f64>();
        }
        total += mass / a.rows() as f64;
        count += 1;
    }
    total / count as f64
}

fn training_behaviour(cfg: &TrainConfig, ds: &Dataset) -> (Outcome, Option<MultiChannelModel>) {
    let out = match pretrain(ds, cfg, None) {
        Ok(o) => o,
        Err(e) => return (outcome(false, format!("pre-training failed: {e}")), None),
    };
    let first = out.history[0];
    let last = out.history[cfg.pretrain_epochs - 1];
    let ratios = [
        last.mcd / first.mcd,
        last.scd / first.scd,
        last.cp / first.cp,
    ];
    let feats = ds.features();
    let channels = embed_dataset(&out.model, ds, cfg.embed_chunk);
    let mcd = &channels[Channel::Mcd.index()];
    let pairs = sample_pairs(ds.len(), 1000, &mut ChaCha8Rng::seed_from_u64(7));
    let dist: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| euclidean(mcd.row(i), mcd.row(j)))
        .collect();
    let dissim: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| {
            1.0 - tanimoto(&feats[i].fingerprint, &feats[j].fingerprint).expect("same width")
        })
        .collect();
    let r = pearson(&dist, &dissim);
    let mass = scaffold_mass(&out.model, ds, &feats, Channel::Scd);
    let passed = ratios.iter().all(|&x| x <= 0.7) && r >= 0.3 && mass >= 0.6 && pairs.len() == 1000;
    (
        outcome(
            passed,
            format!(
                "epoch {} / epoch 1 loss ratios mcd {:.3} scd {:.3} cp {:.3}; MCD distance vs 1 - Tanimoto r = {r:.3} over {} pairs; SCD scaffold attention mass {mass:.3}",
                cfg.pretrain_epochs,
                ratios[0],
                ratios[1],
                ratios[2],
                pairs.len()
            ),
        ),
        Some(out.model),
    )
}

fn finetune_probing(cfg: &TrainConfig, ds: &Dataset, pretrained: &MultiChannelModel) -> Outcome {
    let split = split_dataset(ds, cfg);
    let run = |m: MultiChannelModel| {
        finetune(
            ds,
            m,
            cfg,
            Task::Regression,
            &split,
            PromptMode::Learned,
            None,
        )
    };
    let (pre, scratch) = match (run(pretrained.clone()), run(initial_model(cfg))) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, format!("fine-tuning failed: {e}")),
    };
    let mut lines = Vec::new();
    let mut ahead = true;
    for epoch in [10, 20, 50, 100] {
        let get = |r: &molprompt::pipeline::FinetuneOutput| {
            r.probes
                .iter()
                .find(|p| p.epoch == epoch)
                .map(|p| p.valid_metric)
        };
        match (get(&pre), get(&scratch)) {
            (Some(a), Some(b)) => {
                ahead &= a >= b;
                lines.push(format!("{epoch}: {a:.3} vs {b:.3}"));
            }
            _ => {
                ahead = false;
                lines.push(format!("{epoch}: missing"));
            }
        }
    }
    let frozen = pre.aggregators_unchanged && scratch.aggregators_unchanged;
    outcome(
        ahead && frozen,
        format!(
            "validation R² pre-trained vs scratch at {}; aggregators byte-identical: {frozen}",
            lines.join(", ")
        ),
    )
}

fn prompt_initialization(cfg: &TrainConfig, ds: &Dataset, model: &MultiChannelModel) -> Outcome {
    let split = split_dataset(ds, cfg);
    let train = ds.subset(&split.train);
    let channels = embed_dataset(model, &train, cfg.embed_chunk);
    let labels = train.labels().expect("toy corpus is labelled");
    let init = match init_prompt_weights(&channels, labels, 0.05) {
        Ok(i) => i,
        Err(e) => return outcome(false, format!("initialisation failed: {e}")),
    };
    // independent re-scan: integer grid, hand-mixed composite, full ROGI
    let scaled = minmax_scale(labels);
    let mut best = f64::INFINITY;
    let mut count = 0;
    for i in 0..=20usize {
        for j in 0..=20 - i {
            let w = [i as f64 / 20.0, j as f64 / 20.0, (20 - i - j) as f64 / 20.0];
            let mut m = Matrix::zeros(train.len(), cfg.encoder.dim);
            for r in 0..train.len() {
                for c in 0..cfg.encoder.dim {
                    m.set(r, c, (0..3).map(|k| w[k] * channels[k].get(r, c)).sum());
                }
            }
            let r = rogi(&LabeledSpace {
                vectors: m,
                labels: scaled.clone(),
                metric: Metric::Euclidean,
            })
            .expect("valid space");
            best = best.min(r);
            count += 1;
        }
    }
    let w = init.prompt.weights;
    let soft = molprompt::pipeline::softmax(init.prompt.logits);
    let on_simplex = w.iter().all(|&x| x >= 0.0)
        && (w.iter().sum::<f64>() - 1.0).abs() <= 1e-9
        && (soft.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
    let matches_min = (init.rogi - best).abs() <= 1e-12;
    outcome(
        count == 231 && init.grid.len() == 231 && matches_min && on_simplex,
        format!(
            "weights [{:.2}, {:.2}, {:.2}] ROGI {:.6} vs re-scan minimum {:.6} over {count} grid points; weight sum {:.3e} from 1",
            w[0],
            w[1],
            w[2],
            init.rogi,
            best,
            (w.iter().sum::<f64>() - 1.0).abs()
        ),
    )
}

fn main() -> ExitCode {
    let mut results = Vec::new();
    let minute = Duration::from_secs(60);
    check(
        &mut results,
        1,
        "gradient correctness",
        minute,
        gradient_correctness,
    );
    check(
        &mut results,
        2,
        "parser round trip",
        Duration::from_secs(1),
        parser_round_trip,
    );
    check(
        &mut results,
        3,
        "scaffold invariance",
        Duration::from_secs(30),
        scaffold_invariance,
    );
    check(
        &mut results,
        4,
        "oracle equivalence",
        minute,
        oracle_equivalence,
    );
    check(&mut results, 5, "ROGI properties", minute, rogi_properties);
    check(&mut results, 6, "loss contracts", minute, loss_contracts);

    let ds = toy_dataset();
    let cfg = TrainConfig {
        split: SplitKind::Random,
        ..TrainConfig::default()
    };
    let mut model = None;
    check(
        &mut results,
        7,
        "desk-scale training behaviour",
        Duration::from_secs(600),
        || {
            let (o, m) = training_behaviour(&cfg, &ds);
            model = m;
            o
        },
    );
    let pretrained = model.unwrap_or_else(|| initial_model(&cfg));
    check(
        &mut results,
        8,
        "fine-tune probing",
        Duration::from_secs(600),
        || finetune_probing(&cfg, &ds, &pretrained),
    );
    check(&mut results, 9, "prompt initialization", minute, || {
        prompt_initialization(&cfg, &ds, &pretrained)
    });

    let passed = results.iter().filter(|&&r| r).count();
    println!("{passed}/{} acceptance criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
