//! Command-line front end: featurisation, splitting, training and probes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use molprompt::chemfeat::{bemis_murcko_scaffold, FunctionalGroup, MoleculeFeatures, NUM_GROUPS};
use molprompt::encoder::{Channel, EncoderConfig, Matrix, MultiChannelModel};
use molprompt::molgraph::{parse_smiles, write_smiles};
use molprompt::perturb::scaffold_invariant_perturb;
use molprompt::pipeline::{
    self, channel_ablation, composite, conventional_similarities, corpus, embed_dataset, fg_matrix,
    finetune, fragment_pool, load_dataset, load_model, pretrain, probe_space, scaffold_ids,
    split_dataset, write_rejects, Dataset, PipelineError, PromptMode, Task, TrainConfig,
    MODEL_CONFIG_FILE,
};
use molprompt::spacemetrics::{
    correlation_report, hierarchical_three_stage, minmax_scale, qspr_correlation, rogi,
    ClusterReport, HierarchyConfig, HierarchyInput, LabeledSpace, Metric, DEFAULT_PAIR_SAMPLE,
};

#[derive(Parser)]
#[command(
    name = "molprompt",
    version,
    about = "Prompt-guided multi-channel molecular representations"
)]
struct Cli {
    /// Overrides the seed of the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file with training configuration fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Input {
    /// CSV with a header row; the bundled toy corpus when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "smiles")]
    smiles_column: String,
    #[arg(long, default_value = "label")]
    label_column: String,
}

#[derive(Args, Clone)]
struct Checkpoint {
    /// Checkpoint written by `pretrain`; model.json is read from its directory.
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Regression,
    Classification,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Regression => Task::Regression,
            TaskArg::Classification => Task::Classification,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse SMILES and write them back.
    Parse {
        smiles: Vec<String>,
        /// One SMILES per line.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Fingerprints, scaffolds, functional groups and descriptors.
    Featurize(Input),
    /// Train/validation/test assignment per configured split.
    Split(Input),
    /// Scaffold-invariant perturbations of one molecule.
    Perturb {
        smiles: String,
        #[arg(long, default_value_t = 5)]
        count: usize,
    },
    /// Self-supervised pre-training of all three channels.
    Pretrain(Input),
    /// Fine-tune a pre-trained model with probes at the probe epochs.
    Finetune {
        #[command(flatten)]
        input: Input,
        /// Start from random weights instead of a checkpoint.
        #[arg(long, conflicts_with = "checkpoint")]
        from_scratch: bool,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "regression")]
        task: TaskArg,
        /// Fixed prompt weights "mcd,scd,cp" instead of learned ones.
        #[arg(long, value_parser = parse_weights)]
        weights: Option<[f64; 3]>,
    },
    /// Fine-tune under every channel mask with uniform fixed weights.
    Ablate {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        checkpoint: Checkpoint,
        #[arg(long, value_enum, default_value = "regression")]
        task: TaskArg,
    },
    /// Roughness index of fingerprints, or of channel and composite embeddings.
    Rogi {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Composite weights "mcd,scd,cp".
        #[arg(long, value_parser = parse_weights)]
        weights: Option<[f64; 3]>,
    },
    /// ROGI, Rand index and cliff ratio of every channel.
    Probe {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        checkpoint: Checkpoint,
    },
    /// Nested CP, SCD, MCD clustering with per-cluster reports.
    ClusterHierarchy {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        checkpoint: Checkpoint,
        #[arg(long, default_value_t = 10)]
        top_m: usize,
    },
    /// Embedding distance against conventional similarity per channel.
    Correlate {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        checkpoint: Checkpoint,
        #[arg(long, default_value_t = DEFAULT_PAIR_SAMPLE)]
        pairs: usize,
    },
}

fn parse_weights(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let [a, b, c] = v[..] else {
        return Err("expected three comma-separated weights".into());
    };
    if v.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || (a + b + c - 1.0).abs() > 1e-6 {
        return Err("weights must be non-negative and sum to 1".into());
    }
    Ok([a, b, c])
}

struct Ctx {
    cfg: TrainConfig,
    out: PathBuf,
}

impl Ctx {
    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        r.set_stream(100 + stream);
        r
    }

    fn dataset(&self, input: &Input, labelled: bool) -> Result<Dataset> {
        let Some(path) = &input.input else {
            return Ok(corpus::toy_dataset());
        };
        let (ds, rejects) = load_dataset(path, &input.smiles_column, Some(&input.label_column))?;
        if !rejects.is_empty() {
            log::warn!("{} rows rejected, see rejects.csv", rejects.len());
            write_rejects(&self.out_dir()?.join("rejects.csv"), &rejects)?;
        }
        if labelled {
            ds.labels()?;
        }
        Ok(ds)
    }

    fn model(&self, checkpoint: &Path) -> Result<MultiChannelModel> {
        let meta = checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join(MODEL_CONFIG_FILE);
        let encoder: EncoderConfig = if meta.exists() {
            let text =
                fs::read_to_string(&meta).with_context(|| format!("reading {}", meta.display()))?;
            serde_json::from_str(&text).map_err(PipelineError::from)?
        } else {
            self.cfg.encoder
        };
        Ok(load_model(checkpoint, encoder)?)
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn write_report(path: &Path, rows: &[ClusterReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(PipelineError::from)?;
    for r in rows {
        w.serialize(r).map_err(PipelineError::from)?;
    }
    w.flush()
        .with_context(|| format!("writing {}", path.display()))
}

fn cmd_parse(smiles: Vec<String>, file: Option<PathBuf>) -> Result<()> {
    let mut all = smiles;
    if let Some(f) = file {
        let text = fs::read_to_string(&f).map_err(|source| PipelineError::Io {
            path: f.clone(),
            source,
        })?;
        all.extend(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from),
        );
    }
    if all.is_empty() {
        bail!(PipelineError::Config("no SMILES given".into()));
    }
    let mut w = csv::Writer::from_writer(std::io::stdout());
    w.write_record(["input", "atoms", "bonds", "smiles", "error"])?;
    let mut failed = 0;
    for s in &all {
        match parse_smiles(s) {
            Ok(g) => w.write_record([
                s,
                &g.num_atoms().to_string(),
                &g.num_bonds().to_string(),
                &write_smiles(&g),
                "",
            ])?,
            Err(e) => {
                failed += 1;
                w.write_record([s, "", "", "", &e.to_string()])?;
            }
        }
    }
    w.flush()?;
    if failed > 0 {
        bail!(PipelineError::Smiles(format!(
            "{failed} of {} inputs failed to parse",
            all.len()
        )));
    }
    Ok(())
}

fn cmd_featurize(ctx: &Ctx, input: &Input) -> Result<()> {
    let ds = ctx.dataset(input, false)?;
    let path = ctx.out_dir()?.join("features.csv");
    let mut w = csv::Writer::from_path(&path).map_err(PipelineError::from)?;
    let mut header: Vec<String> = [
        "smiles",
        "scaffold",
        "molecular_weight",
        "scaffold_weight",
        "heavy_atoms",
    ]
    .map(String::from)
    .to_vec();
    header.extend(
        FunctionalGroup::ALL
            .iter()
            .map(|g| format!("fg_{}", g.name())),
    );
    header.push("ecfp4_on_bits".into());
    w.write_record(&header)?;
    for (s, g) in ds.smiles.iter().zip(&ds.molecules) {
        let f = MoleculeFeatures::compute(g);
        let mut rec = vec![
            s.clone(),
            write_smiles(&bemis_murcko_scaffold(g)),
            format!("{:.4}", f.descriptors.molecular_weight),
            format!("{:.4}", f.descriptors.scaffold_weight),
            f.descriptors.heavy_atom_count.to_string(),
        ];
        rec.extend((0..NUM_GROUPS).map(|i| f.groups.counts[i].to_string()));
        rec.push(
            f.fingerprint
                .on_bits()
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(" "),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    println!("{} molecules -> {}", ds.len(), path.display());
    Ok(())
}

fn cmd_split(ctx: &Ctx, input: &Input) -> Result<()> {
    let ds = ctx.dataset(input, false)?;
    let split = split_dataset(&ds, &ctx.cfg);
    let path = ctx.out_dir()?.join("split.csv");
    let mut w = csv::Writer::from_path(&path).map_err(PipelineError::from)?;
    w.write_record(["index", "smiles", "split"])?;
    let mut rows: Vec<(usize, &str)> = Vec::new();
    for (name, idx) in [
        ("train", &split.train),
        ("valid", &split.valid),
        ("test", &split.test),
    ] {
        rows.extend(idx.iter().map(|&i| (i, name)));
    }
    rows.sort_unstable();
    for (i, name) in rows {
        w.write_record([&i.to_string(), &ds.smiles[i], name])?;
    }
    w.flush()?;
    println!(
        "train {} valid {} test {} -> {}",
        split.train.len(),
        split.valid.len(),
        split.test.len(),
        path.display()
    );
    Ok(())
}

fn cmd_perturb(ctx: &Ctx, smiles: &str, count: usize) -> Result<()> {
    let g = parse_smiles(smiles).map_err(|e| PipelineError::Smiles(format!("{smiles}: {e}")))?;
    let pool = fragment_pool(&ctx.cfg)?;
    let mut rng = ctx.rng(1);
    let mut w = csv::Writer::from_writer(std::io::stdout());
    w.write_record(["smiles", "deleted", "added"])?;
    for _ in 0..count {
        match scaffold_invariant_perturb(&g, &pool, &mut rng) {
            Ok(p) => w.write_record([
                write_smiles(&p.graph),
                p.deleted.to_string(),
                p.added.to_string(),
            ])?,
            Err(e) => bail!(PipelineError::Smiles(format!("{smiles}: {e}"))),
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_pretrain(ctx: &Ctx, input: &Input) -> Result<()> {
    let ds = ctx.dataset(input, false)?;
    let out = ctx.out_dir()?;
    let r = pretrain(&ds, &ctx.cfg, Some(out))?;
    if let Some(last) = r.history.last() {
        println!(
            "epoch {}: mcd {:.4} scd {:.4} cp {:.4} regu {:.4} total {:.4}",
            last.epoch, last.mcd, last.scd, last.cp, last.regu, last.total
        );
    }
    println!(
        "checkpoint -> {}",
        out.join(pipeline::CHECKPOINT_FILE).display()
    );
    Ok(())
}

fn cmd_finetune(
    ctx: &Ctx,
    input: &Input,
    model: MultiChannelModel,
    task: Task,
    weights: Option<[f64; 3]>,
) -> Result<()> {
    let ds = ctx.dataset(input, true)?;
    let split = split_dataset(&ds, &ctx.cfg);
    let mode = weights.map_or(PromptMode::Learned, PromptMode::Fixed);
    let r = finetune(
        &ds,
        model,
        &ctx.cfg,
        task,
        &split,
        mode,
        Some(ctx.out_dir()?),
    )?;
    for p in &r.probes {
        println!(
            "epoch {:>3}: valid {:.4} rogi {:.4} rand {:.4} weights {:.3}/{:.3}/{:.3}",
            p.epoch, p.valid_metric, p.train_rogi, p.train_rand_index, p.w_mcd, p.w_scd, p.w_cp
        );
    }
    println!("final validation metric {:.4}", r.final_valid_metric);
    if !r.aggregators_unchanged {
        bail!(PipelineError::Numeric(
            "aggregator parameters changed during fine-tuning".into()
        ));
    }
    Ok(())
}

fn cmd_ablate(ctx: &Ctx, input: &Input, checkpoint: &Path, task: Task) -> Result<()> {
    let ds = ctx.dataset(input, true)?;
    let model = ctx.model(checkpoint)?;
    let split = split_dataset(&ds, &ctx.cfg);
    let rows = channel_ablation(&ds, &model, &ctx.cfg, task, &split, Some(ctx.out_dir()?))?;
    for r in rows {
        println!("{:<10} {:.4}", r.channels, r.valid_metric);
    }
    Ok(())
}

fn rogi_of(vectors: Matrix, labels: &[f64], metric: Metric) -> Result<f64> {
    Ok(rogi(&LabeledSpace {
        vectors,
        labels: minmax_scale(labels),
        metric,
    })?)
}

fn cmd_rogi(
    ctx: &Ctx,
    input: &Input,
    checkpoint: Option<&Path>,
    weights: Option<[f64; 3]>,
) -> Result<()> {
    let ds = ctx.dataset(input, true)?;
    let labels = ds.labels()?;
    let mut report = serde_json::Map::new();
    report.insert(
        "ecfp4".into(),
        json!(rogi_of(
            pipeline::fingerprint_matrix(&ds),
            labels,
            Metric::Tanimoto
        )?),
    );
    if let Some(cp) = checkpoint {
        let model = ctx.model(cp)?;
        let channels = embed_dataset(&model, &ds, ctx.cfg.embed_chunk);
        for c in Channel::ALL {
            report.insert(
                c.name().into(),
                json!(rogi_of(
                    channels[c.index()].clone(),
                    labels,
                    Metric::Euclidean
                )?),
            );
        }
        let w = weights.unwrap_or([1.0 / 3.0; 3]);
        report.insert("composite_weights".into(), json!(w));
        report.insert(
            "composite".into(),
            json!(rogi_of(composite(&channels, w), labels, Metric::Euclidean)?),
        );
    } else if weights.is_some() {
        bail!(PipelineError::Config("--weights needs --checkpoint".into()));
    }
    let value = serde_json::Value::Object(report);
    write_json(&ctx.out_dir()?.join("rogi.json"), &value)?;
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn cmd_probe(ctx: &Ctx, input: &Input, checkpoint: &Path) -> Result<()> {
    let ds = ctx.dataset(input, true)?;
    let labels = ds.labels()?;
    let features = ds.features();
    let model = ctx.model(checkpoint)?;
    let channels = embed_dataset(&model, &ds, ctx.cfg.embed_chunk);
    let mut report = serde_json::Map::new();
    for c in Channel::ALL {
        let p = probe_space(&channels[c.index()], &features, labels, &mut ctx.rng(2))?;
        report.insert(c.name().into(), serde_json::to_value(p)?);
    }
    let init = pipeline::init_prompt_weights(&channels, labels, ctx.cfg.grid_step)?;
    let comp = composite(&channels, init.prompt.weights);
    report.insert("initial_prompt_weights".into(), json!(init.prompt.weights));
    report.insert(
        "composite".into(),
        serde_json::to_value(probe_space(&comp, &features, labels, &mut ctx.rng(2))?)?,
    );
    let value = serde_json::Value::Object(report);
    write_json(&ctx.out_dir()?.join("probe.json"), &value)?;
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn cmd_hierarchy(ctx: &Ctx, input: &Input, checkpoint: &Path, top_m: usize) -> Result<()> {
    let ds = ctx.dataset(input, false)?;
    let features = ds.features();
    let model = ctx.model(checkpoint)?;
    let channels = embed_dataset(&model, &ds, ctx.cfg.embed_chunk);
    let fg = fg_matrix(&features);
    let scaffolds: Vec<_> = features
        .iter()
        .map(|f| f.scaffold_fingerprint.clone())
        .collect();
    let ids = scaffold_ids(&ds);
    let input = HierarchyInput {
        channels: [&channels[0], &channels[1], &channels[2]],
        fg_descriptors: &fg,
        scaffold_fingerprints: &scaffolds,
        scaffold_ids: &ids,
    };
    let cfg = HierarchyConfig {
        top_m,
        ..HierarchyConfig::default()
    };
    let r = hierarchical_three_stage(&input, &cfg, &mut ctx.rng(3))?;
    let out = ctx.out_dir()?;
    write_report(&out.join("hierarchy_report.csv"), &r.report)?;
    let mut w = csv::Writer::from_path(out.join("hierarchy_assignments.csv"))
        .map_err(PipelineError::from)?;
    w.write_record(["index", "smiles", "stage1", "stage2", "stage3"])?;
    for i in 0..ds.len() {
        w.write_record([
            i.to_string(),
            ds.smiles[i].clone(),
            r.stages[0].assignment[i].to_string(),
            r.stages[1].assignment[i].to_string(),
            r.stages[2].assignment[i].to_string(),
        ])?;
    }
    w.flush()?;
    for c in &r.report {
        println!(
            "stage {} cluster {:>3}: size {:>4} scaffolds {:>3} ratio {}",
            c.stage,
            c.cluster,
            c.size,
            c.unique_scaffolds,
            c.distance_ratio.map_or("-".into(), |v| format!("{v:.4}"))
        );
    }
    Ok(())
}

fn cmd_correlate(ctx: &Ctx, input: &Input, checkpoint: &Path, pairs: usize) -> Result<()> {
    let ds = ctx.dataset(input, false)?;
    let features = ds.features();
    let model = ctx.model(checkpoint)?;
    let channels = embed_dataset(&model, &ds, ctx.cfg.embed_chunk);
    let sims = conventional_similarities(&features);
    let sim_refs = [&sims[0], &sims[1], &sims[2]];
    let report = correlation_report(
        [&channels[0], &channels[1], &channels[2]],
        sim_refs,
        pairs,
        &mut ctx.rng(4),
    )?;
    let out = ctx.out_dir()?;
    let mut w =
        csv::Writer::from_path(out.join("correlation_pairs.csv")).map_err(PipelineError::from)?;
    w.write_record(["channel", "i", "j", "distance", "similarity"])?;
    for c in Channel::ALL {
        let r = &report[c.index()];
        for (k, &(i, j)) in r.pairs.iter().enumerate() {
            w.write_record([
                c.name().to_string(),
                i.to_string(),
                j.to_string(),
                r.distance[k].to_string(),
                r.similarity[k].to_string(),
            ])?;
        }
    }
    w.flush()?;
    let mut summary = serde_json::Map::new();
    for c in Channel::ALL {
        summary.insert(format!("{}_r", c.name()), json!(report[c.index()].r));
    }
    if let Some(labels) = &ds.labels {
        let q = qspr_correlation(sim_refs, labels, pairs, &mut ctx.rng(5))?;
        summary.insert("qspr".into(), serde_json::to_value(q)?);
    }
    let value = serde_json::Value::Object(summary);
    write_json(&out.join("correlation.json"), &value)?;
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => TrainConfig::from_json_file(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let ctx = Ctx { cfg, out: cli.out };
    match cli.command {
        Command::Parse { smiles, file } => cmd_parse(smiles, file),
        Command::Featurize(input) => cmd_featurize(&ctx, &input),
        Command::Split(input) => cmd_split(&ctx, &input),
        Command::Perturb { smiles, count } => cmd_perturb(&ctx, &smiles, count),
        Command::Pretrain(input) => cmd_pretrain(&ctx, &input),
        Command::Finetune {
            input,
            from_scratch,
            checkpoint,
            task,
            weights,
        } => {
            let model = match (checkpoint, from_scratch) {
                (Some(cp), _) => ctx.model(&cp)?,
                (None, true) => pipeline::initial_model(&ctx.cfg),
                (None, false) => bail!(PipelineError::Config(
                    "finetune needs --checkpoint or --from-scratch".into()
                )),
            };
            cmd_finetune(&ctx, &input, model, task.into(), weights)
        }
        Command::Ablate {
            input,
            checkpoint,
            task,
        } => cmd_ablate(&ctx, &input, &checkpoint.checkpoint, task.into()),
        Command::Rogi {
            input,
            checkpoint,
            weights,
        } => cmd_rogi(&ctx, &input, checkpoint.as_deref(), weights),
        Command::Probe { input, checkpoint } => cmd_probe(&ctx, &input, &checkpoint.checkpoint),
        Command::ClusterHierarchy {
            input,
            checkpoint,
            top_m,
        } => cmd_hierarchy(&ctx, &input, &checkpoint.checkpoint, top_m),
        Command::Correlate {
            input,
            checkpoint,
            pairs,
        } => cmd_correlate(&ctx, &input, &checkpoint.checkpoint, pairs),
    }
}

/// 3 for numeric failures, 2 for everything caused by the inputs.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<PipelineError>() {
        Some(e) if e.is_numeric() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
