//! Pre-training and fine-tuning loops with probe reports.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{r2, roc_auc};
use super::prompt::{init_prompt_weights, PromptWeights};
use super::split::SplitIndices;
use super::{Dataset, PipelineError, Task, TrainConfig};
use crate::chemfeat::{ecfp4, MoleculeFeatures};
use crate::encoder::{
    Adam, Channel, EncoderConfig, GraphBatch, GraphInput, Matrix, MultiChannelModel, NodeId,
    ParamId, Tape,
};
use crate::losses::{pretrain_loss, LossBreakdown, PretrainBatch, PretrainHeads, PretrainSample};
use crate::perturb::{build_fragment_pool, FragmentPool, FragmentSource};
use crate::spacemetrics::{
    cliff_noncliff_ratio, default_k, detect_mmps, kmeans, minmax_scale, rand_index, rogi,
    KMeansConfig, LabeledSpace, Metric, MmpConfig,
};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const MODEL_CONFIG_FILE: &str = "model.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// Independent RNG stream per purpose, all derived from the config seed.
fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

pub fn fragment_pool(cfg: &TrainConfig) -> Result<FragmentPool, PipelineError> {
    let source = cfg
        .fragment_pool
        .clone()
        .map_or(FragmentSource::Builtin, FragmentSource::File);
    Ok(build_fragment_pool(&source)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub mcd: f64,
    pub scd: f64,
    pub cp: f64,
    pub regu: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct PretrainOutput {
    pub model: MultiChannelModel,
    pub heads: PretrainHeads,
    pub history: Vec<EpochLosses>,
}

/// Per-descriptor z-scores over the corpus; a constant column maps to 0.
fn descriptor_z(features: &[MoleculeFeatures]) -> Vec<[f64; 3]> {
    let raw: Vec<[f64; 3]> = features
        .iter()
        .map(|f| {
            let d = &f.descriptors;
            [
                d.molecular_weight,
                d.scaffold_weight,
                d.heavy_atom_count as f64,
            ]
        })
        .collect();
    let n = raw.len() as f64;
    let mut out = raw.clone();
    for c in 0..3 {
        let mean = raw.iter().map(|r| r[c]).sum::<f64>() / n;
        let sd = (raw.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n).sqrt();
        for (o, r) in out.iter_mut().zip(&raw) {
            o[c] = if sd > 0.0 { (r[c] - mean) / sd } else { 0.0 };
        }
    }
    out
}

/// Shuffled batches of `size`; a remainder below 3 joins the last batch.
fn batches(order: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 3) {
        let tail = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").extend(tail);
    }
    out
}

pub fn write_loss_csv(path: &Path, history: &[EpochLosses]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path)?;
    for h in history {
        w.serialize(h)?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes `checkpoint.bin` and `model.json` into `dir`.
pub fn save_model(
    dir: &Path,
    model: &MultiChannelModel,
    file: &str,
) -> Result<PathBuf, PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(file);
    write_file(&path, &model.store.to_checkpoint_bytes())?;
    let cfg_path = dir.join(MODEL_CONFIG_FILE);
    write_file(
        &cfg_path,
        serde_json::to_string_pretty(&model.config)?.as_bytes(),
    )?;
    Ok(path)
}

/// Rebuilds a model of `config` and loads encoder and aggregator tensors
/// by name; extra tensors such as pre-training heads are ignored.
pub fn load_model(path: &Path, config: EncoderConfig) -> Result<MultiChannelModel, PipelineError> {
    let mut model = MultiChannelModel::new(config, &mut ChaCha8Rng::seed_from_u64(0));
    let file = fs::File::open(path).map_err(io_err(path))?;
    model.store.load_checkpoint(std::io::BufReader::new(file))?;
    Ok(model)
}

/// The untrained model that pre-training starts from; fine-tuning it
/// directly is the from-scratch baseline.
pub fn initial_model(cfg: &TrainConfig) -> MultiChannelModel {
    MultiChannelModel::new(cfg.encoder, &mut stream(cfg.seed, 1))
}

/// Mini-batch pre-training of all three channels with Adam. With `out`,
/// writes the loss CSV, the final checkpoint and one checkpoint per probe
/// epoch.
pub fn pretrain(
    corpus: &Dataset,
    cfg: &TrainConfig,
    out: Option<&Path>,
) -> Result<PretrainOutput, PipelineError> {
    cfg.validate()?;
    if corpus.len() < 3 {
        return Err(PipelineError::TooFewMolecules(corpus.len()));
    }
    let pool = fragment_pool(cfg)?;
    let features = corpus.features();
    let z = descriptor_z(&features);
    let mut init_rng = stream(cfg.seed, 1);
    let mut model = MultiChannelModel::new(cfg.encoder, &mut init_rng);
    let heads = PretrainHeads::new(&mut model.store, cfg.encoder.dim, &mut init_rng);
    let mut adam = Adam::new(cfg.adam(cfg.learning_rate));
    let mut rng = stream(cfg.seed, 2);
    let batch_cfg = cfg.batch_config();
    let mut history = Vec::with_capacity(cfg.pretrain_epochs);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        if cfg.probe_epochs.contains(&0) {
            save_model(dir, &model, "checkpoint_epoch0.bin")?;
        }
    }
    for epoch in 1..=cfg.pretrain_epochs {
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        let groups = batches(&order, cfg.batch_size);
        for (b, idx) in groups.iter().enumerate() {
            let samples: Vec<PretrainSample> = idx
                .iter()
                .map(|&i| PretrainSample {
                    graph: &corpus.molecules[i],
                    features: &features[i],
                    descriptor_z: z[i],
                })
                .collect();
            let batch = PretrainBatch::build(samples, &pool, &batch_cfg, &mut rng);
            let mut tape = Tape::new();
            let nodes = pretrain_loss(&mut tape, &model, &heads, &batch);
            let l = LossBreakdown::read(&tape, &nodes);
            if !l.total.is_finite() {
                return Err(PipelineError::NonFinite { epoch, batch: b });
            }
            let grads = tape
                .backward(nodes.total)
                .map_err(|e| PipelineError::Numeric(e.to_string()))?;
            adam.step(&mut model.store, &grads);
            sum.mcd += l.mcd;
            sum.scd += l.scd;
            sum.cp += l.cp;
            sum.regu += l.regu;
            sum.total += l.total;
        }
        let k = groups.len() as f64;
        let e = EpochLosses {
            epoch,
            mcd: sum.mcd / k,
            scd: sum.scd / k,
            cp: sum.cp / k,
            regu: sum.regu / k,
            total: sum.total / k,
        };
        log::info!(
            "pretrain epoch {epoch}: total {:.4} mcd {:.4} scd {:.4} cp {:.4} regu {:.4}",
            e.total,
            e.mcd,
            e.scd,
            e.cp,
            e.regu
        );
        history.push(e);
        if let Some(dir) = out {
            if cfg.probe_epochs.contains(&epoch) {
                save_model(dir, &model, &format!("checkpoint_epoch{epoch}.bin"))?;
            }
        }
    }
    if let Some(dir) = out {
        save_model(dir, &model, CHECKPOINT_FILE)?;
        write_loss_csv(&dir.join("pretrain_loss.csv"), &history)?;
    }
    Ok(PretrainOutput {
        model,
        heads,
        history,
    })
}

/// How the channel mixture is formed during fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    /// Learnable logits, started at the lowest-ROGI grid point.
    Learned,
    /// Constant weights, as in channel ablation.
    Fixed([f64; 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub epoch: usize,
    /// Mean loss of the epoch; absent before training.
    pub train_loss: Option<f64>,
    pub train_rogi: f64,
    pub train_rand_index: f64,
    /// R² for regression, ROC-AUC for classification.
    pub valid_metric: f64,
    pub valid_cliff_ratio: Option<f64>,
    pub w_mcd: f64,
    pub w_scd: f64,
    pub w_cp: f64,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutput {
    pub model: MultiChannelModel,
    pub probes: Vec<ProbeRecord>,
    pub prompt: PromptWeights,
    pub initial_prompt: PromptWeights,
    pub final_valid_metric: f64,
    /// Aggregator tensors are byte-identical before and after.
    pub aggregators_unchanged: bool,
}

struct TaskParams {
    logits: Option<ParamId>,
    fixed: [f64; 3],
    w: ParamId,
    b: ParamId,
}

/// Composite graph vectors and predictions for `graphs`.
fn predict(
    tape: &mut Tape,
    model: &MultiChannelModel,
    tp: &TaskParams,
    graphs: &[&crate::molgraph::MolecularGraph],
) -> (NodeId, NodeId) {
    let batch = GraphBatch::new(graphs.iter().map(|g| GraphInput::from(*g)));
    let f = model.forward(tape, &batch);
    let mut comp: Option<NodeId> = None;
    let weights = tp.logits.map(|id| {
        let l = tape.param(&model.store, id);
        tape.softmax_rows(l)
    });
    for c in Channel::ALL {
        let term = match weights {
            Some(w) => {
                let wc = tape.pick(w, 0, c.index());
                tape.scale_by(f.graphs[c.index()], wc)
            }
            None => tape.scale(f.graphs[c.index()], tp.fixed[c.index()]),
        };
        comp = Some(match comp {
            Some(acc) => tape.add(acc, term),
            None => term,
        });
    }
    let comp = comp.expect("three channels");
    let (w, b) = (
        tape.param(&model.store, tp.w),
        tape.param(&model.store, tp.b),
    );
    let p = tape.matmul(comp, w);
    (comp, tape.add_row(p, b))
}

fn current_weights(model: &MultiChannelModel, tp: &TaskParams) -> PromptWeights {
    match tp.logits {
        Some(id) => {
            let d = model.store.value(id).data();
            PromptWeights::from_logits([d[0], d[1], d[2]])
        }
        None => PromptWeights::from_weights(tp.fixed),
    }
}

/// Composite embeddings and raw predictions, chunked, without gradients.
fn evaluate(
    model: &MultiChannelModel,
    tp: &TaskParams,
    graphs: &[&crate::molgraph::MolecularGraph],
    chunk: usize,
) -> (Matrix, Vec<f64>) {
    let d = model.config.dim;
    let mut emb = Vec::with_capacity(graphs.len() * d);
    let mut pred = Vec::with_capacity(graphs.len());
    for part in graphs.chunks(chunk.max(1)) {
        let mut tape = Tape::new();
        let (c, p) = predict(&mut tape, model, tp, part);
        emb.extend_from_slice(tape.value(c).data());
        pred.extend_from_slice(tape.value(p).data());
    }
    (Matrix::from_vec(graphs.len(), d, emb), pred)
}

/// Standardisation of regression targets on the training rows.
#[derive(Debug, Clone, Copy)]
struct Scaler {
    mean: f64,
    sd: f64,
}

impl Scaler {
    fn fit(y: &[f64]) -> Self {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Scaler {
            mean,
            sd: if sd > 0.0 { sd } else { 1.0 },
        }
    }
}

fn valid_metric(task: Task, truth: &[f64], raw: &[f64], scaler: Scaler) -> f64 {
    match task {
        Task::Regression => r2(
            truth,
            &raw.iter()
                .map(|p| p * scaler.sd + scaler.mean)
                .collect::<Vec<_>>(),
        ),
        Task::Classification => roc_auc(truth, raw).unwrap_or(f64::NAN),
    }
}

pub fn write_embeddings(
    path: &Path,
    emb: &Matrix,
    idx: &[usize],
    split: &str,
    labels: &[f64],
) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "index".to_string(),
        "split".to_string(),
        "label".to_string(),
    ];
    header.extend((0..emb.cols()).map(|i| format!("e{i}")));
    w.write_record(&header)?;
    for (r, &i) in idx.iter().enumerate() {
        let mut rec = vec![i.to_string(), split.to_string(), format!("{}", labels[i])];
        rec.extend(emb.row(r).iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_probes(path: &Path, probes: &[ProbeRecord]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path)?;
    for p in probes {
        w.serialize(p)?;
    }
    w.flush().map_err(io_err(path))
}

/// Fine-tunes the encoder, the prompt logits (when learned) and a linear
/// head; aggregators stay frozen. Probes run before training (epoch 0)
/// and after each probe epoch.
pub fn finetune(
    ds: &Dataset,
    mut model: MultiChannelModel,
    cfg: &TrainConfig,
    task: Task,
    split: &SplitIndices,
    mode: PromptMode,
    out: Option<&Path>,
) -> Result<FinetuneOutput, PipelineError> {
    cfg.validate()?;
    let labels = ds.labels()?;
    if split.train.is_empty() || split.valid.is_empty() {
        return Err(PipelineError::Config(
            "fine-tuning needs non-empty train and validation sets".into(),
        ));
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    model.freeze_aggregators(true);
    let agg_ids = model.aggregator_param_ids();
    let agg_before = model.store.tensor_bytes(&agg_ids);

    let train_graphs: Vec<_> = split.train.iter().map(|&i| &ds.molecules[i]).collect();
    let valid_graphs: Vec<_> = split.valid.iter().map(|&i| &ds.molecules[i]).collect();
    let train_y: Vec<f64> = split.train.iter().map(|&i| labels[i]).collect();
    let valid_y: Vec<f64> = split.valid.iter().map(|&i| labels[i]).collect();
    let scaler = match task {
        Task::Regression => Scaler::fit(&train_y),
        Task::Classification => Scaler { mean: 0.0, sd: 1.0 },
    };
    let target: Vec<f64> = train_y
        .iter()
        .map(|y| (y - scaler.mean) / scaler.sd)
        .collect();

    let initial_prompt = match mode {
        PromptMode::Learned => {
            let inputs: Vec<GraphInput> =
                train_graphs.iter().map(|g| GraphInput::from(*g)).collect();
            let channels = model.channel_matrices(&inputs, cfg.embed_chunk);
            init_prompt_weights(&channels, &train_y, cfg.grid_step)?.prompt
        }
        PromptMode::Fixed(w) => PromptWeights::from_weights(w),
    };
    let d = cfg.encoder.dim;
    let tp = TaskParams {
        logits: matches!(mode, PromptMode::Learned).then(|| {
            model.store.add(
                "task.prompt_logits",
                Matrix::row_vector(initial_prompt.logits.to_vec()),
            )
        }),
        fixed: initial_prompt.weights,
        w: model.store.add("task.head_w", Matrix::zeros(d, 1)),
        b: model.store.add("task.head_b", Matrix::zeros(1, 1)),
    };

    let train_fps = Matrix::from_rows(
        &train_graphs
            .iter()
            .map(|g| ecfp4(g).to_f64())
            .collect::<Vec<_>>(),
    );
    let valid_feats: Vec<MoleculeFeatures> = valid_graphs
        .iter()
        .map(|g| MoleculeFeatures::compute(g))
        .collect();
    let valid_mmps = detect_mmps(
        &valid_feats
            .iter()
            .map(|f| f.fingerprint.clone())
            .collect::<Vec<_>>(),
        &valid_feats
            .iter()
            .map(|f| f.scaffold_fingerprint.clone())
            .collect::<Vec<_>>(),
        &valid_y,
        &MmpConfig::default(),
    )?;
    let k = default_k(split.train.len());
    let fp_clusters = kmeans(
        &train_fps,
        k,
        &KMeansConfig::default(),
        &mut stream(cfg.seed, 10),
    )?
    .clusters;
    let scaled_train = minmax_scale(&train_y);

    let mut adam = Adam::new(cfg.adam(cfg.finetune_learning_rate));
    let mut rng = stream(cfg.seed, 3);
    let mut probes = Vec::new();
    let mut order: Vec<usize> = (0..train_graphs.len()).collect();
    let probe = |model: &MultiChannelModel,
                 epoch: usize,
                 loss: Option<f64>|
     -> Result<ProbeRecord, PipelineError> {
        let (train_emb, _) = evaluate(model, &tp, &train_graphs, cfg.embed_chunk);
        let (valid_emb, valid_pred) = evaluate(model, &tp, &valid_graphs, cfg.embed_chunk);
        let space = LabeledSpace {
            vectors: train_emb.clone(),
            labels: scaled_train.clone(),
            metric: Metric::Euclidean,
        };
        let emb_clusters = kmeans(
            &train_emb,
            k,
            &KMeansConfig::default(),
            &mut stream(cfg.seed, 11),
        )?
        .clusters;
        let w = current_weights(model, &tp).weights;
        if let Some(dir) = out {
            write_embeddings(
                &dir.join(format!("embeddings_epoch{epoch}.csv")),
                &train_emb,
                &split.train,
                "train",
                labels,
            )?;
        }
        Ok(ProbeRecord {
            epoch,
            train_loss: loss,
            train_rogi: rogi(&space)?,
            train_rand_index: rand_index(&emb_clusters, &fp_clusters)?,
            valid_metric: valid_metric(task, &valid_y, &valid_pred, scaler),
            valid_cliff_ratio: cliff_noncliff_ratio(&valid_emb, &valid_mmps).ok(),
            w_mcd: w[0],
            w_scd: w[1],
            w_cp: w[2],
        })
    };
    if cfg.probe_epochs.contains(&0) {
        probes.push(probe(&model, 0, None)?);
    }
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let groups = batches(&order, cfg.batch_size);
        for (bi, idx) in groups.iter().enumerate() {
            let graphs: Vec<_> = idx.iter().map(|&i| train_graphs[i]).collect();
            let y = Matrix::column_vector(idx.iter().map(|&i| target[i]).collect());
            let mut tape = Tape::new();
            let (_, pred) = predict(&mut tape, &model, &tp, &graphs);
            let loss = match task {
                Task::Regression => {
                    let t = tape.constant(y);
                    let diff = tape.sub(pred, t);
                    let sq = tape.mul(diff, diff);
                    tape.mean(sq)
                }
                Task::Classification => {
                    let l = tape.bce_logits(pred, y);
                    tape.mean(l)
                }
            };
            let v = tape.value(loss).item();
            if !v.is_finite() {
                return Err(PipelineError::NonFinite { epoch, batch: bi });
            }
            total += v;
            let grads = tape
                .backward(loss)
                .map_err(|e| PipelineError::Numeric(e.to_string()))?;
            adam.step(&mut model.store, &grads);
        }
        let last_loss = total / groups.len() as f64;
        log::debug!("finetune epoch {epoch}: loss {last_loss:.5}");
        if cfg.probe_epochs.contains(&epoch) {
            let p = probe(&model, epoch, Some(last_loss))?;
            log::info!(
                "probe epoch {epoch}: valid {:.4} rogi {:.4} rand {:.4} weights {:.3}/{:.3}/{:.3}",
                p.valid_metric,
                p.train_rogi,
                p.train_rand_index,
                p.w_mcd,
                p.w_scd,
                p.w_cp
            );
            probes.push(p);
        }
    }
    let (_, valid_pred) = evaluate(&model, &tp, &valid_graphs, cfg.embed_chunk);
    let final_valid_metric = valid_metric(task, &valid_y, &valid_pred, scaler);
    let aggregators_unchanged = model.store.tensor_bytes(&agg_ids) == agg_before;
    let prompt = current_weights(&model, &tp);
    if let Some(dir) = out {
        write_probes(&dir.join("finetune_metrics.csv"), &probes)?;
        let summary = serde_json::json!({
            "task": task,
            "final_valid_metric": final_valid_metric,
            "initial_prompt_weights": initial_prompt.weights,
            "prompt_weights": prompt.weights,
            "aggregators_unchanged": aggregators_unchanged,
            "train": split.train.len(),
            "valid": split.valid.len(),
            "test": split.test.len(),
        });
        write_file(
            &dir.join("finetune_summary.json"),
            serde_json::to_string_pretty(&summary)?.as_bytes(),
        )?;
    }
    Ok(FinetuneOutput {
        model,
        probes,
        prompt,
        initial_prompt,
        final_valid_metric,
        aggregators_unchanged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub channels: String,
    pub w_mcd: f64,
    pub w_scd: f64,
    pub w_cp: f64,
    pub valid_metric: f64,
}

/// The seven non-empty channel subsets, each with uniform weights.
pub fn ablation_masks() -> Vec<(Vec<Channel>, [f64; 3])> {
    (1u8..8)
        .map(|bits| {
            let on: Vec<Channel> = Channel::ALL
                .into_iter()
                .filter(|c| bits & (1 << c.index()) != 0)
                .collect();
            let mut w = [0.0; 3];
            for c in &on {
                w[c.index()] = 1.0 / on.len() as f64;
            }
            (on, w)
        })
        .collect()
}

/// Fine-tunes a copy of `base` under every channel mask with frozen,
/// uniform prompt weights.
pub fn channel_ablation(
    ds: &Dataset,
    base: &MultiChannelModel,
    cfg: &TrainConfig,
    task: Task,
    split: &SplitIndices,
    out: Option<&Path>,
) -> Result<Vec<AblationRow>, PipelineError> {
    let quiet = TrainConfig {
        probe_epochs: Vec::new(),
        ..cfg.clone()
    };
    let mut rows = Vec::new();
    for (on, w) in ablation_masks() {
        let r = finetune(
            ds,
            base.clone(),
            &quiet,
            task,
            split,
            PromptMode::Fixed(w),
            None,
        )?;
        let name: Vec<&str> = on.iter().map(|c| c.name()).collect();
        rows.push(AblationRow {
            channels: name.join("+"),
            w_mcd: w[0],
            w_scd: w[1],
            w_cp: w[2],
            valid_metric: r.final_valid_metric,
        });
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join("ablation.csv");
        let mut wr = csv::Writer::from_path(&path)?;
        for r in &rows {
            wr.serialize(r)?;
        }
        wr.flush().map_err(io_err(&path))?;
    }
    Ok(rows)
}

/// `[MCD, SCD, CP]` graph vectors for a whole dataset.
pub fn embed_dataset(model: &MultiChannelModel, ds: &Dataset, chunk: usize) -> [Matrix; 3] {
    let inputs: Vec<GraphInput> = ds.molecules.iter().map(GraphInput::from).collect();
    model.channel_matrices(&inputs, chunk)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            pretrain_epochs: 1,
            epochs: 2,
            probe_epochs: vec![0, 2],
            batch_size: 4,
            encoder: EncoderConfig {
                dim: 8,
                layers: 2,
                heads: 2,
                ..EncoderConfig::default()
            },
            grid_step: 0.5,
            ..TrainConfig::default()
        }
    }

    fn small_corpus() -> Dataset {
        let smiles = [
            "CCc1ccccc1",
            "Oc1ccccc1C",
            "CC(=O)Nc1ccc(O)cc1",
            "OCC1CCNCC1",
            "c1ccncc1CC",
            "C1CCCCC1N",
            "Clc1ccccc1",
            "CCOC(=O)c1ccccc1",
        ];
        let labels = (0..smiles.len()).map(|i| i as f64 * 0.3).collect();
        Dataset::from_smiles("small", &smiles, Some(labels)).unwrap()
    }

    #[test]
    fn batching_merges_small_tail() {
        let order: Vec<usize> = (0..18).collect();
        let b = batches(&order, 16);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].len(), 18);
        assert_eq!(
            batches(&order, 5).iter().map(Vec::len).collect::<Vec<_>>(),
            vec![5, 5, 5, 3]
        );
    }

    #[test]
    fn pretrain_checkpoint_round_trip_and_determinism() {
        let ds = small_corpus();
        let cfg = tiny_cfg();
        let dir = tempfile::tempdir().unwrap();
        let a = pretrain(&ds, &cfg, Some(dir.path())).unwrap();
        let loaded = load_model(&dir.path().join(CHECKPOINT_FILE), cfg.encoder).unwrap();
        for id in loaded.store.ids() {
            let orig = a.model.store.id(loaded.store.name(id)).unwrap();
            assert_eq!(loaded.store.value(id), a.model.store.value(orig));
        }
        let csv1 = fs::read(dir.path().join("pretrain_loss.csv")).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        pretrain(&ds, &cfg, Some(dir2.path())).unwrap();
        assert_eq!(
            csv1,
            fs::read(dir2.path().join("pretrain_loss.csv")).unwrap()
        );
        let start = load_model(&dir.path().join("checkpoint_epoch0.bin"), cfg.encoder).unwrap();
        assert_eq!(
            start.store.to_checkpoint_bytes(),
            initial_model(&cfg).store.to_checkpoint_bytes()
        );
    }

    #[test]
    fn finetune_freezes_aggregators_and_probes() {
        let ds = small_corpus();
        let cfg = tiny_cfg();
        let model = pretrain(&ds, &cfg, None).unwrap().model;
        let split = SplitIndices {
            train: (0..6).collect(),
            valid: vec![6, 7],
            test: Vec::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        let r = finetune(
            &ds,
            model.clone(),
            &cfg,
            Task::Regression,
            &split,
            PromptMode::Learned,
            Some(dir.path()),
        )
        .unwrap();
        assert!(r.aggregators_unchanged);
        assert_eq!(
            r.probes.iter().map(|p| p.epoch).collect::<Vec<_>>(),
            vec![0, 2]
        );
        // zero head predicts the training mean at epoch 0
        assert!(r.probes[0].valid_metric <= 0.0);
        assert!((r.prompt.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(dir.path().join("finetune_metrics.csv").exists());
        assert!(dir.path().join("embeddings_epoch2.csv").exists());
        let again = finetune(
            &ds,
            model,
            &cfg,
            Task::Regression,
            &split,
            PromptMode::Learned,
            None,
        )
        .unwrap();
        assert_eq!(again.probes, r.probes);
    }

    #[test]
    fn ablation_masks_uniform() {
        let masks = ablation_masks();
        assert_eq!(masks.len(), 7);
        assert!(masks.iter().any(|(_, w)| *w == [0.5, 0.5, 0.0]));
        assert!(masks.iter().any(|(_, w)| *w == [0.0, 0.0, 1.0]));
    }

    #[test]
    fn unlabeled_rejected() {
        let mut ds = small_corpus();
        ds.labels = None;
        let cfg = tiny_cfg();
        let model = MultiChannelModel::new(cfg.encoder, &mut ChaCha8Rng::seed_from_u64(0));
        let split = SplitIndices {
            train: vec![0, 1, 2],
            valid: vec![3],
            test: Vec::new(),
        };
        assert!(matches!(
            finetune(
                &ds,
                model,
                &cfg,
                Task::Regression,
                &split,
                PromptMode::Learned,
                None
            ),
            Err(PipelineError::Unlabeled)
        ));
    }
}
