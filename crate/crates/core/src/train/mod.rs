//! Optimisation loops, evaluation, run reports and checkpoints.
//!
//! Each batch is recorded on one tape: both generators produce a view of every
//! graph, the contrastive encoder embeds all `2M` views, and a single Adam step
//! updates the encoder and both generators jointly. View sampling for graph `i`
//! in epoch `e` draws from its own substream of the run seed.

mod adam;
mod config;
mod probe;
mod report;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use config::{Regime, TrainConfig};
pub use probe::{
    linear_probe_eval, stratified_folds, zscore_apply, zscore_fit, EvalSummary, LogisticRegression,
};
pub use report::{Checkpoint, EpochRecord, RunReport, CHECKPOINT_FORMAT, REPORT_FORMAT};

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use crate::autodiff::{linear, ParamId, ParamStore, Tape, Tensor, Var};
use crate::encoder::{GinEncoder, GraphInput};
use crate::error::{Error, Result};
use crate::graph::{batch_indices, Dataset, Graph};
use crate::losses::{classification_loss, cross_entropy, nt_xent, similarity_loss, LossBundle, LossValues};
use crate::partition::{stats_of, Partition};
use crate::rng::substream;
use crate::viewgen::{generate_view, views_to_input, AugmentedView, Head, ViewGenerator, ViewOptions};

pub const ENCODER_PREFIX: &str = "enc";
pub const GENERATOR_PREFIXES: [&str; 2] = ["gen1", "gen2"];
pub const CLASSIFIER_PREFIX: &str = "cls";

const EMBED_CHUNK: usize = 64;

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Contrastive encoder, two view generators and an optional linear classifier.
#[derive(Debug, Clone)]
pub struct Model {
    pub store: ParamStore,
    pub encoder: GinEncoder,
    pub generators: [ViewGenerator; 2],
    pub classifier: Option<[ParamId; 2]>,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl Model {
    pub fn new(cfg: &TrainConfig, input_dim: usize, num_classes: usize, with_classifier: bool) -> Result<Self> {
        let gin = cfg.gin(input_dim);
        gin.validate()?;
        let mut rng = substream(cfg.seed, &[0x20]);
        let mut store = ParamStore::new();
        let encoder = GinEncoder::new(&mut store, ENCODER_PREFIX, gin.clone(), &mut rng)?;
        let mut make = |store: &mut ParamStore, prefix: &str| {
            if cfg.share_encoder {
                ViewGenerator::with_encoder(store, prefix, encoder.clone(), &mut rng)
            } else {
                ViewGenerator::new(store, prefix, gin.clone(), &mut rng)
            }
        };
        let g1 = make(&mut store, GENERATOR_PREFIXES[0])?;
        let g2 = make(&mut store, GENERATOR_PREFIXES[1])?;
        let classifier = if with_classifier {
            if num_classes < 2 {
                return Err(Error::Parameter(format!("classifier needs >= 2 classes, got {num_classes}")));
            }
            Some([
                store.add_glorot(format!("{CLASSIFIER_PREFIX}.w"), cfg.hidden_dim, num_classes, &mut rng)?,
                store.add_zeros(format!("{CLASSIFIER_PREFIX}.b"), &[num_classes])?,
            ])
        } else {
            None
        };
        Ok(Model {
            store,
            encoder,
            generators: [g1, g2],
            classifier,
            input_dim,
            num_classes,
        })
    }

    /// Rebuilds handles over a loaded parameter store.
    pub fn attach(store: ParamStore, cfg: &TrainConfig, input_dim: usize, num_classes: usize) -> Result<Self> {
        let gin = cfg.gin(input_dim);
        let encoder = GinEncoder::attach(&store, ENCODER_PREFIX, gin.clone())?;
        let gen = |prefix: &str| -> Result<ViewGenerator> {
            let enc = if cfg.share_encoder {
                encoder.clone()
            } else {
                GinEncoder::attach(&store, &format!("{prefix}.enc"), gin.clone())?
            };
            ViewGenerator::attach(&store, prefix, enc)
        };
        let generators = [gen(GENERATOR_PREFIXES[0])?, gen(GENERATOR_PREFIXES[1])?];
        let classifier = match (store.id(&format!("{CLASSIFIER_PREFIX}.w")), store.id(&format!("{CLASSIFIER_PREFIX}.b"))) {
            (Some(w), Some(b)) => {
                if store.value(w).shape() != [cfg.hidden_dim, num_classes] {
                    return Err(Error::Compatibility("classifier shape does not match the dataset".into()));
                }
                Some([w, b])
            }
            _ => None,
        };
        Ok(Model {
            store,
            encoder,
            generators,
            classifier,
            input_dim,
            num_classes,
        })
    }

    /// Pre-projection graph embeddings, one row per graph.
    pub fn embed(&self, graphs: &[Graph]) -> Result<Tensor> {
        let mut rows = Vec::new();
        for chunk in graphs.chunks(EMBED_CHUNK) {
            let tape = Tape::new();
            let refs: Vec<&Graph> = chunk.iter().collect();
            let emb = self.encoder.forward(&tape, &self.store, &GraphInput::from_graphs(&tape, &refs))?;
            rows.extend_from_slice(emb.graph.value().data());
        }
        Tensor::matrix(graphs.len(), self.encoder.config().hidden_dim, rows)
    }

    fn logits<'t>(&self, tape: &'t Tape, graph_emb: Var<'t>) -> Result<Var<'t>> {
        let [w, b] = self
            .classifier
            .ok_or_else(|| Error::Contract("model has no classifier".into()))?;
        linear(tape, &self.store, graph_emb, w, b)
    }

    pub fn predict(&self, graphs: &[Graph]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(graphs.len());
        for chunk in graphs.chunks(EMBED_CHUNK) {
            let tape = Tape::new();
            let refs: Vec<&Graph> = chunk.iter().collect();
            let emb = self.encoder.forward(&tape, &self.store, &GraphInput::from_graphs(&tape, &refs))?;
            let logits = self.logits(&tape, emb.graph)?.to_tensor();
            for i in 0..logits.rows() {
                let row = logits.row(i);
                let mut best = 0;
                for c in 1..row.len() {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                out.push(best);
            }
        }
        Ok(out)
    }

    /// Largest absolute gradient per head, over both generators.
    fn head_grads(&self) -> BTreeMap<String, f64> {
        Head::ALL
            .iter()
            .map(|&h| {
                let g = self
                    .generators
                    .iter()
                    .flat_map(|gen| gen.head_params(h))
                    .map(|id| self.store.grad(id).max_abs())
                    .fold(0.0, f64::max);
                (h.name().to_string(), g)
            })
            .collect()
    }
}

/// Everything a finished run hands back.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub optimizer: AdamState,
    pub report: RunReport,
}

fn check_inputs(dataset: &Dataset, partitions: &[Partition]) -> Result<()> {
    if dataset.len() < 2 {
        return Err(Error::Contract(format!("training needs at least two graphs, got {}", dataset.len())));
    }
    if partitions.len() != dataset.len() {
        return Err(Error::Contract(format!(
            "{} partitions for {} graphs",
            partitions.len(),
            dataset.len()
        )));
    }
    for (i, (g, p)) in dataset.graphs().iter().zip(partitions).enumerate() {
        if p.num_nodes() != g.num_nodes() {
            return Err(Error::Contract(format!("partition {i} does not cover graph {i}")));
        }
    }
    Ok(())
}

fn step_params(model: &mut Model, state: &mut AdamState, adam: &AdamConfig) -> Result<()> {
    for id in model.store.ids() {
        if !model.store.grad(id).is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite gradient in `{}`",
                model.store.name(id)
            )));
        }
    }
    adam_step(&mut model.store, state, adam)?;
    if !model.store.all_finite() {
        return Err(Error::Divergence("parameters left the finite range".into()));
    }
    Ok(())
}

/// Loss of one contrastive batch; `labels` enables the classification term.
fn batch_loss<'t>(
    tape: &'t Tape,
    model: &Model,
    dataset: &Dataset,
    partitions: &[Partition],
    idx: &[usize],
    labels: Option<&[Option<usize>]>,
    epoch: usize,
    cfg: &TrainConfig,
) -> Result<LossBundle<'t>> {
    let opts = ViewOptions {
        temperature: cfg.tau_gumbel_at(epoch),
        neg_ratio: cfg.neg_ratio,
        ..ViewOptions::default()
    };
    let mut views: Vec<AugmentedView<'t>> = Vec::with_capacity(2 * idx.len());
    for &i in idx {
        let mut rng = substream(cfg.seed, &[0x30, epoch as u64, i as u64]);
        for gen in &model.generators {
            views.push(generate_view(tape, &model.store, gen, &dataset.graphs()[i], &partitions[i], &opts, &mut rng)?);
        }
    }
    let refs: Vec<&AugmentedView<'t>> = views.iter().collect();
    let emb = model.encoder.forward(tape, &model.store, &views_to_input(&refs)?)?;
    let cl = nt_xent(emb.projected, cfg.tau_ntxent)?;
    let mut sim = similarity_loss(&views[0], &views[1])?;
    for j in 1..idx.len() {
        sim = sim.add(similarity_loss(&views[2 * j], &views[2 * j + 1])?)?;
    }
    let sim = sim.mul_scalar(1.0 / idx.len() as f64);

    let mut cls = None;
    if let Some(labels) = labels {
        let pos: Vec<usize> = (0..idx.len()).filter(|&j| labels[idx[j]].is_some()).collect();
        if !pos.is_empty() {
            let ys: Vec<usize> = pos.iter().map(|&j| labels[idx[j]].expect("filtered")).collect();
            let originals: Vec<&Graph> = pos.iter().map(|&j| &dataset.graphs()[idx[j]]).collect();
            let e0 = model.encoder.forward(tape, &model.store, &GraphInput::from_graphs(tape, &originals))?.graph;
            let e1 = emb.graph.gather(&pos.iter().map(|&j| 2 * j).collect::<Vec<_>>())?;
            let e2 = emb.graph.gather(&pos.iter().map(|&j| 2 * j + 1).collect::<Vec<_>>())?;
            let logits = [model.logits(tape, e0)?, model.logits(tape, e1)?, model.logits(tape, e2)?];
            cls = Some(classification_loss(logits, &ys)?);
        }
    }
    LossBundle::new(cl, sim, cls, cfg.weights())
}

fn mean_values(values: &[LossValues]) -> LossValues {
    let n = values.len().max(1) as f64;
    let cls: Vec<f64> = values.iter().filter_map(|v| v.cls).collect();
    LossValues {
        cl: values.iter().map(|v| v.cl).sum::<f64>() / n,
        sim: values.iter().map(|v| v.sim).sum::<f64>() / n,
        cls: (!cls.is_empty()).then(|| cls.iter().sum::<f64>() / cls.len() as f64),
        total: values.iter().map(|v| v.total).sum::<f64>() / n,
    }
}

/// Joint contrastive training of encoder and generators.
fn contrastive_epochs(
    model: &mut Model,
    state: &mut AdamState,
    dataset: &Dataset,
    partitions: &[Partition],
    labels: Option<&[Option<usize>]>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    let adam = cfg.adam();
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut rng = substream(cfg.seed, &[0x31, epoch as u64]);
        let batches = batch_indices(dataset.len(), cfg.batch_size, &mut rng)?;
        let mut values = Vec::with_capacity(batches.len());
        let mut heads: BTreeMap<String, f64> = Head::ALL.iter().map(|h| (h.name().to_string(), 0.0)).collect();
        for idx in &batches {
            let tape = Tape::new();
            let bundle = batch_loss(&tape, model, dataset, partitions, idx, labels, epoch, cfg)
                .map_err(|e| match e {
                    Error::Divergence(msg) => Error::Divergence(format!("epoch {epoch}: {msg}")),
                    other => other,
                })?;
            values.push(bundle.values());
            tape.backward(bundle.total)?;
            model.store.zero_grad();
            model.store.accumulate_grads(&tape);
            for (name, g) in model.head_grads() {
                let slot = heads.get_mut(&name).expect("all heads listed");
                *slot = slot.max(g);
            }
            step_params(model, state, &adam)?;
        }
        records.push(EpochRecord {
            epoch,
            batches: batches.len(),
            tau_gumbel: cfg.tau_gumbel_at(epoch),
            loss: mean_values(&values),
            head_grad: heads,
            wall_clock_s: start.elapsed().as_secs_f64(),
        });
    }
    Ok(records)
}

fn complete_labels(dataset: &Dataset) -> Option<Vec<usize>> {
    dataset.labels().into_iter().collect()
}

/// Unsupervised training followed by a linear probe when labels are present.
pub fn train_unsupervised(dataset: &Dataset, partitions: &[Partition], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_inputs(dataset, partitions)?;
    let mut model = Model::new(cfg, dataset.feature_dim(), dataset.num_classes(), false)?;
    let mut state = AdamState::new(&model.store);
    let epochs = contrastive_epochs(&mut model, &mut state, dataset, partitions, None, cfg)?;
    let eval = match complete_labels(dataset) {
        Some(labels) if cfg.probe_folds >= 2 && dataset.num_classes() >= 2 => {
            let emb = model.embed(dataset.graphs())?;
            Some(linear_probe_eval(&emb, &labels, cfg.probe_folds.min(dataset.len()), cfg.probe_l2, cfg.seed)?)
        }
        _ => None,
    };
    let report = RunReport::new(cfg, dataset, Some(stats_of(dataset, partitions)), epochs, Vec::new(), eval);
    Ok(TrainOutcome {
        model,
        optimizer: state,
        report,
    })
}

/// Per-class `round(fraction · n_c)` labelled graphs; the rest are held out.
pub fn stratified_split(labels: &[usize], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Parameter(format!("label fraction must lie in (0, 1], got {fraction}")));
    }
    let classes = labels.iter().copied().max().map_or(0, |c| c + 1);
    let mut rng = substream(seed, &[0x41]);
    let (mut labeled, mut rest) = (Vec::new(), Vec::new());
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        let take = (fraction * members.len() as f64).round() as usize;
        if take == 0 {
            return Err(Error::Stratification(format!(
                "class {c} has {} graphs; fraction {fraction} labels none of them",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        labeled.extend_from_slice(&members[..take]);
        rest.extend_from_slice(&members[take..]);
    }
    labeled.sort_unstable();
    rest.sort_unstable();
    Ok((labeled, rest))
}

/// Cross-entropy fine-tuning of encoder and classifier on the labelled graphs.
fn finetune(model: &mut Model, dataset: &Dataset, labeled: &[usize], labels: &[usize], cfg: &TrainConfig) -> Result<Vec<f64>> {
    let adam = AdamConfig {
        lr: cfg.finetune_lr,
        ..cfg.adam()
    };
    let mut state = AdamState::new(&model.store);
    let mut losses = Vec::with_capacity(cfg.finetune_epochs);
    for epoch in 0..cfg.finetune_epochs {
        let mut rng = substream(cfg.seed, &[0x40, epoch as u64]);
        let groups = if labeled.len() < 2 {
            vec![(0..labeled.len()).collect()]
        } else {
            batch_indices(labeled.len(), cfg.batch_size, &mut rng)?
        };
        let mut total = 0.0;
        for group in &groups {
            let idx: Vec<usize> = group.iter().map(|&j| labeled[j]).collect();
            let tape = Tape::new();
            let graphs: Vec<&Graph> = idx.iter().map(|&i| &dataset.graphs()[i]).collect();
            let emb = model.encoder.forward(&tape, &model.store, &GraphInput::from_graphs(&tape, &graphs))?;
            let ys: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let loss = cross_entropy(model.logits(&tape, emb.graph)?, &ys)?;
            if !loss.item().is_finite() {
                return Err(Error::Divergence(format!("fine-tune epoch {epoch}: non-finite loss")));
            }
            total += loss.item();
            tape.backward(loss)?;
            model.store.zero_grad();
            model.store.accumulate_grads(&tape);
            step_params(model, &mut state, &adam)?;
        }
        losses.push(total / groups.len().max(1) as f64);
    }
    Ok(losses)
}

fn semi(dataset: &Dataset, partitions: Option<&[Partition]>, fraction: f64, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let labels = complete_labels(dataset)
        .ok_or_else(|| Error::Stratification("semi-supervised training needs every graph labelled".into()))?;
    let (labeled, rest) = stratified_split(&labels, fraction, cfg.seed)?;
    let mut model = Model::new(cfg, dataset.feature_dim(), dataset.num_classes(), true)?;
    let mut state = AdamState::new(&model.store);
    let mut epochs = Vec::new();
    if let Some(partitions) = partitions {
        check_inputs(dataset, partitions)?;
        let mut known = vec![None; dataset.len()];
        for &i in &labeled {
            known[i] = Some(labels[i]);
        }
        epochs = contrastive_epochs(&mut model, &mut state, dataset, partitions, Some(&known), cfg)?;
    }
    let finetune_loss = finetune(&mut model, dataset, &labeled, &labels, cfg)?;
    let test = if rest.is_empty() { &labeled } else { &rest };
    let graphs: Vec<Graph> = test.iter().map(|&i| dataset.graphs()[i].clone()).collect();
    let pred = model.predict(&graphs)?;
    let correct = test.iter().zip(pred).filter(|&(&i, p)| labels[i] == p).count();
    let eval = EvalSummary::from_scores("holdout-accuracy", vec![correct as f64 / test.len() as f64]);
    let stats = partitions.map(|p| stats_of(dataset, p));
    let report = RunReport::new(cfg, dataset, stats, epochs, finetune_loss, Some(eval));
    Ok(TrainOutcome {
        model,
        optimizer: state,
        report,
    })
}

/// Stage 1: contrastive pre-training with the classification term on the
/// labelled subset. Stage 2: fine-tuning on the labelled subset alone.
/// Accuracy is measured on the graphs left unlabelled.
pub fn train_semisupervised(
    dataset: &Dataset,
    partitions: &[Partition],
    label_fraction: f64,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    semi(dataset, Some(partitions), label_fraction, cfg)
}

/// The same split and fine-tuning without any pre-training.
pub fn supervised_baseline(dataset: &Dataset, label_fraction: f64, cfg: &TrainConfig) -> Result<TrainOutcome> {
    semi(dataset, None, label_fraction, cfg)
}

#[cfg(test)]
mod tests;
