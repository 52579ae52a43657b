//! Labeled datasets, subject-wise k-fold splitting, the training/evaluation
//! protocol, and paired-seed experiment runs comparing augmentation
//! pipelines.
//!
//! Reporting rule: per fold, the final metric is the median of the last ten
//! epoch test accuracies; fold metrics are then averaged. Across pipelines,
//! fold assignments, model initializations, and augmentation streams are
//! identical (same master seed), so metric differences are attributable to
//! the augmentation alone.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::augment::AugmentPipeline;
use crate::cnn::{
    adam_step, softmax_xent, AdamConfig, AdamState, Architecture, ModelParams,
    DEFAULT_BN_EPS, DEFAULT_BN_MOMENTUM,
};
use crate::error::{Error, Result};
use crate::rng::{derive_stream, RngStream};
use crate::tensor::Tensor;
use crate::window::{Window, CHANNELS};

/// The two motor-state classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Brady,
    Dysk,
}

impl Label {
    pub fn index(self) -> u8 {
        match self {
            Label::Brady => 0,
            Label::Dysk => 1,
        }
    }

    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            0 => Ok(Label::Brady),
            1 => Ok(Label::Dysk),
            _ => Err(Error::invalid_argument(format!("label index {i} out of range"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Brady => "brady",
            Label::Dysk => "dysk",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "brady" => Ok(Label::Brady),
            "dysk" => Ok(Label::Dysk),
            other => Err(Error::invalid_argument(format!("unknown label \"{other}\""))),
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One labeled window with its subject.
#[derive(Debug, Clone)]
pub struct Record {
    pub window: Window,
    pub label: Label,
    pub subject_id: String,
}

/// A collection of labeled windows plus provenance. The full constructor
/// enforces the invariants of a trainable dataset (uniform geometry, at
/// least two subjects, both labels present); fold views use
/// [`LabeledDataset::subset`], which only requires uniform geometry.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    records: Vec<Record>,
    provenance: String,
}

impl LabeledDataset {
    pub fn new(records: Vec<Record>, provenance: impl Into<String>) -> Result<Self> {
        let d = LabeledDataset::subset(records, provenance)?;
        if d.subjects().len() < 2 {
            return Err(Error::invalid_argument("dataset needs at least 2 subjects"));
        }
        let has = |l: Label| d.records.iter().any(|r| r.label == l);
        if !has(Label::Brady) || !has(Label::Dysk) {
            return Err(Error::invalid_argument("dataset must contain both labels"));
        }
        Ok(d)
    }

    /// Relaxed constructor for subsets (single-subject folds are fine).
    pub fn subset(records: Vec<Record>, provenance: impl Into<String>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid_argument("dataset must not be empty"));
        }
        let len = records[0].window.len();
        let rate = records[0].window.rate_hz();
        for r in &records {
            if r.window.len() != len || r.window.rate_hz() != rate {
                return Err(Error::invalid_argument(
                    "all windows must share one length and rate",
                ));
            }
        }
        Ok(LabeledDataset {
            records,
            provenance: provenance.into(),
        })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.records[0].window.len()
    }

    pub fn rate_hz(&self) -> f64 {
        self.records[0].window.rate_hz()
    }

    /// Sorted unique subject ids.
    pub fn subjects(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.subject_id.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    /// Records whose subject is in `ids`, as a relaxed subset view.
    pub fn filter_subjects(&self, ids: &[String]) -> Result<LabeledDataset> {
        let keep: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        let records: Vec<Record> = self
            .records
            .iter()
            .filter(|r| keep.contains(r.subject_id.as_str()))
            .cloned()
            .collect();
        LabeledDataset::subset(records, format!("{} [subjects {:?}]", self.provenance, ids))
    }
}

/// Disjoint subject groups covering the whole dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    folds: Vec<Vec<String>>,
}

impl FoldSplit {
    pub fn folds(&self) -> &[Vec<String>] {
        &self.folds
    }

    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// All subjects not in fold `i` (the training side).
    pub fn complement(&self, i: usize) -> Vec<String> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect()
    }
}

/// Shuffle the subjects with `rng`, then deal them round-robin into `k`
/// folds, so fold sizes differ by at most one subject.
pub fn split_subjectwise(d: &LabeledDataset, k: usize, rng: &mut RngStream) -> Result<FoldSplit> {
    let mut subjects = d.subjects();
    if k == 0 || k > subjects.len() {
        return Err(Error::invalid_argument(format!(
            "k = {k} must be in [1, {}]",
            subjects.len()
        )));
    }
    rng.shuffle(&mut subjects);
    let mut folds = vec![Vec::new(); k];
    for (i, s) in subjects.into_iter().enumerate() {
        folds[i % k].push(s);
    }
    Ok(FoldSplit { folds })
}

/// Fraction of exact matches.
pub fn accuracy(predictions: &[u8], labels: &[u8]) -> Result<f64> {
    if predictions.len() != labels.len() || predictions.is_empty() {
        return Err(Error::invalid_argument(format!(
            "prediction/label lengths {} vs {} invalid",
            predictions.len(),
            labels.len()
        )));
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Median of the last `n` values (all values when fewer); the median of an
/// even count is the mean of the two middle values.
pub fn median_of_last(values: &[f64], n: usize) -> f64 {
    let tail = &values[values.len().saturating_sub(n)..];
    let mut sorted = tail.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}

/// Training hyperparameters. The architecture is chosen from the window
/// length (full model at 6960 samples, desk model otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            adam: AdamConfig::default(),
            bn_momentum: DEFAULT_BN_MOMENTUM,
            bn_eps: DEFAULT_BN_EPS,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid_config("epochs must be >= 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid_config(
                "batch_size must be >= 2 (train-mode batch norm)",
            ));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return Err(Error::invalid_config("bn_momentum must be in (0, 1]"));
        }
        if !(self.bn_eps > 0.0) {
            return Err(Error::invalid_config("bn_eps must be > 0"));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::invalid_config("lr must be > 0"));
        }
        Ok(())
    }
}

/// One row of the per-epoch metrics record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

/// Outcome of training one fold.
#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub metrics: Vec<EpochMetrics>,
    /// Median of the last ten epoch train accuracies.
    pub final_train_acc: f64,
    /// Median of the last ten epoch test accuracies.
    pub final_test_acc: f64,
    pub params: ModelParams,
}

// Stream-index namespaces: the purpose tag lives in the top byte so the
// split, init, augmentation, and shuffle streams can never collide.
const NS_SPLIT: u64 = 1 << 56;
const NS_INIT: u64 = 2 << 56;
const NS_AUG: u64 = 3 << 56;
const NS_SHUFFLE: u64 = 4 << 56;
const FOLD_SHIFT: u32 = 48;

/// Stream for augmenting window `ordinal` of `n_train` windows in a given
/// epoch and fold: index = ordinal + epoch * n_train, within the fold's
/// augmentation namespace. Order-independent, so batches may be prepared in
/// parallel.
pub fn augment_stream(
    master_seed: u64,
    fold: u64,
    epoch: usize,
    n_train: usize,
    ordinal: usize,
) -> RngStream {
    let payload = (epoch * n_train + ordinal) as u64;
    derive_stream(master_seed, NS_AUG | (fold << FOLD_SHIFT) | payload)
}

/// Apply a pipeline to every window of a dataset, one derived stream per
/// window (`stream index = ordinal + epoch * dataset_size`). Labels and
/// subject ids are unchanged.
pub fn augment_dataset(
    pipeline: &AugmentPipeline,
    d: &LabeledDataset,
    master_seed: u64,
    epoch: usize,
) -> Result<LabeledDataset> {
    let n = d.len();
    let records = d
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut rng = derive_stream(master_seed, (epoch * n + i) as u64);
            Ok(Record {
                window: pipeline.apply(&r.window, &mut rng)?,
                label: r.label,
                subject_id: r.subject_id.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::subset(records, format!("{} [augmented {}]", d.provenance(), pipeline.name()))
}

fn batch_tensor(windows: &[&Window]) -> Tensor {
    let t_len = windows[0].len();
    let mut data = Vec::with_capacity(windows.len() * t_len * CHANNELS);
    for w in windows {
        data.extend_from_slice(w.samples().data());
    }
    Tensor::new(vec![windows.len(), 1, t_len, CHANNELS], data).expect("batch shape")
}

fn argmax_row(row: &[f64]) -> u8 {
    if row[1] > row[0] {
        1
    } else {
        0
    }
}

/// Eval-mode accuracy of `params` on a dataset, evaluated in chunks.
pub fn evaluate(params: &ModelParams, d: &LabeledDataset, bn_eps: f64) -> Result<f64> {
    let mut preds = Vec::with_capacity(d.len());
    let labels: Vec<u8> = d.records().iter().map(|r| r.label.index()).collect();
    for chunk in d.records().chunks(64) {
        let windows: Vec<&Window> = chunk.iter().map(|r| &r.window).collect();
        let logits = params.forward_eval(&batch_tensor(&windows), bn_eps)?;
        for row in logits.data().chunks(2) {
            preds.push(argmax_row(row));
        }
    }
    accuracy(&preds, &labels)
}

/// Train on one fold: every epoch the training windows are freshly
/// augmented (test windows never are), minibatches are shuffled, and
/// train/test accuracies recorded. The final metric is the median of the
/// last ten epoch test accuracies.
pub fn run_fold(
    train: &LabeledDataset,
    test: &LabeledDataset,
    pipeline: &AugmentPipeline,
    cfg: &TrainConfig,
    master_seed: u64,
    fold_index: u64,
) -> Result<FoldResult> {
    cfg.validate()?;
    let train_subjects: BTreeSet<String> = train.subjects().into_iter().collect();
    for s in test.subjects() {
        if train_subjects.contains(&s) {
            return Err(Error::invalid_argument(format!(
                "subject {s} appears in both train and test sets"
            )));
        }
    }
    if train.window_len() != test.window_len() {
        return Err(Error::invalid_argument("train/test window lengths differ"));
    }
    let has = |l: Label| train.records().iter().any(|r| r.label == l);
    if !has(Label::Brady) || !has(Label::Dysk) {
        return Err(Error::invalid_argument("training fold must contain both labels"));
    }

    let arch = Architecture::for_window_len(train.window_len());
    let mut params = ModelParams::init(
        &arch,
        &mut derive_stream(master_seed, NS_INIT | fold_index),
    );
    let mut adam = AdamState::new(&params);
    let n_train = train.len();

    let mut metrics = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        // Fresh augmentation parameters per instance per epoch.
        let augmented: Vec<Window> = train
            .records()
            .par_iter()
            .enumerate()
            .map(|(i, r)| {
                let mut rng = augment_stream(master_seed, fold_index, epoch, n_train, i);
                pipeline.apply(&r.window, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut order: Vec<usize> = (0..n_train).collect();
        let mut shuffle_rng =
            derive_stream(master_seed, NS_SHUFFLE | (fold_index << FOLD_SHIFT) | epoch as u64);
        shuffle_rng.shuffle(&mut order);

        let mut correct = 0usize;
        let mut seen = 0usize;
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                // A trailing single-sample batch cannot be batch-normalized.
                continue;
            }
            let windows: Vec<&Window> = chunk.iter().map(|&i| &augmented[i]).collect();
            let labels: Vec<u8> = chunk
                .iter()
                .map(|&i| train.records()[i].label.index())
                .collect();
            let batch = batch_tensor(&windows);
            let (logits, cache) = params.forward_train(&batch, cfg.bn_eps)?;
            let (loss, dlogits, _) = softmax_xent(&logits, &labels)?;
            for (row, &y) in logits.data().chunks(2).zip(&labels) {
                correct += usize::from(argmax_row(row) == y);
            }
            seen += chunk.len();
            loss_sum += loss * chunk.len() as f64;
            let grads = params.backward(&cache, &dlogits)?;
            adam_step(&mut params, &grads, &mut adam, &cfg.adam);
            params.update_running_stats(&cache, cfg.bn_momentum);
        }

        let train_acc = if seen > 0 { correct as f64 / seen as f64 } else { 0.0 };
        let train_loss = if seen > 0 { loss_sum / seen as f64 } else { 0.0 };
        let test_acc = evaluate(&params, test, cfg.bn_eps)?;
        metrics.push(EpochMetrics {
            epoch,
            train_loss,
            train_acc,
            test_acc,
        });
    }

    let test_accs: Vec<f64> = metrics.iter().map(|m| m.test_acc).collect();
    let train_accs: Vec<f64> = metrics.iter().map(|m| m.train_acc).collect();
    Ok(FoldResult {
        fold: fold_index as usize,
        metrics,
        final_train_acc: median_of_last(&train_accs, 10),
        final_test_acc: median_of_last(&test_accs, 10),
        params,
    })
}

/// Results of one pipeline across all folds.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub name: String,
    pub folds: Vec<FoldResult>,
    /// Mean over folds of the median-of-last-10 train accuracy.
    pub mean_train_acc: f64,
    /// Mean over folds of the median-of-last-10 test accuracy.
    pub mean_test_acc: f64,
}

/// Full experiment output: one outcome per pipeline under identical fold
/// splits and per-fold seeds.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub pipelines: Vec<PipelineOutcome>,
    pub master_seed: u64,
    pub k: usize,
    pub config: TrainConfig,
    pub dataset_provenance: String,
}

/// Run k-fold subject-wise cross-validation for each pipeline. Fold splits
/// and per-fold model initializations depend only on `seed`, so runs with
/// different pipelines are paired.
pub fn run_experiment(
    d: &LabeledDataset,
    pipelines: &[AugmentPipeline],
    k: usize,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    if pipelines.is_empty() {
        return Err(Error::invalid_argument("at least one pipeline required"));
    }
    let split = split_subjectwise(d, k, &mut derive_stream(seed, NS_SPLIT))?;
    let mut outcomes = Vec::with_capacity(pipelines.len());
    for pipeline in pipelines {
        let folds: Vec<FoldResult> = (0..k)
            .into_par_iter()
            .map(|f| {
                let test = d.filter_subjects(&split.folds()[f])?;
                let train = d.filter_subjects(&split.complement(f))?;
                run_fold(&train, &test, pipeline, cfg, seed, f as u64)
            })
            .collect::<Result<Vec<_>>>()?;
        let mean_train_acc =
            folds.iter().map(|r| r.final_train_acc).sum::<f64>() / k as f64;
        let mean_test_acc = folds.iter().map(|r| r.final_test_acc).sum::<f64>() / k as f64;
        outcomes.push(PipelineOutcome {
            name: pipeline.name(),
            folds,
            mean_train_acc,
            mean_test_acc,
        });
    }
    Ok(ExperimentReport {
        pipelines: outcomes,
        master_seed: seed,
        k,
        config: cfg.clone(),
        dataset_provenance: d.provenance().to_string(),
    })
}
