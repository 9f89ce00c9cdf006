//! Model evaluation: confusion metrics, ROC AUC, stratified cross-validation,
//! repeated holdout, cross-dataset tests, and the per-bin timing report.
//!
//! AUC is computed by two independent routes every time — the Mann-Whitney
//! midrank statistic and trapezoidal integration of the ROC curve — and the
//! two are asserted to agree before a value is returned. Zero-denominator
//! precision/recall/F1 are reported as 0 with an explicit `*_defined: false`
//! flag instead of NaN.
//!
//! Resampling procedures (folds, holdout splits) are stratified per class and
//! driven by named deterministic RNG streams, so reruns with the same seed
//! reproduce the same splits exactly.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blr::{self, BlrConfig, BlrError, BlrModel};
use crate::eventlog::{EventLog, Topic};
use crate::features::{Dataset, TimeBin};
use crate::forest::{self, ForestConfig, ForestError};
use crate::rngs;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("labels and scores differ in length: {labels} vs {scores}")]
    LengthMismatch { labels: usize, scores: usize },
    #[error("no samples to evaluate")]
    EmptyInput,
    #[error("labels must be 0 or 1, got {0}")]
    InvalidLabel(u8),
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error("need both classes present")]
    SingleClass,
    #[error("class {class} has {count} samples, need at least {needed}")]
    TooFewPerClass { class: u8, count: usize, needed: usize },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error(transparent)]
    Blr(#[from] BlrError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("serialization failed: {0}")]
    Serialize(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Confusion counts and the derived rates for one evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub true_positives: u64,
    pub false_positives: u64,
    pub true_negatives: u64,
    pub false_negatives: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// False when no positive predictions were made.
    pub precision_defined: bool,
    /// False when no positive labels were present.
    pub recall_defined: bool,
    /// False when precision + recall is zero or either is undefined.
    pub f1_defined: bool,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn metrics_from_confusion(tp: u64, fp: u64, tn: u64, fn_: u64) -> BinaryMetrics {
    let precision_defined = tp + fp > 0;
    let recall_defined = tp + fn_ > 0;
    let precision = if precision_defined {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if recall_defined {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let f1_defined = precision_defined && recall_defined && precision + recall > 0.0;
    BinaryMetrics {
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fn_,
        precision,
        recall,
        f1: f1_score(precision, recall),
        precision_defined,
        recall_defined,
        f1_defined,
    }
}

/// Precision/recall/F1 of hard predictions against labels.
pub fn metrics(labels: &[u8], predictions: &[u8]) -> Result<BinaryMetrics, EvalError> {
    if labels.len() != predictions.len() {
        return Err(EvalError::LengthMismatch {
            labels: labels.len(),
            scores: predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if let Some(&bad) = labels.iter().chain(predictions).find(|&&v| v > 1) {
        return Err(EvalError::InvalidLabel(bad));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (&y, &yhat) in labels.iter().zip(predictions) {
        match (y, yhat) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (0, 0) => tn += 1,
            (1, 0) => fn_ += 1,
            _ => unreachable!(),
        }
    }
    Ok(metrics_from_confusion(tp, fp, tn, fn_))
}

fn validate_scored(labels: &[u8], scores: &[f64]) -> Result<(usize, usize), EvalError> {
    if labels.len() != scores.len() {
        return Err(EvalError::LengthMismatch {
            labels: labels.len(),
            scores: scores.len(),
        });
    }
    if labels.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if let Some(&bad) = labels.iter().find(|&&v| v > 1) {
        return Err(EvalError::InvalidLabel(bad));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(i));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    Ok((n_pos, n_neg))
}

/// Mann-Whitney AUC with midranks for tied scores.
fn auc_by_ranks(labels: &[u8], scores: &[f64], n_pos: usize, n_neg: usize) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based positions i+1 ..= j+1 share the midrank.
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    u / (n_pos as f64 * n_neg as f64)
}

/// Trapezoidal area under the ROC curve, sweeping thresholds from high to
/// low and emitting one curve point per distinct score.
fn auc_by_trapezoid(labels: &[u8], scores: &[f64], n_pos: usize, n_neg: usize) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0u64, 0u64);
    let (mut tp_prev, mut fp_prev) = (0u64, 0u64);
    let mut area = 0.0f64;
    let mut prev_score = f64::INFINITY;
    for &idx in &order {
        if scores[idx] != prev_score {
            area += (fp - fp_prev) as f64 * (tp + tp_prev) as f64 / 2.0;
            fp_prev = fp;
            tp_prev = tp;
            prev_score = scores[idx];
        }
        if labels[idx] == 1 {
            tp += 1;
        } else {
            fp += 1;
        }
    }
    area += (fp - fp_prev) as f64 * (tp + tp_prev) as f64 / 2.0;
    area / (n_pos as f64 * n_neg as f64)
}

/// Both AUC computations side by side: `(midrank, trapezoid)`.
///
/// Exposed so conformance tests outside this module can check the agreement
/// of the two routes directly instead of relying on the internal assertion.
#[doc(hidden)]
pub fn auc_roc_routes(labels: &[u8], scores: &[f64]) -> Result<(f64, f64), EvalError> {
    let (n_pos, n_neg) = validate_scored(labels, scores)?;
    let by_ranks = auc_by_ranks(labels, scores, n_pos, n_neg);
    let by_trapezoid = auc_by_trapezoid(labels, scores, n_pos, n_neg);
    Ok((by_ranks, by_trapezoid))
}

/// Area under the ROC curve.
///
/// Computed by two independent routes (midrank statistic and trapezoidal
/// integration) that are asserted to agree to 1e-12 on every call; the
/// midrank value is returned. Errors if only one class is present.
pub fn auc_roc(labels: &[u8], scores: &[f64]) -> Result<f64, EvalError> {
    let (by_ranks, by_trapezoid) = auc_roc_routes(labels, scores)?;
    assert!(
        (by_ranks - by_trapezoid).abs() <= 1e-12,
        "AUC routes disagree: ranks {by_ranks} vs trapezoid {by_trapezoid}"
    );
    Ok(by_ranks)
}

/// Splits indices into `k` folds with per-class round-robin assignment after
/// a seeded shuffle. Every fold receives at least one sample of each class
/// (each class must have at least `k` samples). Folds are sorted ascending.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 {
        return Err(EvalError::BadConfig(format!("k must be at least 2, got {k}")));
    }
    if let Some(&bad) = labels.iter().find(|&&v| v > 1) {
        return Err(EvalError::InvalidLabel(bad));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y as usize].push(i);
    }
    for (class, list) in by_class.iter().enumerate() {
        if list.len() < k {
            return Err(EvalError::TooFewPerClass {
                class: class as u8,
                count: list.len(),
                needed: k,
            });
        }
    }
    let mut rng = rngs::stream_rng(seed, "folds", 0);
    let mut folds = vec![Vec::new(); k];
    for list in &mut by_class {
        list.shuffle(&mut rng);
        for (i, &idx) in list.iter().enumerate() {
            folds[i % k].push(idx);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Anything that can produce a score in [0, 1] for a feature vector.
pub trait Scorer: Send {
    fn score(&self, x: &[f64]) -> Result<f64, EvalError>;
}

/// A training procedure that fits on the given subset of a dataset's rows
/// and returns a scorer. Implementations must only look at `train_idx` rows.
pub trait Learner: Sync {
    fn fit(&self, ds: &Dataset, train_idx: &[usize]) -> Result<Box<dyn Scorer>, EvalError>;
}

/// Posterior-mode logistic regression, optionally preceded by in-fold
/// forest-based selection of the top-`k` features (the forest is grown on
/// the training rows only, so no information leaks from the test fold).
pub struct BlrLearner {
    pub config: BlrConfig,
    pub selection: Option<TopKSelection>,
}

#[derive(Clone, Copy, Debug)]
pub struct TopKSelection {
    pub forest: ForestConfig,
    pub k: usize,
    pub rng_seed: u64,
}

impl BlrLearner {
    pub fn new(config: BlrConfig) -> Self {
        BlrLearner {
            config,
            selection: None,
        }
    }

    pub fn with_selection(config: BlrConfig, selection: TopKSelection) -> Self {
        BlrLearner {
            config,
            selection: Some(selection),
        }
    }
}

struct BlrScorer {
    model: BlrModel,
    /// Columns of the full schema the model consumes, ascending; `None`
    /// means all of them.
    columns: Option<Vec<usize>>,
    input_len: usize,
}

impl Scorer for BlrScorer {
    fn score(&self, x: &[f64]) -> Result<f64, EvalError> {
        if x.len() != self.input_len {
            return Err(EvalError::Blr(BlrError::DimensionMismatch {
                expected: self.input_len,
                got: x.len(),
            }));
        }
        match &self.columns {
            None => Ok(self.model.predict_proba(x)?),
            Some(cols) => {
                let projected: Vec<f64> = cols.iter().map(|&j| x[j]).collect();
                Ok(self.model.predict_proba(&projected)?)
            }
        }
    }
}

fn gather<'a>(ds: &'a Dataset, idx: &[usize]) -> (Vec<&'a [f64]>, Vec<u8>) {
    let rows = idx.iter().map(|&i| ds.samples[i].x.as_slice()).collect();
    let labels = idx.iter().map(|&i| ds.samples[i].label).collect();
    (rows, labels)
}

impl Learner for BlrLearner {
    fn fit(&self, ds: &Dataset, train_idx: &[usize]) -> Result<Box<dyn Scorer>, EvalError> {
        let (rows, labels) = gather(ds, train_idx);
        match &self.selection {
            None => {
                let model = blr::fit_matrix(&ds.schema, &rows, &labels, &self.config)?;
                Ok(Box::new(BlrScorer {
                    model,
                    columns: None,
                    input_len: ds.schema.len(),
                }))
            }
            Some(sel) => {
                let grown =
                    forest::fit_matrix(&ds.schema, &rows, &labels, &sel.forest, sel.rng_seed)?;
                let cols = forest::select_top_k(&grown.importance_ranking(), sel.k)?;
                let names: Vec<String> = cols.iter().map(|&j| ds.schema[j].clone()).collect();
                let projected: Vec<Vec<f64>> = rows
                    .iter()
                    .map(|r| cols.iter().map(|&j| r[j]).collect())
                    .collect();
                let views: Vec<&[f64]> = projected.iter().map(Vec::as_slice).collect();
                let model = blr::fit_matrix(&names, &views, &labels, &self.config)?;
                Ok(Box::new(BlrScorer {
                    model,
                    columns: Some(cols),
                    input_len: ds.schema.len(),
                }))
            }
        }
    }
}

/// Random forest as the classifier itself.
pub struct ForestLearner {
    pub config: ForestConfig,
    pub rng_seed: u64,
}

struct ForestScorer {
    forest: forest::RandomForest,
}

impl Scorer for ForestScorer {
    fn score(&self, x: &[f64]) -> Result<f64, EvalError> {
        Ok(self.forest.predict_proba(x)?)
    }
}

impl Learner for ForestLearner {
    fn fit(&self, ds: &Dataset, train_idx: &[usize]) -> Result<Box<dyn Scorer>, EvalError> {
        let (rows, labels) = gather(ds, train_idx);
        let grown = forest::fit_matrix(&ds.schema, &rows, &labels, &self.config, self.rng_seed)?;
        Ok(Box::new(ForestScorer { forest: grown }))
    }
}

/// Ignores the data and scores every input with a fixed value. Useful as a
/// baseline and in tests.
pub struct ConstantLearner {
    pub value: f64,
}

struct ConstantScorer(f64);

impl Scorer for ConstantScorer {
    fn score(&self, _x: &[f64]) -> Result<f64, EvalError> {
        Ok(self.0)
    }
}

impl Learner for ConstantLearner {
    fn fit(&self, _ds: &Dataset, _train_idx: &[usize]) -> Result<Box<dyn Scorer>, EvalError> {
        Ok(Box::new(ConstantScorer(self.value)))
    }
}

/// Records every training subset it is given; scores constant. Lets tests
/// verify that resampling procedures never leak test rows into training.
pub struct RecordingLearner {
    pub seen_train_sets: Mutex<Vec<Vec<usize>>>,
}

impl RecordingLearner {
    pub fn new() -> Self {
        RecordingLearner {
            seen_train_sets: Mutex::new(Vec::new()),
        }
    }
}

impl Default for RecordingLearner {
    fn default() -> Self {
        Self::new()
    }
}

impl Learner for RecordingLearner {
    fn fit(&self, _ds: &Dataset, train_idx: &[usize]) -> Result<Box<dyn Scorer>, EvalError> {
        self.seen_train_sets
            .lock()
            .expect("recording mutex poisoned")
            .push(train_idx.to_vec());
        Ok(Box::new(ConstantScorer(0.5)))
    }
}

/// Metrics for one fold (or repeat, or the single pass of a cross-test).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub auc: f64,
    #[serde(flatten)]
    pub metrics: BinaryMetrics,
}

/// Mean and spread of one metric across folds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    pub stddev: f64,
}

/// The result of an evaluation procedure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    /// "stratified_cv", "holdout", or "cross_test".
    pub procedure: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
    pub folds: Vec<FoldMetrics>,
    /// Mean/stddev across folds for precision, recall, f1, auc (sample
    /// standard deviation; 0 when there is a single fold).
    pub summary: Vec<MetricSummary>,
    /// Metrics recomputed from the confusion counts summed over folds.
    pub pooled: BinaryMetrics,
}

pub(crate) fn summarize(folds: &[FoldMetrics]) -> (Vec<MetricSummary>, BinaryMetrics) {
    let columns: [(&str, fn(&FoldMetrics) -> f64); 4] = [
        ("precision", |f| f.metrics.precision),
        ("recall", |f| f.metrics.recall),
        ("f1", |f| f.metrics.f1),
        ("auc", |f| f.auc),
    ];
    let n = folds.len() as f64;
    let mut summary = Vec::with_capacity(4);
    for (name, get) in columns {
        let mean = folds.iter().map(get).sum::<f64>() / n;
        let stddev = if folds.len() < 2 {
            0.0
        } else {
            (folds
                .iter()
                .map(|f| (get(f) - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0))
                .sqrt()
        };
        summary.push(MetricSummary {
            metric: name.to_string(),
            mean,
            stddev,
        });
    }
    let tp = folds.iter().map(|f| f.metrics.true_positives).sum();
    let fp = folds.iter().map(|f| f.metrics.false_positives).sum();
    let tn = folds.iter().map(|f| f.metrics.true_negatives).sum();
    let fn_ = folds.iter().map(|f| f.metrics.false_negatives).sum();
    (summary, metrics_from_confusion(tp, fp, tn, fn_))
}

fn evaluate_split(
    learner: &dyn Learner,
    ds: &Dataset,
    fold_id: usize,
    train_idx: &[usize],
    test_idx: &[usize],
) -> Result<FoldMetrics, EvalError> {
    let scorer = learner.fit(ds, train_idx)?;
    let mut scores = Vec::with_capacity(test_idx.len());
    let mut labels = Vec::with_capacity(test_idx.len());
    for &i in test_idx {
        scores.push(scorer.score(&ds.samples[i].x)?);
        labels.push(ds.samples[i].label);
    }
    let predictions: Vec<u8> = scores.iter().map(|&s| u8::from(s >= 0.5)).collect();
    Ok(FoldMetrics {
        fold: fold_id,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        auc: auc_roc(&labels, &scores)?,
        metrics: metrics(&labels, &predictions)?,
    })
}

/// Stratified k-fold cross-validation with a 0.5 decision threshold.
pub fn cross_validate(
    learner: &dyn Learner,
    ds: &Dataset,
    k: usize,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let labels: Vec<u8> = ds.samples.iter().map(|s| s.label).collect();
    let folds = stratified_folds(&labels, k, seed)?;
    let mut fold_metrics = Vec::with_capacity(k);
    for (f, test_idx) in folds.iter().enumerate() {
        let in_test: std::collections::BTreeSet<usize> = test_idx.iter().copied().collect();
        let train_idx: Vec<usize> = (0..ds.samples.len())
            .filter(|i| !in_test.contains(i))
            .collect();
        fold_metrics.push(evaluate_split(learner, ds, f, &train_idx, test_idx)?);
    }
    let (summary, pooled) = summarize(&fold_metrics);
    Ok(EvalReport {
        procedure: "stratified_cv".into(),
        k: Some(k),
        train_fraction: None,
        repeats: None,
        rng_seed: Some(seed),
        folds: fold_metrics,
        summary,
        pooled,
    })
}

/// Repeated stratified holdout: per class, a seeded shuffle puts
/// `floor(train_fraction * count)` samples in training and the rest in test.
pub fn holdout(
    learner: &dyn Learner,
    ds: &Dataset,
    train_fraction: f64,
    repeats: usize,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(EvalError::BadConfig(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    if repeats == 0 {
        return Err(EvalError::BadConfig("repeats must be at least 1".into()));
    }
    let labels: Vec<u8> = ds.samples.iter().map(|s| s.label).collect();
    if let Some(&bad) = labels.iter().find(|&&v| v > 1) {
        return Err(EvalError::InvalidLabel(bad));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y as usize].push(i);
    }
    for (class, list) in by_class.iter().enumerate() {
        let n_train = (train_fraction * list.len() as f64).floor() as usize;
        if n_train == 0 || n_train == list.len() {
            return Err(EvalError::TooFewPerClass {
                class: class as u8,
                count: list.len(),
                needed: 2,
            });
        }
    }

    let mut fold_metrics = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let mut rng = rngs::stream_rng(seed, "holdout", r as u64);
        let mut train_idx = Vec::new();
        let mut test_idx = Vec::new();
        for list in &by_class {
            let mut shuffled = list.clone();
            shuffled.shuffle(&mut rng);
            let n_train = (train_fraction * shuffled.len() as f64).floor() as usize;
            train_idx.extend_from_slice(&shuffled[..n_train]);
            test_idx.extend_from_slice(&shuffled[n_train..]);
        }
        train_idx.sort_unstable();
        test_idx.sort_unstable();
        fold_metrics.push(evaluate_split(learner, ds, r, &train_idx, &test_idx)?);
    }
    let (summary, pooled) = summarize(&fold_metrics);
    Ok(EvalReport {
        procedure: "holdout".into(),
        k: None,
        train_fraction: Some(train_fraction),
        repeats: Some(repeats),
        rng_seed: Some(seed),
        folds: fold_metrics,
        summary,
        pooled,
    })
}

/// Scores an already-fitted model on a dataset from a different source.
/// The dataset's schema must match the model's feature names exactly.
pub fn cross_test(model: &BlrModel, ds: &Dataset) -> Result<EvalReport, EvalError> {
    if model.feature_names != ds.schema {
        let detail = model
            .feature_names
            .iter()
            .zip(&ds.schema)
            .enumerate()
            .find(|(_, (a, b))| a != b)
            .map(|(i, (a, b))| format!("column {i}: model {a:?} vs dataset {b:?}"))
            .unwrap_or_else(|| {
                format!(
                    "model has {} features, dataset has {}",
                    model.feature_names.len(),
                    ds.schema.len()
                )
            });
        return Err(EvalError::SchemaMismatch(detail));
    }
    if ds.samples.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut scores = Vec::with_capacity(ds.samples.len());
    let mut labels = Vec::with_capacity(ds.samples.len());
    for s in &ds.samples {
        scores.push(model.predict_proba(&s.x)?);
        labels.push(s.label);
    }
    let predictions: Vec<u8> = scores.iter().map(|&s| u8::from(s >= 0.5)).collect();
    let fold = FoldMetrics {
        fold: 0,
        n_train: 0,
        n_test: ds.samples.len(),
        auc: auc_roc(&labels, &scores)?,
        metrics: metrics(&labels, &predictions)?,
    };
    let (summary, pooled) = summarize(std::slice::from_ref(&fold));
    Ok(EvalReport {
        procedure: "cross_test".into(),
        k: None,
        train_fraction: None,
        repeats: None,
        rng_seed: None,
        folds: vec![fold],
        summary,
        pooled,
    })
}

impl EvalReport {
    pub fn write_json<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = io::BufWriter::new(writer);
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| EvalError::Serialize(e.to_string()))?;
        w.write_all(b"\n")?;
        Ok(w.flush()?)
    }

    pub fn write_json_file<P: AsRef<Path>>(&self, path: P) -> Result<(), EvalError> {
        self.write_json(File::create(path)?)
    }

    /// `metric,mean,stddev` rows for the summary table.
    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["metric", "mean", "stddev"])
            .map_err(|e| EvalError::Serialize(e.to_string()))?;
        for s in &self.summary {
            w.write_record([
                s.metric.clone(),
                format!("{:.8e}", s.mean),
                format!("{:.8e}", s.stddev),
            ])
            .map_err(|e| EvalError::Serialize(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv_file<P: AsRef<Path>>(&self, path: P) -> Result<(), EvalError> {
        self.write_summary_csv(File::create(path)?)
    }
}

/// One row of the per-bin timing report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimeBinRow {
    pub bin: u8,
    /// Share of all topic-relevant originals posted in this bin.
    pub post_share: f64,
    /// Share of all topic-relevant forwards that happened in this bin.
    pub diffused_share: f64,
    /// Mean predicted transmission probability over the bin's edge samples.
    pub mean_predicted: f64,
    pub n_samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimeReport {
    pub rows: Vec<TimeBinRow>,
    /// Bin with the highest mean predicted probability (lowest index wins
    /// ties).
    pub best_bin: u8,
}

/// Summarizes when topic content is posted, when it diffuses, and when the
/// per-bin models consider transmission most likely.
pub fn time_to_tweet_report(
    log: &EventLog,
    topic: &Topic,
    datasets: &[Dataset; 4],
    models: &[BlrModel; 4],
) -> Result<TimeReport, EvalError> {
    for (b, (ds, model)) in datasets.iter().zip(models).enumerate() {
        if model.feature_names != ds.schema {
            return Err(EvalError::SchemaMismatch(format!(
                "bin {b}: model features do not match dataset schema"
            )));
        }
    }
    let mut posts = [0u64; 4];
    let mut forwards = [0u64; 4];
    for rec in log.records() {
        if !crate::eventlog::is_relevant(rec, topic) {
            continue;
        }
        let bin = TimeBin::of_timestamp(rec.ts).index();
        match rec.kind {
            crate::eventlog::EventKind::Tweet => posts[bin] += 1,
            k if k.is_forward() => forwards[bin] += 1,
            _ => {}
        }
    }
    let post_total: u64 = posts.iter().sum();
    let forward_total: u64 = forwards.iter().sum();

    let mut rows = Vec::with_capacity(4);
    for b in 0..4 {
        let ds = &datasets[b];
        let mut mean_predicted = 0.0;
        if !ds.samples.is_empty() {
            let mut sum = 0.0;
            for s in &ds.samples {
                sum += models[b].predict_proba(&s.x)?;
            }
            mean_predicted = sum / ds.samples.len() as f64;
        }
        rows.push(TimeBinRow {
            bin: b as u8,
            post_share: if post_total > 0 {
                posts[b] as f64 / post_total as f64
            } else {
                0.0
            },
            diffused_share: if forward_total > 0 {
                forwards[b] as f64 / forward_total as f64
            } else {
                0.0
            },
            mean_predicted,
            n_samples: ds.samples.len(),
        });
    }
    let best_bin = rows
        .iter()
        .max_by(|a, b| {
            a.mean_predicted
                .total_cmp(&b.mean_predicted)
                .then(b.bin.cmp(&a.bin))
        })
        .map(|r| r.bin)
        .unwrap_or(0);
    Ok(TimeReport { rows, best_bin })
}

impl TimeReport {
    /// CSV with header `bin,post_share,diffused_share,mean_predicted,is_best`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bin", "post_share", "diffused_share", "mean_predicted", "is_best"])
            .map_err(|e| EvalError::Serialize(e.to_string()))?;
        for r in &self.rows {
            w.write_record([
                r.bin.to_string(),
                format!("{:.8e}", r.post_share),
                format!("{:.8e}", r.diffused_share),
                format!("{:.8e}", r.mean_predicted),
                u8::from(r.bin == self.best_bin).to_string(),
            ])
            .map_err(|e| EvalError::Serialize(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file<P: AsRef<Path>>(&self, path: P) -> Result<(), EvalError> {
        self.write_csv(File::create(path)?)
    }
}
