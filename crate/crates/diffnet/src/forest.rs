//! Random forest used to rank features by importance.
//!
//! Each tree is grown on a bootstrap resample with Gini-impurity splits. At
//! every node a fixed-size subset of candidate features is drawn without
//! replacement (default ⌈√p⌉); the best split is the one with the largest
//! impurity decrease, with ties broken toward the lowest feature index and
//! then the lowest threshold. Thresholds are midpoints between adjacent
//! distinct values, and both children of a split must contain at least
//! `min_leaf` samples.
//!
//! Feature importances are mean decrease in impurity: each split contributes
//! its impurity decrease weighted by the fraction of the tree's samples that
//! reach the node, importances are averaged over trees and normalized to sum
//! to one (all zeros if no tree ever split).
//!
//! Trees are grown from independent deterministic RNG streams
//! (`rngs::seed_for(seed, "tree", i)`), so results are reproducible and
//! independent of thread scheduling.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::features::Dataset;
use crate::rngs;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("labels must contain both classes")]
    SingleClass,
    #[error("labels must be 0 or 1, got {0}")]
    InvalidLabel(u8),
    #[error("row {row} has {got} features, expected {expected}")]
    RowShape {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("non-finite value in feature {column:?} at row {row}")]
    NonFiniteFeature { column: String, row: usize },
    #[error("input vector has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("invalid selection: {0}")]
    BadSelection(String),
    #[error("malformed ranking file at line {line}: {reason}")]
    MalformedRanking { line: usize, reason: String },
    #[error("scoring failed: {0}")]
    Scoring(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Minimum number of samples in each child of a split.
    pub min_leaf: usize,
    /// Candidate features drawn per split; `None` means ⌈√p⌉.
    pub features_per_split: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 200,
            max_depth: 12,
            min_leaf: 5,
            features_per_split: None,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self, p: usize) -> Result<usize, ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::BadConfig("n_trees must be at least 1".into()));
        }
        if self.max_depth == 0 {
            return Err(ForestError::BadConfig("max_depth must be at least 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(ForestError::BadConfig("min_leaf must be at least 1".into()));
        }
        let m = self
            .features_per_split
            .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize);
        if m == 0 || m > p {
            return Err(ForestError::BadConfig(format!(
                "features_per_split {m} out of range 1..={p}"
            )));
        }
        Ok(m)
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf {
        prob: f64,
        count: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { prob, .. } => return prob,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    /// `(depth, count)` of every leaf, for structural checks.
    pub fn leaves(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { count, .. } => out.push((depth, count)),
                Node::Split { left, right, .. } => {
                    stack.push((left, depth + 1));
                    stack.push((right, depth + 1));
                }
            }
        }
        out
    }

    /// The root's `(feature, threshold)` if the root is a split.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes[0] {
            Node::Split {
                feature, threshold, ..
            } => Some((feature, threshold)),
            Node::Leaf { .. } => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RandomForest {
    trees: Vec<Tree>,
    importances: Vec<f64>,
    feature_names: Vec<String>,
    /// Per tree: which of the original samples were drawn into its bootstrap.
    in_bag: Vec<Vec<bool>>,
}

/// One entry of a feature-importance ranking, ordered most important first.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedFeature {
    pub rank: usize,
    pub index: usize,
    pub name: String,
    pub importance: f64,
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let q = pos as f64 / total as f64;
    2.0 * q * (1.0 - q)
}

struct TreeGrower<'a> {
    rows: &'a [&'a [f64]],
    labels: &'a [u8],
    max_depth: usize,
    min_leaf: usize,
    m: usize,
    p: usize,
    n_total: usize,
    nodes: Vec<Node>,
    importance: Vec<f64>,
}

impl TreeGrower<'_> {
    fn grow(&mut self, idx: &mut [u32], depth: usize, rng: &mut impl Rng) -> usize {
        let n_node = idx.len();
        let pos = idx
            .iter()
            .filter(|&&i| self.labels[i as usize] == 1)
            .count();
        let leaf = |nodes: &mut Vec<Node>| {
            nodes.push(Node::Leaf {
                prob: pos as f64 / n_node as f64,
                count: n_node,
            });
            nodes.len() - 1
        };
        if depth >= self.max_depth || pos == 0 || pos == n_node || n_node < 2 * self.min_leaf {
            return leaf(&mut self.nodes);
        }

        // Draw candidate features without replacement, then scan them in
        // ascending index order so equal gains resolve to the lowest index.
        let mut pool: Vec<usize> = (0..self.p).collect();
        for i in 0..self.m {
            let j = rng.gen_range(i..self.p);
            pool.swap(i, j);
        }
        let mut candidates = pool[..self.m].to_vec();
        candidates.sort_unstable();

        let parent = gini(pos, n_node);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut vals: Vec<(f64, u8)> = Vec::with_capacity(n_node);
        for &j in &candidates {
            vals.clear();
            vals.extend(
                idx.iter()
                    .map(|&i| (self.rows[i as usize][j], self.labels[i as usize])),
            );
            vals.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0usize;
            for i in 0..n_node - 1 {
                left_pos += usize::from(vals[i].1);
                let (lo, hi) = (vals[i].0, vals[i + 1].0);
                if lo == hi {
                    continue;
                }
                let left_n = i + 1;
                let right_n = n_node - left_n;
                if left_n < self.min_leaf || right_n < self.min_leaf {
                    continue;
                }
                let weighted = (gini(left_pos, left_n) * left_n as f64
                    + gini(pos - left_pos, right_n) * right_n as f64)
                    / n_node as f64;
                let gain = parent - weighted;
                if gain > 1e-12 && best.map_or(true, |(bg, _, _)| gain > bg) {
                    let mid = 0.5 * (lo + hi);
                    // Guard against the midpoint rounding onto `hi`, which
                    // would move `hi` into the left child.
                    let threshold = if mid > lo && mid < hi { mid } else { lo };
                    best = Some((gain, j, threshold));
                }
            }
        }

        let Some((gain, feature, threshold)) = best else {
            return leaf(&mut self.nodes);
        };
        self.importance[feature] += gain * n_node as f64 / self.n_total as f64;

        let split = stable_partition(idx, |&i| self.rows[i as usize][feature] <= threshold);
        let (left_idx, right_idx) = idx.split_at_mut(split);
        // Reserve this node's slot before growing children.
        self.nodes.push(Node::Leaf { prob: 0.0, count: 0 });
        let id = self.nodes.len() - 1;
        let left = self.grow(left_idx, depth + 1, rng);
        let right = self.grow(right_idx, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

/// Stable-order partition: moves elements satisfying `pred` to the front and
/// returns how many there are. Order within each side is preserved so tree
/// growth is deterministic.
fn stable_partition<T: Copy>(slice: &mut [T], pred: impl Fn(&T) -> bool) -> usize {
    let mut front: Vec<T> = Vec::with_capacity(slice.len());
    let mut back: Vec<T> = Vec::new();
    for &v in slice.iter() {
        if pred(&v) {
            front.push(v);
        } else {
            back.push(v);
        }
    }
    let split = front.len();
    slice[..split].copy_from_slice(&front);
    slice[split..].copy_from_slice(&back);
    split
}

/// Grows one tree on exactly the given rows (no bootstrap), for structural
/// tests of the split search.
#[cfg(test)]
fn grow_single_tree(
    rows: &[&[f64]],
    labels: &[u8],
    cfg: &ForestConfig,
    m: usize,
    rng: &mut impl Rng,
) -> Tree {
    let mut idx: Vec<u32> = (0..rows.len() as u32).collect();
    let mut grower = TreeGrower {
        rows,
        labels,
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_leaf,
        m,
        p: rows[0].len(),
        n_total: rows.len(),
        nodes: Vec::new(),
        importance: vec![0.0; rows[0].len()],
    };
    grower.grow(&mut idx, 0, rng);
    Tree {
        nodes: grower.nodes,
    }
}

/// Grows a forest on raw feature rows.
pub fn fit_matrix(
    feature_names: &[String],
    rows: &[&[f64]],
    labels: &[u8],
    cfg: &ForestConfig,
    rng_seed: u64,
) -> Result<RandomForest, ForestError> {
    let p = feature_names.len();
    let m = cfg.validate(p)?;
    let n = rows.len();
    if n < 2 || labels.len() != n {
        return Err(ForestError::TooFewSamples(n.min(labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
        return Err(ForestError::InvalidLabel(bad));
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(ForestError::SingleClass);
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != p {
            return Err(ForestError::RowShape {
                row: i,
                got: row.len(),
                expected: p,
            });
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(ForestError::NonFiniteFeature {
                column: feature_names[j].clone(),
                row: i,
            });
        }
    }

    let grown: Vec<(Tree, Vec<f64>, Vec<bool>)> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rngs::stream_rng(rng_seed, "tree", t as u64);
            let mut idx: Vec<u32> = (0..n).map(|_| rng.gen_range(0..n) as u32).collect();
            let mut mask = vec![false; n];
            for &i in &idx {
                mask[i as usize] = true;
            }
            let mut grower = TreeGrower {
                rows,
                labels,
                max_depth: cfg.max_depth,
                min_leaf: cfg.min_leaf,
                m,
                p,
                n_total: n,
                nodes: Vec::new(),
                importance: vec![0.0; p],
            };
            let root = grower.grow(&mut idx, 0, &mut rng);
            debug_assert_eq!(root, 0, "the root must occupy slot 0");
            (Tree { nodes: grower.nodes }, grower.importance, mask)
        })
        .collect();

    let mut importances = vec![0.0; p];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut in_bag = Vec::with_capacity(cfg.n_trees);
    for (tree, imp, mask) in grown {
        for (acc, v) in importances.iter_mut().zip(&imp) {
            *acc += v;
        }
        trees.push(tree);
        in_bag.push(mask);
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        for v in &mut importances {
            *v /= total;
        }
    }

    Ok(RandomForest {
        trees,
        importances,
        feature_names: feature_names.to_vec(),
        in_bag,
    })
}

/// Grows a forest on a dataset's samples and schema.
pub fn fit(ds: &Dataset, cfg: &ForestConfig, rng_seed: u64) -> Result<RandomForest, ForestError> {
    let rows: Vec<&[f64]> = ds.samples.iter().map(|s| s.x.as_slice()).collect();
    let labels: Vec<u8> = ds.samples.iter().map(|s| s.label).collect();
    fit_matrix(&ds.schema, &rows, &labels, cfg, rng_seed)
}

impl RandomForest {
    /// Mean positive-class probability over all trees.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, ForestError> {
        if x.len() != self.feature_names.len() {
            return Err(ForestError::DimensionMismatch {
                expected: self.feature_names.len(),
                got: x.len(),
            });
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(ForestError::NonFiniteFeature {
                column: self.feature_names[j].clone(),
                row: 0,
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    /// Normalized mean-decrease-in-impurity importances (sum to 1, or all
    /// zero if no tree found a split).
    pub fn importances(&self) -> &[f64] {
        &self.importances
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn in_bag(&self) -> &[Vec<bool>] {
        &self.in_bag
    }

    /// Features ordered by descending importance; equal importances order by
    /// ascending feature index.
    pub fn importance_ranking(&self) -> Vec<RankedFeature> {
        let mut order: Vec<usize> = (0..self.importances.len()).collect();
        order.sort_by(|&a, &b| {
            self.importances[b]
                .total_cmp(&self.importances[a])
                .then(a.cmp(&b))
        });
        order
            .into_iter()
            .enumerate()
            .map(|(rank, index)| RankedFeature {
                rank: rank + 1,
                index,
                name: self.feature_names[index].clone(),
                importance: self.importances[index],
            })
            .collect()
    }
}

/// The column indices of the `k` most important features, ascending, ready
/// for [`Dataset::select_columns`](crate::features::Dataset::select_columns).
pub fn select_top_k(ranking: &[RankedFeature], k: usize) -> Result<Vec<usize>, ForestError> {
    if k == 0 || k > ranking.len() {
        return Err(ForestError::BadSelection(format!(
            "k must be in 1..={}, got {k}",
            ranking.len()
        )));
    }
    let mut idx: Vec<usize> = ranking[..k].iter().map(|r| r.index).collect();
    idx.sort_unstable();
    Ok(idx)
}

/// Writes a ranking as CSV with header `rank,feature_index,feature_name,importance`.
pub fn write_ranking_csv<W: Write>(ranking: &[RankedFeature], writer: W) -> Result<(), ForestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["rank", "feature_index", "feature_name", "importance"])
        .map_err(|e| ForestError::Scoring(e.to_string()))?;
    for r in ranking {
        w.write_record([
            r.rank.to_string(),
            r.index.to_string(),
            r.name.clone(),
            format!("{:.8e}", r.importance),
        ])
        .map_err(|e| ForestError::Scoring(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ranking_csv_file<P: AsRef<Path>>(
    ranking: &[RankedFeature],
    path: P,
) -> Result<(), ForestError> {
    write_ranking_csv(ranking, File::create(path)?)
}

pub fn read_ranking_csv<R: Read>(reader: R) -> Result<Vec<RankedFeature>, ForestError> {
    let mut r = csv::Reader::from_reader(reader);
    let expected = ["rank", "feature_index", "feature_name", "importance"];
    let headers = r
        .headers()
        .map_err(|e| ForestError::MalformedRanking {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if headers.iter().ne(expected) {
        return Err(ForestError::MalformedRanking {
            line: 1,
            reason: format!("header must be {}", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| ForestError::MalformedRanking {
            line,
            reason: e.to_string(),
        })?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let parse_err = |what: &str| ForestError::MalformedRanking {
            line,
            reason: format!("bad {what} field"),
        };
        out.push(RankedFeature {
            rank: field(0).parse().map_err(|_| parse_err("rank"))?,
            index: field(1).parse().map_err(|_| parse_err("feature_index"))?,
            name: field(2).to_string(),
            importance: field(3).parse().map_err(|_| parse_err("importance"))?,
        });
    }
    Ok(out)
}

pub fn read_ranking_csv_file<P: AsRef<Path>>(path: P) -> Result<Vec<RankedFeature>, ForestError> {
    read_ranking_csv(File::open(path)?)
}

/// Area under the ROC curve of the forest's scores on a dataset.
pub fn forest_auc(forest: &RandomForest, ds: &Dataset) -> Result<f64, ForestError> {
    let mut scores = Vec::with_capacity(ds.samples.len());
    for s in &ds.samples {
        scores.push(forest.predict_proba(&s.x)?);
    }
    let labels: Vec<u8> = ds.samples.iter().map(|s| s.label).collect();
    crate::eval::auc_roc(&labels, &scores).map_err(|e| ForestError::Scoring(e.to_string()))
}
