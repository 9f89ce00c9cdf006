//! Crowdsourced message-virality prediction.
//!
//! A per-interaction classifier learns to tell whether the message behind a
//! (poster, reactor) pair is trending or merely informative, using only the
//! 55 edge features of the pair — no message text, no reaction counts, and
//! no interaction totals. A message's verdict is then a majority vote over
//! the predictions for its interactions, so the signal comes entirely from
//! *who* interacts: if part of the population only reacts to trending
//! content, their profiles give the vote away long before global popularity
//! counters would.
//!
//! [`synthesize_interaction_corpus`] builds exactly that regime: a share of
//! reactors on trending messages are "trend-only" users with a recognizably
//! reaction-heavy profile, while informative messages draw generalists only.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blr::{self, BlrConfig, BlrError, BlrModel};
use crate::eval::{self, EvalError, EvalReport, FoldMetrics};
use crate::features::{edge_feature_index, edge_feature_names, EDGE_FEATURE_COUNT};
use crate::rngs;

/// Errors from training, voting, or corpus synthesis.
#[derive(Debug, Error)]
pub enum ViralityError {
    #[error("a message needs at least one interaction to vote on")]
    NoInteractions,
    #[error("training needs both trending and informative interactions")]
    SingleClass,
    #[error("interaction {index} has {got} features, expected {expected}")]
    WrongWidth {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("message {message_id} carries conflicting event-type labels")]
    ConflictingTruth { message_id: u64 },
    #[error("invalid corpus config: {0}")]
    BadConfig(String),
    #[error("malformed interaction line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("classifier error: {0}")]
    Blr(#[from] BlrError),
    #[error("evaluation error: {0}")]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// What kind of message an interaction belongs to.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventType {
    Informative,
    Trending,
}

impl EventType {
    /// Binary label with trending as the positive class.
    pub fn as_label(self) -> u8 {
        match self {
            EventType::Informative => 0,
            EventType::Trending => 1,
        }
    }

    pub fn is_trending(self) -> bool {
        matches!(self, EventType::Trending)
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventType::Informative => "informative",
            EventType::Trending => "trending",
        })
    }
}

/// One (poster, reactor) interaction with a message, described purely by the
/// standard edge-feature vector of the pair. The schema deliberately equals
/// the diffusion schema: there is no place to smuggle in message attributes
/// or reaction counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionSample {
    pub message_id: u64,
    /// Edge features for (poster, reactor); length [`EDGE_FEATURE_COUNT`].
    pub x: Vec<f64>,
    pub event_type: EventType,
}

/// A message-level majority decision.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViralityVerdict {
    pub message_id: u64,
    pub n_interactions: usize,
    pub votes_trending: usize,
    pub votes_informative: usize,
    pub verdict: EventType,
}

/// A verdict together with the true event type, when known.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub verdict: ViralityVerdict,
    pub truth: Option<EventType>,
}

/// Message verdicts plus the message-level evaluation built from them.
#[derive(Clone, Debug)]
pub struct ViralityEvaluation {
    pub verdicts: Vec<VerdictRow>,
    pub report: EvalReport,
}

/// Resolves a vote count into a verdict. A strict majority decides; an even
/// split falls back to `tie_rule`. The shipped default is
/// [`EventType::Trending`], trading precision for recall: missing a trending
/// message is costlier than double-checking an informative one.
pub fn verdict_from_votes(
    votes_trending: usize,
    n_interactions: usize,
    tie_rule: EventType,
) -> Result<EventType, ViralityError> {
    if n_interactions == 0 {
        return Err(ViralityError::NoInteractions);
    }
    debug_assert!(votes_trending <= n_interactions);
    Ok(match (2 * votes_trending).cmp(&n_interactions) {
        std::cmp::Ordering::Greater => EventType::Trending,
        std::cmp::Ordering::Less => EventType::Informative,
        std::cmp::Ordering::Equal => tie_rule,
    })
}

/// Fits the per-interaction classifier: the usual Bayesian logistic
/// regression over the 55 edge features, with event type as the label.
pub fn train_virality(
    samples: &[InteractionSample],
    cfg: &BlrConfig,
) -> Result<BlrModel, ViralityError> {
    if samples.is_empty() {
        return Err(ViralityError::NoInteractions);
    }
    for (index, s) in samples.iter().enumerate() {
        if s.x.len() != EDGE_FEATURE_COUNT {
            return Err(ViralityError::WrongWidth {
                index,
                expected: EDGE_FEATURE_COUNT,
                got: s.x.len(),
            });
        }
    }
    let any_trending = samples.iter().any(|s| s.event_type.is_trending());
    let any_informative = samples.iter().any(|s| !s.event_type.is_trending());
    if !any_trending || !any_informative {
        return Err(ViralityError::SingleClass);
    }
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.x.as_slice()).collect();
    let labels: Vec<u8> = samples.iter().map(|s| s.event_type.as_label()).collect();
    Ok(blr::fit_matrix(&edge_feature_names(), &rows, &labels, cfg)?)
}

/// Votes over one message's interactions and returns the majority verdict.
/// Each interaction votes independently through the classifier at the 0.5
/// threshold; the vote count is order-free by construction.
pub fn predict_virality(
    model: &BlrModel,
    message_id: u64,
    interactions: &[&[f64]],
    tie_rule: EventType,
) -> Result<ViralityVerdict, ViralityError> {
    if interactions.is_empty() {
        return Err(ViralityError::NoInteractions);
    }
    let mut votes_trending = 0usize;
    for x in interactions {
        if model.predict(x, 0.5)? == 1 {
            votes_trending += 1;
        }
    }
    let n_interactions = interactions.len();
    Ok(ViralityVerdict {
        message_id,
        n_interactions,
        votes_trending,
        votes_informative: n_interactions - votes_trending,
        verdict: verdict_from_votes(votes_trending, n_interactions, tie_rule)?,
    })
}

/// Scores a labelled message set: verdicts per message, then message-level
/// precision/recall/F1 (trending positive) and an AUC over the trending vote
/// share. All interactions of a message must agree on its event type.
pub fn evaluate_virality(
    model: &BlrModel,
    samples: &[InteractionSample],
    tie_rule: EventType,
) -> Result<ViralityEvaluation, ViralityError> {
    let mut by_message: BTreeMap<u64, Vec<&InteractionSample>> = BTreeMap::new();
    for s in samples {
        by_message.entry(s.message_id).or_default().push(s);
    }
    if by_message.is_empty() {
        return Err(ViralityError::NoInteractions);
    }

    let mut verdicts = Vec::with_capacity(by_message.len());
    let mut labels = Vec::with_capacity(by_message.len());
    let mut predictions = Vec::with_capacity(by_message.len());
    let mut scores = Vec::with_capacity(by_message.len());
    for (&message_id, group) in &by_message {
        let truth = group[0].event_type;
        if group.iter().any(|s| s.event_type != truth) {
            return Err(ViralityError::ConflictingTruth { message_id });
        }
        let rows: Vec<&[f64]> = group.iter().map(|s| s.x.as_slice()).collect();
        let verdict = predict_virality(model, message_id, &rows, tie_rule)?;
        labels.push(truth.as_label());
        predictions.push(verdict.verdict.as_label());
        scores.push(verdict.votes_trending as f64 / verdict.n_interactions as f64);
        verdicts.push(VerdictRow {
            verdict,
            truth: Some(truth),
        });
    }

    let fold = FoldMetrics {
        fold: 0,
        n_train: 0,
        n_test: by_message.len(),
        auc: eval::auc_roc(&labels, &scores)?,
        metrics: eval::metrics(&labels, &predictions)?,
    };
    let folds = vec![fold];
    let (summary, pooled) = eval::summarize(&folds);
    Ok(ViralityEvaluation {
        verdicts,
        report: EvalReport {
            procedure: "virality".to_string(),
            k: None,
            train_fraction: None,
            repeats: None,
            rng_seed: None,
            folds,
            summary,
            pooled,
        },
    })
}

/// Writes verdicts as CSV: `message_id,n,votes_trending,verdict,truth`.
/// The truth column is empty when unknown.
pub fn write_verdicts_csv<W: Write>(
    mut writer: W,
    rows: &[VerdictRow],
) -> Result<(), ViralityError> {
    writeln!(writer, "message_id,n,votes_trending,verdict,truth")?;
    for row in rows {
        let v = &row.verdict;
        let truth = row.truth.map(|t| t.to_string()).unwrap_or_default();
        writeln!(
            writer,
            "{},{},{},{},{}",
            v.message_id, v.n_interactions, v.votes_trending, v.verdict, truth
        )?;
    }
    Ok(())
}

pub fn write_verdicts_csv_file<P: AsRef<Path>>(
    path: P,
    rows: &[VerdictRow],
) -> Result<(), ViralityError> {
    write_verdicts_csv(BufWriter::new(File::create(path)?), rows)
}

/// Writes interactions as line-delimited JSON.
pub fn write_interactions_jsonl<W: Write>(
    mut writer: W,
    samples: &[InteractionSample],
) -> Result<(), ViralityError> {
    for s in samples {
        let line = serde_json::to_string(s).map_err(|e| ViralityError::Parse {
            line: 0,
            reason: e.to_string(),
        })?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

pub fn write_interactions_jsonl_file<P: AsRef<Path>>(
    path: P,
    samples: &[InteractionSample],
) -> Result<(), ViralityError> {
    write_interactions_jsonl(BufWriter::new(File::create(path)?), samples)
}

/// Reads line-delimited JSON interactions, rejecting wrong-width vectors.
pub fn read_interactions_jsonl<R: BufRead>(
    reader: R,
) -> Result<Vec<InteractionSample>, ViralityError> {
    let mut samples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: InteractionSample =
            serde_json::from_str(&line).map_err(|e| ViralityError::Parse {
                line: line_no,
                reason: e.to_string(),
            })?;
        if sample.x.len() != EDGE_FEATURE_COUNT {
            return Err(ViralityError::Parse {
                line: line_no,
                reason: format!(
                    "expected {} features, found {}",
                    EDGE_FEATURE_COUNT,
                    sample.x.len()
                ),
            });
        }
        samples.push(sample);
    }
    Ok(samples)
}

pub fn read_interactions_jsonl_file<P: AsRef<Path>>(
    path: P,
) -> Result<Vec<InteractionSample>, ViralityError> {
    read_interactions_jsonl(BufReader::new(File::open(path)?))
}

/// The reactor-profile features that mark a trend-only reactor in the
/// synthetic corpus (their `dst_`-side means are shifted).
const TREND_REACTOR_FEATURES: [&str; 6] = [
    "retweeted_tweet_ratio",
    "retweet_volume_lifetime",
    "reactions_in_bin_ratio",
    "active_interaction",
    "avg_tweets_per_day",
    "mention_rate",
];

/// Controls for the planted trend-only-reactor corpus.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ViralityCorpusConfig {
    pub n_messages: usize,
    /// Share of messages that are trending.
    pub trending_fraction: f64,
    pub interactions_min: usize,
    pub interactions_max: usize,
    /// Probability that an interaction with a *trending* message comes from
    /// a trend-only reactor. Informative messages never draw one.
    pub trend_reactor_fraction: f64,
    /// Mean shift applied to a trend-only reactor's profile features.
    pub signal_shift: f64,
    pub rng_seed: u64,
}

impl Default for ViralityCorpusConfig {
    fn default() -> Self {
        Self {
            n_messages: 1000,
            trending_fraction: 0.5,
            interactions_min: 3,
            interactions_max: 15,
            trend_reactor_fraction: 0.75,
            signal_shift: 1.5,
            rng_seed: 7,
        }
    }
}

impl ViralityCorpusConfig {
    pub fn validate(&self) -> Result<(), ViralityError> {
        if self.n_messages < 2 {
            return Err(ViralityError::BadConfig(
                "need at least two messages".to_string(),
            ));
        }
        if !(self.trending_fraction > 0.0 && self.trending_fraction < 1.0) {
            return Err(ViralityError::BadConfig(
                "trending_fraction must be inside (0, 1)".to_string(),
            ));
        }
        if self.interactions_min == 0 || self.interactions_min > self.interactions_max {
            return Err(ViralityError::BadConfig(
                "interaction counts need 1 <= min <= max".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.trend_reactor_fraction) {
            return Err(ViralityError::BadConfig(
                "trend_reactor_fraction must be inside [0, 1]".to_string(),
            ));
        }
        if !self.signal_shift.is_finite() {
            return Err(ViralityError::BadConfig(
                "signal_shift must be finite".to_string(),
            ));
        }
        Ok(())
    }
}

/// Builds a labelled interaction corpus in which the only thing separating
/// trending from informative messages is *who shows up to react*: a share of
/// the reactions to trending messages come from trend-only reactors whose
/// profile features are mean-shifted. Message ids `0..n_trending` are
/// trending, the rest informative; all randomness flows from one named
/// stream of `rng_seed`.
pub fn synthesize_interaction_corpus(
    cfg: &ViralityCorpusConfig,
) -> Result<Vec<InteractionSample>, ViralityError> {
    cfg.validate()?;
    let n_trending = ((cfg.n_messages as f64 * cfg.trending_fraction).round() as usize)
        .clamp(1, cfg.n_messages - 1);
    let shifted: Vec<usize> = TREND_REACTOR_FEATURES
        .iter()
        .map(|name| {
            edge_feature_index(&format!("dst_{name}")).expect("reactor feature name is canonical")
        })
        .collect();

    let mut rng = rngs::stream_rng(cfg.rng_seed, "virality", 0);
    let noise = Normal::new(0.0, 1.0).expect("unit normal is valid");
    let mut samples = Vec::new();
    for m in 0..cfg.n_messages {
        let event_type = if m < n_trending {
            EventType::Trending
        } else {
            EventType::Informative
        };
        let n_interactions = rng.gen_range(cfg.interactions_min..=cfg.interactions_max);
        for _ in 0..n_interactions {
            let mut x: Vec<f64> = (0..EDGE_FEATURE_COUNT)
                .map(|_| noise.sample(&mut rng))
                .collect();
            if event_type.is_trending() && rng.gen::<f64>() < cfg.trend_reactor_fraction {
                for &j in &shifted {
                    x[j] += cfg.signal_shift;
                }
            }
            samples.push(InteractionSample {
                message_id: m as u64,
                x,
                event_type,
            });
        }
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// A deterministic classifier: votes trending exactly when the first
    /// feature is positive (the logistic is saturated at weight 30).
    fn sign_model() -> BlrModel {
        let mut weights = vec![0.0; EDGE_FEATURE_COUNT];
        weights[0] = 30.0;
        BlrModel {
            weights,
            intercept: 0.0,
            prior_variance: 10.0,
            means: vec![0.0; EDGE_FEATURE_COUNT],
            stds: vec![1.0; EDGE_FEATURE_COUNT],
            feature_names: edge_feature_names(),
            converged: true,
            iterations: 1,
        }
    }

    /// One 55-wide interaction whose first feature carries the vote.
    fn voting_row(trending: bool) -> Vec<f64> {
        let mut x = vec![0.0; EDGE_FEATURE_COUNT];
        x[0] = if trending { 1.0 } else { -1.0 };
        x
    }

    fn interaction(message_id: u64, trending_vote: bool, event_type: EventType) -> InteractionSample {
        InteractionSample {
            message_id,
            x: voting_row(trending_vote),
            event_type,
        }
    }

    #[test]
    fn majority_examples() {
        let t = EventType::Trending;
        assert_eq!(verdict_from_votes(3, 5, t).unwrap(), EventType::Trending);
        assert_eq!(verdict_from_votes(0, 4, t).unwrap(), EventType::Informative);
        assert_eq!(verdict_from_votes(2, 4, t).unwrap(), EventType::Trending);
        assert_eq!(
            verdict_from_votes(2, 4, EventType::Informative).unwrap(),
            EventType::Informative
        );
        assert!(matches!(
            verdict_from_votes(0, 0, t),
            Err(ViralityError::NoInteractions)
        ));
    }

    #[test]
    fn brute_force_vote_patterns_up_to_seven() {
        let model = sign_model();
        for tie_rule in [EventType::Trending, EventType::Informative] {
            for n in 1usize..=7 {
                for mask in 0u32..(1 << n) {
                    let rows: Vec<Vec<f64>> =
                        (0..n).map(|i| voting_row(mask >> i & 1 == 1)).collect();
                    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
                    let verdict = predict_virality(&model, 0, &refs, tie_rule).unwrap();

                    // Independent count of the very same pattern.
                    let mut trending = 0usize;
                    let mut informative = 0usize;
                    for i in 0..n {
                        if mask >> i & 1 == 1 {
                            trending += 1;
                        } else {
                            informative += 1;
                        }
                    }
                    let expected = if trending > informative {
                        EventType::Trending
                    } else if informative > trending {
                        EventType::Informative
                    } else {
                        tie_rule
                    };
                    assert_eq!(verdict.votes_trending, trending, "n={n} mask={mask:b}");
                    assert_eq!(verdict.votes_informative, informative);
                    assert_eq!(
                        verdict.votes_trending + verdict.votes_informative,
                        verdict.n_interactions
                    );
                    assert_eq!(verdict.verdict, expected, "n={n} mask={mask:b}");
                }
            }
        }
    }

    #[test]
    fn flipping_a_vote_toward_trending_never_demotes() {
        let model = sign_model();
        for n in 1usize..=7 {
            for mask in 0u32..(1 << n) {
                let base: Vec<Vec<f64>> = (0..n).map(|i| voting_row(mask >> i & 1 == 1)).collect();
                let refs: Vec<&[f64]> = base.iter().map(Vec::as_slice).collect();
                let before = predict_virality(&model, 0, &refs, EventType::Trending)
                    .unwrap()
                    .verdict;
                for flip in 0..n {
                    if mask >> flip & 1 == 1 {
                        continue;
                    }
                    let flipped_mask = mask | (1 << flip);
                    let rows: Vec<Vec<f64>> = (0..n)
                        .map(|i| voting_row(flipped_mask >> i & 1 == 1))
                        .collect();
                    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
                    let after = predict_virality(&model, 0, &refs, EventType::Trending)
                        .unwrap()
                        .verdict;
                    assert!(
                        !(before == EventType::Trending && after == EventType::Informative),
                        "n={n} mask={mask:b} flip={flip}"
                    );
                }
            }
        }
    }

    #[test]
    fn verdict_ignores_interaction_order() {
        let model = sign_model();
        let mut rows: Vec<Vec<f64>> = (0..9).map(|i| voting_row(i % 3 == 0)).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let baseline = predict_virality(&model, 5, &refs, EventType::Trending).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            rows.shuffle(&mut rng);
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            let shuffled = predict_virality(&model, 5, &refs, EventType::Trending).unwrap();
            assert_eq!(shuffled, baseline);
        }
    }

    #[test]
    fn train_rejects_bad_inputs() {
        assert!(matches!(
            train_virality(&[], &BlrConfig::default()),
            Err(ViralityError::NoInteractions)
        ));
        let narrow = InteractionSample {
            message_id: 0,
            x: vec![1.0; 10],
            event_type: EventType::Trending,
        };
        assert!(matches!(
            train_virality(&[narrow], &BlrConfig::default()),
            Err(ViralityError::WrongWidth {
                expected: EDGE_FEATURE_COUNT,
                got: 10,
                index: 0
            })
        ));
        let one_sided = vec![
            interaction(0, true, EventType::Trending),
            interaction(1, false, EventType::Trending),
        ];
        assert!(matches!(
            train_virality(&one_sided, &BlrConfig::default()),
            Err(ViralityError::SingleClass)
        ));
    }

    #[test]
    fn corpus_is_balanced_deterministic_and_in_range() {
        let cfg = ViralityCorpusConfig {
            n_messages: 200,
            rng_seed: 21,
            ..ViralityCorpusConfig::default()
        };
        let samples = synthesize_interaction_corpus(&cfg).unwrap();
        let again = synthesize_interaction_corpus(&cfg).unwrap();
        assert_eq!(samples, again, "same seed, same corpus");

        let mut by_message: BTreeMap<u64, (usize, EventType)> = BTreeMap::new();
        for s in &samples {
            assert_eq!(s.x.len(), EDGE_FEATURE_COUNT);
            let e = by_message.entry(s.message_id).or_insert((0, s.event_type));
            e.0 += 1;
            assert_eq!(e.1, s.event_type, "one label per message");
        }
        assert_eq!(by_message.len(), 200);
        let trending = by_message.values().filter(|(_, t)| t.is_trending()).count();
        assert_eq!(trending, 100, "a 0.5 fraction splits the corpus in half");
        for (n, _) in by_message.values() {
            assert!((3..=15).contains(n));
        }

        let other = synthesize_interaction_corpus(&ViralityCorpusConfig {
            rng_seed: 22,
            ..cfg
        })
        .unwrap();
        assert_ne!(samples, other, "different seed, different corpus");
    }

    /// Train on one corpus, score interactions of a fresh one: the planted
    /// reactor profile must be learnable.
    #[test]
    fn planted_reactors_are_learnable_per_interaction() {
        let train_cfg = ViralityCorpusConfig {
            n_messages: 300,
            rng_seed: 31,
            ..ViralityCorpusConfig::default()
        };
        let test_cfg = ViralityCorpusConfig {
            n_messages: 200,
            rng_seed: 32,
            ..ViralityCorpusConfig::default()
        };
        let train = synthesize_interaction_corpus(&train_cfg).unwrap();
        let test = synthesize_interaction_corpus(&test_cfg).unwrap();
        let model = train_virality(&train, &BlrConfig::default()).unwrap();

        let labels: Vec<u8> = test.iter().map(|s| s.event_type.as_label()).collect();
        let scores: Vec<f64> = test
            .iter()
            .map(|s| model.predict_proba(&s.x).unwrap())
            .collect();
        let auc = eval::auc_roc(&labels, &scores).unwrap();
        assert!(auc > 0.7, "per-interaction auc {auc}");
    }

    #[test]
    fn featureless_labels_score_at_chance() {
        let mut cfg = ViralityCorpusConfig {
            n_messages: 300,
            signal_shift: 0.0,
            rng_seed: 41,
            ..ViralityCorpusConfig::default()
        };
        let train = synthesize_interaction_corpus(&cfg).unwrap();
        cfg.rng_seed = 42;
        let test = synthesize_interaction_corpus(&cfg).unwrap();
        let model = train_virality(&train, &BlrConfig::default()).unwrap();
        let labels: Vec<u8> = test.iter().map(|s| s.event_type.as_label()).collect();
        let scores: Vec<f64> = test
            .iter()
            .map(|s| model.predict_proba(&s.x).unwrap())
            .collect();
        let auc = eval::auc_roc(&labels, &scores).unwrap();
        assert!((auc - 0.5).abs() < 0.1, "no-signal auc {auc}");
    }

    #[test]
    fn message_level_evaluation_beats_floor_on_planted_corpus() {
        let train = synthesize_interaction_corpus(&ViralityCorpusConfig {
            n_messages: 300,
            rng_seed: 51,
            ..ViralityCorpusConfig::default()
        })
        .unwrap();
        let test = synthesize_interaction_corpus(&ViralityCorpusConfig {
            n_messages: 200,
            rng_seed: 52,
            ..ViralityCorpusConfig::default()
        })
        .unwrap();
        let model = train_virality(&train, &BlrConfig::default()).unwrap();
        let evaluation = evaluate_virality(&model, &test, EventType::Trending).unwrap();

        assert_eq!(evaluation.report.procedure, "virality");
        assert_eq!(evaluation.verdicts.len(), 200);
        for row in &evaluation.verdicts {
            let v = &row.verdict;
            assert_eq!(v.votes_trending + v.votes_informative, v.n_interactions);
            assert!(row.truth.is_some());
        }
        let f1 = evaluation.report.pooled.f1;
        assert!(f1 >= 0.65, "message-level f1 {f1}");
        assert!(evaluation.report.folds[0].auc > 0.7);
    }

    #[test]
    fn evaluation_rejects_conflicting_message_labels() {
        let model = sign_model();
        let samples = vec![
            interaction(9, true, EventType::Trending),
            interaction(9, true, EventType::Informative),
        ];
        assert!(matches!(
            evaluate_virality(&model, &samples, EventType::Trending),
            Err(ViralityError::ConflictingTruth { message_id: 9 })
        ));
    }

    #[test]
    fn verdict_csv_has_the_documented_shape() {
        let rows = vec![
            VerdictRow {
                verdict: ViralityVerdict {
                    message_id: 3,
                    n_interactions: 5,
                    votes_trending: 3,
                    votes_informative: 2,
                    verdict: EventType::Trending,
                },
                truth: Some(EventType::Informative),
            },
            VerdictRow {
                verdict: ViralityVerdict {
                    message_id: 4,
                    n_interactions: 2,
                    votes_trending: 0,
                    votes_informative: 2,
                    verdict: EventType::Informative,
                },
                truth: None,
            },
        ];
        let mut buf = Vec::new();
        write_verdicts_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "message_id,n,votes_trending,verdict,truth");
        assert_eq!(lines[1], "3,5,3,trending,informative");
        assert_eq!(lines[2], "4,2,0,informative,");
    }

    #[test]
    fn interactions_round_trip_through_jsonl() {
        let samples = synthesize_interaction_corpus(&ViralityCorpusConfig {
            n_messages: 5,
            rng_seed: 61,
            ..ViralityCorpusConfig::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_interactions_jsonl(&mut buf, &samples).unwrap();
        let back = read_interactions_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, samples);

        let bad = r#"{"message_id":0,"x":[1.0,2.0],"event_type":"trending"}"#;
        let err = read_interactions_jsonl(bad.as_bytes()).unwrap_err();
        assert!(matches!(err, ViralityError::Parse { line: 1, .. }));
    }

    #[test]
    fn corpus_config_validation() {
        let base = ViralityCorpusConfig::default();
        assert!(base.validate().is_ok());
        for bad in [
            ViralityCorpusConfig {
                n_messages: 1,
                ..base.clone()
            },
            ViralityCorpusConfig {
                trending_fraction: 0.0,
                ..base.clone()
            },
            ViralityCorpusConfig {
                interactions_min: 0,
                ..base.clone()
            },
            ViralityCorpusConfig {
                interactions_min: 9,
                interactions_max: 4,
                ..base.clone()
            },
            ViralityCorpusConfig {
                trend_reactor_fraction: 1.5,
                ..base.clone()
            },
            ViralityCorpusConfig {
                signal_shift: f64::NAN,
                ..base.clone()
            },
        ] {
            assert!(matches!(
                synthesize_interaction_corpus(&bad),
                Err(ViralityError::BadConfig(_))
            ));
        }
    }
}
