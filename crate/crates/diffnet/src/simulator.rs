//! Cascade simulation and synthetic data generation.
//!
//! The cascade model is an asynchronous independent cascade on the follower
//! graph: when a node activates at time `t`, it makes one attempt toward each
//! of its not-yet-active followers, succeeding with the edge's probability.
//! A successful attempt schedules the follower's activation after an
//! exponentially distributed delay; the earliest successful arrival wins, and
//! arrivals past the horizon are dropped. Every edge is attempted at most
//! once per cascade because a node activates at most once.
//!
//! [`synthesize`] builds a complete labeled world: a preferential-attachment
//! follower graph, per-user posting behavior, a background event log, and
//! topic cascades whose edge transmission probabilities follow a planted
//! logistic model `p = σ(b + w·z)` over standardized edge features measured
//! on the background log. The intercept `b` can be calibrated by bisection to
//! hit a target positive-label share, using common random numbers so every
//! candidate intercept sees the same cascade draws. The planted model is
//! recorded as [`GroundTruth`] so downstream fits can be scored against the
//! truth.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::{EventKind, EventLog, EventLogError, EventRecord, Topic, UserProfile};
use crate::features::{self, FeatureContext, TimeBin};
use crate::graph::{GraphError, NodeId, SocialGraph};
use crate::rngs;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("seed node {0} is not in the graph")]
    UnknownSeed(NodeId),
    #[error("unknown planted feature {0:?}")]
    UnknownFeature(String),
    #[error("no topic-relevant originals to root cascades for {topic:?}")]
    NoRelevantOriginals { topic: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    EventLog(#[from] EventLogError),
    #[error("serialization failed: {0}")]
    Serialize(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Per-edge transmission probability.
#[derive(Clone, Debug)]
pub enum EdgeProbability {
    /// Every edge shares one probability.
    Constant(f64),
    /// Probabilities per (source, follower) edge; edges absent from the
    /// table never transmit.
    Table(BTreeMap<(NodeId, NodeId), f64>),
}

impl EdgeProbability {
    fn get(&self, from: NodeId, to: NodeId) -> f64 {
        match self {
            EdgeProbability::Constant(p) => *p,
            EdgeProbability::Table(map) => *map.get(&(from, to)).unwrap_or(&0.0),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let check = |p: f64| -> Result<(), SimError> {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::BadParams(format!(
                    "probability {p} outside [0, 1]"
                )));
            }
            Ok(())
        };
        match self {
            EdgeProbability::Constant(p) => check(*p),
            EdgeProbability::Table(map) => map.values().try_for_each(|&p| check(p)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AsicParams {
    pub probability: EdgeProbability,
    /// Mean of the exponential transmission delay, seconds.
    pub delay_mean_s: f64,
    /// Activations later than this many seconds after the seeds are dropped.
    pub horizon_s: f64,
}

impl AsicParams {
    pub fn validate(&self) -> Result<(), SimError> {
        self.probability.validate()?;
        if !(self.delay_mean_s.is_finite() && self.delay_mean_s > 0.0) {
            return Err(SimError::BadParams(format!(
                "delay_mean_s must be positive, got {}",
                self.delay_mean_s
            )));
        }
        if !(self.horizon_s.is_finite() && self.horizon_s > 0.0) {
            return Err(SimError::BadParams(format!(
                "horizon_s must be positive, got {}",
                self.horizon_s
            )));
        }
        Ok(())
    }
}

/// One node becoming active.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Activation {
    pub node: NodeId,
    /// Seconds after the seeds activated.
    pub time: f64,
    /// The node whose attempt activated this one; `None` for seeds.
    pub activator: Option<NodeId>,
}

/// A finished cascade; activations are ordered by (time, node).
#[derive(Clone, Debug, Default)]
pub struct Cascade {
    pub activations: Vec<Activation>,
}

impl Cascade {
    pub fn len(&self) -> usize {
        self.activations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activations.is_empty()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.activations.iter().any(|a| a.node == node)
    }
}

/// One transmission attempt along an edge.
#[derive(Clone, Copy, Debug)]
pub struct EdgeAttempt {
    pub from: NodeId,
    pub to: NodeId,
    /// Time of the attempt (the activation time of `from`).
    pub at: f64,
    pub success: bool,
    /// Sampled delay for successful attempts.
    pub delay: Option<f64>,
    /// Whether the arrival fell inside the horizon.
    pub arrived: bool,
}

#[derive(Clone, Debug)]
pub struct CascadeTrace {
    pub cascade: Cascade,
    pub attempts: Vec<EdgeAttempt>,
}

/// Heap entry ordered by (time, node) so simultaneous arrivals resolve
/// deterministically.
#[derive(Clone, Copy, Debug)]
struct Arrival {
    time: f64,
    node: NodeId,
    from: Option<NodeId>,
}

impl PartialEq for Arrival {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for Arrival {}
impl PartialOrd for Arrival {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Arrival {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.node.cmp(&other.node))
            .then(self.from.cmp(&other.from))
    }
}

/// Runs one cascade and records every transmission attempt.
pub fn run_asic_traced(
    graph: &SocialGraph,
    seeds: &[NodeId],
    params: &AsicParams,
    rng: &mut impl Rng,
) -> Result<CascadeTrace, SimError> {
    params.validate()?;
    let delay_dist = Exp::new(1.0 / params.delay_mean_s)
        .map_err(|e| SimError::BadParams(format!("bad delay distribution: {e}")))?;

    let mut heap: BinaryHeap<Reverse<Arrival>> = BinaryHeap::new();
    let mut seen = BTreeSet::new();
    for &s in seeds {
        if !graph.contains_node(s) {
            return Err(SimError::UnknownSeed(s));
        }
        if seen.insert(s) {
            heap.push(Reverse(Arrival {
                time: 0.0,
                node: s,
                from: None,
            }));
        }
    }

    let mut active: BTreeSet<NodeId> = BTreeSet::new();
    let mut activations = Vec::new();
    let mut attempts = Vec::new();
    while let Some(Reverse(arrival)) = heap.pop() {
        if !active.insert(arrival.node) {
            continue; // a faster arrival already activated this node
        }
        activations.push(Activation {
            node: arrival.node,
            time: arrival.time,
            activator: arrival.from,
        });
        for &follower in graph.followers(arrival.node) {
            if active.contains(&follower) {
                continue;
            }
            let p = params.probability.get(arrival.node, follower);
            let success = rng.gen::<f64>() < p;
            let mut delay = None;
            let mut arrived = false;
            if success {
                let d = delay_dist.sample(rng).max(f64::MIN_POSITIVE);
                let at = arrival.time + d;
                delay = Some(d);
                arrived = at <= params.horizon_s;
                if arrived {
                    heap.push(Reverse(Arrival {
                        time: at,
                        node: follower,
                        from: Some(arrival.node),
                    }));
                }
            }
            attempts.push(EdgeAttempt {
                from: arrival.node,
                to: follower,
                at: arrival.time,
                success,
                delay,
                arrived,
            });
        }
    }
    Ok(CascadeTrace {
        cascade: Cascade { activations },
        attempts,
    })
}

/// Runs one cascade, returning only the activations.
pub fn run_asic(
    graph: &SocialGraph,
    seeds: &[NodeId],
    params: &AsicParams,
    rng: &mut impl Rng,
) -> Result<Cascade, SimError> {
    Ok(run_asic_traced(graph, seeds, params, rng)?.cascade)
}

/// Preferential-attachment follower graph: each new node follows
/// `edges_per_node` earlier nodes, preferring already-popular accounts, and
/// each followed account follows back with probability `reciprocity`.
pub fn generate_graph(
    n_users: usize,
    edges_per_node: usize,
    reciprocity: f64,
    rng: &mut impl Rng,
) -> Result<SocialGraph, SimError> {
    if n_users < 2 {
        return Err(SimError::BadParams(format!(
            "need at least 2 users, got {n_users}"
        )));
    }
    if edges_per_node == 0 {
        return Err(SimError::BadParams("edges_per_node must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&reciprocity) {
        return Err(SimError::BadParams(format!(
            "reciprocity must be in [0, 1], got {reciprocity}"
        )));
    }
    let mut graph = SocialGraph::new();
    for u in 0..n_users as u64 {
        graph.add_node(NodeId(u));
    }
    // Nodes enter this pool once per follower they gain, so sampling from it
    // is popularity-proportional.
    let mut pool: Vec<u64> = vec![0];
    for u in 1..n_users as u64 {
        let mut targets = BTreeSet::new();
        let want = edges_per_node.min(u as usize);
        let mut guard = 0;
        while targets.len() < want && guard < 50 * want {
            guard += 1;
            let candidate = if rng.gen::<f64>() < 0.7 {
                pool[rng.gen_range(0..pool.len())]
            } else {
                rng.gen_range(0..u)
            };
            if candidate != u {
                targets.insert(candidate);
            }
        }
        for &v in &targets {
            // u follows v: information flows v -> u.
            graph.add_edge(NodeId(v), NodeId(u))?;
            pool.push(v);
            if rng.gen::<f64>() < reciprocity {
                graph.add_edge(NodeId(u), NodeId(v))?;
                pool.push(u);
            }
        }
    }
    Ok(graph)
}

/// Per-user event-generation tendencies.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BehaviorProfile {
    pub user: NodeId,
    /// Expected originals per day falling in each six-hour bin.
    pub rate_per_bin: [f64; 4],
    /// Expected replies / favorites / non-topic forwards per day.
    pub reply_rate: f64,
    pub favorite_rate: f64,
    pub forward_rate: f64,
    pub hashtag_propensity: f64,
    pub url_propensity: f64,
    pub media_propensity: f64,
    /// Center of this user's sentiment when one is expressed, in [-1, 1].
    pub sentiment_tendency: f64,
}

/// Samples heterogeneous posting behavior: per-user volume is log-normal
/// around `avg_daily_posts` and the daily volume is split over bins by
/// jittered `bin_weights`.
pub fn sample_behaviors(
    users: &[NodeId],
    avg_daily_posts: f64,
    bin_weights: [f64; 4],
    rng: &mut impl Rng,
) -> Result<Vec<BehaviorProfile>, SimError> {
    if !(avg_daily_posts.is_finite() && avg_daily_posts > 0.0) {
        return Err(SimError::BadParams(format!(
            "avg_daily_posts must be positive, got {avg_daily_posts}"
        )));
    }
    let wsum: f64 = bin_weights.iter().sum();
    if bin_weights.iter().any(|w| *w < 0.0) || wsum <= 0.0 {
        return Err(SimError::BadParams(
            "bin_weights must be non-negative with a positive sum".into(),
        ));
    }
    // sigma 0.6 with mu = -sigma^2/2 keeps the multiplier's mean at 1.
    let volume = LogNormal::new(-0.18, 0.6)
        .map_err(|e| SimError::BadParams(format!("bad volume distribution: {e}")))?;
    let mut out = Vec::with_capacity(users.len());
    for &user in users {
        let total = avg_daily_posts * volume.sample(rng);
        let jittered: [f64; 4] = std::array::from_fn(|b| {
            bin_weights[b] / wsum * rng.gen_range(0.5..1.5)
        });
        let jsum: f64 = jittered.iter().sum();
        let rate_per_bin = std::array::from_fn(|b| total * jittered[b] / jsum);
        out.push(BehaviorProfile {
            user,
            rate_per_bin,
            reply_rate: total * rng.gen_range(0.1..0.4),
            favorite_rate: total * rng.gen_range(0.2..0.8),
            forward_rate: total * rng.gen_range(0.1..0.5),
            hashtag_propensity: rng.gen_range(0.05..0.5),
            url_propensity: rng.gen_range(0.02..0.3),
            media_propensity: rng.gen_range(0.02..0.25),
            sentiment_tendency: rng.gen_range(-0.6..0.6),
        });
    }
    Ok(out)
}

/// Everything needed to generate one synthetic world.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub edges_per_node: usize,
    pub reciprocity: f64,
    pub avg_daily_posts: f64,
    /// Relative share of daily posting volume per six-hour bin.
    pub bin_weights: [f64; 4],
    /// Days of background activity.
    pub n_days: u32,
    pub n_topics: usize,
    pub keywords_per_topic: usize,
    /// Probability that an original is about some topic.
    pub topic_affinity: f64,
    /// Edge-feature name -> coefficient of the planted transmission model
    /// (applied to standardized features).
    pub planted_weights: BTreeMap<String, f64>,
    /// Target share of graph edges that end up with a positive label for
    /// topic 0, i.e. the label mean of the extracted dataset. `None` fixes
    /// the intercept at 0.
    pub class_balance: Option<f64>,
    pub cascades_per_topic: usize,
    pub delay_mean_s: f64,
    pub horizon_s: f64,
    /// Probability that an injected forward is a quote rather than a retweet.
    pub quote_probability: f64,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 500,
            edges_per_node: 6,
            reciprocity: 0.3,
            avg_daily_posts: 4.0,
            bin_weights: [0.15, 0.3, 0.3, 0.25],
            n_days: 5,
            n_topics: 2,
            keywords_per_topic: 3,
            topic_affinity: 0.25,
            planted_weights: BTreeMap::new(),
            class_balance: None,
            cascades_per_topic: 40,
            delay_mean_s: 3600.0,
            horizon_s: 30.0 * 86_400.0,
            quote_probability: 0.2,
            rng_seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::BadParams(msg));
        if self.n_users < 2 {
            return bad(format!("n_users must be at least 2, got {}", self.n_users));
        }
        if self.edges_per_node == 0 {
            return bad("edges_per_node must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.reciprocity) {
            return bad(format!("reciprocity must be in [0, 1], got {}", self.reciprocity));
        }
        if !(self.avg_daily_posts > 0.0) {
            return bad(format!(
                "avg_daily_posts must be positive, got {}",
                self.avg_daily_posts
            ));
        }
        if self.n_days == 0 {
            return bad("n_days must be at least 1".into());
        }
        if self.n_topics == 0 {
            return bad("n_topics must be at least 1".into());
        }
        if self.keywords_per_topic == 0 {
            return bad("keywords_per_topic must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.topic_affinity) {
            return bad(format!(
                "topic_affinity must be in [0, 1], got {}",
                self.topic_affinity
            ));
        }
        for name in self.planted_weights.keys() {
            if features::edge_feature_index(name).is_none() {
                return Err(SimError::UnknownFeature(name.clone()));
            }
        }
        if let Some(balance) = self.class_balance {
            if !(balance > 0.0 && balance < 1.0) {
                return bad(format!(
                    "class_balance must be in (0, 1), got {balance}"
                ));
            }
        }
        if self.cascades_per_topic == 0 {
            return bad("cascades_per_topic must be at least 1".into());
        }
        if !(self.delay_mean_s > 0.0) || !(self.horizon_s > 0.0) {
            return bad("delay_mean_s and horizon_s must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.quote_probability) {
            return bad(format!(
                "quote_probability must be in [0, 1], got {}",
                self.quote_probability
            ));
        }
        Ok(())
    }
}

/// The planted transmission model and what actually happened on each edge.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Calibrated intercept of the planted logistic model.
    pub intercept: f64,
    pub planted_weights: BTreeMap<String, f64>,
    /// Share of all graph edges that transmitted for topic 0 — the label
    /// mean an extractor will observe on the topic-0 dataset.
    pub achieved_positive_fraction: f64,
    pub topics: Vec<TopicGroundTruth>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TopicGroundTruth {
    pub topic: String,
    /// Share of all graph edges that transmitted for this topic.
    pub realized_fraction: f64,
    /// Every edge that saw at least one attempt, sorted by (src, dst).
    pub edges: Vec<EdgeGroundTruth>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EdgeGroundTruth {
    pub src: NodeId,
    pub dst: NodeId,
    /// Planted per-attempt transmission probability.
    pub probability: f64,
    pub opportunities: u32,
    pub transmissions: u32,
}

impl GroundTruth {
    pub fn write_json<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let mut w = BufWriter::new(writer);
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| SimError::Serialize(e.to_string()))?;
        w.write_all(b"\n")?;
        Ok(w.flush()?)
    }

    pub fn write_json_file<P: AsRef<Path>>(&self, path: P) -> Result<(), SimError> {
        self.write_json(File::create(path)?)
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self, SimError> {
        serde_json::from_reader(BufReader::new(reader))
            .map_err(|e| SimError::Serialize(e.to_string()))
    }

    pub fn from_json_file<P: AsRef<Path>>(path: P) -> Result<Self, SimError> {
        Self::read_json(File::open(path)?)
    }
}

/// A complete synthetic world.
#[derive(Clone, Debug)]
pub struct Synthesis {
    pub graph: SocialGraph,
    pub log: EventLog,
    pub profiles: Vec<UserProfile>,
    pub topics: Vec<Topic>,
    pub behaviors: Vec<BehaviorProfile>,
    pub ground_truth: GroundTruth,
}

fn sigmoid(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

fn poisson_count(rate: f64, rng: &mut impl Rng) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(rate).expect("positive finite rate");
    dist.sample(rng) as u64
}

fn filler_token(rng: &mut impl Rng) -> String {
    format!("w{:03}", rng.gen_range(0..400))
}

/// Index of a background original in the generation pools.
#[derive(Clone, Copy)]
struct OriginalRef {
    event_id: u64,
    author: NodeId,
    ts: i64,
    /// Which topic the post is about, if any.
    topic: Option<usize>,
}

struct BackgroundWorld {
    records: Vec<EventRecord>,
    originals: Vec<OriginalRef>,
    next_id: u64,
}

fn generate_background(
    cfg: &SynthConfig,
    users: &[NodeId],
    behaviors: &[BehaviorProfile],
    topics: &[Topic],
) -> BackgroundWorld {
    let mut records: Vec<EventRecord> = Vec::new();
    let mut originals: Vec<OriginalRef> = Vec::new();
    let mut next_id: u64 = 1;

    // Pass 1: originals.
    for behavior in behaviors {
        let user = behavior.user;
        let mut rng = rngs::stream_rng(cfg.rng_seed, "bg", user.0);
        for day in 0..cfg.n_days as i64 {
            for bin in 0..4i64 {
                let k = poisson_count(behavior.rate_per_bin[bin as usize], &mut rng);
                for _ in 0..k {
                    let ts = day * 86_400 + bin * 21_600 + rng.gen_range(0..21_600);
                    let topic = if rng.gen::<f64>() < cfg.topic_affinity {
                        Some(rng.gen_range(0..cfg.n_topics))
                    } else {
                        None
                    };
                    let mut tokens = Vec::new();
                    let mut mentions = Vec::new();
                    if rng.gen::<f64>() < 0.1 {
                        // A directed post opens with the @-handle it targets.
                        let other = users[rng.gen_range(0..users.len())];
                        if other != user {
                            tokens.push(format!("@u{}", other.0));
                            mentions.push(other);
                        }
                    }
                    if let Some(t) = topic {
                        let kws: Vec<&String> = topics[t].keywords.iter().collect();
                        let take = rng.gen_range(1..=kws.len().min(2));
                        for kw in kws.iter().take(take) {
                            tokens.push((*kw).clone());
                        }
                    }
                    for _ in 0..rng.gen_range(2..6) {
                        tokens.push(filler_token(&mut rng));
                    }
                    if mentions.is_empty() && rng.gen::<f64>() < 0.15 {
                        let other = users[rng.gen_range(0..users.len())];
                        if other != user {
                            mentions.push(other);
                        }
                    }
                    let sentiment = if rng.gen::<f64>() < 0.5 {
                        Some(
                            (behavior.sentiment_tendency + rng.gen_range(-0.4..0.4))
                                .clamp(-1.0, 1.0),
                        )
                    } else {
                        None
                    };
                    let event_id = next_id;
                    next_id += 1;
                    records.push(EventRecord {
                        event_id,
                        user,
                        ts,
                        kind: EventKind::Tweet,
                        ref_event: None,
                        ref_author: None,
                        tokens,
                        hashtag_count: if rng.gen::<f64>() < behavior.hashtag_propensity {
                            rng.gen_range(1..3)
                        } else {
                            0
                        },
                        url_count: u32::from(rng.gen::<f64>() < behavior.url_propensity),
                        media_count: u32::from(rng.gen::<f64>() < behavior.media_propensity),
                        mentions,
                        sentiment,
                    });
                    originals.push(OriginalRef {
                        event_id,
                        author: user,
                        ts,
                        topic,
                    });
                }
            }
        }
    }

    // Pass 2: background reactions. Forwards only ever target untopical
    // originals so that edge labels stay under the cascades' control.
    let untopical: Vec<usize> = originals
        .iter()
        .enumerate()
        .filter(|(_, o)| o.topic.is_none())
        .map(|(i, _)| i)
        .collect();
    let by_index: BTreeMap<u64, usize> = originals
        .iter()
        .enumerate()
        .map(|(i, o)| (o.event_id, i))
        .collect();
    for behavior in behaviors {
        let user = behavior.user;
        let mut rng = rngs::stream_rng(cfg.rng_seed, "react", user.0);
        let days = cfg.n_days as f64;
        let pick = |pool: &[usize], rng: &mut rand_chacha::ChaCha8Rng| -> Option<OriginalRef> {
            for _ in 0..20 {
                if pool.is_empty() {
                    return None;
                }
                let target = originals[pool[rng.gen_range(0..pool.len())]];
                if target.author != user {
                    return Some(target);
                }
            }
            None
        };
        let all_pool: Vec<usize> = (0..originals.len()).collect();

        for _ in 0..poisson_count(behavior.reply_rate * days, &mut rng) {
            let Some(target) = pick(&all_pool, &mut rng) else { continue };
            let tokens = (0..rng.gen_range(2..5))
                .map(|_| filler_token(&mut rng))
                .collect();
            let ts = target.ts + 1 + rng.gen_range(0..43_200);
            records.push(EventRecord {
                event_id: next_id,
                user,
                ts,
                kind: EventKind::Reply,
                ref_event: Some(target.event_id),
                ref_author: Some(target.author),
                tokens,
                hashtag_count: 0,
                url_count: 0,
                media_count: 0,
                mentions: vec![target.author],
                sentiment: None,
            });
            next_id += 1;
        }
        for _ in 0..poisson_count(behavior.favorite_rate * days, &mut rng) {
            let Some(target) = pick(&all_pool, &mut rng) else { continue };
            let ts = target.ts + 1 + rng.gen_range(0..43_200);
            records.push(EventRecord {
                event_id: next_id,
                user,
                ts,
                kind: EventKind::Favorite,
                ref_event: Some(target.event_id),
                ref_author: Some(target.author),
                tokens: vec![],
                hashtag_count: 0,
                url_count: 0,
                media_count: 0,
                mentions: vec![],
                sentiment: None,
            });
            next_id += 1;
        }
        for _ in 0..poisson_count(behavior.forward_rate * days, &mut rng) {
            let Some(target) = pick(&untopical, &mut rng) else { continue };
            let source = &records[by_index[&target.event_id]];
            let (tokens, hashtags, urls, media) = (
                source.tokens.clone(),
                source.hashtag_count,
                source.url_count,
                source.media_count,
            );
            let ts = target.ts + 1 + rng.gen_range(0..43_200);
            records.push(EventRecord {
                event_id: next_id,
                user,
                ts,
                kind: if rng.gen::<f64>() < cfg.quote_probability {
                    EventKind::Quote
                } else {
                    EventKind::Retweet
                },
                ref_event: Some(target.event_id),
                ref_author: Some(target.author),
                tokens,
                hashtag_count: hashtags,
                url_count: urls,
                media_count: media,
                mentions: vec![target.author],
                sentiment: None,
            });
            next_id += 1;
        }
    }

    BackgroundWorld {
        records,
        originals,
        next_id,
    }
}

/// Per-edge linear terms `w·z` of the planted model for one topic, keyed by
/// (src, dst).
fn planted_linear_terms(
    cfg: &SynthConfig,
    graph: &SocialGraph,
    log: &EventLog,
    profiles: &[UserProfile],
    topic: &Topic,
) -> Result<BTreeMap<(NodeId, NodeId), f64>, SimError> {
    let ctx = FeatureContext::new(graph, log, profiles, topic, None);
    let ds = ctx.build_dataset(TimeBin::new(0).expect("bin 0 exists"));
    let planted: Vec<(usize, f64)> = cfg
        .planted_weights
        .iter()
        .map(|(name, &w)| {
            features::edge_feature_index(name)
                .map(|j| (j, w))
                .ok_or_else(|| SimError::UnknownFeature(name.clone()))
        })
        .collect::<Result<_, _>>()?;

    let n = ds.samples.len() as f64;
    let mut terms = BTreeMap::new();
    if ds.samples.is_empty() {
        return Ok(terms);
    }
    // Standardize only planted columns; constant columns contribute nothing.
    let mut moments = Vec::with_capacity(planted.len());
    for &(j, _) in &planted {
        let mean = ds.samples.iter().map(|s| s.x[j]).sum::<f64>() / n;
        let var = ds.samples.iter().map(|s| (s.x[j] - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        moments.push((mean, if std < 1e-12 { 0.0 } else { 1.0 / std }));
    }
    for s in &ds.samples {
        let eta: f64 = planted
            .iter()
            .zip(&moments)
            .map(|(&(j, w), &(mean, inv_std))| w * (s.x[j] - mean) * inv_std)
            .sum();
        terms.insert((s.src, s.dst), eta);
    }
    Ok(terms)
}

/// What a batch of cascades did, at edge granularity.
struct CascadeOutcome {
    traces: Vec<CascadeTrace>,
    /// (src, dst) -> (opportunities, transmissions). An opportunity is an
    /// attempt; a transmission is an attempt that actually activated the
    /// follower (successful, inside the horizon, and not beaten by an
    /// earlier arrival), i.e. exactly the cases that emit a forward event.
    edges: BTreeMap<(NodeId, NodeId), (u32, u32)>,
}

impl CascadeOutcome {
    /// Share of all graph edges that transmitted at least once. Extracted
    /// datasets carry one row per graph edge labelled by "did the follower
    /// ever forward", so this is exactly the label mean the extractor will
    /// observe.
    fn positive_fraction(&self, graph_edges: usize) -> f64 {
        if graph_edges == 0 {
            return 0.0;
        }
        let transmitted = self.edges.values().filter(|(_, t)| *t > 0).count();
        transmitted as f64 / graph_edges as f64
    }
}

fn run_topic_cascades(
    graph: &SocialGraph,
    roots: &[OriginalRef],
    params: &AsicParams,
    rng_seed: u64,
    topic_index: usize,
    cascades_per_topic: usize,
) -> Result<CascadeOutcome, SimError> {
    let mut traces = Vec::with_capacity(roots.len());
    let mut edges: BTreeMap<(NodeId, NodeId), (u32, u32)> = BTreeMap::new();
    for (c, root) in roots.iter().enumerate() {
        let stream = (topic_index * cascades_per_topic + c) as u64;
        let mut rng = rngs::stream_rng(rng_seed, "casc", stream);
        let trace = run_asic_traced(graph, &[root.author], params, &mut rng)?;
        for a in &trace.attempts {
            edges.entry((a.from, a.to)).or_insert((0, 0)).0 += 1;
        }
        for a in &trace.cascade.activations {
            if let Some(parent) = a.activator {
                edges.entry((parent, a.node)).or_insert((0, 0)).1 += 1;
            }
        }
        traces.push(trace);
    }
    Ok(CascadeOutcome { traces, edges })
}

/// Generates a synthetic world under a planted transmission model.
pub fn synthesize(cfg: &SynthConfig) -> Result<Synthesis, SimError> {
    cfg.validate()?;

    let mut graph_rng = rngs::stream_rng(cfg.rng_seed, "graph", 0);
    let graph = generate_graph(cfg.n_users, cfg.edges_per_node, cfg.reciprocity, &mut graph_rng)?;
    let users: Vec<NodeId> = graph.nodes().collect();

    let mut behavior_rng = rngs::stream_rng(cfg.rng_seed, "behavior", 0);
    let behaviors =
        sample_behaviors(&users, cfg.avg_daily_posts, cfg.bin_weights, &mut behavior_rng)?;

    let mut profile_rng = rngs::stream_rng(cfg.rng_seed, "profile", 0);
    let profiles: Vec<UserProfile> = users
        .iter()
        .map(|&user| UserProfile {
            user,
            created: -(profile_rng.gen_range(30..2000) as i64) * 86_400,
            has_description: profile_rng.gen::<f64>() < 0.7,
            followers: graph.followers(user).len() as u64,
            friends: graph.friends(user).len() as u64,
        })
        .collect();

    let topics: Vec<Topic> = (0..cfg.n_topics)
        .map(|t| {
            let kws: Vec<String> = (0..cfg.keywords_per_topic)
                .map(|j| format!("kw{t}_{j}"))
                .collect();
            let refs: Vec<&str> = kws.iter().map(String::as_str).collect();
            Topic::new(format!("topic_{t}"), &refs)
        })
        .collect::<Result<_, _>>()?;

    let background = generate_background(cfg, &users, &behaviors, &topics);
    let bg_log = EventLog::from_records(background.records.clone())?;

    // Cascade roots: topic-relevant originals, sampled with replacement.
    let mut roots: Vec<Vec<OriginalRef>> = Vec::with_capacity(cfg.n_topics);
    for t in 0..cfg.n_topics {
        let pool: Vec<OriginalRef> = background
            .originals
            .iter()
            .filter(|o| o.topic == Some(t))
            .copied()
            .collect();
        if pool.is_empty() {
            return Err(SimError::NoRelevantOriginals {
                topic: topics[t].name.clone(),
            });
        }
        let mut rng = rngs::stream_rng(cfg.rng_seed, "roots", t as u64);
        roots.push(
            (0..cfg.cascades_per_topic)
                .map(|_| pool[rng.gen_range(0..pool.len())])
                .collect(),
        );
    }

    // Per-topic planted linear terms over standardized background features.
    let mut linear: Vec<BTreeMap<(NodeId, NodeId), f64>> = Vec::with_capacity(cfg.n_topics);
    for topic in &topics {
        linear.push(planted_linear_terms(cfg, &graph, &bg_log, &profiles, topic)?);
    }

    let table_for = |topic: usize, intercept: f64| -> EdgeProbability {
        EdgeProbability::Table(
            linear[topic]
                .iter()
                .map(|(&edge, &eta)| (edge, sigmoid(intercept + eta)))
                .collect(),
        )
    };
    let params_for = |topic: usize, intercept: f64| AsicParams {
        probability: table_for(topic, intercept),
        delay_mean_s: cfg.delay_mean_s,
        horizon_s: cfg.horizon_s,
    };

    // Calibrate the intercept on topic 0 by bisection. Every candidate uses
    // the same cascade RNG streams (common random numbers), and the final
    // cascades reuse those streams, so the calibrated fraction is realized.
    let intercept = match cfg.class_balance {
        None => 0.0,
        Some(target) => {
            let fraction_at = |b: f64| -> Result<f64, SimError> {
                let outcome = run_topic_cascades(
                    &graph,
                    &roots[0],
                    &params_for(0, b),
                    cfg.rng_seed,
                    0,
                    cfg.cascades_per_topic,
                )?;
                Ok(outcome.positive_fraction(graph.edge_count()))
            };
            let (mut lo, mut hi) = (-15.0f64, 15.0f64);
            for _ in 0..45 {
                let mid = 0.5 * (lo + hi);
                if fraction_at(mid)? < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    };

    // Final cascades and forward injection.
    let mut records = background.records;
    let mut next_id = background.next_id;
    let mut topic_truths = Vec::with_capacity(cfg.n_topics);
    for (t, topic) in topics.iter().enumerate() {
        let outcome = run_topic_cascades(
            &graph,
            &roots[t],
            &params_for(t, intercept),
            cfg.rng_seed,
            t,
            cfg.cascades_per_topic,
        )?;
        for (c, trace) in outcome.traces.iter().enumerate() {
            let root = roots[t][c];
            let root_record_index = records
                .iter()
                .position(|r| r.event_id == root.event_id)
                .expect("root event exists");
            let (root_tokens, root_hashtags, root_urls, root_media) = {
                let r = &records[root_record_index];
                (r.tokens.clone(), r.hashtag_count, r.url_count, r.media_count)
            };
            let mut kind_rng =
                rngs::stream_rng(cfg.rng_seed, "fwd", (t * cfg.cascades_per_topic + c) as u64);
            let mut event_of: BTreeMap<NodeId, u64> = BTreeMap::new();
            event_of.insert(root.author, root.event_id);
            for a in &trace.cascade.activations {
                let Some(parent) = a.activator else { continue };
                let event_id = next_id;
                next_id += 1;
                records.push(EventRecord {
                    event_id,
                    user: a.node,
                    ts: root.ts + a.time.ceil() as i64,
                    kind: if kind_rng.gen::<f64>() < cfg.quote_probability {
                        EventKind::Quote
                    } else {
                        EventKind::Retweet
                    },
                    ref_event: Some(event_of[&parent]),
                    ref_author: Some(parent),
                    tokens: root_tokens.clone(),
                    hashtag_count: root_hashtags,
                    url_count: root_urls,
                    media_count: root_media,
                    mentions: vec![parent],
                    sentiment: None,
                });
                event_of.insert(a.node, event_id);
            }
        }
        topic_truths.push(TopicGroundTruth {
            topic: topic.name.clone(),
            realized_fraction: outcome.positive_fraction(graph.edge_count()),
            edges: outcome
                .edges
                .iter()
                .map(|(&(src, dst), &(opportunities, transmissions))| EdgeGroundTruth {
                    src,
                    dst,
                    probability: sigmoid(intercept + linear[t][&(src, dst)]),
                    opportunities,
                    transmissions,
                })
                .collect(),
        });
    }

    let achieved_positive_fraction = topic_truths[0].realized_fraction;
    let log = EventLog::from_records(records)?;
    Ok(Synthesis {
        graph,
        log,
        profiles,
        topics,
        behaviors,
        ground_truth: GroundTruth {
            intercept,
            planted_weights: cfg.planted_weights.clone(),
            achieved_positive_fraction,
            topics: topic_truths,
        },
    })
}
