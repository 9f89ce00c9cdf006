//! Property tests for the structural invariants of the library: things that
//! must hold for *every* input, not just the worked examples.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use diffnet::blr::{self, BlrConfig};
use diffnet::eval::{auc_roc, f1_score, metrics, stratified_folds};
use diffnet::eventlog::{EventKind, EventLog, EventRecord};
use diffnet::features::{edge_feature_names, Dataset, EdgeSample, TimeBin};
use diffnet::forest::{self, ForestConfig};
use diffnet::graph::{NodeId, SocialGraph};
use diffnet::simulator::{run_asic_traced, AsicParams, EdgeProbability};
use diffnet::virality::{verdict_from_votes, EventType};

fn small_edges() -> impl Strategy<Value = Vec<(u64, u64)>> {
    proptest::collection::vec(
        (0u64..12, 0u64..12).prop_filter("no self loops", |(a, b)| a != b),
        1..40,
    )
}

/// Integer scores force heavy ties, the interesting case for AUC.
fn labeled_scores() -> impl Strategy<Value = Vec<(u8, i8)>> {
    proptest::collection::vec((0u8..=1, -3i8..=3), 2..60)
}

/// The exhaustive O(P·N) definition: wins plus half-credit for ties.
fn pairwise_auc(labels: &[u8], scores: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        if yi != 1 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj != 0 {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn tweet(event_id: u64, user: u64, ts: i64) -> EventRecord {
    EventRecord {
        event_id,
        user: NodeId(user),
        ts,
        kind: EventKind::Tweet,
        ref_event: None,
        ref_author: None,
        tokens: vec!["w".to_string()],
        hashtag_count: 0,
        url_count: 0,
        media_count: 0,
        mentions: vec![],
        sentiment: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn homogeneity_is_symmetric_and_bounded(edges in small_edges()) {
        let mut g = SocialGraph::new();
        for &(v, u) in &edges {
            g.add_edge(NodeId(v), NodeId(u)).unwrap();
        }
        let nodes: Vec<NodeId> = g.nodes().collect();
        for &a in &nodes {
            for &b in &nodes {
                let ab = g.social_homogeneity(a, b);
                let ba = g.social_homogeneity(b, a);
                prop_assert!((0.0..=1.0).contains(&ab));
                prop_assert_eq!(ab, ba);
            }
        }
    }

    #[test]
    fn edge_lists_round_trip(edges in small_edges()) {
        let mut g = SocialGraph::new();
        for &(v, u) in &edges {
            g.add_edge(NodeId(v), NodeId(u)).unwrap();
        }
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let back = SocialGraph::read_edge_list(buf.as_slice()).unwrap();
        let before: Vec<(NodeId, NodeId)> = g.edges().collect();
        let after: Vec<(NodeId, NodeId)> = back.edges().collect();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn auc_agrees_with_the_pairwise_definition(data in labeled_scores()) {
        let labels: Vec<u8> = data.iter().map(|&(y, _)| y).collect();
        let scores: Vec<f64> = data.iter().map(|&(_, s)| f64::from(s)).collect();
        prop_assume!(labels.iter().any(|&y| y == 1) && labels.iter().any(|&y| y == 0));

        let auc = auc_roc(&labels, &scores).unwrap();
        prop_assert!((0.0..=1.0).contains(&auc));
        prop_assert_eq!(auc, pairwise_auc(&labels, &scores));

        // Negating the scores mirrors the ranking.
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        let mirrored = auc_roc(&labels, &negated).unwrap();
        prop_assert!((auc + mirrored - 1.0).abs() < 1e-12);
    }

    #[test]
    fn confusion_counts_partition_the_test_set(data in proptest::collection::vec((0u8..=1, 0u8..=1), 1..80)) {
        let labels: Vec<u8> = data.iter().map(|&(y, _)| y).collect();
        let predictions: Vec<u8> = data.iter().map(|&(_, p)| p).collect();
        let m = metrics(&labels, &predictions).unwrap();
        let total = m.true_positives + m.false_positives + m.true_negatives + m.false_negatives;
        prop_assert_eq!(total as usize, labels.len());
        prop_assert_eq!(
            (m.true_positives + m.false_negatives) as usize,
            labels.iter().filter(|&&y| y == 1).count()
        );
        if m.f1_defined {
            prop_assert!((0.0..=1.0).contains(&m.f1));
        }
    }

    #[test]
    fn f1_is_the_harmonic_mean(p in 0.0f64..=1.0, r in 0.0f64..=1.0) {
        let f1 = f1_score(p, r);
        if p + r == 0.0 {
            prop_assert_eq!(f1, 0.0);
        } else {
            prop_assert!((f1 - 2.0 * p * r / (p + r)).abs() < 1e-15);
            prop_assert!(f1 <= p.max(r) + 1e-15);
            prop_assert!(f1 >= 0.0);
        }
    }

    #[test]
    fn folds_partition_and_respect_classes(
        positives in 4usize..30,
        negatives in 4usize..30,
        k in 2usize..=4,
        seed in any::<u64>(),
    ) {
        prop_assume!(positives >= k && negatives >= k);
        let mut labels = vec![1u8; positives];
        labels.extend(vec![0u8; negatives]);
        let folds = stratified_folds(&labels, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut seen = BTreeSet::new();
        for fold in &folds {
            for &i in fold {
                prop_assert!(seen.insert(i), "index {} in two folds", i);
            }
        }
        prop_assert_eq!(seen.len(), labels.len());
        for fold in &folds {
            let pos = fold.iter().filter(|&&i| labels[i] == 1).count();
            let neg = fold.len() - pos;
            // Round-robin assignment puts floor/ceil of each class everywhere.
            prop_assert!(pos >= positives / k && pos <= positives / k + 1);
            prop_assert!(neg >= negatives / k && neg <= negatives / k + 1);
        }
    }

    #[test]
    fn time_bins_tile_the_day(ts in -500_000_000i64..500_000_000, days in 1i64..300) {
        let bin = TimeBin::of_timestamp(ts);
        prop_assert!(bin.index() < 4);
        prop_assert_eq!(bin, TimeBin::of_timestamp(ts + days * 86_400));
        let second_of_day = ts.rem_euclid(86_400);
        prop_assert_eq!(bin.index() as i64, second_of_day / 21_600);
    }

    #[test]
    fn log_window_spans_exactly_the_records(times in proptest::collection::vec(0i64..20_000, 1..50)) {
        let records: Vec<EventRecord> = times
            .iter()
            .enumerate()
            .map(|(i, &ts)| tweet(i as u64 + 1, i as u64 % 7, ts))
            .collect();
        let log = EventLog::from_records(records).unwrap();
        let (start, end) = log.window();
        prop_assert_eq!(start, *times.iter().min().unwrap());
        prop_assert_eq!(end, *times.iter().max().unwrap());
        let sorted: Vec<i64> = log.records().iter().map(|r| r.ts).collect();
        prop_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn column_selection_projects_consistently(
        keep_mask in proptest::collection::vec(any::<bool>(), 55),
        rows in 1usize..8,
    ) {
        let keep: Vec<usize> = keep_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| k.then_some(i))
            .collect();
        prop_assume!(!keep.is_empty());
        let schema = edge_feature_names();
        let ds = Dataset {
            schema: schema.clone(),
            samples: (0..rows)
                .map(|r| EdgeSample {
                    src: NodeId(r as u64),
                    dst: NodeId(r as u64 + 1),
                    bin: TimeBin::new(0).unwrap(),
                    x: (0..55).map(|j| (r * 100 + j) as f64).collect(),
                    label: (r % 2) as u8,
                })
                .collect(),
            skipped_missing_profile: 0,
        };
        let reduced = ds.select_columns(&keep).unwrap();
        prop_assert_eq!(reduced.schema.len(), keep.len());
        for (pos, &j) in keep.iter().enumerate() {
            prop_assert_eq!(&reduced.schema[pos], &schema[j]);
        }
        for (orig, red) in ds.samples.iter().zip(&reduced.samples) {
            prop_assert_eq!(red.x.len(), keep.len());
            for (pos, &j) in keep.iter().enumerate() {
                prop_assert_eq!(red.x[pos], orig.x[j]);
            }
            prop_assert_eq!(red.label, orig.label);
        }
    }

    #[test]
    fn verdicts_follow_the_vote_threshold(
        votes_trending in 0usize..=40,
        extra in 0usize..=40,
        tie_is_trending in any::<bool>(),
    ) {
        let n = votes_trending + extra;
        prop_assume!(n >= 1);
        let tie = if tie_is_trending { EventType::Trending } else { EventType::Informative };
        let verdict = verdict_from_votes(votes_trending, n, tie).unwrap();
        let expected = if 2 * votes_trending > n {
            EventType::Trending
        } else if 2 * votes_trending < n {
            EventType::Informative
        } else {
            tie
        };
        prop_assert_eq!(verdict, expected);
    }

    #[test]
    fn cascades_respect_the_activation_rules(
        edges in small_edges(),
        p_percent in prop_oneof![Just(0u8), Just(30), Just(70), Just(100)],
        rng_seed in any::<u64>(),
        horizon in prop_oneof![Just(10.0f64), Just(86_400.0)],
    ) {
        let mut g = SocialGraph::new();
        for &(v, u) in &edges {
            g.add_edge(NodeId(v), NodeId(u)).unwrap();
        }
        let nodes: Vec<NodeId> = g.nodes().collect();
        let seeds = vec![nodes[0], nodes[nodes.len() / 2]];
        let params = AsicParams {
            probability: EdgeProbability::Constant(f64::from(p_percent) / 100.0),
            delay_mean_s: 60.0,
            horizon_s: horizon,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let trace = run_asic_traced(&g, &seeds, &params, &mut rng).unwrap();

        let mut activated = BTreeSet::new();
        for a in &trace.cascade.activations {
            prop_assert!(activated.insert(a.node), "node activated twice");
        }
        let time_of = |n: NodeId| {
            trace
                .cascade
                .activations
                .iter()
                .find(|a| a.node == n)
                .map(|a| a.time)
        };
        for a in &trace.cascade.activations {
            match a.activator {
                None => {
                    prop_assert_eq!(a.time, 0.0, "seeds start the clock");
                    prop_assert!(seeds.contains(&a.node));
                }
                Some(parent) => {
                    prop_assert!(g.has_edge(parent, a.node), "flow follows edges");
                    prop_assert!(a.time <= horizon);
                    let parent_time = time_of(parent).expect("activator is active");
                    prop_assert!(parent_time < a.time, "activator precedes activated");
                }
            }
        }
        let mut attempted = BTreeSet::new();
        for at in &trace.attempts {
            prop_assert!(attempted.insert((at.from, at.to)), "edge attempted twice");
            prop_assert!(g.has_edge(at.from, at.to));
            prop_assert_eq!(Some(at.at), time_of(at.from));
        }
    }
}

proptest! {
    // Fitting happens inside these, so keep the case count low.
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn flipping_labels_negates_the_map_fit(
        raw in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 24..48),
        threshold in -1.0f64..1.0,
    ) {
        let rows_data: Vec<[f64; 2]> = raw.iter().map(|&(a, b)| [a, b]).collect();
        let labels: Vec<u8> = rows_data
            .iter()
            .map(|r| u8::from(r[0] + 0.3 * r[1] > threshold))
            .collect();
        prop_assume!(labels.iter().any(|&y| y == 1) && labels.iter().any(|&y| y == 0));
        let flipped: Vec<u8> = labels.iter().map(|&y| 1 - y).collect();

        let rows: Vec<&[f64]> = rows_data.iter().map(|r| r.as_slice()).collect();
        let names = vec!["a".to_string(), "b".to_string()];
        let cfg = BlrConfig::default();
        let fit = blr::fit_matrix(&names, &rows, &labels, &cfg).unwrap();
        let anti = blr::fit_matrix(&names, &rows, &flipped, &cfg).unwrap();
        prop_assume!(fit.converged && anti.converged);

        for (w, v) in fit.weights.iter().zip(&anti.weights) {
            prop_assert!((w + v).abs() < 1e-5, "weights mirror: {} vs {}", w, v);
        }
        prop_assert!((fit.intercept + anti.intercept).abs() < 1e-5);
    }

    #[test]
    fn forests_are_reproducible_and_bounded(
        raw in proptest::collection::vec((-4.0f64..4.0, -4.0f64..4.0, -4.0f64..4.0), 30..60),
        seed in any::<u64>(),
    ) {
        let rows_data: Vec<[f64; 3]> = raw.iter().map(|&(a, b, c)| [a, b, c]).collect();
        let labels: Vec<u8> = rows_data.iter().map(|r| u8::from(r[0] > 0.0)).collect();
        prop_assume!(labels.iter().any(|&y| y == 1) && labels.iter().any(|&y| y == 0));
        let rows: Vec<&[f64]> = rows_data.iter().map(|r| r.as_slice()).collect();
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let cfg = ForestConfig {
            n_trees: 12,
            max_depth: 4,
            min_leaf: 2,
            features_per_split: None,
        };
        let f1 = forest::fit_matrix(&names, &rows, &labels, &cfg, seed).unwrap();
        let f2 = forest::fit_matrix(&names, &rows, &labels, &cfg, seed).unwrap();
        let total: f64 = f1.importances().iter().sum();
        prop_assert!(total == 0.0 || (total - 1.0).abs() < 1e-9);
        for row in &rows {
            let a = f1.predict_proba(row).unwrap();
            let b = f2.predict_proba(row).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert_eq!(a, b, "same seed, same forest");
        }
        prop_assert_eq!(f1.importances(), f2.importances());
    }
}
