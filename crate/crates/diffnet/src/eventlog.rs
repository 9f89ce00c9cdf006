//! Event logs: posts, reactions, topics, profiles, and sentiment scoring.
//!
//! The wire format for events is line-delimited JSON with the fields
//! `event_id, user, ts, kind, ref_event, ref_author, tokens, hashtags, urls,
//! media, mentions, sentiment`; the last six are optional and default to
//! empty/zero/absent. Original posts (`kind = "tweet"`) carry no reference;
//! reactions (retweet, quote, reply, favorite) always reference the event and
//! author they react to. Ingestion is tolerant: malformed lines are counted
//! and reported per line, never silently dropped, and references to events
//! outside the log are surfaced as dangling rather than treated as fatal.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::NodeId;

#[derive(Debug, Error)]
pub enum EventLogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("duplicate event id {0}")]
    DuplicateEventId(u64),
    #[error("invalid record (event id {event_id}): {reason}")]
    InvalidRecord { event_id: u64, reason: String },
    #[error("topic: {0}")]
    Topic(String),
    #[error("lexicon line {line}: {reason}")]
    Lexicon { line: usize, reason: String },
}

/// Kind of a logged event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Tweet,
    Retweet,
    Quote,
    Reply,
    Favorite,
}

impl EventKind {
    /// Everything except an original post reacts to an earlier event.
    pub fn is_reaction(self) -> bool {
        self != EventKind::Tweet
    }

    /// Forwarding reactions re-publish the referenced content to the
    /// reactor's own audience; these are the actions that count as diffusion.
    pub fn is_forward(self) -> bool {
        matches!(self, EventKind::Retweet | EventKind::Quote)
    }
}

fn is_zero(n: &u32) -> bool {
    *n == 0
}

/// One post or reaction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_id: u64,
    pub user: NodeId,
    /// Seconds since the Unix epoch, UTC; never negative.
    pub ts: i64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_event: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_author: Option<NodeId>,
    /// Lowercase content tokens.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tokens: Vec<String>,
    #[serde(default, rename = "hashtags", skip_serializing_if = "is_zero")]
    pub hashtag_count: u32,
    #[serde(default, rename = "urls", skip_serializing_if = "is_zero")]
    pub url_count: u32,
    #[serde(default, rename = "media", skip_serializing_if = "is_zero")]
    pub media_count: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mentions: Vec<NodeId>,
    /// Author-supplied polarity in `[-1, 1]`; when absent, downstream code
    /// falls back to lexicon scoring of `tokens`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment: Option<f64>,
}

impl EventRecord {
    /// Checks the structural invariants every stored record satisfies.
    pub fn validate(&self) -> Result<(), String> {
        if self.ts < 0 {
            return Err(format!("negative timestamp {}", self.ts));
        }
        match (self.kind.is_reaction(), self.ref_event, self.ref_author) {
            (false, None, None) => {}
            (false, _, _) => return Err("original post must not carry references".into()),
            (true, Some(_), Some(_)) => {}
            (true, _, _) => {
                return Err(format!(
                    "{:?} reaction must carry both ref_event and ref_author",
                    self.kind
                ))
            }
        }
        if let Some(s) = self.sentiment {
            if !(-1.0..=1.0).contains(&s) || s.is_nan() {
                return Err(format!("sentiment {s} outside [-1, 1]"));
            }
        }
        Ok(())
    }
}

/// A topic defined by its keyword set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub name: String,
    pub keywords: BTreeSet<String>,
}

impl Topic {
    /// Builds a topic, lowercasing keywords; empty keyword sets are invalid.
    pub fn new<S: Into<String>>(name: S, keywords: &[&str]) -> Result<Self, EventLogError> {
        let topic = Topic {
            name: name.into(),
            keywords: keywords.iter().map(|k| k.to_lowercase()).collect(),
        };
        topic.validate()?;
        Ok(topic)
    }

    pub fn validate(&self) -> Result<(), EventLogError> {
        if self.keywords.is_empty() {
            return Err(EventLogError::Topic(format!(
                "topic {:?} has no keywords",
                self.name
            )));
        }
        if let Some(k) = self.keywords.iter().find(|k| k.chars().any(|c| c.is_uppercase())) {
            return Err(EventLogError::Topic(format!(
                "topic {:?} keyword {k:?} is not lowercase",
                self.name
            )));
        }
        Ok(())
    }

    pub fn read_json<R: io::Read>(reader: R) -> Result<Self, EventLogError> {
        let topic: Topic = serde_json::from_reader(reader)
            .map_err(|e| EventLogError::Topic(format!("invalid topic JSON: {e}")))?;
        topic.validate()?;
        Ok(topic)
    }

    pub fn from_json_file<P: AsRef<Path>>(path: P) -> Result<Self, EventLogError> {
        Self::read_json(BufReader::new(File::open(path)?))
    }

    pub fn write_json_file<P: AsRef<Path>>(&self, path: P) -> Result<(), EventLogError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)
            .map_err(|e| EventLogError::Topic(e.to_string()))?;
        w.write_all(b"\n")?;
        Ok(w.flush()?)
    }
}

/// True when any token of the record matches a topic keyword.
pub fn is_relevant(record: &EventRecord, topic: &Topic) -> bool {
    record.tokens.iter().any(|t| topic.keywords.contains(t))
}

/// Word-weight sentiment lexicon.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lexicon {
    weights: BTreeMap<String, f64>,
}

impl Lexicon {
    pub fn new(entries: impl IntoIterator<Item = (String, f64)>) -> Self {
        Lexicon {
            weights: entries.into_iter().collect(),
        }
    }

    /// Parses the `word weight` line format (whitespace separated).
    pub fn read<R: BufRead>(reader: R) -> Result<Self, EventLogError> {
        let mut weights = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next().map(str::parse::<f64>), parts.next()) {
                (Some(word), Some(Ok(weight)), None) => {
                    weights.insert(word.to_lowercase(), weight);
                }
                _ => {
                    return Err(EventLogError::Lexicon {
                        line: line_no,
                        reason: format!("expected `word weight`, got {line:?}"),
                    })
                }
            }
        }
        Ok(Lexicon { weights })
    }

    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<Self, EventLogError> {
        Self::read(BufReader::new(File::open(path)?))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Mean weight of the tokens present in the lexicon, clamped to
    /// `[-1, 1]`; tokens without an entry do not dilute the average, and a
    /// fully unmatched token list scores exactly 0.
    pub fn score(&self, tokens: &[String]) -> f64 {
        let mut sum = 0.0;
        let mut matched = 0usize;
        for t in tokens {
            if let Some(w) = self.weights.get(t) {
                sum += w;
                matched += 1;
            }
        }
        (sum / matched.max(1) as f64).clamp(-1.0, 1.0)
    }
}

/// Polarity of a record: the author-supplied score when present, otherwise
/// the lexicon fallback (0 when no lexicon is supplied).
pub fn record_sentiment(record: &EventRecord, lexicon: Option<&Lexicon>) -> f64 {
    record
        .sentiment
        .unwrap_or_else(|| lexicon.map_or(0.0, |l| l.score(&record.tokens)))
}

/// Static account facts as of the observation window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user: NodeId,
    /// Account creation time, seconds since epoch; at or before the start of
    /// the observation window.
    pub created: i64,
    pub has_description: bool,
    /// Global follower count from the profile snapshot.
    pub followers: u64,
    /// Global friend (followed accounts) count from the profile snapshot.
    pub friends: u64,
}

/// Immutable, time-sorted event collection with lookup indexes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    records: Vec<EventRecord>,
    by_id: BTreeMap<u64, usize>,
    by_user: BTreeMap<NodeId, Vec<usize>>,
    reactions_to: BTreeMap<u64, Vec<usize>>,
    window: (i64, i64),
}

impl EventLog {
    /// Builds a log from records, sorting by `(ts, event_id)` and indexing.
    ///
    /// All records must pass [`EventRecord::validate`] and ids must be
    /// unique; use [`ingest`] for tolerant loading of untrusted data. The
    /// observation window is the `[min ts, max ts]` span of the records
    /// (`(0, 0)` for an empty log).
    pub fn from_records(mut records: Vec<EventRecord>) -> Result<Self, EventLogError> {
        for r in &records {
            r.validate().map_err(|reason| EventLogError::InvalidRecord {
                event_id: r.event_id,
                reason,
            })?;
        }
        records.sort_by_key(|r| (r.ts, r.event_id));
        let mut by_id = BTreeMap::new();
        let mut by_user: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        let mut reactions_to: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (idx, r) in records.iter().enumerate() {
            if by_id.insert(r.event_id, idx).is_some() {
                return Err(EventLogError::DuplicateEventId(r.event_id));
            }
            by_user.entry(r.user).or_default().push(idx);
            if let Some(referenced) = r.ref_event {
                reactions_to.entry(referenced).or_default().push(idx);
            }
        }
        let window = match (records.first(), records.last()) {
            (Some(first), Some(last)) => (first.ts, last.ts),
            _ => (0, 0),
        };
        Ok(EventLog {
            records,
            by_id,
            by_user,
            reactions_to,
            window,
        })
    }

    /// Records in `(ts, event_id)` order.
    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `[min ts, max ts]` of the stored records.
    pub fn window(&self) -> (i64, i64) {
        self.window
    }

    pub fn get(&self, event_id: u64) -> Option<&EventRecord> {
        self.by_id.get(&event_id).map(|&i| &self.records[i])
    }

    /// Events authored by `user` in time order.
    pub fn by_user(&self, user: NodeId) -> impl Iterator<Item = &EventRecord> {
        self.by_user
            .get(&user)
            .into_iter()
            .flatten()
            .map(|&i| &self.records[i])
    }

    /// Reactions referencing `event_id`, in time order.
    pub fn reactions_to(&self, event_id: u64) -> impl Iterator<Item = &EventRecord> {
        self.reactions_to
            .get(&event_id)
            .into_iter()
            .flatten()
            .map(|&i| &self.records[i])
    }

    /// Ids referenced by reactions but absent from the log.
    pub fn dangling_refs(&self) -> Vec<u64> {
        self.reactions_to
            .keys()
            .filter(|id| !self.by_id.contains_key(id))
            .copied()
            .collect()
    }
}

/// A rejected input line and the reason it failed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MalformedLine {
    pub line: usize,
    pub reason: String,
}

/// Result of tolerant ingestion: the clean log plus everything that was
/// rejected or looks suspicious.
#[derive(Debug)]
pub struct IngestReport {
    pub log: EventLog,
    pub profiles: Vec<UserProfile>,
    pub malformed_events: Vec<MalformedLine>,
    pub malformed_profiles: Vec<MalformedLine>,
    /// Referenced event ids that do not exist in the log.
    pub dangling_refs: Vec<u64>,
}

/// Parses line-delimited JSON events, separating valid records from
/// malformed lines (bad JSON, invariant violations, duplicate ids).
pub fn read_events<R: BufRead>(
    reader: R,
) -> Result<(Vec<EventRecord>, Vec<MalformedLine>), EventLogError> {
    let mut records = Vec::new();
    let mut malformed = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<EventRecord>(&line) {
            Ok(record) => match record.validate() {
                Ok(()) if seen.insert(record.event_id) => records.push(record),
                Ok(()) => malformed.push(MalformedLine {
                    line: line_no,
                    reason: format!("duplicate event id {}", record.event_id),
                }),
                Err(reason) => malformed.push(MalformedLine {
                    line: line_no,
                    reason,
                }),
            },
            Err(e) => malformed.push(MalformedLine {
                line: line_no,
                reason: e.to_string(),
            }),
        }
    }
    Ok((records, malformed))
}

/// Parses line-delimited JSON profiles; duplicate users are malformed.
pub fn read_profiles<R: BufRead>(
    reader: R,
) -> Result<(Vec<UserProfile>, Vec<MalformedLine>), EventLogError> {
    let mut profiles = Vec::new();
    let mut malformed = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<UserProfile>(&line) {
            Ok(p) if seen.insert(p.user) => profiles.push(p),
            Ok(p) => malformed.push(MalformedLine {
                line: line_no,
                reason: format!("duplicate profile for user {}", p.user),
            }),
            Err(e) => malformed.push(MalformedLine {
                line: line_no,
                reason: e.to_string(),
            }),
        }
    }
    profiles.sort_by_key(|p| p.user);
    Ok((profiles, malformed))
}

/// Loads an event file and a profile file, reporting malformed lines and
/// dangling references alongside the clean data.
pub fn ingest<P: AsRef<Path>, Q: AsRef<Path>>(
    events_path: P,
    profiles_path: Q,
) -> Result<IngestReport, EventLogError> {
    let (records, malformed_events) =
        read_events(BufReader::new(File::open(events_path)?))?;
    let (profiles, malformed_profiles) =
        read_profiles(BufReader::new(File::open(profiles_path)?))?;
    let log = EventLog::from_records(records)?;
    let dangling_refs = log.dangling_refs();
    Ok(IngestReport {
        log,
        profiles,
        malformed_events,
        malformed_profiles,
        dangling_refs,
    })
}

/// Writes records as line-delimited JSON in log order.
pub fn write_events<W: Write>(records: &[EventRecord], writer: W) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_events_file<P: AsRef<Path>>(records: &[EventRecord], path: P) -> io::Result<()> {
    write_events(records, File::create(path)?)
}

/// Writes profiles as line-delimited JSON in ascending user order.
pub fn write_profiles<W: Write>(profiles: &[UserProfile], writer: W) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    for p in profiles {
        serde_json::to_writer(&mut w, p).map_err(io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_profiles_file<P: AsRef<Path>>(profiles: &[UserProfile], path: P) -> io::Result<()> {
    write_profiles(profiles, File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tweet(id: u64, user: u64, ts: i64, tokens: &[&str]) -> EventRecord {
        EventRecord {
            event_id: id,
            user: NodeId(user),
            ts,
            kind: EventKind::Tweet,
            ref_event: None,
            ref_author: None,
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
            hashtag_count: 0,
            url_count: 0,
            media_count: 0,
            mentions: Vec::new(),
            sentiment: None,
        }
    }

    pub(crate) fn reaction(
        id: u64,
        user: u64,
        ts: i64,
        kind: EventKind,
        ref_event: u64,
        ref_author: u64,
    ) -> EventRecord {
        EventRecord {
            kind,
            ref_event: Some(ref_event),
            ref_author: Some(NodeId(ref_author)),
            ..tweet(id, user, ts, &[])
        }
    }

    #[test]
    fn records_sort_by_time_then_id() {
        let log = EventLog::from_records(vec![
            tweet(3, 1, 50, &[]),
            tweet(1, 1, 50, &[]),
            tweet(2, 2, 10, &[]),
        ])
        .unwrap();
        let ids: Vec<u64> = log.records().iter().map(|r| r.event_id).collect();
        assert_eq!(ids, vec![2, 1, 3]);
        assert_eq!(log.window(), (10, 50));
    }

    #[test]
    fn invariants_are_enforced() {
        let mut bad = tweet(1, 1, 0, &[]);
        bad.ref_event = Some(7);
        assert!(bad.validate().is_err());

        let mut fav = reaction(2, 1, 5, EventKind::Favorite, 1, 2);
        fav.ref_author = None;
        assert!(fav.validate().is_err());

        let mut neg = tweet(3, 1, -1, &[]);
        assert!(neg.validate().is_err());
        neg.ts = 0;
        neg.sentiment = Some(1.5);
        assert!(neg.validate().is_err());

        assert!(EventLog::from_records(vec![tweet(1, 1, 0, &[]), tweet(1, 2, 3, &[])]).is_err());
    }

    #[test]
    fn ingest_counts_malformed_and_dangling() {
        let events = concat!(
            r#"{"event_id":1,"user":4,"ts":100,"kind":"tweet","tokens":["storm","warning"]}"#,
            "\n",
            "not json\n",
            r#"{"event_id":2,"user":5,"ts":130,"kind":"retweet","ref_event":1,"ref_author":4}"#,
            "\n",
            r#"{"event_id":3,"user":5,"ts":140,"kind":"reply","ref_event":99,"ref_author":9}"#,
            "\n",
            r#"{"event_id":3,"user":6,"ts":150,"kind":"tweet"}"#,
            "\n",
            r#"{"event_id":4,"user":6,"ts":-5,"kind":"tweet"}"#,
            "\n",
        );
        let (records, malformed) = read_events(events.as_bytes()).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(
            malformed.iter().map(|m| m.line).collect::<Vec<_>>(),
            vec![2, 5, 6]
        );
        let log = EventLog::from_records(records).unwrap();
        assert_eq!(log.dangling_refs(), vec![99]);
        assert_eq!(log.reactions_to(1).count(), 1);
        assert_eq!(log.by_user(NodeId(5)).count(), 2);
    }

    #[test]
    fn events_round_trip_bytes() {
        let records = vec![
            EventRecord {
                sentiment: Some(0.25),
                hashtag_count: 2,
                mentions: vec![NodeId(9)],
                ..tweet(1, 4, 100, &["storm", "@9"])
            },
            reaction(2, 5, 130, EventKind::Quote, 1, 4),
        ];
        let mut bytes = Vec::new();
        write_events(&records, &mut bytes).unwrap();
        let (reread, malformed) = read_events(bytes.as_slice()).unwrap();
        assert!(malformed.is_empty());
        assert_eq!(reread, records);
        let mut bytes2 = Vec::new();
        write_events(&reread, &mut bytes2).unwrap();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn profiles_round_trip() {
        let profiles = vec![
            UserProfile {
                user: NodeId(4),
                created: 1000,
                has_description: true,
                followers: 120,
                friends: 80,
            },
            UserProfile {
                user: NodeId(5),
                created: 2000,
                has_description: false,
                followers: 3,
                friends: 9,
            },
        ];
        let mut bytes = Vec::new();
        write_profiles(&profiles, &mut bytes).unwrap();
        let (reread, malformed) = read_profiles(bytes.as_slice()).unwrap();
        assert!(malformed.is_empty());
        assert_eq!(reread, profiles);
    }

    #[test]
    fn topic_relevance_and_validation() {
        let topic = Topic::new("weather", &["storm", "Rain"]).unwrap();
        assert!(topic.keywords.contains("rain"));
        assert!(is_relevant(&tweet(1, 1, 0, &["big", "storm"]), &topic));
        assert!(!is_relevant(&tweet(2, 1, 0, &["sunny"]), &topic));
        assert!(Topic::new("empty", &[]).is_err());
    }

    #[test]
    fn lexicon_scoring() {
        let lex = Lexicon::read("good 0.8\nbad -0.6\nawful -1.0\n".as_bytes()).unwrap();
        let score = |tokens: &[&str]| lex.score(&tokens.iter().map(|t| t.to_string()).collect::<Vec<_>>());
        // Unmatched tokens do not dilute: (0.8 - 0.6) / 2 matched words.
        assert_eq!(score(&["good", "bad", "noise"]), (0.8f64 + -0.6) / 2.0);
        assert_eq!(score(&["nothing", "matches"]), 0.0);
        // Repeated matches count per occurrence and the result clamps.
        assert_eq!(score(&["awful", "awful"]), -1.0);
        assert!(Lexicon::read("word\n".as_bytes()).is_err());

        let mut rec = tweet(1, 1, 0, &["good"]);
        assert_eq!(record_sentiment(&rec, Some(&lex)), 0.8);
        rec.sentiment = Some(-0.2);
        assert_eq!(record_sentiment(&rec, Some(&lex)), -0.2);
        rec.sentiment = None;
        assert_eq!(record_sentiment(&rec, None), 0.0);
    }
}
