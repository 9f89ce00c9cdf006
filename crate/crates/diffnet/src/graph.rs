//! Directed followership graphs.
//!
//! An edge `(v, u)` records that `u` follows `v`, i.e. posts authored by `v`
//! show up for `u`, so information travels along the edge direction `v → u`.
//! Two derived views are maintained for every node `x`:
//!
//! * followers of `x`: the accounts that follow `x` (who `x` can reach);
//! * friends of `x`: the accounts `x` follows (who can reach `x`).
//!
//! Graphs are built once (single writer) and then shared read-only; all query
//! methods take `&self`, so concurrent readers are safe by construction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of an account in the network.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u64> for NodeId {
    fn from(id: u64) -> Self {
        NodeId(id)
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    /// Accounts cannot follow themselves.
    #[error("self-link rejected: node {0} cannot follow itself")]
    SelfLink(NodeId),
    #[error("edge list line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

static EMPTY_SET: BTreeSet<NodeId> = BTreeSet::new();

/// Directed followership graph with follower and friend indexes.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SocialGraph {
    nodes: BTreeSet<NodeId>,
    /// `v -> {u : u follows v}`.
    followers: BTreeMap<NodeId, BTreeSet<NodeId>>,
    /// `u -> {v : u follows v}`; always the transpose of `followers`.
    friends: BTreeMap<NodeId, BTreeSet<NodeId>>,
    edge_count: usize,
}

impl SocialGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a node with no edges; idempotent.
    pub fn add_node(&mut self, v: NodeId) {
        self.nodes.insert(v);
    }

    /// Adds the followership edge `(v, u)`: `u` follows `v`.
    ///
    /// Duplicate edges collapse silently; self-links are rejected.
    pub fn add_edge(&mut self, v: NodeId, u: NodeId) -> Result<(), GraphError> {
        if v == u {
            return Err(GraphError::SelfLink(v));
        }
        self.nodes.insert(v);
        self.nodes.insert(u);
        if self.followers.entry(v).or_default().insert(u) {
            self.friends.entry(u).or_default().insert(v);
            self.edge_count += 1;
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn contains_node(&self, v: NodeId) -> bool {
        self.nodes.contains(&v)
    }

    pub fn has_edge(&self, v: NodeId, u: NodeId) -> bool {
        self.followers.get(&v).is_some_and(|s| s.contains(&u))
    }

    /// All nodes in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().copied()
    }

    /// All edges `(v, u)` in ascending `(v, u)` order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.followers
            .iter()
            .flat_map(|(v, us)| us.iter().map(move |u| (*v, *u)))
    }

    /// Accounts that follow `v`. Unknown nodes yield the empty set.
    pub fn followers(&self, v: NodeId) -> &BTreeSet<NodeId> {
        self.followers.get(&v).unwrap_or(&EMPTY_SET)
    }

    /// Accounts that `v` follows. Unknown nodes yield the empty set.
    pub fn friends(&self, v: NodeId) -> &BTreeSet<NodeId> {
        self.friends.get(&v).unwrap_or(&EMPTY_SET)
    }

    /// Jaccard overlap of the two accounts' combined neighborhoods.
    ///
    /// The neighborhood of `x` is `friends(x) ∪ followers(x)` with `a` and `b`
    /// themselves removed. Returns 0 when the union is empty, so the value is
    /// total and always within `[0, 1]`. Symmetric in its arguments.
    pub fn social_homogeneity(&self, a: NodeId, b: NodeId) -> f64 {
        let neighborhood = |x: NodeId| -> BTreeSet<NodeId> {
            self.friends(x)
                .union(self.followers(x))
                .copied()
                .filter(|n| *n != a && *n != b)
                .collect()
        };
        let na = neighborhood(a);
        let nb = neighborhood(b);
        let inter = na.intersection(&nb).count();
        let union = na.union(&nb).count();
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Parses the plain-text edge list format: one `v u` pair per line
    /// (whitespace separated, `u` follows `v`), blank lines and lines starting
    /// with `#` ignored, duplicate pairs collapsed.
    pub fn read_edge_list<R: BufRead>(reader: R) -> Result<Self, GraphError> {
        let mut graph = Self::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (v, u) = match (parts.next(), parts.next(), parts.next()) {
                (Some(v), Some(u), None) => (v, u),
                _ => {
                    return Err(GraphError::Parse {
                        line: line_no,
                        reason: format!("expected two node ids, got {line:?}"),
                    })
                }
            };
            let parse = |tok: &str| {
                tok.parse::<u64>().map(NodeId).map_err(|e| GraphError::Parse {
                    line: line_no,
                    reason: format!("invalid node id {tok:?}: {e}"),
                })
            };
            let (v, u) = (parse(v)?, parse(u)?);
            graph.add_edge(v, u).map_err(|e| GraphError::Parse {
                line: line_no,
                reason: e.to_string(),
            })?;
        }
        Ok(graph)
    }

    pub fn from_edge_list_file<P: AsRef<Path>>(path: P) -> Result<Self, GraphError> {
        Self::read_edge_list(BufReader::new(File::open(path)?))
    }

    /// Writes the edge list in ascending `(v, u)` order, one pair per line.
    pub fn write_edge_list<W: Write>(&self, writer: W) -> io::Result<()> {
        let mut w = BufWriter::new(writer);
        for (v, u) in self.edges() {
            writeln!(w, "{v} {u}")?;
        }
        w.flush()
    }

    pub fn write_edge_list_file<P: AsRef<Path>>(&self, path: P) -> io::Result<()> {
        self.write_edge_list(File::create(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(edges: &[(u64, u64)]) -> SocialGraph {
        let mut g = SocialGraph::new();
        for &(v, u) in edges {
            g.add_edge(NodeId(v), NodeId(u)).unwrap();
        }
        g
    }

    #[test]
    fn follower_and_friend_views_are_transposes() {
        let g = graph(&[(1, 2), (1, 3), (3, 1), (2, 3)]);
        // 2 follows 1 => 2 is a follower of 1, 1 is a friend of 2.
        assert!(g.followers(NodeId(1)).contains(&NodeId(2)));
        assert!(g.friends(NodeId(2)).contains(&NodeId(1)));
        for (v, u) in g.edges() {
            assert!(g.followers(v).contains(&u));
            assert!(g.friends(u).contains(&v));
        }
        assert_eq!(g.edge_count(), 4);
        assert_eq!(g.node_count(), 3);
    }

    #[test]
    fn self_links_are_rejected() {
        let mut g = SocialGraph::new();
        let err = g.add_edge(NodeId(5), NodeId(5)).unwrap_err();
        assert!(matches!(err, GraphError::SelfLink(NodeId(5))));
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn duplicate_edges_collapse() {
        let mut g = SocialGraph::new();
        g.add_edge(NodeId(1), NodeId(2)).unwrap();
        g.add_edge(NodeId(1), NodeId(2)).unwrap();
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn unknown_nodes_have_empty_neighborhoods() {
        let g = graph(&[(1, 2)]);
        assert!(g.followers(NodeId(99)).is_empty());
        assert!(g.friends(NodeId(99)).is_empty());
        assert_eq!(g.social_homogeneity(NodeId(98), NodeId(99)), 0.0);
    }

    #[test]
    fn homogeneity_worked_example() {
        // Neighborhoods (excluding a=10, b=11): N(a) = {1,2,3}, N(b) = {3,4}.
        // Overlap {3} over union {1,2,3,4} gives 1/4.
        let g = graph(&[(10, 1), (10, 2), (10, 3), (11, 3), (11, 4)]);
        assert_eq!(g.social_homogeneity(NodeId(10), NodeId(11)), 0.25);
        assert_eq!(g.social_homogeneity(NodeId(11), NodeId(10)), 0.25);
    }

    #[test]
    fn homogeneity_ignores_the_pair_itself() {
        // a and b follow each other and share exactly one neighbor.
        let g = graph(&[(1, 2), (2, 1), (3, 1), (3, 2)]);
        assert_eq!(g.social_homogeneity(NodeId(1), NodeId(2)), 1.0);
    }

    #[test]
    fn edge_list_round_trip_and_comments() {
        let text = "# follower graph\n1 2\n\n1 3\n2 3\n1 2\n";
        let g = SocialGraph::read_edge_list(text.as_bytes()).unwrap();
        assert_eq!(g.edge_count(), 3);
        let mut out = Vec::new();
        g.write_edge_list(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "1 2\n1 3\n2 3\n");
    }

    #[test]
    fn edge_list_parse_errors_carry_line_numbers() {
        let err = SocialGraph::read_edge_list("1 2\nx y\n".as_bytes()).unwrap_err();
        match err {
            GraphError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
        let err = SocialGraph::read_edge_list("3 3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 1, .. }));
    }
}
