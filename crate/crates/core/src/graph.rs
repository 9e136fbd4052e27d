//! Data-sharing graph construction.
//!
//! Consumers active in a window are the nodes; two consumers are linked when
//! they share at least `threshold` objects. Shared-object counts come from an
//! inverted index (object -> consumers): for each consumer `u` we walk the
//! consumer lists of its objects and tally every later consumer `v` in a
//! dense scratch row. Only pairs that actually co-occur are ever stored, and
//! rows are independent, so they are counted in parallel when the `parallel`
//! feature is on.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::Granularity;
use crate::window::WindowProfile;

/// Consumers with more than this many peers on a single object are reported.
pub const DEFAULT_FANOUT_LIMIT: usize = 5000;

/// Edge rule: at least `threshold` common objects at the given granularity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimilarityCriterion {
    pub granularity: Granularity,
    pub threshold: u32,
}

impl SimilarityCriterion {
    pub fn new(granularity: Granularity, threshold: u32) -> Result<Self, GraphError> {
        if threshold == 0 {
            return Err(GraphError::ZeroThreshold);
        }
        Ok(SimilarityCriterion { granularity, threshold })
    }

    /// Name of the threshold parameter: `s` for servers, `m` otherwise.
    pub fn symbol(&self) -> &'static str {
        match self.granularity {
            Granularity::Server => "s",
            _ => "m",
        }
    }
}

impl fmt::Display for SimilarityCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.symbol(), self.threshold)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("similarity threshold must be at least 1")]
    ZeroThreshold,
    #[error("profile objects are {profile}-level but the criterion needs {criterion}-level objects")]
    GranularityMismatch { profile: Granularity, criterion: Granularity },
    #[error("invalid edge ({u}, {v}) for a graph with {n} nodes")]
    InvalidEdge { u: usize, v: usize, n: usize },
}

/// Undirected edge between node indices `u < v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    /// Number of common objects.
    pub weight: u32,
}

/// Undirected simple graph over a sorted list of node ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharingGraph {
    nodes: Vec<String>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
}

impl SharingGraph {
    /// Builds a graph from node ids and index pairs.
    ///
    /// Pairs are canonicalized to `u < v`; self-loops and duplicates are
    /// rejected.
    pub fn new(nodes: Vec<String>, edges: impl IntoIterator<Item = Edge>) -> Result<Self, GraphError> {
        let n = nodes.len();
        let mut list: Vec<Edge> = Vec::new();
        for e in edges {
            let (u, v) = (e.u.min(e.v), e.u.max(e.v));
            if u == v || v >= n {
                return Err(GraphError::InvalidEdge { u: e.u, v: e.v, n });
            }
            list.push(Edge { u, v, weight: e.weight });
        }
        list.sort_unstable();
        if let Some(w) = list.windows(2).find(|w| (w[0].u, w[0].v) == (w[1].u, w[1].v)) {
            return Err(GraphError::InvalidEdge { u: w[1].u, v: w[1].v, n });
        }
        Ok(Self::from_sorted(nodes, list))
    }

    /// Graph on `n` nodes labelled by zero-padded index, so that label order
    /// matches index order.
    pub fn unlabeled(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        let width = n.saturating_sub(1).to_string().len();
        let nodes = (0..n).map(|i| format!("{i:0width$}")).collect();
        Self::new(nodes, pairs.into_iter().map(|(u, v)| Edge { u, v, weight: 1 }))
    }

    fn from_sorted(nodes: Vec<String>, edges: Vec<Edge>) -> Self {
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for e in &edges {
            adjacency[e.u].push(e.v);
            adjacency[e.v].push(e.u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        SharingGraph { nodes, edges, adjacency }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Sorted neighbor indices of `node`.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Writes `u v weight` lines using node ids.
    pub fn write_edgelist<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.edges {
            writeln!(out, "{} {} {}", self.nodes[e.u], self.nodes[e.v], e.weight)?;
        }
        Ok(())
    }

    /// Writes one node id per line.
    pub fn write_node_manifest<W: Write>(&self, mut out: W) -> io::Result<()> {
        for n in &self.nodes {
            writeln!(out, "{n}")?;
        }
        Ok(())
    }

    /// Writes `node: neighbor neighbor ...` lines, isolated nodes included.
    pub fn write_adjacency<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (i, node) in self.nodes.iter().enumerate() {
            write!(out, "{node}:")?;
            for &j in &self.adjacency[i] {
                write!(out, " {}", self.nodes[j])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Object id -> ids of the consumers that accessed it.
pub type InvertedIndex = BTreeMap<String, BTreeSet<String>>;

pub fn invert_index(profile: &WindowProfile) -> InvertedIndex {
    let mut index = InvertedIndex::new();
    for (consumer, objects) in &profile.accesses {
        for object in objects {
            index.entry(object.clone()).or_default().insert(consumer.clone());
        }
    }
    index
}

/// Shared-object counts for every co-occurring consumer pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoOccurrence {
    /// Sorted consumer ids; pair indices refer to this list.
    pub nodes: Vec<String>,
    /// Pairs with at least one common object, sorted by `(u, v)`.
    pub pairs: Vec<Edge>,
    /// Objects whose consumer set exceeded the fan-out limit, with set size.
    pub hot_objects: Vec<(String, usize)>,
}

impl CoOccurrence {
    /// Common-object count of two consumer ids, or 0.
    pub fn count(&self, a: &str, b: &str) -> u32 {
        let (Ok(i), Ok(j)) =
            (self.nodes.binary_search_by(|n| n.as_str().cmp(a)), self.nodes.binary_search_by(|n| n.as_str().cmp(b)))
        else {
            return 0;
        };
        let (u, v) = (i.min(j), i.max(j));
        self.pairs.binary_search_by(|e| (e.u, e.v).cmp(&(u, v))).map_or(0, |k| self.pairs[k].weight)
    }

    /// Pair map keyed by `(smaller id, larger id)`.
    pub fn to_map(&self) -> BTreeMap<(String, String), u32> {
        self.pairs.iter().map(|e| ((self.nodes[e.u].clone(), self.nodes[e.v].clone()), e.weight)).collect()
    }

    /// Graph keeping the pairs with at least `threshold` common objects.
    /// Every consumer stays in the node list.
    pub fn threshold(&self, threshold: u32) -> SharingGraph {
        let edges = self.pairs.iter().copied().filter(|e| e.weight >= threshold).collect();
        SharingGraph::from_sorted(self.nodes.clone(), edges)
    }
}

/// Counts common objects for every consumer pair sharing at least one object.
pub fn co_occurrence_counts(index: &InvertedIndex, fanout_limit: usize) -> CoOccurrence {
    let nodes: Vec<String> = index.values().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let position = |id: &String| nodes.binary_search(id).expect("consumer present in node list");
    let objects: Vec<Vec<usize>> = index.values().map(|set| set.iter().map(position).collect()).collect();
    let hot_objects =
        index.iter().filter(|(_, set)| set.len() > fanout_limit).map(|(o, set)| (o.clone(), set.len())).collect();
    let pairs = count_pairs(nodes.len(), &objects);
    CoOccurrence { nodes, pairs, hot_objects }
}

/// Row-wise pair counting. `objects[k]` holds the sorted consumer indices of
/// object `k`.
fn count_pairs(n: usize, objects: &[Vec<usize>]) -> Vec<Edge> {
    let mut by_consumer: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, consumers) in objects.iter().enumerate() {
        for &c in consumers {
            by_consumer[c].push(k);
        }
    }

    let row = |scratch: &mut (Vec<u32>, Vec<usize>), u: usize| -> Vec<Edge> {
        let (counts, touched) = scratch;
        for &k in &by_consumer[u] {
            let consumers = &objects[k];
            let start = consumers.partition_point(|&c| c <= u);
            for &v in &consumers[start..] {
                if counts[v] == 0 {
                    touched.push(v);
                }
                counts[v] += 1;
            }
        }
        touched.sort_unstable();
        let out = touched.iter().map(|&v| Edge { u, v, weight: counts[v] }).collect();
        for &v in touched.iter() {
            counts[v] = 0;
        }
        touched.clear();
        out
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let rows: Vec<Vec<Edge>> = (0..n).into_par_iter().map_init(|| (vec![0u32; n], Vec::new()), row).collect();
        rows.concat()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut scratch = (vec![0u32; n], Vec::new());
        (0..n).flat_map(|u| row(&mut scratch, u)).collect()
    }
}

/// Builds the sharing graph of one window under `criterion`.
pub fn build_sharing_graph(
    profile: &WindowProfile,
    criterion: &SimilarityCriterion,
) -> Result<SharingGraph, GraphError> {
    Ok(sharing_counts(profile, criterion.granularity, DEFAULT_FANOUT_LIMIT)?.threshold(criterion.threshold))
}

/// Co-occurrence counts of a window, checked against the expected granularity.
///
/// One call serves every threshold of a sweep via [`CoOccurrence::threshold`].
pub fn sharing_counts(
    profile: &WindowProfile,
    granularity: Granularity,
    fanout_limit: usize,
) -> Result<CoOccurrence, GraphError> {
    if profile.granularity != granularity {
        return Err(GraphError::GranularityMismatch { profile: profile.granularity, criterion: granularity });
    }
    // Profile keys are already sorted, so consumer index = position in keys.
    let nodes: Vec<String> = profile.accesses.keys().cloned().collect();
    let mut object_ids: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, objects) in profile.accesses.values().enumerate() {
        for o in objects {
            object_ids.entry(o.as_str()).or_default().push(i);
        }
    }
    let hot_objects: Vec<(String, usize)> =
        object_ids.iter().filter(|(_, c)| c.len() > fanout_limit).map(|(o, c)| (o.to_string(), c.len())).collect();
    for (o, size) in &hot_objects {
        log::warn!("object {o} is shared by {size} consumers (fan-out limit {fanout_limit})");
    }
    let objects: Vec<Vec<usize>> = object_ids.into_values().collect();
    let pairs = count_pairs(nodes.len(), &objects);
    Ok(CoOccurrence { nodes, pairs, hot_objects })
}
