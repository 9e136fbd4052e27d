//! Small-world diagnostics of a sharing graph: node-averaged clustering
//! coefficient, average shortest-path length over the largest connected
//! component, component and degree statistics.

use std::collections::{BTreeMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::SharingGraph;

/// Largest component size (non-isolated nodes) still measured exactly under
/// [`PathLengthMode::auto`].
pub const EXACT_PATH_LIMIT: usize = 20_000;
/// Sampled pairs used above [`EXACT_PATH_LIMIT`].
pub const DEFAULT_SAMPLE_PAIRS: u64 = 100_000;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("average path length is undefined for a graph without edges")]
    NoEdges,
}

/// How [`average_path_length`] visits node pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PathLengthMode {
    /// Breadth-first search from every node of the largest component.
    Exact,
    /// Mean over `pairs` distinct node pairs drawn without replacement.
    Sampled { pairs: u64, seed: u64 },
    /// Exact up to `exact_limit` non-isolated nodes, sampled above.
    Auto { exact_limit: usize, pairs: u64, seed: u64 },
}

impl PathLengthMode {
    pub fn auto(seed: u64) -> Self {
        PathLengthMode::Auto { exact_limit: EXACT_PATH_LIMIT, pairs: DEFAULT_SAMPLE_PAIRS, seed }
    }

    /// Same mode with the seed replaced.
    pub fn reseeded(self, seed: u64) -> Self {
        match self {
            PathLengthMode::Exact => PathLengthMode::Exact,
            PathLengthMode::Sampled { pairs, .. } => PathLengthMode::Sampled { pairs, seed },
            PathLengthMode::Auto { exact_limit, pairs, .. } => PathLengthMode::Auto { exact_limit, pairs, seed },
        }
    }
}

/// Method that produced a path-length value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum PathMethod {
    Exact,
    Sampled { pairs: u64, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathLength {
    pub value: f64,
    /// Node pairs averaged over.
    pub pairs: u64,
    pub method: PathMethod,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    /// Connected components among non-isolated nodes.
    pub count: usize,
    pub largest: usize,
    /// `largest / n_nonisolated`; 0 when the graph has no edges.
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphMetrics {
    pub n_total: usize,
    pub n_nonisolated: usize,
    pub links: usize,
    pub mean_degree: f64,
    /// Average over nodes of degree >= 2. `None` when there are none.
    pub clustering_c: Option<f64>,
    /// Average over all nodes, degree < 2 counted as 0.
    pub clustering_c_with_zeros: Option<f64>,
    pub path_length_l: Option<f64>,
    pub l_method: Option<PathMethod>,
    pub l_pairs: u64,
    pub component_count: usize,
    pub largest_component: usize,
    pub largest_component_fraction: Option<f64>,
}

impl GraphMetrics {
    pub fn compute(graph: &SharingGraph, mode: PathLengthMode) -> Self {
        let n_total = graph.node_count();
        let links = graph.edge_count();
        let components = component_stats(graph);
        let path = average_path_length(graph, mode).ok();
        GraphMetrics {
            n_total,
            n_nonisolated: (0..n_total).filter(|&i| graph.degree(i) > 0).count(),
            links,
            mean_degree: if n_total == 0 { 0.0 } else { 2.0 * links as f64 / n_total as f64 },
            clustering_c: clustering_coefficient(graph),
            clustering_c_with_zeros: clustering_coefficient_with_zeros(graph),
            path_length_l: path.map(|p| p.value),
            l_method: path.map(|p| p.method),
            l_pairs: path.map_or(0, |p| p.pairs),
            component_count: components.count,
            largest_component: components.largest,
            largest_component_fraction: (links > 0).then_some(components.fraction),
        }
    }
}

/// Edges among the neighbors of `node`.
fn neighbor_links(graph: &SharingGraph, node: usize) -> usize {
    let nbrs = graph.neighbors(node);
    let mut twice = 0;
    for &w in nbrs {
        twice += sorted_intersection_len(nbrs, graph.neighbors(w));
    }
    twice / 2
}

fn sorted_intersection_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn local_clustering(graph: &SharingGraph) -> Vec<Option<f64>> {
    (0..graph.node_count())
        .map(|i| {
            let k = graph.degree(i);
            (k >= 2).then(|| 2.0 * neighbor_links(graph, i) as f64 / (k * (k - 1)) as f64)
        })
        .collect()
}

/// Watts-Strogatz clustering averaged over nodes with degree >= 2.
pub fn clustering_coefficient(graph: &SharingGraph) -> Option<f64> {
    let local: Vec<f64> = local_clustering(graph).into_iter().flatten().collect();
    (!local.is_empty()).then(|| local.iter().sum::<f64>() / local.len() as f64)
}

/// Clustering averaged over every node, with degree < 2 counted as 0.
pub fn clustering_coefficient_with_zeros(graph: &SharingGraph) -> Option<f64> {
    let n = graph.node_count();
    (n > 0).then(|| local_clustering(graph).into_iter().flatten().sum::<f64>() / n as f64)
}

/// Component label per node (`usize::MAX` for isolated nodes) and component sizes.
fn components(graph: &SharingGraph) -> (Vec<usize>, Vec<usize>) {
    let n = graph.node_count();
    let mut label = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if label[start] != usize::MAX || graph.degree(start) == 0 {
            continue;
        }
        let id = sizes.len();
        label[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(v) = queue.pop_front() {
            size += 1;
            for &w in graph.neighbors(v) {
                if label[w] == usize::MAX {
                    label[w] = id;
                    queue.push_back(w);
                }
            }
        }
        sizes.push(size);
    }
    (label, sizes)
}

pub fn component_stats(graph: &SharingGraph) -> ComponentStats {
    let (_, sizes) = components(graph);
    let nonisolated: usize = sizes.iter().sum();
    let largest = sizes.iter().copied().max().unwrap_or(0);
    ComponentStats {
        count: sizes.len(),
        largest,
        fraction: if nonisolated == 0 { 0.0 } else { largest as f64 / nonisolated as f64 },
    }
}

/// Nodes of the largest component in index order; ties go to the component
/// containing the lowest node index.
pub fn largest_component(graph: &SharingGraph) -> Vec<usize> {
    let (label, sizes) = components(graph);
    let Some(best) = sizes.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))).map(|(i, _)| i) else {
        return Vec::new();
    };
    (0..graph.node_count()).filter(|&i| label[i] == best).collect()
}

pub fn degree_distribution(graph: &SharingGraph) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for i in 0..graph.node_count() {
        *hist.entry(graph.degree(i)).or_insert(0) += 1;
    }
    hist
}

/// Mean hop distance over node pairs of the largest connected component.
pub fn average_path_length(graph: &SharingGraph, mode: PathLengthMode) -> Result<PathLength, MetricsError> {
    if graph.edge_count() == 0 {
        return Err(MetricsError::NoEdges);
    }
    let members = largest_component(graph);
    let size = members.len() as u64;
    let total_pairs = size * (size - 1) / 2;

    let (pairs, seed) = match mode {
        PathLengthMode::Exact => return Ok(exact_path_length(graph, &members)),
        PathLengthMode::Sampled { pairs, seed } => (pairs, seed),
        PathLengthMode::Auto { exact_limit, pairs, seed } => {
            let nonisolated = (0..graph.node_count()).filter(|&i| graph.degree(i) > 0).count();
            if nonisolated <= exact_limit {
                return Ok(exact_path_length(graph, &members));
            }
            (pairs, seed)
        }
    };
    if pairs >= total_pairs {
        let exact = exact_path_length(graph, &members);
        return Ok(PathLength { method: PathMethod::Sampled { pairs: total_pairs, seed }, ..exact });
    }
    Ok(sampled_path_length(graph, &members, pairs, seed))
}

/// Breadth-first distances from `source`; unreached nodes stay `u32::MAX`.
/// `dist` must be all `u32::MAX` on entry and is restored before returning
/// for the nodes listed in `visited`.
fn bfs(graph: &SharingGraph, source: usize, dist: &mut [u32], visited: &mut Vec<usize>) {
    visited.clear();
    dist[source] = 0;
    visited.push(source);
    let mut head = 0;
    while head < visited.len() {
        let v = visited[head];
        head += 1;
        let d = dist[v] + 1;
        for &w in graph.neighbors(v) {
            if dist[w] == u32::MAX {
                dist[w] = d;
                visited.push(w);
            }
        }
    }
}

fn reset(dist: &mut [u32], visited: &[usize]) {
    for &v in visited {
        dist[v] = u32::MAX;
    }
}

fn exact_path_length(graph: &SharingGraph, members: &[usize]) -> PathLength {
    let n = graph.node_count();
    let from_source = |(dist, visited): &mut (Vec<u32>, Vec<usize>), s: usize| -> u64 {
        bfs(graph, s, dist, visited);
        let sum = visited.iter().map(|&v| dist[v] as u64).sum();
        reset(dist, visited);
        sum
    };

    #[cfg(feature = "parallel")]
    let ordered_sum: u64 = {
        use rayon::prelude::*;
        members.par_iter().map_init(|| (vec![u32::MAX; n], Vec::new()), |s, &v| from_source(s, v)).sum()
    };
    #[cfg(not(feature = "parallel"))]
    let ordered_sum: u64 = {
        let mut scratch = (vec![u32::MAX; n], Vec::new());
        members.iter().map(|&v| from_source(&mut scratch, v)).sum()
    };

    let size = members.len() as u64;
    let pairs = size * (size - 1) / 2;
    PathLength { value: (ordered_sum / 2) as f64 / pairs as f64, pairs, method: PathMethod::Exact }
}

fn sampled_path_length(graph: &SharingGraph, members: &[usize], pairs: u64, seed: u64) -> PathLength {
    let size = members.len() as u64;
    let total = size * (size - 1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<u64> =
        rand::seq::index::sample(&mut rng, total as usize, pairs as usize).into_iter().map(|k| k as u64).collect();
    picks.sort_unstable();

    // Decode sorted triangular indices row by row: row i holds pairs (i, j > i).
    let mut by_source: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut row = 0u64;
    let mut row_start = 0u64;
    for k in picks {
        while k >= row_start + (size - 1 - row) {
            row_start += size - 1 - row;
            row += 1;
        }
        let col = row + 1 + (k - row_start);
        let source = members[row as usize];
        match by_source.last_mut() {
            Some((s, targets)) if *s == source => targets.push(members[col as usize]),
            _ => by_source.push((source, vec![members[col as usize]])),
        }
    }

    let n = graph.node_count();
    let from_source = |(dist, visited): &mut (Vec<u32>, Vec<usize>), (s, targets): &(usize, Vec<usize>)| -> u64 {
        bfs(graph, *s, dist, visited);
        let sum = targets.iter().map(|&t| dist[t] as u64).sum();
        reset(dist, visited);
        sum
    };

    #[cfg(feature = "parallel")]
    let sum: u64 = {
        use rayon::prelude::*;
        by_source.par_iter().map_init(|| (vec![u32::MAX; n], Vec::new()), from_source).sum()
    };
    #[cfg(not(feature = "parallel"))]
    let sum: u64 = {
        let mut scratch = (vec![u32::MAX; n], Vec::new());
        by_source.iter().map(|job| from_source(&mut scratch, job)).sum()
    };

    PathLength { value: sum as f64 / pairs as f64, pairs, method: PathMethod::Sampled { pairs, seed } }
}
