//! Random-graph baselines of the same size as a measured graph, and the
//! small-world ratios against them.
//!
//! Baselines use the uniform G(n, M) model: exactly `M` distinct node pairs
//! drawn without replacement. Trial `i` of a baseline with master seed `s`
//! runs on [`derive_seed`]`(s, i)`, so trials can execute in any order (or in
//! parallel) and still give the same aggregate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::SharingGraph;
use crate::metrics::{GraphMetrics, PathLengthMode};

pub const DEFAULT_TRIALS: u32 = 20;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum BaselineError {
    #[error("{m} edges do not fit in a simple graph on {n} nodes")]
    TooManyEdges { n: usize, m: usize },
    #[error("a baseline needs at least one trial")]
    NoTrials,
    #[error("ratio undefined: {0}")]
    UndefinedRatio(String),
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Child seed for sub-stream `stream` of `master`:
/// `splitmix64(master ^ splitmix64(stream))`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

fn pair_count(n: usize) -> Option<usize> {
    (n as u128 * n.saturating_sub(1) as u128 / 2).try_into().ok()
}

/// Uniform random simple graph with exactly `n` nodes and `m` edges.
pub fn random_graph(n: usize, m: usize, seed: u64) -> Result<SharingGraph, BaselineError> {
    let total = pair_count(n).ok_or(BaselineError::TooManyEdges { n, m })?;
    if m > total {
        return Err(BaselineError::TooManyEdges { n, m });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = rand::seq::index::sample(&mut rng, total, m).into_vec();
    picks.sort_unstable();

    let mut edges = Vec::with_capacity(m);
    let (mut row, mut row_start) = (0usize, 0usize);
    for k in picks {
        while k >= row_start + (n - 1 - row) {
            row_start += n - 1 - row;
            row += 1;
        }
        edges.push((row, row + 1 + (k - row_start)));
    }
    Ok(SharingGraph::unlabeled(n, edges).expect("distinct pairs form a simple graph"))
}

/// Mean and sample standard deviation over the trials where a metric was defined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: Option<f64>,
    pub stddev: Option<f64>,
    pub defined_trials: usize,
}

impl MetricStats {
    pub fn from_values(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let defined: Vec<f64> = values.into_iter().flatten().collect();
        let k = defined.len();
        let mean = (k > 0).then(|| defined.iter().sum::<f64>() / k as f64);
        let stddev = mean.filter(|_| k > 1).map(|mu| {
            let ss: f64 = defined.iter().map(|x| (x - mu) * (x - mu)).sum();
            (ss / (k - 1) as f64).sqrt()
        });
        MetricStats { mean, stddev, defined_trials: k }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> Option<f64> {
        self.stddev.map(|s| s / (self.defined_trials as f64).sqrt())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomBaseline {
    pub n: usize,
    pub m: usize,
    pub trials: u32,
    pub seed: u64,
    pub mean_degree: f64,
    pub clustering_c: MetricStats,
    pub clustering_c_with_zeros: MetricStats,
    pub path_length_l: MetricStats,
    pub largest_component_fraction: MetricStats,
    /// Expected clustering of G(n, M): `2M / (n(n-1))`.
    pub analytic_c: f64,
    /// `ln n / ln(mean degree)`, approximate; only when mean degree > 1.
    pub analytic_l: Option<f64>,
    /// Mean degree <= 1: no giant component to speak of.
    pub degenerate: bool,
}

/// Closed-form G(n, M) estimates: `(analytic_c, analytic_l)`.
pub fn analytic_estimates(n: usize, m: usize) -> (f64, Option<f64>) {
    let c = if n < 2 { 0.0 } else { 2.0 * m as f64 / (n as f64 * (n - 1) as f64) };
    let k = if n == 0 { 0.0 } else { 2.0 * m as f64 / n as f64 };
    let l = (k > 1.0).then(|| (n as f64).ln() / k.ln());
    (c, l)
}

/// Averages [`GraphMetrics`] over `trials` independent G(n, M) graphs.
pub fn baseline_metrics(
    n: usize,
    m: usize,
    trials: u32,
    seed: u64,
    path_mode: PathLengthMode,
) -> Result<RandomBaseline, BaselineError> {
    if trials == 0 {
        return Err(BaselineError::NoTrials);
    }
    if m > pair_count(n).unwrap_or(usize::MAX) {
        return Err(BaselineError::TooManyEdges { n, m });
    }
    let trial = |i: u32| -> Result<GraphMetrics, BaselineError> {
        let trial_seed = derive_seed(seed, i as u64);
        let g = random_graph(n, m, trial_seed)?;
        debug_assert_eq!((g.node_count(), g.edge_count()), (n, m));
        Ok(GraphMetrics::compute(&g, path_mode.reseeded(derive_seed(trial_seed, u64::MAX))))
    };

    #[cfg(feature = "parallel")]
    let results: Vec<GraphMetrics> = {
        use rayon::prelude::*;
        (0..trials).into_par_iter().map(trial).collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<GraphMetrics> = (0..trials).map(trial).collect::<Result<_, _>>()?;

    let (analytic_c, analytic_l) = analytic_estimates(n, m);
    let mean_degree = if n == 0 { 0.0 } else { 2.0 * m as f64 / n as f64 };
    Ok(RandomBaseline {
        n,
        m,
        trials,
        seed,
        mean_degree,
        clustering_c: MetricStats::from_values(results.iter().map(|r| r.clustering_c)),
        clustering_c_with_zeros: MetricStats::from_values(results.iter().map(|r| r.clustering_c_with_zeros)),
        path_length_l: MetricStats::from_values(results.iter().map(|r| r.path_length_l)),
        largest_component_fraction: MetricStats::from_values(results.iter().map(|r| r.largest_component_fraction)),
        analytic_c,
        analytic_l,
        degenerate: mean_degree <= 1.0,
    })
}

/// Cut-offs for the advisory small-world verdict.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictThresholds {
    pub min_c_ratio: f64,
    pub max_l_ratio: f64,
}

impl Default for VerdictThresholds {
    fn default() -> Self {
        VerdictThresholds { min_c_ratio: 5.0, max_l_ratio: 2.0 }
    }
}

impl VerdictThresholds {
    /// Looser clustering cut-off for small, dense graphs.
    pub fn relaxed() -> Self {
        VerdictThresholds { min_c_ratio: 3.0, ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    SmallWorld,
    NotSmallWorld,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallWorldRatios {
    pub l_ratio: f64,
    pub c_ratio: f64,
    pub verdict: Verdict,
    pub thresholds: VerdictThresholds,
}

impl SmallWorldRatios {
    pub fn from_values(
        l: f64,
        l_rand: f64,
        c: f64,
        c_rand: f64,
        thresholds: VerdictThresholds,
    ) -> Result<Self, BaselineError> {
        let ratio = |num: f64, den: f64, name: &str| {
            if !num.is_finite() || !den.is_finite() || den <= 0.0 {
                Err(BaselineError::UndefinedRatio(format!("{name} = {num} / {den}")))
            } else {
                Ok(num / den)
            }
        };
        let l_ratio = ratio(l, l_rand, "L/L_rand")?;
        let c_ratio = ratio(c, c_rand, "C/C_rand")?;
        let verdict = if c_ratio >= thresholds.min_c_ratio && l_ratio <= thresholds.max_l_ratio {
            Verdict::SmallWorld
        } else {
            Verdict::NotSmallWorld
        };
        Ok(SmallWorldRatios { l_ratio, c_ratio, verdict, thresholds })
    }
}

/// `L / L_rand` and `C / C_rand` with empirical baseline means as denominators.
pub fn small_world_ratios(
    measured: &GraphMetrics,
    baseline: &RandomBaseline,
    thresholds: VerdictThresholds,
) -> Result<SmallWorldRatios, BaselineError> {
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| BaselineError::UndefinedRatio(format!("{name} undefined")));
    SmallWorldRatios::from_values(
        need(measured.path_length_l, "L")?,
        need(baseline.path_length_l.mean, "L_rand")?,
        need(measured.clustering_c, "C")?,
        need(baseline.clustering_c.mean, "C_rand")?,
        thresholds,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn edge_set(g: &SharingGraph) -> Vec<(usize, usize)> {
        g.edges().iter().map(|e| (e.u, e.v)).collect()
    }

    #[test]
    fn full_graph_for_every_seed() {
        for seed in 0..20 {
            assert_eq!(edge_set(&random_graph(3, 3, seed).unwrap()), vec![(0, 1), (0, 2), (1, 2)]);
        }
    }

    #[test]
    fn edgeless_and_overfull() {
        let g = random_graph(10, 0, 1).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (10, 0));
        assert_eq!(random_graph(4, 7, 1), Err(BaselineError::TooManyEdges { n: 4, m: 7 }));
        assert_eq!(random_graph(0, 0, 1).unwrap().node_count(), 0);
        assert_eq!(random_graph(1, 1, 1), Err(BaselineError::TooManyEdges { n: 1, m: 1 }));
    }

    #[test]
    fn exact_size_and_deterministic() {
        for seed in 0..10 {
            let g = random_graph(50, 200, seed).unwrap();
            assert_eq!((g.node_count(), g.edge_count()), (50, 200));
            assert!(g.edges().iter().all(|e| e.u < e.v));
            assert_eq!(g, random_graph(50, 200, seed).unwrap());
        }
    }

    /// C(n, k) subsets of 0..n in lexicographic order.
    fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in start..n {
                cur.push(i);
                rec(i + 1, n, k, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(0, n, k, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn edge_sets_are_uniform() {
        // All 15 pairs of 6 nodes, indexed lexicographically.
        let pairs: Vec<(usize, usize)> = (0..6).flat_map(|i| (i + 1..6).map(move |j| (i, j))).collect();
        let sets = subsets(15, 5);
        assert_eq!(sets.len(), 3003);
        let index: HashMap<Vec<(usize, usize)>, usize> =
            sets.iter().enumerate().map(|(i, s)| (s.iter().map(|&k| pairs[k]).collect(), i)).collect();

        let draws = 10_000u64;
        let mut counts = vec![0u64; sets.len()];
        for seed in 0..draws {
            let g = random_graph(6, 5, seed).unwrap();
            counts[index[&edge_set(&g)]] += 1;
        }
        let expected = draws as f64 / sets.len() as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let dof = (sets.len() - 1) as f64;
        assert!((chi2 - dof).abs() < 4.0 * (2.0 * dof).sqrt(), "chi2 = {chi2}");

        // Each edge appears in 1/3 of the graphs.
        let sigma = (draws as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for (k, _) in pairs.iter().enumerate() {
            let hits: u64 = sets.iter().zip(&counts).filter(|(s, _)| s.contains(&k)).map(|(_, c)| c).sum();
            assert!((hits as f64 - draws as f64 / 3.0).abs() < 4.0 * sigma);
        }
    }

    #[test]
    fn analytic_values() {
        let (c, _) = analytic_estimates(1542, 38000);
        assert!((c - 0.032).abs() < 0.0005);
        let (c, l) = analytic_estimates(41, 176);
        assert!((c - 0.2146).abs() < 1e-4);
        assert!((l.unwrap() - 41f64.ln() / (352.0f64 / 41.0).ln()).abs() < 1e-12);
        assert_eq!(analytic_estimates(10, 4).1, None);
    }

    #[test]
    fn empirical_clustering_tracks_analytic() {
        let b = baseline_metrics(100, 300, 50, 17, PathLengthMode::Exact).unwrap();
        let mean = b.clustering_c.mean.unwrap();
        let se = b.clustering_c.std_error().unwrap();
        assert!((mean - b.analytic_c).abs() < 3.0 * se, "mean {mean} analytic {} se {se}", b.analytic_c);
        assert_eq!(b.clustering_c.defined_trials, 50);
        assert!(!b.degenerate);
    }

    #[test]
    fn baseline_is_reproducible() {
        let a = baseline_metrics(60, 150, 8, 42, PathLengthMode::auto(0)).unwrap();
        let b = baseline_metrics(60, 150, 8, 42, PathLengthMode::auto(0)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = baseline_metrics(60, 150, 8, 43, PathLengthMode::auto(0)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_and_error_cases() {
        let b = baseline_metrics(20, 5, 3, 1, PathLengthMode::Exact).unwrap();
        assert!(b.degenerate);
        assert_eq!(b.analytic_l, None);
        assert_eq!(
            baseline_metrics(3, 4, 3, 1, PathLengthMode::Exact),
            Err(BaselineError::TooManyEdges { n: 3, m: 4 })
        );
        assert_eq!(baseline_metrics(3, 1, 0, 1, PathLengthMode::Exact), Err(BaselineError::NoTrials));
    }

    #[test]
    fn table_row_ratios() {
        let t = VerdictThresholds::default();
        let r = SmallWorldRatios::from_values(2.89, 2.61, 0.782, 0.033, t).unwrap();
        assert!((r.c_ratio - 23.7).abs() < 0.05);
        assert!((r.l_ratio - 1.107).abs() < 0.0005);
        assert_eq!(r.verdict, Verdict::SmallWorld);

        let r = SmallWorldRatios::from_values(2.39, 2.63, 0.752, 0.231, t).unwrap();
        assert!((r.c_ratio - 3.26).abs() < 0.005);
        assert!((r.l_ratio - 0.909).abs() < 0.0005);
        assert_eq!(r.verdict, Verdict::NotSmallWorld);
        let relaxed = SmallWorldRatios::from_values(2.39, 2.63, 0.752, 0.231, VerdictThresholds::relaxed()).unwrap();
        assert_eq!(relaxed.verdict, Verdict::SmallWorld);

        let same = SmallWorldRatios::from_values(2.5, 2.5, 0.1, 0.1, t).unwrap();
        assert_eq!((same.l_ratio, same.c_ratio, same.verdict), (1.0, 1.0, Verdict::NotSmallWorld));
        assert!(SmallWorldRatios::from_values(2.5, 2.5, 0.1, 0.0, t).is_err());
    }

    #[test]
    fn ratios_need_defined_metrics() {
        let measured = GraphMetrics::compute(&SharingGraph::unlabeled(4, []).unwrap(), PathLengthMode::Exact);
        let baseline = baseline_metrics(4, 3, 2, 0, PathLengthMode::Exact).unwrap();
        assert!(matches!(
            small_world_ratios(&measured, &baseline, VerdictThresholds::default()),
            Err(BaselineError::UndefinedRatio(_))
        ));
    }
}
