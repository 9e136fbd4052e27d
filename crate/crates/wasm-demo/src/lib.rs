//! Browser demo: three operations over JSON strings.
//!
//! * [`explore`]: generate a synthetic workload, analyze it, return the table
//!   row and one window's sharing graph for drawing.
//! * [`baseline`]: empirical G(n, M) metrics next to the closed forms.
//! * [`scatter_svg`]: the ratio scatter for the rows collected so far.
//!
//! The `*_json` functions hold the logic and run natively too; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};
use sharegraph::baseline::{baseline_metrics, VerdictThresholds};
use sharegraph::graph::SharingGraph;
use sharegraph::metrics::PathLengthMode;
use sharegraph::pipeline::{analyze, AnalysisConfig, JobOutcome};
use sharegraph::report::{emit_ratio_scatter, emit_table, reference_points, SmallWorldReport, TableFormat};
use sharegraph::synth::{consumer_id, generate_records, SynthConfig};
use sharegraph::trace::{normalize_object, Granularity};
use sharegraph::window::Window;
use wasm_bindgen::prelude::*;

/// Largest trace the page will analyze, to keep the tab responsive.
const MAX_ACCESSES: usize = 200_000;

#[derive(Debug, Deserialize)]
#[serde(default)]
pub struct ExploreParams {
    pub consumers: usize,
    pub groups: usize,
    pub affinity: f64,
    pub zipf: f64,
    pub accesses: usize,
    pub objects_per_group: usize,
    pub global_objects: usize,
    pub duration: u64,
    pub window: u64,
    pub min_common: u32,
    pub trials: u32,
    pub seed: u64,
}

impl Default for ExploreParams {
    fn default() -> Self {
        let s = SynthConfig::default();
        ExploreParams {
            consumers: s.consumers,
            groups: s.groups,
            affinity: s.in_group_affinity,
            zipf: s.zipf_exponent,
            accesses: s.accesses_per_consumer,
            objects_per_group: s.objects_per_group,
            global_objects: s.global_objects,
            duration: s.duration,
            window: 3600,
            min_common: 2,
            trials: 10,
            seed: s.seed,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct GraphView {
    pub window: Window,
    /// Planted group of each node.
    pub groups: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Serialize)]
pub struct Exploration {
    pub report: Option<SmallWorldReport>,
    pub error: Option<String>,
    pub table: String,
    pub windows: usize,
    pub graph: Option<GraphView>,
}

fn view(graph: &SharingGraph, window: Window, config: &SynthConfig) -> GraphView {
    let ids: std::collections::HashMap<String, usize> = (0..config.consumers).map(|i| (consumer_id(i), i)).collect();
    GraphView {
        window,
        groups: graph.nodes().iter().map(|n| ids.get(n).map_or(0, |&i| config.group_of(i))).collect(),
        edges: graph.edges().iter().map(|e| (e.u, e.v)).collect(),
    }
}

pub fn explore_json(params: &str) -> Result<String, String> {
    let p: ExploreParams = serde_json::from_str(params).map_err(|e| e.to_string())?;
    let config = SynthConfig {
        consumers: p.consumers,
        groups: p.groups,
        objects_per_group: p.objects_per_group,
        global_objects: p.global_objects,
        zipf_exponent: p.zipf,
        in_group_affinity: p.affinity,
        accesses_per_consumer: p.accesses,
        duration: p.duration,
        seed: p.seed,
    };
    if config.consumers.saturating_mul(config.accesses_per_consumer) > MAX_ACCESSES {
        return Err(format!("at most {MAX_ACCESSES} accesses in the browser demo"));
    }
    let records = generate_records(&config)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|r| normalize_object(r, Granularity::Page).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    let analysis = AnalysisConfig {
        granularity: Granularity::Page,
        window_seconds: vec![p.window],
        thresholds: vec![p.min_common],
        baseline_trials: p.trials,
        seed: p.seed,
        system_label: Some("Synthetic".into()),
        ..AnalysisConfig::default()
    };

    // Keep the densest complete window for drawing.
    let shown: RefCell<Option<(Window, SharingGraph)>> = RefCell::new(None);
    let mut sink = |_: &JobOutcome, window: &Window, graph: &SharingGraph| {
        let mut shown = shown.borrow_mut();
        let denser = shown.as_ref().is_none_or(|(_, g)| graph.edge_count() > g.edge_count());
        if !window.partial && denser {
            *shown = Some((*window, graph.clone()));
        }
        Ok(())
    };
    let jobs = analyze(&records, &analysis, Some(&mut sink)).map_err(|e| e.to_string())?;
    let job = jobs.into_iter().next().ok_or("no sweep job")?;
    let reports: Vec<SmallWorldReport> = job.report.iter().cloned().collect();
    let out = Exploration {
        table: emit_table(&reports, TableFormat::Text),
        report: job.report,
        error: job.error,
        windows: job.windows.len(),
        graph: shown.into_inner().map(|(w, g)| view(&g, w, &config)),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct BaselineView {
    pub n: usize,
    pub m: usize,
    pub trials: u32,
    pub mean_degree: f64,
    pub clustering: Option<f64>,
    pub clustering_stderr: Option<f64>,
    pub analytic_clustering: f64,
    pub path_length: Option<f64>,
    pub analytic_path_length: Option<f64>,
    pub giant_fraction: Option<f64>,
}

pub fn baseline_json(n: usize, m: usize, trials: u32, seed: u64) -> Result<String, String> {
    if n > 5000 || trials > 100 {
        return Err("demo limits: n <= 5000, trials <= 100".into());
    }
    let b = baseline_metrics(n, m, trials, seed, PathLengthMode::auto(seed)).map_err(|e| e.to_string())?;
    let out = BaselineView {
        n,
        m,
        trials,
        mean_degree: b.mean_degree,
        clustering: b.clustering_c.mean,
        clustering_stderr: b.clustering_c.std_error(),
        analytic_clustering: b.analytic_c,
        path_length: b.path_length_l.mean,
        analytic_path_length: b.analytic_l,
        giant_fraction: b.largest_component_fraction.mean,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// `reports` is a JSON array of reports as returned by [`explore`].
pub fn scatter_svg_string(reports: &str) -> Result<String, String> {
    let reports: Vec<SmallWorldReport> = serde_json::from_str(reports).map_err(|e| e.to_string())?;
    Ok(emit_ratio_scatter(&reports, &reference_points()).to_svg())
}

/// Default verdict thresholds, for the page legend.
pub fn thresholds_json() -> String {
    serde_json::to_string(&VerdictThresholds::default()).expect("thresholds serialize")
}

#[wasm_bindgen]
pub fn explore(params: &str) -> Result<String, JsError> {
    explore_json(params).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn baseline(n: usize, m: usize, trials: u32, seed: u32) -> Result<String, JsError> {
    baseline_json(n, m, trials, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn scatter_svg(reports: &str) -> Result<String, JsError> {
    scatter_svg_string(reports).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn verdict_thresholds() -> String {
    thresholds_json()
}
