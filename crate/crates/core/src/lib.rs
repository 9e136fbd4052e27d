//! Data-sharing graphs from data-access traces.
//!
//! Consumers (IP addresses, user names) become nodes; two consumers are linked
//! when they accessed at least `m` common objects within a time window. The
//! crate measures clustering and average path length of these graphs, compares
//! them with random graphs of the same size, and reports the ratios that tell
//! a small-world sharing pattern apart from a random one.
//!
//! The modules follow the analysis pipeline:
//!
//! * [`trace`]: parse access logs, normalize object ids, popularity analysis
//! * [`window`]: tile the trace into windows of length `T`
//! * [`graph`]: build the sharing graph of a window
//! * [`metrics`]: clustering coefficient, path length, components, degrees
//! * [`baseline`]: G(n, M) random baselines and small-world ratios
//! * [`report`]: aggregate over windows, emit tables and the ratio scatter
//! * [`pipeline`]: end-to-end runs with on-disk outputs
//! * [`synth`]: synthetic traces with planted interest groups

pub mod baseline;
pub mod graph;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod synth;
pub mod trace;
pub mod window;

pub use baseline::{
    baseline_metrics, random_graph, small_world_ratios, RandomBaseline, SmallWorldRatios, Verdict, VerdictThresholds,
};
pub use graph::{build_sharing_graph, SharingGraph, SimilarityCriterion};
pub use metrics::{average_path_length, clustering_coefficient, GraphMetrics, PathLengthMode};
pub use pipeline::{analyze, run_pipeline, AnalysisConfig, PipelineError, RunConfig};
pub use report::{aggregate, emit_ratio_scatter, emit_table, SmallWorldReport, TableFormat};
pub use synth::{generate_records, generate_trace, SynthConfig};
pub use trace::{normalize_object, parse_trace, AccessRecord, Granularity, TraceFormat};
pub use window::{partition_windows, WindowProfile};
