//! End-to-end analysis: parse, normalize, window, build, measure, compare
//! against random baselines, aggregate and write the report files.
//!
//! Every random choice is seeded from the run seed through
//! [`derive_seed`](crate::baseline::derive_seed), keyed by window length,
//! threshold and window index, so a run's outputs depend only on
//! `(trace, config, seed)`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baseline::{
    analytic_estimates, baseline_metrics, derive_seed, small_world_ratios, SmallWorldRatios, VerdictThresholds,
    DEFAULT_TRIALS,
};
use crate::graph::{sharing_counts, SharingGraph, SimilarityCriterion, DEFAULT_FANOUT_LIMIT};
use crate::metrics::{GraphMetrics, PathLengthMode, DEFAULT_SAMPLE_PAIRS, EXACT_PATH_LIMIT};
use crate::report::{
    aggregate, emit_ratio_scatter, emit_table, reference_points, row_label, SmallWorldReport, TableFormat, WindowResult,
};
use crate::trace::{
    normalize_object, parse_trace, write_canonical, AccessRecord, Granularity, TraceError, TraceFormat,
};
use crate::window::{partition_windows, sweep_plan, SweepJob, Window, WindowProfile};

/// Parameters of the analysis itself, independent of where input and output live.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub granularity: Granularity,
    pub window_seconds: Vec<u64>,
    /// Common-object thresholds (`m`, or `s` at server granularity).
    pub thresholds: Vec<u32>,
    pub baseline_trials: u32,
    pub seed: u64,
    /// Force sampled path lengths with this many pairs.
    pub sample_pairs: Option<u64>,
    pub fanout_limit: usize,
    pub verdict: VerdictThresholds,
    /// Row-label prefix, e.g. `Web`; defaults to the granularity name.
    pub system_label: Option<String>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            granularity: Granularity::Page,
            window_seconds: vec![120],
            thresholds: vec![1],
            baseline_trials: DEFAULT_TRIALS,
            seed: 0,
            sample_pairs: None,
            fanout_limit: DEFAULT_FANOUT_LIMIT,
            verdict: VerdictThresholds::default(),
            system_label: None,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.window_seconds.is_empty() || self.window_seconds.contains(&0) {
            return Err("window lengths must be a non-empty list of positive seconds".into());
        }
        if self.thresholds.is_empty() || self.thresholds.contains(&0) {
            return Err("thresholds must be a non-empty list of positive integers".into());
        }
        if self.baseline_trials == 0 {
            return Err("baseline trials must be at least 1".into());
        }
        if self.sample_pairs == Some(0) {
            return Err("sample pairs must be positive".into());
        }
        let v = self.verdict;
        if !(v.min_c_ratio.is_finite() && v.max_l_ratio.is_finite() && v.min_c_ratio > 0.0 && v.max_l_ratio > 0.0) {
            return Err("verdict thresholds must be positive".into());
        }
        Ok(())
    }

    pub fn criteria(&self) -> Vec<SimilarityCriterion> {
        self.thresholds
            .iter()
            .map(|&threshold| SimilarityCriterion { granularity: self.granularity, threshold })
            .collect()
    }

    pub fn jobs(&self) -> Vec<SweepJob> {
        sweep_plan(&self.window_seconds, &self.criteria())
    }

    fn path_mode(&self, seed: u64) -> PathLengthMode {
        match self.sample_pairs {
            Some(pairs) => PathLengthMode::Sampled { pairs, seed },
            None => PathLengthMode::Auto { exact_limit: EXACT_PATH_LIMIT, pairs: DEFAULT_SAMPLE_PAIRS, seed },
        }
    }

    fn label(&self, job: &SweepJob) -> String {
        let system = self.system_label.as_deref().unwrap_or(self.granularity.as_str());
        row_label(system, &job.criterion, job.window_seconds)
    }
}

/// Per-window outcome within a job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowOutcome {
    #[serde(flatten)]
    pub result: WindowResult,
    /// Analytic G(n, M) clustering with `n` = non-isolated nodes.
    pub analytic_c_nonisolated: f64,
    pub analytic_l_nonisolated: Option<f64>,
    pub ratios: Option<SmallWorldRatios>,
    pub hot_objects: usize,
}

/// Everything computed for one `(T, criterion)` job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobOutcome {
    pub id: usize,
    pub label: String,
    pub job: SweepJob,
    pub windows: Vec<WindowOutcome>,
    pub report: Option<SmallWorldReport>,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Ingest,
    Normalize,
    Window,
    Build,
    Baseline,
    Aggregate,
    Emit,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Normalize => "normalize",
            Stage::Window => "window",
            Stage::Build => "build",
            Stage::Baseline => "baseline",
            Stage::Aggregate => "aggregate",
            Stage::Emit => "emit",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Input,
    Analysis,
}

#[derive(Debug, Error)]
#[error("{stage} stage: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub category: ErrorCategory,
    pub message: String,
}

impl PipelineError {
    fn new(stage: Stage, category: ErrorCategory, message: impl Into<String>) -> Self {
        PipelineError { stage, category, message: message.into() }
    }

    /// 2 config error, 3 input error, 4 analysis error.
    pub fn exit_code(&self) -> i32 {
        match self.category {
            ErrorCategory::Config => 2,
            ErrorCategory::Input => 3,
            ErrorCategory::Analysis => 4,
        }
    }
}

fn emit_error(e: io::Error, path: &Path) -> PipelineError {
    PipelineError::new(Stage::Emit, ErrorCategory::Input, format!("{}: {e}", path.display()))
}

/// Called with each job's graph per window, e.g. to export it.
pub type GraphSink<'a> = dyn FnMut(&JobOutcome, &Window, &SharingGraph) -> io::Result<()> + 'a;

/// Runs every sweep job over already-normalized records.
///
/// Co-occurrence counts are built once per window and thresholded for each
/// criterion. A job whose windows are all partial or undefined keeps
/// `report = None` and carries the reason in `error`.
pub fn analyze(
    records: &[AccessRecord],
    config: &AnalysisConfig,
    mut sink: Option<&mut GraphSink<'_>>,
) -> Result<Vec<JobOutcome>, PipelineError> {
    config.validate().map_err(|m| PipelineError::new(Stage::Config, ErrorCategory::Config, m))?;
    let jobs = config.jobs();
    let mut outcomes: Vec<JobOutcome> = jobs
        .iter()
        .enumerate()
        .map(|(id, job)| JobOutcome {
            id,
            label: config.label(job),
            job: *job,
            windows: Vec::new(),
            report: None,
            error: None,
        })
        .collect();

    let mut by_window_length: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, job) in jobs.iter().enumerate() {
        by_window_length.entry(job.window_seconds).or_default().push(i);
    }

    for (&length, job_ids) in &by_window_length {
        let profiles = partition_windows(records, length, config.granularity)
            .map_err(|e| PipelineError::new(Stage::Window, ErrorCategory::Config, e.to_string()))?;
        for profile in &profiles {
            let counts = sharing_counts(profile, config.granularity, config.fanout_limit)
                .map_err(|e| PipelineError::new(Stage::Build, ErrorCategory::Analysis, e.to_string()))?;
            for &id in job_ids {
                let threshold = jobs[id].criterion.threshold;
                let graph = counts.threshold(threshold);
                let stream = derive_seed(derive_seed(config.seed, length), threshold as u64);
                let window_seed = derive_seed(stream, profile.window.index);
                let outcome = window_outcome(&graph, profile, config, window_seed, counts.hot_objects.len())?;
                outcomes[id].windows.push(outcome);
                if let Some(sink) = sink.as_deref_mut() {
                    sink(&outcomes[id], &profile.window, &graph)
                        .map_err(|e| PipelineError::new(Stage::Emit, ErrorCategory::Input, e.to_string()))?;
                }
            }
        }
    }

    for outcome in &mut outcomes {
        let results: Vec<WindowResult> = outcome.windows.iter().map(|w| w.result.clone()).collect();
        match aggregate(
            outcome.label.clone(),
            outcome.job.criterion,
            outcome.job.window_seconds,
            &results,
            config.verdict,
        ) {
            Ok(report) => outcome.report = Some(report),
            Err(e) => outcome.error = Some(e.to_string()),
        }
    }
    Ok(outcomes)
}

fn window_outcome(
    graph: &SharingGraph,
    profile: &WindowProfile,
    config: &AnalysisConfig,
    seed: u64,
    hot_objects: usize,
) -> Result<WindowOutcome, PipelineError> {
    let metrics = GraphMetrics::compute(graph, config.path_mode(derive_seed(seed, 0)));
    let baseline = baseline_metrics(
        metrics.n_total,
        metrics.links,
        config.baseline_trials,
        derive_seed(seed, 1),
        config.path_mode(derive_seed(seed, 2)),
    )
    .map_err(|e| PipelineError::new(Stage::Baseline, ErrorCategory::Analysis, e.to_string()))?;
    let (analytic_c_nonisolated, analytic_l_nonisolated) = analytic_estimates(metrics.n_nonisolated, metrics.links);
    let ratios = small_world_ratios(&metrics, &baseline, config.verdict).ok();
    Ok(WindowOutcome {
        result: WindowResult { window: profile.window, metrics, baseline },
        analytic_c_nonisolated,
        analytic_l_nonisolated,
        ratios,
        hot_objects,
    })
}

/// Format for per-window graph files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphOutFormat {
    Edgelist,
    Adjacency,
}

impl std::str::FromStr for GraphOutFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "edgelist" => Ok(GraphOutFormat::Edgelist),
            "adjacency" => Ok(GraphOutFormat::Adjacency),
            other => Err(format!("unknown graph format `{other}` (expected edgelist or adjacency)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub trace: PathBuf,
    pub format: TraceFormat,
    pub analysis: AnalysisConfig,
    pub out_dir: PathBuf,
    /// Largest tolerated fraction of bad lines (parse or normalization errors).
    pub max_error_rate: f64,
    pub dump_windows: Option<PathBuf>,
    pub graph_out_format: Option<GraphOutFormat>,
}

impl RunConfig {
    pub fn new(
        trace: impl Into<PathBuf>,
        format: TraceFormat,
        analysis: AnalysisConfig,
        out_dir: impl Into<PathBuf>,
    ) -> Self {
        RunConfig {
            trace: trace.into(),
            format,
            analysis,
            out_dir: out_dir.into(),
            max_error_rate: 0.01,
            dump_windows: None,
            graph_out_format: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestStats {
    pub lines_parsed: u64,
    pub records: u64,
    pub parse_errors: u64,
    pub normalize_errors: u64,
    /// First few error messages, for the manifest.
    pub sample_errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub trace: String,
    pub trace_sha256: String,
    pub trace_bytes: u64,
    pub format: TraceFormat,
    pub seed: u64,
    pub config: AnalysisConfig,
    pub max_error_rate: f64,
    pub ingest: IngestStats,
    pub jobs: Vec<ManifestJob>,
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestJob {
    pub id: usize,
    pub label: String,
    pub file: String,
    pub reported: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub manifest: Manifest,
    pub reports: Vec<SmallWorldReport>,
    pub jobs: Vec<JobOutcome>,
}

struct HashingReader<R> {
    inner: R,
    hasher: Sha256,
    bytes: u64,
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        self.bytes += n as u64;
        Ok(n)
    }
}

const SAMPLE_ERRORS: usize = 10;

/// Parses and normalizes a trace. Returns the records, ingest statistics,
/// the SHA-256 of the input bytes and its length.
pub fn ingest<R: Read>(
    input: R,
    format: TraceFormat,
    granularity: Granularity,
    max_error_rate: f64,
) -> Result<(Vec<AccessRecord>, IngestStats, String, u64), PipelineError> {
    let mut reader = HashingReader { inner: input, hasher: Sha256::new(), bytes: 0 };
    let mut records = Vec::new();
    let mut stats =
        IngestStats { lines_parsed: 0, records: 0, parse_errors: 0, normalize_errors: 0, sample_errors: Vec::new() };
    for item in parse_trace(&mut reader, format) {
        stats.lines_parsed += 1;
        let record = match item {
            Ok(r) => r,
            Err(TraceError::Io(e)) => {
                return Err(PipelineError::new(Stage::Ingest, ErrorCategory::Input, format!("unreadable trace: {e}")));
            }
            Err(TraceError::Parse(e)) => {
                stats.parse_errors += 1;
                if stats.sample_errors.len() < SAMPLE_ERRORS {
                    stats.sample_errors.push(e.to_string());
                }
                continue;
            }
        };
        match normalize_object(&record, granularity) {
            Ok(r) => records.push(r),
            Err(e) => {
                stats.normalize_errors += 1;
                if stats.sample_errors.len() < SAMPLE_ERRORS {
                    stats.sample_errors.push(e.to_string());
                }
            }
        }
    }
    // Drain anything the parser did not consume so the checksum covers the whole input.
    io::copy(&mut reader, &mut io::sink())
        .map_err(|e| PipelineError::new(Stage::Ingest, ErrorCategory::Input, format!("unreadable trace: {e}")))?;
    stats.records = records.len() as u64;

    let bad = stats.parse_errors + stats.normalize_errors;
    if stats.lines_parsed > 0 && bad as f64 / stats.lines_parsed as f64 > max_error_rate {
        let stage = if stats.parse_errors >= stats.normalize_errors { Stage::Ingest } else { Stage::Normalize };
        return Err(PipelineError::new(
            stage,
            ErrorCategory::Input,
            format!(
                "{bad} of {} lines rejected, above the {:.2}% limit (first: {})",
                stats.lines_parsed,
                max_error_rate * 100.0,
                stats.sample_errors.first().map_or("-", String::as_str)
            ),
        ));
    }
    if records.is_empty() {
        return Err(PipelineError::new(Stage::Ingest, ErrorCategory::Input, "trace contains no records"));
    }
    let digest: String = reader.hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok((records, stats, digest, reader.bytes))
}

/// Writes `contents` to `path` via a temporary file and rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = BufWriter::new(File::create(&tmp)?);
        f.write_all(contents)?;
        f.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn dump_windows(records: &[AccessRecord], config: &AnalysisConfig, dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| emit_error(e, dir))?;
    let mut lengths = config.window_seconds.clone();
    lengths.sort_unstable();
    lengths.dedup();
    for length in lengths {
        let profiles = partition_windows(records, length, config.granularity)
            .map_err(|e| PipelineError::new(Stage::Window, ErrorCategory::Config, e.to_string()))?;
        for p in profiles {
            let rows: Vec<AccessRecord> = p
                .accesses
                .iter()
                .flat_map(|(c, objs)| {
                    objs.iter().map(|o| AccessRecord::new(p.window.start, c.clone(), o.clone(), None))
                })
                .collect();
            let mut buf = Vec::new();
            write_canonical(&rows, &mut buf).expect("in-memory write");
            let path = dir.join(format!("T{length}-window-{:05}.csv", p.window.index));
            write_atomic(&path, &buf).map_err(|e| emit_error(e, &path))?;
        }
    }
    Ok(())
}

/// Runs the whole pipeline and writes `report.csv`, `scatter.csv`,
/// `scatter.svg`, `job-NNN.json` per sweep job and `manifest.json` into the
/// output directory.
pub fn run_pipeline(config: &RunConfig) -> Result<RunSummary, PipelineError> {
    let analysis = &config.analysis;
    analysis.validate().map_err(|m| PipelineError::new(Stage::Config, ErrorCategory::Config, m))?;
    if !(0.0..=1.0).contains(&config.max_error_rate) {
        return Err(PipelineError::new(Stage::Config, ErrorCategory::Config, "max error rate must lie in [0, 1]"));
    }

    let file = File::open(&config.trace).map_err(|e| {
        PipelineError::new(Stage::Ingest, ErrorCategory::Input, format!("{}: {e}", config.trace.display()))
    })?;
    let (records, ingest_stats, digest, bytes) =
        ingest(io::BufReader::new(file), config.format, analysis.granularity, config.max_error_rate)?;

    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(|e| emit_error(e, out))?;
    if let Some(dir) = &config.dump_windows {
        dump_windows(&records, analysis, dir)?;
    }

    let graph_dir = out.join("graphs");
    let mut export = |job: &JobOutcome, window: &Window, graph: &SharingGraph| -> io::Result<()> {
        let Some(format) = config.graph_out_format else { return Ok(()) };
        fs::create_dir_all(&graph_dir)?;
        let stem = format!("job-{:03}-window-{:05}", job.id, window.index);
        let mut buf = Vec::new();
        match format {
            GraphOutFormat::Edgelist => {
                graph.write_edgelist(&mut buf)?;
                write_atomic(&graph_dir.join(format!("{stem}.edgelist")), &buf)?;
                let mut nodes = Vec::new();
                graph.write_node_manifest(&mut nodes)?;
                write_atomic(&graph_dir.join(format!("{stem}.nodes")), &nodes)
            }
            GraphOutFormat::Adjacency => {
                graph.write_adjacency(&mut buf)?;
                write_atomic(&graph_dir.join(format!("{stem}.adjacency")), &buf)
            }
        }
    };
    let jobs = analyze(&records, analysis, Some(&mut export))?;

    let reports: Vec<SmallWorldReport> = jobs.iter().filter_map(|j| j.report.clone()).collect();
    if reports.is_empty() {
        let reason = jobs.iter().find_map(|j| j.error.clone()).unwrap_or_default();
        return Err(PipelineError::new(
            Stage::Aggregate,
            ErrorCategory::Analysis,
            format!("no sweep job produced a report: {reason}"),
        ));
    }

    let mut outputs = Vec::new();
    let mut write = |name: String, contents: &[u8]| -> Result<(), PipelineError> {
        let path = out.join(&name);
        write_atomic(&path, contents).map_err(|e| emit_error(e, &path))?;
        outputs.push(name);
        Ok(())
    };
    let mut manifest_jobs = Vec::new();
    for job in &jobs {
        let name = format!("job-{:03}.json", job.id);
        let mut doc = serde_json::to_string_pretty(job).expect("job outcome serializes");
        doc.push('\n');
        write(name.clone(), doc.as_bytes())?;
        manifest_jobs.push(ManifestJob {
            id: job.id,
            label: job.label.clone(),
            file: name,
            reported: job.report.is_some(),
        });
    }
    write("report.csv".into(), emit_table(&reports, TableFormat::Csv).as_bytes())?;
    let scatter = emit_ratio_scatter(&reports, &reference_points());
    write("scatter.csv".into(), scatter.to_csv().as_bytes())?;
    write("scatter.svg".into(), scatter.to_svg().as_bytes())?;

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        trace: config.trace.display().to_string(),
        trace_sha256: digest,
        trace_bytes: bytes,
        format: config.format,
        seed: analysis.seed,
        config: analysis.clone(),
        max_error_rate: config.max_error_rate,
        ingest: ingest_stats,
        jobs: manifest_jobs,
        outputs,
    };
    let mut doc = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    doc.push('\n');
    let path = out.join("manifest.json");
    write_atomic(&path, doc.as_bytes()).map_err(|e| emit_error(e, &path))?;

    Ok(RunSummary { manifest, reports, jobs })
}
