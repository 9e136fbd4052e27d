use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use sharegraph::baseline::{VerdictThresholds, DEFAULT_TRIALS};
use sharegraph::graph::DEFAULT_FANOUT_LIMIT;
use sharegraph::pipeline::{run_pipeline, AnalysisConfig, GraphOutFormat, RunConfig};
use sharegraph::report::{emit_table, TableFormat};
use sharegraph::synth::{generate_trace, SynthConfig};
use sharegraph::trace::{Granularity, TraceFormat};

/// Data-sharing graphs and small-world diagnostics for access traces.
#[derive(Parser, Debug)]
#[command(name = "sharegraph", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build sharing graphs from a trace and compare them with random graphs.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic trace with planted interest groups.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value = "canonical-csv")]
    format: TraceFormat,
    #[arg(long, default_value = "page")]
    granularity: Granularity,
    /// Window lengths in seconds, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    window: Vec<u64>,
    /// Minimum number of common objects for an edge, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    min_common: Vec<u32>,
    #[arg(long, visible_alias = "trials", default_value_t = DEFAULT_TRIALS)]
    baseline_trials: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Always estimate path length from this many sampled pairs.
    #[arg(long)]
    sample_pairs: Option<u64>,
    /// Write one canonical-CSV interest-set file per window here.
    #[arg(long)]
    dump_windows: Option<PathBuf>,
    /// Also export every window's graph under OUT/graphs.
    #[arg(long)]
    graph_out_format: Option<GraphOutFormat>,
    #[arg(long, default_value_t = DEFAULT_FANOUT_LIMIT)]
    fanout_limit: usize,
    /// Fraction of malformed lines tolerated before the run fails.
    #[arg(long, default_value_t = 0.01)]
    max_error_rate: f64,
    #[arg(long, default_value_t = VerdictThresholds::default().min_c_ratio)]
    min_c_ratio: f64,
    #[arg(long, default_value_t = VerdictThresholds::default().max_l_ratio)]
    max_l_ratio: f64,
    /// System name used in row labels, e.g. "Web".
    #[arg(long)]
    label: Option<String>,
    /// Do not print the summary table.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = SynthConfig::default().consumers)]
    consumers: usize,
    #[arg(long, default_value_t = SynthConfig::default().groups)]
    groups: usize,
    /// Probability that an access stays inside the consumer's group pool.
    #[arg(long, default_value_t = SynthConfig::default().in_group_affinity)]
    affinity: f64,
    #[arg(long, default_value_t = SynthConfig::default().zipf_exponent)]
    zipf: f64,
    /// Accesses per consumer.
    #[arg(long, default_value_t = SynthConfig::default().accesses_per_consumer)]
    accesses: usize,
    #[arg(long, default_value_t = SynthConfig::default().duration)]
    duration: u64,
    #[arg(long, default_value_t = SynthConfig::default().objects_per_group)]
    objects_per_group: usize,
    #[arg(long, default_value_t = SynthConfig::default().global_objects)]
    global_objects: usize,
    #[arg(long, default_value_t = SynthConfig::default().seed)]
    seed: u64,
    /// Output path, or `-` for stdout.
    #[arg(long)]
    out: PathBuf,
}

fn analyze(args: AnalyzeArgs) -> ExitCode {
    let analysis = AnalysisConfig {
        granularity: args.granularity,
        window_seconds: args.window,
        thresholds: args.min_common,
        baseline_trials: args.baseline_trials,
        seed: args.seed,
        sample_pairs: args.sample_pairs,
        fanout_limit: args.fanout_limit,
        verdict: VerdictThresholds { min_c_ratio: args.min_c_ratio, max_l_ratio: args.max_l_ratio },
        system_label: args.label,
    };
    let mut config = RunConfig::new(args.trace, args.format, analysis, args.out);
    config.max_error_rate = args.max_error_rate;
    config.dump_windows = args.dump_windows;
    config.graph_out_format = args.graph_out_format;

    match run_pipeline(&config) {
        Ok(summary) => {
            for job in summary.jobs.iter().filter(|j| j.report.is_none()) {
                log::warn!("{}: {}", job.label, job.error.as_deref().unwrap_or("no report"));
            }
            if !args.quiet {
                print!("{}", emit_table(&summary.reports, TableFormat::Text));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let config = SynthConfig {
        consumers: args.consumers,
        groups: args.groups,
        objects_per_group: args.objects_per_group,
        global_objects: args.global_objects,
        zipf_exponent: args.zipf,
        in_group_affinity: args.affinity,
        accesses_per_consumer: args.accesses,
        duration: args.duration,
        seed: args.seed,
    };
    config.validate()?;
    if args.out.as_os_str() == "-" {
        let stdout = io::stdout();
        generate_trace(&config, stdout.lock())?;
    } else {
        let file = File::create(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
        let mut out = BufWriter::new(file);
        generate_trace(&config, &mut out)?;
        out.flush()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Analyze(args) => analyze(args),
        Command::Synth(args) => match synth(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                let config_error = e
                    .downcast_ref::<sharegraph::synth::SynthError>()
                    .is_some_and(|s| matches!(s, sharegraph::synth::SynthError::InvalidConfig(_)));
                ExitCode::from(if config_error { 2 } else { 3 })
            }
        },
    }
}
