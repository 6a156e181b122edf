//! Command-line front end: `embed`, `synth`, `bench`, and `metrics`
//! subcommands over the library pipeline.
//!
//! Exit codes: 0 on success, 2 for invalid flags or configuration, 3 for
//! unreadable or malformed input files, 4 when optimization diverges.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bench::{self, BenchConfig};
use crate::config::{AnnMode, TsneConfig};
use crate::error::{Result, TsneError};
use crate::io::{self, FileFormat};
use crate::metrics;
use crate::optimizer::{self, PipelineTimings};
use crate::synth;

#[derive(Parser)]
#[command(
    name = "tsne",
    version,
    about = "Parallel Barnes-Hut t-SNE with approximate nearest-neighbor affinities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads (default: all cores, or the TSNE_THREADS variable).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Increase log verbosity (-v progress, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Embed a dataset into the plane.
    Embed(EmbedArgs),
    /// Generate a clustered synthetic dataset.
    Synth(SynthArgs),
    /// Run the scaling benchmark over doubling dataset sizes.
    Bench(BenchArgs),
    /// Score an embedding against its source dataset.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct EmbedArgs {
    /// Dataset file (csv, raw, or idx).
    #[arg(long)]
    input: PathBuf,

    /// Input format; inferred from the file name when omitted.
    #[arg(long, value_parser = parse_format)]
    format: Option<FileFormat>,

    /// Embedding output (.csv or .bin); labels from the input are carried
    /// through.
    #[arg(long)]
    out: Option<PathBuf>,

    /// SVG scatter plot of the embedding.
    #[arg(long)]
    plot: Option<PathBuf>,

    /// JSON run report (configuration, timings, divergence history).
    #[arg(long)]
    report: Option<PathBuf>,

    #[arg(long, default_value_t = 50.0)]
    perplexity: f64,

    /// Neighbors per point in the affinity graph.
    #[arg(long, default_value_t = 150)]
    k: usize,

    /// Barnes-Hut accuracy knob; 0 is exact.
    #[arg(long, default_value_t = 0.5)]
    theta: f64,

    /// Learning rate.
    #[arg(long, default_value_t = 200.0)]
    lr: f64,

    #[arg(long, default_value_t = 1000)]
    iters: usize,

    /// Early-phase affinity multiplier.
    #[arg(long, default_value_t = 12.0)]
    exaggeration: f64,

    /// Iterations spent in the exaggerated phase.
    #[arg(long = "exagg-iters", default_value_t = 250)]
    exagg_iters: usize,

    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Neighbor search: exact brute force or the quantized inverted index.
    #[arg(long, value_parser = parse_ann, default_value = "exact")]
    ann: AnnMode,

    /// Inverted-index cells probed per query (ivfpq only).
    #[arg(long, default_value_t = 10)]
    tau: usize,

    /// Stop once the largest gradient component falls below this, after the
    /// exaggerated phase.
    #[arg(long = "min-grad-norm")]
    min_grad_norm: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset file (.csv or .bin).
    #[arg(long)]
    out: PathBuf,

    #[arg(long, default_value_t = 1000)]
    n: usize,

    #[arg(long, default_value_t = 50)]
    d: usize,

    #[arg(long, default_value_t = 10)]
    clusters: usize,

    /// Within-cluster standard deviation.
    #[arg(long, default_value_t = 1.0)]
    spread: f64,

    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Dataset sizes, ascending.
    #[arg(long, value_delimiter = ',', default_values_t = [10_000usize, 20_000, 40_000])]
    sizes: Vec<usize>,

    #[arg(long, default_value_t = 50)]
    d: usize,

    #[arg(long, default_value_t = 10)]
    clusters: usize,

    #[arg(long, default_value_t = 350)]
    iters: usize,

    #[arg(long = "exagg-iters", default_value_t = 100)]
    exagg_iters: usize,

    #[arg(long, default_value_t = 32)]
    k: usize,

    #[arg(long, default_value_t = 10.0)]
    perplexity: f64,

    #[arg(long, default_value_t = 0.5)]
    theta: f64,

    #[arg(long, value_parser = parse_ann, default_value = "ivfpq")]
    ann: AnnMode,

    #[arg(long, default_value_t = 10)]
    tau: usize,

    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Also write the rows as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Original dataset the embedding was built from.
    #[arg(long)]
    data: PathBuf,

    /// Embedding file produced by `embed --out`.
    #[arg(long)]
    embedding: PathBuf,

    #[arg(long, value_parser = parse_format)]
    format: Option<FileFormat>,

    /// Neighborhood size for the preservation score.
    #[arg(long, default_value_t = 15)]
    k: usize,

    /// Clusters for the k-means label accuracy (default: one per distinct
    /// label).
    #[arg(long)]
    clusters: Option<usize>,

    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn parse_format(s: &str) -> std::result::Result<FileFormat, String> {
    s.parse().map_err(|e: TsneError| e.to_string())
}

fn parse_ann(s: &str) -> std::result::Result<AnnMode, String> {
    match s.to_ascii_lowercase().as_str() {
        "exact" => Ok(AnnMode::Exact),
        "ivfpq" => Ok(AnnMode::IvfPq),
        other => Err(format!("unknown mode {other:?} (expected exact or ivfpq)")),
    }
}

/// Parses arguments, dispatches, and maps errors to exit codes. The binary
/// passes the return value straight to `std::process::exit`.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    if let Err(e) = setup_threads(cli.threads).and_then(|()| dispatch(cli.command)) {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    0
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default))
        .format_timestamp(None)
        .try_init();
}

/// Builds the global worker pool: the flag wins, then TSNE_THREADS, then
/// rayon's default (all cores).
fn setup_threads(flag: Option<usize>) -> Result<()> {
    let threads = match flag {
        Some(t) => Some(t),
        None => match std::env::var("TSNE_THREADS") {
            Ok(v) => Some(v.parse().map_err(|_| {
                TsneError::InvalidParameter(format!("TSNE_THREADS={v:?} is not a thread count"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(TsneError::InvalidParameter(
                "thread count must be at least 1".into(),
            ));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| TsneError::InvalidParameter(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Embed(args) => cmd_embed(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Metrics(args) => cmd_metrics(args),
    }
}

/// Everything `embed --report` writes.
#[derive(Serialize)]
struct RunReport<'a> {
    n: usize,
    d: usize,
    iterations: usize,
    final_kl: f64,
    kl_is_estimate: bool,
    config: &'a TsneConfig,
    timings_ms: &'a PipelineTimings,
    kl_history: &'a [(usize, f64)],
}

fn cmd_embed(args: EmbedArgs) -> Result<()> {
    let config = TsneConfig {
        perplexity: args.perplexity,
        k_neighbors: args.k,
        theta: args.theta,
        learning_rate: args.lr,
        max_iters: args.iters,
        exaggeration_factor: args.exaggeration,
        exaggeration_iters: args.exagg_iters,
        seed: args.seed,
        ann_mode: args.ann,
        tau_probes: args.tau,
        min_grad_norm: args.min_grad_norm,
        ..TsneConfig::default()
    };
    config.validate()?;

    let dataset = io::load_dataset(&args.input, args.format)?;
    log::info!(
        "loaded {} points of dimension {} from {}",
        dataset.data.n(),
        dataset.data.d(),
        args.input.display()
    );

    let result = optimizer::run(&dataset.data, &config)?;
    let coords = &result.embedding.coords;
    let labels = dataset.labels.as_deref();

    if let Some(out) = &args.out {
        io::save_embedding(out, coords, labels, None)?;
    }
    if let Some(plot) = &args.plot {
        io::plot_svg(plot, coords, labels)?;
    }
    if let Some(report) = &args.report {
        let body = serde_json::to_string_pretty(&RunReport {
            n: dataset.data.n(),
            d: dataset.data.d(),
            iterations: result.timings.iterations,
            final_kl: result.final_kl,
            kl_is_estimate: result.kl_is_estimate,
            config: &config,
            timings_ms: &result.timings,
            kl_history: &result.kl_history,
        })
        .expect("report is serializable");
        std::fs::write(report, body)?;
    }

    println!(
        "embedded {} points in {:.1}s: divergence {:.4}{} after {} iterations",
        dataset.data.n(),
        result.timings.total_ms / 1e3,
        result.final_kl,
        if result.kl_is_estimate { " (estimated)" } else { "" },
        result.timings.iterations
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    if args.n == 0 || args.d == 0 || args.clusters == 0 || args.clusters > args.n {
        return Err(TsneError::InvalidParameter(format!(
            "cannot generate {} points of dimension {} in {} clusters",
            args.n, args.d, args.clusters
        )));
    }
    if args.spread.is_nan() || args.spread < 0.0 {
        return Err(TsneError::InvalidParameter(format!(
            "spread must be non-negative, got {}",
            args.spread
        )));
    }
    let dataset = synth::clustered_dataset(args.n, args.d, args.clusters, args.spread, args.seed);
    io::save_dataset(&args.out, &dataset, None)?;
    println!(
        "wrote {} points of dimension {} ({} clusters) to {}",
        args.n,
        args.d,
        args.clusters,
        args.out.display()
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let config = BenchConfig {
        sizes: args.sizes,
        dims: args.d,
        clusters: args.clusters,
        iters: args.iters,
        exaggeration_iters: args.exagg_iters,
        k_neighbors: args.k,
        perplexity: args.perplexity,
        theta: args.theta,
        ann_mode: args.ann,
        tau_probes: args.tau,
        seed: args.seed,
        ..BenchConfig::default()
    };
    let rows = bench::run_scaling(&config)?;
    print!("{}", bench::render_table(&rows));
    if let Some(out) = &args.out {
        bench::write_csv(out, &rows)?;
    }
    Ok(())
}

fn cmd_metrics(args: MetricsArgs) -> Result<()> {
    let dataset = io::load_dataset(&args.data, args.format)?;
    let embedding = io::load_dataset(&args.embedding, None)?;
    if embedding.data.d() != 2 {
        return Err(TsneError::InvalidParameter(format!(
            "{} holds dimension-{} rows, not a planar embedding",
            args.embedding.display(),
            embedding.data.d()
        )));
    }
    let coords = embedding.data.values();
    // Labels can ride along in either file; the embedding's take priority.
    let labels = embedding
        .labels
        .as_deref()
        .or(dataset.labels.as_deref());

    #[derive(Serialize)]
    struct Scores {
        knn_preservation: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        nn_label_agreement: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        kmeans_label_accuracy: Option<f64>,
    }

    let mut scores = Scores {
        knn_preservation: metrics::knn_preservation(&dataset.data, coords, args.k)?,
        nn_label_agreement: None,
        kmeans_label_accuracy: None,
    };
    if let Some(labels) = labels {
        if labels.len() != dataset.data.n() {
            return Err(TsneError::InvalidParameter(format!(
                "{} labels for {} points",
                labels.len(),
                dataset.data.n()
            )));
        }
        scores.nn_label_agreement = Some(metrics::nn_label_agreement(coords, labels)?);
        let clusters = args.clusters.unwrap_or_else(|| {
            let mut distinct: Vec<i32> = labels.to_vec();
            distinct.sort_unstable();
            distinct.dedup();
            distinct.len()
        });
        scores.kmeans_label_accuracy = Some(metrics::kmeans_label_accuracy(
            coords, labels, clusters, args.seed,
        )?);
    }

    println!(
        "{}",
        serde_json::to_string_pretty(&scores).expect("scores are serializable")
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn ann_and_format_parsers() {
        assert_eq!(parse_ann("exact").unwrap(), AnnMode::Exact);
        assert_eq!(parse_ann("IVFPQ").unwrap(), AnnMode::IvfPq);
        assert!(parse_ann("hnsw").is_err());
        assert_eq!(parse_format("csv").unwrap(), FileFormat::Csv);
        assert!(parse_format("npz").is_err());
    }

    #[test]
    fn embed_flags_parse() {
        let cli = Cli::try_parse_from([
            "tsne", "embed", "--input", "x.csv", "--out", "y.csv", "--perplexity", "30",
            "--k", "90", "--theta", "0.4", "--ann", "ivfpq", "--tau", "8", "--iters", "500",
        ])
        .unwrap();
        match cli.command {
            Command::Embed(args) => {
                assert_eq!(args.perplexity, 30.0);
                assert_eq!(args.k, 90);
                assert_eq!(args.ann, AnnMode::IvfPq);
                assert_eq!(args.tau, 8);
                assert_eq!(args.iters, 500);
                assert!(args.plot.is_none());
            }
            _ => panic!("parsed the wrong subcommand"),
        }
    }

    #[test]
    fn bench_sizes_parse_as_list() {
        let cli = Cli::try_parse_from(["tsne", "bench", "--sizes", "100,200,400"]).unwrap();
        match cli.command {
            Command::Bench(args) => assert_eq!(args.sizes, vec![100, 200, 400]),
            _ => panic!("parsed the wrong subcommand"),
        }
    }

    #[test]
    fn unknown_flags_are_rejected() {
        assert!(Cli::try_parse_from(["tsne", "embed", "--input", "x.csv", "--bogus"]).is_err());
        assert!(Cli::try_parse_from(["tsne", "embed", "--input", "x.csv", "--ann", "lsh"]).is_err());
    }
}
