//! `vsj`: run similarity joins, sweeps, the dataset generator and dataset
//! statistics from the command line.
//!
//! Every flag can also be set through a `VSJ_`-prefixed environment
//! variable (`--memory-budget` ↔ `VSJ_MEMORY_BUDGET`) or a `--config` file
//! of `key = value` lines. Precedence: flag, environment, config file.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vsmart_core::bench::{self, parse_byte_size, Algorithm, RunConfig, Sweep};
use vsmart_core::datagen::{generate, GenSpec};
use vsmart_core::error::exit_code;
use vsmart_core::stats::dataset_stats;
use vsmart_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "vsj", version, about = "Exact all-pairs similarity joins on multisets")]
struct Cli {
    /// File of `key = value` lines supplying defaults for any flag.
    #[arg(long, global = true, env = "VSJ_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one pipeline and write the similar pairs as TSV.
    Run(RunArgs),
    /// Sweep thresholds, worker counts or the sharding C over several algorithms.
    Bench(BenchArgs),
    /// Generate a skewed synthetic dataset.
    Generate(GenerateArgs),
    /// Print dataset statistics as JSON.
    Stats(StatsArgs),
}

fn byte_size(s: &str) -> std::result::Result<u64, String> {
    parse_byte_size(s).map_err(|e| e.to_string())
}

fn algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    #[arg(long, env = "VSJ_MEASURE", default_value = "ruzicka")]
    measure: String,
    #[arg(long, env = "VSJ_THRESHOLD", default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, env = "VSJ_WORKERS", default_value_t = 4)]
    workers: usize,
    /// Per-worker memory budget, e.g. 64MiB.
    #[arg(long, env = "VSJ_MEMORY_BUDGET", default_value = "64MiB", value_parser = byte_size)]
    memory_budget: u64,
    /// Drop elements shared by more than q multisets before joining.
    #[arg(long, env = "VSJ_STOPWORD_Q")]
    stopword_q: Option<u64>,
    /// Distinct-element count above which the sharding join side-loads Uni.
    #[arg(long, env = "VSJ_SHARDING_C")]
    sharding_c: Option<u64>,
    /// Per-chunk byte budget for hot elements in the similarity phase.
    #[arg(long, env = "VSJ_CHUNK_BUDGET", value_parser = byte_size)]
    chunk_budget: Option<u64>,
    /// Emulate a framework without secondary keys.
    #[arg(long, env = "VSJ_NO_SECONDARY_KEYS")]
    no_secondary_keys: bool,
    #[arg(long, env = "VSJ_SEED", default_value_t = 0)]
    seed: u64,
    /// Order VCL prefixes by element hash instead of frequency.
    #[arg(long, env = "VSJ_HASH_ORDER")]
    hash_order: bool,
    /// Let the oracle run on more than 5000 multisets.
    #[arg(long, env = "VSJ_FORCE_ORACLE")]
    force_oracle: bool,
    /// Run kernel workers one after another instead of on the thread pool.
    #[arg(long, env = "VSJ_SEQUENTIAL")]
    sequential: bool,
    #[arg(long, env = "VSJ_SPILL_DIR")]
    spill_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, env = "VSJ_ALGORITHM", default_value = "online-agg", value_parser = algorithm)]
    algorithm: Algorithm,
    /// Input TSV of `multiset_id<TAB>element_id<TAB>multiplicity`.
    #[arg(long, env = "VSJ_INPUT")]
    input: PathBuf,
    /// Output TSV; stdout when omitted.
    #[arg(long, env = "VSJ_OUTPUT")]
    output: Option<PathBuf>,
    /// JSON-lines stage metrics.
    #[arg(long, env = "VSJ_METRICS")]
    metrics: Option<PathBuf>,
    /// Dump every candidate pair with its contribution count.
    #[arg(long, env = "VSJ_EMIT_CANDIDATES")]
    emit_candidates: Option<PathBuf>,
    /// Write the side-loaded Uni table (lookup and sharding).
    #[arg(long, env = "VSJ_UNI_TABLE")]
    uni_table: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// thresholds, workers or sharding-c.
    #[arg(long, env = "VSJ_SWEEP", default_value = "thresholds")]
    sweep: String,
    /// Comma-separated sweep points.
    #[arg(long, env = "VSJ_POINTS", default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    points: String,
    /// Comma-separated algorithms to compare.
    #[arg(long, env = "VSJ_ALGORITHMS", default_value = "online-agg,lookup,sharding,vcl")]
    algorithms: String,
    /// Input TSV; a dataset is generated from the generator flags when omitted.
    #[arg(long, env = "VSJ_INPUT")]
    input: Option<PathBuf>,
    /// JSON-lines sweep rows, written as each point completes.
    #[arg(long, env = "VSJ_REPORT")]
    report: Option<PathBuf>,
    #[command(flatten)]
    generator: GeneratorArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug, Clone)]
struct GeneratorArgs {
    #[arg(long, env = "VSJ_NUM_MULTISETS", default_value_t = 1000)]
    num_multisets: usize,
    #[arg(long, env = "VSJ_ALPHABET_SIZE", default_value_t = 500)]
    alphabet_size: usize,
    #[arg(long, env = "VSJ_ZIPF_EXPONENT", default_value_t = 1.2)]
    zipf_exponent: f64,
    #[arg(long, env = "VSJ_SIZE_ZIPF_EXPONENT", default_value_t = 2.0)]
    size_zipf_exponent: f64,
    #[arg(long, env = "VSJ_MAX_SIZE")]
    max_size: Option<usize>,
    #[arg(long, env = "VSJ_MAX_MULTIPLICITY", default_value_t = 10)]
    max_multiplicity: u64,
    #[arg(long, env = "VSJ_CLUSTERS", default_value_t = 0)]
    clusters: usize,
    #[arg(long, env = "VSJ_CLUSTER_SIZE", default_value_t = 3)]
    cluster_size: usize,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    generator: GeneratorArgs,
    #[arg(long, env = "VSJ_SEED", default_value_t = 0)]
    seed: u64,
    /// Output TSV; stdout when omitted.
    #[arg(long, env = "VSJ_OUTPUT")]
    output: Option<PathBuf>,
    /// Write planted cluster membership, one cluster per line.
    #[arg(long, env = "VSJ_CLUSTERS_OUTPUT")]
    clusters_output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long, env = "VSJ_INPUT")]
    input: PathBuf,
    /// JSON output; stdout when omitted.
    #[arg(long, env = "VSJ_OUTPUT")]
    output: Option<PathBuf>,
}

impl GeneratorArgs {
    fn spec(&self, seed: u64) -> GenSpec {
        GenSpec {
            num_multisets: self.num_multisets,
            alphabet_size: self.alphabet_size,
            zipf_exponent: self.zipf_exponent,
            size_zipf_exponent: self.size_zipf_exponent,
            max_size: self.max_size,
            max_multiplicity: self.max_multiplicity,
            seed,
            clusters: self.clusters,
            cluster_size: self.cluster_size,
        }
    }
}

impl CommonArgs {
    fn run_config(&self, algorithm: Algorithm) -> RunConfig {
        RunConfig {
            algorithm,
            measure: self.measure.clone(),
            threshold: self.threshold,
            workers: self.workers,
            memory_budget: self.memory_budget,
            stopword_q: self.stopword_q,
            sharding_c: self.sharding_c,
            chunk_budget: self.chunk_budget,
            no_secondary_keys: self.no_secondary_keys,
            seed: self.seed,
            hash_order: self.hash_order,
            force_oracle: self.force_oracle,
            parallel: !self.sequential,
            spill_dir: self.spill_dir.clone(),
            ..RunConfig::default()
        }
    }
}

/// Reads `key = value` lines; `#` starts a comment.
fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut values = BTreeMap::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected `key = value` in {}", path.display()),
        })?;
        let value = value.trim().trim_matches('"');
        values.insert(key.trim().to_owned(), value.to_owned());
    }
    Ok(values)
}

/// Finds `--config` before clap runs, so the file can seed the environment.
fn config_path(args: &[String]) -> Option<PathBuf> {
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        if arg == "--config" {
            return iter.next().map(PathBuf::from);
        }
        if let Some(path) = arg.strip_prefix("--config=") {
            return Some(PathBuf::from(path));
        }
    }
    std::env::var_os("VSJ_CONFIG").map(PathBuf::from)
}

fn apply_config_file(path: &Path) -> Result<()> {
    for (key, value) in read_config_file(path)? {
        let var = format!("VSJ_{}", key.replace('-', "_").to_ascii_uppercase());
        if std::env::var_os(&var).is_none() {
            std::env::set_var(var, value);
        }
    }
    Ok(())
}

fn parse_algorithms(list: &str) -> Result<Vec<Algorithm>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

fn output_writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn run_command(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => {
            let mut config = args.common.run_config(args.algorithm);
            config.input = Some(args.input);
            config.output = args.output;
            config.metrics = args.metrics;
            config.emit_candidates = args.emit_candidates;
            config.uni_table = args.uni_table;
            let report = bench::run(&config)?;
            log::info!(
                "{}: {} pairs in {:.3}s",
                config.algorithm,
                report.pairs.len(),
                report.wall_time
            );
        }
        Command::Bench(args) => {
            let sweep = Sweep::parse(&args.sweep, &args.points)?;
            let algorithms = parse_algorithms(&args.algorithms)?;
            let dataset = match &args.input {
                Some(path) => bench::read_dataset(path)?,
                None => generate(&args.generator.spec(args.common.seed))?.dataset,
            };
            let base = args.common.run_config(Algorithm::OnlineAgg);
            let rows = bench::bench_sweep(&base, &dataset, &sweep, &algorithms, args.report.as_deref())?;
            print!("{}", bench::format_sweep_table(&rows));
        }
        Command::Generate(args) => {
            let generated = generate(&args.generator.spec(args.seed))?;
            let mut out = output_writer(args.output.as_deref())?;
            generated.dataset.write_tsv(&mut out)?;
            out.flush()?;
            if let Some(path) = args.clusters_output {
                let mut out = BufWriter::new(File::create(path)?);
                for cluster in &generated.clusters {
                    let ids: Vec<String> = cluster.iter().map(ToString::to_string).collect();
                    writeln!(out, "{}", ids.join("\t"))?;
                }
                out.flush()?;
            }
        }
        Command::Stats(args) => {
            let stats = dataset_stats(&bench::read_dataset(&args.input)?);
            let mut out = output_writer(args.output.as_deref())?;
            serde_json::to_writer_pretty(&mut out, &stats).map_err(|e| Error::Internal(e.to_string()))?;
            writeln!(out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("VSJ_LOG", "warn")).init();
    let args: Vec<String> = std::env::args().collect();
    if let Some(path) = config_path(&args) {
        if let Err(e) = apply_config_file(&path) {
            eprintln!("vsj: config file {}: {e}", path.display());
            return ExitCode::from(e.exit_code() as u8);
        }
    }
    let cli = Cli::parse_from(args);
    match run_command(cli.command) {
        Ok(()) => ExitCode::from(exit_code::OK as u8),
        Err(e) => {
            eprintln!("vsj: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
