//! Run configuration, single runs with metric export, and parameter sweeps.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::join::{write_uni_table, JoinAlgorithm, ShardingConfig};
use crate::kernel::{stable_hash, Engine, KernelConfig, StageMetrics, DEFAULT_MEMORY_BUDGET, DEFAULT_WORKERS};
use crate::measures::NsmMeasure;
use crate::model::{pairs_to_tsv, sort_pairs, Dataset, SimilarPair};
use crate::oracle::{drop_frequent_elements, oracle_join};
use crate::similarity::{drop_stop_words, run_vsmart, validate_threshold, Candidate, SimilarityConfig};
use crate::vcl::{vcl_join, VclConfig, VclReport};

/// Version of the JSON-lines metrics schema.
pub const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    OnlineAgg,
    Lookup,
    Sharding,
    Vcl,
    Oracle,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::OnlineAgg,
        Algorithm::Lookup,
        Algorithm::Sharding,
        Algorithm::Vcl,
        Algorithm::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::OnlineAgg => "online-agg",
            Algorithm::Lookup => "lookup",
            Algorithm::Sharding => "sharding",
            Algorithm::Vcl => "vcl",
            Algorithm::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown algorithm `{s}` (expected online-agg, lookup, sharding, vcl or oracle)"
                ))
            })
    }
}

/// Parses sizes such as `1024`, `64KiB`, `1.5MiB`, `2MB` or `1G`.
pub fn parse_byte_size(s: &str) -> Result<u64> {
    let s = s.trim();
    let split = s.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(s.len());
    let (number, unit) = s.split_at(split);
    let multiplier: u64 = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "k" | "kib" => 1 << 10,
        "kb" => 1_000,
        "m" | "mib" => 1 << 20,
        "mb" => 1_000_000,
        "g" | "gib" => 1 << 30,
        "gb" => 1_000_000_000,
        other => return Err(Error::InvalidConfig(format!("unknown size unit `{other}` in `{s}`"))),
    };
    let value: f64 = number
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("invalid size `{s}`")))?;
    let bytes = (value * multiplier as f64).round();
    if !(bytes >= 1.0 && bytes < u64::MAX as f64) {
        return Err(Error::InvalidConfig(format!("size `{s}` must be at least one byte")));
    }
    Ok(bytes as u64)
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub measure: String,
    pub threshold: f64,
    pub workers: usize,
    pub memory_budget: u64,
    pub stopword_q: Option<u64>,
    pub sharding_c: Option<u64>,
    pub chunk_budget: Option<u64>,
    pub no_secondary_keys: bool,
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub emit_candidates: Option<PathBuf>,
    pub uni_table: Option<PathBuf>,
    pub hash_order: bool,
    pub force_oracle: bool,
    /// Run kernel workers on the thread pool.
    pub parallel: bool,
    pub spill_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::OnlineAgg,
            measure: "ruzicka".into(),
            threshold: 0.5,
            workers: DEFAULT_WORKERS,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            stopword_q: None,
            sharding_c: None,
            chunk_budget: None,
            no_secondary_keys: false,
            seed: 0,
            input: None,
            output: None,
            metrics: None,
            emit_candidates: None,
            uni_table: None,
            hash_order: false,
            force_oracle: false,
            parallel: true,
            spill_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        validate_threshold(self.threshold)?;
        match (self.algorithm, self.sharding_c) {
            (Algorithm::Sharding, None) => {
                return Err(Error::InvalidConfig("--sharding-c is required for the sharding algorithm".into()))
            }
            (Algorithm::Sharding, Some(0)) => return Err(Error::InvalidConfig("--sharding-c must be at least 1".into())),
            (Algorithm::Sharding, Some(_)) => {}
            (other, Some(_)) => {
                return Err(Error::InvalidConfig(format!("--sharding-c only applies to sharding, not {other}")))
            }
            (_, None) => {}
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("--workers must be at least 1".into()));
        }
        if self.stopword_q == Some(0) {
            return Err(Error::InvalidConfig("--stopword-q must be at least 1".into()));
        }
        if self.chunk_budget == Some(0) {
            return Err(Error::InvalidConfig("--chunk-budget must be positive".into()));
        }
        NsmMeasure::by_name(&self.measure)?;
        Ok(())
    }

    pub fn engine(&self) -> Result<Engine> {
        Engine::new(KernelConfig {
            workers: self.workers,
            memory_budget: self.memory_budget,
            secondary_keys: !self.no_secondary_keys,
            parallel: self.parallel,
            spill_dir: self.spill_dir.clone(),
        })
    }
}

#[derive(Debug)]
pub struct RunReport {
    pub algorithm: Algorithm,
    /// Sorted by `(left, right)`.
    pub pairs: Vec<SimilarPair>,
    pub metrics: Vec<StageMetrics>,
    pub vcl_report: Option<VclReport>,
    pub candidates: Option<Vec<Candidate>>,
    pub uni_table: Option<Vec<(crate::model::MultisetId, crate::model::UniVector)>>,
    pub wall_time: f64,
}

impl RunReport {
    pub fn bytes_shuffled(&self) -> u64 {
        self.metrics.iter().map(|m| m.bytes_shuffled).sum()
    }

    pub fn max_group_length(&self) -> u64 {
        self.metrics.iter().map(|m| m.max_group_length).max().unwrap_or(0)
    }

    pub fn tsv(&self) -> String {
        pairs_to_tsv(&self.pairs)
    }
}

/// Runs one configuration on an in-memory dataset without touching files.
pub fn execute(config: &RunConfig, dataset: &Dataset) -> Result<RunReport> {
    config.validate()?;
    let measure = NsmMeasure::by_name(&config.measure)?;
    let started = Instant::now();
    let mut report = RunReport {
        algorithm: config.algorithm,
        pairs: Vec::new(),
        metrics: Vec::new(),
        vcl_report: None,
        candidates: None,
        uni_table: None,
        wall_time: 0.0,
    };
    if config.algorithm == Algorithm::Oracle {
        let filtered;
        let data = match config.stopword_q {
            Some(q) => {
                filtered = drop_frequent_elements(dataset, q);
                &filtered
            }
            None => dataset,
        };
        report.pairs = oracle_join(data, &measure, config.threshold, config.force_oracle)?;
        report.wall_time = started.elapsed().as_secs_f64();
        return Ok(report);
    }

    let engine = config.engine()?;
    let raw = engine.records(dataset.tuples().to_vec());
    let join = match config.algorithm {
        Algorithm::OnlineAgg => Some(JoinAlgorithm::OnlineAggregation),
        Algorithm::Lookup => Some(JoinAlgorithm::Lookup),
        Algorithm::Sharding => Some(JoinAlgorithm::Sharding(ShardingConfig::new(
            config.sharding_c.expect("validated"),
        )?)),
        Algorithm::Vcl | Algorithm::Oracle => None,
    };
    match join {
        Some(join) => {
            let mut sim = SimilarityConfig::new(config.threshold)?;
            sim.chunk_budget = config.chunk_budget;
            sim.emit_candidates = config.emit_candidates.is_some();
            let out = run_vsmart(&engine, &raw, &measure, &join, config.stopword_q, &sim)?;
            report.pairs = out.similarity.sorted_pairs()?;
            if let Some(c) = &out.similarity.candidates {
                let mut c = c.to_vec()?;
                c.sort_by(|a, b| (&a.key.left, &a.key.right).cmp(&(&b.key.left, &b.key.right)));
                report.candidates = Some(c);
            }
            report.metrics = out.metrics;
            report.uni_table = out.uni_table;
        }
        None => {
            let filtered;
            let raw = match config.stopword_q {
                Some(q) => {
                    let (out, m) = drop_stop_words(&engine, &raw, q)?;
                    report.metrics.push(m);
                    filtered = out;
                    &filtered
                }
                None => &raw,
            };
            let cfg = VclConfig {
                hash_order: config.hash_order,
                instrumented: false,
            };
            let out = vcl_join(&engine, raw, &measure, config.threshold, &cfg)?;
            report.pairs = out.sorted_pairs()?;
            report.metrics.extend(out.metrics);
            report.vcl_report = Some(out.report);
        }
    }
    sort_pairs(&mut report.pairs);
    report.wall_time = started.elapsed().as_secs_f64();
    Ok(report)
}

fn tagged(kind: &str, value: impl Serialize) -> Result<Value> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::Internal(format!("metrics encoding: {e}")))?;
    if let Value::Object(map) = &mut v {
        map.insert("schema_version".into(), json!(METRICS_SCHEMA_VERSION));
        map.insert("kind".into(), json!(kind));
    }
    Ok(v)
}

/// JSON-lines metric records for one run: one per stage, the VCL
/// redundancy report if any, and a summary line.
pub fn metrics_lines(config: &RunConfig, report: &RunReport) -> Result<Vec<Value>> {
    let mut lines = Vec::new();
    for m in &report.metrics {
        let mut v = tagged("stage", m)?;
        v["algorithm"] = json!(config.algorithm.name());
        lines.push(v);
    }
    if let Some(vcl) = &report.vcl_report {
        lines.push(tagged("vcl_redundancy", vcl)?);
    }
    lines.push(tagged(
        "run",
        json!({
            "algorithm": config.algorithm.name(),
            "measure": config.measure,
            "threshold": config.threshold,
            "workers": config.workers,
            "memory_budget": config.memory_budget,
            "stopword_q": config.stopword_q,
            "sharding_c": config.sharding_c,
            "chunk_budget": config.chunk_budget,
            "secondary_keys": !config.no_secondary_keys,
            "seed": config.seed,
            "pairs": report.pairs.len(),
            "bytes_shuffled": report.bytes_shuffled(),
            "max_group_length": report.max_group_length(),
            "wall_time": report.wall_time,
        }),
    )?);
    Ok(lines)
}

fn write_json_lines(path: &Path, lines: &[Value], append: bool) -> Result<()> {
    let file = File::options().create(true).append(append).write(true).truncate(!append).open(path)?;
    let mut out = BufWriter::new(file);
    for line in lines {
        serde_json::to_writer(&mut out, line).map_err(|e| Error::Internal(format!("metrics encoding: {e}")))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    Dataset::read_tsv(BufReader::new(File::open(path)?))
}

/// Reads the input, executes, and writes pairs, metrics and debug dumps.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let input = config
        .input
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("--input is required".into()))?;
    let dataset = read_dataset(input)?;
    let report = execute(config, &dataset)?;
    let tsv = report.tsv();
    match &config.output {
        Some(path) => std::fs::write(path, tsv)?,
        None => std::io::stdout().lock().write_all(tsv.as_bytes())?,
    }
    if let Some(path) = &config.metrics {
        write_json_lines(path, &metrics_lines(config, &report)?, false)?;
    }
    if let (Some(path), Some(candidates)) = (&config.emit_candidates, &report.candidates) {
        let mut out = BufWriter::new(File::create(path)?);
        for c in candidates {
            writeln!(out, "{}\t{}\t{}\t{:.9}", c.key.left, c.key.right, c.contributions, c.similarity)?;
        }
        out.flush()?;
    }
    if let (Some(path), Some(table)) = (&config.uni_table, &report.uni_table) {
        write_uni_table(BufWriter::new(File::create(path)?), table)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Sweep {
    Thresholds(Vec<f64>),
    Workers(Vec<usize>),
    ShardingC(Vec<u64>),
}

impl Sweep {
    pub fn name(&self) -> &'static str {
        match self {
            Sweep::Thresholds(_) => "thresholds",
            Sweep::Workers(_) => "workers",
            Sweep::ShardingC(_) => "sharding-c",
        }
    }

    /// Parses `kind` (thresholds, workers or sharding-c) and comma-separated points.
    pub fn parse(kind: &str, points: &str) -> Result<Self> {
        let bad = |p: &str| Error::InvalidConfig(format!("invalid {kind} sweep point `{p}`"));
        let items = points.split(',').map(str::trim).filter(|p| !p.is_empty());
        let sweep = match kind {
            "thresholds" => Sweep::Thresholds(items.map(|p| p.parse().map_err(|_| bad(p))).collect::<Result<_>>()?),
            "workers" => Sweep::Workers(items.map(|p| p.parse().map_err(|_| bad(p))).collect::<Result<_>>()?),
            "sharding-c" => Sweep::ShardingC(items.map(|p| p.parse().map_err(|_| bad(p))).collect::<Result<_>>()?),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown sweep `{other}` (expected thresholds, workers or sharding-c)"
                )))
            }
        };
        if sweep.len() == 0 {
            return Err(Error::InvalidConfig("sweep needs at least one point".into()));
        }
        Ok(sweep)
    }

    fn len(&self) -> usize {
        match self {
            Sweep::Thresholds(v) => v.len(),
            Sweep::Workers(v) => v.len(),
            Sweep::ShardingC(v) => v.len(),
        }
    }

    fn point(&self, i: usize) -> f64 {
        match self {
            Sweep::Thresholds(v) => v[i],
            Sweep::Workers(v) => v[i] as f64,
            Sweep::ShardingC(v) => v[i] as f64,
        }
    }

    fn apply(&self, i: usize, config: &mut RunConfig) {
        match self {
            Sweep::Thresholds(v) => config.threshold = v[i],
            Sweep::Workers(v) => config.workers = v[i],
            Sweep::ShardingC(v) => config.sharding_c = Some(v[i]),
        }
    }

    /// Whether outputs must also agree across points, not just algorithms.
    fn output_invariant(&self) -> bool {
        !matches!(self, Sweep::Thresholds(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep: String,
    pub point: f64,
    pub algorithm: Algorithm,
    pub wall_time: f64,
    pub bytes_shuffled: u64,
    pub max_group_length: u64,
    pub output_pairs: u64,
    /// Stable hash of the sorted output TSV.
    pub output_digest: u64,
}

/// Runs every algorithm at every sweep point and checks that outputs agree.
///
/// Rows are appended to `report_path` as they complete, so a failing point
/// leaves the earlier results on disk. A sharding-C sweep runs only the
/// sharding algorithm.
pub fn bench_sweep(
    base: &RunConfig,
    dataset: &Dataset,
    sweep: &Sweep,
    algorithms: &[Algorithm],
    report_path: Option<&Path>,
) -> Result<Vec<SweepRow>> {
    if let Some(path) = report_path {
        File::create(path)?;
    }
    let algorithms: Vec<Algorithm> = match sweep {
        Sweep::ShardingC(_) => vec![Algorithm::Sharding],
        _ => algorithms.to_vec(),
    };
    if algorithms.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one algorithm".into()));
    }
    let mut rows: Vec<SweepRow> = Vec::new();
    for i in 0..sweep.len() {
        let mut point_rows = Vec::new();
        for &algorithm in &algorithms {
            let mut config = base.clone();
            config.algorithm = algorithm;
            if algorithm != Algorithm::Sharding {
                config.sharding_c = None;
            } else if config.sharding_c.is_none() {
                config.sharding_c = Some(32);
            }
            sweep.apply(i, &mut config);
            let report = execute(&config, dataset).map_err(|e| {
                log::error!("sweep point {} = {} failed for {algorithm}: {e}", sweep.name(), sweep.point(i));
                e
            })?;
            let row = SweepRow {
                sweep: sweep.name().into(),
                point: sweep.point(i),
                algorithm,
                wall_time: report.wall_time,
                bytes_shuffled: report.bytes_shuffled(),
                max_group_length: report.max_group_length(),
                output_pairs: report.pairs.len() as u64,
                output_digest: stable_hash(report.tsv().as_bytes()),
            };
            if let Some(path) = report_path {
                write_json_lines(path, &[tagged("sweep_row", &row)?], true)?;
            }
            point_rows.push(row);
        }
        let reference = rows
            .first()
            .filter(|_| sweep.output_invariant())
            .or(point_rows.first())
            .cloned()
            .expect("at least one algorithm");
        if let Some(bad) = point_rows.iter().find(|r| r.output_digest != reference.output_digest) {
            return Err(Error::SweepMismatch(format!(
                "{} at {} = {} produced {} pairs, {} at {} = {} produced {}",
                bad.algorithm,
                sweep.name(),
                bad.point,
                bad.output_pairs,
                reference.algorithm,
                sweep.name(),
                reference.point,
                reference.output_pairs
            )));
        }
        rows.extend(point_rows);
    }
    Ok(rows)
}

/// Plain-text table of sweep rows.
pub fn format_sweep_table(rows: &[SweepRow]) -> String {
    let mut out = format!(
        "{:<12} {:>10} {:>12} {:>14} {:>10} {:>10}\n",
        "algorithm", "point", "wall_s", "bytes_shuffled", "max_group", "pairs"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<12} {:>10} {:>12.4} {:>14} {:>10} {:>10}\n",
            r.algorithm.name(),
            r.point,
            r.wall_time,
            r.bytes_shuffled,
            r.max_group_length,
            r.output_pairs
        ));
    }
    out
}
