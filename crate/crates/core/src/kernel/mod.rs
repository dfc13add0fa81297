//! A deterministic in-process map/shuffle/reduce engine.
//!
//! A stage runs one map task per input segment. Mapper output is partitioned
//! by key over `workers` reducers, buffered per mapper, sorted by
//! `(key, secondary, value)` and optionally combined before it is handed to
//! the reducers. A mapper whose buffer outgrows the memory budget spills
//! sorted runs to temporary files; each reducer k-way merges its in-memory
//! and spilled runs and calls the reduce function once per key. Output is
//! one segment per reducer, so stages chain without materializing whole
//! intermediate datasets in memory.

mod exec;
mod flow;
mod group;
mod metrics;
mod record;
mod side;
mod stage;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::hash::Hash;
use std::path::{Path, PathBuf};
use std::time::Instant;

use tempfile::NamedTempFile;

pub use exec::{stable_hash, STABLE_HASH_VERSION};
pub use flow::{RecordSet, SegmentIter};
pub use group::{GroupEntries, GroupEntry, ReduceGroup};
pub use metrics::{Counters, StageMetrics};
pub use record::KvRecord;
pub use side::{SideMap, SideSize, SideTable};
pub use stage::{Emitter, MapContext, MapOnlySpec, StageSpec};

use crate::codec::Record;
use crate::error::{Error, Result};
use flow::{SegmentHandle, SegmentWriter};
use group::GroupBuilder;
use record::{SpillReader, SpillWriter};

pub const DEFAULT_MEMORY_BUDGET: u64 = 64 * 1024 * 1024;
pub const DEFAULT_WORKERS: usize = 4;

#[derive(Clone, Debug)]
pub struct KernelConfig {
    /// Number of reducers (and of output segments) per stage.
    pub workers: usize,
    /// Per-worker memory budget in bytes for buffers, groups and side data.
    pub memory_budget: u64,
    /// When false, stages that ask for secondary sorting are refused.
    pub secondary_keys: bool,
    /// Run workers on the rayon pool. Ignored without the `parallel` feature.
    pub parallel: bool,
    pub spill_dir: Option<PathBuf>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            workers: DEFAULT_WORKERS,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            secondary_keys: true,
            parallel: true,
            spill_dir: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Engine {
    config: KernelConfig,
}

struct MapOutput {
    runs: Vec<Vec<KvRecord>>,
    spills: Vec<Vec<NamedTempFile>>,
    counters: Counters,
    records_mapped: u64,
    records_shuffled: u64,
    bytes_shuffled: u64,
    spilled_runs: u64,
    spilled_bytes: u64,
    combiner_violations: u64,
    input_records: u64,
    elapsed: f64,
}

#[derive(Default)]
struct PartitionInput {
    runs: Vec<Vec<KvRecord>>,
    spills: Vec<NamedTempFile>,
}

struct ReduceOutput {
    segment: SegmentHandle,
    counters: Counters,
    groups: u64,
    max_group_length: u64,
    max_group_bytes: u64,
    output_records: u64,
    elapsed: f64,
}

enum RunSource {
    Memory(std::vec::IntoIter<KvRecord>),
    Disk(SpillReader),
}

impl RunSource {
    fn next_record(&mut self) -> Result<Option<KvRecord>> {
        match self {
            RunSource::Memory(it) => Ok(it.next()),
            RunSource::Disk(reader) => reader.next().transpose(),
        }
    }
}

fn display_key(key: &[u8]) -> String {
    format!("`{}`", key.escape_ascii())
}

impl Engine {
    pub fn new(config: KernelConfig) -> Result<Self> {
        if config.workers == 0 {
            return Err(Error::InvalidConfig("worker count must be positive".into()));
        }
        if config.memory_budget == 0 {
            return Err(Error::InvalidConfig("memory budget must be positive".into()));
        }
        Ok(Self { config })
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn workers(&self) -> usize {
        self.config.workers
    }

    pub fn memory_budget(&self) -> u64 {
        self.config.memory_budget
    }

    fn spill_dir(&self) -> Option<&Path> {
        self.config.spill_dir.as_deref()
    }

    /// Splits driver-side records into one input segment per worker.
    pub fn records<T: Record>(&self, items: Vec<T>) -> RecordSet<T> {
        RecordSet::from_vec(items, self.config.workers)
    }

    /// Checks `table` against the memory budget and freezes it for sharing.
    pub fn load_side_data<T: SideSize + Send + Sync>(&self, name: &str, table: T) -> Result<SideTable<T>> {
        let needed = table.side_bytes();
        if needed > self.config.memory_budget {
            return Err(Error::MemoryBudgetExceeded {
                what: format!("side table `{name}`"),
                needed,
                budget: self.config.memory_budget,
            });
        }
        Ok(SideTable::new(table))
    }

    /// Builds a side map from a stream of entries, failing as soon as the
    /// running size passes the budget.
    pub fn load_side_entries<K, V>(
        &self,
        name: &str,
        entries: impl IntoIterator<Item = Result<(K, V)>>,
    ) -> Result<SideMap<K, V>>
    where
        K: SideSize + Hash + Eq + Send + Sync,
        V: SideSize + Send + Sync,
    {
        let budget = self.config.memory_budget;
        let mut needed = 0u64;
        let mut map = HashMap::new();
        for entry in entries {
            let (k, v) = entry?;
            needed += side::entry_bytes(&k, &v);
            if needed > budget {
                return Err(Error::MemoryBudgetExceeded {
                    what: format!("side table `{name}` (stopped after {} entries)", map.len() + 1),
                    needed,
                    budget,
                });
            }
            map.insert(k, v);
        }
        Ok(SideTable::new(map))
    }

    pub fn run_stage<I: Record, O: Record>(
        &self,
        spec: &StageSpec<'_, I, O>,
        input: &RecordSet<I>,
    ) -> Result<(RecordSet<O>, StageMetrics)> {
        if spec.secondary_sort && !self.config.secondary_keys {
            return Err(Error::PreconditionRefused(format!(
                "stage `{}` needs secondary keys, which are disabled",
                spec.name
            )));
        }
        if spec.secondary_sort && spec.combine.is_some() {
            return Err(Error::InvalidConfig(format!(
                "stage `{}`: combiners cannot be used with secondary sorting",
                spec.name
            )));
        }
        let started = Instant::now();
        let workers = self.config.workers;
        let parallel = self.config.parallel;

        let map_outputs: Vec<MapOutput> = exec::run_indexed(parallel, input.num_segments(), |s| {
            self.map_task(spec, input, s)
        })
        .into_iter()
        .collect::<Result<_>>()?;

        let mut metrics = StageMetrics {
            stage: spec.name.clone(),
            workers,
            per_worker_wall_time: vec![0.0; workers],
            ..StageMetrics::default()
        };
        let mut counters = Counters::default();
        let mut partitions: Vec<PartitionInput> = (0..workers).map(|_| PartitionInput::default()).collect();
        for (s, out) in map_outputs.into_iter().enumerate() {
            metrics.input_records += out.input_records;
            metrics.records_mapped += out.records_mapped;
            metrics.records_shuffled += out.records_shuffled;
            metrics.bytes_shuffled += out.bytes_shuffled;
            metrics.spilled_runs += out.spilled_runs;
            metrics.spilled_bytes += out.spilled_bytes;
            metrics.combiner_violations += out.combiner_violations;
            metrics.per_worker_wall_time[s % workers] += out.elapsed;
            counters.merge(out.counters);
            for (p, run) in out.runs.into_iter().enumerate() {
                if !run.is_empty() {
                    partitions[p].runs.push(run);
                }
            }
            for (p, files) in out.spills.into_iter().enumerate() {
                partitions[p].spills.extend(files);
            }
        }

        let reduce_outputs: Vec<ReduceOutput> = exec::run_owned(parallel, partitions, |p, part| {
            self.reduce_task(spec, p, part)
        })
        .into_iter()
        .collect::<Result<_>>()?;

        let mut segments = Vec::with_capacity(workers);
        for (p, out) in reduce_outputs.into_iter().enumerate() {
            metrics.groups += out.groups;
            metrics.max_group_length = metrics.max_group_length.max(out.max_group_length);
            metrics.max_group_bytes = metrics.max_group_bytes.max(out.max_group_bytes);
            metrics.output_records += out.output_records;
            metrics.per_worker_wall_time[p] += out.elapsed;
            counters.merge(out.counters);
            segments.push(out.segment);
        }
        if metrics.records_mapped > 0 {
            metrics.combiner_reduction_ratio =
                metrics.records_shuffled as f64 / metrics.records_mapped as f64;
        }
        metrics.counters = counters.sums;
        metrics.maxima = counters.maxima;
        metrics.wall_time = started.elapsed().as_secs_f64();
        log::debug!(
            "stage {}: {} mapped, {} shuffled ({} bytes), {} groups, {} out",
            metrics.stage,
            metrics.records_mapped,
            metrics.records_shuffled,
            metrics.bytes_shuffled,
            metrics.groups,
            metrics.output_records
        );
        Ok((RecordSet::from_segments(segments), metrics))
    }

    fn map_task<I: Record, O: Record>(
        &self,
        spec: &StageSpec<'_, I, O>,
        input: &RecordSet<I>,
        split: usize,
    ) -> Result<MapOutput> {
        let started = Instant::now();
        let workers = self.config.workers;
        let budget = self.config.memory_budget;
        let mut out = MapOutput {
            runs: vec![Vec::new(); workers],
            spills: (0..workers).map(|_| Vec::new()).collect(),
            counters: Counters::default(),
            records_mapped: 0,
            records_shuffled: 0,
            bytes_shuffled: 0,
            spilled_runs: 0,
            spilled_bytes: 0,
            combiner_violations: 0,
            input_records: 0,
            elapsed: 0.0,
        };
        let mut buffered = 0u64;
        let mut ctx = MapContext::new(budget);
        for (idx, item) in input.segment_iter(split)?.enumerate() {
            let item = item?;
            out.input_records += 1;
            (spec.map)(&item, &mut ctx).map_err(|e| Error::Task {
                stage: spec.name.clone(),
                key: format!("map input #{idx} of split {split}"),
                source: Box::new(e),
            })?;
            for rec in ctx.records.drain(..) {
                if rec.key.is_empty() {
                    return Err(Error::Contract(format!("stage `{}`: mapper emitted an empty key", spec.name)));
                }
                if rec.secondary.is_some() && !spec.secondary_sort {
                    return Err(Error::Contract(format!(
                        "stage `{}`: secondary key emitted without secondary sorting",
                        spec.name
                    )));
                }
                let p = match &spec.partition {
                    Some(f) => f(&rec.key, workers),
                    None => exec::default_partition(&rec.key, workers),
                };
                if p >= workers {
                    return Err(Error::Contract(format!(
                        "stage `{}`: partitioner returned {p} for {workers} workers",
                        spec.name
                    )));
                }
                out.records_mapped += 1;
                buffered += rec.byte_len();
                out.runs[p].push(rec);
            }
            if buffered > budget {
                for p in 0..workers {
                    let run = std::mem::take(&mut out.runs[p]);
                    if run.is_empty() {
                        continue;
                    }
                    let run = self.sort_and_combine(spec, run, &mut out)?;
                    let mut writer = SpillWriter::create(self.spill_dir())?;
                    for rec in &run {
                        writer.write_record(rec)?;
                    }
                    out.spilled_bytes += writer.bytes;
                    out.spilled_runs += 1;
                    out.spills[p].push(writer.finish()?);
                }
                buffered = 0;
            }
        }
        for p in 0..workers {
            let run = std::mem::take(&mut out.runs[p]);
            out.runs[p] = self.sort_and_combine(spec, run, &mut out)?;
        }
        out.counters.merge(std::mem::take(&mut ctx.counters));
        out.elapsed = started.elapsed().as_secs_f64();
        Ok(out)
    }

    fn sort_and_combine<I, O>(
        &self,
        spec: &StageSpec<'_, I, O>,
        mut run: Vec<KvRecord>,
        out: &mut MapOutput,
    ) -> Result<Vec<KvRecord>> {
        run.sort_unstable();
        let run = match &spec.combine {
            None => run,
            Some(combine) => {
                let mut combined = Vec::with_capacity(run.len());
                let mut iter = run.into_iter().peekable();
                while let Some(first) = iter.next() {
                    let key = first.key;
                    let mut values = vec![first.value];
                    while iter.peek().is_some_and(|r| r.key == key) {
                        values.push(iter.next().expect("peeked").value);
                    }
                    let before = values.len();
                    let mut after = combine(&key, values).map_err(|e| Error::Task {
                        stage: spec.name.clone(),
                        key: display_key(&key),
                        source: Box::new(e),
                    })?;
                    if after.len() > before {
                        out.combiner_violations += 1;
                        log::warn!(
                            "stage `{}`: combiner grew {} values to {} for key {}",
                            spec.name,
                            before,
                            after.len(),
                            display_key(&key)
                        );
                    }
                    after.sort_unstable();
                    for value in after {
                        combined.push(KvRecord::new(key.clone(), value));
                    }
                }
                combined
            }
        };
        out.records_shuffled += run.len() as u64;
        out.bytes_shuffled += run.iter().map(KvRecord::byte_len).sum::<u64>();
        Ok(run)
    }

    fn reduce_task<I, O: Record>(
        &self,
        spec: &StageSpec<'_, I, O>,
        _partition: usize,
        input: PartitionInput,
    ) -> Result<ReduceOutput> {
        let started = Instant::now();
        let budget = self.config.memory_budget;
        let mut sources: Vec<RunSource> = input
            .runs
            .into_iter()
            .map(|r| RunSource::Memory(r.into_iter()))
            .collect();
        for file in &input.spills {
            sources.push(RunSource::Disk(SpillReader::open(file.path())?));
        }
        let mut heap = BinaryHeap::new();
        for (i, src) in sources.iter_mut().enumerate() {
            if let Some(rec) = src.next_record()? {
                heap.push(Reverse((rec, i)));
            }
        }

        let mut writer = SegmentWriter::<O>::new(budget, self.spill_dir());
        let mut counters = Counters::default();
        let mut out = ReduceOutput {
            segment: SegmentWriter::<O>::new(budget, None).finish()?,
            counters: Counters::default(),
            groups: 0,
            max_group_length: 0,
            max_group_bytes: 0,
            output_records: 0,
            elapsed: 0.0,
        };
        let mut current: Option<GroupBuilder> = None;

        let flush = |builder: GroupBuilder,
                         writer: &mut SegmentWriter<O>,
                         counters: &mut Counters,
                         out: &mut ReduceOutput|
         -> Result<()> {
            let group = builder.finish()?;
            out.groups += 1;
            out.max_group_length = out.max_group_length.max(group.len());
            out.max_group_bytes = out.max_group_bytes.max(group.byte_len());
            let mut emitter = Emitter::new(writer, counters, budget);
            (spec.reduce)(&group, &mut emitter).map_err(|e| Error::Task {
                stage: spec.name.clone(),
                key: display_key(group.key()),
                source: Box::new(e),
            })
        };

        while let Some(Reverse((rec, i))) = heap.pop() {
            if let Some(next) = sources[i].next_record()? {
                heap.push(Reverse((next, i)));
            }
            let same_key = current.as_ref().is_some_and(|b| b.key() == rec.key.as_slice());
            if !same_key {
                if let Some(done) = current.take() {
                    flush(done, &mut writer, &mut counters, &mut out)?;
                }
                current = Some(GroupBuilder::new(rec.key, budget, self.spill_dir()));
            }
            current
                .as_mut()
                .expect("group in progress")
                .push(rec.secondary, rec.value)?;
        }
        if let Some(done) = current.take() {
            flush(done, &mut writer, &mut counters, &mut out)?;
        }
        out.output_records = writer.count();
        out.segment = writer.finish()?;
        out.counters = counters;
        out.elapsed = started.elapsed().as_secs_f64();
        Ok(out)
    }

    pub fn run_map_only<I: Record, O: Record>(
        &self,
        spec: &MapOnlySpec<'_, I, O>,
        input: &RecordSet<I>,
    ) -> Result<(RecordSet<O>, StageMetrics)> {
        let started = Instant::now();
        let budget = self.config.memory_budget;
        type MapOnlyTask = (SegmentHandle, Counters, u64, u64, f64);
        let results: Vec<Result<MapOnlyTask>> =
            exec::run_indexed(self.config.parallel, input.num_segments(), |s| {
                let t0 = Instant::now();
                let mut writer = SegmentWriter::<O>::new(budget, self.spill_dir());
                let mut counters = Counters::default();
                let mut seen = 0u64;
                for (idx, item) in input.segment_iter(s)?.enumerate() {
                    let item = item?;
                    seen += 1;
                    let mut emitter = Emitter::new(&mut writer, &mut counters, budget);
                    (spec.map)(&item, &mut emitter).map_err(|e| Error::Task {
                        stage: spec.name.clone(),
                        key: format!("map input #{idx} of split {s}"),
                        source: Box::new(e),
                    })?;
                }
                let produced = writer.count();
                Ok((writer.finish()?, counters, seen, produced, t0.elapsed().as_secs_f64()))
            });
        let mut metrics = StageMetrics {
            stage: spec.name.clone(),
            workers: self.config.workers,
            per_worker_wall_time: vec![0.0; self.config.workers],
            ..StageMetrics::default()
        };
        let mut counters = Counters::default();
        let mut segments = Vec::new();
        for (s, r) in results.into_iter().enumerate() {
            let (segment, c, seen, produced, elapsed) = r?;
            metrics.input_records += seen;
            metrics.records_mapped += produced;
            metrics.output_records += produced;
            metrics.per_worker_wall_time[s % self.config.workers] += elapsed;
            counters.merge(c);
            segments.push(segment);
        }
        metrics.counters = counters.sums;
        metrics.maxima = counters.maxima;
        metrics.wall_time = started.elapsed().as_secs_f64();
        Ok((RecordSet::from_segments(segments), metrics))
    }

    /// Runs stages in sequence, feeding each output into the next stage.
    pub fn chain<R: Record>(
        &self,
        stages: &[StageSpec<'_, R, R>],
        input: RecordSet<R>,
    ) -> Result<(RecordSet<R>, Vec<StageMetrics>)> {
        let mut current = input;
        let mut all = Vec::with_capacity(stages.len());
        for (index, spec) in stages.iter().enumerate() {
            let (next, metrics) = self.run_stage(spec, &current).map_err(|e| Error::Chain {
                index,
                source: Box::new(e),
            })?;
            current = next;
            all.push(metrics);
        }
        Ok((current, all))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engine(workers: usize) -> Engine {
        Engine::new(KernelConfig {
            workers,
            ..KernelConfig::default()
        })
        .unwrap()
    }

    fn word_count<'a>() -> StageSpec<'a, Vec<u8>, (Vec<u8>, u64)> {
        StageSpec::new(
            "word-count",
            |w: &Vec<u8>, ctx: &mut MapContext| {
                ctx.emit(w.clone(), 1u64.to_bytes());
                Ok(())
            },
            |g: &ReduceGroup, out: &mut Emitter<'_, (Vec<u8>, u64)>| {
                let mut n = 0;
                for v in g.decoded::<u64>() {
                    n += v?;
                }
                out.emit((g.key().to_vec(), n))
            },
        )
    }

    fn sum_combiner(_: &[u8], values: Vec<Vec<u8>>) -> Result<Vec<Vec<u8>>> {
        let mut n = 0u64;
        for v in values {
            n += u64::from_bytes(&v)?;
        }
        Ok(vec![n.to_bytes()])
    }

    #[test]
    fn word_count_example() {
        let e = engine(2);
        let input = e.records(vec![b"a".to_vec(), b"b".to_vec(), b"a".to_vec()]);
        let spec = word_count().with_combiner(sum_combiner);
        let (out, m) = e.run_stage(&spec, &input).unwrap();
        let mut got = out.to_vec().unwrap();
        got.sort();
        assert_eq!(got, vec![(b"a".to_vec(), 2), (b"b".to_vec(), 1)]);
        assert_eq!(m.records_mapped, 3);
        assert_eq!(m.groups, 2);
        assert_eq!(m.max_group_length, m.max_group_length.max(1));
    }

    #[test]
    fn secondary_sort_orders_values() {
        let e = engine(3);
        let input = e.records(vec![(1u64, b"x".to_vec()), (0u64, b"y".to_vec())]);
        let spec = StageSpec::new(
            "sec",
            |r: &(u64, Vec<u8>), ctx: &mut MapContext| {
                ctx.emit_with_secondary(b"k".to_vec(), r.0.to_bytes(), r.1.clone());
                Ok(())
            },
            |g: &ReduceGroup, out: &mut Emitter<'_, Vec<u8>>| {
                let mut seen = Vec::new();
                for e in g.entries() {
                    seen.extend_from_slice(&e?.value);
                }
                out.emit(seen)
            },
        )
        .with_secondary_sort();
        let (out, _) = e.run_stage(&spec, &input).unwrap();
        assert_eq!(out.to_vec().unwrap(), vec![b"yx".to_vec()]);
    }

    #[test]
    fn empty_input_has_zero_metrics() {
        let e = engine(4);
        let (out, m) = e.run_stage(&word_count(), &e.records(Vec::new())).unwrap();
        assert!(out.is_empty());
        assert_eq!(
            (m.records_mapped, m.records_shuffled, m.bytes_shuffled, m.groups, m.max_group_length),
            (0, 0, 0, 0, 0)
        );
        assert_eq!(m.combiner_reduction_ratio, 0.0);
    }

    #[test]
    fn secondary_keys_can_be_disabled() {
        let e = Engine::new(KernelConfig {
            secondary_keys: false,
            ..KernelConfig::default()
        })
        .unwrap();
        let spec = word_count().with_secondary_sort();
        let err = e.run_stage(&spec, &e.records(vec![b"a".to_vec()])).unwrap_err();
        assert!(matches!(err, Error::PreconditionRefused(_)));
    }

    #[test]
    fn combiner_with_secondary_sort_is_rejected() {
        let e = engine(1);
        let spec = word_count().with_combiner(sum_combiner).with_secondary_sort();
        assert!(matches!(
            e.run_stage(&spec, &e.records(vec![b"a".to_vec()])),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn growing_combiner_is_flagged_but_tolerated() {
        let e = engine(1);
        let spec = word_count().with_combiner(|_, mut values: Vec<Vec<u8>>| {
            values.push(0u64.to_bytes());
            Ok(values)
        });
        let (out, m) = e.run_stage(&spec, &e.records(vec![b"a".to_vec()])).unwrap();
        assert_eq!(m.combiner_violations, 1);
        assert_eq!(out.to_vec().unwrap(), vec![(b"a".to_vec(), 1)]);
    }

    #[test]
    fn reduce_failures_name_the_key() {
        let e = engine(2);
        let spec = StageSpec::new(
            "fails",
            |w: &Vec<u8>, ctx: &mut MapContext| {
                ctx.emit(w.clone(), Vec::new());
                Ok(())
            },
            |g: &ReduceGroup, _: &mut Emitter<'_, u64>| {
                if g.key() == b"bad" {
                    Err(Error::Internal("boom".into()))
                } else {
                    Ok(())
                }
            },
        );
        let err = e
            .run_stage(&spec, &e.records(vec![b"ok".to_vec(), b"bad".to_vec()]))
            .unwrap_err();
        match err {
            Error::Task { key, stage, .. } => {
                assert!(key.contains("bad"));
                assert_eq!(stage, "fails");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_partitioner_and_empty_keys_are_contract_errors() {
        let e = engine(2);
        let spec = word_count().with_partitioner(|_, n| n);
        assert!(matches!(
            e.run_stage(&spec, &e.records(vec![b"a".to_vec()])),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            e.run_stage(&word_count(), &e.records(vec![Vec::new()])),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn spilling_under_tiny_budget_preserves_output() {
        let words: Vec<Vec<u8>> = (0..2000u32).map(|i| format!("w{}", i % 37).into_bytes()).collect();
        let roomy = engine(3);
        let tiny = Engine::new(KernelConfig {
            workers: 3,
            memory_budget: 64,
            ..KernelConfig::default()
        })
        .unwrap();
        let spec = word_count();
        let (a, _) = roomy.run_stage(&spec, &roomy.records(words.clone())).unwrap();
        let (b, m) = tiny.run_stage(&spec, &tiny.records(words)).unwrap();
        assert!(m.spilled_runs > 0);
        let mut a = a.to_vec().unwrap();
        let mut b = b.to_vec().unwrap();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn side_data_respects_budget() {
        #[derive(Debug)]
        struct Claimed(u64);
        impl SideSize for Claimed {
            fn side_bytes(&self) -> u64 {
                self.0
            }
        }
        let e = Engine::new(KernelConfig {
            memory_budget: 1 << 20,
            ..KernelConfig::default()
        })
        .unwrap();
        let small: HashMap<Vec<u8>, u64> = [(b"m1".to_vec(), 3u64)].into_iter().collect();
        let handle = e.load_side_data("uni", small).unwrap();
        assert_eq!(handle.get(b"m1".as_slice()), Some(&3));
        // A billion 16-byte entries.
        assert!(e
            .load_side_data("huge", Claimed(1_000_000_000 * 16))
            .unwrap_err()
            .is_memory_budget_exceeded());
        let empty = e.load_side_data("empty", HashMap::<Vec<u8>, u64>::new()).unwrap();
        assert!(empty.is_empty());
        let streamed = e.load_side_entries(
            "stream",
            (0..1_000_000u64).map(|i| Ok((i.to_le_bytes().to_vec(), i))),
        );
        assert!(streamed.unwrap_err().is_memory_budget_exceeded());
    }

    #[test]
    fn chain_examples() {
        let e = engine(2);
        let identity = || {
            StageSpec::new(
                "identity",
                |r: &Vec<u8>, ctx: &mut MapContext| {
                    ctx.emit(r.clone(), Vec::new());
                    Ok(())
                },
                |g: &ReduceGroup, out: &mut Emitter<'_, Vec<u8>>| {
                    for _ in 0..g.len() {
                        out.emit(g.key().to_vec())?;
                    }
                    Ok(())
                },
            )
        };
        let input = vec![b"x".to_vec(), b"y".to_vec(), b"x".to_vec()];
        let (out, ms) = e.chain(&[identity()], e.records(input.clone())).unwrap();
        let mut got = out.to_vec().unwrap();
        got.sort();
        let mut want = input.clone();
        want.sort();
        assert_eq!(got, want);
        assert_eq!(ms.len(), 1);

        let (out, ms) = e.chain::<Vec<u8>>(&[], e.records(input.clone())).unwrap();
        assert_eq!(out.to_vec().unwrap(), input);
        assert!(ms.is_empty());

        let (two, _) = e.chain(&[identity(), identity()], e.records(input.clone())).unwrap();
        let (one, _) = e.run_stage(&identity(), &e.records(input.clone())).unwrap();
        let (again, _) = e.run_stage(&identity(), &one).unwrap();
        assert_eq!(two.to_vec().unwrap(), again.to_vec().unwrap());

        let failing = StageSpec::new(
            "fail",
            |_: &Vec<u8>, _: &mut MapContext| Err(Error::Internal("no".into())),
            |_: &ReduceGroup, _: &mut Emitter<'_, Vec<u8>>| Ok(()),
        );
        match e.chain(&[identity(), failing], e.records(input)) {
            Err(Error::Chain { index: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
