use super::flow::SegmentWriter;
use super::group::ReduceGroup;
use super::metrics::Counters;
use super::record::KvRecord;
use crate::codec::Record;
use crate::error::Result;

pub(crate) type MapFn<'a, I> = Box<dyn Fn(&I, &mut MapContext) -> Result<()> + Send + Sync + 'a>;
pub(crate) type ReduceFn<'a, O> =
    Box<dyn Fn(&ReduceGroup, &mut Emitter<'_, O>) -> Result<()> + Send + Sync + 'a>;
pub(crate) type CombineFn<'a> =
    Box<dyn Fn(&[u8], Vec<Vec<u8>>) -> Result<Vec<Vec<u8>>> + Send + Sync + 'a>;
pub(crate) type PartitionFn<'a> = Box<dyn Fn(&[u8], usize) -> usize + Send + Sync + 'a>;
pub(crate) type MapOnlyFn<'a, I, O> =
    Box<dyn Fn(&I, &mut Emitter<'_, O>) -> Result<()> + Send + Sync + 'a>;

/// One map → shuffle → (combine) → reduce step.
///
/// Map, reduce and combine functions must be pure, deterministic and safe to
/// call from several workers at once. A combiner must be associative and
/// commutative over its value domain and may not be used together with
/// secondary sorting.
pub struct StageSpec<'a, I, O> {
    pub(crate) name: String,
    pub(crate) map: MapFn<'a, I>,
    pub(crate) reduce: ReduceFn<'a, O>,
    pub(crate) combine: Option<CombineFn<'a>>,
    pub(crate) secondary_sort: bool,
    pub(crate) partition: Option<PartitionFn<'a>>,
}

impl<'a, I: Record, O: Record> StageSpec<'a, I, O> {
    pub fn new(
        name: impl Into<String>,
        map: impl Fn(&I, &mut MapContext) -> Result<()> + Send + Sync + 'a,
        reduce: impl Fn(&ReduceGroup, &mut Emitter<'_, O>) -> Result<()> + Send + Sync + 'a,
    ) -> Self {
        Self {
            name: name.into(),
            map: Box::new(map),
            reduce: Box::new(reduce),
            combine: None,
            secondary_sort: false,
            partition: None,
        }
    }

    pub fn with_combiner(
        mut self,
        combine: impl Fn(&[u8], Vec<Vec<u8>>) -> Result<Vec<Vec<u8>>> + Send + Sync + 'a,
    ) -> Self {
        self.combine = Some(Box::new(combine));
        self
    }

    pub fn with_secondary_sort(mut self) -> Self {
        self.secondary_sort = true;
        self
    }

    /// Overrides the default stable-hash partitioner. Must return a value
    /// in `[0, workers)`.
    pub fn with_partitioner(
        mut self,
        partition: impl Fn(&[u8], usize) -> usize + Send + Sync + 'a,
    ) -> Self {
        self.partition = Some(Box::new(partition));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn has_combiner(&self) -> bool {
        self.combine.is_some()
    }

    pub fn secondary_sort(&self) -> bool {
        self.secondary_sort
    }
}

/// A stage with no shuffle: each input record maps straight to outputs.
pub struct MapOnlySpec<'a, I, O> {
    pub(crate) name: String,
    pub(crate) map: MapOnlyFn<'a, I, O>,
}

impl<'a, I: Record, O: Record> MapOnlySpec<'a, I, O> {
    pub fn new(
        name: impl Into<String>,
        map: impl Fn(&I, &mut Emitter<'_, O>) -> Result<()> + Send + Sync + 'a,
    ) -> Self {
        Self {
            name: name.into(),
            map: Box::new(map),
        }
    }
}

pub struct MapContext {
    pub(crate) records: Vec<KvRecord>,
    pub(crate) counters: Counters,
    memory_budget: u64,
}

impl MapContext {
    pub(crate) fn new(memory_budget: u64) -> Self {
        Self {
            records: Vec::new(),
            counters: Counters::default(),
            memory_budget,
        }
    }

    pub fn emit(&mut self, key: Vec<u8>, value: Vec<u8>) {
        self.records.push(KvRecord::new(key, value));
    }

    pub fn emit_with_secondary(&mut self, key: Vec<u8>, secondary: Vec<u8>, value: Vec<u8>) {
        self.records.push(KvRecord::with_secondary(key, secondary, value));
    }

    pub fn count(&mut self, name: &str, delta: u64) {
        self.counters.add(name, delta);
    }

    pub fn observe_max(&mut self, name: &str, value: u64) {
        self.counters.observe_max(name, value);
    }

    pub fn memory_budget(&self) -> u64 {
        self.memory_budget
    }
}

/// Output sink handed to reducers and map-only functions.
pub struct Emitter<'w, O> {
    pub(crate) writer: &'w mut SegmentWriter<O>,
    pub(crate) counters: &'w mut Counters,
    memory_budget: u64,
}

impl<'w, O: Record> Emitter<'w, O> {
    pub(crate) fn new(
        writer: &'w mut SegmentWriter<O>,
        counters: &'w mut Counters,
        memory_budget: u64,
    ) -> Self {
        Self {
            writer,
            counters,
            memory_budget,
        }
    }

    pub fn emit(&mut self, item: O) -> Result<()> {
        self.writer.push(&item)
    }

    pub fn count(&mut self, name: &str, delta: u64) {
        self.counters.add(name, delta);
    }

    pub fn observe_max(&mut self, name: &str, value: u64) {
        self.counters.observe_max(name, value);
    }

    pub fn memory_budget(&self) -> u64 {
        self.memory_budget
    }
}
