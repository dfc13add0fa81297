//! Similarity phase: optional stop-word removal, Similarity₁ (the
//! Uni-augmented inverted index and candidate generation) and Similarity₂
//! (per-pair aggregation of conjunctive partials and the final measure).

use std::collections::BTreeSet;

use crate::codec::{get_u8, get_varint, put_varint, Record};
use crate::error::{Error, Result};
use crate::join::{run_join, sum_counted_vectors, JoinAlgorithm};
use crate::kernel::{Emitter, Engine, MapContext, MapOnlySpec, RecordSet, ReduceGroup, StageMetrics, StageSpec};
use crate::measures::{ConjVector, NsmMeasure};
use crate::model::{sort_pairs, ElementId, JoinedTuple, MultisetId, RawTuple, SimilarPair, UniVector};

/// Records that carry an element, so stop words can be dropped from them.
pub trait ElementTuple: Record + Clone {
    fn element(&self) -> &ElementId;
}

impl ElementTuple for RawTuple {
    fn element(&self) -> &ElementId {
        &self.element
    }
}

impl ElementTuple for JoinedTuple {
    fn element(&self) -> &ElementId {
        &self.element
    }
}

/// One posting of the inverted index built by Similarity₁.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexEntry {
    pub id: MultisetId,
    pub uni: UniVector,
    pub multiplicity: u64,
}

impl Record for IndexEntry {
    fn encode(&self, out: &mut Vec<u8>) {
        self.id.encode(out);
        self.uni.encode(out);
        put_varint(out, self.multiplicity);
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        Ok(Self {
            id: MultisetId::decode(input)?,
            uni: UniVector::decode(input)?,
            multiplicity: get_varint(input)?,
        })
    }
}

/// A candidate pair with both Uni vectors, `left < right`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairKey {
    pub left: MultisetId,
    pub right: MultisetId,
    pub uni_left: UniVector,
    pub uni_right: UniVector,
}

impl PairKey {
    /// Orders two postings canonically; fails on a self-pair.
    pub fn from_entries(a: &IndexEntry, b: &IndexEntry) -> Result<(PairKey, Contribution)> {
        let (l, r) = match a.id.cmp(&b.id) {
            std::cmp::Ordering::Less => (a, b),
            std::cmp::Ordering::Greater => (b, a),
            std::cmp::Ordering::Equal => return Err(Error::SelfPair(a.id.to_string())),
        };
        Ok((
            PairKey {
                left: l.id.clone(),
                right: r.id.clone(),
                uni_left: l.uni.clone(),
                uni_right: r.uni.clone(),
            },
            Contribution {
                f_left: l.multiplicity,
                f_right: r.multiplicity,
            },
        ))
    }
}

impl Record for PairKey {
    fn encode(&self, out: &mut Vec<u8>) {
        self.left.encode(out);
        self.right.encode(out);
        self.uni_left.encode(out);
        self.uni_right.encode(out);
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        Ok(Self {
            left: MultisetId::decode(input)?,
            right: MultisetId::decode(input)?,
            uni_left: UniVector::decode(input)?,
            uni_right: UniVector::decode(input)?,
        })
    }
}

/// Multiplicities of one shared element in the left and right multiset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Contribution {
    pub f_left: u64,
    pub f_right: u64,
}

/// Similarity₁ output: a plain contribution, or a pair of index chunks of a
/// hot element whose expansion is left to the Similarity₂ mappers.
#[derive(Clone, Debug, PartialEq)]
pub enum Sim1Record {
    Pair {
        key: PairKey,
        element: ElementId,
        contribution: Contribution,
    },
    ChunkPair {
        element: ElementId,
        left: Vec<IndexEntry>,
        /// Empty for a diagonal chunk pair, which pairs `left` with itself.
        right: Vec<IndexEntry>,
        diagonal: bool,
    },
}

fn put_entries(out: &mut Vec<u8>, entries: &[IndexEntry]) {
    put_varint(out, entries.len() as u64);
    for e in entries {
        e.encode(out);
    }
}

fn get_entries(input: &mut &[u8]) -> Result<Vec<IndexEntry>> {
    let n = get_varint(input)?;
    (0..n).map(|_| IndexEntry::decode(input)).collect()
}

impl Record for Sim1Record {
    fn encode(&self, out: &mut Vec<u8>) {
        match self {
            Sim1Record::Pair {
                key,
                element,
                contribution,
            } => {
                out.push(0);
                key.encode(out);
                element.encode(out);
                put_varint(out, contribution.f_left);
                put_varint(out, contribution.f_right);
            }
            Sim1Record::ChunkPair {
                element,
                left,
                right,
                diagonal,
            } => {
                out.push(1);
                element.encode(out);
                diagonal.encode(out);
                put_entries(out, left);
                put_entries(out, right);
            }
        }
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        match get_u8(input)? {
            0 => Ok(Sim1Record::Pair {
                key: PairKey::decode(input)?,
                element: ElementId::decode(input)?,
                contribution: Contribution {
                    f_left: get_varint(input)?,
                    f_right: get_varint(input)?,
                },
            }),
            1 => Ok(Sim1Record::ChunkPair {
                element: ElementId::decode(input)?,
                diagonal: bool::decode(input)?,
                left: get_entries(input)?,
                right: get_entries(input)?,
            }),
            tag => Err(Error::Decode(format!("unknown similarity record tag {tag}"))),
        }
    }
}

/// A scored candidate pair, kept for `--emit-candidates` dumps.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub key: PairKey,
    /// Number of shared elements that contributed.
    pub contributions: u64,
    pub similarity: f64,
}

impl Record for Candidate {
    fn encode(&self, out: &mut Vec<u8>) {
        self.key.encode(out);
        put_varint(out, self.contributions);
        self.similarity.encode(out);
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        Ok(Self {
            key: PairKey::decode(input)?,
            contributions: get_varint(input)?,
            similarity: f64::decode(input)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SimilarityConfig {
    pub threshold: f64,
    /// Per-chunk byte budget for hot elements; `None` disables chunking.
    pub chunk_budget: Option<u64>,
    pub emit_candidates: bool,
    /// Elements whose contribution counts are reported individually.
    pub traced_elements: Vec<ElementId>,
}

impl SimilarityConfig {
    pub fn new(threshold: f64) -> Result<Self> {
        validate_threshold(threshold)?;
        Ok(Self {
            threshold,
            chunk_budget: None,
            emit_candidates: false,
            traced_elements: Vec::new(),
        })
    }
}

pub fn validate_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("threshold must be in (0, 1], got {t}")))
    }
}

fn trace_counter(element: &ElementId) -> String {
    format!("contributions[{element}]")
}

pub fn drop_stop_words<T: ElementTuple>(
    engine: &Engine,
    input: &RecordSet<T>,
    q: u64,
) -> Result<(RecordSet<T>, StageMetrics)> {
    if q == 0 {
        return Err(Error::InvalidConfig("stop-word limit q must be at least 1".into()));
    }
    let spec = StageSpec::new(
        "stop-words",
        |t: &T, ctx: &mut MapContext| {
            ctx.emit(t.element().as_bytes().to_vec(), t.to_bytes());
            Ok(())
        },
        move |g: &ReduceGroup, out: &mut Emitter<'_, T>| {
            let mut kept = Vec::new();
            for v in g.decoded::<T>() {
                if kept.len() as u64 == q {
                    out.count("stopwords.dropped_elements", 1);
                    out.count("stopwords.dropped_tuples", g.len());
                    return Ok(());
                }
                kept.push(v?);
            }
            for t in kept {
                out.emit(t)?;
            }
            Ok(())
        },
    );
    engine.run_stage(&spec, input)
}

fn chunk_pair_contributions(left: usize, right: usize, diagonal: bool) -> u64 {
    if diagonal {
        (left * left.saturating_sub(1) / 2) as u64
    } else {
        (left * right) as u64
    }
}

/// Similarity₁: index by element, emit one contribution per unordered pair.
pub fn similarity1(
    engine: &Engine,
    joined: &RecordSet<JoinedTuple>,
    config: &SimilarityConfig,
) -> Result<(RecordSet<Sim1Record>, StageMetrics)> {
    let budget = engine.memory_budget();
    let chunk_budget = config.chunk_budget;
    let traced: BTreeSet<ElementId> = config.traced_elements.iter().cloned().collect();
    let spec = StageSpec::new(
        "similarity-1",
        |t: &JoinedTuple, ctx: &mut MapContext| {
            let entry = IndexEntry {
                id: t.id.clone(),
                uni: t.uni.clone(),
                multiplicity: t.multiplicity,
            };
            ctx.emit(t.element.as_bytes().to_vec(), entry.to_bytes());
            Ok(())
        },
        move |g: &ReduceGroup, out: &mut Emitter<'_, Sim1Record>| {
            let element = ElementId::new(g.key())?;
            let hot = chunk_budget.is_some_and(|cb| g.byte_len() > cb);
            if !hot {
                return plain_group(g, element, budget, &traced, out);
            }
            chunked_group(g, element, chunk_budget.expect("hot implies chunking"), out)
        },
    );
    engine.run_stage(&spec, joined)
}

fn plain_group(
    g: &ReduceGroup,
    element: ElementId,
    budget: u64,
    traced: &BTreeSet<ElementId>,
    out: &mut Emitter<'_, Sim1Record>,
) -> Result<()> {
    g.ensure_fits(budget, || format!("posting list of element `{element}` (enable chunking)"))?;
    out.observe_max("sim1.max_resident_group_bytes", g.byte_len());
    let mut entries = g.decoded::<IndexEntry>().collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    let mut emitted = 0u64;
    for i in 0..entries.len() {
        for j in i + 1..entries.len() {
            let (key, contribution) = PairKey::from_entries(&entries[i], &entries[j])?;
            out.emit(Sim1Record::Pair {
                key,
                element: element.clone(),
                contribution,
            })?;
            emitted += 1;
        }
    }
    out.count("contributions.plain", emitted);
    if traced.contains(&element) {
        out.count(&trace_counter(&element), emitted);
    }
    Ok(())
}

/// Splits a hot posting list into chunks of at most `chunk_budget` bytes and
/// emits the upper triangle of chunk pairs, diagonal included. The reducer
/// holds at most two chunks at a time.
fn chunked_group(
    g: &ReduceGroup,
    element: ElementId,
    chunk_budget: u64,
    out: &mut Emitter<'_, Sim1Record>,
) -> Result<()> {
    let mut starts = vec![0usize];
    let mut current = 0u64;
    let mut chunk_bytes = Vec::new();
    for (idx, entry) in g.entries().enumerate() {
        let size = entry?.value.len() as u64;
        if size > chunk_budget {
            return Err(Error::InvalidConfig(format!(
                "chunk budget of {chunk_budget} bytes is smaller than one posting ({size} bytes) of element `{element}`"
            )));
        }
        if current + size > chunk_budget {
            starts.push(idx);
            chunk_bytes.push(current);
            current = 0;
        }
        current += size;
    }
    chunk_bytes.push(current);
    let chunks = starts.len();
    let len = g.len() as usize;
    let range = |p: usize| starts[p]..starts.get(p + 1).copied().unwrap_or(len);
    let load = |p: usize| -> Result<Vec<IndexEntry>> {
        let r = range(p);
        g.decoded::<IndexEntry>()
            .skip(r.start)
            .take(r.len())
            .collect()
    };

    out.count("sim1.chunked_groups", 1);
    out.observe_max("sim1.max_chunks", chunks as u64);
    out.observe_max("sim1.max_chunk_bytes", chunk_bytes.iter().copied().max().unwrap_or(0));
    let mut deferred = 0u64;
    for p in 0..chunks {
        let left = load(p)?;
        for q in p..chunks {
            let diagonal = p == q;
            let right = if diagonal { Vec::new() } else { load(q)? };
            let resident = chunk_bytes[p] + if diagonal { 0 } else { chunk_bytes[q] };
            out.observe_max("sim1.max_resident_chunk_bytes", resident);
            deferred += chunk_pair_contributions(left.len(), right.len(), diagonal);
            out.emit(Sim1Record::ChunkPair {
                element: element.clone(),
                left: left.clone(),
                right,
                diagonal,
            })?;
        }
    }
    out.count("contributions.deferred", deferred);
    Ok(())
}

/// Similarity₂: expand chunk pairs, aggregate conj partials per pair and
/// apply the measure. Returns every candidate when `keep_all` is set and
/// only those reaching the threshold otherwise.
pub fn similarity2(
    engine: &Engine,
    sim1: &RecordSet<Sim1Record>,
    measure: &NsmMeasure,
    config: &SimilarityConfig,
    keep_all: bool,
) -> Result<(RecordSet<Candidate>, StageMetrics)> {
    validate_threshold(config.threshold)?;
    let t = config.threshold;
    let traced: BTreeSet<ElementId> = config.traced_elements.iter().cloned().collect();
    let emit_pair = |key: PairKey, c: Contribution, ctx: &mut MapContext| {
        ctx.emit(key.to_bytes(), (1u64, measure.conj_partials(c.f_left, c.f_right)).to_bytes());
    };
    let spec = StageSpec::new(
        "similarity-2",
        |r: &Sim1Record, ctx: &mut MapContext| {
            match r {
                Sim1Record::Pair { key, contribution, .. } => emit_pair(key.clone(), *contribution, ctx),
                Sim1Record::ChunkPair {
                    element,
                    left,
                    right,
                    diagonal,
                } => {
                    let mut expanded = 0u64;
                    if *diagonal {
                        for i in 0..left.len() {
                            for j in i + 1..left.len() {
                                let (key, c) = PairKey::from_entries(&left[i], &left[j])?;
                                emit_pair(key, c, ctx);
                                expanded += 1;
                            }
                        }
                    } else {
                        for a in left {
                            for b in right {
                                let (key, c) = PairKey::from_entries(a, b)?;
                                emit_pair(key, c, ctx);
                                expanded += 1;
                            }
                        }
                    }
                    ctx.count("contributions.expanded", expanded);
                    if traced.contains(element) {
                        ctx.count(&trace_counter(element), expanded);
                    }
                }
            }
            Ok(())
        },
        move |g: &ReduceGroup, out: &mut Emitter<'_, Candidate>| {
            let key = PairKey::from_bytes(g.key())?;
            let mut count = 0u64;
            let mut conj = vec![0.0; measure.conj_arity()];
            for v in g.decoded::<(u64, Vec<f64>)>() {
                let (c, partials) = v?;
                count += c;
                conj.iter_mut().zip(&partials).for_each(|(x, y)| *x += y);
            }
            let similarity = measure
                .similarity(&key.uni_left, &key.uni_right, &ConjVector(conj))
                .map_err(|e| match e {
                    Error::UndefinedSimilarity(msg) => {
                        Error::UndefinedSimilarity(format!("pair ({}, {}): {msg}", key.left, key.right))
                    }
                    other => other,
                })?;
            out.count("sim2.candidates", 1);
            if keep_all || similarity >= t {
                out.emit(Candidate {
                    key,
                    contributions: count,
                    similarity,
                })?;
            }
            Ok(())
        },
    )
    .with_combiner(sum_counted_vectors);
    engine.run_stage(&spec, sim1)
}

fn passing_pairs(
    engine: &Engine,
    candidates: &RecordSet<Candidate>,
    t: f64,
) -> Result<(RecordSet<SimilarPair>, StageMetrics)> {
    let spec = MapOnlySpec::new("similarity-output", move |c: &Candidate, out: &mut Emitter<'_, SimilarPair>| {
        if c.similarity >= t {
            out.emit(SimilarPair {
                left: c.key.left.clone(),
                right: c.key.right.clone(),
                similarity: c.similarity,
            })?;
        }
        Ok(())
    });
    engine.run_map_only(&spec, candidates)
}

#[derive(Debug)]
pub struct SimilarityOutput {
    pub pairs: RecordSet<SimilarPair>,
    pub candidates: Option<RecordSet<Candidate>>,
    pub metrics: Vec<StageMetrics>,
}

impl SimilarityOutput {
    /// Output pairs sorted by `(left, right)`.
    pub fn sorted_pairs(&self) -> Result<Vec<SimilarPair>> {
        let mut pairs = self.pairs.to_vec()?;
        sort_pairs(&mut pairs);
        Ok(pairs)
    }

    pub fn stage(&self, name: &str) -> Option<&StageMetrics> {
        self.metrics.iter().find(|m| m.stage == name)
    }

    /// Contributions produced for a traced element across both steps.
    pub fn contributions_for(&self, element: &ElementId) -> u64 {
        let name = trace_counter(element);
        self.metrics.iter().map(|m| m.counter(&name)).sum()
    }
}

/// Stop words (if `q` is set) → Similarity₁ → Similarity₂. Stop words are
/// dropped from the joined tuples, so Uni still covers the whole multiset.
pub fn run_similarity_phase(
    engine: &Engine,
    joined: &RecordSet<JoinedTuple>,
    measure: &NsmMeasure,
    q: Option<u64>,
    config: &SimilarityConfig,
) -> Result<SimilarityOutput> {
    validate_threshold(config.threshold)?;
    let mut metrics = Vec::new();
    let filtered;
    let joined = match q {
        Some(q) => {
            let (out, m) = drop_stop_words(engine, joined, q)?;
            metrics.push(m);
            filtered = out;
            &filtered
        }
        None => joined,
    };
    let (sim1, m1) = similarity1(engine, joined, config)?;
    metrics.push(m1);
    let (candidates, m2) = similarity2(engine, &sim1, measure, config, config.emit_candidates)?;
    drop(sim1);
    metrics.push(m2);
    let (pairs, m3) = passing_pairs(engine, &candidates, config.threshold)?;
    metrics.push(m3);
    Ok(SimilarityOutput {
        pairs,
        candidates: config.emit_candidates.then_some(candidates),
        metrics,
    })
}

#[derive(Debug)]
pub struct VsmartOutput {
    pub similarity: SimilarityOutput,
    /// Every stage in execution order: stop words, joining, similarity.
    pub metrics: Vec<StageMetrics>,
    pub uni_table: Option<Vec<(crate::model::MultisetId, UniVector)>>,
}

/// The whole V-SMART-Join pipeline. Stop words are removed from the raw
/// tuples before joining, so the result equals an exact join over the
/// filtered dataset.
pub fn run_vsmart(
    engine: &Engine,
    raw: &RecordSet<RawTuple>,
    measure: &NsmMeasure,
    algorithm: &JoinAlgorithm,
    stopword_q: Option<u64>,
    config: &SimilarityConfig,
) -> Result<VsmartOutput> {
    validate_threshold(config.threshold)?;
    let mut metrics = Vec::new();
    let filtered;
    let raw = match stopword_q {
        Some(q) => {
            let (out, m) = drop_stop_words(engine, raw, q)?;
            metrics.push(m);
            filtered = out;
            &filtered
        }
        None => raw,
    };
    let join = run_join(engine, raw, measure, algorithm)?;
    metrics.extend(join.metrics.iter().cloned());
    let similarity = run_similarity_phase(engine, &join.joined, measure, None, config)?;
    metrics.extend(similarity.metrics.iter().cloned());
    Ok(VsmartOutput {
        similarity,
        metrics,
        uni_table: join.uni_table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelConfig;
    use crate::measures::MeasureKind;

    fn engine() -> Engine {
        Engine::new(KernelConfig::default()).unwrap()
    }

    fn entry(id: &str, uni: f64, f: u64) -> IndexEntry {
        IndexEntry {
            id: id.into(),
            uni: UniVector(vec![uni]),
            multiplicity: f,
        }
    }

    fn jt(id: &str, uni: f64, element: &str, f: u64) -> JoinedTuple {
        JoinedTuple {
            id: id.into(),
            uni: UniVector(vec![uni]),
            element: element.into(),
            multiplicity: f,
        }
    }

    #[test]
    fn sim1_records_roundtrip() {
        let (key, contribution) = PairKey::from_entries(&entry("m2", 4.0, 1), &entry("m1", 3.0, 2)).unwrap();
        assert_eq!(key.left.to_string(), "m1");
        assert_eq!(contribution, Contribution { f_left: 2, f_right: 1 });
        let recs = vec![
            Sim1Record::Pair {
                key,
                element: "a".into(),
                contribution,
            },
            Sim1Record::ChunkPair {
                element: "a".into(),
                left: vec![entry("x", 1.0, 1)],
                right: vec![],
                diagonal: true,
            },
        ];
        for r in recs {
            assert_eq!(Sim1Record::from_bytes(&r.to_bytes()).unwrap(), r);
        }
        assert!(PairKey::from_entries(&entry("m", 1.0, 1), &entry("m", 1.0, 1)).is_err());
    }

    #[test]
    fn similarity1_examples() {
        let e = engine();
        let cfg = SimilarityConfig::new(0.5).unwrap();
        let joined = e.records(vec![jt("m1", 3.0, "a", 2), jt("m2", 4.0, "a", 1), jt("m3", 1.0, "b", 1)]);
        let (out, _) = similarity1(&e, &joined, &cfg).unwrap();
        let got = out.to_vec().unwrap();
        assert_eq!(
            got,
            vec![Sim1Record::Pair {
                key: PairKey {
                    left: "m1".into(),
                    right: "m2".into(),
                    uni_left: UniVector(vec![3.0]),
                    uni_right: UniVector(vec![4.0]),
                },
                element: "a".into(),
                contribution: Contribution { f_left: 2, f_right: 1 },
            }]
        );
        let four = e.records((1..=4).map(|i| jt(&format!("m{i}"), 1.0, "x", 1)).collect());
        let (out, m) = similarity1(&e, &four, &cfg).unwrap();
        assert_eq!(out.len(), 6);
        assert_eq!(m.counter("contributions.plain"), 6);
    }

    #[test]
    fn similarity2_example() {
        let e = engine();
        let key = PairKey {
            left: "m1".into(),
            right: "m2".into(),
            uni_left: UniVector(vec![3.0]),
            uni_right: UniVector(vec![4.0]),
        };
        let recs = [(2, 1), (1, 3)]
            .into_iter()
            .zip(["a", "b"])
            .map(|((l, r), el)| Sim1Record::Pair {
                key: key.clone(),
                element: el.into(),
                contribution: Contribution { f_left: l, f_right: r },
            })
            .collect();
        let r = NsmMeasure::builtin(MeasureKind::Ruzicka);
        let input = e.records(recs);
        for (t, expected) in [(0.4, 1), (0.41, 0)] {
            let cfg = SimilarityConfig::new(t).unwrap();
            let (out, _) = similarity2(&e, &input, &r, &cfg, false).unwrap();
            let got = out.to_vec().unwrap();
            assert_eq!(got.len(), expected, "t = {t}");
            if let Some(c) = got.first() {
                assert!((c.similarity - 0.4).abs() < 1e-12);
                assert_eq!(c.contributions, 2);
            }
        }
    }

    #[test]
    fn stop_words_drop_frequent_elements() {
        let e = engine();
        let raw: Vec<RawTuple> = ["m1", "m2", "m3"].iter().map(|m| RawTuple::new(*m, "x", 1)).collect();
        let (out, m) = drop_stop_words(&e, &e.records(raw.clone()), 2).unwrap();
        assert!(out.is_empty());
        assert_eq!(m.counter("stopwords.dropped_elements"), 1);
        let (out, _) = drop_stop_words(&e, &e.records(raw), 3).unwrap();
        assert_eq!(out.len(), 3);
        assert!(drop_stop_words(&e, &e.records(Vec::<RawTuple>::new()), 0).is_err());
    }

    #[test]
    fn chunking_matches_plain_path() {
        let e = engine();
        let r = NsmMeasure::builtin(MeasureKind::Ruzicka);
        let raw: Vec<RawTuple> = (0..6)
            .flat_map(|i| {
                let id = format!("m{i}");
                vec![RawTuple::new(id.as_str(), "hot", 1 + i % 3), RawTuple::new(id.as_str(), format!("e{}", i % 2).as_str(), 2)]
            })
            .collect();
        let raw = e.records(raw);
        let plain = SimilarityConfig::new(0.1).unwrap();
        let want = run_vsmart(&e, &raw, &r, &JoinAlgorithm::OnlineAggregation, None, &plain).unwrap();
        let want_pairs = want.similarity.sorted_pairs().unwrap();
        assert_eq!(want_pairs.len(), 15);
        let entry_bytes = entry("m0", 0.0, 1).to_bytes().len() as u64;
        for chunks in [2u64, 3] {
            let mut cfg = SimilarityConfig::new(0.1).unwrap();
            cfg.chunk_budget = Some(6u64.div_ceil(chunks) * entry_bytes);
            cfg.traced_elements = vec!["hot".into()];
            let got = run_vsmart(&e, &raw, &r, &JoinAlgorithm::OnlineAggregation, None, &cfg).unwrap();
            assert_eq!(got.similarity.sorted_pairs().unwrap(), want_pairs);
            assert_eq!(got.similarity.contributions_for(&"hot".into()), 15);
            let s1 = got.similarity.stage("similarity-1").unwrap();
            assert_eq!(s1.maximum("sim1.max_chunks"), chunks);
            assert!(s1.maximum("sim1.max_chunk_bytes") <= cfg.chunk_budget.unwrap());
        }
    }

    #[test]
    fn hot_group_without_chunking_names_the_element() {
        let e = Engine::new(KernelConfig {
            memory_budget: 200,
            ..KernelConfig::default()
        })
        .unwrap();
        let joined = e.records((0..50).map(|i| jt(&format!("m{i:03}"), 1.0, "hot", 1)).collect());
        let err = similarity1(&e, &joined, &SimilarityConfig::new(0.5).unwrap()).unwrap_err();
        assert!(err.is_memory_budget_exceeded());
        assert!(err.to_string().contains("hot"));
    }

    #[test]
    fn thresholds_are_validated() {
        for t in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(SimilarityConfig::new(t).is_err());
        }
        assert!(SimilarityConfig::new(1.0).is_ok());
    }
}
