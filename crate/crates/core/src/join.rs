//! Joining phase: attach Uni(M_i) to every element tuple of M_i.
//!
//! Three interchangeable algorithms produce the same JoinedTuple multiset:
//! Online-Aggregation (one stage, needs secondary keys), Lookup (a Uni table
//! side-loaded into a map-only stage) and Sharding (side-load only the Uni of
//! multisets with more than C elements, aggregate the rest on the fly).

use std::cmp::Ordering;
use std::io::{BufRead, Write};

use crate::codec::{get_bytes, get_u8, put_bytes, Record};
use crate::error::{Error, Result};
use crate::kernel::{
    stable_hash, Emitter, Engine, MapContext, MapOnlySpec, RecordSet, ReduceGroup, SideMap, StageMetrics,
    StageSpec,
};
use crate::measures::NsmMeasure;
use crate::model::{ElementId, JoinedTuple, MultisetId, RawTuple, UniVector};

const SEC_UNI: u8 = 0;
const SEC_ELEMENT: u8 = 1;

const TAG_UNSHARDED: u8 = 0;
const TAG_SHARDED: u8 = 1;

#[derive(Clone, Copy, Debug)]
pub struct ShardingConfig {
    /// Multisets with more than this many distinct elements are sharded.
    pub c_threshold: u64,
    pub fingerprint_fn: fn(&[u8]) -> u64,
}

impl ShardingConfig {
    pub fn new(c_threshold: u64) -> Result<Self> {
        if c_threshold == 0 {
            return Err(Error::InvalidConfig("sharding C must be at least 1".into()));
        }
        Ok(Self {
            c_threshold,
            fingerprint_fn: stable_hash,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub enum JoinAlgorithm {
    OnlineAggregation,
    Lookup,
    Sharding(ShardingConfig),
}

impl JoinAlgorithm {
    pub fn name(&self) -> &'static str {
        match self {
            JoinAlgorithm::OnlineAggregation => "online-agg",
            JoinAlgorithm::Lookup => "lookup",
            JoinAlgorithm::Sharding(_) => "sharding",
        }
    }
}

#[derive(Debug)]
pub struct JoinOutput {
    pub joined: RecordSet<JoinedTuple>,
    pub metrics: Vec<StageMetrics>,
    /// The side-loaded Uni table, sorted by id (Lookup and Sharding only).
    pub uni_table: Option<Vec<(MultisetId, UniVector)>>,
}

pub fn run_join(
    engine: &Engine,
    raw: &RecordSet<RawTuple>,
    measure: &NsmMeasure,
    algorithm: &JoinAlgorithm,
) -> Result<JoinOutput> {
    match algorithm {
        JoinAlgorithm::OnlineAggregation => online_aggregation_join(engine, raw, measure),
        JoinAlgorithm::Lookup => lookup_join(engine, raw, measure),
        JoinAlgorithm::Sharding(cfg) => sharding_join(engine, raw, measure, cfg),
    }
}

pub fn online_aggregation_join(
    engine: &Engine,
    raw: &RecordSet<RawTuple>,
    measure: &NsmMeasure,
) -> Result<JoinOutput> {
    if !engine.config().secondary_keys {
        return Err(Error::PreconditionRefused(
            "online-aggregation join needs secondary keys, which are disabled".into(),
        ));
    }
    let arity = measure.uni_arity();
    let spec = StageSpec::new(
        "online-aggregation",
        |t: &RawTuple, ctx: &mut MapContext| {
            let key = t.id.as_bytes().to_vec();
            ctx.emit_with_secondary(key.clone(), vec![SEC_UNI], measure.uni_partials(t.multiplicity).to_bytes());
            ctx.emit_with_secondary(key, vec![SEC_ELEMENT], (t.element.clone(), t.multiplicity).to_bytes());
            Ok(())
        },
        move |g: &ReduceGroup, out: &mut Emitter<'_, JoinedTuple>| {
            let id = MultisetId::new(g.key())?;
            let mut uni = UniVector::zeros(arity);
            for entry in g.entries() {
                let entry = entry?;
                match entry.secondary.as_deref() {
                    Some([SEC_UNI]) => uni.add_assign(&Vec::<f64>::from_bytes(&entry.value)?),
                    Some([SEC_ELEMENT]) => {
                        let (element, multiplicity) = <(ElementId, u64)>::from_bytes(&entry.value)?;
                        out.emit(JoinedTuple {
                            id: id.clone(),
                            uni: uni.clone(),
                            element,
                            multiplicity,
                        })?;
                    }
                    other => return Err(Error::Internal(format!("unexpected secondary key {other:?}"))),
                }
            }
            Ok(())
        },
    )
    .with_secondary_sort();
    let (joined, metrics) = engine.run_stage(&spec, raw)?;
    Ok(JoinOutput {
        joined,
        metrics: vec![metrics],
        uni_table: None,
    })
}

/// Sums `(count, partials)` values; used by every partial-sum combiner.
pub(crate) fn sum_counted_vectors(_: &[u8], values: Vec<Vec<u8>>) -> Result<Vec<Vec<u8>>> {
    let mut count = 0u64;
    let mut sums: Vec<f64> = Vec::new();
    for v in values {
        let (c, partials) = <(u64, Vec<f64>)>::from_bytes(&v)?;
        if count > 0 && partials.len() != sums.len() {
            return Err(Error::Internal("partial vectors of different arity".into()));
        }
        if count == 0 {
            sums = partials;
        } else {
            sums.iter_mut().zip(&partials).for_each(|(x, y)| *x += y);
        }
        count += c;
    }
    Ok(vec![(count, sums).to_bytes()])
}

fn uni_table_stage<'a>(
    name: &str,
    measure: &'a NsmMeasure,
    min_count: u64,
) -> StageSpec<'a, RawTuple, (MultisetId, UniVector)> {
    StageSpec::new(
        name,
        |t: &RawTuple, ctx: &mut MapContext| {
            ctx.emit(t.id.as_bytes().to_vec(), (1u64, measure.uni_partials(t.multiplicity)).to_bytes());
            Ok(())
        },
        move |g: &ReduceGroup, out: &mut Emitter<'_, (MultisetId, UniVector)>| {
            let mut count = 0u64;
            let mut uni = UniVector::zeros(measure.uni_arity());
            for v in g.decoded::<(u64, Vec<f64>)>() {
                let (c, partials) = v?;
                count += c;
                uni.add_assign(&partials);
            }
            if count > min_count {
                out.emit((MultisetId::new(g.key())?, uni))?;
            }
            Ok(())
        },
    )
    .with_combiner(sum_counted_vectors)
}

type UniTable = Vec<(MultisetId, UniVector)>;

fn load_uni_table(
    engine: &Engine,
    name: &str,
    table: &RecordSet<(MultisetId, UniVector)>,
) -> Result<(SideMap<MultisetId, UniVector>, UniTable)> {
    let side = engine.load_side_entries(name, table.iter())?;
    let mut sorted: UniTable = side.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    Ok((side, sorted))
}

pub fn lookup_join(engine: &Engine, raw: &RecordSet<RawTuple>, measure: &NsmMeasure) -> Result<JoinOutput> {
    let (table, m1) = engine.run_stage(&uni_table_stage("lookup-1", measure, 0), raw)?;
    let (side, sorted) = load_uni_table(engine, "lookup uni table", &table)?;
    drop(table);
    let spec = MapOnlySpec::new("lookup-2", |t: &RawTuple, out: &mut Emitter<'_, JoinedTuple>| {
        let uni = side
            .get(&t.id)
            .ok_or_else(|| Error::Internal(format!("multiset `{}` missing from the lookup table", t.id)))?;
        out.emit(JoinedTuple {
            id: t.id.clone(),
            uni: uni.clone(),
            element: t.element.clone(),
            multiplicity: t.multiplicity,
        })
    });
    let (joined, m2) = engine.run_map_only(&spec, raw)?;
    Ok(JoinOutput {
        joined,
        metrics: vec![m1, m2],
        uni_table: Some(sorted),
    })
}

fn sharding_key(id: &MultisetId, tag: u8, fingerprint: Option<u64>) -> Vec<u8> {
    let mut key = Vec::with_capacity(id.as_bytes().len() + 10);
    put_bytes(&mut key, id.as_bytes());
    key.push(tag);
    if let Some(fp) = fingerprint {
        key.extend_from_slice(&fp.to_be_bytes());
    }
    key
}

pub fn sharding_join(
    engine: &Engine,
    raw: &RecordSet<RawTuple>,
    measure: &NsmMeasure,
    cfg: &ShardingConfig,
) -> Result<JoinOutput> {
    if cfg.c_threshold == 0 {
        return Err(Error::InvalidConfig("sharding C must be at least 1".into()));
    }
    let (table, m1) = engine.run_stage(&uni_table_stage("sharding-1", measure, cfg.c_threshold), raw)?;
    let (side, sorted) = load_uni_table(engine, "sharding uni table", &table)?;
    drop(table);
    let fingerprint = cfg.fingerprint_fn;
    let budget = engine.memory_budget();
    let spec = StageSpec::new(
        "sharding-2",
        |t: &RawTuple, ctx: &mut MapContext| {
            match side.get(&t.id) {
                Some(uni) => {
                    let key = sharding_key(&t.id, TAG_SHARDED, Some(fingerprint(t.element.as_bytes())));
                    ctx.emit(key, (t.element.clone(), t.multiplicity, uni.clone()).to_bytes());
                    ctx.count("sharding.sharded_tuples", 1);
                }
                None => {
                    let key = sharding_key(&t.id, TAG_UNSHARDED, None);
                    ctx.emit(key, (t.element.clone(), t.multiplicity).to_bytes());
                }
            }
            Ok(())
        },
        move |g: &ReduceGroup, out: &mut Emitter<'_, JoinedTuple>| {
            let mut key = g.key();
            let id = MultisetId::new(get_bytes(&mut key)?)?;
            match get_u8(&mut key)? {
                TAG_SHARDED => {
                    for v in g.decoded::<(ElementId, u64, UniVector)>() {
                        let (element, multiplicity, uni) = v?;
                        out.emit(JoinedTuple {
                            id: id.clone(),
                            uni,
                            element,
                            multiplicity,
                        })?;
                    }
                }
                TAG_UNSHARDED => {
                    g.ensure_fits(budget, || format!("unsharded multiset `{id}` (lower C)"))?;
                    out.count("sharding.unsharded_groups", 1);
                    let mut uni = UniVector::zeros(measure.uni_arity());
                    for v in g.decoded::<(ElementId, u64)>() {
                        uni.add_assign(&measure.uni_partials(v?.1));
                    }
                    for v in g.decoded::<(ElementId, u64)>() {
                        let (element, multiplicity) = v?;
                        out.emit(JoinedTuple {
                            id: id.clone(),
                            uni: uni.clone(),
                            element,
                            multiplicity,
                        })?;
                    }
                }
                tag => return Err(Error::Internal(format!("unknown sharding tag {tag}"))),
            }
            Ok(())
        },
    );
    let (joined, m2) = engine.run_stage(&spec, raw)?;
    Ok(JoinOutput {
        joined,
        metrics: vec![m1, m2],
        uni_table: Some(sorted),
    })
}

fn cmp_joined(a: &JoinedTuple, b: &JoinedTuple) -> Ordering {
    (&a.id, &a.element, a.multiplicity)
        .cmp(&(&b.id, &b.element, b.multiplicity))
        .then_with(|| a.uni.values().partial_cmp(b.uni.values()).unwrap_or(Ordering::Equal))
}

/// Sorts joined tuples by (id, element, multiplicity, uni).
pub fn sort_joined(tuples: &mut [JoinedTuple]) {
    tuples.sort_by(cmp_joined);
}

/// Writes `id \t v1,v2,...` lines.
pub fn write_uni_table<W: Write>(mut out: W, table: &[(MultisetId, UniVector)]) -> Result<()> {
    for (id, uni) in table {
        let values: Vec<String> = uni.values().iter().map(|v| v.to_string()).collect();
        writeln!(out, "{id}\t{}", values.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_uni_table<R: BufRead>(reader: R) -> Result<Vec<(MultisetId, UniVector)>> {
    let mut table = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: i + 1, message };
        let (id, values) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected `id<TAB>v1,v2,...`".into()))?;
        let id = MultisetId::new(id).map_err(|_| parse_err("empty multiset id".into()))?;
        let values = values
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|e| parse_err(format!("bad value `{v}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        table.push((id, UniVector(values)));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelConfig;
    use crate::measures::MeasureKind;

    fn engine() -> Engine {
        Engine::new(KernelConfig::default()).unwrap()
    }

    fn toy(e: &Engine) -> RecordSet<RawTuple> {
        e.records(vec![RawTuple::new("m1", "a", 2), RawTuple::new("m1", "b", 1), RawTuple::new("m2", "c", 5)])
    }

    fn joined(out: JoinOutput) -> Vec<JoinedTuple> {
        let mut v = out.joined.to_vec().unwrap();
        sort_joined(&mut v);
        v
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
    fn online_aggregation_example() {
        let e = engine();
        let r = NsmMeasure::builtin(MeasureKind::Ruzicka);
        let got = joined(online_aggregation_join(&e, &toy(&e), &r).unwrap());
        assert_eq!(got, vec![jt("m1", 3.0, "a", 2), jt("m1", 3.0, "b", 1), jt("m2", 5.0, "c", 5)]);
        let empty = online_aggregation_join(&e, &e.records(Vec::new()), &r).unwrap();
        assert!(empty.joined.is_empty());
    }

    #[test]
    fn online_aggregation_refuses_without_secondary_keys() {
        let e = Engine::new(KernelConfig {
            secondary_keys: false,
            ..KernelConfig::default()
        })
        .unwrap();
        let r = NsmMeasure::builtin(MeasureKind::Ruzicka);
        assert!(matches!(
            online_aggregation_join(&e, &toy(&e), &r),
            Err(Error::PreconditionRefused(_))
        ));
        // The other two do not need them.
        assert!(lookup_join(&e, &toy(&e), &r).is_ok());
        assert!(sharding_join(&e, &toy(&e), &r, &ShardingConfig::new(1).unwrap()).is_ok());
    }

    #[test]
    fn algorithms_agree_on_toy() {
        let e = engine();
        let r = NsmMeasure::builtin(MeasureKind::CosineVector);
        let a = joined(online_aggregation_join(&e, &toy(&e), &r).unwrap());
        let b = joined(lookup_join(&e, &toy(&e), &r).unwrap());
        assert_eq!(a, b);
        for c in [1, 2, 5] {
            let s = joined(sharding_join(&e, &toy(&e), &r, &ShardingConfig::new(c).unwrap()).unwrap());
            assert_eq!(a, s, "C = {c}");
        }
    }

    #[test]
    fn sharding_table_holds_only_large_multisets() {
        let e = engine();
        let r = NsmMeasure::builtin(MeasureKind::Ruzicka);
        let out = sharding_join(&e, &toy(&e), &r, &ShardingConfig::new(1).unwrap()).unwrap();
        let ids: Vec<String> = out.uni_table.unwrap().iter().map(|(id, _)| id.to_string()).collect();
        assert_eq!(ids, vec!["m1"]);
        assert_eq!(out.metrics[1].counter("sharding.sharded_tuples"), 2);
        assert_eq!(out.metrics[1].counter("sharding.unsharded_groups"), 1);

        let out = sharding_join(&e, &toy(&e), &r, &ShardingConfig::new(5).unwrap()).unwrap();
        assert!(out.uni_table.unwrap().is_empty());
        assert_eq!(out.metrics[1].counter("sharding.unsharded_groups"), 2);
        assert!(ShardingConfig::new(0).is_err());
    }

    #[test]
    fn lookup_table_over_budget_fails() {
        let e = Engine::new(KernelConfig {
            memory_budget: 64,
            ..KernelConfig::default()
        })
        .unwrap();
        let raw: Vec<RawTuple> = (0..100).map(|i| RawTuple::new(format!("m{i}").as_str(), "a", 1)).collect();
        let err = lookup_join(&e, &e.records(raw), &NsmMeasure::builtin(MeasureKind::Jaccard)).unwrap_err();
        assert!(err.is_memory_budget_exceeded());
    }

    #[test]
    fn oversized_unsharded_group_fails() {
        let e = Engine::new(KernelConfig {
            memory_budget: 256,
            ..KernelConfig::default()
        })
        .unwrap();
        let raw: Vec<RawTuple> = (0..200).map(|i| RawTuple::new("big", format!("e{i}").as_str(), 1)).collect();
        let r = NsmMeasure::builtin(MeasureKind::Ruzicka);
        let err = sharding_join(&e, &e.records(raw.clone()), &r, &ShardingConfig::new(1000).unwrap()).unwrap_err();
        assert!(err.is_memory_budget_exceeded());
        let ok = sharding_join(&e, &e.records(raw), &r, &ShardingConfig::new(10).unwrap()).unwrap();
        assert_eq!(ok.joined.len(), 200);
    }

    #[test]
    fn uni_table_tsv_roundtrip() {
        let table = vec![(MultisetId::from("m1"), UniVector(vec![3.0, 0.5])), ("m2".into(), UniVector(vec![1.0, 2.0]))];
        let mut buf = Vec::new();
        write_uni_table(&mut buf, &table).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "m1\t3,0.5\nm2\t1,2\n");
        assert_eq!(read_uni_table(buf.as_slice()).unwrap(), table);
        assert!(read_uni_table("m1 3\n".as_bytes()).is_err());
    }
}
