//! The VCL prefix-filtering baseline.
//!
//! Multisets are treated as expanded sets, where element `a` with
//! multiplicity `f` becomes `(a, 1) … (a, f)`, so Ruzicka on multisets is
//! Jaccard on sets and the usual Jaccard prefix bound applies. Elements are
//! ordered by ascending frequency; each multiset is replicated whole under
//! every element of its prefix, reducers verify every pair in a group, and a
//! final stage removes the duplicates created by pairs sharing several
//! prefix elements.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::codec::{get_varint, put_varint, Record};
use crate::error::{Error, Result};
use crate::kernel::{
    stable_hash, Emitter, Engine, MapContext, MapOnlySpec, RecordSet, ReduceGroup, SideSize, SideTable, StageMetrics,
    StageSpec,
};
use crate::measures::{MeasureKind, NsmMeasure};
use crate::model::{ElementId, Multiset, MultisetId, RawTuple, SimilarPair};
use crate::similarity::validate_threshold;

/// A total order over the alphabet: rank 0 is the rarest element.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FrequencyOrder {
    pub ranks: HashMap<ElementId, u64>,
    pub frequencies: HashMap<ElementId, u64>,
}

impl FrequencyOrder {
    /// Ranks by `(frequency, element)`, or by `(hash, element)` when
    /// `hash_order` is set.
    pub fn from_frequencies(frequencies: HashMap<ElementId, u64>, hash_order: bool) -> Self {
        let mut elements: Vec<(&ElementId, u64)> = frequencies.iter().map(|(e, f)| (e, *f)).collect();
        if hash_order {
            elements.sort_by_key(|(e, _)| (stable_hash(e.as_bytes()), *e));
        } else {
            elements.sort_by_key(|(e, f)| (*f, *e));
        }
        let ranks = elements
            .iter()
            .enumerate()
            .map(|(i, (e, _))| ((*e).clone(), i as u64))
            .collect();
        Self { ranks, frequencies }
    }

    pub fn rank(&self, element: &ElementId) -> Option<u64> {
        self.ranks.get(element).copied()
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }
}

impl SideSize for FrequencyOrder {
    fn side_bytes(&self) -> u64 {
        self.ranks.keys().map(|e| 2 * (e.side_bytes() + 8)).sum()
    }
}

pub fn build_frequency_order(
    engine: &Engine,
    raw: &RecordSet<RawTuple>,
    hash_order: bool,
) -> Result<(FrequencyOrder, StageMetrics)> {
    let spec = StageSpec::new(
        "vcl-order",
        |t: &RawTuple, ctx: &mut MapContext| {
            ctx.emit(t.element.as_bytes().to_vec(), 1u64.to_bytes());
            Ok(())
        },
        |g: &ReduceGroup, out: &mut Emitter<'_, (ElementId, u64)>| {
            let mut n = 0;
            for v in g.decoded::<u64>() {
                n += v?;
            }
            out.emit((ElementId::new(g.key())?, n))
        },
    )
    .with_combiner(|_, values| {
        let mut n = 0u64;
        for v in values {
            n += u64::from_bytes(&v)?;
        }
        Ok(vec![n.to_bytes()])
    });
    let (counts, metrics) = engine.run_stage(&spec, raw)?;
    let frequencies = counts.iter().collect::<Result<HashMap<_, _>>>()?;
    Ok((FrequencyOrder::from_frequencies(frequencies, hash_order), metrics))
}

/// Prefix length `p = n − ⌈t·n⌉ + 1`, clamped to `[1, n]`. The ceiling is
/// taken with a small tolerance so rounding can only lengthen the prefix.
pub fn prefix_length(n: u64, t: f64) -> u64 {
    if n == 0 {
        return 0;
    }
    let need = (t * n as f64 - 1e-9 * n as f64).ceil().max(0.0) as u64;
    (n + 1).saturating_sub(need).clamp(1, n)
}

/// The first `prefix_length` expanded elements in `(rank, ordinal)` order.
pub fn prefix_of(m: &Multiset, order: &FrequencyOrder, t: f64) -> Result<Vec<(ElementId, u64)>> {
    let mut expanded: Vec<(u64, u64, &ElementId)> = Vec::with_capacity(m.cardinality() as usize);
    for (e, f) in m.iter() {
        let rank = order
            .rank(e)
            .ok_or_else(|| Error::Internal(format!("element `{e}` missing from the frequency order")))?;
        expanded.extend((1..=f).map(|j| (rank, j, e)));
    }
    expanded.sort_unstable();
    let p = prefix_length(m.cardinality(), t) as usize;
    Ok(expanded[..p].iter().map(|(_, j, e)| ((*e).clone(), *j)).collect())
}

#[derive(Clone, Debug, Default)]
pub struct VclConfig {
    pub hash_order: bool,
    /// Emit every verified pair so redundancy can be measured.
    pub instrumented: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VclReport {
    /// Pair similarity computations in the kernel reducers, duplicates included.
    pub pre_dedup_computations: u64,
    /// Distinct pairs compared (instrumented runs only).
    pub compared_pairs: Option<u64>,
    /// Redundancy → number of pairs (instrumented runs only).
    pub redundancy_histogram: BTreeMap<u64, u64>,
    /// Bytes of whole multisets replicated by the kernel mappers.
    pub replication_bytes: u64,
    pub kernel_bytes_shuffled: u64,
    pub post_dedup_pairs: u64,
}

#[derive(Debug)]
pub struct VclOutput {
    pub pairs: RecordSet<SimilarPair>,
    /// Every compared pair with its computation count (instrumented runs only).
    pub redundancy: Option<RecordSet<(SimilarPair, u64)>>,
    pub report: VclReport,
    pub metrics: Vec<StageMetrics>,
}

impl VclOutput {
    pub fn sorted_pairs(&self) -> Result<Vec<SimilarPair>> {
        let mut pairs = self.pairs.to_vec()?;
        crate::model::sort_pairs(&mut pairs);
        Ok(pairs)
    }
}

pub fn vcl_redundancy_report(output: &VclOutput) -> &VclReport {
    &output.report
}

fn expanded_key(element: &ElementId, ordinal: u64) -> Vec<u8> {
    let mut key = element.to_bytes();
    put_varint(&mut key, ordinal);
    key
}

fn pair_key(left: &MultisetId, right: &MultisetId) -> Vec<u8> {
    let mut key = left.to_bytes();
    right.encode(&mut key);
    key
}

fn decode_pair_key(mut key: &[u8]) -> Result<(MultisetId, MultisetId)> {
    let left = MultisetId::decode(&mut key)?;
    let right = MultisetId::decode(&mut key)?;
    Ok((left, right))
}

pub fn vcl_join(
    engine: &Engine,
    raw: &RecordSet<RawTuple>,
    measure: &NsmMeasure,
    t: f64,
    config: &VclConfig,
) -> Result<VclOutput> {
    validate_threshold(t)?;
    let as_set = match measure.kind() {
        Some(MeasureKind::Ruzicka) => false,
        Some(MeasureKind::Jaccard) => true,
        _ => {
            return Err(Error::InvalidMeasure(format!(
                "VCL supports ruzicka and jaccard, not {}",
                measure.name()
            )))
        }
    };
    let budget = engine.memory_budget();
    let mut metrics = Vec::new();

    let (order, m) = build_frequency_order(engine, raw, config.hash_order)?;
    metrics.push(m);

    let assemble = StageSpec::new(
        "vcl-assemble",
        |t: &RawTuple, ctx: &mut MapContext| {
            ctx.emit(t.id.as_bytes().to_vec(), (t.element.clone(), t.multiplicity).to_bytes());
            Ok(())
        },
        move |g: &ReduceGroup, out: &mut Emitter<'_, Multiset>| {
            let id = MultisetId::new(g.key())?;
            g.ensure_fits(budget, || format!("multiset `{id}`"))?;
            let mut m = Multiset::new(id);
            for v in g.decoded::<(ElementId, u64)>() {
                let (e, f) = v?;
                m.add(e, if as_set { 1 } else { f })?;
            }
            out.emit(m)
        },
    );
    let (multisets, m) = engine.run_stage(&assemble, raw)?;
    metrics.push(m);
    let order: SideTable<FrequencyOrder> = engine.load_side_data("frequency order", order)?;

    let instrumented = config.instrumented;
    let kernel = StageSpec::new(
        "vcl-kernel",
        |m: &Multiset, ctx: &mut MapContext| {
            let value = m.to_bytes();
            let prefix = prefix_of(m, &order, t)?;
            ctx.count("vcl.prefix_elements", prefix.len() as u64);
            ctx.count("vcl.replication_bytes", (prefix.len() * value.len()) as u64);
            for (e, j) in &prefix {
                ctx.emit(expanded_key(e, *j), value.clone());
            }
            Ok(())
        },
        move |g: &ReduceGroup, out: &mut Emitter<'_, SimilarPair>| {
            g.ensure_fits(budget, || format!("VCL group of {} multisets", g.len()))?;
            let mut group = g.decoded::<Multiset>().collect::<Result<Vec<_>>>()?;
            group.sort_by(|a, b| a.id.cmp(&b.id));
            let mut computed = 0u64;
            for i in 0..group.len() {
                for j in i + 1..group.len() {
                    let s = measure.full_similarity(&group[i], &group[j])?;
                    computed += 1;
                    if instrumented || s >= t {
                        out.emit(SimilarPair {
                            left: group[i].id.clone(),
                            right: group[j].id.clone(),
                            similarity: s,
                        })?;
                    }
                }
            }
            out.count("vcl.pair_computations", computed);
            Ok(())
        },
    );
    let (verified, kernel_metrics) = engine.run_stage(&kernel, &multisets)?;
    drop(multisets);

    let dedup = StageSpec::new(
        "vcl-dedup",
        |p: &SimilarPair, ctx: &mut MapContext| {
            ctx.emit(pair_key(&p.left, &p.right), p.similarity.to_bytes());
            Ok(())
        },
        |g: &ReduceGroup, out: &mut Emitter<'_, (SimilarPair, u64)>| {
            let (left, right) = decode_pair_key(g.key())?;
            let mut values = g.decoded::<f64>();
            let similarity = values
                .next()
                .ok_or_else(|| Error::Internal("empty dedup group".into()))??;
            out.emit((
                SimilarPair {
                    left,
                    right,
                    similarity,
                },
                g.len(),
            ))
        },
    );
    let (deduped, dedup_metrics) = engine.run_stage(&dedup, &verified)?;
    drop(verified);

    let filter = MapOnlySpec::new("vcl-output", |r: &(SimilarPair, u64), out: &mut Emitter<'_, SimilarPair>| {
        if r.0.similarity >= t {
            out.emit(r.0.clone())?;
        }
        Ok(())
    });
    let (pairs, filter_metrics) = engine.run_map_only(&filter, &deduped)?;

    let mut report = VclReport {
        pre_dedup_computations: kernel_metrics.counter("vcl.pair_computations"),
        replication_bytes: kernel_metrics.counter("vcl.replication_bytes"),
        kernel_bytes_shuffled: kernel_metrics.bytes_shuffled,
        post_dedup_pairs: pairs.len(),
        ..VclReport::default()
    };
    let redundancy = if instrumented {
        for r in deduped.iter() {
            *report.redundancy_histogram.entry(r?.1).or_insert(0) += 1;
        }
        report.compared_pairs = Some(deduped.len());
        Some(deduped)
    } else {
        None
    };
    metrics.extend([kernel_metrics, dedup_metrics, filter_metrics]);
    Ok(VclOutput {
        pairs,
        redundancy,
        report,
        metrics,
    })
}

/// Decodes an expanded-element kernel key.
pub fn decode_expanded_key(mut key: &[u8]) -> Result<(ElementId, u64)> {
    let e = ElementId::decode(&mut key)?;
    let j = get_varint(&mut key)?;
    Ok((e, j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelConfig;
    use crate::model::Dataset;

    fn engine() -> Engine {
        Engine::new(KernelConfig::default()).unwrap()
    }

    fn toy_raw() -> Vec<RawTuple> {
        vec![
            RawTuple::new("m1", "a", 2),
            RawTuple::new("m1", "b", 1),
            RawTuple::new("m2", "a", 1),
            RawTuple::new("m2", "b", 3),
            RawTuple::new("m3", "c", 1),
        ]
    }

    #[test]
    fn frequency_order_example() {
        let e = engine();
        let raw = vec![RawTuple::new("m1", "a", 1), RawTuple::new("m2", "a", 4), RawTuple::new("m1", "b", 1)];
        let (order, _) = build_frequency_order(&e, &e.records(raw), false).unwrap();
        assert_eq!(order.frequencies[&"a".into()], 2);
        assert_eq!(order.rank(&"b".into()), Some(0));
        assert_eq!(order.rank(&"a".into()), Some(1));
    }

    #[test]
    fn prefix_length_examples() {
        assert_eq!(prefix_length(5, 0.6), 3);
        for n in 1..50 {
            assert_eq!(prefix_length(n, 1.0), 1);
        }
        assert_eq!(prefix_length(1, 0.3), 1);
        assert_eq!(prefix_length(10, 0.7), 4);
        assert_eq!(prefix_length(0, 0.5), 0);
    }

    #[test]
    fn vcl_matches_oracle_on_toy() {
        let e = engine();
        let r = NsmMeasure::builtin(MeasureKind::Ruzicka);
        let out = vcl_join(&e, &e.records(toy_raw()), &r, 0.3, &VclConfig::default()).unwrap();
        let want = crate::oracle::oracle_join(&Dataset::from_tuples(toy_raw()).unwrap(), &r, 0.3, false).unwrap();
        assert_eq!(out.sorted_pairs().unwrap(), want);
        assert_eq!(out.report.post_dedup_pairs, 1);
    }

    #[test]
    fn vcl_rejects_other_measures() {
        let e = engine();
        let err = vcl_join(&e, &e.records(toy_raw()), &NsmMeasure::builtin(MeasureKind::Dice), 0.5, &VclConfig::default());
        assert!(matches!(err, Err(Error::InvalidMeasure(_))));
    }

    #[test]
    fn disjoint_multisets_need_no_computation() {
        let e = engine();
        let raw = vec![RawTuple::new("m1", "a", 1), RawTuple::new("m2", "b", 1)];
        let cfg = VclConfig {
            instrumented: true,
            ..VclConfig::default()
        };
        let out = vcl_join(&e, &e.records(raw), &NsmMeasure::builtin(MeasureKind::Jaccard), 0.1, &cfg).unwrap();
        assert_eq!(out.report.pre_dedup_computations, 0);
        assert_eq!(out.report.compared_pairs, Some(0));
    }

    #[test]
    fn oversized_multiset_is_named() {
        let e = Engine::new(KernelConfig {
            memory_budget: 512,
            ..KernelConfig::default()
        })
        .unwrap();
        let raw: Vec<RawTuple> = (0..200).map(|i| RawTuple::new("whale", format!("e{i}").as_str(), 1)).collect();
        let err = vcl_join(&e, &e.records(raw), &NsmMeasure::builtin(MeasureKind::Ruzicka), 0.5, &VclConfig::default())
            .unwrap_err();
        assert!(err.is_memory_budget_exceeded());
        assert!(err.to_string().contains("whale"));
    }

    #[test]
    fn expanded_keys_roundtrip() {
        let key = expanded_key(&"abc".into(), 7);
        assert_eq!(decode_expanded_key(&key).unwrap(), ("abc".into(), 7));
        let order = FrequencyOrder::from_frequencies(HashMap::from([("x".into(), 1)]), true);
        assert!(order.side_bytes() > 0);
    }
}
