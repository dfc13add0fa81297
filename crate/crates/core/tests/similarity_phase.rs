use std::collections::{BTreeMap, BTreeSet};

use vsmart_core::codec::Record;
use vsmart_core::join::{run_join, JoinAlgorithm, ShardingConfig};
use vsmart_core::oracle::{drop_frequent_elements, element_frequencies, oracle_join};
use vsmart_core::similarity::{run_similarity_phase, run_vsmart, IndexEntry, SimilarityConfig};
use vsmart_core::{Dataset, MeasureKind, MultisetId, NsmMeasure, RawTuple, SimilarPair};
use vsmart_core::model::UniVector;

mod common;
use common::{assert_same_pairs, engine, engine_with_budget, small_dataset};

const KINDS: [MeasureKind; 5] = [
    MeasureKind::Ruzicka,
    MeasureKind::Jaccard,
    MeasureKind::Dice,
    MeasureKind::CosineMultiset,
    MeasureKind::CosineVector,
];

fn vsmart(d: &Dataset, kind: MeasureKind, t: f64, q: Option<u64>, chunk: Option<u64>) -> Vec<SimilarPair> {
    let e = engine(3);
    let mut config = SimilarityConfig::new(t).unwrap();
    config.chunk_budget = chunk;
    let raw = e.records(d.tuples().to_vec());
    run_vsmart(&e, &raw, &NsmMeasure::builtin(kind), &JoinAlgorithm::OnlineAggregation, q, &config)
        .unwrap()
        .similarity
        .sorted_pairs()
        .unwrap()
}

#[test]
fn every_builtin_matches_the_oracle() {
    for seed in 0..12 {
        let d = small_dataset(seed);
        for kind in KINDS {
            for t in [0.05, 0.4, 0.8, 1.0] {
                let want = oracle_join(&d, &NsmMeasure::builtin(kind), t, false).unwrap();
                assert_same_pairs(&vsmart(&d, kind, t, None, None), &want, 1e-9, &format!("{kind:?} t={t} seed={seed}"));
            }
        }
    }
}

#[test]
fn stop_words_behave_like_a_filtered_dataset() {
    for seed in 0..8 {
        let d = small_dataset(seed);
        for q in [1, 2, 5] {
            let filtered = drop_frequent_elements(&d, q);
            let m = NsmMeasure::builtin(MeasureKind::Ruzicka);
            let want = oracle_join(&filtered, &m, 0.2, false).unwrap();
            assert_same_pairs(&vsmart(&d, MeasureKind::Ruzicka, 0.2, Some(q), None), &want, 1e-9, &format!("q={q}"));
        }
    }
}

#[test]
fn similarity_phase_stop_words_keep_whole_multiset_uni() {
    // Dropping stop words after joining leaves Uni over the full multiset
    // while Conj only sees the surviving elements.
    let d = small_dataset(4);
    let q = 3;
    let m = NsmMeasure::builtin(MeasureKind::Ruzicka);
    let e = engine(2);
    let raw = e.records(d.tuples().to_vec());
    let joined = run_join(&e, &raw, &m, &JoinAlgorithm::Lookup).unwrap().joined;
    let got = run_similarity_phase(&e, &joined, &m, Some(q), &SimilarityConfig::new(0.1).unwrap())
        .unwrap()
        .sorted_pairs()
        .unwrap();

    let freq = element_frequencies(&d);
    let sets = d.multisets();
    let mut want = Vec::new();
    for (i, a) in sets.iter().enumerate() {
        for b in &sets[i + 1..] {
            let shared: u64 = a
                .iter()
                .filter(|(el, _)| freq[*el] <= q)
                .map(|(el, f)| f.min(b.multiplicity(el)))
                .sum();
            let s = shared as f64 / (a.cardinality() + b.cardinality() - shared) as f64;
            if shared > 0 && s >= 0.1 {
                want.push(SimilarPair { left: a.id.clone(), right: b.id.clone(), similarity: s });
            }
        }
    }
    assert_same_pairs(&got, &want, 1e-9, "post-join stop words");
}

fn entry_bytes(uni_len: usize) -> u64 {
    IndexEntry {
        id: MultisetId::new("m000000").unwrap(),
        uni: UniVector(vec![1.0; uni_len]),
        multiplicity: 1,
    }
    .to_bytes()
    .len() as u64
}

#[test]
fn chunked_groups_contribute_exactly_once() {
    let d = small_dataset(9);
    let m = NsmMeasure::builtin(MeasureKind::Jaccard);
    let plain = vsmart(&d, MeasureKind::Jaccard, 0.1, None, None);
    for budget in [entry_bytes(1), 3 * entry_bytes(1), 10 * entry_bytes(1)] {
        let e = engine(4);
        let mut config = SimilarityConfig::new(0.1).unwrap();
        config.chunk_budget = Some(budget);
        config.emit_candidates = true;
        let raw = e.records(d.tuples().to_vec());
        let out = run_vsmart(&e, &raw, &m, &JoinAlgorithm::OnlineAggregation, None, &config).unwrap();
        assert_same_pairs(&out.similarity.sorted_pairs().unwrap(), &plain, 0.0, "chunked");
        let sim1 = out.similarity.stage("similarity-1").unwrap();
        assert!(sim1.maximum("sim1.max_chunk_bytes") <= budget);
        assert!(sim1.maximum("sim1.max_resident_chunk_bytes") <= 2 * budget);

        let sets: BTreeMap<_, _> = d.multisets().into_iter().map(|ms| (ms.id.clone(), ms)).collect();
        for c in out.similarity.candidates.unwrap().to_vec().unwrap() {
            let (a, b) = (&sets[&c.key.left], &sets[&c.key.right]);
            let shared = a.elements().filter(|el| b.multiplicity(el) > 0).count() as u64;
            assert_eq!(c.contributions, shared, "{} / {}", a.id, b.id);
        }
    }
}

#[test]
fn thresholds_nest() {
    let d = small_dataset(11);
    let mut previous: Option<BTreeSet<(MultisetId, MultisetId)>> = None;
    for t in [0.1, 0.3, 0.5, 0.7, 0.9, 1.0] {
        let now: BTreeSet<_> = vsmart(&d, MeasureKind::Dice, t, None, None)
            .into_iter()
            .map(|p| (p.left, p.right))
            .collect();
        if let Some(prev) = &previous {
            assert!(now.is_subset(prev), "t = {t}");
        }
        previous = Some(now);
    }
}

#[test]
fn results_survive_spilling_and_other_joins() {
    let d = small_dataset(13);
    let m = NsmMeasure::builtin(MeasureKind::CosineMultiset);
    let want = oracle_join(&d, &m, 0.3, false).unwrap();
    let e = engine_with_budget(5, 4096);
    let raw = e.records(d.tuples().to_vec());
    let config = SimilarityConfig::new(0.3).unwrap();
    let alg = JoinAlgorithm::Sharding(ShardingConfig::new(2).unwrap());
    let got = run_vsmart(&e, &raw, &m, &alg, None, &config).unwrap().similarity.sorted_pairs().unwrap();
    assert_same_pairs(&got, &want, 1e-9, "spilled sharding");
}

#[test]
fn custom_measures_plug_into_the_pipeline() {
    use vsmart_core::measures::{PartialKind, PartialSpec};
    // Overlap coefficient: Σmin / min(|M_i|, |M_j|).
    let overlap = NsmMeasure::new(
        "overlap",
        vec![
            PartialSpec::new("min", PartialKind::Conjunctive, |a, b| a.min(b) as f64),
            PartialSpec::new("|M_i|", PartialKind::UnilateralLeft, |a, _| a as f64),
            PartialSpec::new("|M_j|", PartialKind::UnilateralRight, |_, b| b as f64),
        ],
        |ui, uj, c| {
            let d = ui[0].min(uj[0]);
            (d > 0.0).then(|| c[0] / d)
        },
    )
    .unwrap();
    let d = Dataset::from_tuples(vec![
        RawTuple::new("x", "a", 1),
        RawTuple::new("y", "a", 1),
        RawTuple::new("y", "b", 4),
        RawTuple::new("z", "c", 1),
    ])
    .unwrap();
    let e = engine(2);
    let raw = e.records(d.tuples().to_vec());
    let config = SimilarityConfig::new(0.5).unwrap();
    let got = run_vsmart(&e, &raw, &overlap, &JoinAlgorithm::Lookup, None, &config)
        .unwrap()
        .similarity
        .sorted_pairs()
        .unwrap();
    assert_eq!(got.len(), 1);
    assert_eq!((got[0].left.to_string(), got[0].right.to_string(), got[0].similarity), ("x".into(), "y".into(), 1.0));
}

#[test]
fn thresholds_outside_the_unit_interval_are_rejected() {
    for t in [0.0, -0.5, 1.5, f64::NAN] {
        assert!(SimilarityConfig::new(t).is_err(), "{t}");
    }
}
