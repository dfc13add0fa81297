//! Brute-force ground truth: every pair, full similarity, no indexing.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::measures::NsmMeasure;
use crate::model::{sort_pairs, Dataset, ElementId, Multiset, MultisetId, SimilarPair};

/// Largest dataset the oracle evaluates without `force`.
pub const ORACLE_GUARD: usize = 5000;

/// All pairs with similarity at least `t`. Pairs with similarity 0 are never
/// reported, so `t = 0` yields exactly the intersecting pairs.
pub fn oracle_join(dataset: &Dataset, measure: &NsmMeasure, t: f64, force: bool) -> Result<Vec<SimilarPair>> {
    let multisets = dataset.multisets();
    if multisets.len() > ORACLE_GUARD && !force {
        return Err(Error::PreconditionRefused(format!(
            "oracle refuses {} multisets (limit {ORACLE_GUARD}); force it explicitly",
            multisets.len()
        )));
    }
    if t.is_nan() {
        return Err(Error::InvalidConfig("threshold is NaN".into()));
    }
    let rows = pair_rows(&multisets, measure, t)?;
    let mut pairs: Vec<SimilarPair> = rows.into_iter().flatten().collect();
    sort_pairs(&mut pairs);
    Ok(pairs)
}

fn row(multisets: &[Multiset], i: usize, measure: &NsmMeasure, t: f64) -> Result<Vec<SimilarPair>> {
    let mut out = Vec::new();
    for j in i + 1..multisets.len() {
        let (a, b) = (&multisets[i], &multisets[j]);
        let s = measure.full_similarity(a, b)?;
        if s > 0.0 && s >= t {
            let (left, right) = if a.id < b.id { (a, b) } else { (b, a) };
            out.push(SimilarPair {
                left: left.id.clone(),
                right: right.id.clone(),
                similarity: s,
            });
        }
    }
    Ok(out)
}

#[cfg(feature = "parallel")]
fn pair_rows(multisets: &[Multiset], measure: &NsmMeasure, t: f64) -> Result<Vec<Vec<SimilarPair>>> {
    use rayon::prelude::*;
    (0..multisets.len())
        .into_par_iter()
        .map(|i| row(multisets, i, measure, t))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn pair_rows(multisets: &[Multiset], measure: &NsmMeasure, t: f64) -> Result<Vec<Vec<SimilarPair>>> {
    (0..multisets.len()).map(|i| row(multisets, i, measure, t)).collect()
}

/// Canonical pairs sharing at least one element, via an inverted index.
pub fn intersecting_pairs(dataset: &Dataset) -> BTreeSet<(MultisetId, MultisetId)> {
    let mut index: BTreeMap<&ElementId, Vec<&MultisetId>> = BTreeMap::new();
    for t in dataset.tuples() {
        index.entry(&t.element).or_default().push(&t.id);
    }
    let mut pairs = BTreeSet::new();
    for ids in index.values() {
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                let pair = if a < b { (*a, *b) } else { (*b, *a) };
                pairs.insert((pair.0.clone(), pair.1.clone()));
            }
        }
    }
    pairs
}

/// Number of multisets containing each element.
pub fn element_frequencies(dataset: &Dataset) -> BTreeMap<ElementId, u64> {
    let mut freq = BTreeMap::new();
    for t in dataset.tuples() {
        *freq.entry(t.element.clone()).or_insert(0) += 1;
    }
    freq
}

/// The dataset with every element shared by more than `q` multisets removed.
pub fn drop_frequent_elements(dataset: &Dataset, q: u64) -> Dataset {
    let freq = element_frequencies(dataset);
    let kept = dataset.tuples().iter().filter(|t| freq[&t.element] <= q).cloned();
    Dataset::from_tuples(kept).expect("subset of a valid dataset")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::MeasureKind;
    use crate::model::RawTuple;

    fn toy() -> Dataset {
        Dataset::from_tuples(vec![
            RawTuple::new("m1", "a", 2),
            RawTuple::new("m1", "b", 1),
            RawTuple::new("m2", "a", 1),
            RawTuple::new("m2", "b", 3),
            RawTuple::new("m3", "c", 1),
        ])
        .unwrap()
    }

    #[test]
    fn oracle_examples() {
        let r = NsmMeasure::builtin(MeasureKind::Ruzicka);
        let got = oracle_join(&toy(), &r, 0.3, false).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!((got[0].left.to_string(), got[0].right.to_string()), ("m1".into(), "m2".into()));
        assert!((got[0].similarity - 0.4).abs() < 1e-15);
        assert!(oracle_join(&toy(), &r, 1.01, false).unwrap().is_empty());
        let single = Dataset::from_tuples(vec![RawTuple::new("m", "a", 1)]).unwrap();
        assert!(oracle_join(&single, &r, 0.1, false).unwrap().is_empty());
    }

    #[test]
    fn zero_threshold_gives_intersecting_pairs() {
        let r = NsmMeasure::builtin(MeasureKind::Dice);
        let got: BTreeSet<_> = oracle_join(&toy(), &r, 0.0, false)
            .unwrap()
            .into_iter()
            .map(|p| (p.left, p.right))
            .collect();
        assert_eq!(got, intersecting_pairs(&toy()));
    }

    #[test]
    fn guard_refuses_large_inputs() {
        let big = Dataset::from_tuples((0..=ORACLE_GUARD).map(|i| RawTuple::new(format!("m{i}").as_str(), "a", 1))).unwrap();
        let r = NsmMeasure::builtin(MeasureKind::Jaccard);
        assert!(matches!(oracle_join(&big, &r, 0.5, false), Err(Error::PreconditionRefused(_))));
    }

    #[test]
    fn frequent_elements_are_removed() {
        let filtered = drop_frequent_elements(&toy(), 1);
        assert_eq!(filtered.tuples().len(), 1);
        assert_eq!(drop_frequent_elements(&toy(), 2), toy());
    }
}
