use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::Dataset;
use crate::oracle::element_frequencies;

/// Counts and size distributions of a dataset.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub multisets: u64,
    pub elements: u64,
    pub tuples: u64,
    /// Σ multiplicities over all tuples.
    pub total_multiplicity: u64,
    pub max_underlying_cardinality: u64,
    pub max_element_frequency: u64,
    /// |U(M_i)| → number of multisets.
    pub underlying_cardinality_histogram: BTreeMap<u64, u64>,
    /// Freq(a_k) → number of elements.
    pub element_frequency_histogram: BTreeMap<u64, u64>,
}

pub fn dataset_stats(dataset: &Dataset) -> DatasetStats {
    let mut sizes: BTreeMap<&[u8], u64> = BTreeMap::new();
    let mut total = 0;
    for t in dataset.tuples() {
        *sizes.entry(t.id.as_bytes()).or_insert(0) += 1;
        total += t.multiplicity;
    }
    let freq = element_frequencies(dataset);
    let mut stats = DatasetStats {
        multisets: sizes.len() as u64,
        elements: freq.len() as u64,
        tuples: dataset.tuples().len() as u64,
        total_multiplicity: total,
        ..DatasetStats::default()
    };
    for &n in sizes.values() {
        *stats.underlying_cardinality_histogram.entry(n).or_insert(0) += 1;
        stats.max_underlying_cardinality = stats.max_underlying_cardinality.max(n);
    }
    for &f in freq.values() {
        *stats.element_frequency_histogram.entry(f).or_insert(0) += 1;
        stats.max_element_frequency = stats.max_element_frequency.max(f);
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RawTuple;

    #[test]
    fn stats_examples() {
        let toy = Dataset::from_tuples(vec![
            RawTuple::new("m1", "a", 2),
            RawTuple::new("m1", "b", 1),
            RawTuple::new("m2", "a", 1),
            RawTuple::new("m2", "b", 3),
            RawTuple::new("m3", "c", 1),
        ])
        .unwrap();
        let s = dataset_stats(&toy);
        assert_eq!((s.multisets, s.elements, s.tuples), (3, 3, 5));
        assert_eq!(s.underlying_cardinality_histogram, BTreeMap::from([(1, 1), (2, 2)]));
        assert_eq!(dataset_stats(&Dataset::default()), DatasetStats::default());
        let one = dataset_stats(&Dataset::from_tuples(vec![RawTuple::new("m", "a", 1)]).unwrap());
        assert_eq!(one.underlying_cardinality_histogram, BTreeMap::from([(1, 1)]));
        assert_eq!(one.element_frequency_histogram, BTreeMap::from([(1, 1)]));
    }
}
