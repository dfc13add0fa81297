use std::collections::BTreeSet;

use vsmart_core::datagen::{element_id, generate, GenSpec};
use vsmart_core::oracle::{drop_frequent_elements, element_frequencies, intersecting_pairs, oracle_join, ORACLE_GUARD};
use vsmart_core::stats::dataset_stats;
use vsmart_core::{MeasureKind, NsmMeasure};

mod common;
use common::small_dataset;

#[test]
fn popular_ranks_are_more_frequent() {
    let g = generate(&GenSpec { num_multisets: 1000, alphabet_size: 500, zipf_exponent: 1.2, ..GenSpec::default() }).unwrap();
    let freq = element_frequencies(&g.dataset);
    let f = |rank| freq.get(&element_id(rank)).copied().unwrap_or(0);
    assert!(f(1) >= f(100), "{} < {}", f(1), f(100));
    // Averaged over rank bands the histogram is nonincreasing.
    let band = |lo: u64| (lo..lo + 50).map(f).sum::<u64>();
    let bands: Vec<u64> = (0..10).map(|b| band(1 + 50 * b)).collect();
    assert!(bands.windows(2).all(|w| w[0] >= w[1]), "{bands:?}");
}

#[test]
fn clusters_are_planted_and_similar() {
    let g = generate(&GenSpec { num_multisets: 300, clusters: 6, cluster_size: 4, seed: 3, ..GenSpec::default() }).unwrap();
    assert_eq!(g.clusters.len(), 6);
    let pairs: BTreeSet<_> = oracle_join(&g.dataset, &NsmMeasure::builtin(MeasureKind::Ruzicka), 0.3, false)
        .unwrap()
        .into_iter()
        .map(|p| (p.left, p.right))
        .collect();
    for cluster in &g.clusters {
        assert_eq!(cluster.len(), 4);
        assert!(pairs.contains(&(cluster[0].clone(), cluster[1].clone())), "{cluster:?}");
    }
}

#[test]
fn oracle_at_zero_threshold_lists_intersecting_pairs() {
    // Threshold 0 is outside the pipeline's range but the oracle accepts it.
    for seed in 0..10 {
        let d = small_dataset(seed);
        for kind in [MeasureKind::Ruzicka, MeasureKind::CosineVector] {
            let got: BTreeSet<_> = oracle_join(&d, &NsmMeasure::builtin(kind), 0.0, false)
                .unwrap()
                .into_iter()
                .map(|p| (p.left, p.right))
                .collect();
            assert_eq!(got, intersecting_pairs(&d), "seed {seed}");
        }
    }
}

#[test]
fn oracle_refuses_large_inputs_unless_forced() {
    let g = generate(&GenSpec { num_multisets: ORACLE_GUARD + 1, alphabet_size: 50, seed: 1, ..GenSpec::default() }).unwrap();
    let m = NsmMeasure::builtin(MeasureKind::Jaccard);
    assert_eq!(oracle_join(&g.dataset, &m, 0.9, false).unwrap_err().exit_code(), 5);
}

#[test]
fn stop_word_filter_and_stats_agree() {
    let d = small_dataset(6);
    let filtered = drop_frequent_elements(&d, 2);
    let stats = dataset_stats(&filtered);
    assert!(stats.max_element_frequency <= 2);
    let before = element_frequencies(&d);
    let kept = before.values().filter(|&&f| f <= 2).count() as u64;
    assert_eq!(stats.elements, kept);
    assert_eq!(dataset_stats(&d).tuples, d.tuples().len() as u64);
}
