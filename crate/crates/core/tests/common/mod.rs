#![allow(dead_code)]

use std::collections::BTreeMap;

use vsmart_core::datagen::{generate, GenSpec};
use vsmart_core::kernel::{Engine, KernelConfig};
use vsmart_core::{Dataset, SimilarPair};

pub fn engine(workers: usize) -> Engine {
    Engine::new(KernelConfig {
        workers,
        ..KernelConfig::default()
    })
    .unwrap()
}

pub fn engine_with_budget(workers: usize, memory_budget: u64) -> Engine {
    Engine::new(KernelConfig {
        workers,
        memory_budget,
        ..KernelConfig::default()
    })
    .unwrap()
}

/// A small skewed dataset whose shape varies with the seed.
pub fn small_dataset(seed: u64) -> Dataset {
    let n = 10 + (seed as usize * 53) % 140;
    let spec = GenSpec {
        num_multisets: n,
        alphabet_size: 20 + (seed as usize * 31) % 100,
        zipf_exponent: 0.8 + (seed % 5) as f64 * 0.15,
        size_zipf_exponent: 1.4 + (seed % 3) as f64 * 0.3,
        max_size: Some(25),
        max_multiplicity: 1 + seed % 10,
        seed,
        clusters: (n / 15).min(4),
        cluster_size: 3,
    };
    generate(&spec).unwrap().dataset
}

/// Pairs keyed by canonical ids.
pub fn pair_map(pairs: &[SimilarPair]) -> BTreeMap<(Vec<u8>, Vec<u8>), f64> {
    pairs
        .iter()
        .map(|p| ((p.left.as_bytes().to_vec(), p.right.as_bytes().to_vec()), p.similarity))
        .collect()
}

pub fn assert_same_pairs(got: &[SimilarPair], want: &[SimilarPair], rel: f64, what: &str) {
    let g = pair_map(got);
    let w = pair_map(want);
    assert_eq!(
        g.keys().collect::<Vec<_>>(),
        w.keys().collect::<Vec<_>>(),
        "{what}: pair sets differ"
    );
    for (k, a) in &g {
        let b = w[k];
        assert!(
            (a - b).abs() <= rel * b.abs().max(f64::MIN_POSITIVE),
            "{what}: similarity of {k:?} is {a}, expected {b}"
        );
    }
}
