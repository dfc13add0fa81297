//! Deterministic skewed synthetic datasets.
//!
//! Element popularity and multiset sizes both follow Zipf laws, mirroring the
//! heavy-tailed "elements per multiset" and "multisets per element"
//! distributions of real IP/cookie logs. Planted clusters of perturbed clones
//! make sure similar pairs exist even at high thresholds.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, ElementId, MultisetId, RawTuple};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub num_multisets: usize,
    pub alphabet_size: usize,
    /// Element popularity ∝ rank^(−zipf_exponent).
    pub zipf_exponent: f64,
    /// Underlying cardinality ∝ size^(−size_zipf_exponent).
    pub size_zipf_exponent: f64,
    /// Upper bound on underlying cardinality; defaults to the alphabet size.
    pub max_size: Option<usize>,
    pub max_multiplicity: u64,
    pub seed: u64,
    /// Number of planted near-duplicate clusters.
    pub clusters: usize,
    /// Members per cluster, the original included.
    pub cluster_size: usize,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            num_multisets: 1000,
            alphabet_size: 500,
            zipf_exponent: 1.2,
            size_zipf_exponent: 2.0,
            max_size: None,
            max_multiplicity: 10,
            seed: 0,
            clusters: 0,
            cluster_size: 3,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.alphabet_size == 0 && self.num_multisets > 0 {
            return bad("alphabet_size must be positive".into());
        }
        if !(self.zipf_exponent > 0.0 && self.zipf_exponent.is_finite()) {
            return bad(format!("zipf_exponent must be > 0, got {}", self.zipf_exponent));
        }
        if !(self.size_zipf_exponent > 0.0 && self.size_zipf_exponent.is_finite()) {
            return bad(format!("size_zipf_exponent must be > 0, got {}", self.size_zipf_exponent));
        }
        if self.max_multiplicity == 0 {
            return bad("max_multiplicity must be at least 1".into());
        }
        if self.max_size == Some(0) {
            return bad("max_size must be at least 1".into());
        }
        if self.clusters > 0 && self.cluster_size < 2 {
            return bad("cluster_size must be at least 2".into());
        }
        if self.clusters * self.cluster_size > self.num_multisets {
            return bad(format!(
                "{} clusters of {} do not fit in {} multisets",
                self.clusters, self.cluster_size, self.num_multisets
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GeneratedDataset {
    pub dataset: Dataset,
    /// Ids of each planted cluster, original first.
    pub clusters: Vec<Vec<MultisetId>>,
}

pub fn multiset_id(i: usize) -> MultisetId {
    MultisetId::new(format!("m{i:06}")).expect("non-empty")
}

pub fn element_id(rank: u64) -> ElementId {
    ElementId::new(format!("e{rank}")).expect("non-empty")
}

fn zipf(n: usize, s: f64) -> Result<Zipf<f64>> {
    Zipf::new(n as f64, s).map_err(|e| Error::InvalidConfig(format!("zipf({n}, {s}): {e}")))
}

pub fn generate(spec: &GenSpec) -> Result<GeneratedDataset> {
    spec.validate()?;
    if spec.num_multisets == 0 {
        return Ok(GeneratedDataset {
            dataset: Dataset::default(),
            clusters: Vec::new(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let max_size = spec.max_size.unwrap_or(spec.alphabet_size).min(spec.alphabet_size);
    let sizes = zipf(max_size, spec.size_zipf_exponent)?;
    let popularity = zipf(spec.alphabet_size, spec.zipf_exponent)?;

    let planted = spec.clusters * (spec.cluster_size - 1);
    let originals = spec.num_multisets - planted;
    let mut multisets: Vec<BTreeMap<u64, u64>> = Vec::with_capacity(spec.num_multisets);
    for _ in 0..originals {
        let size = sizes.sample(&mut rng) as usize;
        let mut m = BTreeMap::new();
        // Rejection sampling of distinct ranks, bounded so that very skewed
        // popularity cannot stall generation.
        let mut attempts = 0;
        while m.len() < size && attempts < 50 * size {
            let rank = popularity.sample(&mut rng) as u64;
            m.entry(rank).or_insert_with(|| rng.random_range(1..=spec.max_multiplicity));
            attempts += 1;
        }
        multisets.push(m);
    }

    let mut clusters = Vec::with_capacity(spec.clusters);
    for c in 0..spec.clusters {
        let base = c * originals / spec.clusters.max(1);
        let mut members = vec![multiset_id(base)];
        for _ in 1..spec.cluster_size {
            let clone = perturb(&multisets[base], spec, &popularity, &mut rng);
            members.push(multiset_id(multisets.len()));
            multisets.push(clone);
        }
        clusters.push(members);
    }

    let tuples = multisets.iter().enumerate().flat_map(|(i, m)| {
        m.iter().map(move |(rank, f)| RawTuple {
            id: multiset_id(i),
            element: element_id(*rank),
            multiplicity: *f,
        })
    });
    Ok(GeneratedDataset {
        dataset: Dataset::from_tuples(tuples)?,
        clusters,
    })
}

/// A copy with one small edit: bump a multiplicity, add an element, or drop one.
fn perturb(base: &BTreeMap<u64, u64>, spec: &GenSpec, popularity: &Zipf<f64>, rng: &mut ChaCha8Rng) -> BTreeMap<u64, u64> {
    let mut m = base.clone();
    match rng.random_range(0..3) {
        0 => {
            let k = rng.random_range(0..m.len());
            let (_, f) = m.iter_mut().nth(k).expect("non-empty base");
            *f = if *f < spec.max_multiplicity { *f + 1 } else { (*f - 1).max(1) };
        }
        1 => {
            let rank = popularity.sample(rng) as u64;
            m.entry(rank).or_insert(1);
        }
        _ if m.len() > 1 => {
            let k = rng.random_range(0..m.len());
            let key = *m.keys().nth(k).expect("in range");
            m.remove(&key);
        }
        _ => {}
    }
    m
}
