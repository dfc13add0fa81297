use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Named counters (summed across workers) and gauges (max across workers)
/// that stage functions may record. They never influence stage output.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    pub sums: BTreeMap<String, u64>,
    pub maxima: BTreeMap<String, u64>,
}

impl Counters {
    pub fn add(&mut self, name: &str, delta: u64) {
        match self.sums.get_mut(name) {
            Some(v) => *v += delta,
            None => {
                self.sums.insert(name.to_owned(), delta);
            }
        }
    }

    pub fn observe_max(&mut self, name: &str, value: u64) {
        match self.maxima.get_mut(name) {
            Some(v) => *v = (*v).max(value),
            None => {
                self.maxima.insert(name.to_owned(), value);
            }
        }
    }

    pub fn merge(&mut self, other: Counters) {
        for (k, v) in other.sums {
            *self.sums.entry(k).or_insert(0) += v;
        }
        for (k, v) in other.maxima {
            let slot = self.maxima.entry(k).or_insert(0);
            *slot = (*slot).max(v);
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub stage: String,
    pub workers: usize,
    pub input_records: u64,
    /// Records emitted by mappers, before combining.
    pub records_mapped: u64,
    /// Records crossing the shuffle, after combining.
    pub records_shuffled: u64,
    /// Key, secondary-key and value bytes crossing the shuffle.
    pub bytes_shuffled: u64,
    pub groups: u64,
    pub max_group_length: u64,
    pub max_group_bytes: u64,
    pub output_records: u64,
    pub spilled_runs: u64,
    pub spilled_bytes: u64,
    /// records_shuffled / records_mapped; 0 for an empty stage.
    pub combiner_reduction_ratio: f64,
    pub combiner_violations: u64,
    /// Seconds spent by worker `i` on map task `i` plus reduce task `i`.
    pub per_worker_wall_time: Vec<f64>,
    pub wall_time: f64,
    pub counters: BTreeMap<String, u64>,
    pub maxima: BTreeMap<String, u64>,
}

impl StageMetrics {
    pub fn counter(&self, name: &str) -> u64 {
        self.counters.get(name).copied().unwrap_or(0)
    }

    pub fn maximum(&self, name: &str) -> u64 {
        self.maxima.get(name).copied().unwrap_or(0)
    }
}
