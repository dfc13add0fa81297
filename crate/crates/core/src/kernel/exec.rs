//! Worker execution: rayon when the `parallel` feature is on and the engine
//! asks for it, plain iteration otherwise.

use xxhash_rust::xxh3::xxh3_64;

/// Version tag of [`stable_hash`]; bump if the hash function ever changes.
pub const STABLE_HASH_VERSION: u32 = 1;

/// Process- and platform-independent 64-bit hash (XXH3-64, seed 0).
pub fn stable_hash(bytes: &[u8]) -> u64 {
    xxh3_64(bytes)
}

pub(crate) fn default_partition(key: &[u8], workers: usize) -> usize {
    (stable_hash(key) % workers as u64) as usize
}

#[cfg(feature = "parallel")]
pub(crate) fn run_owned<In, T, F>(parallel: bool, inputs: Vec<In>, f: F) -> Vec<T>
where
    In: Send,
    T: Send,
    F: Fn(usize, In) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if parallel {
        inputs
            .into_par_iter()
            .enumerate()
            .map(|(i, x)| f(i, x))
            .collect()
    } else {
        inputs.into_iter().enumerate().map(|(i, x)| f(i, x)).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn run_owned<In, T, F>(_parallel: bool, inputs: Vec<In>, f: F) -> Vec<T>
where
    In: Send,
    T: Send,
    F: Fn(usize, In) -> T + Sync + Send,
{
    inputs.into_iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

pub(crate) fn run_indexed<T, F>(parallel: bool, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    run_owned(parallel, vec![(); n], |i, ()| f(i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_hash_is_pinned() {
        // Changing these values changes every partition assignment.
        assert_eq!(stable_hash(b""), 0x2d06800538d394c2);
        assert_eq!(default_partition(b"abc", 1), 0);
    }

    #[test]
    fn run_indexed_preserves_order() {
        let out = run_indexed(true, 5, |i| i * 10);
        assert_eq!(out, vec![0, 10, 20, 30, 40]);
        let out = run_indexed(false, 3, |i| i + 1);
        assert_eq!(out, vec![1, 2, 3]);
    }
}
