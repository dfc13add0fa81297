use std::collections::HashMap;
use std::hash::Hash;
use std::ops::Deref;
use std::sync::Arc;

use crate::model::{ElementId, MultisetId, UniVector};

/// Approximate resident size of side data, used against the memory budget.
pub trait SideSize {
    fn side_bytes(&self) -> u64;
}

impl SideSize for u64 {
    fn side_bytes(&self) -> u64 {
        8
    }
}

impl SideSize for Vec<u8> {
    fn side_bytes(&self) -> u64 {
        self.len() as u64
    }
}

impl SideSize for MultisetId {
    fn side_bytes(&self) -> u64 {
        self.as_bytes().len() as u64
    }
}

impl SideSize for ElementId {
    fn side_bytes(&self) -> u64 {
        self.as_bytes().len() as u64
    }
}

impl SideSize for UniVector {
    fn side_bytes(&self) -> u64 {
        8 * self.len() as u64
    }
}

impl<K: SideSize, V: SideSize> SideSize for HashMap<K, V> {
    fn side_bytes(&self) -> u64 {
        self.iter().map(|(k, v)| k.side_bytes() + v.side_bytes()).sum()
    }
}

/// Immutable snapshot of side data shared by every worker of a stage.
#[derive(Debug)]
pub struct SideTable<T>(Arc<T>);

impl<T> Clone for SideTable<T> {
    fn clone(&self) -> Self {
        Self(Arc::clone(&self.0))
    }
}

impl<T> SideTable<T> {
    pub(crate) fn new(table: T) -> Self {
        Self(Arc::new(table))
    }
}

impl<T> Deref for SideTable<T> {
    type Target = T;

    fn deref(&self) -> &T {
        &self.0
    }
}

pub type SideMap<K, V> = SideTable<HashMap<K, V>>;

pub(crate) fn entry_bytes<K: SideSize + Hash + Eq, V: SideSize>(k: &K, v: &V) -> u64 {
    k.side_bytes() + v.side_bytes()
}
