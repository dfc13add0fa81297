use std::borrow::Cow;
use std::cell::Cell;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use super::record::{SpillReader, SpillWriter};
use crate::codec::Record;
use crate::error::{Error, Result};

enum Storage {
    Memory(Vec<(Option<Vec<u8>>, Vec<u8>)>),
    Disk(NamedTempFile),
}

/// The values sharing one key, as seen by a reducer.
///
/// Values are ordered by `(secondary, value)`. Every call to
/// [`ReduceGroup::entries`] starts a fresh pass over the same sequence, so a
/// reducer may rewind as often as it needs. Groups larger than the kernel's
/// memory budget are kept on disk.
pub struct ReduceGroup {
    key: Vec<u8>,
    storage: Storage,
    len: u64,
    bytes: u64,
    passes: Cell<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupEntry<'a> {
    pub secondary: Option<Cow<'a, [u8]>>,
    pub value: Cow<'a, [u8]>,
}

impl ReduceGroup {
    /// An in-memory group, ordered the way the kernel would order it.
    pub fn from_values(key: Vec<u8>, mut values: Vec<(Option<Vec<u8>>, Vec<u8>)>) -> Self {
        values.sort();
        let bytes = values
            .iter()
            .map(|(s, v)| (s.as_ref().map_or(0, Vec::len) + v.len()) as u64)
            .sum();
        Self {
            key,
            len: values.len() as u64,
            bytes,
            storage: Storage::Memory(values),
            passes: Cell::new(0),
        }
    }

    pub fn key(&self) -> &[u8] {
        &self.key
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Secondary-key plus value bytes over the whole group.
    pub fn byte_len(&self) -> u64 {
        self.bytes
    }

    pub fn is_in_memory(&self) -> bool {
        matches!(self.storage, Storage::Memory(_))
    }

    /// Number of passes started so far.
    pub fn passes(&self) -> u64 {
        self.passes.get()
    }

    pub fn entries(&self) -> GroupEntries<'_> {
        self.passes.set(self.passes.get() + 1);
        match &self.storage {
            Storage::Memory(values) => GroupEntries(EntriesInner::Memory(values.iter())),
            Storage::Disk(file) => GroupEntries(match SpillReader::open(file.path()) {
                Ok(reader) => EntriesInner::Disk(reader),
                Err(e) => EntriesInner::Failed(Some(e)),
            }),
        }
    }

    /// Decodes every value in one pass, ignoring secondary keys.
    pub fn decoded<T: Record>(&self) -> impl Iterator<Item = Result<T>> + '_ {
        self.entries()
            .map(|entry| entry.and_then(|e| T::from_bytes(&e.value)))
    }

    /// Fails when holding the whole group would exceed `budget` bytes.
    pub fn ensure_fits(&self, budget: u64, what: impl FnOnce() -> String) -> Result<()> {
        if self.bytes > budget {
            return Err(Error::MemoryBudgetExceeded {
                what: what(),
                needed: self.bytes,
                budget,
            });
        }
        Ok(())
    }
}

/// One pass over a [`ReduceGroup`].
pub struct GroupEntries<'a>(EntriesInner<'a>);

enum EntriesInner<'a> {
    Memory(std::slice::Iter<'a, (Option<Vec<u8>>, Vec<u8>)>),
    Disk(SpillReader),
    Failed(Option<Error>),
}

impl<'a> Iterator for GroupEntries<'a> {
    type Item = Result<GroupEntry<'a>>;

    fn next(&mut self) -> Option<Self::Item> {
        match &mut self.0 {
            EntriesInner::Memory(it) => it.next().map(|(s, v)| {
                Ok(GroupEntry {
                    secondary: s.as_deref().map(Cow::Borrowed),
                    value: Cow::Borrowed(v.as_slice()),
                })
            }),
            EntriesInner::Disk(reader) => reader.next().map(|rec| {
                rec.map(|r| GroupEntry {
                    secondary: r.secondary.map(Cow::Owned),
                    value: Cow::Owned(r.value),
                })
            }),
            EntriesInner::Failed(err) => err.take().map(Err),
        }
    }
}

/// Collects one group from the merged shuffle stream.
pub(crate) struct GroupBuilder {
    key: Vec<u8>,
    values: Vec<(Option<Vec<u8>>, Vec<u8>)>,
    disk: Option<SpillWriter>,
    len: u64,
    bytes: u64,
    budget: u64,
    dir: Option<PathBuf>,
}

impl GroupBuilder {
    pub(crate) fn new(key: Vec<u8>, budget: u64, dir: Option<&Path>) -> Self {
        Self {
            key,
            values: Vec::new(),
            disk: None,
            len: 0,
            bytes: 0,
            budget,
            dir: dir.map(Path::to_path_buf),
        }
    }

    pub(crate) fn key(&self) -> &[u8] {
        &self.key
    }

    pub(crate) fn push(&mut self, secondary: Option<Vec<u8>>, value: Vec<u8>) -> Result<()> {
        self.len += 1;
        self.bytes += (secondary.as_ref().map_or(0, Vec::len) + value.len()) as u64;
        if let Some(disk) = &mut self.disk {
            return disk.write(&[], secondary.as_deref(), &value);
        }
        self.values.push((secondary, value));
        if self.bytes > self.budget {
            let mut disk = SpillWriter::create(self.dir.as_deref())?;
            for (s, v) in self.values.drain(..) {
                disk.write(&[], s.as_deref(), &v)?;
            }
            self.disk = Some(disk);
        }
        Ok(())
    }

    pub(crate) fn finish(self) -> Result<ReduceGroup> {
        let storage = match self.disk {
            Some(disk) => Storage::Disk(disk.finish()?),
            None => Storage::Memory(self.values),
        };
        Ok(ReduceGroup {
            key: self.key,
            storage,
            len: self.len,
            bytes: self.bytes,
            passes: Cell::new(0),
        })
    }
}
