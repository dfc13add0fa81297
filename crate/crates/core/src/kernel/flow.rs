//! Stage inputs and outputs: a list of segments (one per mapper split or
//! reducer), each held in memory until it outgrows the memory budget and
//! then streamed to a temporary file.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use super::record::{new_temp_file, read_varint};
use crate::codec::{put_varint, Record};
use crate::error::{Error, Result};

enum Segment {
    Memory { data: Vec<u8>, count: u64 },
    Spilled { file: NamedTempFile, count: u64, bytes: u64 },
}

impl Segment {
    fn count(&self) -> u64 {
        match self {
            Segment::Memory { count, .. } | Segment::Spilled { count, .. } => *count,
        }
    }

    fn bytes(&self) -> u64 {
        match self {
            Segment::Memory { data, .. } => data.len() as u64,
            Segment::Spilled { bytes, .. } => *bytes,
        }
    }
}

/// A partitioned stream of encoded records.
pub struct RecordSet<T> {
    segments: Vec<Segment>,
    _marker: PhantomData<fn() -> T>,
}

impl<T> std::fmt::Debug for RecordSet<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RecordSet")
            .field("segments", &self.segments.len())
            .field("len", &self.segments.iter().map(Segment::count).sum::<u64>())
            .finish()
    }
}

impl<T: Record> RecordSet<T> {
    pub fn empty() -> Self {
        Self {
            segments: Vec::new(),
            _marker: PhantomData,
        }
    }

    /// Splits `items` into `splits` contiguous in-memory segments.
    pub fn from_vec(items: Vec<T>, splits: usize) -> Self {
        let splits = splits.max(1);
        let per = items.len().div_ceil(splits).max(1);
        let mut segments = Vec::with_capacity(splits);
        let mut iter = items.into_iter().peekable();
        for _ in 0..splits {
            let mut data = Vec::new();
            let mut scratch = Vec::new();
            let mut count = 0u64;
            for item in iter.by_ref().take(per) {
                scratch.clear();
                item.encode(&mut scratch);
                put_varint(&mut data, scratch.len() as u64);
                data.extend_from_slice(&scratch);
                count += 1;
            }
            segments.push(Segment::Memory { data, count });
        }
        Self {
            segments,
            _marker: PhantomData,
        }
    }

    pub(crate) fn from_segments(segments: Vec<SegmentHandle>) -> Self {
        Self {
            segments: segments.into_iter().map(|s| s.0).collect(),
            _marker: PhantomData,
        }
    }

    pub fn len(&self) -> u64 {
        self.segments.iter().map(Segment::count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Encoded size including framing.
    pub fn byte_len(&self) -> u64 {
        self.segments.iter().map(Segment::bytes).sum()
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn spilled_segments(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| matches!(s, Segment::Spilled { .. }))
            .count()
    }

    pub fn segment_iter(&self, index: usize) -> Result<SegmentIter<'_, T>> {
        let inner = match &self.segments[index] {
            Segment::Memory { data, .. } => Source::Memory(data.as_slice()),
            Segment::Spilled { file, .. } => {
                Source::File(BufReader::new(File::open(file.path())?), Vec::new())
            }
        };
        Ok(SegmentIter {
            inner,
            _marker: PhantomData,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<T>> + '_ {
        (0..self.segments.len()).flat_map(move |i| -> Box<dyn Iterator<Item = Result<T>> + '_> {
            match self.segment_iter(i) {
                Ok(it) => Box::new(it),
                Err(e) => Box::new(std::iter::once(Err(e))),
            }
        })
    }

    pub fn to_vec(&self) -> Result<Vec<T>> {
        self.iter().collect()
    }
}

enum Source<'a> {
    Memory(&'a [u8]),
    File(BufReader<File>, Vec<u8>),
}

pub struct SegmentIter<'a, T> {
    inner: Source<'a>,
    _marker: PhantomData<fn() -> T>,
}

impl<T: Record> Iterator for SegmentIter<'_, T> {
    type Item = Result<T>;

    fn next(&mut self) -> Option<Result<T>> {
        match &mut self.inner {
            Source::Memory(data) => {
                if data.is_empty() {
                    return None;
                }
                let item = crate::codec::get_bytes(data).and_then(T::from_bytes);
                if item.is_err() {
                    *data = &[];
                }
                Some(item)
            }
            Source::File(reader, buf) => {
                let len = match read_varint(reader) {
                    Ok(None) => return None,
                    Ok(Some(len)) => len,
                    Err(e) => return Some(Err(e)),
                };
                buf.resize(len as usize, 0);
                if let Err(e) = reader.read_exact(buf) {
                    return Some(Err(Error::decode(format!("truncated segment record: {e}"))));
                }
                Some(T::from_bytes(buf))
            }
        }
    }
}

pub(crate) struct SegmentHandle(Segment);

/// Accumulates one output segment, spilling to disk above `budget` bytes.
pub(crate) struct SegmentWriter<T> {
    data: Vec<u8>,
    spill: Option<BufWriter<NamedTempFile>>,
    scratch: Vec<u8>,
    count: u64,
    spilled_bytes: u64,
    budget: u64,
    dir: Option<PathBuf>,
    _marker: PhantomData<fn(T)>,
}

impl<T: Record> SegmentWriter<T> {
    pub(crate) fn new(budget: u64, dir: Option<&Path>) -> Self {
        Self {
            data: Vec::new(),
            spill: None,
            scratch: Vec::new(),
            count: 0,
            spilled_bytes: 0,
            budget,
            dir: dir.map(Path::to_path_buf),
            _marker: PhantomData,
        }
    }

    pub(crate) fn push(&mut self, item: &T) -> Result<()> {
        self.scratch.clear();
        item.encode(&mut self.scratch);
        put_varint(&mut self.data, self.scratch.len() as u64);
        self.data.extend_from_slice(&self.scratch);
        self.count += 1;
        if self.data.len() as u64 > self.budget {
            self.flush_to_disk()?;
        }
        Ok(())
    }

    fn flush_to_disk(&mut self) -> Result<()> {
        if self.spill.is_none() {
            self.spill = Some(BufWriter::new(new_temp_file(self.dir.as_deref())?));
        }
        let out = self.spill.as_mut().expect("spill file just created");
        out.write_all(&self.data)?;
        self.spilled_bytes += self.data.len() as u64;
        self.data.clear();
        Ok(())
    }

    pub(crate) fn count(&self) -> u64 {
        self.count
    }

    pub(crate) fn finish(mut self) -> Result<SegmentHandle> {
        if self.spill.is_none() {
            return Ok(SegmentHandle(Segment::Memory {
                data: self.data,
                count: self.count,
            }));
        }
        self.flush_to_disk()?;
        let file = self
            .spill
            .take()
            .expect("spill present")
            .into_inner()
            .map_err(|e| Error::Io(e.into_error()))?;
        Ok(SegmentHandle(Segment::Spilled {
            file,
            count: self.count,
            bytes: self.spilled_bytes,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_splits_and_iterates_in_order() {
        let items: Vec<u64> = (0..10).collect();
        let set = RecordSet::from_vec(items.clone(), 3);
        assert_eq!(set.num_segments(), 3);
        assert_eq!(set.len(), 10);
        assert_eq!(set.to_vec().unwrap(), items);
        let empty = RecordSet::<u64>::from_vec(Vec::new(), 4);
        assert_eq!(empty.num_segments(), 4);
        assert!(empty.is_empty());
    }

    #[test]
    fn writer_spills_above_budget_and_reads_back() {
        let mut w = SegmentWriter::<Vec<u8>>::new(64, None);
        let items: Vec<Vec<u8>> = (0..50u8).map(|i| vec![i; 7]).collect();
        for it in &items {
            w.push(it).unwrap();
        }
        assert_eq!(w.count(), 50);
        let set = RecordSet::<Vec<u8>>::from_segments(vec![w.finish().unwrap()]);
        assert_eq!(set.spilled_segments(), 1);
        assert_eq!(set.to_vec().unwrap(), items);
        // A second pass sees the same data.
        assert_eq!(set.to_vec().unwrap(), items);
    }
}
