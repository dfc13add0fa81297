use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use tempfile::NamedTempFile;

use crate::codec::put_varint;
use crate::error::{Error, Result};

/// A shuffled tuple: grouping key, optional secondary sort key, payload.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct KvRecord {
    pub key: Vec<u8>,
    pub secondary: Option<Vec<u8>>,
    pub value: Vec<u8>,
}

impl KvRecord {
    pub fn new(key: Vec<u8>, value: Vec<u8>) -> Self {
        Self {
            key,
            secondary: None,
            value,
        }
    }

    pub fn with_secondary(key: Vec<u8>, secondary: Vec<u8>, value: Vec<u8>) -> Self {
        Self {
            key,
            secondary: Some(secondary),
            value,
        }
    }

    /// Payload bytes: key, secondary key and value.
    pub fn byte_len(&self) -> u64 {
        (self.key.len() + self.secondary.as_ref().map_or(0, Vec::len) + self.value.len()) as u64
    }
}

pub(crate) const SPILL_MAGIC: &[u8; 4] = b"VSJS";
pub(crate) const SPILL_VERSION: u8 = 1;

pub(crate) fn new_temp_file(dir: Option<&Path>) -> io::Result<NamedTempFile> {
    let mut builder = tempfile::Builder::new();
    builder.prefix("vsj-");
    match dir {
        Some(dir) => builder.tempfile_in(dir),
        None => builder.tempfile(),
    }
}

/// Reads a varint from a stream; `Ok(None)` on a clean end of stream.
pub(crate) fn read_varint<R: Read>(r: &mut R) -> Result<Option<u64>> {
    let mut value = 0u64;
    let mut shift = 0u32;
    let mut byte = [0u8; 1];
    loop {
        match r.read(&mut byte) {
            Ok(0) if shift == 0 => return Ok(None),
            Ok(0) => return Err(Error::decode("truncated varint in stream")),
            Ok(_) => {}
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
        value |= u64::from(byte[0] & 0x7f) << shift;
        if byte[0] & 0x80 == 0 {
            return Ok(Some(value));
        }
        shift += 7;
        if shift > 63 {
            return Err(Error::decode("varint too long in stream"));
        }
    }
}

fn read_exact_vec<R: Read>(r: &mut R, len: u64, what: &str) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)
        .map_err(|e| Error::decode(format!("truncated {what}: {e}")))?;
    Ok(buf)
}

/// Writes a versioned run of length-prefixed key/secondary/value triples.
pub(crate) struct SpillWriter {
    out: BufWriter<NamedTempFile>,
    scratch: Vec<u8>,
    pub(crate) bytes: u64,
}

impl SpillWriter {
    pub(crate) fn create(dir: Option<&Path>) -> Result<Self> {
        let mut out = BufWriter::new(new_temp_file(dir)?);
        out.write_all(SPILL_MAGIC)?;
        out.write_all(&[SPILL_VERSION])?;
        Ok(Self {
            out,
            scratch: Vec::new(),
            bytes: 5,
        })
    }

    pub(crate) fn write(&mut self, key: &[u8], secondary: Option<&[u8]>, value: &[u8]) -> Result<()> {
        self.scratch.clear();
        put_varint(&mut self.scratch, key.len() as u64);
        self.scratch.extend_from_slice(key);
        match secondary {
            Some(sec) => {
                self.scratch.push(1);
                put_varint(&mut self.scratch, sec.len() as u64);
                self.scratch.extend_from_slice(sec);
            }
            None => self.scratch.push(0),
        }
        put_varint(&mut self.scratch, value.len() as u64);
        self.scratch.extend_from_slice(value);
        self.out.write_all(&self.scratch)?;
        self.bytes += self.scratch.len() as u64;
        Ok(())
    }

    pub(crate) fn write_record(&mut self, rec: &KvRecord) -> Result<()> {
        self.write(&rec.key, rec.secondary.as_deref(), &rec.value)
    }

    pub(crate) fn finish(self) -> Result<NamedTempFile> {
        self.out.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

pub(crate) struct SpillReader {
    input: BufReader<File>,
}

impl SpillReader {
    pub(crate) fn open(path: &Path) -> Result<Self> {
        let mut input = BufReader::new(File::open(path)?);
        let mut header = [0u8; 5];
        input
            .read_exact(&mut header)
            .map_err(|e| Error::decode(format!("spill header: {e}")))?;
        if &header[..4] != SPILL_MAGIC {
            return Err(Error::decode("bad spill file magic"));
        }
        if header[4] != SPILL_VERSION {
            return Err(Error::decode(format!(
                "unsupported spill file version {}",
                header[4]
            )));
        }
        Ok(Self { input })
    }

    fn read_one(&mut self) -> Result<Option<KvRecord>> {
        let Some(key_len) = read_varint(&mut self.input)? else {
            return Ok(None);
        };
        let key = read_exact_vec(&mut self.input, key_len, "spill key")?;
        let mut flag = [0u8; 1];
        self.input
            .read_exact(&mut flag)
            .map_err(|e| Error::decode(format!("truncated spill flag: {e}")))?;
        let secondary = match flag[0] {
            0 => None,
            1 => {
                let len = read_varint(&mut self.input)?
                    .ok_or_else(|| Error::decode("truncated secondary length"))?;
                Some(read_exact_vec(&mut self.input, len, "spill secondary")?)
            }
            other => return Err(Error::decode(format!("bad secondary flag {other}"))),
        };
        let value_len =
            read_varint(&mut self.input)?.ok_or_else(|| Error::decode("truncated value length"))?;
        let value = read_exact_vec(&mut self.input, value_len, "spill value")?;
        Ok(Some(KvRecord {
            key,
            secondary,
            value,
        }))
    }
}

impl Iterator for SpillReader {
    type Item = Result<KvRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        self.read_one().transpose()
    }
}
