//! Compact binary encoding for records that cross a shuffle or a stage
//! boundary. Integers are LEB128 varints, floats are little-endian IEEE-754,
//! byte strings are length-prefixed.

use crate::error::{Error, Result};

/// A value that can be serialized into kernel payloads.
pub trait Record: Sized + Send + Sync {
    fn encode(&self, out: &mut Vec<u8>);

    /// Decodes one value from the front of `input`, advancing it.
    fn decode(input: &mut &[u8]) -> Result<Self>;

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode(&mut out);
        out
    }

    /// Decodes a value that must occupy all of `bytes`.
    fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let value = Self::decode(&mut bytes)?;
        if !bytes.is_empty() {
            return Err(Error::decode(format!(
                "{} trailing bytes after record",
                bytes.len()
            )));
        }
        Ok(value)
    }
}

pub fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

pub fn get_varint(input: &mut &[u8]) -> Result<u64> {
    let mut value = 0u64;
    let mut shift = 0u32;
    loop {
        let (&byte, rest) = input
            .split_first()
            .ok_or_else(|| Error::decode("truncated varint"))?;
        *input = rest;
        if shift == 63 && byte > 1 {
            return Err(Error::decode("varint overflows u64"));
        }
        value |= u64::from(byte & 0x7f) << shift;
        if byte & 0x80 == 0 {
            return Ok(value);
        }
        shift += 7;
        if shift > 63 {
            return Err(Error::decode("varint too long"));
        }
    }
}

pub fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    put_varint(out, bytes.len() as u64);
    out.extend_from_slice(bytes);
}

pub fn get_bytes<'a>(input: &mut &'a [u8]) -> Result<&'a [u8]> {
    let len = get_varint(input)? as usize;
    if input.len() < len {
        return Err(Error::decode(format!(
            "byte string of length {len} truncated to {}",
            input.len()
        )));
    }
    let (head, rest) = input.split_at(len);
    *input = rest;
    Ok(head)
}

pub fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn get_f64(input: &mut &[u8]) -> Result<f64> {
    if input.len() < 8 {
        return Err(Error::decode("truncated f64"));
    }
    let (head, rest) = input.split_at(8);
    *input = rest;
    Ok(f64::from_le_bytes(head.try_into().expect("8 bytes")))
}

pub fn get_u8(input: &mut &[u8]) -> Result<u8> {
    let (&byte, rest) = input
        .split_first()
        .ok_or_else(|| Error::decode("truncated tag byte"))?;
    *input = rest;
    Ok(byte)
}

impl Record for u64 {
    fn encode(&self, out: &mut Vec<u8>) {
        put_varint(out, *self);
    }
    fn decode(input: &mut &[u8]) -> Result<Self> {
        get_varint(input)
    }
}

impl Record for f64 {
    fn encode(&self, out: &mut Vec<u8>) {
        put_f64(out, *self);
    }
    fn decode(input: &mut &[u8]) -> Result<Self> {
        get_f64(input)
    }
}

impl Record for bool {
    fn encode(&self, out: &mut Vec<u8>) {
        out.push(u8::from(*self));
    }
    fn decode(input: &mut &[u8]) -> Result<Self> {
        match get_u8(input)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::decode(format!("invalid bool tag {other}"))),
        }
    }
}

impl Record for Vec<u8> {
    fn encode(&self, out: &mut Vec<u8>) {
        put_bytes(out, self);
    }
    fn decode(input: &mut &[u8]) -> Result<Self> {
        get_bytes(input).map(<[u8]>::to_vec)
    }
}

impl Record for Vec<f64> {
    fn encode(&self, out: &mut Vec<u8>) {
        put_varint(out, self.len() as u64);
        for v in self {
            put_f64(out, *v);
        }
    }
    fn decode(input: &mut &[u8]) -> Result<Self> {
        let len = get_varint(input)? as usize;
        if input.len() < len.saturating_mul(8) {
            return Err(Error::decode("truncated f64 vector"));
        }
        (0..len).map(|_| get_f64(input)).collect()
    }
}

impl<A: Record, B: Record> Record for (A, B) {
    fn encode(&self, out: &mut Vec<u8>) {
        self.0.encode(out);
        self.1.encode(out);
    }
    fn decode(input: &mut &[u8]) -> Result<Self> {
        Ok((A::decode(input)?, B::decode(input)?))
    }
}

impl<A: Record, B: Record, C: Record> Record for (A, B, C) {
    fn encode(&self, out: &mut Vec<u8>) {
        self.0.encode(out);
        self.1.encode(out);
        self.2.encode(out);
    }
    fn decode(input: &mut &[u8]) -> Result<Self> {
        Ok((A::decode(input)?, B::decode(input)?, C::decode(input)?))
    }
}
