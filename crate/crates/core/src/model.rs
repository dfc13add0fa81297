//! Domain types shared by every pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};

use crate::codec::{get_bytes, get_varint, put_bytes, put_varint, Record};
use crate::error::{Error, Result};

macro_rules! opaque_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(Vec<u8>);

        impl $name {
            pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self> {
                let bytes = bytes.into();
                if bytes.is_empty() {
                    return Err(Error::InvalidConfig(concat!(stringify!($name), " must be non-empty").into()));
                }
                Ok(Self(bytes))
            }

            pub fn as_bytes(&self) -> &[u8] {
                &self.0
            }
        }

        /// Panics on the empty string.
        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self::new(s).expect(concat!(stringify!($name), " must be non-empty"))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&String::from_utf8_lossy(&self.0))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({:?})", stringify!($name), String::from_utf8_lossy(&self.0))
            }
        }

        impl Record for $name {
            fn encode(&self, out: &mut Vec<u8>) {
                put_bytes(out, &self.0);
            }
            fn decode(input: &mut &[u8]) -> Result<Self> {
                let bytes = get_bytes(input)?;
                if bytes.is_empty() {
                    return Err(Error::decode(concat!("empty ", stringify!($name))));
                }
                Ok(Self(bytes.to_vec()))
            }
        }
    };
}

opaque_id!(
    /// An alphabet element, e.g. a cookie. Ordered byte-lexicographically.
    ElementId
);
opaque_id!(
    /// A multiset identifier, e.g. an IP. Ordered byte-lexicographically.
    MultisetId
);

/// A multiset: sparse element → multiplicity map with only positive entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Multiset {
    pub id: MultisetId,
    elements: BTreeMap<ElementId, u64>,
}

impl Multiset {
    pub fn new(id: MultisetId) -> Self {
        Self {
            id,
            elements: BTreeMap::new(),
        }
    }

    /// Builds a multiset, summing repeated elements.
    pub fn from_pairs(
        id: MultisetId,
        pairs: impl IntoIterator<Item = (ElementId, u64)>,
    ) -> Result<Self> {
        let mut m = Self::new(id);
        for (element, multiplicity) in pairs {
            m.add(element, multiplicity)?;
        }
        Ok(m)
    }

    pub fn add(&mut self, element: ElementId, multiplicity: u64) -> Result<()> {
        if multiplicity == 0 {
            return Err(Error::InvalidConfig(format!(
                "multiplicity of `{element}` in `{}` must be positive",
                self.id
            )));
        }
        let slot = self.elements.entry(element).or_insert(0);
        *slot = slot
            .checked_add(multiplicity)
            .ok_or_else(|| Error::InvalidConfig("multiplicity overflows u64".into()))?;
        Ok(())
    }

    pub fn multiplicity(&self, element: &ElementId) -> u64 {
        self.elements.get(element).copied().unwrap_or(0)
    }

    /// Σ f over all elements.
    pub fn cardinality(&self) -> u64 {
        self.elements.values().sum()
    }

    /// Number of distinct elements, |U(M)|.
    pub fn underlying_cardinality(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ElementId, u64)> + '_ {
        self.elements.iter().map(|(e, f)| (e, *f))
    }

    pub fn elements(&self) -> impl Iterator<Item = &ElementId> + '_ {
        self.elements.keys()
    }

    /// The underlying set viewed as a multiset with every multiplicity 1.
    pub fn underlying_set(&self) -> Multiset {
        Multiset {
            id: self.id.clone(),
            elements: self.elements.keys().map(|e| (e.clone(), 1)).collect(),
        }
    }
}

impl Record for Multiset {
    fn encode(&self, out: &mut Vec<u8>) {
        self.id.encode(out);
        put_varint(out, self.elements.len() as u64);
        for (e, f) in &self.elements {
            e.encode(out);
            put_varint(out, *f);
        }
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        let id = MultisetId::decode(input)?;
        let n = get_varint(input)?;
        let mut elements = BTreeMap::new();
        for _ in 0..n {
            let e = ElementId::decode(input)?;
            let f = get_varint(input)?;
            if f == 0 {
                return Err(Error::decode("zero multiplicity in encoded multiset"));
            }
            elements.insert(e, f);
        }
        Ok(Self { id, elements })
    }
}

/// Expands a multiset into its set representation: `(a, j)` for `1 ≤ j ≤ f(a)`.
pub fn expand_to_set(m: &Multiset) -> BTreeSet<(ElementId, u64)> {
    m.iter()
        .flat_map(|(e, f)| (1..=f).map(move |j| (e.clone(), j)))
        .collect()
}

/// Orders two distinct ids canonically, smaller first.
pub fn canonical_pair(a: MultisetId, b: MultisetId) -> Result<(MultisetId, MultisetId)> {
    match a.cmp(&b) {
        std::cmp::Ordering::Less => Ok((a, b)),
        std::cmp::Ordering::Greater => Ok((b, a)),
        std::cmp::Ordering::Equal => Err(Error::SelfPair(a.to_string())),
    }
}

/// One `⟨M_i, m_{i,k}⟩` input tuple.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RawTuple {
    pub id: MultisetId,
    pub element: ElementId,
    pub multiplicity: u64,
}

impl RawTuple {
    pub fn new(id: impl Into<MultisetId>, element: impl Into<ElementId>, multiplicity: u64) -> Self {
        Self {
            id: id.into(),
            element: element.into(),
            multiplicity,
        }
    }
}

impl Record for RawTuple {
    fn encode(&self, out: &mut Vec<u8>) {
        self.id.encode(out);
        self.element.encode(out);
        put_varint(out, self.multiplicity);
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        Ok(Self {
            id: MultisetId::decode(input)?,
            element: ElementId::decode(input)?,
            multiplicity: get_varint(input)?,
        })
    }
}

/// Partial results of the unilateral functions of a measure, Uni(M).
#[derive(Clone, Debug, PartialEq, PartialOrd, Default)]
pub struct UniVector(pub Vec<f64>);

impl UniVector {
    pub fn zeros(arity: usize) -> Self {
        Self(vec![0.0; arity])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn add_assign(&mut self, other: &[f64]) {
        for (acc, v) in self.0.iter_mut().zip(other) {
            *acc += *v;
        }
    }
}

impl Record for UniVector {
    fn encode(&self, out: &mut Vec<u8>) {
        self.0.encode(out);
    }
    fn decode(input: &mut &[u8]) -> Result<Self> {
        Vec::<f64>::decode(input).map(Self)
    }
}

/// `⟨M_i, Uni(M_i), m_{i,k}⟩`: output of the joining phase.
#[derive(Clone, Debug, PartialEq, PartialOrd)]
pub struct JoinedTuple {
    pub id: MultisetId,
    pub uni: UniVector,
    pub element: ElementId,
    pub multiplicity: u64,
}

impl Record for JoinedTuple {
    fn encode(&self, out: &mut Vec<u8>) {
        self.id.encode(out);
        self.uni.encode(out);
        self.element.encode(out);
        put_varint(out, self.multiplicity);
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        Ok(Self {
            id: MultisetId::decode(input)?,
            uni: UniVector::decode(input)?,
            element: ElementId::decode(input)?,
            multiplicity: get_varint(input)?,
        })
    }
}

/// A result pair with `left < right`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarPair {
    pub left: MultisetId,
    pub right: MultisetId,
    pub similarity: f64,
}

impl Record for SimilarPair {
    fn encode(&self, out: &mut Vec<u8>) {
        self.left.encode(out);
        self.right.encode(out);
        self.similarity.encode(out);
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        Ok(Self {
            left: MultisetId::decode(input)?,
            right: MultisetId::decode(input)?,
            similarity: f64::decode(input)?,
        })
    }
}

pub fn sort_pairs(pairs: &mut [SimilarPair]) {
    pairs.sort_by(|a, b| (&a.left, &a.right).cmp(&(&b.left, &b.right)));
}

/// Writes `left \t right \t similarity` rows sorted by `(left, right)`.
pub fn write_pairs_tsv<W: Write>(mut out: W, pairs: &[SimilarPair]) -> Result<()> {
    let mut sorted: Vec<&SimilarPair> = pairs.iter().collect();
    sorted.sort_by(|a, b| (&a.left, &a.right).cmp(&(&b.left, &b.right)));
    for p in sorted {
        out.write_all(p.left.as_bytes())?;
        out.write_all(b"\t")?;
        out.write_all(p.right.as_bytes())?;
        writeln!(out, "\t{:.9}", p.similarity)?;
    }
    out.flush()?;
    Ok(())
}

pub fn pairs_to_tsv(pairs: &[SimilarPair]) -> String {
    let mut buf = Vec::new();
    write_pairs_tsv(&mut buf, pairs).expect("writing to a Vec cannot fail");
    String::from_utf8_lossy(&buf).into_owned()
}

/// Parses `multiset_id \t element \t multiplicity` lines, merging repeated
/// `(id, element)` lines by summing their multiplicities.
pub fn ingest_raw<R: BufRead>(reader: R) -> Result<Vec<RawTuple>> {
    let mut merged: BTreeMap<(MultisetId, ElementId), u64> = BTreeMap::new();
    for (idx, line) in reader.split(b'\n').enumerate() {
        let lineno = idx + 1;
        let mut line = line?;
        if line.last() == Some(&b'\r') {
            line.pop();
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&[u8]> = line.split(|b| *b == b'\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let id = MultisetId::new(fields[0]).map_err(|_| Error::Parse {
            line: lineno,
            message: "empty multiset id".into(),
        })?;
        let element = ElementId::new(fields[1]).map_err(|_| Error::Parse {
            line: lineno,
            message: "empty element".into(),
        })?;
        let text = std::str::from_utf8(fields[2]).map_err(|_| Error::Parse {
            line: lineno,
            message: "multiplicity is not UTF-8".into(),
        })?;
        let value: i128 = text.trim().parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("multiplicity `{text}` is not an integer"),
        })?;
        if value <= 0 {
            return Err(Error::NonPositiveMultiplicity { line: lineno, value });
        }
        let value = u64::try_from(value).map_err(|_| Error::Parse {
            line: lineno,
            message: format!("multiplicity {value} exceeds u64"),
        })?;
        let slot = merged.entry((id, element)).or_insert(0);
        *slot = slot.checked_add(value).ok_or_else(|| Error::Parse {
            line: lineno,
            message: "merged multiplicity overflows u64".into(),
        })?;
    }
    Ok(merged
        .into_iter()
        .map(|((id, element), multiplicity)| RawTuple {
            id,
            element,
            multiplicity,
        })
        .collect())
}

pub fn write_raw_tsv<W: Write>(mut out: W, tuples: &[RawTuple]) -> Result<()> {
    for t in tuples {
        out.write_all(t.id.as_bytes())?;
        out.write_all(b"\t")?;
        out.write_all(t.element.as_bytes())?;
        writeln!(out, "\t{}", t.multiplicity)?;
    }
    out.flush()?;
    Ok(())
}

/// A validated dataset: merged raw tuples sorted by `(id, element)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    tuples: Vec<RawTuple>,
}

impl Dataset {
    /// Merges duplicate `(id, element)` tuples and rejects zero multiplicities.
    pub fn from_tuples(tuples: impl IntoIterator<Item = RawTuple>) -> Result<Self> {
        let mut merged: BTreeMap<(MultisetId, ElementId), u64> = BTreeMap::new();
        for t in tuples {
            if t.multiplicity == 0 {
                return Err(Error::InvalidConfig(format!(
                    "tuple ({}, {}) has zero multiplicity",
                    t.id, t.element
                )));
            }
            let slot = merged.entry((t.id, t.element)).or_insert(0);
            *slot = slot
                .checked_add(t.multiplicity)
                .ok_or_else(|| Error::InvalidConfig("multiplicity overflows u64".into()))?;
        }
        Ok(Self {
            tuples: merged
                .into_iter()
                .map(|((id, element), multiplicity)| RawTuple {
                    id,
                    element,
                    multiplicity,
                })
                .collect(),
        })
    }

    pub fn from_multisets<'a>(multisets: impl IntoIterator<Item = &'a Multiset>) -> Result<Self> {
        Self::from_tuples(multisets.into_iter().flat_map(|m| {
            m.iter().map(move |(e, f)| RawTuple {
                id: m.id.clone(),
                element: e.clone(),
                multiplicity: f,
            })
        }))
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self> {
        Ok(Self {
            tuples: ingest_raw(reader)?,
        })
    }

    pub fn tuples(&self) -> &[RawTuple] {
        &self.tuples
    }

    pub fn into_tuples(self) -> Vec<RawTuple> {
        self.tuples
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Assembles whole multisets, ordered by id.
    pub fn multisets(&self) -> Vec<Multiset> {
        let mut out: Vec<Multiset> = Vec::new();
        for t in &self.tuples {
            match out.last_mut() {
                Some(m) if m.id == t.id => {
                    m.elements.insert(t.element.clone(), t.multiplicity);
                }
                _ => {
                    let mut m = Multiset::new(t.id.clone());
                    m.elements.insert(t.element.clone(), t.multiplicity);
                    out.push(m);
                }
            }
        }
        out
    }

    pub fn num_multisets(&self) -> usize {
        let mut n = 0;
        let mut last: Option<&MultisetId> = None;
        for t in &self.tuples {
            if last != Some(&t.id) {
                n += 1;
                last = Some(&t.id);
            }
        }
        n
    }

    pub fn write_tsv<W: Write>(&self, out: W) -> Result<()> {
        write_raw_tsv(out, &self.tuples)
    }
}
