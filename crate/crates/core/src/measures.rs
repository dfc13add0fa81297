//! Nominal similarity measures expressed as a combining function over
//! aggregated per-element partial results.
//!
//! Every measure is a list of [`PartialSpec`]s plus a combining function `F`.
//! Unilateral partials depend on one operand only and are accumulated per
//! multiset into a [`UniVector`]; conjunctive partials vanish outside the
//! intersection and are accumulated per pair into a [`ConjVector`]. Partials
//! that need a scan of the union (disjunctive) are rejected at construction.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{Multiset, UniVector};

/// Per-element function of `(f_i, f_j)`.
pub type PartialFn = fn(u64, u64) -> f64;

/// `F(uni_i, uni_j, conj)`; `None` marks an undefined (zero-denominator) value.
pub type CombineFn = fn(&[f64], &[f64], &[f64]) -> Option<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartialKind {
    UnilateralLeft,
    UnilateralRight,
    Conjunctive,
    Disjunctive,
}

/// Only summation is implemented; the tag is kept so the descriptor stays
/// faithful to the general aggregator form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Aggregator {
    Sum,
}

#[derive(Clone, Copy, Debug)]
pub struct PartialSpec {
    pub label: &'static str,
    pub kind: PartialKind,
    pub g: PartialFn,
    pub aggregator: Aggregator,
}

impl PartialSpec {
    pub const fn new(label: &'static str, kind: PartialKind, g: PartialFn) -> Self {
        Self {
            label,
            kind,
            g,
            aggregator: Aggregator::Sum,
        }
    }
}

/// Conjunctive partial results for one pair.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ConjVector(pub Vec<f64>);

impl ConjVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MeasureKind {
    Ruzicka,
    Jaccard,
    Dice,
    CosineMultiset,
    CosineVector,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 5] = [
        MeasureKind::Ruzicka,
        MeasureKind::Jaccard,
        MeasureKind::Dice,
        MeasureKind::CosineMultiset,
        MeasureKind::CosineVector,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeasureKind::Ruzicka => "ruzicka",
            MeasureKind::Jaccard => "jaccard",
            MeasureKind::Dice => "dice",
            MeasureKind::CosineMultiset => "cosine-multiset",
            MeasureKind::CosineVector => "cosine-vector",
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MeasureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::InvalidMeasure(format!(
                    "unknown measure `{s}` (expected ruzicka | jaccard | dice | cosine-multiset | cosine-vector)"
                ))
            })
    }
}

#[derive(Clone, Debug)]
pub struct NsmMeasure {
    name: String,
    kind: Option<MeasureKind>,
    uni_specs: Vec<PartialSpec>,
    conj_specs: Vec<PartialSpec>,
    combine: CombineFn,
}

// Operand values used to probe the class contracts of a partial function.
const PROBES: [u64; 6] = [0, 1, 2, 3, 7, 100];

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

impl NsmMeasure {
    /// Builds a measure from partial specs in formula order.
    ///
    /// Unilateral-left specs define the [`UniVector`] layout. Each
    /// unilateral-right spec must mirror a left spec (the same function of the
    /// other operand); it is then served by the other multiset's UniVector.
    pub fn new(name: impl Into<String>, partials: Vec<PartialSpec>, combine: CombineFn) -> Result<Self> {
        let name = name.into();
        let mut uni_specs = Vec::new();
        let mut right_specs = Vec::new();
        let mut conj_specs = Vec::new();
        for spec in partials {
            match spec.kind {
                PartialKind::Disjunctive => {
                    return Err(Error::InvalidMeasure(format!(
                        "{name}: disjunctive partial `{}` is not supported",
                        spec.label
                    )))
                }
                PartialKind::UnilateralLeft => {
                    let depends_on_right = PROBES.iter().any(|&x| {
                        PROBES
                            .iter()
                            .any(|&y| !same((spec.g)(x, y), (spec.g)(x, 0)))
                    });
                    if depends_on_right {
                        return Err(Error::InvalidMeasure(format!(
                            "{name}: unilateral-left partial `{}` depends on the right operand",
                            spec.label
                        )));
                    }
                    uni_specs.push(spec);
                }
                PartialKind::UnilateralRight => right_specs.push(spec),
                PartialKind::Conjunctive => {
                    let leaks = PROBES
                        .iter()
                        .any(|&x| (spec.g)(x, 0) != 0.0 || (spec.g)(0, x) != 0.0);
                    if leaks {
                        return Err(Error::InvalidMeasure(format!(
                            "{name}: conjunctive partial `{}` is non-zero outside the intersection",
                            spec.label
                        )));
                    }
                    conj_specs.push(spec);
                }
            }
        }
        for right in right_specs {
            let mirrored = uni_specs.iter().any(|left| {
                PROBES.iter().all(|&x| {
                    PROBES
                        .iter()
                        .all(|&y| same((left.g)(x, y), (right.g)(y, x)))
                })
            });
            if !mirrored {
                return Err(Error::InvalidMeasure(format!(
                    "{name}: unilateral-right partial `{}` has no mirrored left partial",
                    right.label
                )));
            }
        }
        if conj_specs.is_empty() {
            return Err(Error::InvalidMeasure(format!(
                "{name}: at least one conjunctive partial is required"
            )));
        }
        Ok(Self {
            name,
            kind: None,
            uni_specs,
            conj_specs,
            combine,
        })
    }

    pub fn builtin(kind: MeasureKind) -> Self {
        use PartialKind::*;
        const IDENT_L: PartialSpec = PartialSpec::new("|M_i|", UnilateralLeft, |fi, _| fi as f64);
        const IDENT_R: PartialSpec = PartialSpec::new("|M_j|", UnilateralRight, |_, fj| fj as f64);
        const MIN: PartialSpec =
            PartialSpec::new("min", Conjunctive, |fi, fj| fi.min(fj) as f64);

        let (partials, combine): (Vec<PartialSpec>, CombineFn) = match kind {
            MeasureKind::Ruzicka => (vec![MIN, IDENT_L, IDENT_R], combine_ruzicka),
            MeasureKind::Jaccard => (
                vec![
                    PartialSpec::new("|U∩U|", Conjunctive, |fi, fj| {
                        if fi > 0 && fj > 0 { 1.0 } else { 0.0 }
                    }),
                    PartialSpec::new("|U(M_i)|", UnilateralLeft, |fi, _| {
                        if fi > 0 { 1.0 } else { 0.0 }
                    }),
                    PartialSpec::new("|U(M_j)|", UnilateralRight, |_, fj| {
                        if fj > 0 { 1.0 } else { 0.0 }
                    }),
                ],
                combine_ruzicka,
            ),
            MeasureKind::Dice => (vec![MIN, IDENT_L, IDENT_R], combine_dice),
            MeasureKind::CosineMultiset => (vec![MIN, IDENT_L, IDENT_R], combine_cosine_multiset),
            MeasureKind::CosineVector => (
                vec![
                    PartialSpec::new("dot", Conjunctive, |fi, fj| (fi as f64) * (fj as f64)),
                    PartialSpec::new("‖M_i‖²", UnilateralLeft, |fi, _| (fi as f64) * (fi as f64)),
                    PartialSpec::new("‖M_j‖²", UnilateralRight, |_, fj| (fj as f64) * (fj as f64)),
                ],
                combine_cosine_vector,
            ),
        };
        let mut m = Self::new(kind.name(), partials, combine).expect("built-in measures are well formed");
        m.kind = Some(kind);
        m
    }

    pub fn by_name(name: &str) -> Result<Self> {
        name.parse().map(Self::builtin)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> Option<MeasureKind> {
        self.kind
    }

    pub fn uni_arity(&self) -> usize {
        self.uni_specs.len()
    }

    pub fn conj_arity(&self) -> usize {
        self.conj_specs.len()
    }

    /// Unilateral partials contributed by one element of multiplicity `f`.
    pub fn uni_partials(&self, f: u64) -> Vec<f64> {
        self.uni_specs.iter().map(|s| (s.g)(f, 0)).collect()
    }

    /// Conjunctive partials contributed by one shared element.
    pub fn conj_partials(&self, f_left: u64, f_right: u64) -> Vec<f64> {
        self.conj_specs.iter().map(|s| (s.g)(f_left, f_right)).collect()
    }

    /// Uni(M) in a single pass over the stored elements.
    pub fn compute_uni(&self, m: &Multiset) -> UniVector {
        let mut uni = UniVector::zeros(self.uni_arity());
        for (_, f) in m.iter() {
            for (acc, spec) in uni.0.iter_mut().zip(&self.uni_specs) {
                *acc += (spec.g)(f, 0);
            }
        }
        uni
    }

    /// Conj(M_i, M_j) from a scan of the intersection only.
    pub fn compute_conj(&self, mi: &Multiset, mj: &Multiset) -> ConjVector {
        let (small, large, swapped) = if mi.underlying_cardinality() <= mj.underlying_cardinality() {
            (mi, mj, false)
        } else {
            (mj, mi, true)
        };
        let mut conj = vec![0.0; self.conj_arity()];
        for (e, f_small) in small.iter() {
            let f_large = large.multiplicity(e);
            if f_large == 0 {
                continue;
            }
            let (fi, fj) = if swapped { (f_large, f_small) } else { (f_small, f_large) };
            for (acc, spec) in conj.iter_mut().zip(&self.conj_specs) {
                *acc += (spec.g)(fi, fj);
            }
        }
        ConjVector(conj)
    }

    pub fn similarity(&self, uni_i: &UniVector, uni_j: &UniVector, conj: &ConjVector) -> Result<f64> {
        if uni_i.len() != self.uni_arity() || uni_j.len() != self.uni_arity() || conj.0.len() != self.conj_arity() {
            return Err(Error::Internal(format!(
                "{}: partial vector arity mismatch (uni {}/{}, conj {}; expected {}, {})",
                self.name,
                uni_i.len(),
                uni_j.len(),
                conj.0.len(),
                self.uni_arity(),
                self.conj_arity()
            )));
        }
        (self.combine)(uni_i.values(), uni_j.values(), conj.values()).ok_or_else(|| {
            Error::UndefinedSimilarity(format!(
                "{}: zero denominator for uni {:?} / {:?}",
                self.name,
                uni_i.values(),
                uni_j.values()
            ))
        })
    }

    pub fn full_similarity(&self, mi: &Multiset, mj: &Multiset) -> Result<f64> {
        self.similarity(&self.compute_uni(mi), &self.compute_uni(mj), &self.compute_conj(mi, mj))
            .map_err(|e| match e {
                Error::UndefinedSimilarity(msg) => {
                    Error::UndefinedSimilarity(format!("pair ({}, {}): {msg}", mi.id, mj.id))
                }
                other => other,
            })
    }
}

fn combine_ruzicka(ui: &[f64], uj: &[f64], c: &[f64]) -> Option<f64> {
    let denom = ui[0] + uj[0] - c[0];
    (denom > 0.0).then(|| c[0] / denom)
}

fn combine_dice(ui: &[f64], uj: &[f64], c: &[f64]) -> Option<f64> {
    let denom = ui[0] + uj[0];
    (denom > 0.0).then(|| 2.0 * c[0] / denom)
}

fn combine_cosine_multiset(ui: &[f64], uj: &[f64], c: &[f64]) -> Option<f64> {
    let denom = (ui[0] * uj[0]).sqrt();
    (denom > 0.0).then(|| c[0] / denom)
}

fn combine_cosine_vector(ui: &[f64], uj: &[f64], c: &[f64]) -> Option<f64> {
    let denom = ui[0].sqrt() * uj[0].sqrt();
    (denom > 0.0).then(|| c[0] / denom)
}
