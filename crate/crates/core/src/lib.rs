//! Exact all-pairs similarity joins for sets, multisets and vectors.
//!
//! The V-SMART-Join pipelines (a joining phase followed by a two-step
//! similarity phase) and the VCL prefix-filtering baseline run on an
//! embedded, deterministic map/shuffle/reduce [`kernel`]. The [`oracle`]
//! module provides brute-force ground truth and [`datagen`] produces skewed
//! synthetic inputs.

pub mod bench;
pub mod codec;
pub mod datagen;
pub mod error;
pub mod join;
pub mod kernel;
pub mod measures;
pub mod model;
pub mod oracle;
pub mod similarity;
pub mod stats;
pub mod vcl;

pub use error::{Error, Result};
pub use measures::{MeasureKind, NsmMeasure};
pub use model::{Dataset, ElementId, JoinedTuple, Multiset, MultisetId, RawTuple, SimilarPair};
