//! Self-contained toolkit for comparing attention alignment score functions.
//!
//! The crate provides, from the bottom up:
//!
//! * [`matrix`] / [`rng`] / [`graph`]: a dense `f64` matrix type, a fully
//!   pinned deterministic PRNG, and a small reverse-mode differentiation
//!   engine.
//! * [`align`]: the alignment score functions (dot, scaled dot, the general
//!   bilinear family with query/key orientation variants, cosine).
//! * [`attention`]: cross attention, scored read-unit attention, multi-head
//!   self attention and a residual encoder block, all parameterized by an
//!   alignment spec.
//! * [`tasks`]: deterministic synthetic retrieval / counting / pointer task
//!   generators with planted ground truth.
//! * [`models`]: three tiny trainable models (matcher, counting reader,
//!   pointer), triplet and cross-entropy losses, Adam, and checkpointing.
//! * [`metrics`]: recall@K, Rsum, soft QA scoring, Levenshtein and ANLS.
//! * [`gradcheck`]: central finite-difference gradient checking used by the
//!   test suites.

pub mod align;
pub mod attention;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod matrix;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod tasks;

pub use error::{CoreError, Result};
pub use matrix::Matrix;
