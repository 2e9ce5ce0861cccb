// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cross-lingual representation intervention.
//!
//! The crate builds a memory of `(target-language state, English − target
//! difference)` pairs, retrieves the nearest entries for a query state by
//! cosine similarity, averages their difference vectors and injects the
//! result into a transformer residual stream while keeping the state's L2
//! norm fixed.
//!
//! Around that mechanism it provides:
//!
//! - [`toy`]: a seeded decoder-only transformer with an explicit residual
//!   stream and a single-shot injection hook, used as a desk-scale substrate.
//! - [`protocol`]: a framed binary protocol so external runtimes can use the
//!   engine as an intervention service.
//! - [`eval`]: multiple-choice scoring and the weighted FPR-ACC metric.
//! - [`tuning`]: the two-phase layer / strength grid search.
//! - [`diagnostics`]: centroid gaps and a PCA projection for cluster plots.
//! - [`agreement`]: Fleiss' kappa.
//!
//! Vector math is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix the storage type to `f32`, matching the on-disk and wire
//! formats.

pub mod agreement;
pub mod diagnostics;
pub mod eval;
pub mod lang;
pub mod memory;
pub mod pipeline;
pub mod protocol;
pub mod repr;
pub mod scalar;
pub mod toy;
pub mod tuning;

pub use lang::{DimensionTag, Lang};
pub use memory::{MemoryEntry, MemoryError, XlMemory};
pub use repr::{cosine_similarity, difference_vector, inject_normalized, DifferenceVector, ReprError, State};
pub use scalar::Scalar;

/// Hidden state with 32-bit storage.
pub type HiddenState = State<f32>;
/// Difference vector with 32-bit storage.
pub type Difference = DifferenceVector<f32>;
/// Memory with 32-bit storage; the type the file format and protocol use.
pub type Memory = XlMemory<f32>;
/// Memory entry with 32-bit storage.
pub type Entry = MemoryEntry<f32>;
/// Toy transformer running in 32-bit arithmetic.
pub type ToyModel = toy::ToyTransformer<f32>;
/// Toy transformer running in 64-bit arithmetic.
pub type ToyModel64 = toy::ToyTransformer<f64>;
/// Hidden state with 64-bit storage.
pub type HiddenState64 = State<f64>;
