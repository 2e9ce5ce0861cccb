// SPDX-License-Identifier: MIT OR Apache-2.0

//! Floating-point storage types for hidden states.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Storage scalar for vectors: `f32` or `f64`.
///
/// Reductions (dot products, norms, means) always accumulate in `f64`
/// regardless of the storage type.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Width of one element in bytes.
    const BYTES: usize;

    fn widen(self) -> f64;

    /// Round an accumulator value back to storage precision.
    fn narrow(v: f64) -> Self;
}

impl Scalar for f32 {
    const BYTES: usize = 4;

    #[inline]
    fn widen(self) -> f64 {
        f64::from(self)
    }

    #[inline]
    fn narrow(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;

    #[inline]
    fn widen(self) -> f64 {
        self
    }

    #[inline]
    fn narrow(v: f64) -> Self {
        v
    }
}
