// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dimension-checked vector math on hidden states.
//!
//! Values are stored in the scalar type `T`; every reduction accumulates in
//! `f64` and results are rounded back to `T` once.

use thiserror::Error;

use crate::lang::Lang;
use crate::scalar::Scalar;

/// Below this L2 norm an injected direction is considered degenerate.
pub const EPS_NORM: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReprError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("operand has zero L2 norm")]
    ZeroNormOperand,
    #[error("injected direction collapsed (norm {norm:e} < {EPS_NORM:e})")]
    DegenerateDirection { norm: f64 },
    #[error("vector must have at least one component")]
    EmptyVector,
    #[error("non-finite component at index {index}")]
    NonFinite { index: usize },
    #[error("intervention strength must be finite and >= 0, got {0}")]
    InvalidStrength(f64),
}

/// One residual-stream vector: a single token position at a single layer.
#[derive(Debug, Clone, PartialEq)]
pub struct State<T> {
    values: Vec<T>,
}

impl<T: Scalar> State<T> {
    /// Wraps `values`, rejecting empty or non-finite input.
    pub fn new(values: Vec<T>) -> Result<Self, ReprError> {
        validate(&values)?;
        Ok(State { values })
    }

    pub fn zeros(dim: usize) -> Result<Self, ReprError> {
        Self::new(vec![T::zero(); dim])
    }

    pub fn from_f64(values: &[f64]) -> Result<Self, ReprError> {
        Self::new(values.iter().map(|&v| T::narrow(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.widen()).collect()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn dot(&self, other: &State<T>) -> Result<f64, ReprError> {
        check_dims(self.dim(), other.dim())?;
        Ok(dot(&self.values, &other.values))
    }

    /// Euclidean distance, accumulated in `f64`.
    pub fn distance(&self, other: &State<T>) -> Result<f64, ReprError> {
        check_dims(self.dim(), other.dim())?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| {
                let d = a.widen() - b.widen();
                d * d
            })
            .sum::<f64>()
            .sqrt())
    }

    /// Componentwise `self + other`.
    pub fn add(&self, other: &DifferenceVector<T>) -> Result<State<T>, ReprError> {
        check_dims(self.dim(), other.dim())?;
        State::new(
            self.values
                .iter()
                .zip(other.as_slice())
                .map(|(&a, &b)| a + b)
                .collect(),
        )
    }
}

/// `source − target` between two states of semantically parallel inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceVector<T> {
    values: Vec<T>,
    pub source_lang: Lang,
    pub target_lang: Lang,
}

impl<T: Scalar> DifferenceVector<T> {
    pub fn new(values: Vec<T>, source_lang: Lang, target_lang: Lang) -> Result<Self, ReprError> {
        validate(&values)?;
        Ok(DifferenceVector { values, source_lang, target_lang })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.widen()).collect()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    /// The reversed difference, `target − source`.
    pub fn negated(&self) -> DifferenceVector<T> {
        DifferenceVector {
            values: self.values.iter().map(|&v| -v).collect(),
            source_lang: self.target_lang,
            target_lang: self.source_lang,
        }
    }
}

/// Cosine similarity `aᵀb / (‖a‖‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity<T: Scalar>(a: &State<T>, b: &State<T>) -> Result<f64, ReprError> {
    check_dims(a.dim(), b.dim())?;
    let na = a.norm();
    let nb = b.norm();
    cosine_with_norms(&a.values, na, &b.values, nb)
}

/// Cosine kernel with precomputed norms; used by retrieval to avoid
/// recomputing the query norm per entry.
pub(crate) fn cosine_with_norms<T: Scalar>(
    a: &[T],
    norm_a: f64,
    b: &[T],
    norm_b: f64,
) -> Result<f64, ReprError> {
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(ReprError::ZeroNormOperand);
    }
    Ok((dot(a, b) / (norm_a * norm_b)).clamp(-1.0, 1.0))
}

/// Componentwise `h_src − h_tgt`.
pub fn difference_vector<T: Scalar>(
    h_src: &State<T>,
    h_tgt: &State<T>,
    source_lang: Lang,
    target_lang: Lang,
) -> Result<DifferenceVector<T>, ReprError> {
    check_dims(h_src.dim(), h_tgt.dim())?;
    let values = h_src
        .values
        .iter()
        .zip(&h_tgt.values)
        .map(|(&s, &t)| s - t)
        .collect();
    DifferenceVector::new(values, source_lang, target_lang)
}

/// Adds `alpha · u_bar` to `h` and rescales the sum back to `‖h‖₂`.
pub fn inject_normalized<T: Scalar>(
    h: &State<T>,
    u_bar: &DifferenceVector<T>,
    alpha: f64,
) -> Result<State<T>, ReprError> {
    check_dims(h.dim(), u_bar.dim())?;
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(ReprError::InvalidStrength(alpha));
    }
    let h_norm = h.norm();
    if h_norm == 0.0 {
        return Err(ReprError::ZeroNormOperand);
    }
    let shifted: Vec<f64> = h
        .values
        .iter()
        .zip(&u_bar.values)
        .map(|(&x, &u)| x.widen() + alpha * u.widen())
        .collect();
    let shifted_norm = shifted.iter().map(|v| v * v).sum::<f64>().sqrt();
    if shifted_norm < EPS_NORM {
        return Err(ReprError::DegenerateDirection { norm: shifted_norm });
    }
    let scale = h_norm / shifted_norm;
    State::new(shifted.into_iter().map(|v| T::narrow(v * scale)).collect())
}

pub(crate) fn check_dims(left: usize, right: usize) -> Result<(), ReprError> {
    if left != right {
        return Err(ReprError::DimensionMismatch { left, right });
    }
    Ok(())
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.widen() * y.widen()).sum()
}

pub(crate) fn norm<T: Scalar>(a: &[T]) -> f64 {
    a.iter().map(|x| x.widen() * x.widen()).sum::<f64>().sqrt()
}

fn validate<T: Scalar>(values: &[T]) -> Result<(), ReprError> {
    if values.is_empty() {
        return Err(ReprError::EmptyVector);
    }
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(ReprError::NonFinite { index }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: &[f32]) -> State<f32> {
        State::new(v.to_vec()).unwrap()
    }

    fn d(v: &[f32]) -> DifferenceVector<f32> {
        DifferenceVector::new(v.to_vec(), Lang::EN, Lang::ZH).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&s(&[1.0, 0.0]), &s(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&s(&[1.0, 0.0]), &s(&[1.0, 0.0])).unwrap(), 1.0);
        // (12 + 12) / (5 * 5)
        let c = cosine_similarity(&s(&[3.0, 4.0]), &s(&[4.0, 3.0])).unwrap();
        assert!((c - 0.96).abs() < 1e-12);
    }

    #[test]
    fn cosine_errors() {
        assert_eq!(
            cosine_similarity(&s(&[1.0, 0.0]), &s(&[1.0, 0.0, 0.0])),
            Err(ReprError::DimensionMismatch { left: 2, right: 3 })
        );
        assert_eq!(
            cosine_similarity(&s(&[0.0, 0.0]), &s(&[1.0, 0.0])),
            Err(ReprError::ZeroNormOperand)
        );
    }

    #[test]
    fn cosine_is_clamped() {
        let a = s(&[0.1, 0.2, 0.3]);
        let c = cosine_similarity(&a, &a).unwrap();
        assert!(c <= 1.0);
    }

    #[test]
    fn difference_examples() {
        let a = s(&[1.0, 2.0]);
        let b = s(&[0.0, 2.0]);
        let z = difference_vector(&a, &a, Lang::EN, Lang::FR).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
        let ab = difference_vector(&a, &b, Lang::EN, Lang::FR).unwrap();
        assert_eq!(ab.as_slice(), &[1.0, 0.0]);
        let ba = difference_vector(&b, &a, Lang::FR, Lang::EN).unwrap();
        assert_eq!(ab.negated(), ba);
        assert!(difference_vector(&a, &s(&[1.0]), Lang::EN, Lang::FR).is_err());
    }

    #[test]
    fn inject_examples() {
        let h = s(&[3.0, 4.0]);
        // h + u = (8, 4); 5 * (8, 4) / sqrt(80) = (sqrt(20), sqrt(5))
        let out = inject_normalized(&h, &d(&[5.0, 0.0]), 1.0).unwrap();
        assert!((f64::from(out.as_slice()[0]) - 20f64.sqrt()).abs() < 1e-6);
        assert!((f64::from(out.as_slice()[1]) - 5f64.sqrt()).abs() < 1e-6);
        assert!((f64::from(out.as_slice()[0]) - 4.47214).abs() < 1e-5);
        assert!((f64::from(out.as_slice()[1]) - 2.23607).abs() < 1e-5);

        let same = inject_normalized(&h, &d(&[5.0, 0.0]), 0.0).unwrap();
        assert_eq!(same, h);

        let err = inject_normalized(&s(&[1.0, 0.0]), &d(&[-1.0, 0.0]), 1.0).unwrap_err();
        assert!(matches!(err, ReprError::DegenerateDirection { .. }));
    }

    #[test]
    fn inject_rejects_bad_input() {
        let h = s(&[3.0, 4.0]);
        assert!(matches!(
            inject_normalized(&h, &d(&[1.0]), 0.5),
            Err(ReprError::DimensionMismatch { .. })
        ));
        assert_eq!(inject_normalized(&h, &d(&[1.0, 1.0]), -0.1), Err(ReprError::InvalidStrength(-0.1)));
        assert_eq!(
            inject_normalized(&s(&[0.0, 0.0]), &d(&[1.0, 1.0]), 0.5),
            Err(ReprError::ZeroNormOperand)
        );
    }

    #[test]
    fn rejects_non_finite() {
        assert_eq!(State::new(vec![1.0f32, f32::NAN]), Err(ReprError::NonFinite { index: 1 }));
        assert_eq!(State::<f32>::new(vec![]), Err(ReprError::EmptyVector));
    }

    fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(-10.0f32..10.0, dim)
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            (a, b) in (1usize..32).prop_flat_map(|n| (vec_strategy(n), vec_strategy(n))),
            c in 0.01f32..100.0,
        ) {
            let a = State::new(a).unwrap();
            let b = State::new(b).unwrap();
            prop_assume!(a.norm() > 1e-3 && b.norm() > 1e-3);
            let ab = cosine_similarity(&a, &b).unwrap();
            let ba = cosine_similarity(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12);
            let scaled = State::new(a.as_slice().iter().map(|v| v * c).collect()).unwrap();
            let sb = cosine_similarity(&scaled, &b).unwrap();
            prop_assert!((ab - sb).abs() <= 1e-6);
        }

        #[test]
        fn difference_is_antisymmetric(
            (a, b) in (1usize..32).prop_flat_map(|n| (vec_strategy(n), vec_strategy(n))),
        ) {
            let a = State::new(a).unwrap();
            let b = State::new(b).unwrap();
            let ab = difference_vector(&a, &b, Lang::EN, Lang::JA).unwrap();
            let ba = difference_vector(&b, &a, Lang::JA, Lang::EN).unwrap();
            for (x, y) in ab.as_slice().iter().zip(ba.as_slice()) {
                prop_assert!((x + y).abs() <= 1e-7);
            }
        }
    }
}
