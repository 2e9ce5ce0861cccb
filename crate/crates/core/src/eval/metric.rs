// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use super::EvalError;
use crate::lang::DimensionTag;

/// One weight per scored dimension, in [`DimensionTag::SCORED`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionWeights(pub [f64; 8]);

impl Default for DimensionWeights {
    /// Single-screen tasks 1, RI 1.5, SI 2.
    fn default() -> Self {
        DimensionWeights([1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.5, 2.0])
    }
}

impl DimensionWeights {
    pub fn get(&self, dim: DimensionTag) -> Option<f64> {
        DimensionTag::SCORED.iter().position(|&d| d == dim).map(|i| self.0[i])
    }
}

/// FPR-ACC under the default weights.
pub fn fpr_acc(acc: &BTreeMap<DimensionTag, f64>) -> Result<f64, EvalError> {
    fpr_acc_with(acc, &DimensionWeights::default())
}

/// `Σ wᵢ·accᵢ / Σ wᵢ` over the eight scored dimensions. Works on fractions
/// or percentages alike.
pub fn fpr_acc_with(acc: &BTreeMap<DimensionTag, f64>, weights: &DimensionWeights) -> Result<f64, EvalError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (dim, &w) in DimensionTag::SCORED.iter().zip(&weights.0) {
        if !(w.is_finite() && w > 0.0) {
            return Err(EvalError::InvalidWeight(*dim));
        }
        let a = acc.get(dim).ok_or(EvalError::MissingDimension(*dim))?;
        num += w * a;
        den += w;
    }
    Ok(num / den)
}
