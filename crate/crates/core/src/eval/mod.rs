// SPDX-License-Identifier: MIT OR Apache-2.0

//! Benchmark ingestion, answer extraction and FPR-ACC scoring.

mod dataset;
mod extract;
mod metric;
mod report;

pub use dataset::{load_dataset, parse_dataset, Choice, VqaSample};
pub use extract::{extract_choice, Extracted, Mode};
pub use metric::{fpr_acc, fpr_acc_with, DimensionWeights};
pub use report::{
    compare_runs, load_responses, marker, parse_responses, score, CellDelta, CellStats, DeltaReport, EvalReport, FprDelta, RunMeta,
};

use thiserror::Error;

use crate::lang::{DimensionTag, Lang};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("line {line}: field {field:?}: {message}")]
    SchemaError { line: usize, field: &'static str, message: String },
    #[error("duplicate sample id {id:?} on line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("no response for sample {0:?}")]
    MissingResponse(String),
    #[error("missing accuracy for dimension {0}")]
    MissingDimension(DimensionTag),
    #[error("weights must be finite and > 0 ({0} is not)")]
    InvalidWeight(DimensionTag),
    #[error("reports cover different cells: {0}")]
    CoverageMismatch(String),
    #[error("{lang}: FPR-ACC needs all eight dimensions")]
    IncompleteLanguage { lang: Lang },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
