// SPDX-License-Identifier: MIT OR Apache-2.0

//! Fleiss' kappa for a fixed number of raters per item.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgreementError {
    #[error("row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },
    #[error("table has no items")]
    EmptyTable,
    #[error("chance agreement is 1 (every rating in one category)")]
    DegenerateChance,
    #[error("bad split key {0:?}")]
    BadSplit(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Per-item category counts; every row sums to `raters`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingTable {
    raters: u32,
    categories: usize,
    rows: Vec<Vec<u32>>,
}

impl RatingTable {
    pub fn new(raters: u32, rows: Vec<Vec<u32>>) -> Result<Self, AgreementError> {
        let categories = rows.first().ok_or(AgreementError::EmptyTable)?.len();
        if raters < 2 {
            return Err(AgreementError::InvalidRow { row: 0, reason: "need at least 2 raters".into() });
        }
        for (i, r) in rows.iter().enumerate() {
            check_row(r, raters).map_err(|reason| AgreementError::InvalidRow { row: i, reason })?;
            if r.len() != categories {
                return Err(AgreementError::InvalidRow {
                    row: i,
                    reason: format!("{} categories, expected {categories}", r.len()),
                });
            }
        }
        Ok(RatingTable { raters, categories, rows })
    }

    /// Infers the rater count from the first row.
    pub fn from_rows(rows: Vec<Vec<u32>>) -> Result<Self, AgreementError> {
        let raters = rows.first().ok_or(AgreementError::EmptyTable)?.iter().sum();
        Self::new(raters, rows)
    }

    /// Expands split frequencies such as `"5-1" → 291` into rows.
    pub fn from_splits(raters: u32, splits: &BTreeMap<String, u64>) -> Result<Self, AgreementError> {
        let mut rows = Vec::new();
        for (key, &count) in splits {
            let row = key
                .split(['-', ':', ' '])
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<u32>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| AgreementError::BadSplit(key.clone()))?;
            if row.len() < 2 {
                return Err(AgreementError::BadSplit(key.clone()));
            }
            rows.extend(std::iter::repeat_n(row, count as usize));
        }
        Self::new(raters, rows)
    }

    /// `{"raters": 6, "splits": {"6-0": 1693, ...}}`
    pub fn from_splits_json(json: &str) -> Result<Self, AgreementError> {
        let s: SplitsFile = serde_json::from_str(json)?;
        Self::from_splits(s.raters, &s.splits)
    }

    /// One row of counts per item. A non-numeric first record is a header;
    /// a leading `id`/`item` column is skipped.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, AgreementError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut skip_first_col = false;
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if i == 0 && rec.iter().any(|f| f.parse::<u32>().is_err()) {
                let first = rec.get(0).unwrap_or("").to_ascii_lowercase();
                skip_first_col = first == "id" || first == "item";
                continue;
            }
            let row = rec
                .iter()
                .skip(usize::from(skip_first_col))
                .map(|f| f.parse::<u32>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| AgreementError::InvalidRow { row: rows.len(), reason: e.to_string() })?;
            rows.push(row);
        }
        Self::from_rows(rows)
    }

    pub fn raters(&self) -> u32 {
        self.raters
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn items(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }
}

#[derive(Debug, Deserialize)]
struct SplitsFile {
    raters: u32,
    splits: BTreeMap<String, u64>,
}

fn check_row(row: &[u32], raters: u32) -> Result<(), String> {
    if row.is_empty() {
        return Err("no categories".into());
    }
    let sum: u64 = row.iter().map(|&c| u64::from(c)).sum();
    if sum != u64::from(raters) {
        return Err(format!("counts sum to {sum}, expected {raters}"));
    }
    Ok(())
}

/// `(Σ n_ij² − n) / (n(n−1))` for one item rated by `n = Σ n_ij` raters.
pub fn item_agreement(row: &[u32]) -> Result<f64, AgreementError> {
    let n: u64 = row.iter().map(|&c| u64::from(c)).sum();
    if n < 2 {
        return Err(AgreementError::InvalidRow { row: 0, reason: "need at least 2 ratings".into() });
    }
    let sq: u64 = row.iter().map(|&c| u64::from(c) * u64::from(c)).sum();
    Ok((sq - n) as f64 / (n * (n - 1)) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kappa {
    #[serde(rename = "P_bar")]
    pub p_bar: f64,
    #[serde(rename = "P_e")]
    pub p_e: f64,
    pub kappa: f64,
}

impl Kappa {
    /// Four-decimal rendering used in reports.
    pub fn rounded(&self) -> Kappa {
        let r = |x: f64| (x * 1e4).round() / 1e4;
        Kappa { p_bar: r(self.p_bar), p_e: r(self.p_e), kappa: r(self.kappa) }
    }
}

pub fn fleiss_kappa(table: &RatingTable) -> Result<Kappa, AgreementError> {
    let n = u64::from(table.raters);
    let big_n = table.rows.len() as u64;
    // Integer sums keep P_bar and the category totals exact until the final divisions.
    let mut sq_total: u64 = 0;
    let mut totals = vec![0u64; table.categories];
    for row in &table.rows {
        for (t, &c) in totals.iter_mut().zip(row) {
            let c = u64::from(c);
            sq_total += c * c;
            *t += c;
        }
    }
    let p_bar = (sq_total - big_n * n) as f64 / (big_n * n * (n - 1)) as f64;
    let ratings = (big_n * n) as f64;
    let p_e: f64 = totals.iter().map(|&t| (t as f64 / ratings).powi(2)).sum();
    if totals.iter().filter(|&&t| t > 0).count() <= 1 {
        return Err(AgreementError::DegenerateChance);
    }
    Ok(Kappa { p_bar, p_e, kappa: (p_bar - p_e) / (1.0 - p_e) })
}
