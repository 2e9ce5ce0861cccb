// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cluster diagnostics: centroids, per-language gaps to the English centroid,
//! and a deterministic 2-D PCA projection for plotting.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::lang::{DimensionTag, Lang};
use crate::memory::XlMemory;
use crate::repr::State;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum DiagError {
    #[error("empty state set")]
    EmptySet,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("reference language {0} missing or empty")]
    MissingReference(Lang),
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("intervention failed: {0}")]
    Intervention(String),
}

fn common_dim<T: Scalar>(states: &[State<T>]) -> Result<usize, DiagError> {
    let d = states.first().ok_or(DiagError::EmptySet)?.dim();
    match states.iter().find(|s| s.dim() != d) {
        Some(s) => Err(DiagError::DimensionMismatch { expected: d, got: s.dim() }),
        None => Ok(d),
    }
}

/// Componentwise mean in f64, stored as `f64` for any state scalar.
fn mean_f64<T: Scalar>(states: &[State<T>]) -> Result<Vec<f64>, DiagError> {
    let d = common_dim(states)?;
    let mut acc = vec![0.0f64; d];
    for s in states {
        for (a, x) in acc.iter_mut().zip(s.as_slice()) {
            *a += x.widen();
        }
    }
    let n = states.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

pub fn centroid<T: Scalar>(states: &[State<T>]) -> Result<State<T>, DiagError> {
    let mean = mean_f64(states)?;
    Ok(State::from_f64(&mean).expect("mean of finite states is finite"))
}

fn mean_distance<T: Scalar>(states: &[State<T>], center: &[f64]) -> Result<f64, DiagError> {
    check_against(states, center.len())?;
    let total: f64 = states
        .iter()
        .map(|s| {
            s.as_slice()
                .iter()
                .zip(center)
                .map(|(x, c)| (x.widen() - c).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(total / states.len() as f64)
}

fn check_against<T: Scalar>(states: &[State<T>], d: usize) -> Result<(), DiagError> {
    if let Some(s) = states.iter().find(|s| s.dim() != d) {
        return Err(DiagError::DimensionMismatch { expected: d, got: s.dim() });
    }
    Ok(())
}

/// Mean L2 distance of each language's states to the `reference` centroid.
/// The reference's own entry is its dispersion baseline. Languages with no
/// states are left out.
pub fn cross_lingual_gap<T: Scalar>(
    states_by_lang: &BTreeMap<Lang, Vec<State<T>>>,
    reference: Lang,
) -> Result<BTreeMap<Lang, f64>, DiagError> {
    let ref_states = states_by_lang
        .get(&reference)
        .filter(|v| !v.is_empty())
        .ok_or(DiagError::MissingReference(reference))?;
    let center = mean_f64(ref_states)?;
    states_by_lang
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(&lang, v)| Ok((lang, mean_distance(v, &center)?)))
        .collect()
}

/// Before/after gap for one language.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapRow {
    pub lang: Lang,
    pub before: f64,
    pub after: f64,
}

impl GapRow {
    /// Relative reduction, `1 − after/before`.
    pub fn reduction(&self) -> f64 {
        1.0 - self.after / self.before
    }
}

/// Pairs up two gap maps on their shared languages.
pub fn gap_table(before: &BTreeMap<Lang, f64>, after: &BTreeMap<Lang, f64>) -> Vec<GapRow> {
    before
        .iter()
        .filter_map(|(&lang, &b)| after.get(&lang).map(|&a| GapRow { lang, before: b, after: a }))
        .collect()
}

pub fn write_gap_csv<W: Write>(rows: &[GapRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["lang", "gap_before", "gap_after"])?;
    for r in rows {
        out.write_record([r.lang.as_str().to_string(), r.before.to_string(), r.after.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Effect of one intervention setting on held-out target-language queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterventionGap {
    /// Mean distance of the raw queries to the reference centroid.
    pub before: f64,
    pub after: f64,
    /// Share of queries that ended up closer to the centroid.
    pub closer_fraction: f64,
}

impl InterventionGap {
    pub fn reduction(&self) -> f64 {
        1.0 - self.after / self.before
    }
}

/// Intervenes on every query and measures the gap to the centroid of `reference`.
pub fn intervention_gap<T: Scalar>(
    memory: &XlMemory<T>,
    reference: &[State<T>],
    queries: &[(State<T>, DimensionTag)],
    k: usize,
    alpha: f64,
    dim_filter: bool,
) -> Result<InterventionGap, DiagError> {
    if queries.is_empty() {
        return Err(DiagError::EmptySet);
    }
    let center = mean_f64(reference)?;
    let dist = |s: &State<T>| -> f64 {
        s.as_slice().iter().zip(&center).map(|(x, c)| (x.widen() - c).powi(2)).sum::<f64>().sqrt()
    };
    let (mut before, mut after, mut closer) = (0.0, 0.0, 0usize);
    for (q, tag) in queries {
        check_against(std::slice::from_ref(q), center.len())?;
        let moved = memory
            .intervene(q, k, alpha, dim_filter.then_some(*tag))
            .map_err(|e| DiagError::Intervention(e.to_string()))?;
        let (b, a) = (dist(q), dist(&moved));
        before += b;
        after += a;
        closer += usize::from(a < b);
    }
    let n = queries.len() as f64;
    Ok(InterventionGap { before: before / n, after: after / n, closer_fraction: closer as f64 / n })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    /// Variance along axis 1 and axis 2 (eigenvalues of the sample covariance).
    pub explained_variance: [f64; 2],
    pub axes: [Vec<f64>; 2],
}

/// Centered projection onto the top two principal axes. Each axis is signed
/// so that its largest-magnitude loading is positive.
pub fn pca_project_2d<T: Scalar>(states: &[State<T>]) -> Result<Projection, DiagError> {
    if states.len() < 2 {
        return Err(DiagError::DegenerateInput("need at least 2 states"));
    }
    let d = common_dim(states)?;
    if d < 2 {
        return Err(DiagError::DegenerateInput("need at least 2 dimensions"));
    }
    let mean = mean_f64(states)?;
    let n = states.len();
    let x = DMatrix::from_fn(n, d, |i, j| states[i].as_slice()[j].widen() - mean[j]);
    if x.iter().all(|&v| v == 0.0) {
        return Err(DiagError::DegenerateInput("all states identical"));
    }
    let cov = (x.transpose() * &x) / (n as f64 - 1.0).max(1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let axis = |k: usize| -> Vec<f64> {
        let col = eig.eigenvectors.column(order[k]);
        let lead = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        col.iter().map(|v| v * sign).collect()
    };
    let axes = [axis(0), axis(1)];
    let coords = (0..n)
        .map(|i| {
            let row = x.row(i);
            let p = |a: &[f64]| row.iter().zip(a).map(|(r, w)| r * w).sum::<f64>();
            [p(&axes[0]), p(&axes[1])]
        })
        .collect();
    let ev = |k: usize| eig.eigenvalues[order[k]].max(0.0);
    Ok(Projection { coords, explained_variance: [ev(0), ev(1)], axes })
}

/// `id,lang,x,y` rows for an external plotter.
pub fn write_projection_csv<W: Write>(ids: &[String], langs: &[Lang], proj: &Projection, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["id", "lang", "x", "y"])?;
    for ((id, lang), [x, y]) in ids.iter().zip(langs).zip(&proj.coords) {
        out.write_record([id.clone(), lang.as_str().to_string(), x.to_string(), y.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
