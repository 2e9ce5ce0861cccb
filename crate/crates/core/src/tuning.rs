// SPDX-License-Identifier: MIT OR Apache-2.0

//! Two-phase grid search over the intervention layer and strength.
//!
//! Phase 1 scores every candidate layer at a fixed α; phase 2 sweeps the α
//! grid at the winning layer. A configuration whose objective fails is
//! recorded in the trace and skipped.

use std::collections::BTreeSet;
use std::io::Write;

use thiserror::Error;

pub const DEFAULT_FIXED_ALPHA: f64 = 0.1;
pub const DEFAULT_ALPHA_GRID: [f64; 5] = [0.05, 0.1, 0.2, 0.3, 0.5];

#[derive(Debug, Error, PartialEq)]
pub enum TuneError {
    #[error("layer set is empty")]
    EmptyLayerSet,
    #[error("alpha grid is empty")]
    EmptyAlphaGrid,
    #[error("alpha values must be finite and > 0, got {0}")]
    InvalidAlpha(f64),
    #[error("layer {layer} out of range 0..={max}")]
    InvalidLayer { layer: usize, max: usize },
    #[error("every configuration failed")]
    AllConfigurationsFailed,
}

/// Layers `round(0.35·L)..=round(0.65·L)`.
pub fn default_layer_set(num_layers: usize) -> Vec<usize> {
    let lo = (0.35 * num_layers as f64).round() as usize;
    let hi = (0.65 * num_layers as f64).round() as usize;
    (lo.max(1)..=hi.max(1).min(num_layers.max(1))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneSpec {
    pub layer_set: Vec<usize>,
    pub alpha_grid: Vec<f64>,
    pub fixed_alpha: f64,
    pub seed: u64,
}

impl TuneSpec {
    pub fn for_depth(num_layers: usize) -> Self {
        TuneSpec {
            layer_set: default_layer_set(num_layers),
            alpha_grid: DEFAULT_ALPHA_GRID.to_vec(),
            fixed_alpha: DEFAULT_FIXED_ALPHA,
            seed: 0,
        }
    }

    pub fn validate(&self, max_layer: Option<usize>) -> Result<(), TuneError> {
        if self.layer_set.is_empty() {
            return Err(TuneError::EmptyLayerSet);
        }
        if self.alpha_grid.is_empty() {
            return Err(TuneError::EmptyAlphaGrid);
        }
        for &a in self.alpha_grid.iter().chain(std::iter::once(&self.fixed_alpha)) {
            if !(a.is_finite() && a > 0.0) {
                return Err(TuneError::InvalidAlpha(a));
            }
        }
        if let Some(max) = max_layer {
            if let Some(&layer) = self.layer_set.iter().find(|&&l| l > max) {
                return Err(TuneError::InvalidLayer { layer, max });
            }
        }
        Ok(())
    }
}

/// One configuration handed to the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    pub layer: usize,
    pub alpha: f64,
    pub seed: u64,
}

/// Objective output: the selection score plus optional named breakdowns
/// (per-dimension accuracy, say) carried into the trace.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evaluation {
    pub score: f64,
    pub details: Vec<(String, f64)>,
}

impl From<f64> for Evaluation {
    fn from(score: f64) -> Self {
        Evaluation { score, details: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Layer,
    Alpha,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub phase: Phase,
    pub layer: usize,
    pub alpha: f64,
    /// `Err` holds the objective's failure message.
    pub outcome: Result<Evaluation, String>,
}

impl TracePoint {
    pub fn score(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|e| e.score)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best_layer: usize,
    pub best_alpha: f64,
    pub best_score: f64,
    /// Every objective call, phase 1 first, each phase in grid order.
    pub trace: Vec<TracePoint>,
}

impl TuneResult {
    pub fn evaluations(&self) -> usize {
        self.trace.len()
    }

    pub fn failures(&self) -> impl Iterator<Item = &TracePoint> {
        self.trace.iter().filter(|p| p.outcome.is_err())
    }

    /// `phase,layer,alpha,score,<detail columns…>,error`; detail columns are the
    /// union of names in first-seen order.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut names: Vec<&str> = Vec::new();
        for p in &self.trace {
            if let Ok(e) = &p.outcome {
                for (n, _) in &e.details {
                    if !names.contains(&n.as_str()) {
                        names.push(n);
                    }
                }
            }
        }
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["phase", "layer", "alpha", "score"];
        header.extend(&names);
        header.push("error");
        out.write_record(&header)?;
        for p in &self.trace {
            let phase = match p.phase {
                Phase::Layer => "layer",
                Phase::Alpha => "alpha",
            };
            let mut row = vec![phase.to_string(), p.layer.to_string(), p.alpha.to_string()];
            match &p.outcome {
                Ok(e) => {
                    row.push(e.score.to_string());
                    for n in &names {
                        let v = e.details.iter().find(|(k, _)| k == n).map(|(_, v)| v.to_string());
                        row.push(v.unwrap_or_default());
                    }
                    row.push(String::new());
                }
                Err(msg) => {
                    row.push(String::new());
                    row.extend(names.iter().map(|_| String::new()));
                    row.push(msg.clone());
                }
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn settle(outcome: Result<Evaluation, String>) -> Result<Evaluation, String> {
    match outcome {
        Ok(e) if e.score.is_nan() => Err("objective returned NaN".into()),
        other => other,
    }
}

/// Index of the best successful point; earlier points win ties.
fn argmax(points: &[TracePoint]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        if let Some(s) = p.score() {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Candidates in ascending order so that "first best" is "smallest on ties".
fn sorted_layers(spec: &TuneSpec) -> Vec<usize> {
    spec.layer_set.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
}

fn sorted_alphas(spec: &TuneSpec) -> Vec<f64> {
    let mut a = spec.alpha_grid.clone();
    a.sort_by(f64::total_cmp);
    a.dedup();
    a
}

/// Runs the two-phase search, calling `objective` once per distinct configuration.
pub fn grid_search<F>(spec: &TuneSpec, mut objective: F) -> Result<TuneResult, TuneError>
where
    F: FnMut(Trial) -> Result<Evaluation, String>,
{
    run(spec, |trials| trials.iter().map(|&t| settle(objective(t))).collect())
}

/// As [`grid_search`], evaluating each phase's configurations on scoped threads.
/// Results are identical to the sequential version.
pub fn grid_search_parallel<F>(spec: &TuneSpec, objective: F) -> Result<TuneResult, TuneError>
where
    F: Fn(Trial) -> Result<Evaluation, String> + Sync,
{
    let objective = &objective;
    run(spec, |trials| {
        std::thread::scope(|s| {
            let handles: Vec<_> = trials.iter().map(|&t| s.spawn(move || settle(objective(t)))).collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err("objective panicked".into())))
                .collect()
        })
    })
}

fn run<E>(spec: &TuneSpec, mut eval_batch: E) -> Result<TuneResult, TuneError>
where
    E: FnMut(&[Trial]) -> Vec<Result<Evaluation, String>>,
{
    spec.validate(None)?;
    let layers = sorted_layers(spec);
    let alphas = sorted_alphas(spec);

    let trials: Vec<Trial> =
        layers.iter().map(|&layer| Trial { layer, alpha: spec.fixed_alpha, seed: spec.seed }).collect();
    let mut trace: Vec<TracePoint> = trials
        .iter()
        .zip(eval_batch(&trials))
        .map(|(t, outcome)| TracePoint { phase: Phase::Layer, layer: t.layer, alpha: t.alpha, outcome })
        .collect();
    let best_layer = trace[argmax(&trace).ok_or(TuneError::AllConfigurationsFailed)?].layer;

    // The (best_layer, fixed_alpha) point is already known.
    let known = trace.iter().find(|p| p.layer == best_layer).cloned();
    let pending: Vec<Trial> = alphas
        .iter()
        .filter(|&&a| a != spec.fixed_alpha)
        .map(|&alpha| Trial { layer: best_layer, alpha, seed: spec.seed })
        .collect();
    let mut fresh = pending.iter().zip(eval_batch(&pending));
    let mut phase2 = Vec::with_capacity(alphas.len());
    let mut evaluated = Vec::new();
    for &alpha in &alphas {
        if alpha == spec.fixed_alpha {
            let mut p = known.clone().expect("best layer comes from phase 1");
            p.phase = Phase::Alpha;
            phase2.push(p);
        } else {
            let (t, outcome) = fresh.next().expect("one result per pending trial");
            let p = TracePoint { phase: Phase::Alpha, layer: t.layer, alpha: t.alpha, outcome };
            evaluated.push(p.clone());
            phase2.push(p);
        }
    }
    trace.extend(evaluated);

    let best = &phase2[argmax(&phase2).ok_or(TuneError::AllConfigurationsFailed)?];
    Ok(TuneResult {
        best_layer,
        best_alpha: best.alpha,
        best_score: best.score().expect("argmax picks a success"),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(layers: &[usize], alphas: &[f64]) -> TuneSpec {
        TuneSpec { layer_set: layers.to_vec(), alpha_grid: alphas.to_vec(), fixed_alpha: 0.1, seed: 7 }
    }

    #[test]
    fn default_layers_cover_middle_band() {
        assert_eq!(default_layer_set(12), (4..=8).collect::<Vec<_>>());
        assert_eq!(default_layer_set(28), (10..=18).collect::<Vec<_>>());
        assert_eq!(default_layer_set(1), vec![1]);
    }

    #[test]
    fn single_point_call_counts() {
        let mut calls = 0;
        let r = grid_search(&spec(&[3], &[0.3]), |_| {
            calls += 1;
            Ok(1.0.into())
        })
        .unwrap();
        assert_eq!((calls, r.best_layer, r.best_alpha), (2, 3, 0.3));

        let mut calls = 0;
        let r = grid_search(&spec(&[3], &[0.1]), |_| {
            calls += 1;
            Ok(1.0.into())
        })
        .unwrap();
        assert_eq!((calls, r.evaluations()), (1, 1));
    }

    #[test]
    fn phase_one_tie_prefers_smaller_layer() {
        let r = grid_search(&spec(&[6, 2, 4], &[0.2]), |t| Ok(if t.layer == 4 { 0.0 } else { 1.0 }.into())).unwrap();
        assert_eq!(r.best_layer, 2);
    }

    #[test]
    fn phase_two_tie_prefers_smaller_alpha() {
        let r = grid_search(&spec(&[1], &[0.5, 0.3, 0.2]), |t| Ok(if t.alpha > 0.25 { 2.0 } else { 1.0 }.into())).unwrap();
        assert_eq!(r.best_alpha, 0.3);
    }

    #[test]
    fn failures_are_skipped_and_recorded() {
        let r = grid_search(&spec(&[1, 2], &[0.1, 0.2]), |t| {
            if t.layer == 1 {
                Err("boom".into())
            } else {
                Ok((t.alpha * 10.0).into())
            }
        })
        .unwrap();
        assert_eq!((r.best_layer, r.best_alpha), (2, 0.2));
        assert_eq!(r.failures().count(), 1);

        let err = grid_search(&spec(&[1, 2], &[0.2]), |_| Err("no".into())).unwrap_err();
        assert_eq!(err, TuneError::AllConfigurationsFailed);
        let err = grid_search(&spec(&[1], &[0.2]), |_| Ok(f64::NAN.into())).unwrap_err();
        assert_eq!(err, TuneError::AllConfigurationsFailed);
    }

    #[test]
    fn phase_two_failure_at_every_alpha_is_fatal() {
        let err = grid_search(&spec(&[1], &[0.2, 0.3]), |t| {
            if t.alpha == 0.1 {
                Ok(1.0.into())
            } else {
                Err("x".into())
            }
        })
        .unwrap_err();
        assert_eq!(err, TuneError::AllConfigurationsFailed);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert_eq!(grid_search(&spec(&[], &[0.1]), |_| Ok(0.0.into())), Err(TuneError::EmptyLayerSet));
        assert_eq!(grid_search(&spec(&[1], &[]), |_| Ok(0.0.into())), Err(TuneError::EmptyAlphaGrid));
        assert_eq!(grid_search(&spec(&[1], &[-0.1]), |_| Ok(0.0.into())), Err(TuneError::InvalidAlpha(-0.1)));
        assert!(matches!(spec(&[13], &[0.1]).validate(Some(12)), Err(TuneError::InvalidLayer { layer: 13, .. })));
    }

    #[test]
    fn csv_trace_has_detail_columns() {
        let r = grid_search(&spec(&[1, 2], &[0.2]), |t| {
            if t.layer == 2 {
                return Err("bad, layer".into());
            }
            Ok(Evaluation { score: t.alpha, details: vec![("AU".into(), 50.0)] })
        })
        .unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "phase,layer,alpha,score,AU,error");
        assert_eq!(lines[1], "layer,1,0.1,0.1,50,");
        assert_eq!(lines[2], "layer,2,0.1,,,\"bad, layer\"");
        assert_eq!(lines[3], "alpha,1,0.2,0.2,50,");
    }

    proptest! {
        #[test]
        fn evaluation_count_and_parallel_agree(
            layers in proptest::collection::btree_set(0usize..30, 1..8),
            alphas in proptest::collection::btree_set(1u32..20, 1..6),
            include_fixed in any::<bool>(),
            salt in any::<u64>(),
        ) {
            let layers: Vec<usize> = layers.into_iter().collect();
            let mut alphas: Vec<f64> = alphas.into_iter().map(|a| f64::from(a) * 0.05).filter(|&a| a != 0.1).collect();
            if include_fixed || alphas.is_empty() {
                alphas.push(0.1);
            }
            let s = spec(&layers, &alphas);
            let f = |t: Trial| -> Result<Evaluation, String> {
                let x = (t.layer as u64).wrapping_mul(0x9e37_79b9).wrapping_add((t.alpha * 1000.0) as u64) ^ salt;
                Ok(((x % 1000) as f64).into())
            };
            let seq = grid_search(&s, f).unwrap();
            let dedup = usize::from(alphas.contains(&0.1));
            prop_assert_eq!(seq.evaluations(), layers.len() + alphas.len() - dedup);
            let par = grid_search_parallel(&s, f).unwrap();
            prop_assert_eq!(seq, par);
        }

        #[test]
        fn separable_objective_matches_full_grid(
            g in proptest::collection::vec(-5i32..5, 1..8),
            h in proptest::collection::vec(-5i32..5, 1..6),
        ) {
            let layers: Vec<usize> = (1..=g.len()).collect();
            let alphas: Vec<f64> = (1..=h.len()).map(|i| i as f64 * 0.07).collect();
            let mut s = spec(&layers, &alphas);
            s.fixed_alpha = alphas[0];
            let score = |l: usize, a: f64| {
                let ai = alphas.iter().position(|&x| x == a).unwrap();
                f64::from(g[l - 1] + h[ai])
            };
            let r = grid_search(&s, |t| Ok(score(t.layer, t.alpha).into())).unwrap();
            // Exhaustive argmax with the same tie rule.
            let mut best = (layers[0], alphas[0], f64::NEG_INFINITY);
            for &l in &layers {
                for &a in &alphas {
                    if score(l, a) > best.2 {
                        best = (l, a, score(l, a));
                    }
                }
            }
            prop_assert_eq!((r.best_layer, r.best_alpha, r.best_score), best);
        }
    }
}
