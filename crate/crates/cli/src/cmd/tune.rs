// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;

use gxli_core::diagnostics::intervention_gap;
use gxli_core::eval::{load_dataset, score, RunMeta};
use gxli_core::pipeline::{build_memories, pair_input, Intervention, KeySource};
use gxli_core::toy::ParallelPair;
use gxli_core::tuning::{grid_search, grid_search_parallel, Evaluation, Phase, TuneResult, TuneSpec, Trial};
use gxli_core::{DimensionTag, Lang, Memory, State};
use serde_json::json;

use super::eval::toy_responses;
use super::memory::key_source;
use crate::args::{Format, Objective, TuneCmd, TuneGridArgs};
use crate::fail::{Classify, CliResult, Failure};
use crate::io::{emit, emit_json, load_corpus, sink, target_lang, toy_model};

pub fn run(cmd: TuneCmd, seed: u64, out: Option<&Path>, format: Option<Format>) -> CliResult {
    let TuneCmd::Grid(args) = cmd;
    grid(args, seed, out, format)
}

/// Question-only states of `pairs`, one list per sweep layer.
type PerLayer = Vec<Vec<(State<f32>, DimensionTag)>>;

fn states(
    model: &gxli_core::ToyModel,
    pairs: &[ParallelPair],
    lang: Lang,
    layers: &[usize],
) -> CliResult<PerLayer> {
    let mut by_layer = vec![Vec::with_capacity(pairs.len()); layers.len()];
    for p in pairs {
        let trace = model.forward(&pair_input(model, p, lang, false).data("corpus pair")?).runtime("forward pass")?;
        for (slot, &l) in by_layer.iter_mut().zip(layers) {
            slot.push((trace.extract_last_state(l).runtime("state extraction")?.clone(), p.dimension));
        }
    }
    Ok(by_layer)
}

fn grid(args: TuneGridArgs, seed: u64, out: Option<&Path>, format: Option<Format>) -> CliResult {
    let model = toy_model(&args.toy)?;
    let corpus = load_corpus(&args.pairs)?;
    let lang = target_lang(&corpus, args.lang)?;
    let mut spec = TuneSpec { fixed_alpha: args.fixed_alpha, seed, ..TuneSpec::for_depth(model.num_layers()) };
    if let Some(l) = &args.layers {
        spec.layer_set = l.0.clone();
    }
    if let Some(a) = &args.alphas {
        spec.alpha_grid = a.clone();
    }
    spec.validate(Some(model.num_layers())).data("invalid sweep")?;
    let mut layers = spec.layer_set.clone();
    layers.sort_unstable();
    layers.dedup();
    let slot = |l: usize| layers.binary_search(&l).expect("layer in sweep");

    let (stored, held) = match args.objective {
        Objective::FprAcc => (&corpus.pairs[..], &[][..]),
        Objective::Gap => {
            if !(args.holdout > 0.0 && args.holdout < 1.0) {
                return Err(Failure::data("--holdout must lie in (0, 1)"));
            }
            let n_held = ((corpus.pairs.len() as f64) * args.holdout).round() as usize;
            if n_held == 0 || n_held == corpus.pairs.len() {
                return Err(Failure::data("corpus too small for the requested holdout"));
            }
            corpus.pairs.split_at(corpus.pairs.len() - n_held)
        }
    };
    let keys: KeySource = key_source(args.keys);
    let memories: Vec<Memory> = build_memories(&model, stored, &layers, lang, keys).data("cannot build memories")?;

    let objective: Box<dyn Fn(Trial) -> Result<Evaluation, String> + Sync + '_> = match args.objective {
        Objective::FprAcc => {
            let path = args.dataset.as_ref().ok_or_else(|| Failure::data("--objective fpr-acc needs --dataset"))?;
            let samples: Vec<_> = load_dataset(path)
                .data(format!("bad dataset {}", path.display()))?
                .into_iter()
                .filter(|s| s.lang == lang)
                .collect();
            if samples.is_empty() {
                return Err(Failure::data(format!("dataset has no {lang} items")));
            }
            let (model, memories, max_tokens) = (&model, &memories, args.max_tokens);
            let (k, dim_filter, mode) = (args.k, args.dim_filter, args.mode);
            Box::new(move |t: Trial| {
                let iv = Intervention { memory: &memories[slot(t.layer)], k, alpha: t.alpha, dim_filter };
                let responses = toy_responses(model, &samples, max_tokens, Some(&iv)).map_err(|f| f.error.to_string())?;
                let report = score(&samples, &responses, RunMeta { mode, ..RunMeta::default() }).map_err(|e| e.to_string())?;
                let fpr = *report.fpr_acc.get(&lang).ok_or("dataset does not cover all eight dimensions")?;
                let details = DimensionTag::SCORED
                    .iter()
                    .filter_map(|&d| report.accuracy(lang, d).map(|a| (d.to_string(), a)))
                    .collect();
                Ok(Evaluation { score: fpr, details })
            })
        }
        Objective::Gap => {
            let english: Vec<Vec<State<f32>>> = states(&model, &corpus.pairs, Lang::EN, &layers)?
                .into_iter()
                .map(|v| v.into_iter().map(|(s, _)| s).collect())
                .collect();
            let queries = states(&model, held, lang, &layers)?;
            let (memories, k, dim_filter) = (&memories, args.k, args.dim_filter);
            Box::new(move |t: Trial| {
                let i = slot(t.layer);
                let g = intervention_gap(&memories[i], &english[i], &queries[i], k, t.alpha, dim_filter)
                    .map_err(|e| e.to_string())?;
                Ok(Evaluation {
                    score: g.reduction(),
                    details: vec![
                        ("gap_before".into(), g.before),
                        ("gap_after".into(), g.after),
                        ("closer_fraction".into(), g.closer_fraction),
                    ],
                })
            })
        }
    };
    let result = if args.parallel { grid_search_parallel(&spec, &objective) } else { grid_search(&spec, &objective) }
        .runtime("sweep failed")?;
    eprintln!(
        "gxli: best layer {} alpha {} score {:.4} ({} evaluations, {} failed)",
        result.best_layer,
        result.best_alpha,
        result.best_score,
        result.evaluations(),
        result.failures().count()
    );
    write_result(&result, out, format)
}

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Layer => "layer",
        Phase::Alpha => "alpha",
    }
}

fn write_result(result: &TuneResult, out: Option<&Path>, format: Option<Format>) -> CliResult {
    match format {
        Some(Format::Json) => {
            let trace: Vec<_> = result
                .trace
                .iter()
                .map(|p| match &p.outcome {
                    Ok(e) => json!({
                        "phase": phase_name(p.phase), "layer": p.layer, "alpha": p.alpha, "score": e.score,
                        "details": e.details.iter().map(|(k, v)| (k.clone(), json!(v))).collect::<serde_json::Map<_, _>>(),
                    }),
                    Err(msg) => json!({"phase": phase_name(p.phase), "layer": p.layer, "alpha": p.alpha, "error": msg}),
                })
                .collect();
            emit_json(
                out,
                &json!({
                    "best_layer": result.best_layer,
                    "best_alpha": result.best_alpha,
                    "best_score": result.best_score,
                    "trace": trace,
                }),
            )
        }
        Some(Format::Table) => {
            let mut t = format!("{:<7}{:>6}{:>8}{:>10}\n", "phase", "layer", "alpha", "score");
            for p in &result.trace {
                let score = p.score().map_or_else(|| "failed".to_string(), |s| format!("{s:.4}"));
                t.push_str(&format!("{:<7}{:>6}{:>8}{:>10}\n", phase_name(p.phase), p.layer, p.alpha, score));
            }
            t.push_str(&format!("best: layer {} alpha {}\n", result.best_layer, result.best_alpha));
            emit(out, &t)
        }
        _ => {
            let mut w = sink(out)?;
            result.write_csv(&mut w).runtime("cannot write trace")
        }
    }
}
