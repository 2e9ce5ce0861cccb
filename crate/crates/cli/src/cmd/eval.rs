// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::HashMap;
use std::path::Path;

use gxli_core::eval::{compare_runs, load_dataset, load_responses, score, EvalReport, RunMeta, VqaSample};
use gxli_core::pipeline::{generate, Intervention};
use gxli_core::toy::text::{encode_prompt, render_tokens};
use gxli_core::toy::ToyTransformer;
use serde_json::json;

use crate::args::{EvalCmd, EvalRunArgs, Format};
use crate::fail::{Classify, CliResult, Failure};
use crate::io::{emit, emit_json, load_memory, read_text, sink, toy_model, write_jsonl};

pub fn run(cmd: EvalCmd, out: Option<&Path>, format: Option<Format>) -> CliResult {
    match cmd {
        EvalCmd::Run(args) => eval_run(args, out, format),
        EvalCmd::Compare { before, after } => {
            let load = |p: &Path| EvalReport::from_json(&read_text(p)?).data(format!("bad report {}", p.display()));
            let delta = compare_runs(&load(&before)?, &load(&after)?).data("reports are not comparable")?;
            match format {
                Some(Format::Table) => emit(out, &delta.render_table()),
                Some(Format::Csv) => {
                    let mut t = String::from("lang,dimension,before,after,delta\n");
                    for c in &delta.cells {
                        t.push_str(&format!("{},{},{:.1},{:.1},{:.1}\n", c.lang, c.dimension, c.before, c.after, c.delta));
                    }
                    for f in &delta.fpr_acc {
                        t.push_str(&format!("{},FPR-ACC,{:.1},{:.1},{:.1}\n", f.lang, f.before, f.after, f.delta));
                    }
                    emit(out, &t)
                }
                _ => emit_json(out, &delta),
            }
        }
    }
}

/// Greedy toy-model answers, keyed by sample id. Samples in the memory's
/// target language get the first-token intervention.
pub fn toy_responses(
    model: &ToyTransformer<f32>,
    samples: &[VqaSample],
    max_tokens: usize,
    intervention: Option<&Intervention<'_, f32>>,
) -> CliResult<HashMap<String, String>> {
    let max_len = model.config().max_seq.saturating_sub(max_tokens).max(1);
    let mut responses = HashMap::with_capacity(samples.len());
    for s in samples {
        let input = encode_prompt(model.layout(), model.dim(), s.lang, &s.question, &s.options, &s.image_refs, max_len);
        let iv = intervention.filter(|iv| iv.memory.target_lang() == s.lang).map(|iv| (iv, s.dimension));
        let gen = generate(model, &input, max_tokens, iv).runtime(format!("generation failed for {}", s.id))?;
        responses.insert(s.id.clone(), render_tokens(&gen.tokens));
    }
    Ok(responses)
}

pub fn write_report(report: &EvalReport, out: Option<&Path>, format: Option<Format>) -> CliResult {
    match format {
        Some(Format::Table) => emit(out, &report.render_table()),
        Some(Format::Csv) => {
            let mut w = sink(out)?;
            report.write_csv(&mut w).runtime("cannot write CSV")
        }
        _ => emit(out, &report.to_json()),
    }
}

fn eval_run(args: EvalRunArgs, out: Option<&Path>, format: Option<Format>) -> CliResult {
    let samples = load_dataset(&args.dataset).data(format!("bad dataset {}", args.dataset.display()))?;
    let (responses, meta) = match &args.responses {
        Some(path) => {
            let responses = load_responses(path).data(format!("bad responses {}", path.display()))?;
            let model = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            (responses, RunMeta { model, mode: args.mode, ..RunMeta::default() })
        }
        None => toy_run(&args, &samples)?,
    };
    let report = score(&samples, &responses, meta).data("cannot score")?;
    if let Some(path) = &args.save_responses {
        let rows = samples.iter().map(|s| json!({"id": s.id, "response": responses[&s.id]}));
        write_jsonl(Some(path.as_path()), rows)?;
    }
    write_report(&report, out, format)
}

fn toy_run(args: &EvalRunArgs, samples: &[VqaSample]) -> CliResult<(HashMap<String, String>, RunMeta)> {
    let model = toy_model(&args.toy)?;
    let memory = match (&args.memory, args.no_intervention) {
        (Some(p), false) => Some(load_memory(p)?),
        (None, false) => {
            eprintln!("gxli: no --memory given, running without intervention");
            None
        }
        _ => None,
    };
    let mut meta = RunMeta { model: "toy".into(), mode: args.mode, ..RunMeta::default() };
    let Some(memory) = memory else {
        return Ok((toy_responses(&model, samples, args.max_tokens, None)?, meta));
    };
    if memory.dim() != model.dim() {
        return Err(Failure::data(format!("memory dim {} does not match model dim {}", memory.dim(), model.dim())));
    }
    let layer = memory.layer() as usize;
    if layer > model.num_layers() {
        return Err(Failure::data(format!("memory layer {layer} exceeds the model's {} layers", model.num_layers())));
    }
    if args.layer.is_some_and(|l| l != layer) {
        return Err(Failure::data(format!("--layer {} but the memory was built at layer {layer}", args.layer.unwrap())));
    }
    if !(args.alpha.is_finite() && args.alpha >= 0.0) {
        return Err(Failure::data("--alpha must be finite and >= 0"));
    }
    meta.layer = Some(layer);
    meta.alpha = Some(args.alpha);
    meta.k = Some(args.k);
    meta.dim_filter = args.dim_filter;
    let iv = Intervention { memory: &memory, k: args.k, alpha: args.alpha, dim_filter: args.dim_filter };
    Ok((toy_responses(&model, samples, args.max_tokens, Some(&iv))?, meta))
}
