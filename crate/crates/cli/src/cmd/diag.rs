// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::Path;

use gxli_core::diagnostics::{cross_lingual_gap, gap_table, pca_project_2d, write_gap_csv};
use gxli_core::pipeline::pair_input;
use gxli_core::{Lang, State};
use serde_json::json;

use crate::args::{DiagCmd, DiagGapArgs, Format, StateSource};
use crate::fail::{Classify, CliResult, Failure};
use crate::io::{emit, emit_json, load_corpus, load_memory, read_states, sink, toy_model, StateRow};

pub fn run(cmd: DiagCmd, out: Option<&Path>, format: Option<Format>) -> CliResult {
    match cmd {
        DiagCmd::Gap(args) => gap(args, out, format),
        DiagCmd::Project(source) => project(&source, out, format),
    }
}

/// Question-only last-position states, one per (pair, language).
fn collect(source: &StateSource) -> CliResult<Vec<StateRow>> {
    if let Some(path) = &source.states {
        return read_states(path);
    }
    let path = source.pairs.as_ref().expect("clap requires --states or --pairs");
    let layer = source.layer.ok_or_else(|| Failure::data("--pairs needs --layer"))?;
    let model = toy_model(&source.toy)?;
    if layer > model.num_layers() {
        return Err(Failure::data(format!("layer {layer} out of range 0..={}", model.num_layers())));
    }
    let corpus = load_corpus(path)?;
    let mut rows = Vec::new();
    for pair in &corpus.pairs {
        for &lang in pair.texts.keys() {
            let trace = model.forward(&pair_input(&model, pair, lang, false).data("corpus pair")?).runtime("forward pass")?;
            let h = trace.extract_last_state(layer).runtime("state extraction")?.as_slice().to_vec();
            rows.push(StateRow { id: pair.pair_id.to_string(), lang, dimension_tag: pair.dimension, h });
        }
    }
    Ok(rows)
}

fn to_state(row: &StateRow) -> CliResult<State<f32>> {
    State::new(row.h.clone()).data(format!("state {}", row.id))
}

fn gap(args: DiagGapArgs, out: Option<&Path>, format: Option<Format>) -> CliResult {
    let rows = collect(&args.source)?;
    let memory = args.memory.as_deref().map(load_memory).transpose()?;
    let mut before: BTreeMap<Lang, Vec<State<f32>>> = BTreeMap::new();
    let mut after: BTreeMap<Lang, Vec<State<f32>>> = BTreeMap::new();
    for r in &rows {
        let h = to_state(r)?;
        if let Some(m) = &memory {
            let moved = if r.lang == m.target_lang() {
                let filter = args.dim_filter.then_some(r.dimension_tag);
                m.intervene(&h, args.k, args.alpha, filter).data(format!("intervention on {}", r.id))?
            } else {
                h.clone()
            };
            after.entry(r.lang).or_default().push(moved);
        }
        before.entry(r.lang).or_default().push(h);
    }
    let b = cross_lingual_gap(&before, Lang::EN).data("gap")?;
    let a = match memory {
        Some(_) => Some(cross_lingual_gap(&after, Lang::EN).data("gap")?),
        None => None,
    };
    match (format, a) {
        (Some(Format::Csv), Some(a)) => {
            let mut w = sink(out)?;
            write_gap_csv(&gap_table(&b, &a), &mut w).runtime("cannot write CSV")
        }
        (Some(Format::Csv), None) => {
            let mut t = String::from("lang,gap\n");
            for (l, g) in &b {
                t.push_str(&format!("{l},{g}\n"));
            }
            emit(out, &t)
        }
        (Some(Format::Table), Some(a)) => {
            let mut t = format!("{:<5}{:>10}{:>10}{:>10}\n", "lang", "before", "after", "change");
            for r in gap_table(&b, &a) {
                t.push_str(&format!(
                    "{:<5}{:>10.4}{:>10.4}{:>9.1}%\n",
                    r.lang.as_str(),
                    r.before,
                    r.after,
                    -100.0 * r.reduction()
                ));
            }
            emit(out, &t)
        }
        (Some(Format::Table), None) => {
            let mut t = format!("{:<5}{:>10}\n", "lang", "gap");
            for (l, g) in &b {
                t.push_str(&format!("{:<5}{g:>10.4}\n", l.as_str()));
            }
            emit(out, &t)
        }
        (_, Some(a)) => {
            let rows: Vec<_> = gap_table(&b, &a)
                .iter()
                .map(|r| json!({"lang": r.lang, "gap_before": r.before, "gap_after": r.after, "reduction": r.reduction()}))
                .collect();
            emit_json(out, &rows)
        }
        (_, None) => {
            let rows: Vec<_> = b.iter().map(|(l, g)| json!({"lang": l, "gap": g})).collect();
            emit_json(out, &rows)
        }
    }
}

fn project(source: &StateSource, out: Option<&Path>, format: Option<Format>) -> CliResult {
    let rows = collect(source)?;
    let states = rows.iter().map(to_state).collect::<CliResult<Vec<_>>>()?;
    let proj = pca_project_2d(&states).data("projection")?;
    match format {
        Some(Format::Json) => {
            let points: Vec<_> = rows
                .iter()
                .zip(&proj.coords)
                .map(|(r, [x, y])| json!({"id": r.id, "lang": r.lang, "x": x, "y": y}))
                .collect();
            emit_json(out, &json!({"explained_variance": proj.explained_variance, "points": points}))
        }
        Some(Format::Table) => {
            let mut t = format!(
                "explained variance {:.4} {:.4}\n{:<12}{:<5}{:>10}{:>10}\n",
                proj.explained_variance[0], proj.explained_variance[1], "id", "lang", "x", "y"
            );
            for (r, [x, y]) in rows.iter().zip(&proj.coords) {
                t.push_str(&format!("{:<12}{:<5}{x:>10.4}{y:>10.4}\n", r.id, r.lang.as_str()));
            }
            emit(out, &t)
        }
        _ => {
            let ids: Vec<String> = rows.iter().map(|r| r.id.clone()).collect();
            let langs: Vec<Lang> = rows.iter().map(|r| r.lang).collect();
            let mut w = sink(out)?;
            gxli_core::diagnostics::write_projection_csv(&ids, &langs, &proj, &mut w).runtime("cannot write CSV")
        }
    }
}
