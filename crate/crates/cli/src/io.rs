// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use gxli_core::toy::{read_corpus_jsonl, ParallelCorpus, ToyConfig, ToyTransformer};
use gxli_core::{DimensionTag, Lang, Memory};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::ToyArgs;
use crate::fail::{Classify, CliResult, Failure};

/// `--out` file, or standard output.
pub fn sink(out: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).runtime(format!("cannot create {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn emit(out: Option<&Path>, text: &str) -> CliResult {
    let mut w = sink(out)?;
    w.write_all(text.as_bytes()).runtime("write failed")?;
    if !text.ends_with('\n') {
        w.write_all(b"\n").runtime("write failed")?;
    }
    w.flush().runtime("write failed")
}

pub fn emit_json(out: Option<&Path>, value: &impl Serialize) -> CliResult {
    emit(out, &serde_json::to_string_pretty(value).runtime("cannot serialise output")?)
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).data(format!("cannot read {}", path.display()))
}

pub fn load_memory(path: &Path) -> CliResult<Memory> {
    Memory::load(path).data(format!("cannot load memory {}", path.display()))
}

pub fn toy_model(args: &ToyArgs) -> CliResult<ToyTransformer<f32>> {
    let cfg = ToyConfig { num_layers: args.layers, dim: args.dim, seed: args.seed, ..ToyConfig::default() };
    ToyTransformer::new(cfg).data("invalid toy model settings")
}

pub fn load_corpus(path: &Path) -> CliResult<ParallelCorpus> {
    let file = File::open(path).data(format!("cannot read {}", path.display()))?;
    read_corpus_jsonl(BufReader::new(file)).data(format!("bad corpus {}", path.display()))
}

/// The corpus' single non-English language, unless one is given.
pub fn target_lang(corpus: &ParallelCorpus, explicit: Option<Lang>) -> CliResult<Lang> {
    if let Some(l) = explicit {
        return Ok(l);
    }
    let langs: BTreeSet<Lang> =
        corpus.pairs.iter().flat_map(|p| p.texts.keys().copied()).filter(|&l| l != Lang::EN).collect();
    match langs.len() {
        1 => Ok(*langs.iter().next().unwrap()),
        0 => Err(Failure::data("corpus has no target-language rows")),
        _ => Err(Failure::data(format!("corpus holds several target languages {langs:?}; pass --lang"))),
    }
}

/// One stored pair of hidden states, as written by an external runtime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePair {
    pub sample_id: u64,
    pub lang: Lang,
    #[serde(default = "no_tag")]
    pub dimension_tag: DimensionTag,
    pub h_en: Vec<f32>,
    pub h_tgt: Vec<f32>,
}

/// One hidden state for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRow {
    pub id: String,
    pub lang: Lang,
    pub dimension_tag: DimensionTag,
    pub h: Vec<f32>,
}

#[derive(Deserialize)]
struct RawStateRow {
    id: Value,
    lang: Lang,
    #[serde(default = "no_tag")]
    dimension_tag: DimensionTag,
    #[serde(alias = "vector", alias = "state")]
    h: Vec<f32>,
}

fn no_tag() -> DimensionTag {
    DimensionTag::NONE
}

fn jsonl<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> CliResult<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).data(format!("{} line {}", path.display(), i + 1)))
        .collect()
}

pub fn read_states(path: &Path) -> CliResult<Vec<StateRow>> {
    let rows: Vec<RawStateRow> = jsonl(path, &read_text(path)?)?;
    Ok(rows
        .into_iter()
        .map(|r| StateRow {
            id: match r.id {
                Value::String(s) => s,
                other => other.to_string(),
            },
            lang: r.lang,
            dimension_tag: r.dimension_tag,
            h: r.h,
        })
        .collect())
}

/// Memory-building input: precomputed state pairs or a toy corpus.
pub enum PairInput {
    States(Vec<StatePair>),
    Corpus(ParallelCorpus),
}

pub fn read_pairs(path: &Path) -> CliResult<PairInput> {
    let text = read_text(path)?;
    let first = text.lines().find(|l| !l.trim().is_empty()).ok_or_else(|| Failure::data("pair file is empty"))?;
    let probe: Value = serde_json::from_str(first).data(format!("{} line 1", path.display()))?;
    if probe.get("h_en").is_some() {
        Ok(PairInput::States(jsonl(path, &text)?))
    } else {
        read_corpus_jsonl(text.as_bytes()).data(format!("bad corpus {}", path.display())).map(PairInput::Corpus)
    }
}

pub fn write_jsonl<T: Serialize>(out: Option<&Path>, rows: impl IntoIterator<Item = T>) -> CliResult {
    let mut w = sink(out)?;
    for row in rows {
        serde_json::to_writer(&mut w, &row).runtime("cannot serialise row")?;
        w.write_all(b"\n").runtime("write failed")?;
    }
    w.flush().runtime("write failed")
}
