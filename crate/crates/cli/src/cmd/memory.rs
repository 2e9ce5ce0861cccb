// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use gxli_core::memory::write_manifest;
use gxli_core::pipeline::{build_memory, KeySource};
use gxli_core::{Lang, Memory, State};
use serde_json::{json, Value};

use crate::args::{Format, KeySourceArg, MemoryBuildArgs, MemoryCmd};
use crate::fail::{Classify, CliResult, Failure};
use crate::io::{emit, emit_json, load_memory, read_pairs, target_lang, toy_model, PairInput};

pub fn run(cmd: MemoryCmd, out: Option<&Path>, format: Option<Format>) -> CliResult {
    match cmd {
        MemoryCmd::Build(args) => build(args, out, format),
        MemoryCmd::Inspect { path } => report(&load_memory(&path)?, format),
        MemoryCmd::Merge { inputs } => {
            let mems = inputs.iter().map(|p| load_memory(p)).collect::<CliResult<Vec<_>>>()?;
            let merged = Memory::merge(&mems).data("cannot merge")?;
            store(&merged, out)?;
            report(&merged, format)
        }
    }
}

pub fn summary(mem: &Memory) -> Value {
    let mut dims: BTreeMap<String, usize> = BTreeMap::new();
    for e in mem.entries() {
        *dims.entry(e.dimension_tag.to_string()).or_default() += 1;
    }
    json!({
        "N": mem.len(),
        "dim": mem.dim(),
        "layer": mem.layer(),
        "lang": mem.target_lang(),
        "dimensions": dims,
    })
}

fn report(mem: &Memory, format: Option<Format>) -> CliResult {
    let s = summary(mem);
    let dims = s["dimensions"].as_object().cloned().unwrap_or_default();
    match format {
        Some(Format::Table) => {
            let mut t = format!("N      {}\ndim    {}\nlayer  {}\nlang   {}\n", mem.len(), mem.dim(), mem.layer(), mem.target_lang());
            for (tag, n) in &dims {
                t.push_str(&format!("  {tag:<5}{n}\n"));
            }
            emit(None, &t)
        }
        Some(Format::Csv) => {
            let mut t = format!("field,value\nN,{}\ndim,{}\nlayer,{}\nlang,{}\n", mem.len(), mem.dim(), mem.layer(), mem.target_lang());
            for (tag, n) in &dims {
                t.push_str(&format!("{tag},{n}\n"));
            }
            emit(None, &t)
        }
        _ => emit_json(None, &s),
    }
}

fn store(mem: &Memory, out: Option<&Path>) -> CliResult {
    match out {
        Some(p) => mem.save(p).runtime(format!("cannot write {}", p.display())),
        None => Err(Failure::data("memory output needs --out")),
    }
}

fn build(args: MemoryBuildArgs, out: Option<&Path>, format: Option<Format>) -> CliResult {
    let (mem, note) = match read_pairs(&args.pairs)? {
        PairInput::States(rows) => {
            let first = rows.first().ok_or_else(|| Failure::data("pair file has no rows"))?;
            let lang = args.lang.unwrap_or(first.lang);
            let mut mem = Memory::new(first.h_en.len(), args.layer as u32, lang).data("bad pair file")?;
            for (i, r) in rows.iter().enumerate() {
                if r.lang != lang {
                    return Err(Failure::data(format!("row {}: language {} but memory target is {lang}", i + 1, r.lang)));
                }
                let en = State::new(r.h_en.clone()).data(format!("row {}: h_en", i + 1))?;
                let tgt = State::new(r.h_tgt.clone()).data(format!("row {}: h_tgt", i + 1))?;
                mem.add_pair(&en, &tgt, r.sample_id, lang, r.dimension_tag).data(format!("row {}", i + 1))?;
            }
            (mem, "state pairs")
        }
        PairInput::Corpus(corpus) => {
            let lang = target_lang(&corpus, args.lang)?;
            if lang == Lang::EN {
                return Err(Failure::data("target language must not be EN"));
            }
            let model = toy_model(&args.toy)?;
            let mem = build_memory(&model, &corpus.pairs, args.layer, lang, key_source(args.keys)).data("cannot build memory")?;
            (mem, "toy corpus")
        }
    };
    store(&mem, out)?;
    if let Some(path) = &args.manifest {
        let file = File::create(path).runtime(format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(file);
        let source = args.pairs.display().to_string();
        write_manifest(&mem, &mut w, |id| format!("{note} {source} #{id}")).runtime("cannot write manifest")?;
        w.flush().runtime("cannot write manifest")?;
    }
    report(&mem, format)
}

pub fn key_source(arg: KeySourceArg) -> KeySource {
    match arg {
        KeySourceArg::QuestionAnswer => KeySource::QuestionAnswer,
        KeySourceArg::QuestionOnly => KeySource::QuestionOnly,
    }
}
