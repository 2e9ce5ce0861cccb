// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::Write;
use std::path::Path;

use gxli_core::eval::{Choice, VqaSample};
use gxli_core::toy::{synth_latent_corpus, synth_parallel_corpus, write_corpus_jsonl, SynthSpec, ToyConfig};
use gxli_core::{DimensionTag, Lang};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::args::{FixtureCmd, FixtureKind, SynthArgs};
use crate::fail::{Classify, CliResult};
use crate::io::{sink, write_jsonl, StatePair};

const VERBS: [&str; 8] = ["open", "close", "share", "delete", "search", "save", "rename", "select"];
const NOUNS: [&str; 16] = [
    "settings", "profile", "photo", "message", "folder", "cart", "menu", "tab", "filter", "account", "playlist",
    "draft", "contact", "map", "calendar", "note",
];
const WIDGETS: [&str; 8] = ["button", "icon", "toggle", "link", "slider", "field", "card", "banner"];

pub fn run(cmd: FixtureCmd, seed: u64, out: Option<&Path>) -> CliResult {
    let FixtureCmd::Synth(args) = cmd;
    let spec = SynthSpec {
        seed,
        langs: args.langs.clone(),
        count: args.count,
        noise_sigma: args.noise_sigma,
        offset_norm: args.offset_norm,
        ..SynthSpec::default()
    };
    match args.kind {
        FixtureKind::Tokens => {
            let cfg = ToyConfig { num_layers: args.toy.layers, dim: args.toy.dim, seed: args.toy.seed, ..ToyConfig::default() };
            let corpus = synth_parallel_corpus(&cfg, &spec).data("invalid fixture settings")?;
            let mut w = sink(out)?;
            write_corpus_jsonl(&corpus, &mut w).runtime("write failed")?;
            w.flush().runtime("write failed")
        }
        FixtureKind::Latent => {
            let corpus = synth_latent_corpus(&spec, args.dim).data("invalid fixture settings")?;
            let narrow = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<_>>();
            let rows = corpus.pairs.iter().map(|p| StatePair {
                sample_id: p.pair_id,
                lang: p.lang,
                dimension_tag: DimensionTag::SCORED[(p.pair_id % 8) as usize],
                h_en: narrow(&p.h_en),
                h_tgt: narrow(&p.h_tgt),
            });
            write_jsonl(out, rows)
        }
        FixtureKind::Dataset => {
            let rows = dataset(&args, seed);
            write_jsonl(out, rows)
        }
    }
}

/// `count` items per (language, dimension). Every language gets the same
/// item text, so rows with equal index are parallel.
fn dataset(args: &SynthArgs, seed: u64) -> Vec<VqaSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut langs = vec![Lang::EN];
    langs.extend(args.langs.iter().copied().filter(|&l| l != Lang::EN));
    let mut items = Vec::new();
    for dim in DimensionTag::SCORED {
        for i in 0..args.count {
            let verb = *VERBS.choose(&mut rng).expect("non-empty");
            let noun = *NOUNS.choose(&mut rng).expect("non-empty");
            let question = format!("Which element should you tap to {verb} the {noun}?");
            let options: [String; 4] = std::array::from_fn(|_| {
                format!("the {} {}", NOUNS.choose(&mut rng).expect("non-empty"), WIDGETS.choose(&mut rng).expect("non-empty"))
            });
            let answer = [Choice::A, Choice::B, Choice::C, Choice::D][rng.random_range(0..4)];
            let screens = if dim.is_sequence() { 2 } else { 1 };
            let image_refs: Vec<String> = (0..screens).map(|s| format!("screens/{dim}_{i}_{s}.png")).collect();
            items.push((dim, i, question, options, answer, image_refs));
        }
    }
    let mut out = Vec::with_capacity(items.len() * langs.len());
    for lang in langs {
        for (dim, i, question, options, answer, image_refs) in &items {
            out.push(VqaSample {
                id: format!("{lang}-{dim}-{i}"),
                lang,
                dimension: *dim,
                question: question.clone(),
                options: options.clone(),
                answer: *answer,
                image_refs: image_refs.clone(),
                line: 0,
            });
        }
    }
    out
}

