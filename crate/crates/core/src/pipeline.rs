// SPDX-License-Identifier: MIT OR Apache-2.0

//! Glue between the toy model, the memory and the injection formula.

use thiserror::Error;

use crate::lang::{DimensionTag, Lang};
use crate::memory::{MemoryError, XlMemory};
use crate::repr::State;
use crate::scalar::Scalar;
use crate::toy::{Generation, Hook, ParallelCorpus, ParallelPair, ToyError, ToyInput, ToyTransformer};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Toy(#[from] ToyError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("pair {pair_id} has no {lang} text")]
    MissingLanguage { pair_id: u64, lang: Lang },
}

/// Which input the memory keys are taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KeySource {
    /// Question followed by its answer / reasoning chain.
    #[default]
    QuestionAnswer,
    /// Question only, matching what a query looks like at inference time.
    QuestionOnly,
}

/// Retrieval and strength settings for one intervention run.
#[derive(Debug, Clone, Copy)]
pub struct Intervention<'m, T> {
    pub memory: &'m XlMemory<T>,
    pub k: usize,
    pub alpha: f64,
    /// Restrict retrieval to the query's dimension tag.
    pub dim_filter: bool,
}

impl<'m, T: Scalar> Intervention<'m, T> {
    /// The injection applied to one state.
    pub fn apply(&self, h: &State<T>, tag: DimensionTag) -> Result<State<T>, MemoryError> {
        let filter = self.dim_filter.then_some(tag);
        self.memory.intervene(h, self.k, self.alpha, filter)
    }

    /// Hook for [`ToyTransformer::generate_with_hook`] at the memory's layer.
    pub fn hook(&self, tag: DimensionTag) -> Hook<'m, T> {
        let this = *self;
        Hook::new(self.memory.layer() as usize, move |h: &State<T>| this.apply(h, tag))
    }
}

/// Last-position state of `pair` in `lang` at `layer`.
pub fn pair_state<T: Scalar>(
    model: &ToyTransformer<T>,
    pair: &ParallelPair,
    lang: Lang,
    layer: usize,
    key_source: KeySource,
) -> Result<State<T>, PipelineError> {
    let input = pair_input(model, pair, lang, key_source == KeySource::QuestionAnswer)?;
    let trace = model.forward(&input)?;
    Ok(trace.extract_last_state(layer)?.clone())
}

pub fn pair_input<T: Scalar>(
    model: &ToyTransformer<T>,
    pair: &ParallelPair,
    lang: Lang,
    with_answer: bool,
) -> Result<ToyInput<T>, PipelineError> {
    pair.input(lang, model.dim(), with_answer)
        .ok_or(PipelineError::MissingLanguage { pair_id: pair.pair_id, lang })
}

/// Builds a `target`-language memory at `layer` from the given pairs.
pub fn build_memory<'c, T: Scalar>(
    model: &ToyTransformer<T>,
    pairs: impl IntoIterator<Item = &'c ParallelPair>,
    layer: usize,
    target: Lang,
    key_source: KeySource,
) -> Result<XlMemory<T>, PipelineError> {
    let mut mem = XlMemory::new(model.dim(), layer as u32, target)?;
    for pair in pairs {
        let h_en = pair_state(model, pair, Lang::EN, layer, key_source)?;
        let h_tgt = pair_state(model, pair, target, layer, key_source)?;
        mem.add_pair(&h_en, &h_tgt, pair.pair_id, target, pair.dimension)?;
    }
    Ok(mem)
}

/// One memory per layer in `layers`, from a single forward pass per input.
pub fn build_memories<'c, T: Scalar>(
    model: &ToyTransformer<T>,
    pairs: impl IntoIterator<Item = &'c ParallelPair>,
    layers: &[usize],
    target: Lang,
    key_source: KeySource,
) -> Result<Vec<XlMemory<T>>, PipelineError> {
    let mut mems = layers
        .iter()
        .map(|&l| XlMemory::new(model.dim(), l as u32, target))
        .collect::<Result<Vec<_>, _>>()?;
    let with_answer = key_source == KeySource::QuestionAnswer;
    for pair in pairs {
        let en = model.forward(&pair_input(model, pair, Lang::EN, with_answer)?)?;
        let tgt = model.forward(&pair_input(model, pair, target, with_answer)?)?;
        for (mem, &l) in mems.iter_mut().zip(layers) {
            mem.add_pair(en.extract_last_state(l)?, tgt.extract_last_state(l)?, pair.pair_id, target, pair.dimension)?;
        }
    }
    Ok(mems)
}

/// As [`build_memory`] over a whole corpus.
pub fn build_memory_from_corpus<T: Scalar>(
    model: &ToyTransformer<T>,
    corpus: &ParallelCorpus,
    layer: usize,
    target: Lang,
    key_source: KeySource,
) -> Result<XlMemory<T>, PipelineError> {
    build_memory(model, &corpus.pairs, layer, target, key_source)
}

/// Greedy generation with an optional intervention on the first token.
pub fn generate<T: Scalar>(
    model: &ToyTransformer<T>,
    input: &ToyInput<T>,
    steps: usize,
    intervention: Option<(&Intervention<'_, T>, DimensionTag)>,
) -> Result<Generation<T>, PipelineError> {
    let hook = intervention.map(|(iv, tag)| iv.hook(tag));
    Ok(model.generate_with_hook(input, steps, hook)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::{synth_parallel_corpus, SynthSpec, ToyConfig};

    fn setup() -> (ToyTransformer<f32>, ParallelCorpus) {
        let cfg = ToyConfig { num_layers: 4, dim: 16, heads: 2, vocab_size: 120, max_seq: 32, ..ToyConfig::default() };
        let corpus = synth_parallel_corpus(&cfg, &SynthSpec { count: 12, ..SynthSpec::default() }).unwrap();
        (ToyTransformer::new(cfg).unwrap(), corpus)
    }

    #[test]
    fn memory_from_corpus_has_one_entry_per_pair() {
        let (model, corpus) = setup();
        let mem = build_memory_from_corpus(&model, &corpus, 2, Lang::ZH, KeySource::QuestionAnswer).unwrap();
        assert_eq!(mem.len(), 12);
        assert_eq!(mem.layer(), 2);
        let pair = &corpus.pairs[3];
        let key = pair_state(&model, pair, Lang::ZH, 2, KeySource::QuestionAnswer).unwrap();
        assert_eq!(mem.entries()[3].key, key);
        assert!(matches!(
            build_memory_from_corpus(&model, &corpus, 2, Lang::FR, KeySource::QuestionOnly),
            Err(PipelineError::MissingLanguage { lang: Lang::FR, .. })
        ));
    }

    #[test]
    fn multi_layer_build_matches_single() {
        let (model, corpus) = setup();
        let mems = build_memories(&model, &corpus.pairs, &[1, 3], Lang::ZH, KeySource::QuestionAnswer).unwrap();
        for mem in &mems {
            let single =
                build_memory(&model, &corpus.pairs, mem.layer() as usize, Lang::ZH, KeySource::QuestionAnswer).unwrap();
            assert_eq!(mem.entries(), single.entries());
        }
    }

    #[test]
    fn hook_matches_direct_application() {
        let (model, corpus) = setup();
        let mem = build_memory_from_corpus(&model, &corpus, 1, Lang::ZH, KeySource::QuestionOnly).unwrap();
        let iv = Intervention { memory: &mem, k: 3, alpha: 0.4, dim_filter: false };
        let input = pair_input(&model, &corpus.pairs[0], Lang::ZH, false).unwrap();
        let gen = generate(&model, &input, 2, Some((&iv, DimensionTag::AU))).unwrap();
        let rec = gen.prompt_trace.hook.unwrap();
        assert_eq!(rec.replaced, iv.apply(&rec.original, DimensionTag::AU).unwrap());
    }
}
