// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded decoder-only transformer with an explicit residual stream.
//!
//! Weights are random (untrained). The vocabulary is split into one range per
//! language; every non-English token embeds as its English counterpart minus
//! a per-language offset plus a small per-token jitter, so parallel inputs
//! land in shifted language clusters the way multilingual models do.

mod corpus;
mod model;
pub mod text;

use thiserror::Error;

pub use corpus::{
    read_corpus_jsonl, synth_latent_corpus, synth_parallel_corpus, visual_tokens, write_corpus_jsonl,
    CorpusRow, LatentCorpus, LatentPair, PairText, ParallelCorpus, ParallelPair, SynthSpec,
};
pub use model::{Generation, Hook, HookRecord, LayerTrace, ToyTransformer};

use crate::lang::Lang;
use crate::repr::ReprError;

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("input has no tokens")]
    EmptyInput,
    #[error("sequence of {len} positions exceeds max_seq {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token {token} outside vocabulary of {vocab}")]
    TokenOutOfVocab { token: u32, vocab: usize },
    #[error("visual token {index} has dim {got}, model dim is {expected}")]
    VisualDim { index: usize, expected: usize, got: usize },
    #[error("layer {layer} out of range 0..={max}")]
    LayerOutOfRange { layer: usize, max: usize },
    #[error("steps must be at least 1")]
    InvalidSteps,
    #[error(transparent)]
    State(#[from] ReprError),
    #[error("hook failed: {0}")]
    Hook(Box<dyn std::error::Error + Send + Sync>),
}

/// Model hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub num_layers: usize,
    pub dim: usize,
    pub heads: usize,
    pub vocab_size: usize,
    pub max_seq: usize,
    pub seed: u64,
    /// L2 norm of the per-language embedding offset.
    pub lang_offset_norm: f64,
    /// Expected L2 norm of the per-token embedding jitter of non-English tokens.
    pub lang_jitter: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            num_layers: 12,
            dim: 64,
            heads: 4,
            vocab_size: 1024,
            max_seq: 256,
            seed: 0,
            lang_offset_norm: 3.0,
            lang_jitter: 0.3,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<(), ToyError> {
        let bad = |m: &str| Err(ToyError::InvalidConfig(m.to_string()));
        if self.num_layers == 0 || self.dim == 0 || self.heads == 0 || self.max_seq == 0 {
            return bad("num_layers, dim, heads and max_seq must be positive");
        }
        if !self.dim.is_multiple_of(self.heads) {
            return bad("dim must be divisible by heads");
        }
        if self.vocab_size < Lang::ALL.len() {
            return bad("vocab_size must leave at least one token per language");
        }
        if !(self.lang_offset_norm.is_finite() && self.lang_offset_norm >= 0.0)
            || !(self.lang_jitter.is_finite() && self.lang_jitter >= 0.0)
        {
            return bad("language offset and jitter must be finite and >= 0");
        }
        Ok(())
    }

    pub fn layout(&self) -> VocabLayout {
        VocabLayout::new(self.vocab_size)
    }
}

/// Contiguous per-language token ranges, in [`Lang::ALL`] order. Tokens past
/// the last range are language-neutral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabLayout {
    range_len: u32,
    vocab_size: u32,
}

impl VocabLayout {
    pub fn new(vocab_size: usize) -> Self {
        VocabLayout {
            range_len: (vocab_size / Lang::ALL.len()) as u32,
            vocab_size: vocab_size as u32,
        }
    }

    pub fn range_len(&self) -> u32 {
        self.range_len
    }

    pub fn range(&self, lang: Lang) -> std::ops::Range<u32> {
        let start = u32::from(lang.code()) * self.range_len;
        start..start + self.range_len
    }

    pub fn lang_of(&self, token: u32) -> Option<Lang> {
        if token >= self.vocab_size {
            return None;
        }
        Lang::from_code((token / self.range_len) as u8)
    }

    /// The same-offset token in `to`'s range; neutral tokens map to themselves.
    pub fn translate(&self, token: u32, to: Lang) -> u32 {
        match self.lang_of(token) {
            Some(_) => self.range(to).start + token % self.range_len,
            None => token,
        }
    }
}

/// One prompt: raw `dim`-sized visual vectors followed by text token ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyInput<T> {
    pub visual_tokens: Vec<Vec<T>>,
    pub text_tokens: Vec<u32>,
    pub lang: Lang,
}

impl<T> ToyInput<T> {
    pub fn len(&self) -> usize {
        self.visual_tokens.len() + self.text_tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_translation_is_a_bijection() {
        let layout = VocabLayout::new(1024);
        assert_eq!(layout.range_len(), 170);
        for t in layout.range(Lang::EN) {
            let zh = layout.translate(t, Lang::ZH);
            assert_eq!(layout.lang_of(zh), Some(Lang::ZH));
            assert_eq!(layout.translate(zh, Lang::EN), t);
        }
        assert_eq!(layout.lang_of(1023), None);
        assert_eq!(layout.translate(1023, Lang::TH), 1023);
    }

    #[test]
    fn config_validation() {
        assert!(ToyConfig::default().validate().is_ok());
        let cfg = ToyConfig { heads: 5, ..ToyConfig::default() };
        assert!(matches!(cfg.validate(), Err(ToyError::InvalidConfig(_))));
        let cfg = ToyConfig { num_layers: 0, ..ToyConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
