// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic parallel corpora.
//!
//! Two variants share one [`SynthSpec`]:
//!
//! - token: English prompts plus their token-for-token translations into each
//!   target range of the [`VocabLayout`](super::VocabLayout); run them through
//!   a [`ToyTransformer`](super::ToyTransformer) to get hidden states.
//! - direct latent: states drawn directly as `h_tgt = h_en − v_lang + ε`,
//!   with `ε` isotropic of expected norm `noise_sigma`.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::language_offset;
use super::{ToyConfig, ToyError, ToyInput};
use crate::lang::{DimensionTag, Lang};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    /// Target languages; English is always generated as the reference.
    pub langs: Vec<Lang>,
    pub count: usize,
    /// Direct-latent variant only: expected L2 norm of `ε`.
    pub noise_sigma: f64,
    /// Direct-latent variant only: L2 norm of each `v_lang`.
    pub offset_norm: f64,
    /// Direct-latent variant only: L2 norm of the shared English centre.
    pub center_norm: f64,
    /// Direct-latent variant only: expected L2 distance of English states
    /// from their centre.
    pub spread: f64,
    pub visual_len: usize,
    pub question_len: usize,
    pub answer_len: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            langs: vec![Lang::ZH],
            count: 100,
            noise_sigma: 0.1,
            offset_norm: 1.0,
            center_norm: 4.0,
            spread: 0.25,
            visual_len: 2,
            question_len: 6,
            answer_len: 3,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), ToyError> {
        if self.count == 0 {
            return Err(ToyError::InvalidConfig("corpus count must be at least 1".into()));
        }
        if self.question_len == 0 {
            return Err(ToyError::InvalidConfig("question_len must be at least 1".into()));
        }
        for v in [self.noise_sigma, self.offset_norm, self.center_norm, self.spread] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ToyError::InvalidConfig("latent scales must be finite and >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Token ids of one prompt in one language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairText {
    /// Template prefix, question content and answer cue.
    pub question: Vec<u32>,
    /// Answer / reasoning-chain tokens that follow the question.
    pub answer: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelPair {
    pub pair_id: u64,
    pub dimension: DimensionTag,
    pub visual_ref: u64,
    pub visual_len: usize,
    pub texts: BTreeMap<Lang, PairText>,
}

impl ParallelPair {
    /// Model input for `lang`; `with_answer` appends the answer tokens.
    pub fn input<T: Scalar>(&self, lang: Lang, dim: usize, with_answer: bool) -> Option<ToyInput<T>> {
        let text = self.texts.get(&lang)?;
        let mut text_tokens = text.question.clone();
        if with_answer {
            text_tokens.extend_from_slice(&text.answer);
        }
        Some(ToyInput { visual_tokens: visual_tokens(self.visual_ref, self.visual_len, dim), text_tokens, lang })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelCorpus {
    pub pairs: Vec<ParallelPair>,
    /// Reference offset `v_lang` per target language.
    pub offsets: BTreeMap<Lang, Vec<f64>>,
}

/// Token variant. Offsets are the ones baked into a model built from `cfg`.
pub fn synth_parallel_corpus(cfg: &ToyConfig, spec: &SynthSpec) -> Result<ParallelCorpus, ToyError> {
    cfg.validate()?;
    spec.validate()?;
    let layout = cfg.layout();
    let en = layout.range(Lang::EN);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let draw = |n: usize, rng: &mut ChaCha8Rng| -> Vec<u32> { (0..n).map(|_| rng.random_range(en.clone())).collect() };
    let prefix = draw(2, &mut rng);
    let cue = draw(2, &mut rng);

    let mut langs = vec![Lang::EN];
    langs.extend(spec.langs.iter().copied().filter(|&l| l != Lang::EN));
    langs.dedup();

    let mut pairs = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let mut question = prefix.clone();
        question.extend(draw(spec.question_len, &mut rng));
        question.extend_from_slice(&cue);
        let answer = draw(spec.answer_len, &mut rng);
        let texts = langs
            .iter()
            .map(|&lang| {
                let tr = |ts: &[u32]| ts.iter().map(|&t| layout.translate(t, lang)).collect::<Vec<_>>();
                (lang, PairText { question: tr(&question), answer: tr(&answer) })
            })
            .collect();
        pairs.push(ParallelPair {
            pair_id: i as u64,
            dimension: DimensionTag::SCORED[i % DimensionTag::SCORED.len()],
            visual_ref: splitmix(spec.seed ^ splitmix(i as u64)),
            visual_len: spec.visual_len,
            texts,
        });
    }
    let offsets = langs[1..].iter().map(|&l| (l, language_offset(cfg, l))).collect();
    Ok(ParallelCorpus { pairs, offsets })
}

/// Deterministic stand-in "screenshot" embedding for a visual reference.
pub fn visual_tokens<T: Scalar>(visual_ref: u64, count: usize, dim: usize) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(visual_ref);
    (0..count)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    T::narrow(z)
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentPair {
    pub pair_id: u64,
    pub lang: Lang,
    pub h_en: Vec<f64>,
    pub h_tgt: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentCorpus {
    pub offsets: BTreeMap<Lang, Vec<f64>>,
    pub pairs: Vec<LatentPair>,
}

/// Direct-latent variant: `count` pairs per target language of dimension `dim`.
pub fn synth_latent_corpus(spec: &SynthSpec, dim: usize) -> Result<LatentCorpus, ToyError> {
    spec.validate()?;
    if dim == 0 {
        return Err(ToyError::InvalidConfig("dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let center = random_direction(&mut rng, dim, spec.center_norm);
    let offsets: BTreeMap<Lang, Vec<f64>> = spec
        .langs
        .iter()
        .filter(|&&l| l != Lang::EN)
        .map(|&l| (l, random_direction(&mut rng, dim, spec.offset_norm)))
        .collect();
    let spread_std = spec.spread / (dim as f64).sqrt();
    let noise_std = spec.noise_sigma / (dim as f64).sqrt();
    let mut pairs = Vec::with_capacity(spec.count * offsets.len());
    for i in 0..spec.count {
        let h_en: Vec<f64> = center.iter().map(|c| c + spread_std * gauss(&mut rng)).collect();
        for (&lang, v) in &offsets {
            let h_tgt = h_en.iter().zip(v).map(|(e, o)| e - o + noise_std * gauss(&mut rng)).collect();
            pairs.push(LatentPair { pair_id: i as u64, lang, h_en: h_en.clone(), h_tgt });
        }
    }
    Ok(LatentCorpus { offsets, pairs })
}

/// One JSONL line of a serialised token corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRow {
    pub pair_id: u64,
    pub lang: Lang,
    pub text_tokens: Vec<u32>,
    pub visual_ref: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_offset: Option<Vec<f64>>,
    #[serde(default = "none_tag")]
    pub dimension_tag: DimensionTag,
    #[serde(default)]
    pub answer_tokens: Vec<u32>,
    #[serde(default)]
    pub visual_len: usize,
}

fn none_tag() -> DimensionTag {
    DimensionTag::NONE
}

pub fn write_corpus_jsonl<W: Write>(corpus: &ParallelCorpus, mut out: W) -> io::Result<()> {
    for pair in &corpus.pairs {
        for (&lang, text) in &pair.texts {
            let row = CorpusRow {
                pair_id: pair.pair_id,
                lang,
                text_tokens: text.question.clone(),
                visual_ref: pair.visual_ref,
                latent_offset: corpus.offsets.get(&lang).cloned(),
                dimension_tag: pair.dimension,
                answer_tokens: text.answer.clone(),
                visual_len: pair.visual_len,
            };
            serde_json::to_writer(&mut out, &row)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Groups rows back into pairs (first-appearance order of `pair_id`).
pub fn read_corpus_jsonl<R: BufRead>(input: R) -> io::Result<ParallelCorpus> {
    let mut pairs: Vec<ParallelPair> = Vec::new();
    let mut index: BTreeMap<u64, usize> = BTreeMap::new();
    let mut offsets = BTreeMap::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: CorpusRow = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("corpus line {}: {e}", lineno + 1)))?;
        if let Some(off) = row.latent_offset {
            offsets.insert(row.lang, off);
        }
        let slot = *index.entry(row.pair_id).or_insert_with(|| {
            pairs.push(ParallelPair {
                pair_id: row.pair_id,
                dimension: row.dimension_tag,
                visual_ref: row.visual_ref,
                visual_len: row.visual_len,
                texts: BTreeMap::new(),
            });
            pairs.len() - 1
        });
        let text = PairText { question: row.text_tokens, answer: row.answer_tokens };
        if pairs[slot].texts.insert(row.lang, text).is_some() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("corpus line {}: duplicate ({}, {})", lineno + 1, row.pair_id, row.lang),
            ));
        }
    }
    Ok(ParallelCorpus { pairs, offsets })
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize, norm: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..dim).map(|_| gauss(rng)).collect();
    let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.into_iter().map(|v| v / n * norm).collect()
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_latent_differences_equal_offset() {
        let spec = SynthSpec { noise_sigma: 0.0, langs: vec![Lang::ZH, Lang::TH], count: 20, ..SynthSpec::default() };
        let corpus = synth_latent_corpus(&spec, 16).unwrap();
        assert_eq!(corpus.pairs.len(), 40);
        for p in &corpus.pairs {
            let v = &corpus.offsets[&p.lang];
            for ((e, t), o) in p.h_en.iter().zip(&p.h_tgt).zip(v) {
                assert!((e - t - o).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_latent_difference_converges_to_offset() {
        let sigma = 0.5;
        let spec = SynthSpec { noise_sigma: sigma, count: 1000, ..SynthSpec::default() };
        let dim = 8;
        let corpus = synth_latent_corpus(&spec, dim).unwrap();
        let v = &corpus.offsets[&Lang::ZH];
        let mut mean = vec![0.0; dim];
        for p in &corpus.pairs {
            for (m, (e, t)) in mean.iter_mut().zip(p.h_en.iter().zip(&p.h_tgt)) {
                *m += (e - t) / 1000.0;
            }
        }
        let bound = 3.0 * sigma / 1000f64.sqrt();
        for (m, o) in mean.iter().zip(v) {
            assert!((m - o).abs() <= bound, "{m} vs {o}");
        }
    }

    #[test]
    fn corpora_are_deterministic() {
        let spec = SynthSpec { langs: vec![Lang::ZH, Lang::FR], count: 5, ..SynthSpec::default() };
        let cfg = ToyConfig::default();
        assert_eq!(synth_parallel_corpus(&cfg, &spec).unwrap(), synth_parallel_corpus(&cfg, &spec).unwrap());
        assert_eq!(synth_latent_corpus(&spec, 4).unwrap(), synth_latent_corpus(&spec, 4).unwrap());
        let other = SynthSpec { seed: 1, ..spec.clone() };
        assert_ne!(synth_parallel_corpus(&cfg, &spec).unwrap(), synth_parallel_corpus(&cfg, &other).unwrap());
    }

    #[test]
    fn token_corpus_is_parallel_across_ranges() {
        let cfg = ToyConfig::default();
        let layout = cfg.layout();
        let spec = SynthSpec { langs: vec![Lang::JA], count: 3, ..SynthSpec::default() };
        let corpus = synth_parallel_corpus(&cfg, &spec).unwrap();
        for pair in &corpus.pairs {
            let en = &pair.texts[&Lang::EN];
            let ja = &pair.texts[&Lang::JA];
            assert_eq!(en.question.len(), 2 + 6 + 2);
            for (&e, &j) in en.question.iter().zip(&ja.question) {
                assert_eq!(layout.lang_of(e), Some(Lang::EN));
                assert_eq!(layout.lang_of(j), Some(Lang::JA));
                assert_eq!(layout.translate(j, Lang::EN), e);
            }
        }
        assert_eq!(corpus.offsets[&Lang::JA], language_offset(&cfg, Lang::JA));
    }

    #[test]
    fn jsonl_round_trip() {
        let cfg = ToyConfig::default();
        let spec = SynthSpec { langs: vec![Lang::RU], count: 4, ..SynthSpec::default() };
        let corpus = synth_parallel_corpus(&cfg, &spec).unwrap();
        let mut buf = Vec::new();
        write_corpus_jsonl(&corpus, &mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 8);
        assert_eq!(read_corpus_jsonl(&buf[..]).unwrap(), corpus);
    }

    #[test]
    fn rejects_empty_count() {
        let spec = SynthSpec { count: 0, ..SynthSpec::default() };
        assert!(synth_latent_corpus(&spec, 4).is_err());
    }
}
