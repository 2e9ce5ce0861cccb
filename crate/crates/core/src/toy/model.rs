// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ToyConfig, ToyError, ToyInput, VocabLayout};
use crate::lang::Lang;
use crate::repr::{ReprError, State};
use crate::scalar::Scalar;

const LN_EPS: f64 = 1e-5;

/// Row-major `rows × cols`; `apply` computes `x · W`.
#[derive(Debug, Clone)]
struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Self {
        let data = (0..rows * cols)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::narrow(z * std)
            })
            .collect();
        Matrix { rows, cols, data }
    }

    fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.rows);
        let mut acc = vec![0.0f64; self.cols];
        for (r, &xv) in x.iter().enumerate() {
            let xv = xv.widen();
            for (a, w) in acc.iter_mut().zip(self.row(r)) {
                *a += xv * w.widen();
            }
        }
        acc.into_iter().map(T::narrow).collect()
    }
}

#[derive(Debug, Clone)]
struct Block<T> {
    ln1: Vec<T>,
    wq: Matrix<T>,
    wk: Matrix<T>,
    wv: Matrix<T>,
    wo: Matrix<T>,
    ln2: Vec<T>,
    w1: Matrix<T>,
    w2: Matrix<T>,
}

/// Pre-norm decoder: `h = h_prev + attn(LN(h_prev)) + mlp(LN(h_prev + attn))`.
#[derive(Debug, Clone)]
pub struct ToyTransformer<T> {
    cfg: ToyConfig,
    layout: VocabLayout,
    tok_emb: Matrix<T>,
    pos_emb: Matrix<T>,
    blocks: Vec<Block<T>>,
    ln_f: Vec<T>,
}

/// Replaces the last prompt position's state at `layer` during decode step 0.
pub struct Hook<'a, T> {
    pub layer: usize,
    transform: Transform<'a, T>,
}

type HookFailure = Box<dyn std::error::Error + Send + Sync>;
type Transform<'a, T> = Box<dyn FnMut(&State<T>) -> Result<State<T>, HookFailure> + 'a>;

impl<'a, T> Hook<'a, T> {
    pub fn new<E>(layer: usize, mut transform: impl FnMut(&State<T>) -> Result<State<T>, E> + 'a) -> Self
    where
        E: Into<HookFailure>,
    {
        Hook { layer, transform: Box::new(move |s: &State<T>| transform(s).map_err(Into::into)) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HookRecord<T> {
    pub layer: usize,
    pub position: usize,
    pub original: State<T>,
    pub replaced: State<T>,
}

/// Per-layer, per-position residual-stream record of one prompt pass.
///
/// `states[0]` holds the embeddings; for `l >= 1`, `states[l][j]` was computed
/// as `(states[l-1][j] + attn[l-1][j]) + mlp[l-1][j]`. When a hook fired, the
/// hooked cell holds the replacement and [`HookRecord::original`] the value
/// the block produced.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace<T> {
    pub visual_len: usize,
    pub text_len: usize,
    states: Vec<Vec<State<T>>>,
    attn: Vec<Vec<State<T>>>,
    mlp: Vec<Vec<State<T>>>,
    pub hook: Option<HookRecord<T>>,
}

impl<T: Scalar> LayerTrace<T> {
    pub fn num_layers(&self) -> usize {
        self.states.len() - 1
    }

    pub fn positions(&self) -> usize {
        self.visual_len + self.text_len
    }

    pub fn state(&self, layer: usize, position: usize) -> &State<T> {
        &self.states[layer][position]
    }

    /// Attention output of block `layer` (1-based, like the states).
    pub fn attn_out(&self, layer: usize, position: usize) -> &State<T> {
        &self.attn[layer - 1][position]
    }

    pub fn mlp_out(&self, layer: usize, position: usize) -> &State<T> {
        &self.mlp[layer - 1][position]
    }

    /// State of the final input position at `layer`.
    pub fn extract_last_state(&self, layer: usize) -> Result<&State<T>, ToyError> {
        let max = self.num_layers();
        if layer > max {
            return Err(ToyError::LayerOutOfRange { layer, max });
        }
        Ok(&self.states[layer][self.positions() - 1])
    }
}

#[derive(Debug, Clone)]
pub struct Generation<T> {
    pub tokens: Vec<u32>,
    /// Trace of the prompt pass (decode step 0), including any hook replacement.
    pub prompt_trace: LayerTrace<T>,
    pub hook_calls: usize,
}

struct KvCache<T> {
    keys: Vec<Vec<Vec<T>>>,
    values: Vec<Vec<Vec<T>>>,
}

impl<T> KvCache<T> {
    fn new(layers: usize) -> Self {
        KvCache {
            keys: (0..layers).map(|_| Vec::new()).collect(),
            values: (0..layers).map(|_| Vec::new()).collect(),
        }
    }
}

struct PositionOut<T> {
    states: Vec<Vec<T>>,
    attn: Vec<Vec<T>>,
    mlp: Vec<Vec<T>>,
    hooked: Option<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> ToyTransformer<T> {
    pub fn new(cfg: ToyConfig) -> Result<Self, ToyError> {
        cfg.validate()?;
        let d = cfg.dim;
        let layout = cfg.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut tok_emb = Matrix::<T>::random(&mut rng, cfg.vocab_size, d, 1.0);
        let pos_emb = Matrix::random(&mut rng, cfg.max_seq, d, 0.2);
        let resid = 1.0 / (2.0 * cfg.num_layers as f64).sqrt();
        let inv_sqrt_d = 1.0 / (d as f64).sqrt();
        let blocks = (0..cfg.num_layers)
            .map(|_| Block {
                ln1: vec![T::one(); d],
                wq: Matrix::random(&mut rng, d, d, inv_sqrt_d),
                wk: Matrix::random(&mut rng, d, d, inv_sqrt_d),
                wv: Matrix::random(&mut rng, d, d, inv_sqrt_d),
                wo: Matrix::random(&mut rng, d, d, resid * inv_sqrt_d),
                ln2: vec![T::one(); d],
                w1: Matrix::random(&mut rng, d, 4 * d, inv_sqrt_d),
                w2: Matrix::random(&mut rng, 4 * d, d, resid * 0.5 * inv_sqrt_d),
            })
            .collect();

        // Non-English rows: English counterpart − offset(lang) + jitter.
        let jitter_std = cfg.lang_jitter / (d as f64).sqrt();
        for lang in Lang::ALL.into_iter().filter(|&l| l != Lang::EN) {
            let offset = language_offset(&cfg, lang);
            for token in layout.range(lang) {
                let src = layout.translate(token, Lang::EN) as usize;
                for (c, o) in offset.iter().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let base = tok_emb.data[src * d + c].widen();
                    tok_emb.data[token as usize * d + c] = T::narrow(base - o + jitter_std * z);
                }
            }
        }

        Ok(ToyTransformer { layout, tok_emb, pos_emb, blocks, ln_f: vec![T::one(); d], cfg })
    }

    pub fn config(&self) -> &ToyConfig {
        &self.cfg
    }

    pub fn layout(&self) -> VocabLayout {
        self.layout
    }

    pub fn num_layers(&self) -> usize {
        self.cfg.num_layers
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim
    }

    /// The embedding offset separating `lang` tokens from their English counterparts.
    pub fn language_offset(&self, lang: Lang) -> Vec<f64> {
        language_offset(&self.cfg, lang)
    }

    /// Embedding row of a token.
    pub fn token_embedding(&self, token: u32) -> Result<State<T>, ToyError> {
        self.check_token(token)?;
        Ok(State::new(self.tok_emb.row(token as usize).to_vec())?)
    }

    /// Runs the prompt and records every layer's residual-stream state.
    pub fn forward(&self, input: &ToyInput<T>) -> Result<LayerTrace<T>, ToyError> {
        self.validate_input(input, 0)?;
        let mut cache = KvCache::new(self.cfg.num_layers);
        Ok(self.prefill(input, &mut cache, None)?.0)
    }

    /// Greedy decoding for `steps` tokens. The hook, if any, runs once: on the
    /// last prompt position at `hook.layer` while producing the first token.
    /// Later steps attend to the cached keys and values of the modified pass.
    pub fn generate_with_hook(
        &self,
        input: &ToyInput<T>,
        steps: usize,
        hook: Option<Hook<'_, T>>,
    ) -> Result<Generation<T>, ToyError> {
        if steps == 0 {
            return Err(ToyError::InvalidSteps);
        }
        if let Some(h) = &hook {
            if h.layer > self.cfg.num_layers {
                return Err(ToyError::LayerOutOfRange { layer: h.layer, max: self.cfg.num_layers });
            }
        }
        self.validate_input(input, steps - 1)?;
        let mut cache = KvCache::new(self.cfg.num_layers);
        let (prompt_trace, last, hook_calls) = self.prefill(input, &mut cache, hook)?;
        let mut tokens = Vec::with_capacity(steps);
        let mut next = self.next_token(&last);
        tokens.push(next);
        for pos in input.len()..input.len() + steps - 1 {
            let x0 = self.embed_token(next, pos);
            let out = self.run_position(x0, pos, &mut cache, None)?;
            next = self.next_token(out.states.last().expect("at least one layer"));
            tokens.push(next);
        }
        Ok(Generation { tokens, prompt_trace, hook_calls })
    }

    fn prefill(
        &self,
        input: &ToyInput<T>,
        cache: &mut KvCache<T>,
        mut hook: Option<Hook<'_, T>>,
    ) -> Result<(LayerTrace<T>, Vec<T>, usize), ToyError> {
        let layers = self.cfg.num_layers;
        let total = input.len();
        let mut states: Vec<Vec<State<T>>> = (0..=layers).map(|_| Vec::with_capacity(total)).collect();
        let mut attn: Vec<Vec<State<T>>> = (0..layers).map(|_| Vec::with_capacity(total)).collect();
        let mut mlp: Vec<Vec<State<T>>> = (0..layers).map(|_| Vec::with_capacity(total)).collect();
        let mut record = None;
        let mut calls = 0;
        let mut last = Vec::new();

        for pos in 0..total {
            let x0 = if pos < input.visual_tokens.len() {
                self.embed_visual(&input.visual_tokens[pos], pos)
            } else {
                self.embed_token(input.text_tokens[pos - input.visual_tokens.len()], pos)
            };
            let is_last = pos + 1 == total;
            let h = if is_last { hook.as_mut() } else { None };
            let out = self.run_position(x0, pos, cache, h)?;
            if let Some((original, replaced)) = out.hooked {
                calls += 1;
                let layer = hook.as_ref().map(|h| h.layer).unwrap_or_default();
                record = Some(HookRecord {
                    layer,
                    position: pos,
                    original: State::new(original)?,
                    replaced: State::new(replaced)?,
                });
            }
            for (l, s) in out.states.into_iter().enumerate() {
                states[l].push(State::new(s)?);
            }
            for (l, (a, m)) in out.attn.into_iter().zip(out.mlp).enumerate() {
                attn[l].push(State::new(a)?);
                mlp[l].push(State::new(m)?);
            }
            if is_last {
                last = states[layers][pos].as_slice().to_vec();
            }
        }
        let trace = LayerTrace {
            visual_len: input.visual_tokens.len(),
            text_len: input.text_tokens.len(),
            states,
            attn,
            mlp,
            hook: record,
        };
        Ok((trace, last, calls))
    }

    fn run_position(
        &self,
        x0: Vec<T>,
        pos: usize,
        cache: &mut KvCache<T>,
        mut hook: Option<&mut Hook<'_, T>>,
    ) -> Result<PositionOut<T>, ToyError> {
        let layers = self.cfg.num_layers;
        let mut out = PositionOut {
            states: Vec::with_capacity(layers + 1),
            attn: Vec::with_capacity(layers),
            mlp: Vec::with_capacity(layers),
            hooked: None,
        };
        let mut x = x0;
        if let Some(h) = hook.as_deref_mut().filter(|h| h.layer == 0) {
            x = apply_hook(h, &x, &mut out.hooked)?;
        }
        out.states.push(x.clone());
        for (l, block) in self.blocks.iter().enumerate() {
            let n1 = layer_norm(&x, &block.ln1);
            let q = block.wq.apply(&n1);
            cache.keys[l].push(block.wk.apply(&n1));
            cache.values[l].push(block.wv.apply(&n1));
            let mixed = self.attend(&q, &cache.keys[l], &cache.values[l]);
            let a = block.wo.apply(&mixed);
            let mid: Vec<T> = x.iter().zip(&a).map(|(&xv, &av)| xv + av).collect();
            let n2 = layer_norm(&mid, &block.ln2);
            let hidden: Vec<T> = block.w1.apply(&n2).into_iter().map(gelu).collect();
            let m = block.w2.apply(&hidden);
            let mut next: Vec<T> = mid.iter().zip(&m).map(|(&v, &mv)| v + mv).collect();
            if let Some(h) = hook.as_deref_mut().filter(|h| h.layer == l + 1) {
                next = apply_hook(h, &next, &mut out.hooked)?;
            }
            out.attn.push(a);
            out.mlp.push(m);
            out.states.push(next.clone());
            x = next;
        }
        debug_assert_eq!(cache.keys[0].len(), pos + 1);
        Ok(out)
    }

    /// Causal multi-head attention of one query over every cached position.
    fn attend(&self, q: &[T], keys: &[Vec<T>], values: &[Vec<T>]) -> Vec<T> {
        let d = self.cfg.dim;
        let hd = d / self.cfg.heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let mut out = vec![T::zero(); d];
        let mut scores = vec![0.0f64; keys.len()];
        for h in 0..self.cfg.heads {
            let span = h * hd..(h + 1) * hd;
            for (s, k) in scores.iter_mut().zip(keys) {
                *s = q[span.clone()]
                    .iter()
                    .zip(&k[span.clone()])
                    .map(|(a, b)| a.widen() * b.widen())
                    .sum::<f64>()
                    * scale;
            }
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for s in scores.iter_mut() {
                *s = (*s - max).exp();
                total += *s;
            }
            for c in span {
                let v: f64 = scores.iter().zip(values).map(|(w, v)| w * v[c].widen()).sum();
                out[c] = T::narrow(v / total);
            }
        }
        out
    }

    fn next_token(&self, last: &[T]) -> u32 {
        let normed = layer_norm(last, &self.ln_f);
        let mut best = (0u32, f64::NEG_INFINITY);
        for t in 0..self.cfg.vocab_size {
            let logit: f64 = normed.iter().zip(self.tok_emb.row(t)).map(|(a, b)| a.widen() * b.widen()).sum();
            if logit > best.1 {
                best = (t as u32, logit);
            }
        }
        best.0
    }

    fn embed_token(&self, token: u32, pos: usize) -> Vec<T> {
        self.tok_emb.row(token as usize).iter().zip(self.pos_emb.row(pos)).map(|(&e, &p)| e + p).collect()
    }

    fn embed_visual(&self, v: &[T], pos: usize) -> Vec<T> {
        v.iter().zip(self.pos_emb.row(pos)).map(|(&e, &p)| e + p).collect()
    }

    fn check_token(&self, token: u32) -> Result<(), ToyError> {
        if token as usize >= self.cfg.vocab_size {
            return Err(ToyError::TokenOutOfVocab { token, vocab: self.cfg.vocab_size });
        }
        Ok(())
    }

    fn validate_input(&self, input: &ToyInput<T>, extra: usize) -> Result<(), ToyError> {
        if input.is_empty() {
            return Err(ToyError::EmptyInput);
        }
        let len = input.len() + extra;
        if len > self.cfg.max_seq {
            return Err(ToyError::SequenceTooLong { len, max: self.cfg.max_seq });
        }
        for (index, v) in input.visual_tokens.iter().enumerate() {
            if v.len() != self.cfg.dim {
                return Err(ToyError::VisualDim { index, expected: self.cfg.dim, got: v.len() });
            }
        }
        for &t in &input.text_tokens {
            self.check_token(t)?;
        }
        Ok(())
    }
}

fn apply_hook<T: Scalar>(
    hook: &mut Hook<'_, T>,
    x: &[T],
    record: &mut Option<(Vec<T>, Vec<T>)>,
) -> Result<Vec<T>, ToyError> {
    let state = State::new(x.to_vec())?;
    let replaced = (hook.transform)(&state).map_err(ToyError::Hook)?;
    if replaced.dim() != x.len() {
        return Err(ToyError::Hook(Box::new(ReprError::DimensionMismatch { left: x.len(), right: replaced.dim() })));
    }
    let replaced = replaced.into_vec();
    *record = Some((x.to_vec(), replaced.clone()));
    Ok(replaced)
}

fn layer_norm<T: Scalar>(x: &[T], gain: &[T]) -> Vec<T> {
    let n = x.len() as f64;
    let mean = x.iter().map(|v| v.widen()).sum::<f64>() / n;
    let var = x.iter().map(|v| (v.widen() - mean).powi(2)).sum::<f64>() / n;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    x.iter().zip(gain).map(|(v, g)| T::narrow((v.widen() - mean) * inv * g.widen())).collect()
}

fn gelu<T: Scalar>(x: T) -> T {
    let x = x.widen();
    let c = (2.0 / std::f64::consts::PI).sqrt();
    T::narrow(0.5 * x * (1.0 + (c * (x + 0.044715 * x.powi(3))).tanh()))
}

/// Seeded direction of norm `cfg.lang_offset_norm`; zero for English.
pub(crate) fn language_offset(cfg: &ToyConfig, lang: Lang) -> Vec<f64> {
    if lang == Lang::EN || cfg.lang_offset_norm == 0.0 {
        return vec![0.0; cfg.dim];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6c61_6e67_0000_0000 ^ u64::from(lang.code()));
    let raw: Vec<f64> = (0..cfg.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.into_iter().map(|v| v / norm * cfg.lang_offset_norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repr::{inject_normalized, DifferenceVector};
    use rand::Rng;

    fn small_cfg() -> ToyConfig {
        ToyConfig { num_layers: 3, dim: 16, heads: 2, vocab_size: 120, max_seq: 32, seed: 7, ..ToyConfig::default() }
    }

    fn input(model: &ToyTransformer<f32>, rng: &mut ChaCha8Rng, m: usize, n: usize) -> ToyInput<f32> {
        let d = model.dim();
        ToyInput {
            visual_tokens: (0..m).map(|_| (0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect()).collect(),
            text_tokens: (0..n).map(|_| rng.random_range(0..model.config().vocab_size as u32)).collect(),
            lang: Lang::EN,
        }
    }

    #[test]
    fn forward_is_deterministic_and_shaped() {
        let model = ToyTransformer::<f32>::new(small_cfg()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inp = input(&model, &mut rng, 2, 5);
        let a = model.forward(&inp).unwrap();
        let b = ToyTransformer::<f32>::new(small_cfg()).unwrap().forward(&inp).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_layers(), 3);
        assert_eq!(a.positions(), 7);
        assert_eq!(a.state(3, 6).dim(), 16);
    }

    #[test]
    fn extract_last_state_bounds() {
        let model = ToyTransformer::<f32>::new(small_cfg()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inp = input(&model, &mut rng, 1, 3);
        let trace = model.forward(&inp).unwrap();
        let embed = model.token_embedding(inp.text_tokens[2]).unwrap();
        let l0 = trace.extract_last_state(0).unwrap();
        let expected: Vec<f32> =
            embed.as_slice().iter().zip(model.pos_emb.row(3)).map(|(&e, &p)| e + p).collect();
        assert_eq!(l0.as_slice(), &expected[..]);
        assert_eq!(trace.extract_last_state(2).unwrap(), trace.state(2, 3));
        assert!(matches!(trace.extract_last_state(4), Err(ToyError::LayerOutOfRange { layer: 4, max: 3 })));
    }

    #[test]
    fn input_validation() {
        let model = ToyTransformer::<f32>::new(small_cfg()).unwrap();
        let empty = ToyInput { visual_tokens: vec![], text_tokens: vec![], lang: Lang::EN };
        assert!(matches!(model.forward(&empty), Err(ToyError::EmptyInput)));
        let long = ToyInput { visual_tokens: vec![], text_tokens: vec![1; 33], lang: Lang::EN };
        assert!(matches!(model.forward(&long), Err(ToyError::SequenceTooLong { len: 33, max: 32 })));
        let oov = ToyInput { visual_tokens: vec![], text_tokens: vec![120], lang: Lang::EN };
        assert!(matches!(model.forward(&oov), Err(ToyError::TokenOutOfVocab { token: 120, .. })));
        let bad_visual = ToyInput { visual_tokens: vec![vec![0.0; 3]], text_tokens: vec![1], lang: Lang::EN };
        assert!(matches!(model.forward(&bad_visual), Err(ToyError::VisualDim { .. })));
        let fits = ToyInput { visual_tokens: vec![], text_tokens: vec![1; 30], lang: Lang::EN };
        assert!(matches!(
            model.generate_with_hook(&fits, 4, None),
            Err(ToyError::SequenceTooLong { len: 33, .. })
        ));
        assert!(matches!(model.generate_with_hook(&fits, 0, None), Err(ToyError::InvalidSteps)));
        let hook = Hook::new(4, |s: &State<f32>| Ok::<_, ReprError>(s.clone()));
        assert!(matches!(
            model.generate_with_hook(&fits, 1, Some(hook)),
            Err(ToyError::LayerOutOfRange { layer: 4, max: 3 })
        ));
    }

    #[test]
    fn non_english_tokens_are_shifted_copies() {
        let cfg = ToyConfig { lang_jitter: 0.0, ..small_cfg() };
        let model = ToyTransformer::<f64>::new(cfg).unwrap();
        let layout = model.layout();
        let offset = model.language_offset(Lang::FR);
        assert!((offset.iter().map(|v| v * v).sum::<f64>().sqrt() - 3.0).abs() < 1e-12);
        for t in layout.range(Lang::EN).take(5) {
            let en = model.token_embedding(t).unwrap();
            let fr = model.token_embedding(layout.translate(t, Lang::FR)).unwrap();
            for ((e, f), o) in en.as_slice().iter().zip(fr.as_slice()).zip(&offset) {
                assert!((e - f - o).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hook_runs_once_at_last_position() {
        let model = ToyTransformer::<f32>::new(small_cfg()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inp = input(&model, &mut rng, 1, 4);
        let mut calls = 0;
        let hook = Hook::new(2, |s: &State<f32>| {
            calls += 1;
            Ok::<_, ReprError>(s.clone())
        });
        let gen = model.generate_with_hook(&inp, 6, Some(hook)).unwrap();
        assert_eq!(calls, 1);
        assert_eq!(gen.hook_calls, 1);
        let rec = gen.prompt_trace.hook.as_ref().unwrap();
        assert_eq!((rec.layer, rec.position), (2, 4));
        assert_eq!(gen.tokens.len(), 6);
    }

    #[test]
    fn zero_strength_hook_keeps_output() {
        let model = ToyTransformer::<f32>::new(small_cfg()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inp = input(&model, &mut rng, 2, 4);
        let u = DifferenceVector::new(vec![0.7f32; 16], Lang::EN, Lang::ZH).unwrap();
        let plain = model.generate_with_hook(&inp, 5, None).unwrap();
        let hooked = model
            .generate_with_hook(&inp, 5, Some(Hook::new(1, |s: &State<f32>| inject_normalized(s, &u, 0.0))))
            .unwrap();
        assert_eq!(plain.tokens, hooked.tokens);
    }

    #[test]
    fn hook_changes_only_later_layers() {
        let model = ToyTransformer::<f32>::new(small_cfg()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inp = input(&model, &mut rng, 0, 6);
        let base = model.forward(&inp).unwrap();
        let u = DifferenceVector::new(vec![2.0f32; 16], Lang::EN, Lang::ZH).unwrap();
        let gen = model
            .generate_with_hook(&inp, 1, Some(Hook::new(1, |s: &State<f32>| inject_normalized(s, &u, 1.0))))
            .unwrap();
        let t = &gen.prompt_trace;
        for j in 0..6 {
            assert_eq!(t.state(0, j), base.state(0, j));
        }
        for l in 0..=3 {
            for j in 0..5 {
                assert_eq!(t.state(l, j), base.state(l, j), "earlier positions untouched");
            }
        }
        assert_eq!(t.hook.as_ref().unwrap().original, *base.state(1, 5));
        assert_ne!(t.state(1, 5), base.state(1, 5));
        assert_ne!(t.state(3, 5), base.state(3, 5));
    }
}
