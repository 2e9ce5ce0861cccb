// SPDX-License-Identifier: MIT OR Apache-2.0

//! Word-hash tokenizer and response renderer so benchmark items can be fed
//! through the toy model.

use super::{visual_tokens, ToyInput, VocabLayout};
use crate::lang::Lang;
use crate::scalar::Scalar;

const LETTERS: [char; 4] = ['A', 'B', 'C', 'D'];

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Hashes each word into `lang`'s token range.
pub fn tokenize(layout: VocabLayout, lang: Lang, text: &str) -> Vec<u32> {
    let range = layout.range(lang);
    text.split(|c: char| c.is_whitespace() || (c.is_ascii_punctuation() && c != '\''))
        .filter(|w| !w.is_empty())
        .map(|w| range.start + (fnv1a(w.to_lowercase().as_bytes()) % u64::from(layout.range_len())) as u32)
        .collect()
}

/// One visual token per image reference, then question, lettered options
/// and the answer cue. Text is cut from the front to fit `max_len`.
pub fn encode_prompt<T: Scalar>(
    layout: VocabLayout,
    dim: usize,
    lang: Lang,
    question: &str,
    options: &[String],
    image_refs: &[String],
    max_len: usize,
) -> ToyInput<T> {
    let visual: Vec<Vec<T>> = image_refs
        .iter()
        .flat_map(|r| visual_tokens::<T>(fnv1a(r.as_bytes()), 1, dim))
        .take(max_len.saturating_sub(1))
        .collect();
    let mut text = tokenize(layout, lang, question);
    for (letter, option) in LETTERS.iter().zip(options) {
        text.extend(tokenize(layout, lang, &format!("{letter} {option}")));
    }
    text.extend(tokenize(layout, lang, "answer"));
    let room = max_len - visual.len();
    if text.len() > room {
        text.drain(..text.len() - room);
    }
    ToyInput { visual_tokens: visual, text_tokens: text, lang }
}

/// Renders generated ids as text: ids ≡ 0..3 (mod 8) become option letters,
/// the rest placeholder words.
pub fn render_tokens(tokens: &[u32]) -> String {
    tokens
        .iter()
        .map(|&t| match (t % 8) as usize {
            i @ 0..=3 => LETTERS[i].to_string(),
            _ => format!("w{t}"),
        })
        .collect::<Vec<_>>()
        .join(" ")
}
