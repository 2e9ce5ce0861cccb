// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Choice;

/// Answer style of the evaluated model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Answers immediately; the first option letter counts.
    #[default]
    Direct,
    /// Reasons before answering; the last option letter counts.
    Reasoning,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Direct => "direct",
            Mode::Reasoning => "reasoning",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "direct" => Ok(Mode::Direct),
            "reasoning" => Ok(Mode::Reasoning),
            _ => Err(format!("unknown mode {s:?} (direct|reasoning)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Extracted {
    Choice(Choice),
    Unparsed,
}

// ASCII only: CJK and Thai responses put letters right next to script characters.
fn is_word(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Finds a standalone A–D letter (either case) bounded by non-word characters.
pub fn extract_choice(response: &str, mode: Mode) -> Extracted {
    let chars: Vec<char> = response.chars().collect();
    let mut hits = (0..chars.len()).filter_map(|i| {
        let before = i == 0 || !is_word(chars[i - 1]);
        let after = i + 1 == chars.len() || !is_word(chars[i + 1]);
        if before && after {
            Choice::from_letter(chars[i])
        } else {
            None
        }
    });
    let hit = match mode {
        Mode::Direct => hits.next(),
        Mode::Reasoning => hits.next_back(),
    };
    hit.map_or(Extracted::Unparsed, Extracted::Choice)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_examples() {
        assert_eq!(extract_choice("The answer is B.", Mode::Direct), Extracted::Choice(Choice::B));
        assert_eq!(
            extract_choice("…A is wrong, so the final answer is C", Mode::Reasoning),
            Extracted::Choice(Choice::C)
        );
        assert_eq!(extract_choice("cannot determine", Mode::Direct), Extracted::Unparsed);
        assert_eq!(extract_choice("cannot determine", Mode::Reasoning), Extracted::Unparsed);
    }

    #[test]
    fn word_boundaries_and_case() {
        assert_eq!(extract_choice("(d)", Mode::Direct), Extracted::Choice(Choice::D));
        assert_eq!(extract_choice("Based on ABC, option:c", Mode::Direct), Extracted::Choice(Choice::C));
        assert_eq!(extract_choice("Bad Cat", Mode::Direct), Extracted::Unparsed);
        assert_eq!(extract_choice("E or F", Mode::Direct), Extracted::Unparsed);
        assert_eq!(extract_choice("A_B", Mode::Direct), Extracted::Unparsed);
        assert_eq!(extract_choice("答案是B。", Mode::Direct), Extracted::Choice(Choice::B));
        assert_eq!(extract_choice("คำตอบคือ C", Mode::Direct), Extracted::Choice(Choice::C));
        assert_eq!(extract_choice("A, then B, then D", Mode::Direct), Extracted::Choice(Choice::A));
        assert_eq!(extract_choice("A, then B, then D", Mode::Reasoning), Extracted::Choice(Choice::D));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("Reasoning".parse::<Mode>().unwrap(), Mode::Reasoning);
        assert!("cot".parse::<Mode>().is_err());
    }
}
