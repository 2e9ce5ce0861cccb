// SPDX-License-Identifier: MIT OR Apache-2.0

//! Language and task-dimension tags shared by every module.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Benchmark language. The `u8` codes are used by the memory file and the
/// wire protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Lang {
    EN,
    ZH,
    FR,
    RU,
    JA,
    TH,
}

impl Lang {
    pub const ALL: [Lang; 6] = [Lang::EN, Lang::ZH, Lang::FR, Lang::RU, Lang::JA, Lang::TH];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Lang> {
        Lang::ALL.get(usize::from(code)).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Lang::EN => "EN",
            Lang::ZH => "ZH",
            Lang::FR => "FR",
            Lang::RU => "RU",
            Lang::JA => "JA",
            Lang::TH => "TH",
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Lang {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Lang::ALL
            .iter()
            .copied()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown language tag {s:?}"))
    }
}

/// Task dimension of a benchmark item.
///
/// `NONE` marks memory entries that are not tied to one dimension; they stay
/// eligible under every retrieval filter.
#[allow(clippy::upper_case_acronyms)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DimensionTag {
    /// Action understanding.
    AU,
    /// Action prediction.
    AP,
    /// Widget function.
    WF,
    /// Widget interaction.
    WI,
    /// Absolute element location.
    AEL,
    /// Relative element location.
    REL,
    /// Reasoning over rich screenshot sequences.
    RI,
    /// Reasoning over sparse screenshot sequences.
    SI,
    NONE,
}

impl DimensionTag {
    /// The eight scored dimensions, in table order.
    pub const SCORED: [DimensionTag; 8] = [
        DimensionTag::AU,
        DimensionTag::AP,
        DimensionTag::WF,
        DimensionTag::WI,
        DimensionTag::AEL,
        DimensionTag::REL,
        DimensionTag::RI,
        DimensionTag::SI,
    ];

    /// Wire code: `NONE` is 0, `AU`..`SI` are 1..=8.
    pub fn code(self) -> u8 {
        match self {
            DimensionTag::NONE => 0,
            other => other as u8 + 1,
        }
    }

    pub fn from_code(code: u8) -> Option<DimensionTag> {
        match code {
            0 => Some(DimensionTag::NONE),
            c => DimensionTag::SCORED.get(usize::from(c) - 1).copied(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DimensionTag::AU => "AU",
            DimensionTag::AP => "AP",
            DimensionTag::WF => "WF",
            DimensionTag::WI => "WI",
            DimensionTag::AEL => "AEL",
            DimensionTag::REL => "REL",
            DimensionTag::RI => "RI",
            DimensionTag::SI => "SI",
            DimensionTag::NONE => "NONE",
        }
    }

    /// Multi-screenshot dimensions; only these may reference several images.
    pub fn is_sequence(self) -> bool {
        matches!(self, DimensionTag::RI | DimensionTag::SI)
    }
}

impl fmt::Display for DimensionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DimensionTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DimensionTag::SCORED
            .iter()
            .chain(std::iter::once(&DimensionTag::NONE))
            .copied()
            .find(|d| d.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown dimension tag {s:?}"))
    }
}
