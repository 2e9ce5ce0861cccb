// SPDX-License-Identifier: MIT OR Apache-2.0

//! Companion manifest: one JSON object per memory entry.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::XlMemory;
use crate::lang::{DimensionTag, Lang};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub sample_id: u64,
    pub lang: Lang,
    pub dimension_tag: DimensionTag,
    pub source_note: String,
}

/// Writes one line per entry, in insertion order. `note` supplies the
/// free-text provenance for each sample id.
pub fn write_manifest<T: Scalar, W: Write>(
    mem: &XlMemory<T>,
    mut out: W,
    mut note: impl FnMut(u64) -> String,
) -> io::Result<()> {
    for e in mem.entries() {
        let record = ManifestRecord {
            sample_id: e.sample_id,
            lang: e.lang,
            dimension_tag: e.dimension_tag,
            source_note: note(e.sample_id),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_manifest<R: BufRead>(input: R) -> io::Result<Vec<ManifestRecord>> {
    let mut records = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("manifest line {}: {e}", lineno + 1))
        })?;
        records.push(record);
    }
    Ok(records)
}
