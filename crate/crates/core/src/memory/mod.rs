// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cross-lingual memory: `(target-language key, English − target value)`
//! entries with exact top-k cosine retrieval.
//!
//! Entries keep insertion order; retrieval ties at equal similarity resolve
//! to the smaller insertion index, so results do not depend on platform sort
//! behaviour.

mod file;
mod manifest;

use std::cmp::Ordering;
use std::collections::HashSet;

use thiserror::Error;

pub use file::{FileError, HEADER_LEN, MAGIC, VERSION};
pub use manifest::{read_manifest, write_manifest, ManifestRecord};

use crate::lang::{DimensionTag, Lang};
use crate::repr::{self, difference_vector, DifferenceVector, ReprError, State};
use crate::scalar::Scalar;

/// Retrieval size used when the caller does not choose one.
pub const DEFAULT_K: usize = 4;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error(transparent)]
    Repr(#[from] ReprError),
    #[error("dimension mismatch: memory has dim {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sample id {0} already present")]
    DuplicateSampleId(u64),
    #[error("key for sample {0} has zero L2 norm")]
    ZeroNormKey(u64),
    #[error("no candidate entries to retrieve from")]
    EmptyMemory,
    #[error("query has zero L2 norm")]
    ZeroNormQuery,
    #[error("retrieval size k must be at least 1")]
    InvalidK,
    #[error("empty index selection")]
    EmptySelection,
    #[error("index {index} out of range for memory of {len} entries")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("incompatible memories: {0}")]
    IncompatibleMemories(String),
    #[error("memory is frozen")]
    MemoryFrozen,
    #[error(transparent)]
    File(#[from] FileError),
}

/// One stored pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry<T> {
    pub sample_id: u64,
    /// Target-language state, the retrieval key.
    pub key: State<T>,
    /// English minus target-language state.
    pub value: DifferenceVector<T>,
    pub lang: Lang,
    pub dimension_tag: DimensionTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XlMemory<T> {
    dim: usize,
    layer: u32,
    target_lang: Lang,
    entries: Vec<MemoryEntry<T>>,
    key_norms: Vec<f64>,
    ids: HashSet<u64>,
    frozen: bool,
}

impl<T: Scalar> XlMemory<T> {
    pub fn new(dim: usize, layer: u32, target_lang: Lang) -> Result<Self, MemoryError> {
        if dim == 0 {
            return Err(ReprError::EmptyVector.into());
        }
        Ok(XlMemory {
            dim,
            layer,
            target_lang,
            entries: Vec::new(),
            key_norms: Vec::new(),
            ids: HashSet::new(),
            frozen: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layer(&self) -> u32 {
        self.layer
    }

    pub fn target_lang(&self) -> Lang {
        self.target_lang
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MemoryEntry<T>] {
        &self.entries
    }

    pub fn entry(&self, index: usize) -> Option<&MemoryEntry<T>> {
        self.entries.get(index)
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Ends the build phase; later inserts fail with [`MemoryError::MemoryFrozen`].
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// Stores `key = h_tgt`, `value = h_en − h_tgt` and returns the new entry.
    pub fn add_pair(
        &mut self,
        h_en: &State<T>,
        h_tgt: &State<T>,
        sample_id: u64,
        lang: Lang,
        dimension_tag: DimensionTag,
    ) -> Result<&MemoryEntry<T>, MemoryError> {
        self.check_dim(h_en.dim())?;
        self.check_dim(h_tgt.dim())?;
        let value = difference_vector(h_en, h_tgt, Lang::EN, lang)?;
        self.push(MemoryEntry { sample_id, key: h_tgt.clone(), value, lang, dimension_tag })
    }

    /// Appends a fully formed entry after checking every invariant.
    pub fn push(&mut self, entry: MemoryEntry<T>) -> Result<&MemoryEntry<T>, MemoryError> {
        if self.frozen {
            return Err(MemoryError::MemoryFrozen);
        }
        self.check_dim(entry.key.dim())?;
        self.check_dim(entry.value.dim())?;
        if self.ids.contains(&entry.sample_id) {
            return Err(MemoryError::DuplicateSampleId(entry.sample_id));
        }
        let key_norm = entry.key.norm();
        if key_norm == 0.0 {
            return Err(MemoryError::ZeroNormKey(entry.sample_id));
        }
        self.ids.insert(entry.sample_id);
        self.key_norms.push(key_norm);
        self.entries.push(entry);
        Ok(self.entries.last().expect("just pushed"))
    }

    /// Indices of the `min(k, candidates)` keys most cosine-similar to
    /// `query`, best first.
    ///
    /// With `filter = Some(tag)` only entries tagged `tag` or `NONE` are
    /// candidates; `Some(NONE)` and `None` disable filtering.
    pub fn retrieve_topk(
        &self,
        query: &State<T>,
        k: usize,
        filter: Option<DimensionTag>,
    ) -> Result<Vec<usize>, MemoryError> {
        Ok(self.retrieve_topk_scored(query, k, filter)?.into_iter().map(|(i, _)| i).collect())
    }

    /// Same as [`retrieve_topk`](Self::retrieve_topk), paired with similarities.
    pub fn retrieve_topk_scored(
        &self,
        query: &State<T>,
        k: usize,
        filter: Option<DimensionTag>,
    ) -> Result<Vec<(usize, f64)>, MemoryError> {
        if k == 0 {
            return Err(MemoryError::InvalidK);
        }
        self.check_dim(query.dim())?;
        let query_norm = query.norm();
        if query_norm == 0.0 {
            return Err(MemoryError::ZeroNormQuery);
        }
        let filter = filter.filter(|t| *t != DimensionTag::NONE);
        let mut scored = Vec::with_capacity(self.entries.len());
        for (i, entry) in self.entries.iter().enumerate() {
            if let Some(tag) = filter {
                if entry.dimension_tag != tag && entry.dimension_tag != DimensionTag::NONE {
                    continue;
                }
            }
            let sim = repr::cosine_with_norms(
                query.as_slice(),
                query_norm,
                entry.key.as_slice(),
                self.key_norms[i],
            )?;
            scored.push((i, sim));
        }
        if scored.is_empty() {
            return Err(MemoryError::EmptyMemory);
        }
        let by_rank = |a: &(usize, f64), b: &(usize, f64)| -> Ordering {
            b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
        };
        let take = k.min(scored.len());
        if take < scored.len() {
            scored.select_nth_unstable_by(take - 1, by_rank);
            scored.truncate(take);
        }
        scored.sort_unstable_by(by_rank);
        Ok(scored)
    }

    /// Componentwise mean of the selected entries' values.
    pub fn intervention_signal(&self, indices: &[usize]) -> Result<DifferenceVector<T>, MemoryError> {
        if indices.is_empty() {
            return Err(MemoryError::EmptySelection);
        }
        let mut acc = vec![0.0f64; self.dim];
        for &index in indices {
            let entry = self
                .entries
                .get(index)
                .ok_or(MemoryError::IndexOutOfRange { index, len: self.entries.len() })?;
            for (a, v) in acc.iter_mut().zip(entry.value.as_slice()) {
                *a += v.widen();
            }
        }
        let n = indices.len() as f64;
        let values = acc.into_iter().map(|a| T::narrow(a / n)).collect();
        Ok(DifferenceVector::new(values, Lang::EN, self.target_lang)?)
    }

    /// Retrieval, averaging and norm-preserving injection in one call.
    pub fn intervene(
        &self,
        h: &State<T>,
        k: usize,
        alpha: f64,
        filter: Option<DimensionTag>,
    ) -> Result<State<T>, MemoryError> {
        let indices = self.retrieve_topk(h, k, filter)?;
        let signal = self.intervention_signal(&indices)?;
        Ok(repr::inject_normalized(h, &signal, alpha)?)
    }

    /// Concatenates memories in argument order.
    ///
    /// A sample id already taken by an earlier source is re-keyed to
    /// `(source_index << 48) | sample_id`.
    pub fn merge(memories: &[XlMemory<T>]) -> Result<XlMemory<T>, MemoryError> {
        let first = memories
            .first()
            .ok_or_else(|| MemoryError::IncompatibleMemories("no memories to merge".into()))?;
        let mut merged = XlMemory::new(first.dim, first.layer, first.target_lang)?;
        for (source_index, mem) in memories.iter().enumerate() {
            if mem.dim != first.dim || mem.layer != first.layer || mem.target_lang != first.target_lang {
                return Err(MemoryError::IncompatibleMemories(format!(
                    "source {source_index} has (dim {}, layer {}, lang {}), expected (dim {}, layer {}, lang {})",
                    mem.dim, mem.layer, mem.target_lang, first.dim, first.layer, first.target_lang
                )));
            }
            for entry in &mem.entries {
                let mut entry = entry.clone();
                if merged.ids.contains(&entry.sample_id) {
                    entry.sample_id |= (source_index as u64) << 48;
                }
                merged.push(entry)?;
            }
        }
        Ok(merged)
    }

    fn check_dim(&self, got: usize) -> Result<(), MemoryError> {
        if got != self.dim {
            return Err(MemoryError::DimensionMismatch { expected: self.dim, got });
        }
        Ok(())
    }

    pub(crate) fn from_parts(
        dim: usize,
        layer: u32,
        target_lang: Lang,
        entries: Vec<MemoryEntry<T>>,
    ) -> Result<Self, MemoryError> {
        let mut mem = XlMemory::new(dim, layer, target_lang)?;
        for entry in entries {
            mem.push(entry)?;
        }
        Ok(mem)
    }
}
