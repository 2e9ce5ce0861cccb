// SPDX-License-Identifier: MIT OR Apache-2.0

//! Binary memory file.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "GXLM" | version u16 | flags u16 | dim u32 | layer u32
//! | target_lang u8 | reserved [u8; 3] | count u64
//! count × ( sample_id u64 | lang u8 | dimension_tag u8 | reserved u16
//!           | key dim × f32 | value dim × f32 )
//! crc32 u32 over every preceding byte
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use super::{MemoryEntry, MemoryError, XlMemory};
use crate::lang::{DimensionTag, Lang};
use crate::repr::{DifferenceVector, State};
use crate::scalar::Scalar;

pub const MAGIC: [u8; 4] = *b"GXLM";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 28;
const ENTRY_FIXED: usize = 12;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("i/o failure: {0}")]
    IoFailure(#[from] io::Error),
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("file truncated: need {needed} bytes, have {have}")]
    TruncatedFile { needed: usize, have: usize },
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("corrupt field: {0}")]
    Corrupt(String),
}

impl<T: Scalar> XlMemory<T> {
    /// Serialises the memory; components are stored as `f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.dim;
        let mut out = Vec::with_capacity(HEADER_LEN + self.entries.len() * (ENTRY_FIXED + 8 * d) + 4);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        out.extend_from_slice(&self.layer.to_le_bytes());
        out.push(self.target_lang.code());
        out.extend_from_slice(&[0u8; 3]);
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&e.sample_id.to_le_bytes());
            out.push(e.lang.code());
            out.push(e.dimension_tag.code());
            out.extend_from_slice(&0u16.to_le_bytes());
            for v in e.key.as_slice().iter().chain(e.value.as_slice()) {
                out.extend_from_slice(&(v.widen() as f32).to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MemoryError> {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(FileError::BadMagic(bytes[..4].try_into().expect("4 bytes")).into());
        }
        if bytes.len() < HEADER_LEN {
            return Err(FileError::TruncatedFile { needed: HEADER_LEN, have: bytes.len() }.into());
        }
        let mut r = Reader { bytes, pos: 4 };
        let version = r.u16();
        if version != VERSION {
            return Err(FileError::UnsupportedVersion(version).into());
        }
        let _flags = r.u16();
        let dim = r.u32() as usize;
        let layer = r.u32();
        let lang_code = r.u8();
        r.pos += 3;
        let count = r.u64();
        if dim == 0 {
            return Err(FileError::Corrupt("dim is zero".into()).into());
        }
        let target_lang = Lang::from_code(lang_code)
            .ok_or_else(|| FileError::Corrupt(format!("target language code {lang_code}")))?;

        let entry_len = ENTRY_FIXED + 8 * dim;
        let needed = usize::try_from(count)
            .ok()
            .and_then(|c| c.checked_mul(entry_len))
            .and_then(|n| n.checked_add(HEADER_LEN + 4))
            .ok_or_else(|| FileError::Corrupt(format!("entry count {count} overflows")))?;
        if bytes.len() < needed {
            return Err(FileError::TruncatedFile { needed, have: bytes.len() }.into());
        }
        let body = &bytes[..needed - 4];
        let stored = u32::from_le_bytes(bytes[needed - 4..needed].try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed || bytes.len() != needed {
            return Err(FileError::ChecksumMismatch { stored, computed }.into());
        }

        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let sample_id = r.u64();
            let lang_code = r.u8();
            let tag_code = r.u8();
            r.pos += 2;
            let lang = Lang::from_code(lang_code)
                .ok_or_else(|| FileError::Corrupt(format!("sample {sample_id}: language code {lang_code}")))?;
            let dimension_tag = DimensionTag::from_code(tag_code)
                .ok_or_else(|| FileError::Corrupt(format!("sample {sample_id}: dimension code {tag_code}")))?;
            let key = State::new(r.f32s(dim))?;
            let value = DifferenceVector::new(r.f32s(dim), Lang::EN, lang)?;
            entries.push(MemoryEntry { sample_id, key, value, lang, dimension_tag });
        }
        XlMemory::from_parts(dim, layer, target_lang, entries)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MemoryError> {
        let mut f = fs::File::create(path).map_err(FileError::from)?;
        f.write_all(&self.to_bytes()).map_err(FileError::from)?;
        f.sync_all().map_err(FileError::from)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MemoryError> {
        let bytes = fs::read(path).map_err(FileError::from)?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out = self.bytes[self.pos..self.pos + N].try_into().expect("length checked");
        self.pos += N;
        out
    }

    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }

    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }

    fn f32s<T: Scalar>(&mut self, n: usize) -> Vec<T> {
        (0..n).map(|_| T::narrow(f64::from(f32::from_le_bytes(self.take())))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_memory(n: usize, dim: usize) -> XlMemory<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut mem = XlMemory::new(dim, 14, Lang::TH).unwrap();
        for i in 0..n {
            let en = State::new((0..dim).map(|_| rng.random_range(-3.0f32..3.0)).collect()).unwrap();
            let tgt = State::new((0..dim).map(|_| rng.random_range(-3.0f32..3.0)).collect()).unwrap();
            let tag = if i % 9 == 8 { DimensionTag::NONE } else { DimensionTag::SCORED[i % 9] };
            mem.add_pair(&en, &tgt, 1000 + i as u64, Lang::TH, tag).unwrap();
        }
        mem
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mem = sample_memory(100, 24);
        let bytes = mem.to_bytes();
        assert_eq!(bytes.len(), HEADER_LEN + 100 * (12 + 8 * 24) + 4);
        let back = XlMemory::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(back, mem);
        for (a, b) in back.entries().iter().zip(mem.entries()) {
            let bits = |s: &[f32]| s.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a.key.as_slice()), bits(b.key.as_slice()));
            assert_eq!(bits(a.value.as_slice()), bits(b.value.as_slice()));
        }
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn round_trip_through_disk() {
        let mem = sample_memory(10, 8);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gxlm");
        mem.save(&path).unwrap();
        assert_eq!(XlMemory::<f32>::load(&path).unwrap(), mem);
    }

    #[test]
    fn header_matches_layout() {
        let bytes = sample_memory(1, 2).to_bytes();
        assert_eq!(&bytes[..4], b"GXLM");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[14, 0, 0, 0]);
        assert_eq!(bytes[16], Lang::TH.code());
        assert_eq!(&bytes[17..20], &[0, 0, 0]);
        assert_eq!(&bytes[20..28], &1u64.to_le_bytes());
        assert_eq!(&bytes[28..36], &1000u64.to_le_bytes());
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = sample_memory(3, 4).to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            XlMemory::<f32>::from_bytes(&bytes),
            Err(MemoryError::File(FileError::BadMagic(_)))
        ));
    }

    #[test]
    fn rejects_unknown_version() {
        let mut bytes = sample_memory(3, 4).to_bytes();
        bytes[4] = 2;
        assert!(matches!(
            XlMemory::<f32>::from_bytes(&bytes),
            Err(MemoryError::File(FileError::UnsupportedVersion(2)))
        ));
    }

    #[test]
    fn rejects_truncation() {
        let bytes = sample_memory(3, 4).to_bytes();
        let cut = HEADER_LEN + (12 + 32) + 10;
        assert!(matches!(
            XlMemory::<f32>::from_bytes(&bytes[..cut]),
            Err(MemoryError::File(FileError::TruncatedFile { .. }))
        ));
        assert!(matches!(
            XlMemory::<f32>::from_bytes(&bytes[..10]),
            Err(MemoryError::File(FileError::TruncatedFile { .. }))
        ));
    }

    #[test]
    fn rejects_corrupted_payload() {
        let mut bytes = sample_memory(3, 4).to_bytes();
        bytes[HEADER_LEN + 20] ^= 0x40;
        assert!(matches!(
            XlMemory::<f32>::from_bytes(&bytes),
            Err(MemoryError::File(FileError::ChecksumMismatch { .. }))
        ));
        let mut extended = sample_memory(3, 4).to_bytes();
        extended.push(0);
        assert!(matches!(
            XlMemory::<f32>::from_bytes(&extended),
            Err(MemoryError::File(FileError::ChecksumMismatch { .. }))
        ));
    }

    #[test]
    fn missing_file_is_io_failure() {
        assert!(matches!(
            XlMemory::<f32>::load("/nonexistent/dir/m.gxlm"),
            Err(MemoryError::File(FileError::IoFailure(_)))
        ));
    }
}
