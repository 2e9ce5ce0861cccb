// SPDX-License-Identifier: MIT OR Apache-2.0

//! Typed payloads. Requests and replies share frame types but not layouts,
//! so each direction has its own enum.

use super::{Frame, FrameType, ProtocolError};
use crate::lang::{DimensionTag, Lang};

/// Session parameters. Sent by the client first; echoed back on success.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hello {
    pub dim: u32,
    pub layer: u32,
    pub lang: Lang,
    pub k: u16,
    pub alpha: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AddPair {
    pub sample_id: u64,
    pub lang: Lang,
    pub dimension_tag: DimensionTag,
    pub h_en: Vec<f32>,
    pub h_tgt: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterveneRequest {
    pub request_id: u64,
    pub dimension_tag: DimensionTag,
    pub h: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Hello(Hello),
    AddPair(AddPair),
    Intervene(InterveneRequest),
    Stats,
    /// Server-side path, UTF-8.
    Save(String),
    Freeze,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatsReply {
    pub count: u64,
    pub dim: u32,
    pub layer: u32,
    pub frozen: bool,
}

/// ERROR frame code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ErrorCode(pub u16);

impl ErrorCode {
    /// Frame before HELLO, or parameters that contradict the loaded memory.
    pub const PROTOCOL_VIOLATION: ErrorCode = ErrorCode(1);
    pub const DIMENSION_MISMATCH: ErrorCode = ErrorCode(2);
    pub const MEMORY_FROZEN: ErrorCode = ErrorCode(3);
    pub const BAD_PAYLOAD: ErrorCode = ErrorCode(4);
    pub const UNKNOWN_TYPE: ErrorCode = ErrorCode(5);
    /// Retrieval or injection failed (empty memory, zero-norm query, ...).
    pub const INTERVENTION_FAILED: ErrorCode = ErrorCode(6);
    pub const IO_FAILURE: ErrorCode = ErrorCode(7);
    pub const OVERSIZE_FRAME: ErrorCode = ErrorCode(8);
    pub const INVALID_PAIR: ErrorCode = ErrorCode(9);
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Hello(Hello),
    /// Entry count after the insert.
    AddPair { count: u64 },
    Intervene { request_id: u64, h: Vec<f32> },
    Stats(StatsReply),
    Save { count: u64 },
    Freeze { count: u64 },
    Error { code: ErrorCode, message: String },
}

struct Cursor<'a> {
    kind: FrameType,
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn bad(&self, reason: impl Into<String>) -> ProtocolError {
        ProtocolError::BadPayload { kind: self.kind, reason: reason.into() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        if self.bytes.len() < n {
            return Err(self.bad(format!("need {n} more bytes, have {}", self.bytes.len())));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, ProtocolError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ProtocolError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ProtocolError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, ProtocolError> {
        Ok(self.take(n * 4)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }

    fn lang(&mut self) -> Result<Lang, ProtocolError> {
        let c = self.u8()?;
        Lang::from_code(c).ok_or_else(|| self.bad(format!("unknown language code {c}")))
    }

    fn tag(&mut self) -> Result<DimensionTag, ProtocolError> {
        let c = self.u8()?;
        DimensionTag::from_code(c).ok_or_else(|| self.bad(format!("unknown dimension code {c}")))
    }

    /// Remaining bytes as `parts` equal f32 vectors.
    fn vector_len(&self, parts: usize) -> Result<usize, ProtocolError> {
        let rem = self.bytes.len();
        if rem == 0 || !rem.is_multiple_of(4 * parts) {
            return Err(self.bad(format!("{rem} vector bytes do not split into {parts} f32 vector(s)")));
        }
        Ok(rem / (4 * parts))
    }

    fn utf8(&mut self) -> Result<String, ProtocolError> {
        let rest = self.take(self.bytes.len())?;
        String::from_utf8(rest.to_vec()).map_err(|e| self.bad(e.to_string()))
    }

    fn finish<T>(self, value: T) -> Result<T, ProtocolError> {
        if self.bytes.is_empty() {
            Ok(value)
        } else {
            Err(self.bad(format!("{} trailing bytes", self.bytes.len())))
        }
    }
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

impl Hello {
    fn encode(&self) -> Vec<u8> {
        let mut p = Vec::with_capacity(15);
        p.extend_from_slice(&self.dim.to_le_bytes());
        p.extend_from_slice(&self.layer.to_le_bytes());
        p.push(self.lang.code());
        p.extend_from_slice(&self.k.to_le_bytes());
        p.extend_from_slice(&self.alpha.to_le_bytes());
        p
    }

    fn decode(c: &mut Cursor<'_>) -> Result<Hello, ProtocolError> {
        Ok(Hello {
            dim: c.u32()?,
            layer: c.u32()?,
            lang: c.lang()?,
            k: c.u16()?,
            alpha: f32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes")),
        })
    }
}

impl Request {
    pub fn kind(&self) -> FrameType {
        match self {
            Request::Hello(_) => FrameType::Hello,
            Request::AddPair(_) => FrameType::AddPair,
            Request::Intervene(_) => FrameType::Intervene,
            Request::Stats => FrameType::Stats,
            Request::Save(_) => FrameType::Save,
            Request::Freeze => FrameType::Freeze,
        }
    }

    pub fn to_frame(&self) -> Frame {
        let payload = match self {
            Request::Hello(h) => h.encode(),
            Request::AddPair(a) => {
                let mut p = Vec::with_capacity(10 + 8 * a.h_en.len());
                p.extend_from_slice(&a.sample_id.to_le_bytes());
                p.push(a.lang.code());
                p.push(a.dimension_tag.code());
                put_f32s(&mut p, &a.h_en);
                put_f32s(&mut p, &a.h_tgt);
                p
            }
            Request::Intervene(r) => {
                let mut p = Vec::with_capacity(9 + 4 * r.h.len());
                p.extend_from_slice(&r.request_id.to_le_bytes());
                p.push(r.dimension_tag.code());
                put_f32s(&mut p, &r.h);
                p
            }
            Request::Stats | Request::Freeze => Vec::new(),
            Request::Save(path) => path.as_bytes().to_vec(),
        };
        Frame::new(self.kind(), payload)
    }

    /// Vector widths are inferred from the payload length.
    pub fn from_frame(frame: &Frame) -> Result<Request, ProtocolError> {
        let mut c = Cursor { kind: frame.kind, bytes: &frame.payload };
        match frame.kind {
            FrameType::Hello => {
                let h = Hello::decode(&mut c)?;
                c.finish(Request::Hello(h))
            }
            FrameType::AddPair => {
                let sample_id = c.u64()?;
                let lang = c.lang()?;
                let dimension_tag = c.tag()?;
                let d = c.vector_len(2)?;
                let h_en = c.f32s(d)?;
                let h_tgt = c.f32s(d)?;
                c.finish(Request::AddPair(AddPair { sample_id, lang, dimension_tag, h_en, h_tgt }))
            }
            FrameType::Intervene => {
                let request_id = c.u64()?;
                let dimension_tag = c.tag()?;
                let d = c.vector_len(1)?;
                let h = c.f32s(d)?;
                c.finish(Request::Intervene(InterveneRequest { request_id, dimension_tag, h }))
            }
            FrameType::Stats => c.finish(Request::Stats),
            FrameType::Save => {
                let path = c.utf8()?;
                if path.is_empty() {
                    return Err(c.bad("empty path"));
                }
                Ok(Request::Save(path))
            }
            FrameType::Freeze => c.finish(Request::Freeze),
            FrameType::Error => Err(c.bad("ERROR is reply-only")),
        }
    }
}

impl Reply {
    pub fn kind(&self) -> FrameType {
        match self {
            Reply::Hello(_) => FrameType::Hello,
            Reply::AddPair { .. } => FrameType::AddPair,
            Reply::Intervene { .. } => FrameType::Intervene,
            Reply::Stats(_) => FrameType::Stats,
            Reply::Save { .. } => FrameType::Save,
            Reply::Freeze { .. } => FrameType::Freeze,
            Reply::Error { .. } => FrameType::Error,
        }
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Reply {
        Reply::Error { code, message: message.into() }
    }

    pub fn to_frame(&self) -> Frame {
        let payload = match self {
            Reply::Hello(h) => h.encode(),
            Reply::AddPair { count } | Reply::Save { count } | Reply::Freeze { count } => count.to_le_bytes().to_vec(),
            Reply::Intervene { request_id, h } => {
                let mut p = Vec::with_capacity(8 + 4 * h.len());
                p.extend_from_slice(&request_id.to_le_bytes());
                put_f32s(&mut p, h);
                p
            }
            Reply::Stats(s) => {
                let mut p = Vec::with_capacity(17);
                p.extend_from_slice(&s.count.to_le_bytes());
                p.extend_from_slice(&s.dim.to_le_bytes());
                p.extend_from_slice(&s.layer.to_le_bytes());
                p.push(u8::from(s.frozen));
                p
            }
            Reply::Error { code, message } => {
                let mut p = code.0.to_le_bytes().to_vec();
                p.extend_from_slice(message.as_bytes());
                p
            }
        };
        Frame::new(self.kind(), payload)
    }

    pub fn from_frame(frame: &Frame) -> Result<Reply, ProtocolError> {
        let mut c = Cursor { kind: frame.kind, bytes: &frame.payload };
        match frame.kind {
            FrameType::Hello => {
                let h = Hello::decode(&mut c)?;
                c.finish(Reply::Hello(h))
            }
            FrameType::AddPair => {
                let count = c.u64()?;
                c.finish(Reply::AddPair { count })
            }
            FrameType::Save => {
                let count = c.u64()?;
                c.finish(Reply::Save { count })
            }
            FrameType::Freeze => {
                let count = c.u64()?;
                c.finish(Reply::Freeze { count })
            }
            FrameType::Intervene => {
                let request_id = c.u64()?;
                let d = c.vector_len(1)?;
                let h = c.f32s(d)?;
                c.finish(Reply::Intervene { request_id, h })
            }
            FrameType::Stats => {
                let count = c.u64()?;
                let dim = c.u32()?;
                let layer = c.u32()?;
                let frozen = match c.u8()? {
                    0 => false,
                    1 => true,
                    b => return Err(c.bad(format!("frozen flag {b}"))),
                };
                c.finish(Reply::Stats(StatsReply { count, dim, layer, frozen }))
            }
            FrameType::Error => {
                let code = ErrorCode(c.u16()?);
                let message = String::from_utf8_lossy(c.take(c.bytes.len())?).into_owned();
                Ok(Reply::Error { code, message })
            }
        }
    }
}
