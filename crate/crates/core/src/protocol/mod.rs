// SPDX-License-Identifier: MIT OR Apache-2.0

//! Length-prefixed binary protocol for driving the memory from an external
//! model runtime.
//!
//! A frame is `length: u32 LE | type: u8 | payload`, where `length` counts
//! payload bytes only. Integers are little-endian and vectors are `f32`.

mod client;
mod message;
mod session;

pub use client::{Client, ClientError};
pub use message::{AddPair, ErrorCode, Hello, InterveneRequest, Reply, Request, StatsReply};
pub use session::{serve_stream, serve_tcp, ServeOptions, Session, SharedMemory};

use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAX_PAYLOAD: usize = 64 * 1024 * 1024;
pub const HEADER_LEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameType {
    Hello = 0x01,
    AddPair = 0x02,
    Intervene = 0x03,
    Stats = 0x04,
    Save = 0x05,
    Freeze = 0x06,
    Error = 0x7F,
}

impl FrameType {
    pub fn from_byte(b: u8) -> Option<FrameType> {
        Some(match b {
            0x01 => FrameType::Hello,
            0x02 => FrameType::AddPair,
            0x03 => FrameType::Intervene,
            0x04 => FrameType::Stats,
            0x05 => FrameType::Save,
            0x06 => FrameType::Freeze,
            0x7F => FrameType::Error,
            _ => return None,
        })
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("truncated frame: need {needed} bytes, have {have}")]
    TruncatedFrame { needed: usize, have: usize },
    #[error("unknown frame type 0x{0:02x}")]
    UnknownType(u8),
    #[error("frame payload of {0} bytes exceeds the 64 MiB limit")]
    OversizeFrame(usize),
    #[error("bad {kind:?} payload: {reason}")]
    BadPayload { kind: FrameType, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(kind: FrameType, payload: Vec<u8>) -> Self {
        Frame { kind, payload }
    }
}

pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, ProtocolError> {
    if frame.payload.len() > MAX_PAYLOAD {
        return Err(ProtocolError::OversizeFrame(frame.payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + frame.payload.len());
    out.extend_from_slice(&(frame.payload.len() as u32).to_le_bytes());
    out.push(frame.kind as u8);
    out.extend_from_slice(&frame.payload);
    Ok(out)
}

/// Parses the first frame in `bytes` and returns it with the number of bytes used.
pub fn decode_frame(bytes: &[u8]) -> Result<(Frame, usize), ProtocolError> {
    if bytes.len() < HEADER_LEN {
        return Err(ProtocolError::TruncatedFrame { needed: HEADER_LEN, have: bytes.len() });
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(ProtocolError::OversizeFrame(len));
    }
    let kind = FrameType::from_byte(bytes[4]).ok_or(ProtocolError::UnknownType(bytes[4]))?;
    let end = HEADER_LEN + len;
    if bytes.len() < end {
        return Err(ProtocolError::TruncatedFrame { needed: end, have: bytes.len() });
    }
    Ok((Frame::new(kind, bytes[HEADER_LEN..end].to_vec()), end))
}

/// Outcome of reading one frame from a stream.
#[derive(Debug)]
pub enum ReadOutcome {
    Frame(Frame),
    /// The header named a type this version does not know; its payload was consumed.
    Unknown(u8),
    /// Clean end of stream before any header byte.
    Eof,
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8], already: usize) -> Result<usize, ProtocolError> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    if got < buf.len() && got + already > 0 {
        return Err(ProtocolError::TruncatedFrame { needed: already + buf.len(), have: already + got });
    }
    Ok(got)
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<ReadOutcome, ProtocolError> {
    let mut header = [0u8; HEADER_LEN];
    if read_full(r, &mut header, 0)? == 0 {
        return Ok(ReadOutcome::Eof);
    }
    let len = u32::from_le_bytes(header[..4].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(ProtocolError::OversizeFrame(len));
    }
    let mut payload = vec![0u8; len];
    read_full(r, &mut payload, HEADER_LEN)?;
    Ok(match FrameType::from_byte(header[4]) {
        Some(kind) => ReadOutcome::Frame(Frame::new(kind, payload)),
        None => ReadOutcome::Unknown(header[4]),
    })
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<(), ProtocolError> {
    w.write_all(&encode_frame(frame)?)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip_and_errors() {
        let f = Frame::new(FrameType::Stats, vec![]);
        let bytes = encode_frame(&f).unwrap();
        assert_eq!(bytes, [0, 0, 0, 0, 0x04]);
        assert_eq!(decode_frame(&bytes).unwrap(), (f, 5));

        let f = Frame::new(FrameType::Save, b"/tmp/x".to_vec());
        let bytes = encode_frame(&f).unwrap();
        assert!(matches!(decode_frame(&bytes[..4]), Err(ProtocolError::TruncatedFrame { needed: 5, have: 4 })));
        assert!(matches!(decode_frame(&bytes[..5]), Err(ProtocolError::TruncatedFrame { needed: 11, have: 5 })));
        assert!(matches!(decode_frame(&[0, 0, 0, 0, 0x42]), Err(ProtocolError::UnknownType(0x42))));
        let huge = ((MAX_PAYLOAD + 1) as u32).to_le_bytes();
        assert!(matches!(
            decode_frame(&[huge[0], huge[1], huge[2], huge[3], 1]),
            Err(ProtocolError::OversizeFrame(_))
        ));
    }

    #[test]
    fn stream_reading() {
        let mut bytes = encode_frame(&Frame::new(FrameType::Freeze, vec![])).unwrap();
        bytes.extend([1, 0, 0, 0, 0x55, 9]);
        bytes.extend(encode_frame(&Frame::new(FrameType::Save, b"p".to_vec())).unwrap());
        let mut r = io::Cursor::new(bytes);
        assert!(matches!(read_frame(&mut r).unwrap(), ReadOutcome::Frame(Frame { kind: FrameType::Freeze, .. })));
        assert!(matches!(read_frame(&mut r).unwrap(), ReadOutcome::Unknown(0x55)));
        assert!(matches!(read_frame(&mut r).unwrap(), ReadOutcome::Frame(Frame { kind: FrameType::Save, .. })));
        assert!(matches!(read_frame(&mut r).unwrap(), ReadOutcome::Eof));

        let mut cut = io::Cursor::new(vec![4, 0, 0, 0, 0x05, 1]);
        assert!(matches!(read_frame(&mut cut), Err(ProtocolError::TruncatedFrame { needed: 9, have: 6 })));
        let mut cut = io::Cursor::new(vec![4, 0]);
        assert!(matches!(read_frame(&mut cut), Err(ProtocolError::TruncatedFrame { needed: 5, have: 2 })));
    }
}
