// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::{self, Read, Write};
use std::net::TcpListener;
use std::sync::Arc;

use super::message::{AddPair, ErrorCode, Hello, InterveneRequest, Reply, Request, StatsReply};
use super::{read_frame, write_frame, Frame, ProtocolError, ReadOutcome};
use crate::memory::{MemoryError, XlMemory};
use crate::repr::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ServeOptions {
    /// Retrieve only entries sharing the request's dimension tag (or `NONE`).
    pub dim_filter: bool,
    /// Serve TCP connections concurrently; needs a frozen memory.
    pub concurrent: bool,
    /// Return after the first connection closes.
    pub once: bool,
}

/// The memory a session works on.
#[derive(Debug)]
pub enum SharedMemory {
    /// Owned and mutable until frozen; `None` until the first HELLO creates it.
    Owned(Option<XlMemory<f32>>),
    /// Read-only, shared between concurrent sessions.
    Frozen(Arc<XlMemory<f32>>),
}

impl SharedMemory {
    fn get(&self) -> Option<&XlMemory<f32>> {
        match self {
            SharedMemory::Owned(m) => m.as_ref(),
            SharedMemory::Frozen(m) => Some(m),
        }
    }
}

/// Per-connection state machine. Every request produces exactly one reply.
#[derive(Debug)]
pub struct Session {
    memory: SharedMemory,
    params: Option<Hello>,
    opts: ServeOptions,
}

impl Session {
    pub fn new(memory: Option<XlMemory<f32>>, opts: ServeOptions) -> Self {
        Session { memory: SharedMemory::Owned(memory), params: None, opts }
    }

    pub fn shared(memory: Arc<XlMemory<f32>>, opts: ServeOptions) -> Self {
        Session { memory: SharedMemory::Frozen(memory), params: None, opts }
    }

    pub fn memory(&self) -> Option<&XlMemory<f32>> {
        self.memory.get()
    }

    pub fn params(&self) -> Option<&Hello> {
        self.params.as_ref()
    }

    /// Drops the HELLO state so the next connection starts fresh.
    pub fn reset(&mut self) {
        self.params = None;
    }

    pub fn into_memory(self) -> Option<XlMemory<f32>> {
        match self.memory {
            SharedMemory::Owned(m) => m,
            SharedMemory::Frozen(m) => Some(Arc::unwrap_or_clone(m)),
        }
    }

    pub fn handle_frame(&mut self, frame: &Frame) -> Reply {
        match Request::from_frame(frame) {
            Ok(req) => self.handle(req),
            Err(e) => Reply::error(ErrorCode::BAD_PAYLOAD, e.to_string()),
        }
    }

    pub fn handle(&mut self, req: Request) -> Reply {
        if let Request::Hello(h) = req {
            return self.hello(h);
        }
        let Some(params) = self.params else {
            return Reply::error(ErrorCode::PROTOCOL_VIOLATION, "first frame must be HELLO");
        };
        match req {
            Request::Hello(_) => unreachable!(),
            Request::AddPair(p) => self.add_pair(p),
            Request::Intervene(r) => self.intervene(&params, r),
            Request::Stats => {
                let m = self.memory().expect("HELLO created the memory");
                Reply::Stats(StatsReply {
                    count: m.len() as u64,
                    dim: m.dim() as u32,
                    layer: m.layer(),
                    frozen: m.is_frozen(),
                })
            }
            Request::Save(path) => {
                let m = self.memory().expect("HELLO created the memory");
                match m.save(&path) {
                    Ok(()) => Reply::Save { count: m.len() as u64 },
                    Err(e) => Reply::error(ErrorCode::IO_FAILURE, e.to_string()),
                }
            }
            Request::Freeze => {
                if let SharedMemory::Owned(Some(m)) = &mut self.memory {
                    m.freeze();
                }
                Reply::Freeze { count: self.memory().map_or(0, |m| m.len() as u64) }
            }
        }
    }

    fn hello(&mut self, h: Hello) -> Reply {
        if h.dim == 0 || h.k == 0 {
            return Reply::error(ErrorCode::BAD_PAYLOAD, "dim and k must be positive");
        }
        if !(h.alpha.is_finite() && h.alpha >= 0.0) {
            return Reply::error(ErrorCode::BAD_PAYLOAD, format!("alpha must be finite and >= 0, got {}", h.alpha));
        }
        match self.memory.get() {
            Some(m) if m.dim() != h.dim as usize => {
                return Reply::error(
                    ErrorCode::DIMENSION_MISMATCH,
                    format!("memory has dim {}, HELLO asked for {}", m.dim(), h.dim),
                );
            }
            Some(m) if m.layer() != h.layer || m.target_lang() != h.lang => {
                return Reply::error(
                    ErrorCode::PROTOCOL_VIOLATION,
                    format!(
                        "memory is layer {} / {}, HELLO asked for layer {} / {}",
                        m.layer(),
                        m.target_lang(),
                        h.layer,
                        h.lang
                    ),
                );
            }
            Some(_) => {}
            None => match XlMemory::new(h.dim as usize, h.layer, h.lang) {
                Ok(m) => self.memory = SharedMemory::Owned(Some(m)),
                Err(e) => return Reply::error(ErrorCode::BAD_PAYLOAD, e.to_string()),
            },
        }
        self.params = Some(h);
        Reply::Hello(h)
    }

    fn add_pair(&mut self, p: AddPair) -> Reply {
        let mem = match &mut self.memory {
            SharedMemory::Owned(Some(m)) => m,
            _ => return Reply::error(ErrorCode::MEMORY_FROZEN, "memory is shared read-only"),
        };
        if mem.is_frozen() {
            return Reply::error(ErrorCode::MEMORY_FROZEN, "memory is frozen");
        }
        if p.h_en.len() != mem.dim() {
            return Reply::error(
                ErrorCode::DIMENSION_MISMATCH,
                format!("memory has dim {}, pair has {}", mem.dim(), p.h_en.len()),
            );
        }
        if p.lang != mem.target_lang() {
            return Reply::error(
                ErrorCode::INVALID_PAIR,
                format!("memory targets {}, pair is {}", mem.target_lang(), p.lang),
            );
        }
        let (h_en, h_tgt) = match (State::new(p.h_en), State::new(p.h_tgt)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return Reply::error(ErrorCode::BAD_PAYLOAD, e.to_string()),
        };
        match mem.add_pair(&h_en, &h_tgt, p.sample_id, p.lang, p.dimension_tag) {
            Ok(_) => Reply::AddPair { count: mem.len() as u64 },
            Err(MemoryError::MemoryFrozen) => Reply::error(ErrorCode::MEMORY_FROZEN, "memory is frozen"),
            Err(e) => Reply::error(ErrorCode::INVALID_PAIR, e.to_string()),
        }
    }

    fn intervene(&self, params: &Hello, r: InterveneRequest) -> Reply {
        let mem = self.memory().expect("HELLO created the memory");
        if r.h.len() != mem.dim() {
            return Reply::error(
                ErrorCode::DIMENSION_MISMATCH,
                format!("memory has dim {}, request has {}", mem.dim(), r.h.len()),
            );
        }
        let h = match State::new(r.h) {
            Ok(h) => h,
            Err(e) => return Reply::error(ErrorCode::BAD_PAYLOAD, e.to_string()),
        };
        let filter = self.opts.dim_filter.then_some(r.dimension_tag);
        match mem.intervene(&h, usize::from(params.k), f64::from(params.alpha), filter) {
            Ok(out) => Reply::Intervene { request_id: r.request_id, h: out.into_vec() },
            Err(e) => Reply::error(ErrorCode::INTERVENTION_FAILED, e.to_string()),
        }
    }
}

/// Answers frames until the peer closes the stream.
///
/// Unknown frame types get an ERROR reply and the session continues; an
/// oversize header gets an ERROR reply and ends the session, since the
/// stream cannot be resynchronised.
pub fn serve_stream<R: Read, W: Write>(session: &mut Session, mut input: R, mut output: W) -> Result<(), ProtocolError> {
    loop {
        let reply = match read_frame(&mut input) {
            Ok(ReadOutcome::Eof) => return Ok(()),
            Ok(ReadOutcome::Unknown(t)) => Reply::error(ErrorCode::UNKNOWN_TYPE, format!("unknown frame type 0x{t:02x}")),
            Ok(ReadOutcome::Frame(f)) => session.handle_frame(&f),
            Err(e @ ProtocolError::OversizeFrame(_)) => {
                write_frame(&mut output, &Reply::error(ErrorCode::OVERSIZE_FRAME, e.to_string()).to_frame())?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        write_frame(&mut output, &reply.to_frame())?;
    }
}

/// Accepts connections on `listener`. Sequential mode keeps one memory across
/// connections and returns it; concurrent mode shares a frozen memory.
pub fn serve_tcp(
    listener: &TcpListener,
    memory: Option<XlMemory<f32>>,
    opts: ServeOptions,
) -> io::Result<Option<XlMemory<f32>>> {
    if opts.concurrent {
        let memory = match memory {
            Some(m) if m.is_frozen() => Arc::new(m),
            _ => {
                return Err(io::Error::new(io::ErrorKind::InvalidInput, "concurrent serving needs a frozen memory"));
            }
        };
        std::thread::scope(|scope| -> io::Result<()> {
            for stream in listener.incoming() {
                let stream = stream?;
                let mem = Arc::clone(&memory);
                let handle = scope.spawn(move || {
                    let mut session = Session::shared(mem, opts);
                    let reader = stream.try_clone()?;
                    serve_stream(&mut session, reader, &stream).map_err(io::Error::other)
                });
                if opts.once {
                    return handle.join().unwrap_or_else(|_| Err(io::Error::other("session panicked")));
                }
            }
            Ok(())
        })?;
        return Ok(Arc::into_inner(memory));
    }

    let mut session = Session::new(memory, opts);
    for stream in listener.incoming() {
        let stream = stream?;
        let reader = stream.try_clone()?;
        // A broken connection ends that session only.
        let result = serve_stream(&mut session, reader, &stream);
        session.reset();
        if opts.once {
            result.map_err(io::Error::other)?;
            break;
        }
    }
    Ok(session.into_memory())
}
