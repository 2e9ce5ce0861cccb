// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::{Read, Write};

use thiserror::Error;

use super::message::{AddPair, ErrorCode, Hello, InterveneRequest, Reply, Request, StatsReply};
use super::{read_frame, write_frame, ProtocolError, ReadOutcome};
use crate::lang::DimensionTag;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("server error {}: {message}", code.0)]
    Server { code: ErrorCode, message: String },
    #[error("unexpected reply {0:?}")]
    Unexpected(Box<Reply>),
    #[error("server closed the connection")]
    Closed,
}

/// Blocking request/reply client over any byte stream.
pub struct Client<R, W> {
    input: R,
    output: W,
}

impl<R: Read, W: Write> Client<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Client { input, output }
    }

    pub fn call(&mut self, req: &Request) -> Result<Reply, ClientError> {
        write_frame(&mut self.output, &req.to_frame())?;
        match read_frame(&mut self.input)? {
            ReadOutcome::Frame(f) => match Reply::from_frame(&f)? {
                Reply::Error { code, message } => Err(ClientError::Server { code, message }),
                reply => Ok(reply),
            },
            ReadOutcome::Unknown(t) => Err(ProtocolError::UnknownType(t).into()),
            ReadOutcome::Eof => Err(ClientError::Closed),
        }
    }

    pub fn hello(&mut self, hello: Hello) -> Result<Hello, ClientError> {
        match self.call(&Request::Hello(hello))? {
            Reply::Hello(h) => Ok(h),
            other => Err(ClientError::Unexpected(Box::new(other))),
        }
    }

    pub fn add_pair(&mut self, pair: AddPair) -> Result<u64, ClientError> {
        match self.call(&Request::AddPair(pair))? {
            Reply::AddPair { count } => Ok(count),
            other => Err(ClientError::Unexpected(Box::new(other))),
        }
    }

    pub fn intervene(&mut self, request_id: u64, dimension_tag: DimensionTag, h: Vec<f32>) -> Result<Vec<f32>, ClientError> {
        match self.call(&Request::Intervene(InterveneRequest { request_id, dimension_tag, h }))? {
            Reply::Intervene { request_id: id, h } if id == request_id => Ok(h),
            other => Err(ClientError::Unexpected(Box::new(other))),
        }
    }

    pub fn stats(&mut self) -> Result<StatsReply, ClientError> {
        match self.call(&Request::Stats)? {
            Reply::Stats(s) => Ok(s),
            other => Err(ClientError::Unexpected(Box::new(other))),
        }
    }

    pub fn freeze(&mut self) -> Result<u64, ClientError> {
        match self.call(&Request::Freeze)? {
            Reply::Freeze { count } => Ok(count),
            other => Err(ClientError::Unexpected(Box::new(other))),
        }
    }

    pub fn save(&mut self, path: &str) -> Result<u64, ClientError> {
        match self.call(&Request::Save(path.to_string()))? {
            Reply::Save { count } => Ok(count),
            other => Err(ClientError::Unexpected(Box::new(other))),
        }
    }
}
