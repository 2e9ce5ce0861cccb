// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io;
use std::net::TcpListener;

use gxli_core::protocol::{serve_stream, serve_tcp, ServeOptions, Session};

use crate::args::ServeArgs;
use crate::fail::{Classify, CliResult};
use crate::io::load_memory;

pub fn run(args: ServeArgs) -> CliResult {
    let mut memory = args.memory.as_deref().map(load_memory).transpose()?;
    let opts = ServeOptions { dim_filter: args.dim_filter, concurrent: args.concurrent, once: args.once };
    if args.concurrent {
        match memory.as_mut() {
            Some(m) => m.freeze(),
            None => return Err(crate::fail::Failure::data("--concurrent needs --memory")),
        }
    }
    if args.stdio {
        let mut session = Session::new(memory, opts);
        return serve_stream(&mut session, io::stdin().lock(), io::stdout().lock()).runtime("session ended with an error");
    }
    let addr = args.tcp.expect("clap requires --stdio or --tcp");
    let listener = TcpListener::bind(&addr).runtime(format!("cannot listen on {addr}"))?;
    let local = listener.local_addr().runtime("listener address")?;
    eprintln!("gxli: listening on {local}");
    let left = serve_tcp(&listener, memory, opts).runtime("server failed")?;
    if let Some(m) = left {
        eprintln!("gxli: served memory holds {} entries", m.len());
    }
    Ok(())
}
