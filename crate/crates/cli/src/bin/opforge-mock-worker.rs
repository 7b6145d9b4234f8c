//! Scripted stand-in for the execution worker.
//!
//! ```text
//! opforge-mock-worker --transport stdio|tcp:PORT --backend mock [--mock-script PATH]
//! ```
//!
//! Over TCP, connections are served one at a time until a client sends
//! Shutdown or a scripted exit fires.

use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Parser;
use opforge_core::protocol::mock_worker::serve;
use opforge_core::protocol::{MockWorkerScript, ServeEnd};

#[derive(Parser)]
#[command(name = "opforge-mock-worker", version)]
struct Args {
    /// `stdio` or `tcp:PORT`.
    #[arg(long, default_value = "stdio")]
    transport: String,
    /// Only `mock` is available in this binary.
    #[arg(long, default_value = "mock")]
    backend: String,
    /// Outcome table (JSON). Without one, every candidate loads and passes.
    #[arg(long)]
    mock_script: Option<PathBuf>,
}

fn exit_for(end: ServeEnd) -> ExitCode {
    match end {
        ServeEnd::Shutdown | ServeEnd::PeerClosed => ExitCode::SUCCESS,
        ServeEnd::Exit(code) => std::process::exit(code),
        ServeEnd::Broken(e) => {
            eprintln!("opforge-mock-worker: {e}");
            ExitCode::from(3)
        }
    }
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("opforge-mock-worker: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(args: Args) -> anyhow::Result<ExitCode> {
    if args.backend != "mock" {
        bail!("backend `{}` is not available here; use the Python worker for jit or interpreter", args.backend);
    }
    let script = match &args.mock_script {
        Some(p) => MockWorkerScript::load(p)?,
        None => MockWorkerScript::default(),
    };
    if args.transport == "stdio" {
        let mut stdin = std::io::stdin().lock();
        let mut stdout = std::io::stdout().lock();
        return Ok(exit_for(serve(&mut stdin, &mut stdout, &script)));
    }
    let Some(port) = args.transport.strip_prefix("tcp:") else {
        bail!("unknown transport `{}`", args.transport);
    };
    let port: u16 = port.parse().with_context(|| format!("bad port `{port}`"))?;
    let listener = TcpListener::bind(("127.0.0.1", port)).with_context(|| format!("binding port {port}"))?;
    eprintln!("opforge-mock-worker listening on {}", listener.local_addr()?);
    for stream in listener.incoming() {
        let stream = stream?;
        let mut reader = stream.try_clone()?;
        let mut writer = stream;
        match serve(&mut reader, &mut writer, &script) {
            ServeEnd::PeerClosed | ServeEnd::Broken(_) => continue,
            end => return Ok(exit_for(end)),
        }
    }
    Ok(ExitCode::SUCCESS)
}
