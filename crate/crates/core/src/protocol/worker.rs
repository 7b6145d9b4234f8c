//! One connection to an execution worker, with per-request timeouts.
//!
//! A background thread decodes frames from the worker's output and hands
//! them over a channel, so a silent or wedged worker turns into a timeout
//! rather than a blocked session.

use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::codec::{read_frame, write_frame, CodecError, Envelope};
use super::mock_worker::{serve, MockWorkerScript};
use super::{BackendMode, CrashReport, Message, TestCase, TolerancePolicy};
use crate::prompt::AccuracyPayload;
use crate::Dtype;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkerSpec {
    /// Local subprocess speaking the protocol on stdin/stdout.
    Command {
        program: PathBuf,
        #[serde(default)]
        args: Vec<String>,
    },
    /// Remote worker already listening.
    Tcp { addr: String },
    /// Scripted mock served from a thread in this process.
    InProcessMock {
        #[serde(default)]
        script: MockWorkerScript,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkerTimeouts {
    #[serde(with = "secs")]
    pub compile: Duration,
    #[serde(with = "secs")]
    pub test: Duration,
    #[serde(with = "secs")]
    pub health: Duration,
}

impl Default for WorkerTimeouts {
    fn default() -> Self {
        Self {
            compile: Duration::from_secs(300),
            test: Duration::from_secs(120),
            health: Duration::from_secs(30),
        }
    }
}

pub(crate) mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkerError {
    #[error("worker lost: {0}")]
    Lost(String),
    #[error("worker did not answer {request} within {timeout:?}")]
    Timeout { request: &'static str, timeout: Duration },
    #[error("worker protocol violation: {0}")]
    Protocol(String),
    #[error("failed to start worker: {0}")]
    SpawnFailed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadOutcome {
    Loaded,
    CompileError(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TestOutcome {
    Passed,
    Failed(AccuracyPayload),
    Crashed(CrashReport),
}

enum Endpoint {
    Child(Child),
    Tcp(TcpStream),
    Thread,
}

pub struct WorkerConnection {
    label: String,
    writer: Option<Box<dyn Write + Send>>,
    rx: Receiver<Result<Envelope, CodecError>>,
    endpoint: Endpoint,
    next_id: u64,
    broken: bool,
    capabilities: Option<(BackendMode, Vec<Dtype>)>,
}

impl std::fmt::Debug for WorkerConnection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WorkerConnection")
            .field("label", &self.label)
            .field("broken", &self.broken)
            .field("capabilities", &self.capabilities)
            .finish_non_exhaustive()
    }
}

fn pump(label: String, reader: impl Read + Send + 'static) -> Receiver<Result<Envelope, CodecError>> {
    let (tx, rx) = mpsc::channel();
    std::thread::Builder::new()
        .name(format!("worker-reader-{label}"))
        .spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let frame = read_frame(&mut reader);
                let stop = matches!(&frame, Err(e) if !e.is_recoverable());
                if tx.send(frame).is_err() || stop {
                    break;
                }
            }
        })
        .expect("spawning reader thread");
    rx
}

impl WorkerConnection {
    pub fn open(spec: &WorkerSpec, label: &str) -> Result<Self, WorkerError> {
        match spec {
            WorkerSpec::Command { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::piped())
                    .spawn()
                    .map_err(|e| WorkerError::SpawnFailed(format!("{}: {e}", program.display())))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                if let Some(stderr) = child.stderr.take() {
                    let label = label.to_string();
                    std::thread::spawn(move || {
                        use std::io::BufRead;
                        for line in BufReader::new(stderr).lines().map_while(Result::ok) {
                            tracing::debug!(worker = %label, "{line}");
                        }
                    });
                }
                Ok(Self::assemble(label, Box::new(BufWriter::new(stdin)), pump(label.into(), stdout), Endpoint::Child(child)))
            }
            WorkerSpec::Tcp { addr } => {
                let sock = addr
                    .to_socket_addrs()
                    .map_err(|e| WorkerError::SpawnFailed(format!("{addr}: {e}")))?
                    .next()
                    .ok_or_else(|| WorkerError::SpawnFailed(format!("{addr}: no address")))?;
                let stream = TcpStream::connect_timeout(&sock, Duration::from_secs(10))
                    .map_err(|e| WorkerError::SpawnFailed(format!("{addr}: {e}")))?;
                let _ = stream.set_nodelay(true);
                let read_half = stream.try_clone().map_err(|e| WorkerError::SpawnFailed(e.to_string()))?;
                let write_half = stream.try_clone().map_err(|e| WorkerError::SpawnFailed(e.to_string()))?;
                Ok(Self::assemble(label, Box::new(BufWriter::new(write_half)), pump(label.into(), read_half), Endpoint::Tcp(stream)))
            }
            WorkerSpec::InProcessMock { script } => {
                let (req_r, req_w) = std::io::pipe().map_err(|e| WorkerError::SpawnFailed(e.to_string()))?;
                let (resp_r, resp_w) = std::io::pipe().map_err(|e| WorkerError::SpawnFailed(e.to_string()))?;
                let script = Arc::new(script.clone());
                std::thread::Builder::new()
                    .name(format!("mock-worker-{label}"))
                    .spawn(move || {
                        let mut r = BufReader::new(req_r);
                        let mut w = BufWriter::new(resp_w);
                        serve(&mut r, &mut w, &script)
                    })
                    .map_err(|e| WorkerError::SpawnFailed(e.to_string()))?;
                Ok(Self::assemble(label, Box::new(req_w), pump(label.into(), resp_r), Endpoint::Thread))
            }
        }
    }

    fn assemble(
        label: &str,
        writer: Box<dyn Write + Send>,
        rx: Receiver<Result<Envelope, CodecError>>,
        endpoint: Endpoint,
    ) -> Self {
        Self {
            label: label.to_string(),
            writer: Some(writer),
            rx,
            endpoint,
            next_id: 1,
            broken: false,
            capabilities: None,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_broken(&self) -> bool {
        self.broken
    }

    pub fn capabilities(&self) -> Option<&(BackendMode, Vec<Dtype>)> {
        self.capabilities.as_ref()
    }

    pub fn backend(&self) -> Option<BackendMode> {
        self.capabilities.as_ref().map(|c| c.0)
    }

    /// Sends one request and waits for the correlated response.
    pub fn request(&mut self, message: Message, timeout: Duration) -> Result<Message, WorkerError> {
        if self.broken {
            return Err(WorkerError::Lost(format!("{} is no longer usable", self.label)));
        }
        let request = message.type_name();
        let id = self.next_id;
        self.next_id += 1;
        let writer = self.writer.as_mut().expect("writer present while not broken");
        if let Err(e) = write_frame(writer, &Envelope::new(id, message)) {
            return Err(self.fail(WorkerError::Lost(format!("writing {request}: {e}"))));
        }
        let deadline = Instant::now() + timeout;
        match self.rx.recv_timeout(deadline.saturating_duration_since(Instant::now())) {
            Ok(Ok(env)) if env.id == id => Ok(env.message),
            Ok(Ok(env)) => Err(self.fail(WorkerError::Protocol(format!(
                "response id {} does not match request id {id}",
                env.id
            )))),
            Ok(Err(e)) if e.is_recoverable() => Err(self.fail(WorkerError::Protocol(e.to_string()))),
            Ok(Err(CodecError::Closed)) | Err(RecvTimeoutError::Disconnected) => {
                Err(self.fail(WorkerError::Lost(format!("{} closed the connection during {request}", self.label))))
            }
            Ok(Err(e)) => Err(self.fail(WorkerError::Lost(format!("{} during {request}", e)))),
            Err(RecvTimeoutError::Timeout) => Err(self.fail(WorkerError::Timeout { request, timeout })),
        }
    }

    fn fail(&mut self, e: WorkerError) -> WorkerError {
        tracing::warn!(worker = %self.label, error = %e, "worker connection failed");
        self.kill();
        e
    }

    /// Health check; records the reported capabilities.
    pub fn probe(&mut self, timeout: Duration) -> Result<(BackendMode, Vec<Dtype>), WorkerError> {
        match self.request(Message::Capabilities {}, timeout)? {
            Message::CapabilitiesOk { backend, dtypes } => {
                self.capabilities = Some((backend, dtypes.clone()));
                Ok((backend, dtypes))
            }
            other => Err(self.fail(WorkerError::Protocol(format!("expected capabilities_ok, got {}", other.type_name())))),
        }
    }

    pub fn load_candidate(&mut self, module_source: &str, timeout: Duration) -> Result<LoadOutcome, WorkerError> {
        match self.request(
            Message::LoadCandidate {
                module_source: module_source.to_string(),
            },
            timeout,
        )? {
            Message::LoadOk {} => Ok(LoadOutcome::Loaded),
            Message::CompileError { log } => Ok(LoadOutcome::CompileError(log)),
            Message::ProtocolError { detail } => Err(WorkerError::Protocol(detail)),
            other => Err(self.fail(WorkerError::Protocol(format!("unexpected {} after load_candidate", other.type_name())))),
        }
    }

    pub fn run_test(&mut self, case: &TestCase, policy: &TolerancePolicy, timeout: Duration) -> Result<TestOutcome, WorkerError> {
        let reply = self.request(
            Message::RunTest {
                case: case.clone(),
                policy: policy.clone(),
            },
            timeout,
        )?;
        let check = |id: &str| id == case.case_id;
        match reply {
            Message::TestPassed { case_id } if check(&case_id) => Ok(TestOutcome::Passed),
            Message::TestFailed { case_id, payload } if check(&case_id) => Ok(TestOutcome::Failed(payload)),
            Message::RuntimeCrash { case_id, report } if check(&case_id) => Ok(TestOutcome::Crashed(report.bounded())),
            Message::ProtocolError { detail } => Err(WorkerError::Protocol(detail)),
            other => Err(self.fail(WorkerError::Protocol(format!(
                "unexpected {} for case {}",
                other.type_name(),
                case.case_id
            )))),
        }
    }

    /// Asks the worker to exit, then makes sure it has.
    pub fn shutdown(&mut self) {
        if !self.broken {
            if let Some(w) = self.writer.as_mut() {
                let _ = write_frame(w, &Envelope::new(self.next_id, Message::Shutdown {}));
            }
            self.writer = None;
            if let Endpoint::Child(child) = &mut self.endpoint {
                let deadline = Instant::now() + Duration::from_secs(2);
                while Instant::now() < deadline {
                    if matches!(child.try_wait(), Ok(Some(_))) {
                        break;
                    }
                    std::thread::sleep(Duration::from_millis(10));
                }
            }
        }
        self.kill();
    }

    pub fn kill(&mut self) {
        self.broken = true;
        self.writer = None;
        match &mut self.endpoint {
            Endpoint::Child(child) => {
                let _ = child.kill();
                let _ = child.wait();
            }
            Endpoint::Tcp(stream) => {
                let _ = stream.shutdown(std::net::Shutdown::Both);
            }
            Endpoint::Thread => {}
        }
    }

    /// OS process id for subprocess workers.
    pub fn pid(&self) -> Option<u32> {
        match &self.endpoint {
            Endpoint::Child(c) => Some(c.id()),
            _ => None,
        }
    }
}

impl Drop for WorkerConnection {
    fn drop(&mut self) {
        self.kill();
    }
}
