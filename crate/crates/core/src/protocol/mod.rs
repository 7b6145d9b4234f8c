//! Orchestrator side of the worker protocol: message types, framing,
//! tolerance policy, test planning and the worker pool. A scripted mock
//! worker server lives here too so the orchestrator can run without any
//! tensor stack.

mod codec;
mod crash;
mod message;
pub mod mock_worker;
mod plan;
mod pool;
mod tolerance;
mod worker;

pub use codec::{
    decode_body, decode_frame, encode_body, encode_message, read_frame, write_frame, CodecError, Envelope,
    MAX_FRAME_BYTES, PROTOCOL_VERSION,
};
pub use crash::{tail_chars, BacktraceFrame, CrashReport, MAX_CRASH_EXCERPT};
pub use message::{
    BackendMode, Distribution, LiteralTensor, Message, TensorData, TensorLiteral, TestCase, TestSource,
};
pub use mock_worker::{MockRule, MockWorkerScript, ServeEnd};
pub use plan::{derive_seed, opinfo_cases, order_cases, plan_tests, PlanError, TestSourcePolicy, DEFAULT_SAMPLE_SHAPES};
pub use pool::{PoolConfig, PoolError, WorkerLease, WorkerPool};
pub use tolerance::{default_tolerances, Mismatch, Tolerance, ToleranceError, TolerancePolicy};
pub use worker::{LoadOutcome, TestOutcome, WorkerConnection, WorkerError, WorkerSpec, WorkerTimeouts};
