//! Coverage-first kernel generation harness.
//!
//! An LLM is driven through a finite-state loop (generate, lint, compile,
//! test, feedback) to produce wrapper/kernel pairs for tensor operators.
//! Candidates are executed by out-of-process workers speaking a
//! length-prefixed JSON protocol, and whole campaigns are fanned out over a
//! bounded pool of sessions with coverage reports aggregated across runs.
//!
//! ```text
//! catalog ──► scheduler ──► fsm::run_operator ──► fsm::run_session
//!                │                  │                 ├─ llm (generation / summarizer)
//!                │                  │                 ├─ prompt (templates, response parsing)
//!                │                  │                 ├─ lint (kernel DSL static analysis)
//!                │                  │                 └─ protocol (worker pool, test plans)
//!                └──► report (coverage tables, cumulative curves, aggregation)
//! ```

#![forbid(unsafe_code)]

pub mod catalog;
pub mod dtype;
pub mod floats;
pub mod fsm;
pub mod lint;
pub mod llm;
pub mod prompt;
pub mod protocol;
pub mod scheduler;
pub mod sync;

pub use dtype::Dtype;
