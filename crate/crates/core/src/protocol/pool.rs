//! Shared pool of worker connections handed out as exclusive leases.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};

use super::worker::{secs, LoadOutcome, TestOutcome, WorkerConnection, WorkerError, WorkerSpec, WorkerTimeouts};
use super::{BackendMode, TestCase, TolerancePolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    /// One entry per worker slot.
    pub workers: Vec<WorkerSpec>,
    #[serde(default = "default_lease_timeout", with = "secs")]
    pub lease_timeout: Duration,
    /// Respawns allowed per slot before it is retired.
    #[serde(default = "default_restarts")]
    pub max_restarts_per_worker: u32,
    #[serde(default)]
    pub timeouts: WorkerTimeouts,
}

fn default_lease_timeout() -> Duration {
    Duration::from_secs(3600)
}

fn default_restarts() -> u32 {
    3
}

impl PoolConfig {
    pub fn uniform(spec: WorkerSpec, count: usize) -> Self {
        Self {
            workers: vec![spec; count],
            lease_timeout: default_lease_timeout(),
            max_restarts_per_worker: default_restarts(),
            timeouts: WorkerTimeouts::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoolError {
    #[error("no worker became available within {0:?}")]
    PoolExhausted(Duration),
    #[error("every worker slot has been retired; last failure: {0}")]
    AllRetired(String),
    #[error("worker pool has no slots")]
    Empty,
}

#[derive(Debug)]
struct Slot {
    index: usize,
    spec: WorkerSpec,
    conn: Option<WorkerConnection>,
    started: bool,
    restarts: u32,
    last_error: Option<String>,
}

#[derive(Debug, Default)]
struct State {
    idle: VecDeque<Slot>,
    live: usize,
    last_failure: Option<String>,
    respawns: u64,
}

#[derive(Debug)]
pub struct WorkerPool {
    config: PoolConfig,
    state: Mutex<State>,
    cv: Condvar,
}

impl WorkerPool {
    /// Workers start lazily on first lease.
    pub fn new(config: PoolConfig) -> Result<Self, PoolError> {
        if config.workers.is_empty() {
            return Err(PoolError::Empty);
        }
        let idle = config
            .workers
            .iter()
            .enumerate()
            .map(|(index, spec)| Slot {
                index,
                spec: spec.clone(),
                conn: None,
                started: false,
                restarts: 0,
                last_error: None,
            })
            .collect();
        let live = config.workers.len();
        Ok(Self {
            config,
            state: Mutex::new(State {
                idle,
                live,
                ..State::default()
            }),
            cv: Condvar::new(),
        })
    }

    pub fn config(&self) -> &PoolConfig {
        &self.config
    }

    pub fn capacity(&self) -> usize {
        self.config.workers.len()
    }

    /// Slots not yet retired.
    pub fn live_workers(&self) -> usize {
        self.state.lock().live
    }

    pub fn respawn_count(&self) -> u64 {
        self.state.lock().respawns
    }

    pub fn lease(&self) -> Result<WorkerLease<'_>, PoolError> {
        self.lease_with_timeout(self.config.lease_timeout)
    }

    pub fn lease_with_timeout(&self, timeout: Duration) -> Result<WorkerLease<'_>, PoolError> {
        let deadline = Instant::now() + timeout;
        loop {
            let mut slot = {
                let mut st = self.state.lock();
                loop {
                    if let Some(slot) = st.idle.pop_front() {
                        break slot;
                    }
                    if st.live == 0 {
                        return Err(PoolError::AllRetired(st.last_failure.clone().unwrap_or_default()));
                    }
                    if self.cv.wait_until(&mut st, deadline).timed_out() && st.idle.is_empty() {
                        return Err(PoolError::PoolExhausted(timeout));
                    }
                }
            };
            match self.make_healthy(&mut slot) {
                Ok(()) => {
                    return Ok(WorkerLease {
                        pool: self,
                        slot: Some(slot),
                        loaded: false,
                    })
                }
                Err(e) => {
                    slot.last_error = Some(e.to_string());
                    let mut st = self.state.lock();
                    st.last_failure = Some(e.to_string());
                    if slot.restarts > self.config.max_restarts_per_worker {
                        tracing::error!(slot = slot.index, error = %e, "retiring worker slot");
                        st.live -= 1;
                        self.cv.notify_all();
                    } else {
                        st.idle.push_back(slot);
                        self.cv.notify_one();
                    }
                }
            }
        }
    }

    fn make_healthy(&self, slot: &mut Slot) -> Result<(), WorkerError> {
        let health = self.config.timeouts.health;
        if let Some(conn) = slot.conn.as_mut() {
            if !conn.is_broken() && conn.probe(health).is_ok() {
                return Ok(());
            }
            slot.conn = None;
        }
        if slot.started {
            slot.restarts += 1;
            self.state.lock().respawns += 1;
            if slot.restarts > self.config.max_restarts_per_worker {
                return Err(WorkerError::SpawnFailed(format!(
                    "worker {} exceeded {} restarts (last error: {})",
                    slot.index,
                    self.config.max_restarts_per_worker,
                    slot.last_error.as_deref().unwrap_or("none")
                )));
            }
        }
        slot.started = true;
        let mut conn = WorkerConnection::open(&slot.spec, &format!("w{}", slot.index))?;
        conn.probe(health)?;
        slot.conn = Some(conn);
        Ok(())
    }

    fn give_back(&self, mut slot: Slot) {
        if slot.conn.as_ref().is_some_and(|c| c.is_broken()) {
            slot.conn = None;
        }
        let mut st = self.state.lock();
        st.idle.push_back(slot);
        self.cv.notify_one();
    }

    /// Stops every idle worker. Leased workers stop when their lease drops.
    pub fn shutdown(&self) {
        let mut st = self.state.lock();
        for slot in st.idle.iter_mut() {
            if let Some(mut c) = slot.conn.take() {
                c.shutdown();
            }
        }
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Exclusive use of one worker. Enforces load-before-test on the client side.
#[derive(Debug)]
pub struct WorkerLease<'p> {
    pool: &'p WorkerPool,
    slot: Option<Slot>,
    loaded: bool,
}

impl WorkerLease<'_> {
    fn conn(&mut self) -> &mut WorkerConnection {
        self.slot
            .as_mut()
            .and_then(|s| s.conn.as_mut())
            .expect("a lease always holds a connection")
    }

    pub fn backend(&self) -> Option<BackendMode> {
        self.slot.as_ref().and_then(|s| s.conn.as_ref()).and_then(|c| c.backend())
    }

    pub fn worker_index(&self) -> usize {
        self.slot.as_ref().map(|s| s.index).unwrap_or_default()
    }

    pub fn pid(&self) -> Option<u32> {
        self.slot.as_ref().and_then(|s| s.conn.as_ref()).and_then(|c| c.pid())
    }

    pub fn timeouts(&self) -> WorkerTimeouts {
        self.pool.config.timeouts
    }

    pub fn load_candidate(&mut self, module_source: &str) -> Result<LoadOutcome, WorkerError> {
        self.loaded = false;
        let timeout = self.pool.config.timeouts.compile;
        let outcome = self.conn().load_candidate(module_source, timeout)?;
        self.loaded = outcome == LoadOutcome::Loaded;
        Ok(outcome)
    }

    pub fn run_test(&mut self, case: &TestCase, policy: &TolerancePolicy) -> Result<TestOutcome, WorkerError> {
        if !self.loaded {
            return Err(WorkerError::Protocol("run_test before a successful load_candidate".into()));
        }
        let timeout = self.pool.config.timeouts.test;
        self.conn().run_test(case, policy, timeout)
    }

    /// Kills the worker; the pool respawns it on a later lease.
    pub fn kill(&mut self) {
        self.conn().kill();
    }
}

impl Drop for WorkerLease<'_> {
    fn drop(&mut self) {
        if let Some(slot) = self.slot.take() {
            self.pool.give_back(slot);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::mock_worker::{MockRule, MockWorkerScript, TestAction};
    use crate::protocol::{default_tolerances, TestSource};
    use crate::Dtype;
    use std::sync::atomic::{AtomicBool, Ordering};

    fn mock(script: MockWorkerScript) -> WorkerSpec {
        WorkerSpec::InProcessMock { script }
    }

    fn case(op: &str) -> TestCase {
        TestCase {
            case_id: format!("{op}/float32/opinfo/0"),
            operator: op.into(),
            dtype: Dtype::Float32,
            input_tensors: vec![],
            input_args: vec![],
            input_kwargs: Default::default(),
            source: TestSource::OpInfoStyle,
        }
    }

    #[test]
    fn lease_is_health_checked_and_annotated() {
        let pool = WorkerPool::new(PoolConfig::uniform(mock(MockWorkerScript::default()), 1)).unwrap();
        let mut lease = pool.lease().unwrap();
        assert_eq!(lease.backend(), Some(BackendMode::Mock));
        assert_eq!(lease.load_candidate("def wrapper(): pass").unwrap(), LoadOutcome::Loaded);
        assert_eq!(lease.run_test(&case("exp"), &default_tolerances()).unwrap(), TestOutcome::Passed);
    }

    #[test]
    fn fifth_lease_waits_for_a_release() {
        let pool = WorkerPool::new(PoolConfig::uniform(mock(MockWorkerScript::default()), 4)).unwrap();
        let leases: Vec<_> = (0..4).map(|_| pool.lease().unwrap()).collect();
        assert!(matches!(
            pool.lease_with_timeout(Duration::from_millis(50)),
            Err(PoolError::PoolExhausted(_))
        ));
        let got_fifth = AtomicBool::new(false);
        std::thread::scope(|s| {
            let waiter = s.spawn(|| {
                let l = pool.lease_with_timeout(Duration::from_secs(10)).unwrap();
                got_fifth.store(true, Ordering::SeqCst);
                drop(l);
            });
            std::thread::sleep(Duration::from_millis(50));
            assert!(!got_fifth.load(Ordering::SeqCst));
            drop(leases);
            waiter.join().unwrap();
        });
        assert!(got_fifth.load(Ordering::SeqCst));
    }

    #[test]
    fn run_test_requires_load() {
        let pool = WorkerPool::new(PoolConfig::uniform(mock(MockWorkerScript::default()), 1)).unwrap();
        let mut lease = pool.lease().unwrap();
        assert!(matches!(lease.run_test(&case("exp"), &default_tolerances()), Err(WorkerError::Protocol(_))));
    }

    #[test]
    fn worker_death_is_reported_and_slot_respawned() {
        let script = MockWorkerScript {
            rules: vec![MockRule {
                pattern: String::new(),
                operator: Some("doomed".into()),
                load: Default::default(),
                test: TestAction::Exit { code: 137 },
            }],
            dtypes: None,
        };
        let pool = WorkerPool::new(PoolConfig::uniform(mock(script), 1)).unwrap();
        {
            let mut lease = pool.lease().unwrap();
            lease.load_candidate("src").unwrap();
            let err = lease.run_test(&case("doomed"), &default_tolerances()).unwrap_err();
            assert!(matches!(err, WorkerError::Lost(_)), "{err:?}");
        }
        let mut lease = pool.lease().unwrap();
        assert_eq!(pool.respawn_count(), 1);
        lease.load_candidate("src").unwrap();
        assert_eq!(lease.run_test(&case("fine"), &default_tolerances()).unwrap(), TestOutcome::Passed);
    }

    #[test]
    fn hung_worker_times_out() {
        let script = MockWorkerScript {
            rules: vec![MockRule {
                pattern: "SLOW".into(),
                operator: None,
                load: Default::default(),
                test: TestAction::Hang { ms: 2_000 },
            }],
            dtypes: None,
        };
        let mut config = PoolConfig::uniform(mock(script), 1);
        config.timeouts.test = Duration::from_millis(100);
        let pool = WorkerPool::new(config).unwrap();
        let mut lease = pool.lease().unwrap();
        lease.load_candidate("SLOW").unwrap();
        let err = lease.run_test(&case("exp"), &default_tolerances()).unwrap_err();
        assert!(matches!(err, WorkerError::Timeout { request: "run_test", .. }));
    }

    #[test]
    fn unspawnable_workers_retire() {
        let mut config = PoolConfig::uniform(
            WorkerSpec::Command {
                program: "/nonexistent/opforge-worker".into(),
                args: vec![],
            },
            2,
        );
        config.max_restarts_per_worker = 1;
        let pool = WorkerPool::new(config).unwrap();
        let err = pool.lease_with_timeout(Duration::from_secs(5)).unwrap_err();
        assert!(matches!(err, PoolError::AllRetired(ref m) if m.contains("nonexistent")), "{err:?}");
        assert_eq!(pool.live_workers(), 0);
    }

    #[test]
    fn tcp_worker() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut r = std::io::BufReader::new(stream.try_clone().unwrap());
            let mut w = stream;
            crate::protocol::mock_worker::serve(&mut r, &mut w, &MockWorkerScript::default())
        });
        let pool = WorkerPool::new(PoolConfig::uniform(WorkerSpec::Tcp { addr }, 1)).unwrap();
        {
            let mut lease = pool.lease().unwrap();
            lease.load_candidate("x").unwrap();
            assert_eq!(lease.run_test(&case("exp"), &default_tolerances()).unwrap(), TestOutcome::Passed);
        }
        drop(pool);
        assert!(matches!(
            server.join().unwrap(),
            crate::protocol::ServeEnd::Shutdown | crate::protocol::ServeEnd::PeerClosed
        ));
    }

    #[test]
    fn empty_pool_rejected() {
        assert_eq!(WorkerPool::new(PoolConfig::uniform(mock(Default::default()), 0)).unwrap_err(), PoolError::Empty);
    }
}
