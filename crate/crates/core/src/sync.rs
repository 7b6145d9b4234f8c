//! Counting semaphore with RAII permits. Permits are returned on drop, which
//! includes unwinding out of a panicking task.

use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};

#[derive(Debug)]
pub struct Semaphore {
    available: Mutex<usize>,
    capacity: usize,
    cv: Condvar,
}

#[derive(Debug)]
pub struct Permit<'a> {
    sem: &'a Semaphore,
}

impl Semaphore {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "semaphore capacity must be positive");
        Self {
            available: Mutex::new(capacity),
            capacity,
            cv: Condvar::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn available(&self) -> usize {
        *self.available.lock()
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock();
        while *n == 0 {
            self.cv.wait(&mut n);
        }
        *n -= 1;
        Permit { sem: self }
    }

    pub fn try_acquire(&self) -> Option<Permit<'_>> {
        let mut n = self.available.lock();
        if *n == 0 {
            return None;
        }
        *n -= 1;
        Some(Permit { sem: self })
    }

    /// `None` when no permit freed up before the deadline.
    pub fn acquire_timeout(&self, timeout: Duration) -> Option<Permit<'_>> {
        let deadline = Instant::now() + timeout;
        let mut n = self.available.lock();
        while *n == 0 {
            if self.cv.wait_until(&mut n, deadline).timed_out() && *n == 0 {
                return None;
            }
        }
        *n -= 1;
        Some(Permit { sem: self })
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.sem.available.lock() += 1;
        self.sem.cv.notify_one();
    }
}
