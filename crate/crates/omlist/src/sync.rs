//! Node-level locks.
//!
//! Every item and group embeds a [`NodeLock`], which offers two acquisition
//! disciplines selected per list at construction:
//!
//! * [`LockKind::Spin`] — test-then-CAS on an atomic flag with exponential
//!   backoff. The backoff starts with short bursts of `spin_loop` hints,
//!   doubles each round, then degrades to scheduler yields and finally to
//!   short sleeps capped at one millisecond, so heavy contention on few
//!   cores still makes progress.
//! * [`LockKind::Blocking`] — a word-sized mutex that parks waiting threads.
//!
//! Both flavors are embedded side by side (two bytes plus a debug-only
//! shadow); a list uses exactly one of them for its whole lifetime.

use std::hint;
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;
use std::time::Duration;

use parking_lot::lock_api::RawMutex as _;
use parking_lot::RawMutex;

/// Which acquisition discipline a list's locks use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LockKind {
    /// Busy-wait with capped exponential backoff.
    Spin,
    /// Park the waiting thread.
    Blocking,
}

impl LockKind {
    /// Canonical lower-case name, as used by CLI flags and CSV rows.
    pub fn name(self) -> &'static str {
        match self {
            LockKind::Spin => "spin",
            LockKind::Blocking => "blocking",
        }
    }
}

impl std::str::FromStr for LockKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spin" => Ok(LockKind::Spin),
            "blocking" => Ok(LockKind::Blocking),
            other => Err(format!("unknown lock kind {other:?} (spin|blocking)")),
        }
    }
}

/// Exponential backoff for contended CAS loops.
///
/// Rounds 0..=6 busy-spin `2^round` pause hints, rounds 7..=12 yield to the
/// scheduler, and later rounds sleep for one millisecond each, which bounds
/// the waste of a long wait without a parking queue.
pub struct Backoff {
    step: u32,
}

const SPIN_STEPS: u32 = 6;
const YIELD_STEPS: u32 = 12;

impl Backoff {
    pub fn new() -> Self {
        Backoff { step: 0 }
    }

    /// Wait one round and escalate.
    pub fn wait(&mut self) {
        if self.step <= SPIN_STEPS {
            for _ in 0..(1u32 << self.step) {
                hint::spin_loop();
            }
        } else if self.step <= YIELD_STEPS {
            thread::yield_now();
        } else {
            thread::sleep(Duration::from_millis(1));
        }
        self.step = self.step.saturating_add(1);
    }
}

impl Default for Backoff {
    fn default() -> Self {
        Self::new()
    }
}

/// Compare-and-set a boolean flag, e.g. an item's liveness flag.
///
/// Returns `true` iff the flag held `current` and was swapped to `new` by
/// this call; exactly one of several racing callers succeeds.
#[inline]
pub fn cas_flag(flag: &AtomicBool, current: bool, new: bool) -> bool {
    flag.compare_exchange(current, new, Ordering::AcqRel, Ordering::Acquire)
        .is_ok()
}

/// A per-node lock supporting both acquisition disciplines.
pub struct NodeLock {
    flag: AtomicBool,
    mutex: RawMutex,
    #[cfg(debug_assertions)]
    held: AtomicBool,
}

impl NodeLock {
    pub const fn new() -> Self {
        NodeLock {
            flag: AtomicBool::new(false),
            mutex: RawMutex::INIT,
            #[cfg(debug_assertions)]
            held: AtomicBool::new(false),
        }
    }

    /// Block until the lock is held.
    pub fn acquire(&self, kind: LockKind) {
        match kind {
            LockKind::Spin => {
                let mut backoff = Backoff::new();
                loop {
                    if !self.flag.load(Ordering::Relaxed)
                        && self
                            .flag
                            .compare_exchange_weak(
                                false,
                                true,
                                Ordering::Acquire,
                                Ordering::Relaxed,
                            )
                            .is_ok()
                    {
                        break;
                    }
                    backoff.wait();
                }
            }
            LockKind::Blocking => self.mutex.lock(),
        }
        self.mark_held();
    }

    /// Acquire only if immediately available.
    pub fn try_acquire(&self, kind: LockKind) -> bool {
        let ok = match kind {
            LockKind::Spin => {
                !self.flag.load(Ordering::Relaxed)
                    && self
                        .flag
                        .compare_exchange(false, true, Ordering::Acquire, Ordering::Relaxed)
                        .is_ok()
            }
            LockKind::Blocking => self.mutex.try_lock(),
        };
        if ok {
            self.mark_held();
        }
        ok
    }

    /// Release a held lock. Releasing a lock the caller does not hold is a
    /// programming error; debug builds abort on it.
    pub fn release(&self, kind: LockKind) {
        #[cfg(debug_assertions)]
        {
            let was = self.held.swap(false, Ordering::AcqRel);
            debug_assert!(was, "released a NodeLock that was not held");
        }
        match kind {
            LockKind::Spin => {
                let was = self.flag.swap(false, Ordering::Release);
                debug_assert!(was, "released a spin lock that was not held");
            }
            // Safety: per the contract above the caller holds the mutex.
            LockKind::Blocking => unsafe { self.mutex.unlock() },
        }
    }

    #[inline]
    fn mark_held(&self) {
        #[cfg(debug_assertions)]
        {
            let was = self.held.swap(true, Ordering::AcqRel);
            debug_assert!(!was, "acquired a NodeLock that was already held");
        }
    }
}

impl Default for NodeLock {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for NodeLock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NodeLock")
            .field("spin_flag", &self.flag.load(Ordering::Relaxed))
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU64;
    use std::sync::Barrier;

    fn hammer(kind: LockKind, threads: usize, rounds: u64) {
        let lock = NodeLock::new();
        let counter = AtomicU64::new(0);
        let mut shared = 0u64;
        let shared_ptr = &mut shared as *mut u64 as usize;
        let barrier = Barrier::new(threads);
        thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(|| {
                    barrier.wait();
                    for _ in 0..rounds {
                        lock.acquire(kind);
                        // The lock is the only thing making this non-atomic
                        // read-modify-write safe; a mutual-exclusion bug shows
                        // up as a lost update.
                        unsafe {
                            let p = shared_ptr as *mut u64;
                            p.write(p.read() + 1);
                        }
                        lock.release(kind);
                        counter.fetch_add(1, Ordering::Relaxed);
                    }
                });
            }
        });
        assert_eq!(shared, threads as u64 * rounds);
        assert_eq!(counter.load(Ordering::Relaxed), threads as u64 * rounds);
    }

    #[test]
    fn spin_lock_excludes() {
        hammer(LockKind::Spin, 8, 2_000);
    }

    #[test]
    fn blocking_lock_excludes() {
        hammer(LockKind::Blocking, 8, 2_000);
    }

    #[test]
    fn many_contenders_complete() {
        // 64 contenders with tiny critical sections all finish.
        hammer(LockKind::Spin, 64, 200);
        hammer(LockKind::Blocking, 64, 200);
    }

    #[test]
    fn try_acquire_refuses_held() {
        for kind in [LockKind::Spin, LockKind::Blocking] {
            let lock = NodeLock::new();
            assert!(lock.try_acquire(kind));
            thread::scope(|s| {
                s.spawn(|| assert!(!lock.try_acquire(kind)));
            });
            lock.release(kind);
            assert!(lock.try_acquire(kind));
            lock.release(kind);
        }
    }

    #[test]
    fn cas_flag_single_winner() {
        let flag = AtomicBool::new(true);
        let winners = AtomicU64::new(0);
        let barrier = Barrier::new(16);
        thread::scope(|s| {
            for _ in 0..16 {
                s.spawn(|| {
                    barrier.wait();
                    if cas_flag(&flag, true, false) {
                        winners.fetch_add(1, Ordering::Relaxed);
                    }
                });
            }
        });
        assert_eq!(winners.load(Ordering::Relaxed), 1);
        assert!(!flag.load(Ordering::Relaxed));
        // Once cleared, further attempts fail.
        assert!(!cas_flag(&flag, true, false));
    }

    #[test]
    #[cfg(debug_assertions)]
    #[should_panic(expected = "not held")]
    fn double_release_panics_in_debug() {
        let lock = NodeLock::new();
        lock.acquire(LockKind::Spin);
        lock.release(LockKind::Spin);
        lock.release(LockKind::Spin);
    }
}
