//! Per-worker operation counters.
//!
//! Every list owns a [`MetricsRegistry`] with a fixed array of cache-line
//! padded slots. A worker thread claims a slot index once (thread-local) and
//! all counter bumps from list operations on that thread go to its slot, so
//! hot paths never share a cache line. [`MetricsRegistry::aggregate`] sums
//! the slots into a [`MetricsTotals`] snapshot.

use std::cell::Cell;
use std::sync::atomic::{AtomicU64, Ordering};

/// Number of worker slots in a registry. Threads beyond this share slots by
/// index modulo; counts stay exact either way.
pub const WORKER_SLOTS: usize = 128;

const COUNTERS: usize = 10;

/// Counter identities within a slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(usize)]
pub enum Counter {
    /// Completed inserts.
    Inserts = 0,
    /// Completed deletes.
    Deletes = 1,
    /// Completed order queries (however many retries each took).
    Orders = 2,
    /// Relabel episodes (group split / respread runs).
    Relabels = 3,
    /// Item-label writes: fresh insert labels plus respread commits.
    LbUpdates = 4,
    /// Group-label writes: new group labels plus redistribution commits.
    LtUpdates = 5,
    /// Order-query retries forced by concurrent relabels.
    OrderRedos = 6,
    /// Order queries that failed because an operand died.
    OrderFails = 7,
    /// Deletes that lost the liveness race or targeted a dead item.
    DeleteFails = 8,
    /// Node-lock acquisitions (diagnostic; not part of CSV output).
    LockAcquires = 9,
}

#[repr(align(128))]
struct Slot([AtomicU64; COUNTERS]);

impl Slot {
    fn new() -> Self {
        Slot(std::array::from_fn(|_| AtomicU64::new(0)))
    }
}

thread_local! {
    static WORKER_SLOT: Cell<usize> = const { Cell::new(0) };
}

/// Bind the calling thread to a worker slot for all subsequent operations.
/// Harness workers call this once at startup; unbound threads use slot 0.
pub fn bind_worker_slot(slot: usize) {
    WORKER_SLOT.with(|s| s.set(slot % WORKER_SLOTS));
}

pub(crate) fn current_slot() -> usize {
    WORKER_SLOT.with(|s| s.get())
}

/// Fixed-size array of padded per-worker counter slots.
pub struct MetricsRegistry {
    slots: Box<[Slot]>,
}

impl MetricsRegistry {
    pub fn new() -> Self {
        MetricsRegistry {
            slots: (0..WORKER_SLOTS).map(|_| Slot::new()).collect(),
        }
    }

    #[inline]
    pub(crate) fn bump(&self, counter: Counter) {
        self.add(counter, 1);
    }

    #[inline]
    pub(crate) fn add(&self, counter: Counter, n: u64) {
        self.slots[current_slot()].0[counter as usize].fetch_add(n, Ordering::Relaxed);
    }

    /// Sum all slots into one snapshot.
    pub fn aggregate(&self) -> MetricsTotals {
        let mut raw = [0u64; COUNTERS];
        for slot in self.slots.iter() {
            for (acc, cell) in raw.iter_mut().zip(slot.0.iter()) {
                *acc += cell.load(Ordering::Relaxed);
            }
        }
        MetricsTotals {
            inserts: raw[Counter::Inserts as usize],
            deletes: raw[Counter::Deletes as usize],
            orders: raw[Counter::Orders as usize],
            relabels: raw[Counter::Relabels as usize],
            lb_updates: raw[Counter::LbUpdates as usize],
            lt_updates: raw[Counter::LtUpdates as usize],
            order_redos: raw[Counter::OrderRedos as usize],
            order_fails: raw[Counter::OrderFails as usize],
            delete_fails: raw[Counter::DeleteFails as usize],
            lock_acquires: raw[Counter::LockAcquires as usize],
        }
    }

    /// Zero every counter in every slot.
    pub fn reset(&self) {
        for slot in self.slots.iter() {
            for cell in slot.0.iter() {
                cell.store(0, Ordering::Relaxed);
            }
        }
    }
}

impl Default for MetricsRegistry {
    fn default() -> Self {
        Self::new()
    }
}

/// Aggregated counter snapshot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MetricsTotals {
    pub inserts: u64,
    pub deletes: u64,
    pub orders: u64,
    pub relabels: u64,
    pub lb_updates: u64,
    pub lt_updates: u64,
    pub order_redos: u64,
    pub order_fails: u64,
    pub delete_fails: u64,
    pub lock_acquires: u64,
}

impl MetricsTotals {
    /// Mean number of label writes (item plus group) per completed insert.
    pub fn avg_label_updates(&self) -> f64 {
        if self.inserts == 0 {
            0.0
        } else {
            (self.lb_updates + self.lt_updates) as f64 / self.inserts as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slots_are_cache_line_padded() {
        assert_eq!(std::mem::size_of::<Slot>(), 128);
        assert_eq!(std::mem::align_of::<Slot>(), 128);
    }

    #[test]
    fn aggregate_sums_across_threads() {
        let reg = MetricsRegistry::new();
        std::thread::scope(|s| {
            for w in 0..8 {
                let reg = &reg;
                s.spawn(move || {
                    bind_worker_slot(w);
                    for _ in 0..1000 {
                        reg.bump(Counter::Inserts);
                    }
                    reg.add(Counter::LbUpdates, 5);
                });
            }
        });
        let t = reg.aggregate();
        assert_eq!(t.inserts, 8_000);
        assert_eq!(t.lb_updates, 40);
        assert_eq!(t.avg_label_updates(), 40.0 / 8_000.0);
        reg.reset();
        assert_eq!(reg.aggregate(), MetricsTotals::default());
    }
}
