//! A concurrent order-maintenance list.
//!
//! The structure maintains a total order over opaque items under three
//! operations:
//!
//! * [`OrderList::insert_after`] — place a new item immediately after an
//!   existing one,
//! * [`OrderList::delete`] — remove an item,
//! * [`OrderList::order`] — decide which of two items comes first.
//!
//! Internally items carry integer labels arranged in two levels: items are
//! grouped, groups carry wide labels from a sparse top-level space, and items
//! carry narrow labels local to their group. A comparison reads two label
//! pairs and compares them lexicographically; it takes no locks and retries
//! only if a concurrent relabel moved one of its operands. Inserts and
//! deletes take fine-grained per-node locks, so disjoint regions of the list
//! proceed in parallel, and local label crowding is repaired by splitting
//! groups and respreading labels.
//!
//! Deleted items are unlinked but their storage is retained until the list is
//! dropped, so in-flight readers never observe freed memory and handles are
//! never reused.

pub mod bench;
pub mod list;
pub mod metrics;
pub mod oracle;
pub mod stress;
pub mod sync;
pub mod testkit;
pub mod workload;

pub use list::{
    CheckError, CheckReport, EpisodeEvent, EpisodeLog, ItemRef, OpError, OrderList, OrderResult,
};
pub use metrics::{bind_worker_slot, MetricsTotals, WORKER_SLOTS};
pub use sync::LockKind;
