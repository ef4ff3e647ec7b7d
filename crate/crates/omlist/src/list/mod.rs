//! The concurrent two-level order-maintenance list.
//!
//! Items form a doubly-linked bottom list and are partitioned into contiguous
//! groups; groups form a doubly-linked top list. A group carries a 64-bit
//! label from `[0, N²)` shared by its items, and every item carries a 32-bit
//! label from `[0, N)` local to its group, where `N = 2^bits` is the list's
//! capacity. An item's key is the pair `(group label, item label)`, and keys
//! strictly increase along the bottom list — that single invariant makes
//! [`OrderList::order`] a pair of label reads plus validation, with no locks.
//!
//! Mutators synchronize with fine-grained per-node locks: an operation first
//! locks the owning group (validating membership afterwards), then the item
//! locks it needs. Group locks are only ever taken in top-list order, item
//! locks only under their owning group's lock or as a final acquisition that
//! no further waiting follows, which together rule out cycles. Label-space
//! crowding at an insertion point is repaired in place by a relabel episode
//! (see `relabel.rs`) before the insert retries.

mod arena;
mod check;
pub(crate) mod init;
mod relabel;
mod writelog;

pub use check::{CheckError, CheckReport};
pub use writelog::{EpisodeEvent, EpisodeLog};

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};
use std::sync::Arc;

use crate::metrics::{Counter, MetricsRegistry};
use crate::sync::{cas_flag, LockKind, NodeLock};
use arena::{Arena, Vacant, NIL};

/// Bottom-list head sentinel index.
pub(crate) const ITEM_HEAD: u32 = 0;
/// Bottom-list tail sentinel index.
pub(crate) const ITEM_TAIL: u32 = 1;
/// Top-list head sentinel index.
pub(crate) const GROUP_HEAD: u32 = 0;
/// Top-list tail sentinel index.
pub(crate) const GROUP_TAIL: u32 = 1;

pub(crate) struct Item {
    pub(crate) live: AtomicBool,
    pub(crate) label: AtomicU32,
    pub(crate) pre: AtomicU32,
    pub(crate) next: AtomicU32,
    pub(crate) group: AtomicU32,
    pub(crate) lock: NodeLock,
}

impl Vacant for Item {
    fn vacant() -> Self {
        Item {
            live: AtomicBool::new(false),
            label: AtomicU32::new(0),
            pre: AtomicU32::new(NIL),
            next: AtomicU32::new(NIL),
            group: AtomicU32::new(NIL),
            lock: NodeLock::new(),
        }
    }
}

pub(crate) struct Group {
    pub(crate) live: AtomicBool,
    pub(crate) label: AtomicU64,
    pub(crate) pre: AtomicU32,
    pub(crate) next: AtomicU32,
    /// Number of items currently linked in this group's span (live items plus
    /// logically deleted ones whose unlink is still in flight). Mutated only
    /// under this group's lock.
    pub(crate) count: AtomicU32,
    pub(crate) lock: NodeLock,
}

impl Vacant for Group {
    fn vacant() -> Self {
        Group {
            live: AtomicBool::new(false),
            label: AtomicU64::new(0),
            pre: AtomicU32::new(NIL),
            next: AtomicU32::new(NIL),
            count: AtomicU32::new(0),
            lock: NodeLock::new(),
        }
    }
}

/// Opaque handle to an item of one [`OrderList`].
///
/// Handles stay valid after deletion (operations then report the item gone)
/// and are never reused for new items. A handle must only be passed back to
/// the list it came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ItemRef(pub(crate) u32);

impl ItemRef {
    /// Stable numeric identity of this handle, e.g. for cross-language
    /// embedding. Pair with [`OrderList::item_from_raw`].
    pub fn to_raw(self) -> u32 {
        self.0
    }
}

/// Verdict of an order query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderResult {
    /// `x` precedes `y`.
    Before,
    /// `x` does not precede `y` (it follows `y`, or the operands are equal).
    NotBefore,
    /// At least one operand was observed deleted.
    Fail,
}

/// Errors surfaced by list construction and mutation.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum OpError {
    /// The target item is deleted, or is no valid insertion position.
    #[error("target item is gone or not a usable position")]
    TargetGone,
    /// The list already holds its capacity of live items, or node storage is
    /// exhausted.
    #[error("capacity exceeded: {0}")]
    CapacityExceeded(String),
    /// No integer label remains between the insertion point and the end of
    /// the label space; redistribution could not widen the gap.
    #[error("label space exhausted at the insertion point")]
    LabelSpaceExhausted,
    /// Invalid construction parameters.
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// The concurrent order-maintenance list. See the module docs for the overall
/// design; construction variants live in `init.rs`.
pub struct OrderList {
    pub(crate) items: Arena<Item>,
    pub(crate) groups: Arena<Group>,
    pub(crate) lock_kind: LockKind,
    /// Capacity exponent: the list holds at most `2^bits` live items.
    pub(crate) bits: u32,
    /// Items per split-off group: `bits / 2`.
    pub(crate) group_cap: u32,
    /// Live non-sentinel items.
    pub(crate) live_count: AtomicU64,
    pub(crate) initial_count: u64,
    pub(crate) metrics: MetricsRegistry,
    pub(crate) episode_observer: parking_lot::RwLock<Option<writelog::EpisodeObserver>>,
}

impl OrderList {
    // ----- navigation & introspection -------------------------------------

    #[inline]
    pub(crate) fn item(&self, i: u32) -> &Item {
        self.items.get(i)
    }

    #[inline]
    pub(crate) fn group(&self, g: u32) -> &Group {
        self.groups.get(g)
    }

    /// Largest bottom label, carried by the tail sentinel.
    #[inline]
    pub(crate) fn bottom_max(&self) -> u32 {
        if self.bits >= 32 {
            u32::MAX
        } else {
            (1u32 << self.bits) - 1
        }
    }

    /// Largest top label, carried by the tail sentinel group (`N² - 1`).
    #[inline]
    pub(crate) fn top_max(&self) -> u64 {
        if self.bits >= 32 {
            u64::MAX
        } else {
            (1u64 << (2 * self.bits)) - 1
        }
    }

    /// Maximum number of live items.
    pub fn capacity(&self) -> u64 {
        1u64 << self.bits
    }

    /// Capacity exponent this list was built with.
    pub fn capacity_bits(&self) -> u32 {
        self.bits
    }

    /// Number of live items.
    pub fn len(&self) -> u64 {
        self.live_count.load(Ordering::Relaxed)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lock_kind(&self) -> LockKind {
        self.lock_kind
    }

    /// The permanent front sentinel; every item inserted "at the front" goes
    /// after it.
    pub fn head(&self) -> ItemRef {
        ItemRef(ITEM_HEAD)
    }

    /// The permanent back sentinel.
    pub fn tail(&self) -> ItemRef {
        ItemRef(ITEM_TAIL)
    }

    /// Handle to the `i`-th item of the initial population, in order.
    pub fn initial_item(&self, i: u64) -> Option<ItemRef> {
        if i < self.initial_count {
            Some(ItemRef(2 + i as u32))
        } else {
            None
        }
    }

    /// Re-validate a raw handle id obtained from [`ItemRef::to_raw`].
    pub fn item_from_raw(&self, raw: u32) -> Option<ItemRef> {
        if (raw as u64) < self.items.len() {
            Some(ItemRef(raw))
        } else {
            None
        }
    }

    /// Current successor of `x` in the bottom list (racy snapshot under
    /// concurrent mutation; the tail sentinel is its own successor).
    pub fn next(&self, x: ItemRef) -> ItemRef {
        let n = self.item(x.0).next.load(Ordering::Acquire);
        if n == NIL {
            x
        } else {
            ItemRef(n)
        }
    }

    /// Current predecessor of `x` (racy snapshot; the head sentinel is its
    /// own predecessor).
    pub fn prev(&self, x: ItemRef) -> ItemRef {
        let p = self.item(x.0).pre.load(Ordering::Acquire);
        if p == NIL {
            x
        } else {
            ItemRef(p)
        }
    }

    pub fn is_live(&self, x: ItemRef) -> bool {
        self.item(x.0).live.load(Ordering::Acquire)
    }

    pub fn is_sentinel(&self, x: ItemRef) -> bool {
        x.0 < 2
    }

    /// Snapshot of `x`'s key: (group label, item label). Diagnostic only —
    /// the two loads are not mutually atomic under concurrent relabels.
    pub fn key_of(&self, x: ItemRef) -> (u64, u32) {
        let it = self.item(x.0);
        let g = it.group.load(Ordering::Acquire);
        (
            self.group(g).label.load(Ordering::Acquire),
            it.label.load(Ordering::Acquire),
        )
    }

    /// Top-list labels from head to tail sentinel inclusive. Quiescent use.
    pub fn top_labels(&self) -> Vec<u64> {
        let mut out = Vec::new();
        let mut g = GROUP_HEAD;
        loop {
            out.push(self.group(g).label.load(Ordering::Acquire));
            if g == GROUP_TAIL {
                break;
            }
            g = self.group(g).next.load(Ordering::Acquire);
        }
        out
    }

    /// Live items in list order. Quiescent use.
    pub fn iter_live(&self) -> Vec<ItemRef> {
        let mut out = Vec::new();
        let mut i = self.item(ITEM_HEAD).next.load(Ordering::Acquire);
        while i != ITEM_TAIL {
            let it = self.item(i);
            if it.live.load(Ordering::Acquire) {
                out.push(ItemRef(i));
            }
            i = it.next.load(Ordering::Acquire);
        }
        out
    }

    /// This list's operation counters.
    pub fn metrics(&self) -> &MetricsRegistry {
        &self.metrics
    }

    /// Install (or clear) an observer receiving every relabel episode's write
    /// log. Testing hook; costs one branch per episode when unset.
    pub fn set_episode_observer(&self, observer: Option<Arc<dyn Fn(EpisodeLog) + Send + Sync>>) {
        *self.episode_observer.write() = observer;
    }

    // ----- lock plumbing ---------------------------------------------------

    #[inline]
    pub(crate) fn lock_item(&self, i: u32) {
        self.item(i).lock.acquire(self.lock_kind);
        self.metrics.bump(Counter::LockAcquires);
    }

    #[inline]
    pub(crate) fn unlock_item(&self, i: u32) {
        self.item(i).lock.release(self.lock_kind);
    }

    #[inline]
    pub(crate) fn lock_group(&self, g: u32) {
        self.group(g).lock.acquire(self.lock_kind);
        self.metrics.bump(Counter::LockAcquires);
    }

    #[inline]
    pub(crate) fn unlock_group(&self, g: u32) {
        self.group(g).lock.release(self.lock_kind);
    }

    // ----- order -----------------------------------------------------------

    /// Does `x` precede `y`?
    ///
    /// Lock-free: reads both keys with acquire loads, computes the verdict,
    /// then re-reads everything; any change restarts the query. Equal top
    /// labels on distinct live groups are impossible, so a stable equal top
    /// label means "same group" and the item labels decide. Returns
    /// [`OrderResult::Fail`] as soon as either operand is seen deleted.
    pub fn order(&self, x: ItemRef, y: ItemRef) -> OrderResult {
        let xi = self.item(x.0);
        let yi = self.item(y.0);
        loop {
            if !xi.live.load(Ordering::Acquire) || !yi.live.load(Ordering::Acquire) {
                self.metrics.bump(Counter::Orders);
                self.metrics.bump(Counter::OrderFails);
                return OrderResult::Fail;
            }
            let xg = xi.group.load(Ordering::Acquire);
            let xt = self.group(xg).label.load(Ordering::Acquire);
            let yg = yi.group.load(Ordering::Acquire);
            let yt = self.group(yg).label.load(Ordering::Acquire);

            let verdict = if xt != yt { Some(xt < yt) } else { None };
            let (r, bottom) = match verdict {
                Some(r) => (r, None),
                None => {
                    let xb = xi.label.load(Ordering::Acquire);
                    let yb = yi.label.load(Ordering::Acquire);
                    (xb < yb, Some((xb, yb)))
                }
            };

            // Validation: every value read above must still hold, and both
            // operands must still be live; otherwise retry from scratch.
            let stable = xi.group.load(Ordering::Acquire) == xg
                && self.group(xg).label.load(Ordering::Acquire) == xt
                && yi.group.load(Ordering::Acquire) == yg
                && self.group(yg).label.load(Ordering::Acquire) == yt
                && match bottom {
                    None => true,
                    Some((xb, yb)) => {
                        xi.label.load(Ordering::Acquire) == xb
                            && yi.label.load(Ordering::Acquire) == yb
                    }
                };
            if stable {
                if !xi.live.load(Ordering::Acquire) || !yi.live.load(Ordering::Acquire) {
                    self.metrics.bump(Counter::Orders);
                    self.metrics.bump(Counter::OrderFails);
                    return OrderResult::Fail;
                }
                self.metrics.bump(Counter::Orders);
                return if r {
                    OrderResult::Before
                } else {
                    OrderResult::NotBefore
                };
            }
            self.metrics.bump(Counter::OrderRedos);
        }
    }

    // ----- insert ----------------------------------------------------------

    /// Insert a fresh item immediately after `x` and return its handle.
    ///
    /// Locks `x`'s group (validating membership), then `x`, then the
    /// successor; when the local label gap is exhausted it runs a relabel
    /// episode and retries. Fails if `x` is deleted, if the list is at
    /// capacity, or if no label can be made at the position.
    pub fn insert_after(&self, x: ItemRef) -> Result<ItemRef, OpError> {
        if x.0 == ITEM_TAIL {
            // Nothing may follow the back sentinel.
            return Err(OpError::TargetGone);
        }
        let xi = self.item(x.0);
        loop {
            let g0 = xi.group.load(Ordering::Acquire);
            self.lock_group(g0);
            if xi.group.load(Ordering::Acquire) != g0 {
                self.unlock_group(g0);
                continue;
            }
            if !xi.live.load(Ordering::Acquire) {
                self.unlock_group(g0);
                return Err(OpError::TargetGone);
            }
            self.lock_item(x.0);

            // x's links and label are stable under its lock; the successor's
            // label is stable too: its rewriters would need either g0's lock
            // (same-group relabel) or are irrelevant (different group, where
            // the bound is the top of the label space).
            let z = xi.next.load(Ordering::Acquire);
            let lx = xi.label.load(Ordering::Acquire);
            let zi = self.item(z);
            let b = if zi.group.load(Ordering::Acquire) == g0 {
                zi.label.load(Ordering::Acquire)
            } else {
                self.bottom_max()
            };
            debug_assert!(b >= lx, "successor label below predecessor");

            if b - lx < 2 {
                // Sentinels keep their fence labels forever, so an episode
                // must never start at one. A crowded head gap implies the
                // successor is a same-group real item (a cross-group bound
                // is the whole bottom space); anchor the episode there. The
                // anchor is locked under g0, which pins its membership.
                let anchor = if x.0 == ITEM_HEAD {
                    self.lock_item(z);
                    z
                } else {
                    x.0
                };
                let made_room = self.relabel_episode(g0, anchor);
                if anchor != x.0 {
                    self.unlock_item(anchor);
                }
                self.unlock_item(x.0);
                self.unlock_group(g0);
                made_room?;
                continue;
            }

            if self.live_count.fetch_add(1, Ordering::Relaxed) >= self.capacity() {
                self.live_count.fetch_sub(1, Ordering::Relaxed);
                self.unlock_item(x.0);
                self.unlock_group(g0);
                return Err(OpError::CapacityExceeded(format!(
                    "live item limit {} reached",
                    self.capacity()
                )));
            }
            let y = match self.items.alloc() {
                Some(y) => y,
                None => {
                    self.live_count.fetch_sub(1, Ordering::Relaxed);
                    self.unlock_item(x.0);
                    self.unlock_group(g0);
                    return Err(OpError::CapacityExceeded(
                        "node index space exhausted".into(),
                    ));
                }
            };
            let yi = self.item(y);
            yi.label.store(lx + (b - lx) / 2, Ordering::Release);
            yi.group.store(g0, Ordering::Release);
            yi.pre.store(x.0, Ordering::Release);
            yi.next.store(z, Ordering::Release);
            yi.live.store(true, Ordering::Release);

            // Final acquisition of this operation: nothing is awaited after.
            self.lock_item(z);
            xi.next.store(y, Ordering::Release);
            zi.pre.store(y, Ordering::Release);
            self.group(g0).count.fetch_add(1, Ordering::Relaxed);
            self.unlock_item(z);
            self.unlock_item(x.0);
            self.unlock_group(g0);

            self.metrics.bump(Counter::LbUpdates);
            self.metrics.bump(Counter::Inserts);
            return Ok(ItemRef(y));
        }
    }

    // ----- delete ----------------------------------------------------------

    /// Logically delete `x` and unlink it. Returns `false` if `x` is a
    /// sentinel or was already deleted (at most one of several racing deletes
    /// of the same item succeeds). The node, its labels, and its links remain
    /// readable afterwards for concurrent readers.
    pub fn delete(&self, x: ItemRef) -> bool {
        if self.is_sentinel(x) {
            self.metrics.bump(Counter::DeleteFails);
            return false;
        }
        let xi = self.item(x.0);
        if !cas_flag(&xi.live, true, false) {
            self.metrics.bump(Counter::DeleteFails);
            return false;
        }
        self.live_count.fetch_sub(1, Ordering::Relaxed);

        // Unlink. The predecessor and both group reads are revalidated after
        // locking; a concurrent insert before x or a relabel moving x forces
        // a retry. The successor is read under x's lock (stable there) and is
        // this operation's final acquisition.
        let (gd, emptied) = loop {
            let w = xi.pre.load(Ordering::Acquire);
            let gw = self.item(w).group.load(Ordering::Acquire);
            let gd = xi.group.load(Ordering::Acquire);
            // w precedes x, so w's group is at or before x's in the top list;
            // acquire in that (ascending) order.
            self.lock_group(gw);
            if gw != gd {
                self.lock_group(gd);
            }
            let valid = xi.pre.load(Ordering::Acquire) == w
                && self.item(w).group.load(Ordering::Acquire) == gw
                && xi.group.load(Ordering::Acquire) == gd;
            if !valid {
                if gw != gd {
                    self.unlock_group(gd);
                }
                self.unlock_group(gw);
                continue;
            }
            self.lock_item(w);
            self.lock_item(x.0);
            let n = xi.next.load(Ordering::Acquire);
            debug_assert_eq!(self.item(w).next.load(Ordering::Acquire), x.0);
            self.lock_item(n);

            self.item(w).next.store(n, Ordering::Release);
            self.item(n).pre.store(w, Ordering::Release);
            let remaining = self.group(gd).count.fetch_sub(1, Ordering::Relaxed) - 1;

            self.unlock_item(n);
            self.unlock_item(x.0);
            self.unlock_item(w);
            if gw != gd {
                self.unlock_group(gd);
            }
            self.unlock_group(gw);
            break (gd, remaining == 0);
        };

        if emptied {
            self.unlink_empty_group(gd);
        }
        self.metrics.bump(Counter::Deletes);
        true
    }

    /// Remove a group whose span became empty from the top list. The count
    /// of a non-sentinel group can only reach zero once (nothing ever joins
    /// an existing foreign group), so exactly one deleter gets here per
    /// group.
    fn unlink_empty_group(&self, gd: u32) {
        debug_assert!(gd >= 2, "sentinel group emptied");
        let won = cas_flag(&self.group(gd).live, true, false);
        debug_assert!(won, "empty group unlinked twice");
        if !won {
            return;
        }
        loop {
            let p = self.group(gd).pre.load(Ordering::Acquire);
            self.lock_group(p);
            if self.group(gd).pre.load(Ordering::Acquire) != p {
                self.unlock_group(p);
                continue;
            }
            self.lock_group(gd);
            let s = self.group(gd).next.load(Ordering::Acquire);
            self.group(p).next.store(s, Ordering::Release);
            self.group(s).pre.store(p, Ordering::Release);
            self.unlock_group(gd);
            self.unlock_group(p);
            return;
        }
    }
}
