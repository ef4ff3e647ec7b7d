//! List construction.
//!
//! Two public layouts plus an exact-layout builder used by the test kit:
//!
//! * [`OrderList::new`] — the canonical sparse start: one item per group,
//!   groups spaced a full capacity apart in the top space, items on the
//!   mid-space label.
//! * [`OrderList::new_packed`] — bulk-load layout: groups filled to the split
//!   size with items at the same even spread a group split produces. This is
//!   what the benchmark harness uses to build large initial populations, so
//!   crowding behavior at scale starts from split-equilibrium density.

use std::sync::atomic::{AtomicU64, Ordering};

use super::arena::{Arena, NIL};
use super::{OpError, OrderList, GROUP_HEAD, GROUP_TAIL, ITEM_HEAD, ITEM_TAIL};
use crate::metrics::MetricsRegistry;
use crate::sync::LockKind;

/// One group of an explicit layout: its top label and its items' bottom
/// labels in order.
pub(crate) struct GroupSpec {
    pub label: u64,
    pub item_labels: Vec<u32>,
}

impl OrderList {
    /// Create a list of `initial_count` items, one per group, with capacity
    /// `2^capacity_bits` (at least 16, at most 2^32 — labels are 32-bit).
    ///
    /// Group labels are spaced `2^capacity_bits` apart (narrower only when
    /// that many groups would not fit below the tail sentinel); every item
    /// starts on the mid-space label `2^capacity_bits / 2 - 1`. Handles to
    /// the initial items are retrievable via [`OrderList::initial_item`].
    pub fn new(
        capacity_bits: u32,
        initial_count: u64,
        lock_kind: LockKind,
    ) -> Result<OrderList, OpError> {
        let params = Params::validate(capacity_bits, initial_count)?;
        let mid = (1u32 << (capacity_bits - 1)) - 1;
        let gap = params.top_gap(initial_count);
        let groups = (0..initial_count)
            .map(|i| GroupSpec {
                label: (i + 1) * gap,
                item_labels: vec![mid],
            })
            .collect();
        Ok(build(params, lock_kind, groups))
    }

    /// Create a list of `initial_count` items packed `capacity_bits / 2` per
    /// group, each group's items evenly spread over the bottom space exactly
    /// as a group split would leave them.
    pub fn new_packed(
        capacity_bits: u32,
        initial_count: u64,
        lock_kind: LockKind,
    ) -> Result<OrderList, OpError> {
        let params = Params::validate(capacity_bits, initial_count)?;
        let cap = (capacity_bits / 2) as u64;
        let bottom_max = params.bottom_max as u64;
        let group_count = initial_count.div_ceil(cap);
        let gap = params.top_gap(group_count);
        let groups = (0..group_count)
            .map(|gi| {
                let span = (initial_count - gi * cap).min(cap);
                GroupSpec {
                    label: (gi + 1) * gap,
                    item_labels: (1..=span)
                        .map(|k| (k * bottom_max / (cap + 1)) as u32)
                        .collect(),
                }
            })
            .collect();
        Ok(build(params, lock_kind, groups))
    }
}

pub(crate) struct Params {
    pub bits: u32,
    pub bottom_max: u32,
    pub top_max: u64,
}

impl Params {
    pub fn validate(bits: u32, initial_count: u64) -> Result<Params, OpError> {
        if !(4..=32).contains(&bits) {
            return Err(OpError::Config(format!(
                "capacity bits must be in 4..=32, got {bits}"
            )));
        }
        let capacity = 1u64 << bits;
        if initial_count > capacity {
            return Err(OpError::CapacityExceeded(format!(
                "initial count {initial_count} exceeds capacity {capacity}"
            )));
        }
        Ok(Params {
            bits,
            bottom_max: if bits >= 32 {
                u32::MAX
            } else {
                (1u32 << bits) - 1
            },
            top_max: if bits >= 32 {
                u64::MAX
            } else {
                (1u64 << (2 * bits)) - 1
            },
        })
    }

    /// Top-label spacing for `count` initial groups: the full capacity when
    /// that fits strictly below the tail sentinel, else an even division of
    /// the top space.
    fn top_gap(&self, count: u64) -> u64 {
        let n = 1u64 << self.bits;
        if (count as u128 + 1) * (n as u128) <= self.top_max as u128 {
            n
        } else {
            self.top_max / (count + 1)
        }
    }
}

/// Materialize sentinels plus the given groups/items. Labels must be strictly
/// increasing (groups globally, items within each group) and inside the open
/// label intervals; violations panic — this is a construction-time bug, not
/// a runtime condition.
pub(crate) fn build(params: Params, lock_kind: LockKind, groups: Vec<GroupSpec>) -> OrderList {
    let list = OrderList {
        items: Arena::new(),
        groups: Arena::new(),
        lock_kind,
        bits: params.bits,
        group_cap: params.bits / 2,
        live_count: AtomicU64::new(0),
        initial_count: 0,
        metrics: MetricsRegistry::new(),
        episode_observer: parking_lot::RwLock::new(None),
    };

    // Sentinels first: item/group slots 0 and 1.
    assert_eq!(list.items.alloc(), Some(ITEM_HEAD));
    assert_eq!(list.items.alloc(), Some(ITEM_TAIL));
    assert_eq!(list.groups.alloc(), Some(GROUP_HEAD));
    assert_eq!(list.groups.alloc(), Some(GROUP_TAIL));

    let mut item_count: u64 = 0;
    let mut prev_group = GROUP_HEAD;
    let mut prev_group_label = 0u64;
    let mut prev_item = ITEM_HEAD;

    for spec in &groups {
        assert!(
            spec.label > prev_group_label && spec.label < params.top_max,
            "group labels must strictly increase inside the top space"
        );
        prev_group_label = spec.label;
        let g = list.groups.alloc().expect("group index space");
        let gn = list.group(g);
        gn.label.store(spec.label, Ordering::Relaxed);
        gn.count
            .store(spec.item_labels.len() as u32, Ordering::Relaxed);
        gn.live.store(true, Ordering::Relaxed);
        gn.pre.store(prev_group, Ordering::Relaxed);
        list.group(prev_group).next.store(g, Ordering::Relaxed);
        prev_group = g;

        let mut prev_label: Option<u32> = None;
        for &lb in &spec.item_labels {
            assert!(
                prev_label.map_or(lb > 0, |p| lb > p) && lb < params.bottom_max,
                "item labels must strictly increase inside the bottom space"
            );
            prev_label = Some(lb);
            let i = list.items.alloc().expect("item index space");
            let it = list.item(i);
            it.label.store(lb, Ordering::Relaxed);
            it.group.store(g, Ordering::Relaxed);
            it.live.store(true, Ordering::Relaxed);
            it.pre.store(prev_item, Ordering::Relaxed);
            list.item(prev_item).next.store(i, Ordering::Relaxed);
            prev_item = i;
            item_count += 1;
        }
    }

    // Close both chains with the tail sentinels.
    let h_b = list.item(ITEM_HEAD);
    h_b.label.store(0, Ordering::Relaxed);
    h_b.group.store(GROUP_HEAD, Ordering::Relaxed);
    h_b.live.store(true, Ordering::Relaxed);
    h_b.pre.store(NIL, Ordering::Relaxed);

    let t_b = list.item(ITEM_TAIL);
    t_b.label.store(params.bottom_max, Ordering::Relaxed);
    t_b.group.store(GROUP_TAIL, Ordering::Relaxed);
    t_b.live.store(true, Ordering::Relaxed);
    t_b.pre.store(prev_item, Ordering::Relaxed);
    t_b.next.store(NIL, Ordering::Relaxed);
    list.item(prev_item)
        .next
        .store(ITEM_TAIL, Ordering::Relaxed);

    let h_t = list.group(GROUP_HEAD);
    h_t.label.store(0, Ordering::Relaxed);
    h_t.count.store(1, Ordering::Relaxed);
    h_t.live.store(true, Ordering::Relaxed);
    h_t.pre.store(NIL, Ordering::Relaxed);

    let t_t = list.group(GROUP_TAIL);
    t_t.label.store(params.top_max, Ordering::Relaxed);
    t_t.count.store(1, Ordering::Relaxed);
    t_t.live.store(true, Ordering::Relaxed);
    t_t.pre.store(prev_group, Ordering::Relaxed);
    t_t.next.store(NIL, Ordering::Relaxed);
    list.group(prev_group)
        .next
        .store(GROUP_TAIL, Ordering::Relaxed);

    list.live_count.store(item_count, Ordering::Relaxed);

    // Publish the fully built structure to other threads.
    std::sync::atomic::fence(Ordering::Release);

    OrderList {
        initial_count: item_count,
        ..list
    }
}
