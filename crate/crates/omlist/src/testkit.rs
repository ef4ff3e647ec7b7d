//! Exact-layout list construction for tests and diagnostics.
//!
//! The regular constructors choose labels themselves; tests that pin down
//! relabeling behavior need lists in precisely crowded states. `build_layout`
//! materializes an arbitrary valid layout — including groups with no items,
//! which occur transiently in normal operation — and hands back the item
//! handles in list order.

use std::sync::atomic::Ordering;

use crate::list::init::{build, GroupSpec, Params};
use crate::list::{EpisodeLog, ItemRef, OpError, OrderList, GROUP_TAIL, ITEM_TAIL};
use crate::sync::LockKind;

/// One group of an explicit layout: its top label, then its items' bottom
/// labels in increasing order (empty for a group with no items).
#[derive(Clone, Debug)]
pub struct LayoutGroup {
    pub label: u64,
    pub item_labels: Vec<u32>,
}

impl LayoutGroup {
    pub fn new(label: u64, item_labels: &[u32]) -> Self {
        LayoutGroup {
            label,
            item_labels: item_labels.to_vec(),
        }
    }
}

/// Build a list with exactly the given groups and items. Group labels must
/// strictly increase inside the top space, item labels inside each group's
/// bottom space; violations panic. Returns the list plus the handles of all
/// items in list order.
pub fn build_layout(
    capacity_bits: u32,
    lock_kind: LockKind,
    groups: &[LayoutGroup],
) -> Result<(OrderList, Vec<ItemRef>), OpError> {
    let count: u64 = groups.iter().map(|g| g.item_labels.len() as u64).sum();
    let params = Params::validate(capacity_bits, count)?;
    let specs = groups
        .iter()
        .map(|g| GroupSpec {
            label: g.label,
            item_labels: g.item_labels.clone(),
        })
        .collect();
    let list = build(params, lock_kind, specs);
    let handles = (0..count).map(|i| ItemRef(2 + i as u32)).collect();
    Ok((list, handles))
}

/// Evenly respread the bottom labels of the final group's full membership
/// over the whole bottom space and return the episode's write log, exposing
/// the stack-draining commit order in isolation. `items` must be every
/// member of the last group, in list order; panics otherwise. Quiescent-use
/// testing hook.
pub fn respread_group(list: &OrderList, items: &[ItemRef]) -> EpisodeLog {
    assert!(!items.is_empty(), "respread needs at least one item");
    let ids: Vec<u32> = items.iter().map(|i| i.to_raw()).collect();
    let g = list.item(ids[0]).group.load(Ordering::Acquire);
    for &id in &ids[1..] {
        assert_eq!(
            list.item(id).group.load(Ordering::Acquire),
            g,
            "items span more than one group"
        );
    }
    assert_eq!(
        list.next(items[items.len() - 1]),
        list.tail(),
        "the span must end the list"
    );
    let first = items[0];
    let lower_key = if list.prev(first) == list.head() {
        (0, 0)
    } else {
        list.key_of(list.prev(first))
    };
    let g_label = list.group(g).label.load(Ordering::Acquire);
    let mut log = Some(EpisodeLog {
        bits: list.capacity_bits(),
        lower_key,
        upper_item: (ITEM_TAIL, GROUP_TAIL, list.bottom_max()),
        top_chain: vec![(g, g_label), (GROUP_TAIL, list.top_max())],
        members: items
            .iter()
            .map(|i| (i.to_raw(), list.key_of(*i).1))
            .collect(),
        events: Vec::new(),
    });
    list.assign_item_labels(&ids, &mut log);
    log.expect("log retained through the respread")
}

/// Quiescent snapshot of every linked item's key in list order, sentinels
/// excluded, deleted-but-linked items included.
pub fn key_sequence(list: &OrderList) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut cur = list.next(list.head());
    while cur != list.tail() {
        out.push(list.key_of(cur));
        cur = list.next(cur);
    }
    out
}
