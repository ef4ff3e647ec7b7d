//! Full-structure validation for quiescent lists.

use std::collections::HashMap;
use std::sync::atomic::Ordering;

use super::{OrderList, GROUP_HEAD, GROUP_TAIL, ITEM_HEAD, ITEM_TAIL};

/// Summary of a successful structure scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckReport {
    /// Linked items between the sentinels (live or retired-but-linked).
    pub items: u64,
    /// Linked groups between the sentinels.
    pub groups: u64,
    /// Linked items whose live flag is set.
    pub live_items: u64,
}

/// First violation found by [`OrderList::check`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CheckError {
    #[error("item {at}: back link does not point at its predecessor")]
    ItemBackLink { at: u32 },
    #[error("items {a} (key {a_key:?}) and {b} (key {b_key:?}) are not in strictly increasing key order")]
    KeyOrder {
        a: u32,
        b: u32,
        a_key: (u64, u32),
        b_key: (u64, u32),
    },
    #[error("group {at}: back link does not point at its predecessor")]
    GroupBackLink { at: u32 },
    #[error("groups {a} and {b} are not in strictly increasing label order")]
    GroupLabelOrder { a: u32, b: u32 },
    #[error("item {item} points at group {group}, which is not linked at a consistent position")]
    Membership { item: u32, group: u32 },
    #[error("group {group}: holds {counted} linked items but records {recorded}")]
    GroupCount {
        group: u32,
        counted: u32,
        recorded: u32,
    },
    #[error("list holds {counted} live items but records {recorded}")]
    LiveCount { counted: u64, recorded: u64 },
    #[error("sentinel damage: {0}")]
    Sentinel(&'static str),
}

impl OrderList {
    /// Validate the whole structure. Only meaningful while no mutators run.
    ///
    /// Checks both lists' forward/backward consistency, strict key order
    /// along the bottom list, strict label order along the top list, that
    /// items of one group are contiguous and appear in top-list order
    /// (groups with no linked items are fine), that every group's recorded
    /// count matches its linked items, and that the recorded live total
    /// matches the live flags.
    pub fn check(&self) -> Result<CheckReport, CheckError> {
        let o = Ordering::Acquire;

        // Top list walk: positions and label order.
        if self.group(GROUP_HEAD).label.load(o) != 0 {
            return Err(CheckError::Sentinel("head group label moved"));
        }
        // The head group is a valid owner: items inserted after the head
        // sentinel live in it.
        let mut top_pos: HashMap<u32, usize> = HashMap::from([(GROUP_HEAD, 0)]);
        let mut prev = GROUP_HEAD;
        let mut prev_label = 0u64;
        let mut cur = self.group(GROUP_HEAD).next.load(o);
        loop {
            if self.group(cur).pre.load(o) != prev {
                return Err(CheckError::GroupBackLink { at: cur });
            }
            let label = self.group(cur).label.load(o);
            if label <= prev_label {
                return Err(CheckError::GroupLabelOrder { a: prev, b: cur });
            }
            if cur == GROUP_TAIL {
                if label != self.top_max() {
                    return Err(CheckError::Sentinel("tail group label moved"));
                }
                break;
            }
            top_pos.insert(cur, top_pos.len());
            prev = cur;
            prev_label = label;
            cur = self.group(cur).next.load(o);
        }
        if self.group(GROUP_TAIL).count.load(Ordering::Relaxed) != 1 {
            return Err(CheckError::Sentinel("sentinel group count moved"));
        }

        // Bottom list walk: key order, contiguous membership, counts.
        if self.item(ITEM_HEAD).label.load(o) != 0
            || self.item(ITEM_HEAD).group.load(o) != GROUP_HEAD
        {
            return Err(CheckError::Sentinel("head item moved"));
        }
        // The head group's recorded count includes its sentinel item.
        let mut counts: HashMap<u32, u32> = HashMap::from([(GROUP_HEAD, 1)]);
        let mut items = 0u64;
        let mut live_items = 0u64;
        let mut prev_item = ITEM_HEAD;
        let mut prev_key = (0u64, 0u32);
        let mut last_pos: Option<usize> = None;
        let mut cur = self.item(ITEM_HEAD).next.load(o);
        loop {
            if self.item(cur).pre.load(o) != prev_item {
                return Err(CheckError::ItemBackLink { at: cur });
            }
            let group = self.item(cur).group.load(o);
            let key = (
                self.group(group).label.load(o),
                self.item(cur).label.load(o),
            );
            if key <= prev_key {
                return Err(CheckError::KeyOrder {
                    a: prev_item,
                    b: cur,
                    a_key: prev_key,
                    b_key: key,
                });
            }
            if cur == ITEM_TAIL {
                if group != GROUP_TAIL || self.item(cur).label.load(o) != self.bottom_max() {
                    return Err(CheckError::Sentinel("tail item moved"));
                }
                break;
            }
            let pos = match top_pos.get(&group) {
                Some(&p) => p,
                None => return Err(CheckError::Membership { item: cur, group }),
            };
            // Positions never decrease along the bottom list, so each
            // group's items form one contiguous run in top-list order.
            if let Some(lp) = last_pos {
                if pos < lp {
                    return Err(CheckError::Membership { item: cur, group });
                }
            }
            last_pos = Some(pos);
            *counts.entry(group).or_insert(0) += 1;
            items += 1;
            if self.item(cur).live.load(o) {
                live_items += 1;
            }
            prev_item = cur;
            prev_key = key;
            cur = self.item(cur).next.load(o);
        }

        for &group in top_pos.keys() {
            let counted = counts.get(&group).copied().unwrap_or(0);
            let recorded = self.group(group).count.load(Ordering::Relaxed);
            if counted != recorded {
                return Err(CheckError::GroupCount {
                    group,
                    counted,
                    recorded,
                });
            }
        }
        let recorded_live = self.live_count.load(Ordering::Relaxed);
        if live_items != recorded_live {
            return Err(CheckError::LiveCount {
                counted: live_items,
                recorded: recorded_live,
            });
        }

        Ok(CheckReport {
            items,
            groups: top_pos.len() as u64 - 1,
            live_items,
        })
    }
}
