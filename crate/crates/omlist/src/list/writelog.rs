//! Relabel-episode write logs.
//!
//! When an observer is installed on a list, every relabel episode captures a
//! snapshot of the nodes it is about to touch plus the ordered sequence of
//! label, group-membership, and group-creation writes it performs. Each
//! episode runs under locks, so its log is naturally serialized. The replay
//! checker in the stress harness re-applies a log one write at a time and
//! verifies that the affected nodes' labels still indicate their true list
//! order after every single write.

use std::sync::Arc;

/// One write performed by a relabel episode, in commit order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EpisodeEvent {
    /// A label-redistribution pass over consecutive successor groups is about
    /// to run: `scope` lists the groups that will be relabeled (id, label at
    /// this instant) in top-list order, starting at the episode group's
    /// successor; `bound` is the first untouched group after them.
    RedistributeScope {
        scope: Vec<(u32, u64)>,
        bound: (u32, u64),
    },
    /// A group's label was rewritten.
    GroupLabel { group: u32, label: u64 },
    /// A fresh group was created and linked immediately after `after`.
    GroupCreated { group: u32, label: u64, after: u32 },
    /// An item was moved into another group.
    ItemMoved { item: u32, group: u32 },
    /// An item's label was rewritten.
    ItemLabel { item: u32, label: u32 },
}

/// Snapshot-plus-writes record of one relabel episode.
#[derive(Clone, Debug)]
pub struct EpisodeLog {
    /// Label-space capacity exponent of the list (bottom labels span
    /// `[0, 2^bits - 1]`).
    pub bits: u32,
    /// Key of the item immediately before the episode's span: (group label,
    /// item label) at snapshot time. Stays a strict lower bound for the whole
    /// episode because groups to the left keep strictly smaller top labels.
    pub lower_key: (u64, u32),
    /// The item immediately after the span and its owning group. The group is
    /// part of `top_chain`, so its label is tracked through the episode.
    pub upper_item: (u32, u32, u32),
    /// The episode group and its successor (id, label) in top-list order at
    /// snapshot time.
    pub top_chain: Vec<(u32, u64)>,
    /// The episode group's members in bottom-list order (item id, label) at
    /// snapshot time; all belong to the episode group.
    pub members: Vec<(u32, u32)>,
    /// Every write of the episode, in commit order.
    pub events: Vec<EpisodeEvent>,
}

pub(crate) type EpisodeObserver = Arc<dyn Fn(EpisodeLog) + Send + Sync>;

impl EpisodeLog {
    /// Item-label writes in commit order — the observable "commit order" of
    /// a label-assignment pass.
    pub fn item_commit_order(&self) -> Vec<(u32, u32)> {
        self.events
            .iter()
            .filter_map(|e| match e {
                EpisodeEvent::ItemLabel { item, label } => Some((*item, *label)),
                _ => None,
            })
            .collect()
    }
}
