//! Relabel episodes: group splitting and label redistribution.
//!
//! An episode runs inside `insert_after` when the label gap at the insertion
//! point is exhausted. The caller holds the group `g0` and the insertion
//! item `x`; the episode locks every other item of `g0`, then repeatedly
//! splits off the trailing `group_cap` members into a fresh group placed
//! midway in the top space (redistributing successor group labels first when
//! that midpoint gap is itself exhausted), until at most `group_cap` members
//! remain, and finally respreads the remnant over the bottom space.
//!
//! Every label write is a single release store, and writes are ordered (the
//! stack-based commit dance, and reverse-order item moves) so that the keys
//! of all affected nodes indicate their true list order after *every single
//! write* — concurrent lock-free readers are never misled, at worst forced
//! to retry.
//!
//! Lock discipline within an episode: member items are locked while holding
//! `g0` (left walk first, then right); fresh groups are locked before they
//! become reachable; successor groups are locked strictly in top-list order
//! during redistribution walks. All episode locks are released together at
//! the end.

use std::sync::atomic::Ordering;

use super::writelog::{EpisodeEvent, EpisodeLog};
use super::{OpError, OrderList, GROUP_TAIL};
use crate::metrics::Counter;

impl OrderList {
    /// Make label room in `g0` around the locked item `x`. Caller holds
    /// `g0`'s and `x`'s locks; everything acquired here is released here.
    pub(crate) fn relabel_episode(&self, g0: u32, x: u32) -> Result<(), OpError> {
        self.metrics.bump(Counter::Relabels);
        let observer = self.episode_observer.read().clone();

        // Enumerate and lock the members of g0 besides x, walking outward
        // from x. Reading a neighbor's group before locking it is sound: a
        // node's group pointer can only change under g0's lock (held by us)
        // while it points at g0, and can never start pointing at g0. The
        // walk stops at sentinels — they are never relabeled.
        let mut members: Vec<u32> = Vec::new();
        {
            let mut left: Vec<u32> = Vec::new();
            let mut cur = x;
            loop {
                let p = self.item(cur).pre.load(Ordering::Acquire);
                if p < 2 || self.item(p).group.load(Ordering::Acquire) != g0 {
                    break;
                }
                self.lock_item(p);
                left.push(p);
                cur = p;
            }
            members.extend(left.iter().rev());
        }
        members.push(x);
        {
            let mut cur = x;
            loop {
                let n = self.item(cur).next.load(Ordering::Acquire);
                if n < 2 || self.item(n).group.load(Ordering::Acquire) != g0 {
                    break;
                }
                self.lock_item(n);
                members.push(n);
                cur = n;
            }
        }

        let all_members = members.clone();
        let mut log = observer
            .as_ref()
            .map(|_| self.snapshot_episode(g0, &members));
        let mut held_groups: Vec<u32> = Vec::new();

        let cap = self.group_cap as usize;
        let mut result = Ok(());
        while members.len() > cap {
            if let Err(e) = self.split_trailing(g0, &mut members, &mut held_groups, &mut log) {
                result = Err(e);
                break;
            }
        }
        if result.is_ok() {
            self.assign_item_labels(&members, &mut log);
        }

        for &g in &held_groups {
            self.unlock_group(g);
        }
        for &m in &all_members {
            if m != x {
                self.unlock_item(m);
            }
        }
        if let (Some(obs), Some(l)) = (observer, log) {
            obs(l);
        }
        result
    }

    /// Split the trailing `group_cap` members of `g0` into a fresh group
    /// between `g0` and its successor.
    fn split_trailing(
        &self,
        g0: u32,
        members: &mut Vec<u32>,
        held: &mut Vec<u32>,
        log: &mut Option<EpisodeLog>,
    ) -> Result<(), OpError> {
        let l0 = self.group(g0).label.load(Ordering::Acquire);
        let g1 = self.group(g0).next.load(Ordering::Acquire);
        let mut gap = self.group(g1).label.load(Ordering::Acquire) - l0;
        if gap < 2 {
            self.redistribute_successors(g0, held, log);
            debug_assert_eq!(self.group(g0).next.load(Ordering::Acquire), g1);
            gap = self.group(g1).label.load(Ordering::Acquire) - l0;
            if gap < 2 {
                // The walk hit the tail sentinel without finding width; no
                // integer label fits after g0.
                return Err(OpError::LabelSpaceExhausted);
            }
        }

        let gnew = self
            .groups
            .alloc()
            .ok_or_else(|| OpError::CapacityExceeded("group index space exhausted".into()))?;
        // Lock before linking: once reachable, another insert may lock the
        // new group and then wait on member items we hold.
        self.lock_group(gnew);
        held.push(gnew);
        let gn = self.group(gnew);
        let label = l0 + gap / 2;
        gn.label.store(label, Ordering::Release);
        gn.live.store(true, Ordering::Release);
        gn.pre.store(g0, Ordering::Release);
        gn.next.store(g1, Ordering::Release);
        self.group(g0).next.store(gnew, Ordering::Release);
        // The successor's back link is guarded by its predecessor's lock.
        self.group(g1).pre.store(gnew, Ordering::Release);
        self.metrics.bump(Counter::LtUpdates);
        push_event(log, || EpisodeEvent::GroupCreated {
            group: gnew,
            label,
            after: g0,
        });

        let cap = self.group_cap as usize;
        let tail = members.split_off(members.len() - cap);
        gn.count.store(cap as u32, Ordering::Relaxed);
        self.group(g0)
            .count
            .fetch_sub(cap as u32, Ordering::Relaxed);
        // Move back to front: each moved item's key jumps up to the new
        // group while everything after it has already moved, so keys stay
        // sorted at every intermediate step.
        for &m in tail.iter().rev() {
            self.item(m).group.store(gnew, Ordering::Release);
            push_event(log, || EpisodeEvent::ItemMoved {
                item: m,
                group: gnew,
            });
        }
        self.assign_item_labels(&tail, log);
        Ok(())
    }

    /// Spread successor group labels after `g0` until the accumulated width
    /// exceeds the square of the group count visited, then evenly relabel
    /// the visited groups over that width.
    fn redistribute_successors(&self, g0: u32, held: &mut Vec<u32>, log: &mut Option<EpisodeLog>) {
        let l0 = self.group(g0).label.load(Ordering::Acquire);
        let mut scope: Vec<u32> = Vec::new();
        let mut cur = g0;
        let mut j: u128 = 0;
        let (bound, bound_label) = loop {
            let nxt = self.group(cur).next.load(Ordering::Acquire);
            j += 1;
            // Reading the label before locking is sound: any writer of a
            // successor's label must first walk (and lock) through the chain
            // of groups we already hold.
            let lab = self.group(nxt).label.load(Ordering::Acquire);
            if (lab - l0) as u128 > j * j {
                break (nxt, lab);
            }
            if nxt == GROUP_TAIL {
                break (nxt, lab);
            }
            if !held.contains(&nxt) {
                self.lock_group(nxt);
                held.push(nxt);
            }
            scope.push(nxt);
            cur = nxt;
        };
        let _ = bound;
        push_event(log, || EpisodeEvent::RedistributeScope {
            scope: scope
                .iter()
                .map(|&g| (g, self.group(g).label.load(Ordering::Acquire)))
                .collect(),
            bound: (bound, bound_label),
        });
        self.assign_group_labels(&scope, l0, bound_label - l0, bound_label, log);
    }

    /// Evenly respread the labels of consecutive same-group items over the
    /// bottom space, committing each new label only when it fits strictly
    /// between the neighbors' current labels (draining the pending stack
    /// after every commit), so the span stays correctly ordered throughout.
    pub(crate) fn assign_item_labels(&self, scope: &[u32], log: &mut Option<EpisodeLog>) {
        let n = scope.len();
        if n == 0 {
            return;
        }
        let j = n as u128 + 1;
        let w = self.bottom_max() as u128;
        debug_assert!(w >= j, "bottom label space narrower than the span");
        let mut stack: Vec<(u32, u32)> = Vec::new();
        for k in 0..n {
            let temp = ((k as u128 + 1) * w / j) as u32;
            let next_ok = if k + 1 < n {
                temp < self.item(scope[k + 1]).label.load(Ordering::Acquire)
            } else {
                // The item after the span is either in another group (the
                // bound is the whole bottom space) or the tail sentinel.
                temp < self.bottom_max()
            };
            let pre_ok = if k == 0 {
                debug_assert!(temp > 0);
                true
            } else {
                self.item(scope[k - 1]).label.load(Ordering::Acquire) < temp
            };
            if pre_ok && next_ok {
                self.commit_item_label(scope[k], temp, log);
                while let Some((item, t)) = stack.pop() {
                    self.commit_item_label(item, t, log);
                }
            } else {
                stack.push((scope[k], temp));
            }
        }
        debug_assert!(stack.is_empty(), "label assignment left pending items");
    }

    /// Same commit dance over group labels in `(l0, l0 + w)`.
    fn assign_group_labels(
        &self,
        scope: &[u32],
        l0: u64,
        w: u64,
        hi: u64,
        log: &mut Option<EpisodeLog>,
    ) {
        let n = scope.len();
        if n == 0 {
            return;
        }
        let j = n as u128 + 1;
        if (w as u128) < j {
            // No room for distinct labels; the caller's gap re-check will
            // surface exhaustion.
            return;
        }
        let mut stack: Vec<(u32, u64)> = Vec::new();
        for k in 0..n {
            let temp = l0 + ((k as u128 + 1) * w as u128 / j) as u64;
            let next_ok = if k + 1 < n {
                temp < self.group(scope[k + 1]).label.load(Ordering::Acquire)
            } else {
                temp < hi
            };
            let pre_ok = if k == 0 {
                temp > l0
            } else {
                self.group(scope[k - 1]).label.load(Ordering::Acquire) < temp
            };
            if pre_ok && next_ok {
                self.commit_group_label(scope[k], temp, log);
                while let Some((g, t)) = stack.pop() {
                    self.commit_group_label(g, t, log);
                }
            } else {
                stack.push((scope[k], temp));
            }
        }
        debug_assert!(stack.is_empty(), "label assignment left pending groups");
    }

    fn commit_item_label(&self, item: u32, label: u32, log: &mut Option<EpisodeLog>) {
        self.item(item).label.store(label, Ordering::Release);
        self.metrics.bump(Counter::LbUpdates);
        push_event(log, || EpisodeEvent::ItemLabel { item, label });
    }

    fn commit_group_label(&self, group: u32, label: u64, log: &mut Option<EpisodeLog>) {
        self.group(group).label.store(label, Ordering::Release);
        self.metrics.bump(Counter::LtUpdates);
        push_event(log, || EpisodeEvent::GroupLabel { group, label });
    }

    /// Pre-write snapshot of everything an episode may touch, for the
    /// write-log replay checker.
    fn snapshot_episode(&self, g0: u32, members: &[u32]) -> EpisodeLog {
        let first = members[0];
        let last = *members.last().expect("episode span is never empty");
        let lo_id = self.item(first).pre.load(Ordering::Acquire);
        let lo_group = self.item(lo_id).group.load(Ordering::Acquire);
        let lower_key = (
            self.group(lo_group).label.load(Ordering::Acquire),
            self.item(lo_id).label.load(Ordering::Acquire),
        );
        let up_id = self.item(last).next.load(Ordering::Acquire);
        let up_group = self.item(up_id).group.load(Ordering::Acquire);
        let upper_item = (
            up_id,
            up_group,
            self.item(up_id).label.load(Ordering::Acquire),
        );
        let mut top_chain = vec![(g0, self.group(g0).label.load(Ordering::Acquire))];
        let mut cur = g0;
        while cur != up_group && cur != GROUP_TAIL {
            cur = self.group(cur).next.load(Ordering::Acquire);
            top_chain.push((cur, self.group(cur).label.load(Ordering::Acquire)));
        }
        EpisodeLog {
            bits: self.bits,
            lower_key,
            upper_item,
            top_chain,
            members: members
                .iter()
                .map(|&m| (m, self.item(m).label.load(Ordering::Acquire)))
                .collect(),
            events: Vec::new(),
        }
    }
}

#[inline]
fn push_event(log: &mut Option<EpisodeLog>, make: impl FnOnce() -> EpisodeEvent) {
    if let Some(l) = log.as_mut() {
        l.events.push(make());
    }
}
