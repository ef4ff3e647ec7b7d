//! Reference sequential order maintenance for differential testing.
//!
//! [`SeqOrder`] keeps the order as a plain vector of caller-chosen ids with a
//! dense id → position index, so `precedes` is two array reads and an integer
//! compare — trivially correct by construction. Mutations are O(n) (vector
//! shift plus suffix reindex), which is fine at test sizes. Tests drive the
//! concurrent list and this structure with the same operations and compare
//! every verdict and the final sequences.

const NONE: u32 = u32::MAX;

/// Vector-backed order maintenance over caller-chosen `u32` ids.
#[derive(Clone, Debug, Default)]
pub struct SeqOrder {
    order: Vec<u32>,
    pos: Vec<u32>,
}

impl SeqOrder {
    pub fn new() -> Self {
        SeqOrder::default()
    }

    /// Start from an existing sequence of distinct ids.
    pub fn with_items(ids: impl IntoIterator<Item = u32>) -> Self {
        let mut s = SeqOrder::new();
        for id in ids {
            let at = s.order.len();
            s.order.push(id);
            s.index(id, at as u32);
        }
        s
    }

    fn index(&mut self, id: u32, at: u32) {
        let slot = id as usize;
        if slot >= self.pos.len() {
            self.pos.resize(slot + 1, NONE);
        }
        self.pos[slot] = at;
    }

    fn position(&self, id: u32) -> Option<usize> {
        match self.pos.get(id as usize) {
            Some(&p) if p != NONE => Some(p as usize),
            _ => None,
        }
    }

    /// Number of live ids.
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Is `id` present?
    pub fn contains(&self, id: u32) -> bool {
        self.position(id).is_some()
    }

    /// Live ids in order.
    pub fn as_slice(&self) -> &[u32] {
        &self.order
    }

    /// Insert fresh `id` immediately after `after` (or at the front for
    /// `None`). Returns `false` when `after` is absent; panics if `id` is
    /// already present — ids are never reused.
    pub fn insert_after(&mut self, after: Option<u32>, id: u32) -> bool {
        assert!(!self.contains(id), "oracle id {id} inserted twice");
        let at = match after {
            None => 0,
            Some(a) => match self.position(a) {
                Some(p) => p + 1,
                None => return false,
            },
        };
        self.order.insert(at, id);
        for p in at..self.order.len() {
            let moved = self.order[p];
            self.index(moved, p as u32);
        }
        true
    }

    /// Remove `id`. Returns `false` when it is absent.
    pub fn delete(&mut self, id: u32) -> bool {
        let Some(at) = self.position(id) else {
            return false;
        };
        self.order.remove(at);
        self.pos[id as usize] = NONE;
        for p in at..self.order.len() {
            let moved = self.order[p];
            self.index(moved, p as u32);
        }
        true
    }

    /// Does `x` precede `y`? `None` when either id is absent.
    pub fn precedes(&self, x: u32, y: u32) -> Option<bool> {
        Some(self.position(x)? < self.position(y)?)
    }
}
