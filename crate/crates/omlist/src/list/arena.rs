//! Append-only segmented node storage.
//!
//! Nodes are addressed by dense `u32` indices and are never freed or reused
//! while the arena lives, so a reader holding a stale index always finds the
//! node it referenced (its liveness flag tells the truth about deletion).
//! Slots live in fixed-size, lazily materialized segments; growth never moves
//! existing nodes, which keeps `&T` references obtained from [`Arena::get`]
//! valid for the arena's lifetime.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

/// Reserved index meaning "no node".
pub(crate) const NIL: u32 = u32::MAX;

const SEG_BITS: u32 = 16;
const SEG_LEN: usize = 1 << SEG_BITS;
// Enough segment slots to cover every index below `NIL`.
const SEG_SLOTS: usize = 1 << 16;

/// Node types constructible in an unlinked, dead state.
pub(crate) trait Vacant {
    fn vacant() -> Self;
}

pub(crate) struct Arena<T> {
    segments: Box<[OnceLock<Box<[T]>>]>,
    len: AtomicU64,
}

impl<T: Vacant> Arena<T> {
    pub fn new() -> Self {
        Arena {
            segments: (0..SEG_SLOTS).map(|_| OnceLock::new()).collect(),
            len: AtomicU64::new(0),
        }
    }

    /// Reserve one slot and return its index, or `None` when the index space
    /// is exhausted.
    pub fn alloc(&self) -> Option<u32> {
        let i = self.len.fetch_add(1, Ordering::Relaxed);
        if i >= NIL as u64 {
            self.len.fetch_sub(1, Ordering::Relaxed);
            return None;
        }
        let i = i as u32;
        self.segment(i);
        Some(i)
    }

    /// Number of slots ever allocated.
    pub fn len(&self) -> u64 {
        self.len.load(Ordering::Relaxed).min(NIL as u64)
    }

    #[inline]
    pub fn get(&self, i: u32) -> &T {
        debug_assert!(i != NIL, "dereferenced NIL node index");
        &self.segment(i)[i as usize & (SEG_LEN - 1)]
    }

    #[inline]
    fn segment(&self, i: u32) -> &[T] {
        self.segments[(i >> SEG_BITS) as usize]
            .get_or_init(|| (0..SEG_LEN).map(|_| T::vacant()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Cell(u64);
    impl Vacant for Cell {
        fn vacant() -> Self {
            Cell(7)
        }
    }

    #[test]
    fn alloc_is_dense_and_stable() {
        let arena: Arena<Cell> = Arena::new();
        for expect in 0..(SEG_LEN as u32 + 10) {
            assert_eq!(arena.alloc(), Some(expect));
        }
        let before = arena.get(3) as *const Cell;
        // Crossing a segment boundary must not move earlier nodes.
        assert_eq!(arena.get(3) as *const Cell, before);
        assert_eq!(arena.get(SEG_LEN as u32 + 5).0, 7);
        assert_eq!(arena.len(), SEG_LEN as u64 + 10);
    }

    #[test]
    fn concurrent_alloc_yields_distinct_indices() {
        let arena: Arena<Cell> = Arena::new();
        let mut all: Vec<u32> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8)
                .map(|_| {
                    s.spawn(|| {
                        (0..1000)
                            .map(|_| arena.alloc().unwrap())
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().unwrap())
                .collect()
        });
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 8_000);
    }
}
