//! Ordered storage for threshold-tagged records.
//!
//! All records whose anchor is `expr > k` or `expr >= k` for one `expr` live
//! in a single min-ordered structure: the easiest-to-satisfy anchor (smallest
//! key, `>=` before `>` at equal key) sits at the root. If the root anchor is
//! false under the current store, every deeper anchor is false too, so the
//! whole structure is pruned in one comparison. Records anchored on `<`/`<=`
//! live in a max-ordered twin (largest key first, `<=` before `<`).
//!
//! Entries carry an insertion sequence number so equal anchors resolve FIFO,
//! and identify their record directly — the manager needs to remove a
//! specific record's entry when its last waiter leaves, which a plain binary
//! heap cannot do; an ordered set can.

use std::collections::BTreeSet;

use super::RecordId;
use crate::predicate::CmpOp;

/// Heap position of one anchor: lower sorts toward the root.
///
/// Min side: `(key, 0)` for `>=`, `(key, 1)` for `>`.
/// Max side: `(-key, 0)` for `<=`, `(-key, 1)` for `<` (i128 so `-i64::MIN`
/// cannot overflow).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct Rank(pub i128, pub u8);

pub(crate) fn min_rank(op: CmpOp, key: i64) -> Rank {
    debug_assert!(matches!(op, CmpOp::Gt | CmpOp::Ge));
    Rank(key as i128, if op == CmpOp::Ge { 0 } else { 1 })
}

pub(crate) fn max_rank(op: CmpOp, key: i64) -> Rank {
    debug_assert!(matches!(op, CmpOp::Lt | CmpOp::Le));
    Rank(-(key as i128), if op == CmpOp::Le { 0 } else { 1 })
}

/// Truth of a min-side anchor at rank `r` when the expression evaluates to `v`.
pub(crate) fn min_anchor_true(r: Rank, v: i64) -> bool {
    let key = r.0 as i64;
    if r.1 == 0 {
        v >= key
    } else {
        v > key
    }
}

/// Truth of a max-side anchor at rank `r` when the expression evaluates to `v`.
pub(crate) fn max_anchor_true(r: Rank, v: i64) -> bool {
    let key = (-r.0) as i64;
    if r.1 == 0 {
        v <= key
    } else {
        v < key
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct Entry {
    pub rank: Rank,
    pub seq: u64,
    pub id: RecordId,
}

/// An ordered multiset of anchor entries with root access, root removal, and
/// removal of arbitrary entries.
#[derive(Debug, Clone, Default)]
pub(crate) struct ThresholdHeap {
    set: BTreeSet<Entry>,
}

impl ThresholdHeap {
    pub fn insert(&mut self, e: Entry) {
        let fresh = self.set.insert(e);
        debug_assert!(fresh, "duplicate heap entry {e:?}");
    }

    pub fn remove(&mut self, e: &Entry) -> bool {
        self.set.remove(e)
    }

    pub fn contains(&self, e: &Entry) -> bool {
        self.set.contains(e)
    }

    pub fn peek(&self) -> Option<Entry> {
        self.set.first().copied()
    }

    pub fn pop(&mut self) -> Option<Entry> {
        self.set.pop_first()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.set.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(n: u32) -> RecordId {
        RecordId(n)
    }

    #[test]
    fn root_is_easiest_to_satisfy() {
        let mut h = ThresholdHeap::default();
        h.insert(Entry {
            rank: min_rank(CmpOp::Gt, 5),
            seq: 0,
            id: id(0),
        });
        h.insert(Entry {
            rank: min_rank(CmpOp::Ge, 3),
            seq: 1,
            id: id(1),
        });
        h.insert(Entry {
            rank: min_rank(CmpOp::Gt, 3),
            seq: 2,
            id: id(2),
        });
        // key 3 before key 5; >= before > at key 3.
        assert_eq!(h.pop().unwrap().id, id(1));
        assert_eq!(h.pop().unwrap().id, id(2));
        assert_eq!(h.pop().unwrap().id, id(0));
        assert!(h.pop().is_none());
    }

    #[test]
    fn max_side_orders_descending() {
        let mut h = ThresholdHeap::default();
        h.insert(Entry {
            rank: max_rank(CmpOp::Lt, 2),
            seq: 0,
            id: id(0),
        });
        h.insert(Entry {
            rank: max_rank(CmpOp::Le, 9),
            seq: 1,
            id: id(1),
        });
        h.insert(Entry {
            rank: max_rank(CmpOp::Lt, 9),
            seq: 2,
            id: id(2),
        });
        // key 9 first; <= before < at equal key.
        assert_eq!(h.pop().unwrap().id, id(1));
        assert_eq!(h.pop().unwrap().id, id(2));
        assert_eq!(h.pop().unwrap().id, id(0));
    }

    #[test]
    fn equal_anchors_resolve_fifo() {
        let mut h = ThresholdHeap::default();
        for seq in 0..4 {
            h.insert(Entry {
                rank: min_rank(CmpOp::Ge, 7),
                seq,
                id: id(seq as u32),
            });
        }
        for want in 0..4 {
            assert_eq!(h.pop().unwrap().id, id(want));
        }
    }

    #[test]
    fn anchor_truth_matches_operator() {
        assert!(min_anchor_true(min_rank(CmpOp::Ge, 5), 5));
        assert!(!min_anchor_true(min_rank(CmpOp::Gt, 5), 5));
        assert!(min_anchor_true(min_rank(CmpOp::Gt, 5), 6));
        assert!(max_anchor_true(max_rank(CmpOp::Le, 5), 5));
        assert!(!max_anchor_true(max_rank(CmpOp::Lt, 5), 5));
        assert!(max_anchor_true(max_rank(CmpOp::Lt, 5), 4));
        // Extreme keys survive the i128 widening.
        assert!(max_anchor_true(max_rank(CmpOp::Le, i64::MIN), i64::MIN));
        assert!(min_anchor_true(min_rank(CmpOp::Ge, i64::MAX), i64::MAX));
    }

    #[test]
    fn arbitrary_removal() {
        let mut h = ThresholdHeap::default();
        let e1 = Entry {
            rank: min_rank(CmpOp::Ge, 1),
            seq: 0,
            id: id(0),
        };
        let e2 = Entry {
            rank: min_rank(CmpOp::Ge, 2),
            seq: 1,
            id: id(1),
        };
        h.insert(e1);
        h.insert(e2);
        assert!(h.remove(&e1));
        assert!(!h.remove(&e1));
        assert_eq!(h.len(), 1);
        assert_eq!(h.peek().unwrap().id, id(1));
    }
}
