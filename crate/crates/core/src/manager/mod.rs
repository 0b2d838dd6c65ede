//! The condition manager: predicate records, tag indexes, and the relay
//! signaling search.
//!
//! Every distinct canonical predicate gets one [`Record`] with one wait
//! queue, found through a table keyed by canonical form — two threads waiting
//! on syntactically different spellings of the same condition share a record.
//! While a record has waiters and no signal in flight, each conjunction of
//! its predicate is indexed by its tag (the indexes hold exactly the
//! conditions the relay could signal right now, so an exit from an
//! uncontended monitor relays in constant time):
//!
//! * equivalence anchors land in a per-expression hash table keyed by the
//!   anchor constant, so the bucket that can currently be true is found with
//!   a single probe;
//! * threshold anchors land in a per-expression min- or max-ordered heap
//!   whose root is the easiest anchor to satisfy, so one false root prunes
//!   the rest;
//! * conjunctions with no anchor go on a scan list.
//!
//! `relay_signal` walks those structures in a fixed, documented order and
//! signals at most one waiting thread whose full predicate is true. It never
//! broadcasts. The caller must hold the owning monitor's lock throughout —
//! nothing here synchronizes on its own.
//!
//! Records whose last waiter left are not destroyed immediately: dynamic
//! records move to a bounded FIFO of inactive records and revive for free if
//! the same condition is waited on again; the oldest fall off the end.
//! Records for predicates declared at monitor construction are permanent.

mod heap;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use parking_lot::Condvar;

use crate::error::{MonitorError, PredicateError};
use crate::predicate::linear::{canonical_key, CanonicalPred, LinExpr, PredKey};
use crate::predicate::{classify, to_dnf, CmpOp, Pred, PredClass};
use crate::store::Store;
use crate::tagging::{tag_canonical, Tag};

use heap::{max_anchor_true, max_rank, min_anchor_true, min_rank, Entry, ThresholdHeap};

/// Identity of a condition record within one manager. Ids are reused after
/// eviction; holders must not cache them across waits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordId(pub(crate) u32);

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Lifecycle class of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    /// Registered at monitor construction; never deactivated or evicted.
    SharedStatic,
    /// Registered at first wait; parked on the inactive list when waiterless.
    ComplexDynamic,
}

/// How `relay_signal` locates candidate records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexPolicy {
    /// Tag indexes: equivalence hash probe, threshold heaps, then the
    /// untagged scan list.
    Tagged,
    /// No indexes at all: every active record is scanned in creation order.
    ScanAll,
}

/// Instrumentation. All counts are cumulative since construction.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Counters {
    pub signals: u64,
    pub broadcasts: u64,
    pub preds_evaluated: u64,
    pub hash_probes: u64,
    pub heap_polls: u64,
    pub heap_reinserts: u64,
    pub records_created: u64,
    pub records_reused: u64,
    pub records_evicted: u64,
    pub waits: u64,
    pub wakeups: u64,
    pub futile_wakeups: u64,
}

impl Counters {
    /// Full predicate evaluations per signal issued; the cost of deciding
    /// whom to wake.
    pub fn preds_per_signal(&self) -> f64 {
        self.preds_evaluated as f64 / (self.signals.max(1)) as f64
    }

    /// Merge, for aggregating across runs.
    pub fn add(&mut self, o: &Counters) {
        self.signals += o.signals;
        self.broadcasts += o.broadcasts;
        self.preds_evaluated += o.preds_evaluated;
        self.hash_probes += o.hash_probes;
        self.heap_polls += o.heap_polls;
        self.heap_reinserts += o.heap_reinserts;
        self.records_created += o.records_created;
        self.records_reused += o.records_reused;
        self.records_evicted += o.records_evicted;
        self.waits += o.waits;
        self.wakeups += o.wakeups;
        self.futile_wakeups += o.futile_wakeups;
    }
}

// Where one record is indexed; kept on the record so removal is exact.
#[derive(Debug, Clone, PartialEq)]
enum Placement {
    Equiv { expr: LinExpr, key: i64 },
    Min { expr: LinExpr, entry: Entry },
    Max { expr: LinExpr, entry: Entry },
    Untagged,
}

#[derive(Debug, Clone)]
struct Record {
    key: PredKey,
    tags: Vec<Tag>,
    queue: Arc<Condvar>,
    kind: RecordKind,
    active: bool,
    waiters: u32,
    // Signals issued but not yet consumed by a waking waiter. A record with
    // a signal in flight is not signaled again: the pending thread either
    // proceeds (and its exit re-runs the relay) or re-blocks (ditto), so a
    // second signal could only stack wakeups that race each other to the
    // same state change and mostly wake to find it consumed. While a signal
    // is pending the record is also out of the indexes (see `do_signal`).
    pending: u32,
    seq: u64,
    placements: Vec<Placement>,
}

/// Default capacity of the inactive-record FIFO.
pub const INACTIVE_CAPACITY: usize = 64;

#[derive(Debug, Clone)]
pub struct ConditionManager {
    policy: IndexPolicy,
    records: Vec<Option<Record>>,
    free: Vec<u32>,
    table: HashMap<PredKey, RecordId>,
    equiv: BTreeMap<LinExpr, HashMap<i64, Vec<(u64, RecordId)>>>,
    min_heaps: BTreeMap<LinExpr, ThresholdHeap>,
    max_heaps: BTreeMap<LinExpr, ThresholdHeap>,
    untagged: BTreeSet<(u64, RecordId)>,
    actives: BTreeSet<(u64, RecordId)>,
    inactive: VecDeque<RecordId>,
    inactive_cap: usize,
    sealed: bool,
    next_seq: u64,
    pub(crate) counters: Counters,
    eval_trace: Option<Vec<RecordId>>,
}

enum Side {
    Min,
    Max,
}

impl ConditionManager {
    pub fn new(policy: IndexPolicy) -> Self {
        Self::with_inactive_capacity(policy, INACTIVE_CAPACITY)
    }

    pub fn with_inactive_capacity(policy: IndexPolicy, cap: usize) -> Self {
        ConditionManager {
            policy,
            records: Vec::new(),
            free: Vec::new(),
            table: HashMap::new(),
            equiv: BTreeMap::new(),
            min_heaps: BTreeMap::new(),
            max_heaps: BTreeMap::new(),
            untagged: BTreeSet::new(),
            actives: BTreeSet::new(),
            inactive: VecDeque::new(),
            inactive_cap: cap.max(1),
            sealed: false,
            next_seq: 0,
            counters: Counters::default(),
            eval_trace: None,
        }
    }

    pub fn policy(&self) -> IndexPolicy {
        self.policy
    }

    /// Marks construction finished; further static registrations are a bug.
    pub fn seal(&mut self) {
        self.sealed = true;
    }

    fn rec(&self, id: RecordId) -> &Record {
        self.records[id.0 as usize].as_ref().expect("stale record id")
    }

    fn rec_mut(&mut self, id: RecordId) -> &mut Record {
        self.records[id.0 as usize].as_mut().expect("stale record id")
    }

    /// Registers a construction-time shared predicate. Duplicates (same
    /// canonical form) return the existing record.
    pub fn register_shared(&mut self, p: &Pred) -> Result<RecordId, MonitorError> {
        debug_assert!(
            !self.sealed,
            "static predicates must be registered before the monitor is built"
        );
        if classify(p) != PredClass::Shared {
            return Err(MonitorError::StaticPredicateNotShared { text: p.to_string() });
        }
        let dnf = to_dnf(p).map_err(PredicateError::from)?;
        let key = canonical_key(&dnf);
        if key.pred().is_never_true() {
            return Err(MonitorError::Predicate(PredicateError::PermanentlyFalse));
        }
        if let Some(&id) = self.table.get(&key) {
            self.counters.records_reused += 1;
            return Ok(id);
        }
        Ok(self.create_record(key, RecordKind::SharedStatic))
    }

    /// Registers (or revives, or simply finds) the record for a globalized
    /// canonical predicate at wait time. Never-true predicates must be
    /// rejected by the caller; their records would be unreachable.
    pub fn register_dynamic(&mut self, key: PredKey) -> RecordId {
        debug_assert!(!key.pred().is_never_true(), "never-true predicate registered");
        if let Some(&id) = self.table.get(&key) {
            self.counters.records_reused += 1;
            if !self.rec(id).active {
                self.reactivate(id);
            }
            return id;
        }
        self.create_record(key, RecordKind::ComplexDynamic)
    }

    fn create_record(&mut self, key: PredKey, kind: RecordKind) -> RecordId {
        let seq = self.next_seq;
        self.next_seq += 1;
        let tags = match self.policy {
            IndexPolicy::Tagged => tag_canonical(key.pred()),
            IndexPolicy::ScanAll => Vec::new(),
        };
        let record = Record {
            key: key.clone(),
            tags,
            queue: Arc::new(Condvar::new()),
            kind,
            active: true,
            waiters: 0,
            pending: 0,
            seq,
            placements: Vec::new(),
        };
        let id = match self.free.pop() {
            Some(slot) => {
                self.records[slot as usize] = Some(record);
                RecordId(slot)
            }
            None => {
                self.records.push(Some(record));
                RecordId((self.records.len() - 1) as u32)
            }
        };
        self.table.insert(key, id);
        self.counters.records_created += 1;
        // Not indexed yet: records enter the indexes when their first
        // waiter blocks, so the relay only ever searches predicates some
        // thread is actually waiting on.
        id
    }

    fn index_record(&mut self, id: RecordId) {
        let (seq, tags) = {
            let r = self.rec(id);
            debug_assert!(r.placements.is_empty(), "{id} indexed twice");
            (r.seq, r.tags.clone())
        };
        // Distinct conjunctions can carry equal tags (a shared conjunct);
        // one index entry per distinct tag is enough to find the record.
        let mut unique: Vec<Tag> = Vec::with_capacity(tags.len());
        for t in tags {
            if !unique.contains(&t) {
                unique.push(t);
            }
        }
        let mut placements = Vec::with_capacity(unique.len());
        for t in unique {
            match t {
                Tag::Equivalence { expr, key } => {
                    let bucket = self
                        .equiv
                        .entry(expr.clone())
                        .or_default()
                        .entry(key)
                        .or_default();
                    let item = (seq, id);
                    let pos = bucket.partition_point(|e| *e < item);
                    bucket.insert(pos, item);
                    placements.push(Placement::Equiv { expr, key });
                }
                Tag::Threshold { expr, op, key } => {
                    let (side_map, entry) = match op {
                        CmpOp::Gt | CmpOp::Ge => (
                            &mut self.min_heaps,
                            Entry {
                                rank: min_rank(op, key),
                                seq,
                                id,
                            },
                        ),
                        CmpOp::Lt | CmpOp::Le => (
                            &mut self.max_heaps,
                            Entry {
                                rank: max_rank(op, key),
                                seq,
                                id,
                            },
                        ),
                        CmpOp::Eq | CmpOp::Ne => unreachable!("threshold tags use order ops"),
                    };
                    side_map.entry(expr.clone()).or_default().insert(entry);
                    placements.push(match op {
                        CmpOp::Gt | CmpOp::Ge => Placement::Min { expr, entry },
                        _ => Placement::Max { expr, entry },
                    });
                }
                Tag::None => {
                    self.untagged.insert((seq, id));
                    placements.push(Placement::Untagged);
                }
            }
        }
        self.rec_mut(id).placements = placements;
    }

    fn unindex_record(&mut self, id: RecordId) {
        let (seq, placements) = {
            let r = self.rec_mut(id);
            (r.seq, std::mem::take(&mut r.placements))
        };
        for p in placements {
            match p {
                Placement::Equiv { expr, key } => {
                    let buckets = self.equiv.get_mut(&expr).expect("missing equiv expr");
                    let bucket = buckets.get_mut(&key).expect("missing equiv bucket");
                    bucket.retain(|e| *e != (seq, id));
                    if bucket.is_empty() {
                        buckets.remove(&key);
                    }
                    if buckets.is_empty() {
                        self.equiv.remove(&expr);
                    }
                }
                Placement::Min { expr, entry } => {
                    let h = self.min_heaps.get_mut(&expr).expect("missing min heap");
                    let removed = h.remove(&entry);
                    debug_assert!(removed, "heap entry vanished");
                    if h.is_empty() {
                        self.min_heaps.remove(&expr);
                    }
                }
                Placement::Max { expr, entry } => {
                    let h = self.max_heaps.get_mut(&expr).expect("missing max heap");
                    let removed = h.remove(&entry);
                    debug_assert!(removed, "heap entry vanished");
                    if h.is_empty() {
                        self.max_heaps.remove(&expr);
                    }
                }
                Placement::Untagged => {
                    self.untagged.remove(&(seq, id));
                }
            }
        }
    }

    /// A waiter is about to block on `id`. The first waiter puts the record
    /// into the search indexes.
    pub fn begin_wait(&mut self, id: RecordId) {
        let r = self.rec_mut(id);
        debug_assert!(r.active, "waiting on an inactive record");
        r.waiters += 1;
        if r.waiters == 1 {
            let seq = r.seq;
            self.actives.insert((seq, id));
            if self.policy == IndexPolicy::Tagged {
                self.index_record(id);
            }
        }
    }

    /// A waiter finished (its predicate held). The last waiter takes the
    /// record out of the indexes; dynamic records are additionally parked
    /// on the inactive list.
    pub fn end_wait(&mut self, id: RecordId) {
        let r = self.rec_mut(id);
        debug_assert!(r.waiters > 0, "end_wait without begin_wait");
        r.waiters -= 1;
        if r.waiters == 0 {
            let seq = r.seq;
            self.actives.remove(&(seq, id));
            self.unindex_record(id);
            if self.rec(id).kind == RecordKind::ComplexDynamic {
                self.deactivate(id);
            }
        }
    }

    /// A signaled waiter woke up and consumes its pending signal; returns
    /// whether there was one (spurious wakeups arrive without). Consuming
    /// the last pending signal puts the record back into the search indexes:
    /// it may have other waiters, or this one may re-block on a false
    /// predicate.
    pub fn consume_pending(&mut self, id: RecordId) -> bool {
        let policy = self.policy;
        let r = self.rec_mut(id);
        if r.pending == 0 {
            return false;
        }
        r.pending -= 1;
        if r.pending == 0 && r.waiters > 0 && policy == IndexPolicy::Tagged {
            debug_assert!(r.active, "pending signal on an inactive record");
            self.index_record(id);
        }
        true
    }

    fn deactivate(&mut self, id: RecordId) {
        let r = self.rec_mut(id);
        assert!(
            r.kind == RecordKind::ComplexDynamic,
            "construction-registered records are permanent"
        );
        debug_assert_eq!(r.waiters, 0);
        r.active = false;
        r.pending = 0;
        self.inactive.push_back(id);
        while self.inactive.len() > self.inactive_cap {
            let oldest = self.inactive.pop_front().expect("nonempty");
            self.evict(oldest);
        }
    }

    fn reactivate(&mut self, id: RecordId) {
        let pos = self
            .inactive
            .iter()
            .position(|&x| x == id)
            .expect("inactive record not on the inactive list");
        self.inactive.remove(pos);
        self.rec_mut(id).active = true;
    }

    fn evict(&mut self, id: RecordId) {
        let r = self.records[id.0 as usize].take().expect("stale record id");
        debug_assert!(!r.active && r.waiters == 0);
        self.table.remove(&r.key);
        self.free.push(id.0);
        self.counters.records_evicted += 1;
    }

    fn is_eligible(&self, id: RecordId) -> bool {
        let r = self.rec(id);
        r.active && r.waiters > 0 && r.pending == 0
    }

    fn eval_record(&mut self, id: RecordId, store: &Store) -> Result<bool, PredicateError> {
        self.counters.preds_evaluated += 1;
        if let Some(t) = self.eval_trace.as_mut() {
            t.push(id);
        }
        self.rec(id).key.pred().eval(store)
    }

    fn do_signal(&mut self, id: RecordId) {
        self.rec_mut(id).pending += 1;
        self.counters.signals += 1;
        // Until the wakeup lands this record cannot be signaled again, so
        // leaving it indexed would only make later scans climb over it —
        // costly when one thread signals many times before any waiter runs.
        self.unindex_record(id);
    }

    /// Finds one waiting record whose predicate is true under `store`,
    /// accounts a pending signal on it, and returns it; the caller wakes one
    /// thread from its queue. At most one record is chosen per call.
    ///
    /// Search order is fixed: equivalence indexes in expression order, then
    /// min-heaps, then max-heaps (each in expression order, each pruned at
    /// the first false root), then the untagged list in creation order.
    /// Within any structure, ties resolve FIFO by record creation.
    pub fn relay_signal(&mut self, store: &Store) -> Result<Option<RecordId>, PredicateError> {
        match self.policy {
            IndexPolicy::ScanAll => self.relay_scan_all(store),
            IndexPolicy::Tagged => self.relay_tagged(store),
        }
    }

    fn relay_scan_all(&mut self, store: &Store) -> Result<Option<RecordId>, PredicateError> {
        let actives = std::mem::take(&mut self.actives);
        let mut chosen = None;
        let mut result = Ok(());
        for &(_, id) in &actives {
            if !self.is_eligible(id) {
                continue;
            }
            match self.eval_record(id, store) {
                Ok(true) => {
                    chosen = Some(id);
                    break;
                }
                Ok(false) => {}
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
        self.actives = actives;
        result?;
        if let Some(id) = chosen {
            self.do_signal(id);
        }
        Ok(chosen)
    }

    fn relay_tagged(&mut self, store: &Store) -> Result<Option<RecordId>, PredicateError> {
        // Records already evaluated false in this call; the store cannot
        // change under the lock, so they stay false.
        let mut seen: Vec<RecordId> = Vec::new();

        let equiv = std::mem::take(&mut self.equiv);
        let r = self.probe_equivalence(&equiv, store, &mut seen);
        self.equiv = equiv;
        if let Some(id) = r? {
            self.do_signal(id);
            return Ok(Some(id));
        }

        let mut heaps = std::mem::take(&mut self.min_heaps);
        let r = self.scan_threshold(&mut heaps, store, &mut seen, Side::Min);
        self.min_heaps = heaps;
        if let Some(id) = r? {
            self.do_signal(id);
            return Ok(Some(id));
        }

        let mut heaps = std::mem::take(&mut self.max_heaps);
        let r = self.scan_threshold(&mut heaps, store, &mut seen, Side::Max);
        self.max_heaps = heaps;
        if let Some(id) = r? {
            self.do_signal(id);
            return Ok(Some(id));
        }

        let untagged = std::mem::take(&mut self.untagged);
        let mut chosen = None;
        let mut result = Ok(());
        for &(_, id) in &untagged {
            if !self.is_eligible(id) || seen.contains(&id) {
                continue;
            }
            match self.eval_record(id, store) {
                Ok(true) => {
                    chosen = Some(id);
                    break;
                }
                Ok(false) => seen.push(id),
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
        self.untagged = untagged;
        result?;
        if let Some(id) = chosen {
            self.do_signal(id);
        }
        Ok(chosen)
    }

    fn probe_equivalence(
        &mut self,
        map: &BTreeMap<LinExpr, HashMap<i64, Vec<(u64, RecordId)>>>,
        store: &Store,
        seen: &mut Vec<RecordId>,
    ) -> Result<Option<RecordId>, PredicateError> {
        for (expr, buckets) in map {
            let v = expr.eval(store)?;
            self.counters.hash_probes += 1;
            let Some(bucket) = buckets.get(&v) else {
                continue;
            };
            for &(_, id) in bucket {
                if !self.is_eligible(id) || seen.contains(&id) {
                    continue;
                }
                if self.eval_record(id, store)? {
                    return Ok(Some(id));
                }
                seen.push(id);
            }
        }
        Ok(None)
    }

    fn scan_threshold(
        &mut self,
        heaps: &mut BTreeMap<LinExpr, ThresholdHeap>,
        store: &Store,
        seen: &mut Vec<RecordId>,
        side: Side,
    ) -> Result<Option<RecordId>, PredicateError> {
        for (expr, heap) in heaps.iter_mut() {
            let v = expr.eval(store)?;
            let mut backups: Vec<Entry> = Vec::new();
            let mut outcome: Result<Option<RecordId>, PredicateError> = Ok(None);
            while let Some(e) = heap.peek() {
                let anchor_true = match side {
                    Side::Min => min_anchor_true(e.rank, v),
                    Side::Max => max_anchor_true(e.rank, v),
                };
                if !anchor_true {
                    // Heap order: everything deeper is at least as hard to
                    // satisfy, so nothing below can be true. Prune.
                    break;
                }
                if self.is_eligible(e.id) && !seen.contains(&e.id) {
                    match self.eval_record(e.id, store) {
                        Ok(true) => {
                            // Chosen; `do_signal` removes its entry afterward.
                            outcome = Ok(Some(e.id));
                            break;
                        }
                        Ok(false) => seen.push(e.id),
                        Err(err) => {
                            outcome = Err(err);
                            break;
                        }
                    }
                }
                // Root is true but unusable; set it aside so deeper anchors
                // (which may also be true) become visible.
                heap.pop();
                self.counters.heap_polls += 1;
                backups.push(e);
            }
            self.counters.heap_reinserts += backups.len() as u64;
            for b in backups {
                heap.insert(b);
            }
            match outcome {
                Ok(None) => {}
                other => return other,
            }
        }
        Ok(None)
    }

    // ---- observers --------------------------------------------------------

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn queue(&self, id: RecordId) -> Arc<Condvar> {
        Arc::clone(&self.rec(id).queue)
    }

    pub fn pred_of(&self, id: RecordId) -> &CanonicalPred {
        self.rec(id).key.pred()
    }

    pub fn tags_of(&self, id: RecordId) -> &[Tag] {
        &self.rec(id).tags
    }

    pub fn kind_of(&self, id: RecordId) -> RecordKind {
        self.rec(id).kind
    }

    pub fn is_active(&self, id: RecordId) -> bool {
        self.rec(id).active
    }

    pub fn waiters(&self, id: RecordId) -> u32 {
        self.rec(id).waiters
    }

    pub fn pending(&self, id: RecordId) -> u32 {
        self.rec(id).pending
    }

    /// Ids of records that currently have at least one waiter.
    pub fn waited_records(&self) -> Vec<RecordId> {
        self.actives
            .iter()
            .map(|&(_, id)| id)
            .filter(|&id| self.rec(id).waiters > 0)
            .collect()
    }

    pub fn record_count(&self) -> usize {
        self.table.len()
    }

    pub fn inactive_count(&self) -> usize {
        self.inactive.len()
    }

    /// Evaluates one record's predicate with instrumentation; used by the
    /// monitor's wakeup re-check so every evaluation lands in one counter.
    pub fn eval_for_wait(&mut self, id: RecordId, store: &Store) -> Result<bool, PredicateError> {
        self.eval_record(id, store)
    }

    /// Starts recording which records `relay_signal` evaluates.
    pub fn enable_eval_trace(&mut self) {
        self.eval_trace = Some(Vec::new());
    }

    /// Returns and clears the evaluation trace recorded so far.
    pub fn take_eval_trace(&mut self) -> Vec<RecordId> {
        match self.eval_trace.as_mut() {
            Some(t) => std::mem::take(t),
            None => Vec::new(),
        }
    }

    /// Structural self-check: every signalable record (waiters present, no
    /// signal in flight) is indexed exactly where its tags say, all others
    /// are indexed nowhere, and the table maps each key to the record that
    /// holds it. Returns human-readable problems.
    pub fn audit(&self) -> Vec<String> {
        let mut bad = Vec::new();
        for (slot, r) in self.records.iter().enumerate() {
            let Some(r) = r else { continue };
            let id = RecordId(slot as u32);
            if self.table.get(&r.key) != Some(&id) {
                bad.push(format!("{id}: table does not map its key back"));
            }
            if (r.active && r.waiters > 0) != self.actives.contains(&(r.seq, id)) {
                bad.push(format!("{id}: actives set disagrees with waiter count"));
            }
            if !r.active {
                if r.waiters != 0 {
                    bad.push(format!("{id}: inactive with waiters"));
                }
                if !self.inactive.contains(&id) {
                    bad.push(format!("{id}: inactive but not on the inactive list"));
                }
            }
            if r.waiters == 0 || r.pending > 0 || self.policy == IndexPolicy::ScanAll {
                if !r.placements.is_empty() {
                    bad.push(format!("{id}: indexed while not signalable"));
                }
                continue;
            }
            let mut distinct: Vec<&Tag> = Vec::new();
            for t in &r.tags {
                if !distinct.contains(&t) {
                    distinct.push(t);
                }
            }
            if r.placements.len() != distinct.len() {
                bad.push(format!(
                    "{id}: {} placements for {} distinct tags",
                    r.placements.len(),
                    distinct.len()
                ));
            }
            for p in &r.placements {
                let present = match p {
                    Placement::Equiv { expr, key } => self
                        .equiv
                        .get(expr)
                        .and_then(|b| b.get(key))
                        .map_or(0, |v| v.iter().filter(|e| **e == (r.seq, id)).count()),
                    Placement::Min { expr, entry } => self
                        .min_heaps
                        .get(expr)
                        .map_or(0, |h| usize::from(h.contains(entry))),
                    Placement::Max { expr, entry } => self
                        .max_heaps
                        .get(expr)
                        .map_or(0, |h| usize::from(h.contains(entry))),
                    Placement::Untagged => usize::from(self.untagged.contains(&(r.seq, id))),
                };
                if present != 1 {
                    bad.push(format!("{id}: placement {p:?} present {present} times"));
                }
            }
        }
        for &(seq, id) in &self.untagged {
            match self.records[id.0 as usize].as_ref() {
                Some(r) if r.active && r.waiters > 0 && r.seq == seq => {}
                _ => bad.push(format!("untagged entry ({seq}, {id}) is stale")),
            }
        }
        for &(seq, id) in &self.actives {
            match self.records[id.0 as usize].as_ref() {
                Some(r) if r.active && r.waiters > 0 && r.seq == seq => {}
                _ => bad.push(format!("actives entry ({seq}, {id}) is stale")),
            }
        }
        bad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predicate::parse::parse_pred;
    use crate::store::{Binding, Domain, Value, VarDecls};

    fn decls() -> VarDecls {
        let mut d = VarDecls::new();
        for n in ["x", "y", "count", "turn"] {
            d.declare(n, Domain::Int);
        }
        d
    }

    fn store(pairs: &[(&str, i64)]) -> Store {
        let mut s = Store::default();
        for (n, v) in pairs {
            s.declare(n, Value::Int(*v)).unwrap();
        }
        s
    }

    fn dyn_key(src: &str, b: &Binding) -> PredKey {
        let p = parse_pred(src, &decls()).unwrap();
        let g = crate::predicate::globalize(&p, b).unwrap();
        canonical_key(&to_dnf(&g).unwrap())
    }

    fn waited(mgr: &mut ConditionManager, src: &str) -> RecordId {
        let id = mgr.register_dynamic(dyn_key(src, &Binding::new()));
        mgr.begin_wait(id);
        id
    }

    #[test]
    fn shared_registration_dedups_by_canonical_form() {
        let d = decls();
        let mut mgr = ConditionManager::new(IndexPolicy::Tagged);
        let a = mgr
            .register_shared(&parse_pred("count > 0", &d).unwrap())
            .unwrap();
        let b = mgr
            .register_shared(&parse_pred("0 < count", &d).unwrap())
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(mgr.record_count(), 1);
        assert_eq!(mgr.counters().records_created, 1);
        assert_eq!(mgr.counters().records_reused, 1);
        assert_eq!(mgr.kind_of(a), RecordKind::SharedStatic);
        assert!(mgr.audit().is_empty(), "{:?}", mgr.audit());
    }

    #[test]
    fn equivalence_probe_hits_only_the_true_bucket() {
        let mut mgr = ConditionManager::new(IndexPolicy::Tagged);
        mgr.enable_eval_trace();
        let _r3 = waited(&mut mgr, "x == 3");
        let _r6 = waited(&mut mgr, "x == 6");
        let r8 = waited(&mut mgr, "x == 8");
        let s = store(&[("x", 8)]);
        let chosen = mgr.relay_signal(&s).unwrap();
        assert_eq!(chosen, Some(r8));
        assert_eq!(mgr.counters().hash_probes, 1);
        // One probe, one predicate evaluation: the false buckets cost nothing.
        assert_eq!(mgr.take_eval_trace(), vec![r8]);
        assert_eq!(mgr.counters().signals, 1);
        assert_eq!(mgr.counters().broadcasts, 0);
    }

    #[test]
    fn false_heap_root_prunes_everything() {
        let mut mgr = ConditionManager::new(IndexPolicy::Tagged);
        mgr.enable_eval_trace();
        let _p1 = waited(&mut mgr, "x >= 5 && y != 1");
        let _p2 = waited(&mut mgr, "x > 7");
        let s = store(&[("x", 3), ("y", 0)]);
        assert_eq!(mgr.relay_signal(&s).unwrap(), None);
        // Root anchor (x >= 5) is false at x=3: no predicate evaluated at all.
        assert!(mgr.take_eval_trace().is_empty());
        assert_eq!(mgr.counters().preds_evaluated, 0);
    }

    #[test]
    fn true_root_with_false_predicate_is_set_aside_and_restored() {
        let mut mgr = ConditionManager::new(IndexPolicy::Tagged);
        mgr.enable_eval_trace();
        let p1 = waited(&mut mgr, "x >= 5 && y != 1");
        let p2 = waited(&mut mgr, "x > 7");
        let s = store(&[("x", 9), ("y", 1)]);
        let chosen = mgr.relay_signal(&s).unwrap();
        assert_eq!(chosen, Some(p2));
        assert_eq!(mgr.take_eval_trace(), vec![p1, p2]);
        assert_eq!(mgr.counters().heap_polls, 1);
        assert_eq!(mgr.counters().heap_reinserts, 1);
        // The set-aside root is back: at x=5, y=0 it is found again.
        mgr.consume_pending(p2);
        let s2 = store(&[("x", 5), ("y", 0)]);
        assert_eq!(mgr.relay_signal(&s2).unwrap(), Some(p1));
        assert!(mgr.audit().is_empty(), "{:?}", mgr.audit());
    }

    #[test]
    fn search_order_is_equivalence_then_thresholds_then_untagged() {
        let mut mgr = ConditionManager::new(IndexPolicy::Tagged);
        let unt = waited(&mut mgr, "x != 4"); // untagged, true at x=8
        let thr = waited(&mut mgr, "x >= 2"); // threshold, true at x=8
        let eqv = waited(&mut mgr, "x == 8"); // equivalence, true at x=8
        let s = store(&[("x", 8)]);
        assert_eq!(mgr.relay_signal(&s).unwrap(), Some(eqv));
        mgr.consume_pending(eqv);
        mgr.end_wait(eqv);
        assert_eq!(mgr.relay_signal(&s).unwrap(), Some(thr));
        mgr.consume_pending(thr);
        mgr.end_wait(thr);
        assert_eq!(mgr.relay_signal(&s).unwrap(), Some(unt));
    }

    #[test]
    fn max_heap_serves_upper_bound_waits() {
        let mut mgr = ConditionManager::new(IndexPolicy::Tagged);
        let loose = waited(&mut mgr, "count <= 9");
        let tight = waited(&mut mgr, "count < 3");
        let s = store(&[("count", 5)]);
        // Only the loose bound is satisfiable; root (<=9, the largest key)
        // is true and its predicate holds.
        assert_eq!(mgr.relay_signal(&s).unwrap(), Some(loose));
        mgr.consume_pending(loose);
        mgr.end_wait(loose);
        let s2 = store(&[("count", 1)]);
        assert_eq!(mgr.relay_signal(&s2).unwrap(), Some(tight));
    }

    #[test]
    fn pending_signals_block_further_signaling() {
        let mut mgr = ConditionManager::new(IndexPolicy::Tagged);
        let id = waited(&mut mgr, "x > 0");
        let s = store(&[("x", 1)]);
        assert_eq!(mgr.relay_signal(&s).unwrap(), Some(id));
        // One waiter, one pending signal: nothing left to signal.
        assert_eq!(mgr.relay_signal(&s).unwrap(), None);
        mgr.consume_pending(id);
        mgr.begin_wait(id); // a second waiter arrives
        assert_eq!(mgr.relay_signal(&s).unwrap(), Some(id));
        // Even with a spare waiter, a record with a signal in flight is not
        // signaled again; the pending thread's own exit or re-block relays.
        mgr.begin_wait(id);
        assert_eq!(mgr.relay_signal(&s).unwrap(), None);
        mgr.consume_pending(id);
        assert_eq!(mgr.relay_signal(&s).unwrap(), Some(id));
    }

    #[test]
    fn deactivation_reuse_and_eviction() {
        let mut mgr = ConditionManager::with_inactive_capacity(IndexPolicy::Tagged, 2);
        let b = Binding::new().with("n", 48);
        let key = dyn_key("count >= $n", &b);
        let id = mgr.register_dynamic(key.clone());
        mgr.begin_wait(id);
        mgr.end_wait(id);
        assert!(!mgr.is_active(id));
        assert_eq!(mgr.inactive_count(), 1);

        // Revival keeps the same record and empties the inactive list.
        let again = mgr.register_dynamic(key);
        assert_eq!(again, id);
        assert!(mgr.is_active(id));
        assert_eq!(mgr.inactive_count(), 0);
        assert_eq!(mgr.record_count(), 1);

        // Overflowing the list evicts the oldest permanently.
        mgr.begin_wait(id);
        mgr.end_wait(id); // id inactive again (oldest)
        for n in 0..2 {
            let k = dyn_key("count >= $n", &Binding::new().with("n", 100 + n));
            let r = mgr.register_dynamic(k);
            mgr.begin_wait(r);
            mgr.end_wait(r);
        }
        assert_eq!(mgr.inactive_count(), 2);
        assert_eq!(mgr.counters().records_evicted, 1);
        assert_eq!(mgr.record_count(), 2);
        assert!(mgr.audit().is_empty(), "{:?}", mgr.audit());
    }

    #[test]
    fn static_records_survive_their_last_waiter() {
        let d = decls();
        let mut mgr = ConditionManager::new(IndexPolicy::Tagged);
        let id = mgr
            .register_shared(&parse_pred("count > 0", &d).unwrap())
            .unwrap();
        mgr.begin_wait(id);
        mgr.end_wait(id);
        assert!(mgr.is_active(id));
        assert_eq!(mgr.inactive_count(), 0);
    }

    #[test]
    fn scan_all_policy_finds_records_in_creation_order() {
        let mut mgr = ConditionManager::new(IndexPolicy::ScanAll);
        let first = waited(&mut mgr, "x > 0");
        let _second = waited(&mut mgr, "x > 1");
        let s = store(&[("x", 5)]);
        // Both predicates true; creation order decides.
        assert_eq!(mgr.relay_signal(&s).unwrap(), Some(first));
        // Exhaustive scan evaluated only up to the hit.
        assert_eq!(mgr.counters().preds_evaluated, 1);
        assert_eq!(mgr.counters().hash_probes, 0);
        assert!(mgr.audit().is_empty());
    }

    #[test]
    fn rejects_complex_static_and_impossible_predicates() {
        let d = decls();
        let mut mgr = ConditionManager::new(IndexPolicy::Tagged);
        let complex = parse_pred("count >= $n", &d).unwrap();
        assert!(matches!(
            mgr.register_shared(&complex),
            Err(MonitorError::StaticPredicateNotShared { .. })
        ));
        // Constant-false atoms empty the canonical form entirely.
        let never = parse_pred("x > x && count > 0", &d).unwrap();
        assert!(matches!(
            mgr.register_shared(&never),
            Err(MonitorError::Predicate(PredicateError::PermanentlyFalse))
        ));
    }

    #[test]
    fn multi_conjunction_record_is_reachable_through_either_tag() {
        let mut mgr = ConditionManager::new(IndexPolicy::Tagged);
        let id = waited(&mut mgr, "x == 3 || count > 10");
        let via_equiv = store(&[("x", 3), ("count", 0)]);
        assert_eq!(mgr.relay_signal(&via_equiv).unwrap(), Some(id));
        mgr.consume_pending(id);
        let via_thresh = store(&[("x", 0), ("count", 11)]);
        assert_eq!(mgr.relay_signal(&via_thresh).unwrap(), Some(id));
        mgr.consume_pending(id);
        // False through both routes: no signal, and the intact routes never
        // force a second evaluation within one call.
        mgr.enable_eval_trace();
        let s = store(&[("x", 4), ("count", 10)]);
        assert_eq!(mgr.relay_signal(&s).unwrap(), None);
        assert!(mgr.take_eval_trace().len() <= 1);
    }
}
