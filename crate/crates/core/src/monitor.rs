//! The user-facing monitor: shared variables behind one lock, and
//! `waituntil` as the only blocking primitive.
//!
//! A thread enters the monitor, reads and writes its variables, and may
//! block on an arbitrary predicate over them (plus its own thread-local
//! values). Nobody ever signals by hand: whenever a thread leaves the
//! monitor or is about to block inside it, the runtime picks at most one
//! waiting thread whose predicate now holds and wakes it. Sections that
//! wrote nothing and consumed no wakeup signal skip that step — they cannot
//! have made a predicate true, and any signal in flight is still pending.
//! Waking exactly the right thread is the condition manager's job; this
//! module supplies the locking, the wait protocol, and the exit hook.
//!
//! ```
//! use automon::{Mechanism, Monitor};
//!
//! let m = Monitor::builder(Mechanism::Auto)
//!     .var("count", 0)
//!     .build()
//!     .unwrap();
//! let want = m.compile("count >= 1").unwrap();
//! let mut g = m.enter();
//! g.set_int("count", 1);
//! g.waituntil(&want).unwrap(); // already true: returns at once
//! ```

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use parking_lot::{Condvar, Mutex, MutexGuard};

use crate::error::MonitorError;
use crate::manager::{ConditionManager, Counters, IndexPolicy};
use crate::predicate::linear::{canonical_key, PredKey, TemplatePlan};
use crate::predicate::parse::parse_pred;
use crate::predicate::{classify, eval_pred, globalize, to_dnf, Pred, PredClass};
use crate::store::{Binding, Store, Value, VarDecls};

/// Synchronization mechanism driving a monitor or workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mechanism {
    /// Hand-placed signals on hand-chosen condition variables; implemented
    /// per problem, not by [`Monitor`].
    Explicit,
    /// One condition variable for the whole monitor: every exit broadcasts
    /// and each waiter re-checks its own predicate.
    Baseline,
    /// Relay signaling that re-evaluates every waiting predicate in record
    /// creation order.
    AutoNoTags,
    /// Relay signaling through the tag indexes.
    Auto,
}

impl Mechanism {
    pub const ALL: [Mechanism; 4] = [
        Mechanism::Explicit,
        Mechanism::Baseline,
        Mechanism::AutoNoTags,
        Mechanism::Auto,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Explicit => "explicit",
            Mechanism::Baseline => "baseline",
            Mechanism::AutoNoTags => "auto-notags",
            Mechanism::Auto => "auto",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mechanism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "explicit" => Ok(Mechanism::Explicit),
            "baseline" => Ok(Mechanism::Baseline),
            "auto-notags" | "auto_notags" | "notags" => Ok(Mechanism::AutoNoTags),
            "auto" => Ok(Mechanism::Auto),
            other => Err(format!(
                "unknown mechanism `{other}` (expected explicit, baseline, auto-notags, or auto)"
            )),
        }
    }
}

/// A wait condition with its normalization — substitution, disjunctive
/// form, canonical key — done once, ahead of time. Waiting on a `Wait` costs
/// one evaluation plus a table lookup.
#[derive(Debug, Clone)]
pub struct Wait {
    pred: Arc<Pred>,
    binding: Binding,
    key: PredKey,
}

impl Wait {
    /// Normalizes `pred` under `binding`. Rejects conditions no store state
    /// could ever satisfy.
    pub fn new(pred: Pred, binding: Binding) -> Result<Wait, MonitorError> {
        Wait::from_arc(Arc::new(pred), binding)
    }

    fn from_arc(pred: Arc<Pred>, binding: Binding) -> Result<Wait, MonitorError> {
        let global = if classify(&pred) == PredClass::Shared {
            (*pred).clone()
        } else {
            globalize(&pred, &binding)?
        };
        let key = canonical_key(&to_dnf(&global).map_err(MonitorError::Predicate)?);
        if key.pred().is_never_true() {
            return Err(crate::PredicateError::PermanentlyFalse.into());
        }
        Ok(Wait { pred, binding, key })
    }

    pub fn pred(&self) -> &Pred {
        &self.pred
    }

    pub fn key(&self) -> &PredKey {
        &self.key
    }
}

/// A wait condition compiled once and bound many times. Where [`Wait::new`]
/// rebuilds and renormalizes the predicate for every binding, a template
/// keeps the canonical form with the local variables held open, and
/// [`bind`] fills them in with a little arithmetic per atom. Bindings a
/// template can't substitute exactly (non-integer locals, folds that
/// overflow) silently take the full [`Wait::new`] route instead, so the
/// resulting `Wait` is the same either way.
///
/// [`bind`]: WaitTemplate::bind
#[derive(Debug, Clone)]
pub struct WaitTemplate {
    pred: Arc<Pred>,
    plan: TemplatePlan,
}

impl WaitTemplate {
    /// Compiles `pred` into a reusable wait shape. Rejects conditions no
    /// store state could ever satisfy.
    pub fn new(pred: Pred) -> Result<WaitTemplate, MonitorError> {
        let plan = match (classify(&pred), to_dnf(&pred)) {
            (PredClass::Shared, Ok(d)) => {
                let key = canonical_key(&d);
                if key.pred().is_never_true() {
                    return Err(crate::PredicateError::PermanentlyFalse.into());
                }
                TemplatePlan::Fixed(key)
            }
            (PredClass::Complex, Ok(d)) => TemplatePlan::build(&d),
            // Disjunctive blowup here may still clear the limit once the
            // binding folds branches away; retry in full per bind.
            (_, Err(_)) => TemplatePlan::General,
        };
        Ok(WaitTemplate {
            pred: Arc::new(pred),
            plan,
        })
    }

    /// Fills in the local variables, yielding the same `Wait` that
    /// `Wait::new(pred.clone(), binding)` would build.
    pub fn bind(&self, binding: Binding) -> Result<Wait, MonitorError> {
        if let Some(key) = self.plan.instantiate(&binding) {
            if key.pred().is_never_true() {
                return Err(crate::PredicateError::PermanentlyFalse.into());
            }
            return Ok(Wait {
                pred: Arc::clone(&self.pred),
                binding,
                key,
            });
        }
        Wait::from_arc(Arc::clone(&self.pred), binding)
    }

    pub fn pred(&self) -> &Pred {
        &self.pred
    }
}

enum Sync {
    Relay(ConditionManager),
    Broadcast {
        queue: Arc<Condvar>,
        waiters: u32,
        counters: Counters,
    },
}

struct Inner {
    store: Store,
    sync: Sync,
}

/// Builder for [`Monitor`]. Declaration errors are deferred to [`build`]
/// so calls chain freely.
///
/// [`build`]: MonitorBuilder::build
pub struct MonitorBuilder {
    mechanism: Mechanism,
    decls: VarDecls,
    store: Store,
    static_preds: Vec<Pred>,
    inactive_cap: usize,
    err: Option<MonitorError>,
}

impl MonitorBuilder {
    fn declare(mut self, name: &str, v: Value) -> Self {
        if self.err.is_some() {
            return self;
        }
        if !self.decls.declare(name, v.domain()) {
            self.err = Some(MonitorError::DuplicateVariable(name.to_string()));
            return self;
        }
        if let Err(e) = self.store.declare(name, v) {
            self.err = Some(e);
        }
        self
    }

    /// Declares a shared integer variable.
    pub fn var(self, name: &str, init: i64) -> Self {
        self.declare(name, Value::Int(init))
    }

    /// Declares a shared boolean variable.
    pub fn flag(self, name: &str, init: bool) -> Self {
        self.declare(name, Value::Bool(init))
    }

    /// Pre-registers a wait condition over shared variables only. The relay
    /// mechanisms give such conditions a permanent record that is never
    /// evicted; waits on anything else create records on first use.
    pub fn static_pred(mut self, src: &str) -> Self {
        if self.err.is_some() {
            return self;
        }
        match parse_pred(src, &self.decls) {
            Ok(p) => self.static_preds.push(p),
            Err(e) => self.err = Some(e.into()),
        }
        self
    }

    /// Caps the FIFO of inactive dynamic condition records.
    pub fn inactive_capacity(mut self, cap: usize) -> Self {
        self.inactive_cap = cap;
        self
    }

    pub fn build(self) -> Result<Monitor, MonitorError> {
        if let Some(e) = self.err {
            return Err(e);
        }
        let sync = match self.mechanism {
            Mechanism::Explicit => unreachable!("rejected in Monitor::builder"),
            Mechanism::Baseline => Sync::Broadcast {
                queue: Arc::new(Condvar::new()),
                waiters: 0,
                counters: Counters::default(),
            },
            Mechanism::AutoNoTags | Mechanism::Auto => {
                let policy = match self.mechanism {
                    Mechanism::Auto => IndexPolicy::Tagged,
                    _ => IndexPolicy::ScanAll,
                };
                let mut mgr = ConditionManager::with_inactive_capacity(policy, self.inactive_cap);
                for p in &self.static_preds {
                    mgr.register_shared(p)?;
                }
                mgr.seal();
                Sync::Relay(mgr)
            }
        };
        Ok(Monitor {
            mechanism: self.mechanism,
            decls: self.decls,
            inner: Mutex::new(Inner {
                store: self.store,
                sync,
            }),
        })
    }
}

pub struct Monitor {
    mechanism: Mechanism,
    decls: VarDecls,
    inner: Mutex<Inner>,
}

impl fmt::Debug for Monitor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Monitor")
            .field("mechanism", &self.mechanism)
            .finish_non_exhaustive()
    }
}

impl Monitor {
    /// Starts a builder.
    ///
    /// # Panics
    ///
    /// If `mechanism` is [`Mechanism::Explicit`] — explicit synchronization
    /// is hand-written per problem and has no generic monitor.
    pub fn builder(mechanism: Mechanism) -> MonitorBuilder {
        assert!(
            mechanism != Mechanism::Explicit,
            "the explicit mechanism is hand-written per problem; build one of \
             baseline, auto-notags, or auto"
        );
        MonitorBuilder {
            mechanism,
            decls: VarDecls::new(),
            store: Store::new(),
            static_preds: Vec::new(),
            inactive_cap: crate::manager::INACTIVE_CAPACITY,
            err: None,
        }
    }

    pub fn mechanism(&self) -> Mechanism {
        self.mechanism
    }

    pub fn decls(&self) -> &VarDecls {
        &self.decls
    }

    /// Parses a predicate against this monitor's variable declarations.
    /// Compile once, wait many times.
    pub fn compile(&self, src: &str) -> Result<Pred, MonitorError> {
        parse_pred(src, &self.decls).map_err(Into::into)
    }

    /// Parses and fully normalizes a wait condition with no local values.
    pub fn prepare(&self, src: &str) -> Result<Wait, MonitorError> {
        self.prepare_with(src, Binding::new())
    }

    /// Parses and fully normalizes a wait condition, substituting `binding`
    /// now so the hot path only evaluates and looks up. Use this when a
    /// thread waits on the same condition (or the same condition shape with
    /// a fixed binding) many times.
    pub fn prepare_with(&self, src: &str, binding: Binding) -> Result<Wait, MonitorError> {
        Wait::new(self.compile(src)?, binding)
    }

    /// Parses a wait condition into a template to [`bind`] with fresh local
    /// values each time the thread waits.
    ///
    /// [`bind`]: WaitTemplate::bind
    pub fn prepare_template(&self, src: &str) -> Result<WaitTemplate, MonitorError> {
        WaitTemplate::new(self.compile(src)?)
    }

    /// Enters the monitor, blocking until it is free.
    ///
    /// Not reentrant: entering a monitor this thread already occupies
    /// deadlocks (and panics in debug builds).
    pub fn enter(&self) -> MonitorGuard<'_> {
        #[cfg(debug_assertions)]
        reentry::check_and_push(self as *const Monitor as usize);
        MonitorGuard {
            monitor: self,
            inner: Some(self.inner.lock()),
            dirty: false,
        }
    }

    /// Snapshot of the instrumentation counters.
    pub fn stats(&self) -> Counters {
        let inner = self.inner.lock();
        match &inner.sync {
            Sync::Relay(mgr) => mgr.counters(),
            Sync::Broadcast { counters, .. } => *counters,
        }
    }
}

// Finds one ready waiter and wakes it. Called with the monitor lock held, on
// exit and immediately before blocking — but only from dirty sections (see
// `MonitorGuard::dirty`); parking_lot requeues threads notified while the
// mutex is held, so this is cheap.
fn relay_and_notify(inner: &mut Inner) -> Result<(), MonitorError> {
    let Inner { store, sync } = inner;
    if let Sync::Relay(mgr) = sync {
        if let Some(id) = mgr.relay_signal(store)? {
            mgr.queue(id).notify_one();
        }
    }
    Ok(())
}

/// Exclusive access to the monitor's variables. Dropping the guard leaves
/// the monitor and runs the signaling hook: relay mechanisms wake at most
/// one thread whose predicate holds; the baseline wakes everyone.
pub struct MonitorGuard<'a> {
    monitor: &'a Monitor,
    inner: Option<MutexGuard<'a, Inner>>,
    // Whether this section wrote a variable or consumed a wakeup signal.
    // Only then does it relay: a clean section cannot have made a predicate
    // true, and a signal it did not consume is still pending for whoever
    // will. Consuming counts because the chosen thread now answers for the
    // other waiters the relay passed over.
    dirty: bool,
}

impl MonitorGuard<'_> {
    fn inner(&self) -> &Inner {
        self.inner.as_ref().expect("guard still held")
    }

    fn inner_mut(&mut self) -> &mut Inner {
        self.inner.as_mut().expect("guard still held")
    }

    /// # Panics
    ///
    /// On unknown names or domain mismatches; those are programming errors
    /// in the calling workload, not runtime conditions.
    pub fn get_int(&self, name: &str) -> i64 {
        self.inner()
            .store
            .get(name)
            .and_then(|v| v.as_int())
            .unwrap_or_else(|e| panic!("get_int({name:?}): {e}"))
    }

    pub fn get_bool(&self, name: &str) -> bool {
        self.inner()
            .store
            .get(name)
            .and_then(|v| v.as_bool())
            .unwrap_or_else(|e| panic!("get_bool({name:?}): {e}"))
    }

    pub fn set_int(&mut self, name: &str, v: i64) {
        self.inner_mut()
            .store
            .set(name, Value::Int(v))
            .unwrap_or_else(|e| panic!("set_int({name:?}): {e}"));
        self.dirty = true;
    }

    pub fn set_bool(&mut self, name: &str, v: bool) {
        self.inner_mut()
            .store
            .set(name, Value::Bool(v))
            .unwrap_or_else(|e| panic!("set_bool({name:?}): {e}"));
        self.dirty = true;
    }

    pub fn add(&mut self, name: &str, delta: i64) {
        let v = self
            .get_int(name)
            .checked_add(delta)
            .unwrap_or_else(|| panic!("add({name:?}, {delta}) overflowed"));
        self.set_int(name, v);
    }

    /// Blocks until `pred` (shared variables only) holds.
    pub fn waituntil(&mut self, pred: &Pred) -> Result<(), MonitorError> {
        self.waituntil_with(pred, &Binding::new())
    }

    /// Blocks until `pred` holds, with `$locals` taken from `binding`.
    ///
    /// Returns immediately if the predicate is already true. Otherwise the
    /// relay mechanisms substitute the binding into the predicate, register
    /// its canonical form with the condition manager, and block until a
    /// relay picks this record; each wakeup re-checks the predicate. The
    /// calling thread blocks with the monitor released and returns holding
    /// it again.
    ///
    /// Errors: a predicate that is constantly false under `binding` can
    /// never be satisfied and is rejected rather than waited on.
    pub fn waituntil_with(&mut self, pred: &Pred, binding: &Binding) -> Result<(), MonitorError> {
        match self.monitor.mechanism {
            Mechanism::Explicit => unreachable!(),
            Mechanism::Baseline => self.wait_broadcast(pred, binding),
            Mechanism::AutoNoTags | Mechanism::Auto => self.wait_relay(pred, binding, None),
        }
    }

    /// Blocks until a [prepared](Monitor::prepare_with) condition holds.
    pub fn waituntil_prepared(&mut self, w: &Wait) -> Result<(), MonitorError> {
        match self.monitor.mechanism {
            Mechanism::Explicit => unreachable!(),
            Mechanism::Baseline => self.wait_broadcast(&w.pred, &w.binding),
            Mechanism::AutoNoTags | Mechanism::Auto => {
                self.wait_relay(&w.pred, &w.binding, Some(&w.key))
            }
        }
    }

    fn wait_broadcast(&mut self, pred: &Pred, binding: &Binding) -> Result<(), MonitorError> {
        let inner = self.inner.as_mut().expect("guard still held");
        {
            let Inner { store, sync } = &mut **inner;
            let Sync::Broadcast { counters, .. } = sync else {
                unreachable!()
            };
            counters.waits += 1;
            counters.preds_evaluated += 1;
            if eval_pred(pred, store, binding)? {
                return Ok(());
            }
        }
        let queue = {
            let Sync::Broadcast { queue, .. } = &inner.sync else {
                unreachable!()
            };
            Arc::clone(queue)
        };
        loop {
            {
                let Sync::Broadcast {
                    queue,
                    waiters,
                    counters,
                } = &mut inner.sync
                else {
                    unreachable!()
                };
                // We are about to block: anything this thread changed since
                // entering must reach the other waiters now.
                if *waiters > 0 {
                    counters.broadcasts += 1;
                    queue.notify_all();
                }
                *waiters += 1;
            }
            queue.wait(inner);
            let Inner { store, sync } = &mut **inner;
            let Sync::Broadcast {
                waiters, counters, ..
            } = sync
            else {
                unreachable!()
            };
            *waiters -= 1;
            counters.wakeups += 1;
            counters.preds_evaluated += 1;
            if eval_pred(pred, store, binding)? {
                return Ok(());
            }
            counters.futile_wakeups += 1;
        }
    }

    fn wait_relay(
        &mut self,
        pred: &Pred,
        binding: &Binding,
        prepared: Option<&PredKey>,
    ) -> Result<(), MonitorError> {
        let inner = self.inner.as_mut().expect("guard still held");
        {
            let Inner { store, sync } = &mut **inner;
            let Sync::Relay(mgr) = sync else {
                unreachable!()
            };
            mgr.counters.waits += 1;
            mgr.counters.preds_evaluated += 1;
            if eval_pred(pred, store, binding)? {
                return Ok(());
            }
        }

        // The predicate is false: pin down the shared condition this thread
        // is really waiting for and register it.
        let key = match prepared {
            Some(k) => k.clone(),
            None => {
                let global = if classify(pred) == PredClass::Shared {
                    pred.clone()
                } else {
                    globalize(pred, binding)?
                };
                let key = canonical_key(&to_dnf(&global).map_err(MonitorError::Predicate)?);
                if key.pred().is_never_true() {
                    // No store state can ever satisfy this; waiting would hang.
                    return Err(crate::PredicateError::PermanentlyFalse.into());
                }
                key
            }
        };
        let (id, queue) = {
            let Sync::Relay(mgr) = &mut inner.sync else {
                unreachable!()
            };
            let id = mgr.register_dynamic(key);
            mgr.begin_wait(id);
            (id, mgr.queue(id))
        };

        let mut failure = None;
        loop {
            // Pass the monitor on before sleeping: this thread may have
            // made someone else's predicate true, or hold a signal that
            // belongs to another waiter now.
            if self.dirty {
                self.dirty = false;
                if let Err(e) = relay_and_notify(inner) {
                    failure = Some(e);
                    break;
                }
            }
            queue.wait(inner);
            let Inner { store, sync } = &mut **inner;
            let Sync::Relay(mgr) = sync else {
                unreachable!()
            };
            mgr.counters.wakeups += 1;
            if mgr.consume_pending(id) {
                self.dirty = true;
            }
            match mgr.eval_for_wait(id, store) {
                Ok(true) => break,
                Ok(false) => mgr.counters.futile_wakeups += 1,
                Err(e) => {
                    failure = Some(e.into());
                    break;
                }
            }
        }
        let Sync::Relay(mgr) = &mut inner.sync else {
            unreachable!()
        };
        mgr.end_wait(id);
        match failure {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

impl Drop for MonitorGuard<'_> {
    fn drop(&mut self) {
        if let Some(mut inner) = self.inner.take() {
            if !std::thread::panicking() {
                match &mut inner.sync {
                    Sync::Relay(_) => {
                        if self.dirty {
                            if let Err(e) = relay_and_notify(&mut inner) {
                                drop(inner);
                                panic!("signaling failed on monitor exit: {e}");
                            }
                        }
                    }
                    Sync::Broadcast {
                        queue,
                        waiters,
                        counters,
                    } => {
                        if *waiters > 0 {
                            counters.broadcasts += 1;
                            queue.notify_all();
                        }
                    }
                }
            }
        }
        #[cfg(debug_assertions)]
        reentry::pop(self.monitor as *const Monitor as usize);
    }
}

#[cfg(debug_assertions)]
mod reentry {
    use std::cell::RefCell;

    thread_local! {
        static HELD: RefCell<Vec<usize>> = const { RefCell::new(Vec::new()) };
    }

    pub fn check_and_push(key: usize) {
        HELD.with(|h| {
            let mut v = h.borrow_mut();
            assert!(
                !v.contains(&key),
                "monitor is not reentrant: enter() called while already inside"
            );
            v.push(key);
        });
    }

    pub fn pop(key: usize) {
        HELD.with(|h| {
            let mut v = h.borrow_mut();
            if let Some(pos) = v.iter().rposition(|&k| k == key) {
                v.remove(pos);
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;

    fn ping_pong(mechanism: Mechanism, rounds: i64) -> (Counters, i64) {
        let m = Arc::new(
            Monitor::builder(mechanism)
                .var("ball", 0)
                .var("hits", 0)
                .build()
                .unwrap(),
        );
        let mut handles = Vec::new();
        for side in 0..2i64 {
            let m = Arc::clone(&m);
            handles.push(thread::spawn(move || {
                let want = m.compile("ball == $side").unwrap();
                let b = Binding::new().with("side", side);
                for _ in 0..rounds {
                    let mut g = m.enter();
                    g.waituntil_with(&want, &b).unwrap();
                    g.set_int("ball", 1 - side);
                    g.add("hits", 1);
                }
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        let hits = m.enter().get_int("hits");
        (m.stats(), hits)
    }

    #[test]
    fn relay_ping_pong_never_broadcasts() {
        for mech in [Mechanism::Auto, Mechanism::AutoNoTags] {
            let (stats, hits) = ping_pong(mech, 200);
            assert_eq!(hits, 400);
            assert_eq!(stats.broadcasts, 0, "{mech}: relay must not broadcast");
            assert!(stats.signals > 0);
        }
    }

    #[test]
    fn baseline_ping_pong_broadcasts_and_never_signals() {
        let (stats, hits) = ping_pong(Mechanism::Baseline, 200);
        assert_eq!(hits, 400);
        assert_eq!(stats.signals, 0);
        assert!(stats.broadcasts > 0);
    }

    #[test]
    fn waiting_on_a_flag_comparison_wakes() {
        // Flag-to-flag comparisons take the opaque path through the relay;
        // a linear reading would abort the signaling thread's exit.
        let m = Arc::new(
            Monitor::builder(Mechanism::Auto)
                .flag("open", true)
                .flag("shut", false)
                .build()
                .unwrap(),
        );
        let waiter = {
            let m = Arc::clone(&m);
            thread::spawn(move || {
                let agree = m.compile("open == shut").unwrap();
                m.enter().waituntil(&agree).unwrap();
            })
        };
        while m.stats().waits == 0 {
            thread::yield_now();
        }
        m.enter().set_bool("shut", true);
        waiter.join().unwrap();
        assert_eq!(m.stats().broadcasts, 0);
    }

    #[test]
    fn true_predicate_returns_without_registering() {
        let m = Monitor::builder(Mechanism::Auto)
            .var("count", 3)
            .build()
            .unwrap();
        let p = m.compile("count >= 1").unwrap();
        m.enter().waituntil(&p).unwrap();
        let stats = m.stats();
        assert_eq!(stats.records_created, 0);
        assert_eq!(stats.waits, 1);
    }

    #[test]
    fn template_binds_match_the_full_pipeline() {
        use crate::testgen::random_wait_case;
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;

        let mut rng = ChaCha8Rng::seed_from_u64(0xb1bd);
        for case in 0..3000 {
            let (pred, binding) = random_wait_case(&mut rng);
            let direct = Wait::new(pred.clone(), binding.clone());
            let via_template = match WaitTemplate::new(pred.clone()) {
                Ok(t) => t.bind(binding.clone()),
                Err(e) => Err(e),
            };
            match (direct, via_template) {
                (Ok(a), Ok(b)) => assert_eq!(
                    a.key().pred(),
                    b.key().pred(),
                    "case {case}: keys differ for {pred} under {binding:?}"
                ),
                (Err(_), Err(_)) => {}
                (a, b) => panic!(
                    "case {case}: one path failed for {pred} under {binding:?}: \
                     direct {a:?}, template {b:?}"
                ),
            }
        }
    }

    #[test]
    fn template_examples_bind_to_expected_keys() {
        let m = Monitor::builder(Mechanism::Auto)
            .var("count", 0)
            .var("served", 0)
            .build()
            .unwrap();

        let t = m.prepare_template("count >= $need").unwrap();
        let w = t.bind(Binding::new().with("need", 48)).unwrap();
        assert_eq!(w.key().pred().to_string(), "(count >= 48)");

        let t = m.prepare_template("count <= 256 - $batch").unwrap();
        let w = t.bind(Binding::new().with("batch", 100)).unwrap();
        assert_eq!(w.key().pred().to_string(), "(count <= 156)");

        // A shared shape ignores its binding entirely.
        let t = m.prepare_template("served > 0 || count > 0").unwrap();
        let w = t.bind(Binding::new()).unwrap();
        assert_eq!(w.key().pred().to_string(), "(count > 0) || (served > 0)");

        // Purely local conditions collapse per binding.
        let t = m.prepare_template("$need <= 4 && count >= $need").unwrap();
        assert!(t.bind(Binding::new().with("need", 9)).is_err());
        let w = t.bind(Binding::new().with("need", 2)).unwrap();
        assert_eq!(w.key().pred().to_string(), "(count >= 2)");

        // A missing local is an error on either path.
        assert!(t.bind(Binding::new()).is_err());
    }

    #[test]
    fn static_predicates_get_permanent_records() {
        let m = Monitor::builder(Mechanism::Auto)
            .var("count", 0)
            .static_pred("count > 0")
            .build()
            .unwrap();
        assert_eq!(m.stats().records_created, 1);
        let m = Arc::new(m);
        let waiter = {
            let m = Arc::clone(&m);
            thread::spawn(move || {
                let p = m.compile("count > 0").unwrap();
                let mut g = m.enter();
                g.waituntil(&p).unwrap();
                g.add("count", -1);
            })
        };
        // Busy-ish handoff: the waiter must find the existing record.
        thread::sleep(std::time::Duration::from_millis(20));
        m.enter().add("count", 1);
        waiter.join().unwrap();
        let stats = m.stats();
        assert_eq!(stats.records_created, 1, "wait reused the static record");
        assert!(stats.records_reused >= 1);
        assert_eq!(m.enter().get_int("count"), 0);
    }

    #[test]
    fn local_bindings_wait_for_globalized_condition() {
        let m = Arc::new(
            Monitor::builder(Mechanism::Auto)
                .var("count", 0)
                .build()
                .unwrap(),
        );
        let waiter = {
            let m = Arc::clone(&m);
            thread::spawn(move || {
                let p = m.compile("count >= $n").unwrap();
                let b = Binding::new().with("n", 3);
                m.enter().waituntil_with(&p, &b).unwrap();
            })
        };
        for _ in 0..3 {
            thread::sleep(std::time::Duration::from_millis(5));
            m.enter().add("count", 1);
        }
        waiter.join().unwrap();
        assert_eq!(m.stats().broadcasts, 0);
    }

    #[test]
    fn impossible_wait_is_rejected() {
        let m = Monitor::builder(Mechanism::Auto)
            .var("count", 0)
            .build()
            .unwrap();
        let p = m.compile("count > count").unwrap();
        let err = m.enter().waituntil(&p).unwrap_err();
        assert!(matches!(
            err,
            MonitorError::Predicate(crate::PredicateError::PermanentlyFalse)
        ));
    }

    #[test]
    fn duplicate_variables_fail_at_build() {
        let err = Monitor::builder(Mechanism::Auto)
            .var("x", 0)
            .flag("x", false)
            .build()
            .unwrap_err();
        assert!(matches!(err, MonitorError::DuplicateVariable(n) if n == "x"));
    }

    #[test]
    fn non_shared_static_predicate_fails_at_build() {
        let err = Monitor::builder(Mechanism::Auto)
            .var("x", 0)
            .static_pred("x >= $n")
            .build()
            .unwrap_err();
        assert!(matches!(err, MonitorError::StaticPredicateNotShared { .. }));
    }

    #[test]
    #[cfg(debug_assertions)]
    #[should_panic(expected = "not reentrant")]
    fn reentry_panics_in_debug_builds() {
        let m = Monitor::builder(Mechanism::Auto)
            .var("x", 0)
            .build()
            .unwrap();
        let _g1 = m.enter();
        let _g2 = m.enter();
    }

    #[test]
    fn many_waiters_all_released() {
        let m = Arc::new(
            Monitor::builder(Mechanism::Auto)
                .var("gate", 0)
                .var("through", 0)
                .build()
                .unwrap(),
        );
        let mut handles = Vec::new();
        for i in 0..8i64 {
            let m = Arc::clone(&m);
            handles.push(thread::spawn(move || {
                let p = m.compile("gate >= $lvl").unwrap();
                let b = Binding::new().with("lvl", i + 1);
                let mut g = m.enter();
                g.waituntil_with(&p, &b).unwrap();
                g.add("through", 1);
            }));
        }
        thread::sleep(std::time::Duration::from_millis(20));
        m.enter().set_int("gate", 100);
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(m.enter().get_int("through"), 8);
        assert_eq!(m.stats().broadcasts, 0);
    }
}
