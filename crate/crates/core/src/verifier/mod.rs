//! Bounded exploration of monitor schedules.
//!
//! A [`Scenario`] is a small monitor program: shared variables plus one
//! action script per thread. The verifier runs the scenario against the real
//! [`ConditionManager`] under every (or, in random mode, many) thread
//! interleavings and checks, between steps:
//!
//! * **relay invariance / lost wakeups** — whenever no thread can run, no
//!   blocked thread may be sitting on a predicate that is already true;
//! * **deadlock** — if the scenario demands completion, every thread must
//!   finish;
//! * a scenario-supplied **state invariant** over the shared variables;
//! * **mutual exclusion** — re-entering the monitor from inside a section.
//!
//! The model exploits monitor semantics for tractability: threads interleave
//! only where the real implementation can interleave, namely at lock
//! acquisition. One *step* runs a single thread from entering the monitor
//! (or waking inside it) up to its next block or exit, atomically. Between
//! steps the monitor is always free. Wakeups are FIFO per condition record,
//! matching the queue behaviour of the wrapped condition variables. Relays
//! follow the monitor's rule exactly: a section runs the relay search only
//! if it wrote a variable or consumed a wakeup signal, so the exploration
//! also proves that skipping clean sections loses no wakeups.
//!
//! Exhaustive mode deduplicates states, so it visits each reachable state
//! once; `count_paths` disables that to count distinct complete executions
//! of (small) scenarios. A state recurring on the current path is reported
//! as a livelock warning and pruned.

pub mod scenario;

pub use scenario::{by_name, scenario_names, Action, Scenario};

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::MonitorError;
use crate::manager::{ConditionManager, IndexPolicy, RecordId};
use crate::predicate::linear::{canonical_key, PredKey};
use crate::predicate::parse::parse_pred;
use crate::predicate::{classify, eval_pred, globalize, to_dnf, Pred, PredClass};
use crate::store::{Binding, Store, Value, VarDecls};

/// How to explore the schedule tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Visit every reachable state. With `count_paths` the verifier
    /// enumerates complete executions instead of deduplicating states —
    /// exponentially more work, only for small scenarios.
    Exhaustive { count_paths: bool },
    /// `trials` independent random schedules from `seed`.
    Random { seed: u64, trials: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    /// A blocked thread's predicate is true but nothing will ever wake it.
    LostWakeup,
    /// Threads remain blocked (predicates false) in a scenario that must
    /// finish.
    Deadlock,
    /// The scenario's state invariant failed between steps.
    InvariantFailed,
    /// `enter` while already inside the monitor.
    MutualExclusion,
}

impl std::fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ViolationKind::LostWakeup => "lost wakeup",
            ViolationKind::Deadlock => "deadlock",
            ViolationKind::InvariantFailed => "invariant failed",
            ViolationKind::MutualExclusion => "mutual exclusion",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
    /// One line per step: the schedule that produced the violation.
    pub trace: Vec<String>,
}

#[derive(Debug, Default, Clone)]
pub struct Report {
    /// Distinct states visited (exhaustive) or steps taken (random).
    pub states: u64,
    /// Complete executions seen. Exact only with `count_paths` or random
    /// mode; under deduplication many executions share their final state.
    pub executions: u64,
    pub violations: Vec<Violation>,
    pub livelock_warnings: u64,
    /// Paths cut off by the depth cap; their tails were not checked.
    pub truncated: u64,
}

impl Report {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for Report {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "states: {}, complete executions: {}, livelock warnings: {}, truncated: {}",
            self.states, self.executions, self.livelock_warnings, self.truncated
        )?;
        if self.violations.is_empty() {
            write!(f, "no violations")?;
        } else {
            writeln!(f, "{} violation(s):", self.violations.len())?;
            for v in &self.violations {
                writeln!(f, "- {}: {}", v.kind, v.detail)?;
                for line in &v.trace {
                    writeln!(f, "    {line}")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub mode: Mode,
    /// Run the relay search when a thread leaves the monitor. Turning this
    /// off is a deliberate bug switch: the verifier must then find lost
    /// wakeups, demonstrating the checks have teeth.
    pub relay_on_exit: bool,
    /// Hard cap on steps along one path (guards against livelocks the
    /// fingerprint check cannot see).
    pub max_depth: usize,
    /// Hard cap on visited states.
    pub max_states: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            mode: Mode::Exhaustive { count_paths: false },
            relay_on_exit: true,
            max_depth: 20_000,
            max_states: 50_000_000,
        }
    }
}

// A script action with its predicate work done once, up front.
enum CAction {
    Enter,
    Exit,
    Skip,
    Set(String, Value),
    Add(String, i64),
    WaitUntil {
        text: String,
        pred: Pred,
        binding: Binding,
        key: PredKey,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Status {
    Ready,
    Waiting,
    Signaled,
    Done,
}

#[derive(Clone)]
struct Thread {
    pc: usize,
    status: Status,
    record: Option<RecordId>,
    wait_seq: u64,
    // Mirrors `MonitorGuard::dirty`: wrote a variable or consumed a signal
    // since this section's last relay.
    dirty: bool,
}

#[derive(Clone)]
struct World {
    store: Store,
    mgr: ConditionManager,
    threads: Vec<Thread>,
    next_wait_seq: u64,
}

// What one step did, and anything wrong with it.
struct StepOutcome {
    desc: String,
    violation: Option<(ViolationKind, String)>,
}

pub struct Verifier {
    name: String,
    scripts: Vec<Vec<CAction>>,
    var_names: Vec<String>, // sorted; fingerprint and reporting order
    invariant: Option<(String, Pred)>,
    must_finish: bool,
    initial: World,
    options: VerifyOptions,
}

struct Search {
    report: Report,
    visited: HashSet<Vec<u64>>,
    on_path: Vec<Vec<u64>>,
    trace: Vec<String>,
    stop: bool,
}

const MAX_VIOLATIONS: usize = 8;

impl Verifier {
    /// Compiles a scenario. Parse errors, non-shared static predicates, and
    /// waits that no store state could ever satisfy all surface here.
    pub fn new(s: &Scenario, options: VerifyOptions) -> Result<Verifier, MonitorError> {
        let mut decls = VarDecls::new();
        let mut store = Store::new();
        for (name, v) in s.int_vars() {
            if !decls.declare(&name, Value::Int(v).domain()) {
                return Err(MonitorError::DuplicateVariable(name));
            }
            store.declare(&name, Value::Int(v))?;
        }
        for (name, v) in s.bool_vars() {
            if !decls.declare(&name, Value::Bool(v).domain()) {
                return Err(MonitorError::DuplicateVariable(name));
            }
            store.declare(&name, Value::Bool(v))?;
        }

        let mut mgr = ConditionManager::new(IndexPolicy::Tagged);
        for src in &s.static_preds {
            let p = parse_pred(src, &decls)?;
            mgr.register_shared(&p)?;
        }
        mgr.seal();

        let mut scripts = Vec::with_capacity(s.threads.len());
        for (tid, script) in s.threads.iter().enumerate() {
            let mut compiled = Vec::with_capacity(script.len());
            let mut depth = 0u32;
            for a in script {
                let c = match a {
                    Action::Enter => {
                        depth += 1;
                        CAction::Enter
                    }
                    Action::Exit => {
                        assert!(depth > 0, "thread {tid}: exit outside a section");
                        depth -= 1;
                        CAction::Exit
                    }
                    Action::Skip => CAction::Skip,
                    Action::Set(n, v) => CAction::Set(n.clone(), Value::Int(*v)),
                    Action::SetFlag(n, v) => CAction::Set(n.clone(), Value::Bool(*v)),
                    Action::Add(n, d) => CAction::Add(n.clone(), *d),
                    Action::WaitUntil(src, locals) => {
                        let pred = parse_pred(src, &decls)?;
                        let mut binding = Binding::new();
                        for (n, v) in locals {
                            binding.set(n, *v);
                        }
                        let global = if classify(&pred) == PredClass::Shared {
                            pred.clone()
                        } else {
                            globalize(&pred, &binding)?
                        };
                        let key = canonical_key(&to_dnf(&global)?);
                        if key.pred().is_never_true() {
                            return Err(crate::PredicateError::PermanentlyFalse.into());
                        }
                        CAction::WaitUntil {
                            text: src.clone(),
                            pred,
                            binding,
                            key,
                        }
                    }
                };
                if depth == 0 && !matches!(c, CAction::Exit) {
                    panic!("thread {tid}: action outside enter/exit");
                }
                compiled.push(c);
            }
            assert_eq!(depth, 0, "thread {tid}: unclosed section");
            scripts.push(compiled);
        }

        let invariant = match &s.invariant {
            Some(src) => {
                let p = parse_pred(src, &decls)?;
                if classify(&p) != PredClass::Shared {
                    return Err(MonitorError::StaticPredicateNotShared { text: src.clone() });
                }
                Some((src.clone(), p))
            }
            None => None,
        };

        let mut var_names: Vec<String> = s
            .int_vars()
            .into_iter()
            .map(|(n, _)| n)
            .chain(s.bool_vars().into_iter().map(|(n, _)| n))
            .collect();
        var_names.sort();

        let threads = scripts
            .iter()
            .map(|sc| Thread {
                pc: 0,
                status: if sc.is_empty() {
                    Status::Done
                } else {
                    Status::Ready
                },
                record: None,
                wait_seq: 0,
                dirty: false,
            })
            .collect();

        Ok(Verifier {
            name: s.name.clone(),
            scripts,
            var_names,
            invariant,
            must_finish: s.must_finish,
            initial: World {
                store,
                mgr,
                threads,
                next_wait_seq: 0,
            },
            options,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn run(&self) -> Result<Report, MonitorError> {
        let mut search = Search {
            report: Report::default(),
            visited: HashSet::new(),
            on_path: Vec::new(),
            trace: Vec::new(),
            stop: false,
        };
        match self.options.mode {
            Mode::Exhaustive { count_paths } => {
                let world = self.initial.clone();
                self.check_state(&world, &mut search);
                self.dfs(world, !count_paths, 0, &mut search)?;
            }
            Mode::Random { seed, trials } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for _ in 0..trials {
                    if search.stop {
                        break;
                    }
                    self.random_walk(&mut rng, &mut search)?;
                }
            }
        }
        Ok(search.report)
    }

    fn enabled(&self, w: &World) -> Vec<usize> {
        w.threads
            .iter()
            .enumerate()
            .filter(|(_, t)| matches!(t.status, Status::Ready | Status::Signaled))
            .map(|(i, _)| i)
            .collect()
    }

    fn dfs(&self, w: World, dedup: bool, depth: usize, s: &mut Search) -> Result<(), MonitorError> {
        if s.stop {
            return Ok(());
        }
        if depth >= self.options.max_depth {
            s.report.truncated += 1;
            return Ok(());
        }
        let choices = self.enabled(&w);
        if choices.is_empty() {
            self.check_quiescent(&w, s);
            if w.threads.iter().all(|t| t.status == Status::Done) {
                s.report.executions += 1;
            }
            return Ok(());
        }
        for t in choices {
            if s.stop {
                break;
            }
            let mut next = w.clone();
            let outcome = self.step(&mut next, t)?;
            s.trace.push(format!("T{t}: {}", outcome.desc));
            if let Some((kind, detail)) = outcome.violation {
                self.record_violation(s, kind, detail);
                s.trace.pop();
                continue;
            }
            self.check_state(&next, s);
            let fp = self.fingerprint(&next);
            let explore = if s.on_path.contains(&fp) {
                s.report.livelock_warnings += 1;
                false
            } else if dedup {
                s.visited.insert(fp.clone())
            } else {
                true
            };
            if explore {
                s.report.states += 1;
                if s.report.states >= self.options.max_states {
                    s.report.truncated += 1;
                    s.stop = true;
                } else {
                    s.on_path.push(fp);
                    self.dfs(next, dedup, depth + 1, s)?;
                    s.on_path.pop();
                }
            }
            s.trace.pop();
        }
        Ok(())
    }

    fn random_walk(&self, rng: &mut ChaCha8Rng, s: &mut Search) -> Result<(), MonitorError> {
        let mut w = self.initial.clone();
        s.trace.clear();
        for depth in 0.. {
            if depth >= self.options.max_depth {
                s.report.truncated += 1;
                return Ok(());
            }
            let choices = self.enabled(&w);
            if choices.is_empty() {
                self.check_quiescent(&w, s);
                if w.threads.iter().all(|t| t.status == Status::Done) {
                    s.report.executions += 1;
                }
                return Ok(());
            }
            let t = choices[rng.gen_range(0..choices.len())];
            let outcome = self.step(&mut w, t)?;
            s.report.states += 1;
            s.trace.push(format!("T{t}: {}", outcome.desc));
            if let Some((kind, detail)) = outcome.violation {
                self.record_violation(s, kind, detail);
                return Ok(());
            }
            self.check_state(&w, s);
            if s.stop {
                return Ok(());
            }
        }
        Ok(())
    }

    fn record_violation(&self, s: &mut Search, kind: ViolationKind, detail: String) {
        s.report.violations.push(Violation {
            kind,
            detail,
            trace: s.trace.clone(),
        });
        if s.report.violations.len() >= MAX_VIOLATIONS {
            s.stop = true;
        }
    }

    // Runs thread `t` from its current boundary to the next one.
    fn step(&self, w: &mut World, t: usize) -> Result<StepOutcome, MonitorError> {
        match w.threads[t].status {
            Status::Signaled => self.resume(w, t),
            Status::Ready => {
                debug_assert!(matches!(
                    self.scripts[t][w.threads[t].pc],
                    CAction::Enter
                ));
                w.threads[t].pc += 1;
                self.advance(w, t, String::from("enter"))
            }
            Status::Waiting | Status::Done => unreachable!("stepping a blocked or done thread"),
        }
    }

    fn resume(&self, w: &mut World, t: usize) -> Result<StepOutcome, MonitorError> {
        let id = w.threads[t].record.expect("signaled thread has a record");
        if w.mgr.consume_pending(id) {
            w.threads[t].dirty = true;
        }
        w.mgr.counters.wakeups += 1;
        let World { store, mgr, .. } = w;
        if mgr.eval_for_wait(id, store)? {
            mgr.end_wait(id);
            w.threads[t].record = None;
            w.threads[t].pc += 1; // past the satisfied waituntil
            self.advance(w, t, String::from("wake"))
        } else {
            w.mgr.counters.futile_wakeups += 1;
            // Re-queue at the back, as a real condition variable would.
            w.threads[t].status = Status::Waiting;
            w.threads[t].wait_seq = w.next_wait_seq;
            w.next_wait_seq += 1;
            let was_dirty = w.threads[t].dirty;
            w.threads[t].dirty = false;
            let relayed = if was_dirty { self.do_relay(w)? } else { None };
            Ok(StepOutcome {
                desc: format!("futile wakeup, blocks again{}", relay_desc(relayed)),
                violation: None,
            })
        }
    }

    fn advance(
        &self,
        w: &mut World,
        t: usize,
        mut desc: String,
    ) -> Result<StepOutcome, MonitorError> {
        loop {
            let pc = w.threads[t].pc;
            match &self.scripts[t][pc] {
                CAction::Enter => {
                    return Ok(StepOutcome {
                        desc: format!("{desc}; enter while inside"),
                        violation: Some((
                            ViolationKind::MutualExclusion,
                            format!("thread {t} re-entered the monitor at action {pc}"),
                        )),
                    });
                }
                CAction::Skip => {
                    w.threads[t].pc += 1;
                }
                CAction::Set(name, v) => {
                    w.store.set(name, *v)?;
                    w.threads[t].dirty = true;
                    desc.push_str(&format!("; {name}={v}"));
                    w.threads[t].pc += 1;
                }
                CAction::Add(name, d) => {
                    let v = w.store.get(name)?.as_int()?;
                    let v = v
                        .checked_add(*d)
                        .ok_or(crate::PredicateError::Overflow)?;
                    w.store.set(name, Value::Int(v))?;
                    w.threads[t].dirty = true;
                    desc.push_str(&format!("; {name}={v}"));
                    w.threads[t].pc += 1;
                }
                CAction::WaitUntil {
                    text,
                    pred,
                    binding,
                    key,
                } => {
                    w.mgr.counters.waits += 1;
                    w.mgr.counters.preds_evaluated += 1;
                    if eval_pred(pred, &w.store, binding)? {
                        desc.push_str(&format!("; [{text}] holds"));
                        w.threads[t].pc += 1;
                        continue;
                    }
                    let id = w.mgr.register_dynamic(key.clone());
                    w.mgr.begin_wait(id);
                    w.threads[t].record = Some(id);
                    w.threads[t].status = Status::Waiting;
                    w.threads[t].wait_seq = w.next_wait_seq;
                    w.next_wait_seq += 1;
                    let was_dirty = w.threads[t].dirty;
                    w.threads[t].dirty = false;
                    let relayed = if was_dirty { self.do_relay(w)? } else { None };
                    return Ok(StepOutcome {
                        desc: format!("{desc}; blocks on [{text}]{}", relay_desc(relayed)),
                        violation: None,
                    });
                }
                CAction::Exit => {
                    w.threads[t].pc += 1;
                    w.threads[t].status = if w.threads[t].pc >= self.scripts[t].len() {
                        Status::Done
                    } else {
                        Status::Ready
                    };
                    let was_dirty = w.threads[t].dirty;
                    w.threads[t].dirty = false;
                    let relayed = if self.options.relay_on_exit && was_dirty {
                        self.do_relay(w)?
                    } else {
                        None
                    };
                    return Ok(StepOutcome {
                        desc: format!("{desc}; exit{}", relay_desc(relayed)),
                        violation: None,
                    });
                }
            }
        }
    }

    // One relay pass; on a hit, the FIFO-first waiter of the chosen record
    // becomes Signaled (the wakeup in flight).
    fn do_relay(&self, w: &mut World) -> Result<Option<usize>, MonitorError> {
        let World { store, mgr, .. } = w;
        let Some(rec) = mgr.relay_signal(store)? else {
            return Ok(None);
        };
        let target = w
            .threads
            .iter()
            .enumerate()
            .filter(|(_, th)| th.status == Status::Waiting && th.record == Some(rec))
            .min_by_key(|(_, th)| th.wait_seq)
            .map(|(i, _)| i)
            .expect("signaled record has an unsignaled waiter");
        w.threads[target].status = Status::Signaled;
        Ok(Some(target))
    }

    // Invariant check between steps (the monitor is free here).
    fn check_state(&self, w: &World, s: &mut Search) {
        if s.stop {
            return;
        }
        if let Some((src, pred)) = &self.invariant {
            match eval_pred(pred, &w.store, &Binding::new()) {
                Ok(true) => {}
                Ok(false) => {
                    let detail = format!("invariant [{src}] is false at {}", self.show_vars(w));
                    self.record_violation(s, ViolationKind::InvariantFailed, detail);
                }
                Err(e) => {
                    let detail = format!("invariant [{src}] failed to evaluate: {e}");
                    self.record_violation(s, ViolationKind::InvariantFailed, detail);
                }
            }
        }
    }

    // Nothing can run. Anyone still waiting on a true predicate was lost;
    // anyone still waiting at all is a deadlock if the scenario must finish.
    fn check_quiescent(&self, w: &World, s: &mut Search) {
        if s.stop {
            return;
        }
        for (i, th) in w.threads.iter().enumerate() {
            if th.status != Status::Waiting {
                continue;
            }
            let rec = th.record.expect("waiting thread has a record");
            let true_pred = w
                .mgr
                .pred_of(rec)
                .eval(&w.store)
                .unwrap_or(false);
            if true_pred {
                let detail = format!(
                    "thread {i} is blocked on [{}] which is true at {}; no runnable \
                     thread or pending signal remains",
                    w.mgr.pred_of(rec),
                    self.show_vars(w)
                );
                self.record_violation(s, ViolationKind::LostWakeup, detail);
                return;
            }
        }
        if self.must_finish && w.threads.iter().any(|t| t.status == Status::Waiting) {
            let blocked: Vec<String> = w
                .threads
                .iter()
                .enumerate()
                .filter(|(_, t)| t.status == Status::Waiting)
                .map(|(i, t)| {
                    format!(
                        "T{i} on [{}]",
                        t.record.map_or_else(
                            || String::from("?"),
                            |r| w.mgr.pred_of(r).to_string()
                        )
                    )
                })
                .collect();
            let detail = format!(
                "threads blocked forever at {}: {}",
                self.show_vars(w),
                blocked.join(", ")
            );
            self.record_violation(s, ViolationKind::Deadlock, detail);
        }
    }

    fn show_vars(&self, w: &World) -> String {
        let parts: Vec<String> = self
            .var_names
            .iter()
            .map(|n| match w.store.get(n) {
                Ok(v) => format!("{n}={v}"),
                Err(_) => format!("{n}=?"),
            })
            .collect();
        format!("{{{}}}", parts.join(", "))
    }

    // Exact state key: shared values, thread control state, and the wait
    // queues (as FIFO ranks, so the absolute arrival counters don't make
    // equal states look distinct).
    fn fingerprint(&self, w: &World) -> Vec<u64> {
        let mut fp = Vec::with_capacity(self.var_names.len() + 5 * w.threads.len());
        for n in &self.var_names {
            let v = match w.store.get(n).expect("declared") {
                Value::Int(i) => i as u64,
                Value::Bool(b) => u64::from(b),
            };
            fp.push(v);
        }
        let mut waiting: Vec<(u64, usize)> = w
            .threads
            .iter()
            .enumerate()
            .filter(|(_, t)| t.status == Status::Waiting)
            .map(|(i, t)| (t.wait_seq, i))
            .collect();
        waiting.sort_unstable();
        let rank_of = |i: usize| -> u64 {
            waiting
                .iter()
                .position(|&(_, j)| j == i)
                .map_or(u64::MAX, |p| p as u64)
        };
        for (i, t) in w.threads.iter().enumerate() {
            fp.push(t.pc as u64);
            fp.push(match t.status {
                Status::Ready => 0,
                Status::Waiting => 1,
                Status::Signaled => 2,
                Status::Done => 3,
            });
            fp.push(t.record.map_or(u64::MAX, |r| u64::from(r.0)));
            fp.push(rank_of(i));
            fp.push(u64::from(t.dirty));
        }
        for id in w.mgr.waited_records() {
            fp.push(u64::from(id.0));
            fp.push(u64::from(w.mgr.waiters(id)));
            fp.push(u64::from(w.mgr.pending(id)));
        }
        fp
    }
}

fn relay_desc(target: Option<usize>) -> String {
    match target {
        Some(t) => format!(" (relay signals T{t})"),
        None => String::new(),
    }
}
