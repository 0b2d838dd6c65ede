//! Automatic-signal monitors.
//!
//! A monitor here owns a set of shared integer/boolean variables and exposes
//! one blocking operation: `waituntil(predicate)`. There is no `signal` and
//! no condition variable in user code — when a thread leaves the monitor (or
//! blocks inside it), the runtime finds one waiting thread whose predicate
//! has become true and wakes exactly that thread. A thread therefore runs
//! only when its condition holds, and the usual lost-wakeup/spurious-wakeup
//! bug class disappears from user code.
//!
//! The interesting part is doing that *without* evaluating every waiting
//! predicate on every exit. Predicates are normalized to a canonical
//! disjunctive form; each conjunction is tagged by an anchor atom
//! (`expr == k` or `expr ≷ k` over shared variables). Equivalence anchors
//! are hash-indexed by their constant, threshold anchors sit in heaps whose
//! root is the easiest bound to satisfy, so one comparison can rule out an
//! entire family of waiting predicates. See [`manager`] for the search and
//! [`tagging`] for anchor selection.
//!
//! Crate layout:
//!
//! * [`store`] — shared variables, local-variable bindings, domains.
//! * [`predicate`] — the predicate AST, parser, DNF/canonical forms, and
//!   the local-variable substitution that turns a thread's private wait
//!   condition into a shared one.
//! * [`tagging`] — anchor selection for canonical conjunctions.
//! * [`manager`] — condition records, tag indexes, relay signaling.
//! * [`monitor`] — the user-facing monitor: build, enter, `waituntil`.
//! * [`verifier`] — a bounded model checker for small monitor programs.
//! * [`bench`] — the classic-problem workloads and mechanism harness.

pub mod bench;
pub mod error;
pub mod manager;
pub mod monitor;
pub mod predicate;
pub mod store;
pub mod tagging;
pub mod testgen;
pub mod verifier;

pub use bench::{run_once, run_trimmed, Problem, RunConfig, RunResult, Summary, CSV_HEADER};
pub use error::{MonitorError, PredicateError};
pub use manager::{ConditionManager, Counters, IndexPolicy, RecordId};
pub use monitor::{Mechanism, Monitor, MonitorBuilder, MonitorGuard, Wait, WaitTemplate};
pub use predicate::linear::{canonical_key, CanonicalPred, PredKey};
pub use predicate::parse::parse_pred;
pub use predicate::{globalize, to_dnf, DnfPred, Pred};
pub use store::{Binding, Domain, Store, Value, VarDecls};
pub use tagging::{tag_predicate, Tag, TagMode};
