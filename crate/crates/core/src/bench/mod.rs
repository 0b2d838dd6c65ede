//! Workloads and the measurement harness.
//!
//! Seven classic coordination problems, each runnable under four
//! mechanisms: hand-written mutex/condvar code ([`Mechanism::Explicit`]),
//! a broadcast-everything monitor ([`Mechanism::Baseline`]), relay
//! signaling without indexes ([`Mechanism::AutoNoTags`]), and the full
//! tag-indexed runtime ([`Mechanism::Auto`]).
//!
//! Every run validates its own outcome (item conservation, grant order,
//! ticket order, stick parity, …) and panics on corruption, so a completed
//! [`RunResult`] is also a correctness witness. Timing uses a start barrier
//! and wall clock around the worker threads; the saturation harness runs a
//! configuration many times, drops the best and worst run, and reports the
//! mean of the rest.

mod explicit;
mod problems;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use crate::manager::Counters;
use crate::monitor::Mechanism;

/// The coordination problems in the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Problem {
    /// Multi-producer multi-consumer ring buffer (small capacity).
    BoundedBuffer,
    /// One producer inserting variable-size batches against many consumers
    /// over a large buffer; waits are parameterized by the batch size.
    ParamBoundedBuffer,
    /// Customers queue for haircuts, are served strictly in arrival order,
    /// and walk away when all chairs are taken.
    SleepingBarber,
    /// Two hydrogens and an oxygen rendezvous per molecule.
    H2O,
    /// Threads take fixed turns; each waits for `turn == me`.
    RoundRobin,
    /// Ticket-ordered readers/writers: overlapping reads, exclusive writes,
    /// service strictly in ticket order.
    ReadersWriters,
    /// Philosophers grab both adjacent sticks atomically.
    DiningPhilosophers,
}

impl Problem {
    pub const ALL: [Problem; 7] = [
        Problem::BoundedBuffer,
        Problem::ParamBoundedBuffer,
        Problem::SleepingBarber,
        Problem::H2O,
        Problem::RoundRobin,
        Problem::ReadersWriters,
        Problem::DiningPhilosophers,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Problem::BoundedBuffer => "bounded-buffer",
            Problem::ParamBoundedBuffer => "param-bounded-buffer",
            Problem::SleepingBarber => "sleeping-barber",
            Problem::H2O => "h2o",
            Problem::RoundRobin => "round-robin",
            Problem::ReadersWriters => "readers-writers",
            Problem::DiningPhilosophers => "dining-philosophers",
        }
    }

    /// Fewest worker threads the problem makes sense with.
    pub fn min_threads(self) -> usize {
        match self {
            Problem::H2O => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Problem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Problem::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Problem::ALL.iter().map(|p| p.name()).collect();
                format!("unknown problem `{s}` (expected one of: {})", names.join(", "))
            })
    }
}

/// One benchmark configuration.
#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub problem: Problem,
    pub mechanism: Mechanism,
    /// Total worker threads; each problem splits them by role.
    pub threads: usize,
    /// Operations per worker (per producer / per customer / rounds each —
    /// see the problem runners).
    pub ops: u64,
    /// Buffer capacity or barber chairs; 0 picks the problem default.
    pub capacity: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(problem: Problem, mechanism: Mechanism, threads: usize, ops: u64) -> RunConfig {
        RunConfig {
            problem,
            mechanism,
            threads,
            ops,
            capacity: 0,
            seed: 0x5eed,
        }
    }
}

/// Outcome of one run. Construction implies the workload validated.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub wall: Duration,
    pub counters: Counters,
    /// Compact `key=value` facts about what the run did.
    pub digest: String,
}

/// Runs one configuration once.
pub fn run_once(cfg: &RunConfig) -> RunResult {
    assert!(
        cfg.threads >= cfg.problem.min_threads(),
        "{} needs at least {} threads",
        cfg.problem,
        cfg.problem.min_threads()
    );
    assert!(cfg.ops > 0, "ops must be positive");
    match cfg.mechanism {
        Mechanism::Explicit => explicit::run(cfg),
        _ => problems::run(cfg),
    }
}

/// Saturated measurement: `runs` repetitions with per-run seeds, best and
/// worst dropped, mean of the rest.
#[derive(Debug, Clone)]
pub struct Summary {
    pub problem: Problem,
    pub mechanism: Mechanism,
    pub threads: usize,
    pub ops: u64,
    pub seed: u64,
    pub runs: usize,
    pub trimmed_mean_s: f64,
    /// Field-wise mean over the kept runs.
    pub counters: Counters,
    /// Digest of the last run (digests with scheduling-dependent fields,
    /// e.g. walkaways, vary between runs).
    pub digest: String,
}

pub const CSV_HEADER: &str =
    "problem,mechanism,threads,trimmed_mean_s,futile_wakeups,signals,broadcasts,preds_evaluated,seed";

impl Summary {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{},{},{},{},{}",
            self.problem,
            self.mechanism,
            self.threads,
            self.trimmed_mean_s,
            self.counters.futile_wakeups,
            self.counters.signals,
            self.counters.broadcasts,
            self.counters.preds_evaluated,
            self.seed
        )
    }
}

/// Runs `cfg` `runs` times (seeds `seed`, `seed+1`, …), drops the fastest
/// and slowest run when there are at least three, and averages the rest.
pub fn run_trimmed(cfg: &RunConfig, runs: usize) -> Summary {
    assert!(runs >= 1);
    let results: Vec<RunResult> = (0..runs)
        .map(|i| {
            let mut c = *cfg;
            c.seed = cfg.seed.wrapping_add(i as u64);
            run_once(&c)
        })
        .collect();
    let mut order: Vec<usize> = (0..runs).collect();
    order.sort_by(|&a, &b| results[a].wall.cmp(&results[b].wall));
    let kept: Vec<usize> = if runs >= 3 {
        order[1..runs - 1].to_vec()
    } else {
        order
    };
    let mean_s = kept
        .iter()
        .map(|&i| results[i].wall.as_secs_f64())
        .sum::<f64>()
        / kept.len() as f64;
    let mut total = Counters::default();
    for &i in &kept {
        total.add(&results[i].counters);
    }
    let counters = mean_counters(total, kept.len() as u64);
    Summary {
        problem: cfg.problem,
        mechanism: cfg.mechanism,
        threads: cfg.threads,
        ops: cfg.ops,
        seed: cfg.seed,
        runs,
        trimmed_mean_s: mean_s,
        counters,
        digest: results.last().expect("runs >= 1").digest.clone(),
    }
}

fn mean_counters(total: Counters, n: u64) -> Counters {
    let n = n.max(1);
    Counters {
        signals: total.signals / n,
        broadcasts: total.broadcasts / n,
        preds_evaluated: total.preds_evaluated / n,
        hash_probes: total.hash_probes / n,
        heap_polls: total.heap_polls / n,
        heap_reinserts: total.heap_reinserts / n,
        records_created: total.records_created / n,
        records_reused: total.records_reused / n,
        records_evicted: total.records_evicted / n,
        waits: total.waits / n,
        wakeups: total.wakeups / n,
        futile_wakeups: total.futile_wakeups / n,
    }
}
