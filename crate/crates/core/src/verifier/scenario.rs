//! Scenario scripts for the verifier: tiny, bounded versions of the classic
//! coordination problems, plus purpose-built probe scenarios.
//!
//! A scenario is data, not code — variables, per-thread action lists, an
//! optional state invariant — so the verifier can replay it under any
//! schedule. Factories take a `bound` that scales how much work each thread
//! does; exhaustive exploration cost grows quickly with it.

/// One scripted thread action. `WaitUntil` carries `$local` values as
/// name/value pairs. Actions other than `Enter`/`Exit` must appear inside
/// an `Enter`..`Exit` section.
#[derive(Debug, Clone)]
pub enum Action {
    Enter,
    Exit,
    /// No-op inside the monitor; gives a section a body without touching
    /// state (useful for counting pure interleavings).
    Skip,
    Set(String, i64),
    SetFlag(String, bool),
    Add(String, i64),
    WaitUntil(String, Vec<(String, i64)>),
}

/// A bounded monitor program.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    /// Shared integer variables with initial values.
    pub vars: Vec<(String, i64)>,
    /// Shared boolean variables with initial values.
    pub flags: Vec<(String, bool)>,
    /// Predicates to pre-register at construction (shared variables only).
    pub static_preds: Vec<String>,
    pub threads: Vec<Vec<Action>>,
    /// Every thread must reach the end of its script; threads still blocked
    /// at quiescence are a deadlock.
    pub must_finish: bool,
    /// Checked between steps; shared variables only.
    pub invariant: Option<String>,
}

impl Scenario {
    pub(crate) fn int_vars(&self) -> Vec<(String, i64)> {
        self.vars.clone()
    }

    pub(crate) fn bool_vars(&self) -> Vec<(String, bool)> {
        self.flags.clone()
    }
}

fn enter() -> Action {
    Action::Enter
}
fn exit() -> Action {
    Action::Exit
}
fn set(n: &str, v: i64) -> Action {
    Action::Set(n.into(), v)
}
fn add(n: &str, d: i64) -> Action {
    Action::Add(n.into(), d)
}
fn wait(p: &str) -> Action {
    Action::WaitUntil(p.into(), vec![])
}
fn wait_local(p: &str, locals: &[(&str, i64)]) -> Action {
    Action::WaitUntil(
        p.into(),
        locals.iter().map(|(n, v)| ((*n).into(), *v)).collect(),
    )
}

/// Two threads, two empty monitor sections each. With four atomic sections
/// constrained only by program order, there are 4!/(2!·2!) = 6 complete
/// executions — a direct check that the scheduler explores exactly the
/// monitor-level interleavings and nothing else.
pub fn interleave() -> Scenario {
    let section = vec![enter(), Action::Skip, exit()];
    let thread: Vec<Action> = section.iter().cloned().chain(section.clone()).collect();
    Scenario {
        name: "interleave".into(),
        vars: vec![],
        flags: vec![],
        static_preds: vec![],
        threads: vec![thread.clone(), thread],
        must_finish: true,
        invariant: None,
    }
}

/// `n` threads take turns: thread `i` waits for `turn == i`, then passes the
/// turn on. Each predicate is an equivalence over a thread-local value, so
/// this exercises globalization and the equivalence index.
pub fn round_robin(n: i64, rounds: usize) -> Scenario {
    let mut threads = Vec::new();
    for me in 0..n {
        let mut script = Vec::new();
        for _ in 0..rounds {
            script.push(enter());
            script.push(wait_local("turn == $me", &[("me", me)]));
            script.push(set("turn", (me + 1) % n));
            script.push(exit());
        }
        threads.push(script);
    }
    Scenario {
        name: "round-robin".into(),
        vars: vec![("turn".into(), 0)],
        flags: vec![],
        static_preds: vec![],
        threads,
        must_finish: true,
        invariant: Some(format!("turn >= 0 && turn < {n}")),
    }
}

/// Single-slot handoff: one producer, one consumer, capacity 2.
pub fn bounded_buffer(items: usize) -> Scenario {
    let cap = 2;
    let mut producer = Vec::new();
    let mut consumer = Vec::new();
    for _ in 0..items {
        producer.extend([enter(), wait(&format!("count < {cap}")), add("count", 1), exit()]);
        consumer.extend([enter(), wait("count > 0"), add("count", -1), exit()]);
    }
    Scenario {
        name: "bounded-buffer".into(),
        vars: vec![("count".into(), 0)],
        flags: vec![],
        static_preds: vec![format!("count < {cap}"), "count > 0".into()],
        threads: vec![producer, consumer],
        must_finish: true,
        invariant: Some(format!("count >= 0 && count <= {cap}")),
    }
}

/// Batched producer against two consumers over a capacity-4 buffer. The
/// producer inserts in batches of 2 and must wait until the whole batch
/// fits, so producer and consumers wait on different thresholds.
pub fn param_bounded_buffer(items: usize) -> Scenario {
    let cap = 4;
    let batch = 2usize;
    let items = items.max(2) & !1; // even, at least one batch
    let mut producer = Vec::new();
    for _ in 0..items / batch {
        producer.extend([
            enter(),
            wait(&format!("count <= {}", cap - batch as i64)),
            add("count", batch as i64),
            exit(),
        ]);
    }
    let consume = |n: usize| -> Vec<Action> {
        let mut s = Vec::new();
        for _ in 0..n {
            s.extend([enter(), wait("count >= 1"), add("count", -1), exit()]);
        }
        s
    };
    Scenario {
        name: "param-bounded-buffer".into(),
        vars: vec![("count".into(), 0)],
        flags: vec![],
        static_preds: vec![format!("count <= {}", cap - batch as i64), "count >= 1".into()],
        threads: vec![producer, consume(items / 2), consume(items - items / 2)],
        must_finish: true,
        invariant: Some(format!("count >= 0 && count <= {cap}")),
    }
}

/// Readers–writers with writer preference ignored: readers may overlap, a
/// writer excludes everyone. The invariant is the published safety property.
pub fn readers_writers(rounds: usize) -> Scenario {
    let reader = |rounds: usize| -> Vec<Action> {
        let mut s = Vec::new();
        for _ in 0..rounds {
            s.extend([enter(), wait("writing == 0"), add("reading", 1), exit()]);
            // reads happen here, outside the monitor
            s.extend([enter(), add("reading", -1), exit()]);
        }
        s
    };
    let mut writer = Vec::new();
    for _ in 0..rounds {
        writer.extend([
            enter(),
            wait("writing == 0 && reading == 0"),
            set("writing", 1),
            exit(),
        ]);
        writer.extend([enter(), set("writing", 0), exit()]);
    }
    Scenario {
        name: "readers-writers".into(),
        vars: vec![("reading".into(), 0), ("writing".into(), 0)],
        flags: vec![],
        static_preds: vec!["writing == 0".into(), "writing == 0 && reading == 0".into()],
        threads: vec![reader(rounds), reader(rounds), writer],
        must_finish: true,
        invariant: Some("writing >= 0 && writing <= 1 && reading >= 0 && (writing == 0 || reading == 0)".into()),
    }
}

/// Water building: an oxygen thread opens two bonding slots, hydrogens take
/// one slot each, oxygen waits for both before completing the molecule.
pub fn h2o(molecules: usize) -> Scenario {
    let mut oxygen = Vec::new();
    for _ in 0..molecules {
        oxygen.extend([
            enter(),
            wait("slots == 0 && arrived == 0"),
            set("slots", 2),
            wait("arrived == 2"),
            set("arrived", 0),
            add("bonded", 1),
            exit(),
        ]);
    }
    let hydrogen = |n: usize| -> Vec<Action> {
        let mut s = Vec::new();
        for _ in 0..n {
            s.extend([
                enter(),
                wait("slots >= 1"),
                add("slots", -1),
                add("arrived", 1),
                exit(),
            ]);
        }
        s
    };
    Scenario {
        name: "h2o".into(),
        vars: vec![
            ("slots".into(), 0),
            ("arrived".into(), 0),
            ("bonded".into(), 0),
        ],
        flags: vec![],
        static_preds: vec!["slots >= 1".into(), "arrived == 2".into()],
        threads: vec![oxygen, hydrogen(molecules), hydrogen(molecules)],
        must_finish: true,
        invariant: Some("slots >= 0 && slots <= 2 && arrived >= 0 && arrived <= 2".into()),
    }
}

/// A barber serves customers strictly in arrival order: customer `k` holds
/// position `k` and waits for `served >= k`, a per-thread threshold.
pub fn sleeping_barber(customers: i64) -> Scenario {
    let mut barber = Vec::new();
    for _ in 0..customers {
        barber.extend([enter(), wait("queued > served"), add("served", 1), exit()]);
    }
    let mut threads = vec![barber];
    for k in 1..=customers {
        threads.push(vec![
            enter(),
            add("queued", 1),
            exit(),
            enter(),
            wait_local("served >= $pos", &[("pos", k)]),
            exit(),
        ]);
    }
    Scenario {
        name: "sleeping-barber".into(),
        vars: vec![("queued".into(), 0), ("served".into(), 0)],
        flags: vec![],
        static_preds: vec!["queued > served".into()],
        threads,
        must_finish: true,
        invariant: Some("served >= 0 && served <= queued".into()),
    }
}

/// Three philosophers; each grabs both adjacent sticks atomically (one
/// waituntil over two shared flags), eats, and puts them back.
pub fn dining_philosophers(rounds: usize) -> Scenario {
    let n = 3i64;
    let mut threads = Vec::new();
    let mut static_preds = Vec::new();
    for i in 0..n {
        let a = i;
        let b = (i + 1) % n;
        let pred = format!("stick{a} == 1 && stick{b} == 1");
        static_preds.push(pred.clone());
        let mut script = Vec::new();
        for _ in 0..rounds {
            script.extend([
                enter(),
                wait(&pred),
                set(&format!("stick{a}"), 0),
                set(&format!("stick{b}"), 0),
                exit(),
                // eating happens here
                enter(),
                set(&format!("stick{a}"), 1),
                set(&format!("stick{b}"), 1),
                add("meals", 1),
                exit(),
            ]);
        }
        threads.push(script);
    }
    Scenario {
        name: "dining-philosophers".into(),
        vars: vec![
            ("stick0".into(), 1),
            ("stick1".into(), 1),
            ("stick2".into(), 1),
            ("meals".into(), 0),
        ],
        flags: vec![],
        static_preds,
        threads,
        must_finish: true,
        invariant: Some(
            "stick0 >= 0 && stick0 <= 1 && stick1 >= 0 && stick1 <= 1 && stick2 >= 0 && stick2 <= 1"
                .into(),
        ),
    }
}

/// Scenario names accepted by [`by_name`].
pub fn scenario_names() -> &'static [&'static str] {
    &[
        "bounded-buffer",
        "param-bounded-buffer",
        "round-robin",
        "readers-writers",
        "h2o",
        "sleeping-barber",
        "dining-philosophers",
        "interleave",
    ]
}

/// Builds a named scenario sized by `bound` (per-thread work units).
pub fn by_name(name: &str, bound: usize) -> Option<Scenario> {
    let bound = bound.max(1);
    Some(match name {
        "bounded-buffer" => bounded_buffer(bound),
        "param-bounded-buffer" => param_bounded_buffer(2 * bound),
        "round-robin" => round_robin(3, bound),
        "readers-writers" => readers_writers(bound),
        "h2o" => h2o(bound),
        "sleeping-barber" => sleeping_barber(bound as i64),
        "dining-philosophers" => dining_philosophers(bound),
        "interleave" => interleave(),
        _ => return None,
    })
}
