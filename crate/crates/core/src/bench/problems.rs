//! Monitor-based implementations of the benchmark problems.
//!
//! Each runner builds one [`Monitor`] under the configured mechanism,
//! spawns workers behind a start barrier, times the region from barrier
//! release to last join, and validates the outcome before reporting.
//! Waits that sit in hot loops are prepared ahead of time ([`Wait`]), so
//! the measured cost of `waituntil` is evaluation plus a table lookup,
//! not re-normalization.

use std::sync::Barrier;
use std::thread;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Problem, RunConfig, RunResult};
use crate::monitor::Monitor;
use crate::store::Binding;

pub(crate) fn run(cfg: &RunConfig) -> RunResult {
    match cfg.problem {
        Problem::BoundedBuffer => bounded_buffer(cfg),
        Problem::ParamBoundedBuffer => param_bounded_buffer(cfg),
        Problem::SleepingBarber => sleeping_barber(cfg),
        Problem::H2O => h2o(cfg),
        Problem::RoundRobin => round_robin(cfg),
        Problem::ReadersWriters => readers_writers(cfg),
        Problem::DiningPhilosophers => dining_philosophers(cfg),
    }
}

/// Splits `total` into `parts` near-equal quotas.
pub(super) fn quotas(total: u64, parts: usize) -> Vec<u64> {
    let base = total / parts as u64;
    let extra = (total % parts as u64) as usize;
    (0..parts)
        .map(|i| base + u64::from(i < extra))
        .collect()
}

/// Producer/consumer ring buffer. `threads/2` producers each insert
/// `ops` distinct values; consumers drain them. Conservation is checked
/// against the closed form for the sum and xor of `1..=total`.
fn bounded_buffer(cfg: &RunConfig) -> RunResult {
    let cap = if cfg.capacity == 0 { 8 } else { cfg.capacity };
    let producers = cfg.threads / 2;
    let consumers = cfg.threads - producers;
    let total = producers as u64 * cfg.ops;
    let slot_names: Vec<String> = (0..cap).map(|i| format!("slot{i}")).collect();

    let mut b = Monitor::builder(cfg.mechanism)
        .var("count", 0)
        .var("head", 0)
        .var("tail", 0)
        .static_pred(&format!("count < {cap}"))
        .static_pred("count > 0");
    for name in &slot_names {
        b = b.var(name, 0);
    }
    let m = b.build().expect("bounded-buffer monitor");

    let barrier = Barrier::new(cfg.threads + 1);
    let mut wall = Instant::now().elapsed();
    let mut sum = 0i64;
    let mut xor = 0i64;
    thread::scope(|s| {
        let mut handles = Vec::new();
        for k in 0..producers {
            let (m, barrier, slot_names) = (&m, &barrier, &slot_names);
            s.spawn(move || {
                let not_full = m.prepare(&format!("count < {cap}")).unwrap();
                barrier.wait();
                for i in 0..cfg.ops {
                    let v = (k as u64 * cfg.ops + i + 1) as i64;
                    let mut g = m.enter();
                    g.waituntil_prepared(&not_full).unwrap();
                    let t = g.get_int("tail");
                    g.set_int(&slot_names[t as usize % cap], v);
                    g.set_int("tail", t + 1);
                    g.add("count", 1);
                }
            });
        }
        for quota in quotas(total, consumers) {
            let (m, barrier, slot_names) = (&m, &barrier, &slot_names);
            handles.push(s.spawn(move || {
                let not_empty = m.prepare("count > 0").unwrap();
                barrier.wait();
                let (mut sum, mut xor) = (0i64, 0i64);
                for _ in 0..quota {
                    let mut g = m.enter();
                    g.waituntil_prepared(&not_empty).unwrap();
                    let h = g.get_int("head");
                    let v = g.get_int(&slot_names[h as usize % cap]);
                    g.set_int("head", h + 1);
                    g.add("count", -1);
                    drop(g);
                    sum = sum.wrapping_add(v);
                    xor ^= v;
                }
                (sum, xor)
            }));
        }
        barrier.wait();
        let start = Instant::now();
        for h in handles {
            let (s, x) = h.join().unwrap();
            sum = sum.wrapping_add(s);
            xor ^= x;
        }
        wall = start.elapsed();
    });

    let (want_sum, want_xor) = (0..total as i64).fold((0i64, 0i64), |(s, x), v| {
        (s.wrapping_add(v + 1), x ^ (v + 1))
    });
    assert_eq!(sum, want_sum, "bounded-buffer lost or duplicated items");
    assert_eq!(xor, want_xor, "bounded-buffer corrupted items");
    let g = m.enter();
    assert_eq!(g.get_int("count"), 0);
    assert_eq!(g.get_int("head"), total as i64);
    assert_eq!(g.get_int("tail"), total as i64);
    drop(g);

    RunResult {
        wall,
        counters: m.stats(),
        digest: format!("items={total} sum={sum} xor={xor}"),
    }
}

/// One producer inserting random batches of 1..=128 items; every consumer
/// takes a random 1..=128 items per operation. Both waits are parameterized
/// by the thread's current size, so every blocked condition is distinct.
/// Take sizes come from per-thread seeded streams, so total demand is known
/// up front and the producer supplies exactly that much; capacity at least
/// twice the largest transfer guarantees progress.
fn param_bounded_buffer(cfg: &RunConfig) -> RunResult {
    let cap = if cfg.capacity == 0 { 256 } else { cfg.capacity };
    assert!(cap >= 256, "capacity must cover two maximal transfers");
    let consumers = cfg.threads - 1;
    let demand: u64 = (0..consumers)
        .map(|k| {
            let mut rng = consumer_rng(cfg.seed, k);
            (0..cfg.ops).map(|_| rng.gen_range(1..=128u64)).sum::<u64>()
        })
        .sum();

    let m = Monitor::builder(cfg.mechanism)
        .var("count", 0)
        .inactive_capacity(256)
        .build()
        .expect("param-bounded-buffer monitor");

    let barrier = Barrier::new(cfg.threads + 1);
    let mut wall = Instant::now().elapsed();
    thread::scope(|s| {
        let mut handles = Vec::new();
        {
            let (m, barrier) = (&m, &barrier);
            s.spawn(move || {
                let room = m.prepare_template(&format!("count <= {cap} - $batch")).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                barrier.wait();
                let mut remaining = demand;
                while remaining > 0 {
                    let batch = rng.gen_range(1..=128u64).min(remaining) as i64;
                    let w =
                        room.bind(Binding::new().with("batch", batch)).unwrap();
                    let mut g = m.enter();
                    g.waituntil_prepared(&w).unwrap();
                    g.add("count", batch);
                    drop(g);
                    remaining -= batch as u64;
                }
            });
        }
        for k in 0..consumers {
            let (m, barrier) = (&m, &barrier);
            handles.push(s.spawn(move || {
                let stocked = m.prepare_template("count >= $need").unwrap();
                let mut rng = consumer_rng(cfg.seed, k);
                barrier.wait();
                for _ in 0..cfg.ops {
                    let need = rng.gen_range(1..=128u64) as i64;
                    let w =
                        stocked.bind(Binding::new().with("need", need)).unwrap();
                    let mut g = m.enter();
                    g.waituntil_prepared(&w).unwrap();
                    g.add("count", -need);
                }
            }));
        }
        barrier.wait();
        let start = Instant::now();
        for h in handles {
            h.join().unwrap();
        }
        wall = start.elapsed();
    });

    let g = m.enter();
    assert_eq!(g.get_int("count"), 0, "param buffer did not drain");
    drop(g);

    RunResult {
        wall,
        counters: m.stats(),
        digest: format!("produced={demand} consumed={demand}"),
    }
}

/// Take-size stream of consumer `k`; shared with the producer-side demand
/// precomputation and the explicit implementation.
pub(super) fn consumer_rng(seed: u64, k: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// One barber serves customers strictly in arrival order; arrivals that
/// find every chair taken walk away and retry on their next round.
fn sleeping_barber(cfg: &RunConfig) -> RunResult {
    let chairs = if cfg.capacity == 0 { 8 } else { cfg.capacity } as i64;
    let customers = cfg.threads - 1;

    let m = Monitor::builder(cfg.mechanism)
        .var("queued", 0)
        .var("served", 0)
        .var("walkaways", 0)
        .flag("closing", false)
        .static_pred("queued > served || closing")
        .build()
        .expect("sleeping-barber monitor");

    let barrier = Barrier::new(cfg.threads + 1);
    let mut wall = Instant::now().elapsed();
    let mut cuts = 0u64;
    let mut walks = 0u64;
    let mut barber_cuts = 0u64;
    thread::scope(|s| {
        let barber = {
            let (m, barrier) = (&m, &barrier);
            s.spawn(move || {
                let work = m.prepare("queued > served || closing").unwrap();
                barrier.wait();
                let mut cuts = 0u64;
                loop {
                    let mut g = m.enter();
                    g.waituntil_prepared(&work).unwrap();
                    if g.get_int("queued") > g.get_int("served") {
                        g.add("served", 1);
                        cuts += 1;
                    } else {
                        break;
                    }
                }
                cuts
            })
        };
        let mut handles = Vec::new();
        for _ in 0..customers {
            let (m, barrier) = (&m, &barrier);
            handles.push(s.spawn(move || {
                let done = m.prepare_template("served >= $pos").unwrap();
                barrier.wait();
                let (mut cuts, mut walks) = (0u64, 0u64);
                for _ in 0..cfg.ops {
                    let mut g = m.enter();
                    let q = g.get_int("queued");
                    if q - g.get_int("served") >= chairs {
                        g.add("walkaways", 1);
                        walks += 1;
                        continue;
                    }
                    g.set_int("queued", q + 1);
                    let w = done.bind(Binding::new().with("pos", q + 1))
                        .unwrap();
                    g.waituntil_prepared(&w).unwrap();
                    cuts += 1;
                }
                (cuts, walks)
            }));
        }
        barrier.wait();
        let start = Instant::now();
        for h in handles {
            let (c, w) = h.join().unwrap();
            cuts += c;
            walks += w;
        }
        let mut g = m.enter();
        g.set_bool("closing", true);
        drop(g);
        barber_cuts = barber.join().unwrap();
        wall = start.elapsed();
    });

    let attempts = customers as u64 * cfg.ops;
    assert_eq!(cuts + walks, attempts);
    assert_eq!(barber_cuts, cuts, "barber and customers disagree on haircuts");
    let g = m.enter();
    assert_eq!(g.get_int("served"), cuts as i64);
    assert_eq!(g.get_int("queued"), cuts as i64);
    assert_eq!(g.get_int("walkaways"), walks as i64);
    drop(g);

    RunResult {
        wall,
        counters: m.stats(),
        digest: format!("haircuts={cuts} walkaways={walks} attempts={attempts}"),
    }
}

/// Each molecule: the oxygen opens two slots, two hydrogens each take one
/// and report in, the oxygen bonds and resets.
fn h2o(cfg: &RunConfig) -> RunResult {
    let hydrogens = cfg.threads - 1;
    let molecules = cfg.ops;

    let m = Monitor::builder(cfg.mechanism)
        .var("slots", 0)
        .var("arrived", 0)
        .var("bonded", 0)
        .static_pred("slots == 0 && arrived == 0")
        .static_pred("arrived == 2")
        .static_pred("slots >= 1")
        .build()
        .expect("h2o monitor");

    let barrier = Barrier::new(cfg.threads + 1);
    let mut wall = Instant::now().elapsed();
    thread::scope(|s| {
        let mut handles = Vec::new();
        {
            let (m, barrier) = (&m, &barrier);
            handles.push(s.spawn(move || {
                let idle = m.prepare("slots == 0 && arrived == 0").unwrap();
                let full = m.prepare("arrived == 2").unwrap();
                barrier.wait();
                for _ in 0..molecules {
                    let mut g = m.enter();
                    g.waituntil_prepared(&idle).unwrap();
                    g.set_int("slots", 2);
                    g.waituntil_prepared(&full).unwrap();
                    g.set_int("arrived", 0);
                    g.add("bonded", 1);
                }
            }));
        }
        for quota in quotas(2 * molecules, hydrogens) {
            let (m, barrier) = (&m, &barrier);
            handles.push(s.spawn(move || {
                let open = m.prepare("slots >= 1").unwrap();
                barrier.wait();
                for _ in 0..quota {
                    let mut g = m.enter();
                    g.waituntil_prepared(&open).unwrap();
                    g.add("slots", -1);
                    g.add("arrived", 1);
                }
            }));
        }
        barrier.wait();
        let start = Instant::now();
        for h in handles {
            h.join().unwrap();
        }
        wall = start.elapsed();
    });

    let g = m.enter();
    assert_eq!(g.get_int("bonded"), molecules as i64);
    assert_eq!(g.get_int("slots"), 0);
    assert_eq!(g.get_int("arrived"), 0);
    drop(g);

    RunResult {
        wall,
        counters: m.stats(),
        digest: format!("molecules={molecules}"),
    }
}

/// Strict round-robin: thread `me` waits for `turn == me`, takes a grant,
/// and passes the turn on. Grant order is checked inside the run.
fn round_robin(cfg: &RunConfig) -> RunResult {
    let n = cfg.threads;

    let m = Monitor::builder(cfg.mechanism)
        .var("turn", 0)
        .var("grants", 0)
        .build()
        .expect("round-robin monitor");

    let barrier = Barrier::new(n + 1);
    let mut wall = Instant::now().elapsed();
    let mut order_ok = true;
    thread::scope(|s| {
        let mut handles = Vec::new();
        for me in 0..n {
            let (m, barrier) = (&m, &barrier);
            handles.push(s.spawn(move || {
                let my_turn = m
                    .prepare_with("turn == $me", Binding::new().with("me", me as i64))
                    .unwrap();
                barrier.wait();
                let mut ok = true;
                for _ in 0..cfg.ops {
                    let mut g = m.enter();
                    g.waituntil_prepared(&my_turn).unwrap();
                    let gr = g.get_int("grants");
                    ok &= gr % n as i64 == me as i64;
                    g.set_int("grants", gr + 1);
                    g.set_int("turn", ((me + 1) % n) as i64);
                }
                ok
            }));
        }
        barrier.wait();
        let start = Instant::now();
        for h in handles {
            order_ok &= h.join().unwrap();
        }
        wall = start.elapsed();
    });

    assert!(order_ok, "a grant was taken out of turn");
    let total = n as u64 * cfg.ops;
    let g = m.enter();
    assert_eq!(g.get_int("grants"), total as i64);
    assert_eq!(g.get_int("turn"), 0);
    drop(g);

    RunResult {
        wall,
        counters: m.stats(),
        digest: format!("grants={total} order=ok"),
    }
}

/// Ticket-ordered readers/writers. Every thread draws a ticket; service is
/// strictly by ticket number. A reader admits the next ticket immediately
/// (reads overlap); a writer holds the door until it finishes.
fn readers_writers(cfg: &RunConfig) -> RunResult {
    let writers = (cfg.threads / 4).max(1);
    let readers = cfg.threads - writers;

    let m = Monitor::builder(cfg.mechanism)
        .var("next_ticket", 0)
        .var("now_serving", 0)
        .var("reading", 0)
        .var("writing", 0)
        .var("writes", 0)
        .build()
        .expect("readers-writers monitor");

    let barrier = Barrier::new(cfg.threads + 1);
    let mut wall = Instant::now().elapsed();
    thread::scope(|s| {
        let mut handles = Vec::new();
        for _ in 0..readers {
            let (m, barrier) = (&m, &barrier);
            handles.push(s.spawn(move || {
                let admit = m.prepare_template("now_serving == $t && writing == 0").unwrap();
                barrier.wait();
                for _ in 0..cfg.ops {
                    let mut g = m.enter();
                    let t = g.get_int("next_ticket");
                    g.set_int("next_ticket", t + 1);
                    let w = admit.bind(Binding::new().with("t", t)).unwrap();
                    g.waituntil_prepared(&w).unwrap();
                    assert_eq!(g.get_int("writing"), 0, "read admitted during a write");
                    g.add("reading", 1);
                    g.set_int("now_serving", t + 1);
                    drop(g);
                    // Off-monitor read work; lets the next tickets queue up.
                    thread::yield_now();
                    let mut g = m.enter();
                    g.add("reading", -1);
                    drop(g);
                }
            }));
        }
        for _ in 0..writers {
            let (m, barrier) = (&m, &barrier);
            handles.push(s.spawn(move || {
                let admit = m
                    .prepare_template("now_serving == $t && writing == 0 && reading == 0")
                    .unwrap();
                barrier.wait();
                for _ in 0..cfg.ops {
                    let mut g = m.enter();
                    let t = g.get_int("next_ticket");
                    g.set_int("next_ticket", t + 1);
                    let w = admit.bind(Binding::new().with("t", t)).unwrap();
                    g.waituntil_prepared(&w).unwrap();
                    assert_eq!(g.get_int("reading"), 0, "write admitted during reads");
                    assert_eq!(g.get_int("writing"), 0, "two writers admitted");
                    g.set_int("writing", 1);
                    g.set_int("now_serving", t + 1);
                    drop(g);
                    // Off-monitor write work.
                    thread::yield_now();
                    let mut g = m.enter();
                    g.set_int("writing", 0);
                    g.add("writes", 1);
                    drop(g);
                }
            }));
        }
        barrier.wait();
        let start = Instant::now();
        for h in handles {
            h.join().unwrap();
        }
        wall = start.elapsed();
    });

    let total = cfg.threads as u64 * cfg.ops;
    let g = m.enter();
    assert_eq!(g.get_int("next_ticket"), total as i64);
    assert_eq!(g.get_int("now_serving"), total as i64);
    assert_eq!(g.get_int("reading"), 0);
    assert_eq!(g.get_int("writing"), 0);
    assert_eq!(g.get_int("writes"), (writers as u64 * cfg.ops) as i64);
    drop(g);

    RunResult {
        wall,
        counters: m.stats(),
        digest: format!("tickets={total} writes={}", writers as u64 * cfg.ops),
    }
}

/// Each philosopher atomically waits for both adjacent sticks, takes them,
/// eats outside the monitor, and puts them back.
fn dining_philosophers(cfg: &RunConfig) -> RunResult {
    let n = cfg.threads;
    let stick_names: Vec<String> = (0..n).map(|i| format!("stick{i}")).collect();

    let mut b = Monitor::builder(cfg.mechanism).var("meals", 0);
    for name in &stick_names {
        b = b.var(name, 1);
    }
    for i in 0..n {
        b = b.static_pred(&format!("stick{i} == 1 && stick{} == 1", (i + 1) % n));
    }
    let m = b.build().expect("dining-philosophers monitor");

    let barrier = Barrier::new(n + 1);
    let mut wall = Instant::now().elapsed();
    thread::scope(|s| {
        let mut handles = Vec::new();
        for i in 0..n {
            let (m, barrier, stick_names) = (&m, &barrier, &stick_names);
            handles.push(s.spawn(move || {
                let (si, sj) = (&stick_names[i], &stick_names[(i + 1) % n]);
                let both = m.prepare(&format!("{si} == 1 && {sj} == 1")).unwrap();
                barrier.wait();
                for _ in 0..cfg.ops {
                    let mut g = m.enter();
                    g.waituntil_prepared(&both).unwrap();
                    g.set_int(si, 0);
                    g.set_int(sj, 0);
                    drop(g);
                    let mut g = m.enter();
                    g.set_int(si, 1);
                    g.set_int(sj, 1);
                    g.add("meals", 1);
                }
            }));
        }
        barrier.wait();
        let start = Instant::now();
        for h in handles {
            h.join().unwrap();
        }
        wall = start.elapsed();
    });

    let total = n as u64 * cfg.ops;
    let g = m.enter();
    assert_eq!(g.get_int("meals"), total as i64);
    for name in &stick_names {
        assert_eq!(g.get_int(name), 1, "{name} not returned");
    }
    drop(g);

    RunResult {
        wall,
        counters: m.stats(),
        digest: format!("meals={total}"),
    }
}
