//! Hand-written mutex/condvar implementations of the benchmark problems.
//!
//! These are the reference points the monitor mechanisms are measured
//! against: condition variables chosen by hand, signaled at hand-picked
//! places. Most use precise wakeups (per-thread or per-ticket condition
//! variables); the parameterized buffer deliberately uses the common
//! broadcast-on-both-sides pattern, which is what a straightforward
//! implementation of batch waits looks like. Each implementation counts
//! its own waits, wakeups, futile wakeups, signals, broadcasts, and
//! condition evaluations into [`Counters`] under the same lock that
//! protects the shared state.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Barrier};
use std::thread;
use std::time::Instant;

use parking_lot::{Condvar, Mutex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::problems::{self, quotas};
use super::{Problem, RunConfig, RunResult};
use crate::manager::Counters;

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

fn bounded_buffer(cfg: &RunConfig) -> RunResult {
    let cap = if cfg.capacity == 0 { 8 } else { cfg.capacity };
    let producers = cfg.threads / 2;
    let consumers = cfg.threads - producers;
    let total = producers as u64 * cfg.ops;

    struct State {
        count: usize,
        head: u64,
        tail: u64,
        slots: Vec<i64>,
        stats: Counters,
    }
    let state = Mutex::new(State {
        count: 0,
        head: 0,
        tail: 0,
        slots: vec![0; cap],
        stats: Counters::default(),
    });
    let not_full = Condvar::new();
    let not_empty = Condvar::new();

    let barrier = Barrier::new(cfg.threads + 1);
    let mut wall = Instant::now().elapsed();
    let mut sum = 0i64;
    let mut xor = 0i64;
    thread::scope(|s| {
        let mut handles = Vec::new();
        for k in 0..producers {
            let (state, not_full, not_empty, barrier) = (&state, &not_full, &not_empty, &barrier);
            s.spawn(move || {
                barrier.wait();
                for i in 0..cfg.ops {
                    let v = (k as u64 * cfg.ops + i + 1) as i64;
                    let mut st = state.lock();
                    st.stats.waits += 1;
                    st.stats.preds_evaluated += 1;
                    while st.count == cap {
                        not_full.wait(&mut st);
                        st.stats.wakeups += 1;
                        st.stats.preds_evaluated += 1;
                        if st.count == cap {
                            st.stats.futile_wakeups += 1;
                        }
                    }
                    let t = st.tail as usize % cap;
                    st.slots[t] = v;
                    st.tail += 1;
                    st.count += 1;
                    st.stats.signals += 1;
                    not_empty.notify_one();
                }
            });
        }
        for quota in quotas(total, consumers) {
            let (state, not_full, not_empty, barrier) = (&state, &not_full, &not_empty, &barrier);
            handles.push(s.spawn(move || {
                barrier.wait();
                let (mut sum, mut xor) = (0i64, 0i64);
                for _ in 0..quota {
                    let mut st = state.lock();
                    st.stats.waits += 1;
                    st.stats.preds_evaluated += 1;
                    while st.count == 0 {
                        not_empty.wait(&mut st);
                        st.stats.wakeups += 1;
                        st.stats.preds_evaluated += 1;
                        if st.count == 0 {
                            st.stats.futile_wakeups += 1;
                        }
                    }
                    let h = st.head as usize % cap;
                    let v = st.slots[h];
                    st.head += 1;
                    st.count -= 1;
                    st.stats.signals += 1;
                    not_full.notify_one();
                    drop(st);
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

    let st = state.into_inner();
    let (want_sum, want_xor) = (0..total as i64).fold((0i64, 0i64), |(s, x), v| {
        (s.wrapping_add(v + 1), x ^ (v + 1))
    });
    assert_eq!(sum, want_sum, "bounded-buffer lost or duplicated items");
    assert_eq!(xor, want_xor, "bounded-buffer corrupted items");
    assert_eq!(st.count, 0);
    assert_eq!(st.head, total);
    assert_eq!(st.tail, total);

    RunResult {
        wall,
        counters: st.stats,
        digest: format!("items={total} sum={sum} xor={xor}"),
    }
}

/// Variable-size transfers mean a waiter's wake condition depends on its own
/// number, which a condition variable cannot express: both sides must
/// broadcast and every sleeper rechecks its own threshold.
fn param_bounded_buffer(cfg: &RunConfig) -> RunResult {
    let cap = if cfg.capacity == 0 { 256 } else { cfg.capacity } as i64;
    assert!(cap >= 256, "capacity must cover two maximal transfers");
    let consumers = cfg.threads - 1;
    let demand: u64 = (0..consumers)
        .map(|k| {
            let mut rng = problems::consumer_rng(cfg.seed, k);
            (0..cfg.ops).map(|_| rng.gen_range(1..=128u64)).sum::<u64>()
        })
        .sum();

    struct State {
        count: i64,
        stats: Counters,
    }
    let state = Mutex::new(State {
        count: 0,
        stats: Counters::default(),
    });
    let space_freed = Condvar::new();
    let items_added = Condvar::new();

    let barrier = Barrier::new(cfg.threads + 1);
    let mut wall = Instant::now().elapsed();
    thread::scope(|s| {
        let mut handles = Vec::new();
        {
            let (state, space_freed, items_added, barrier) =
                (&state, &space_freed, &items_added, &barrier);
            s.spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                barrier.wait();
                let mut remaining = demand;
                while remaining > 0 {
                    let batch = rng.gen_range(1..=128u64).min(remaining) as i64;
                    let mut st = state.lock();
                    st.stats.waits += 1;
                    st.stats.preds_evaluated += 1;
                    while st.count > cap - batch {
                        space_freed.wait(&mut st);
                        st.stats.wakeups += 1;
                        st.stats.preds_evaluated += 1;
                        if st.count > cap - batch {
                            st.stats.futile_wakeups += 1;
                        }
                    }
                    st.count += batch;
                    st.stats.broadcasts += 1;
                    items_added.notify_all();
                    drop(st);
                    remaining -= batch as u64;
                }
            });
        }
        for k in 0..consumers {
            let (state, space_freed, items_added, barrier) =
                (&state, &space_freed, &items_added, &barrier);
            handles.push(s.spawn(move || {
                let mut rng = problems::consumer_rng(cfg.seed, k);
                barrier.wait();
                for _ in 0..cfg.ops {
                    let need = rng.gen_range(1..=128u64) as i64;
                    let mut st = state.lock();
                    st.stats.waits += 1;
                    st.stats.preds_evaluated += 1;
                    while st.count < need {
                        items_added.wait(&mut st);
                        st.stats.wakeups += 1;
                        st.stats.preds_evaluated += 1;
                        if st.count < need {
                            st.stats.futile_wakeups += 1;
                        }
                    }
                    st.count -= need;
                    st.stats.broadcasts += 1;
                    space_freed.notify_all();
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

    let st = state.into_inner();
    assert_eq!(st.count, 0, "param buffer did not drain");

    RunResult {
        wall,
        counters: st.stats,
        digest: format!("produced={demand} consumed={demand}"),
    }
}

fn sleeping_barber(cfg: &RunConfig) -> RunResult {
    let chairs = if cfg.capacity == 0 { 8 } else { cfg.capacity } as i64;
    let customers = cfg.threads - 1;

    struct State {
        queued: i64,
        served: i64,
        walkaways: i64,
        closing: bool,
        // Chair occupants in arrival order; the barber wakes the front.
        waiting: VecDeque<Arc<Condvar>>,
        stats: Counters,
    }
    let state = Mutex::new(State {
        queued: 0,
        served: 0,
        walkaways: 0,
        closing: false,
        waiting: VecDeque::new(),
        stats: Counters::default(),
    });
    let arrival = Condvar::new();

    let barrier = Barrier::new(cfg.threads + 1);
    let mut wall = Instant::now().elapsed();
    let mut cuts = 0u64;
    let mut walks = 0u64;
    let mut barber_cuts = 0u64;
    thread::scope(|s| {
        let barber = {
            let (state, arrival, barrier) = (&state, &arrival, &barrier);
            s.spawn(move || {
                barrier.wait();
                let mut cuts = 0u64;
                loop {
                    let mut st = state.lock();
                    st.stats.waits += 1;
                    st.stats.preds_evaluated += 1;
                    while st.queued == st.served && !st.closing {
                        arrival.wait(&mut st);
                        st.stats.wakeups += 1;
                        st.stats.preds_evaluated += 1;
                        if st.queued == st.served && !st.closing {
                            st.stats.futile_wakeups += 1;
                        }
                    }
                    if st.queued > st.served {
                        let cv = st.waiting.pop_front().expect("queued customer has a seat");
                        st.served += 1;
                        cuts += 1;
                        st.stats.signals += 1;
                        cv.notify_one();
                    } else {
                        break;
                    }
                }
                cuts
            })
        };
        let mut handles = Vec::new();
        for _ in 0..customers {
            let (state, arrival, barrier) = (&state, &arrival, &barrier);
            handles.push(s.spawn(move || {
                barrier.wait();
                let (mut cuts, mut walks) = (0u64, 0u64);
                for _ in 0..cfg.ops {
                    let mut st = state.lock();
                    if st.queued - st.served >= chairs {
                        st.walkaways += 1;
                        walks += 1;
                        continue;
                    }
                    st.queued += 1;
                    let pos = st.queued;
                    let cv = Arc::new(Condvar::new());
                    st.waiting.push_back(cv.clone());
                    st.stats.signals += 1;
                    arrival.notify_one();
                    st.stats.waits += 1;
                    st.stats.preds_evaluated += 1;
                    while st.served < pos {
                        cv.wait(&mut st);
                        st.stats.wakeups += 1;
                        st.stats.preds_evaluated += 1;
                        if st.served < pos {
                            st.stats.futile_wakeups += 1;
                        }
                    }
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
        {
            let mut st = state.lock();
            st.closing = true;
            st.stats.signals += 1;
            arrival.notify_one();
        }
        barber_cuts = barber.join().unwrap();
        wall = start.elapsed();
    });

    let attempts = customers as u64 * cfg.ops;
    assert_eq!(cuts + walks, attempts);
    assert_eq!(barber_cuts, cuts, "barber and customers disagree on haircuts");
    let st = state.into_inner();
    assert_eq!(st.served, cuts as i64);
    assert_eq!(st.queued, cuts as i64);
    assert_eq!(st.walkaways, walks as i64);
    assert!(st.waiting.is_empty());

    RunResult {
        wall,
        counters: st.stats,
        digest: format!("haircuts={cuts} walkaways={walks} attempts={attempts}"),
    }
}

fn h2o(cfg: &RunConfig) -> RunResult {
    let hydrogens = cfg.threads - 1;
    let molecules = cfg.ops;

    struct State {
        slots: i64,
        arrived: i64,
        bonded: i64,
        stats: Counters,
    }
    let state = Mutex::new(State {
        slots: 0,
        arrived: 0,
        bonded: 0,
        stats: Counters::default(),
    });
    let slot_open = Condvar::new();
    let pair_ready = Condvar::new();

    let barrier = Barrier::new(cfg.threads + 1);
    let mut wall = Instant::now().elapsed();
    thread::scope(|s| {
        let mut handles = Vec::new();
        {
            let (state, slot_open, pair_ready, barrier) =
                (&state, &slot_open, &pair_ready, &barrier);
            handles.push(s.spawn(move || {
                barrier.wait();
                for _ in 0..molecules {
                    let mut st = state.lock();
                    assert!(st.slots == 0 && st.arrived == 0, "previous molecule unfinished");
                    st.slots = 2;
                    st.stats.signals += 2;
                    slot_open.notify_one();
                    slot_open.notify_one();
                    st.stats.waits += 1;
                    st.stats.preds_evaluated += 1;
                    while st.arrived < 2 {
                        pair_ready.wait(&mut st);
                        st.stats.wakeups += 1;
                        st.stats.preds_evaluated += 1;
                        if st.arrived < 2 {
                            st.stats.futile_wakeups += 1;
                        }
                    }
                    st.arrived = 0;
                    st.bonded += 1;
                }
            }));
        }
        for quota in quotas(2 * molecules, hydrogens) {
            let (state, slot_open, pair_ready, barrier) =
                (&state, &slot_open, &pair_ready, &barrier);
            handles.push(s.spawn(move || {
                barrier.wait();
                for _ in 0..quota {
                    let mut st = state.lock();
                    st.stats.waits += 1;
                    st.stats.preds_evaluated += 1;
                    while st.slots == 0 {
                        slot_open.wait(&mut st);
                        st.stats.wakeups += 1;
                        st.stats.preds_evaluated += 1;
                        if st.slots == 0 {
                            st.stats.futile_wakeups += 1;
                        }
                    }
                    st.slots -= 1;
                    st.arrived += 1;
                    if st.arrived == 2 {
                        st.stats.signals += 1;
                        pair_ready.notify_one();
                    }
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

    let st = state.into_inner();
    assert_eq!(st.bonded, molecules as i64);
    assert_eq!(st.slots, 0);
    assert_eq!(st.arrived, 0);

    RunResult {
        wall,
        counters: st.stats,
        digest: format!("molecules={molecules}"),
    }
}

fn round_robin(cfg: &RunConfig) -> RunResult {
    let n = cfg.threads;

    struct State {
        turn: usize,
        grants: i64,
        stats: Counters,
    }
    let state = Mutex::new(State {
        turn: 0,
        grants: 0,
        stats: Counters::default(),
    });
    let turn_cvs: Vec<Condvar> = (0..n).map(|_| Condvar::new()).collect();

    let barrier = Barrier::new(n + 1);
    let mut wall = Instant::now().elapsed();
    let mut order_ok = true;
    thread::scope(|s| {
        let mut handles = Vec::new();
        for me in 0..n {
            let (state, turn_cvs, barrier) = (&state, &turn_cvs, &barrier);
            handles.push(s.spawn(move || {
                barrier.wait();
                let mut ok = true;
                for _ in 0..cfg.ops {
                    let mut st = state.lock();
                    st.stats.waits += 1;
                    st.stats.preds_evaluated += 1;
                    while st.turn != me {
                        turn_cvs[me].wait(&mut st);
                        st.stats.wakeups += 1;
                        st.stats.preds_evaluated += 1;
                        if st.turn != me {
                            st.stats.futile_wakeups += 1;
                        }
                    }
                    ok &= st.grants % n as i64 == me as i64;
                    st.grants += 1;
                    st.turn = (me + 1) % n;
                    st.stats.signals += 1;
                    turn_cvs[st.turn].notify_one();
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
    let st = state.into_inner();
    assert_eq!(st.grants, total as i64);
    assert_eq!(st.turn, 0);

    RunResult {
        wall,
        counters: st.stats,
        digest: format!("grants={total} order=ok"),
    }
}

fn readers_writers(cfg: &RunConfig) -> RunResult {
    let writers = (cfg.threads / 4).max(1);
    let readers = cfg.threads - writers;

    struct State {
        next_ticket: i64,
        now_serving: i64,
        reading: i64,
        writing: i64,
        writes: i64,
        // Still-blocked ticket holders: ticket -> (is_writer, their condvar).
        queue: HashMap<i64, (bool, Arc<Condvar>)>,
        stats: Counters,
    }
    let state = Mutex::new(State {
        next_ticket: 0,
        now_serving: 0,
        reading: 0,
        writing: 0,
        writes: 0,
        queue: HashMap::new(),
        stats: Counters::default(),
    });

    // Wakes the holder of the serving ticket if its admit condition holds.
    fn wake_next(st: &mut State) {
        if let Some((is_writer, cv)) = st.queue.get(&st.now_serving) {
            let ready = if *is_writer {
                st.reading == 0 && st.writing == 0
            } else {
                st.writing == 0
            };
            if ready {
                let cv = cv.clone();
                st.stats.signals += 1;
                cv.notify_one();
            }
        }
    }

    let barrier = Barrier::new(cfg.threads + 1);
    let mut wall = Instant::now().elapsed();
    thread::scope(|s| {
        let mut handles = Vec::new();
        for _ in 0..readers {
            let (state, barrier) = (&state, &barrier);
            handles.push(s.spawn(move || {
                barrier.wait();
                for _ in 0..cfg.ops {
                    let mut st = state.lock();
                    let t = st.next_ticket;
                    st.next_ticket += 1;
                    st.stats.waits += 1;
                    st.stats.preds_evaluated += 1;
                    if !(st.now_serving == t && st.writing == 0) {
                        let cv = Arc::new(Condvar::new());
                        st.queue.insert(t, (false, cv.clone()));
                        while !(st.now_serving == t && st.writing == 0) {
                            cv.wait(&mut st);
                            st.stats.wakeups += 1;
                            st.stats.preds_evaluated += 1;
                            if !(st.now_serving == t && st.writing == 0) {
                                st.stats.futile_wakeups += 1;
                            }
                        }
                        st.queue.remove(&t);
                    }
                    assert_eq!(st.writing, 0, "read admitted during a write");
                    st.reading += 1;
                    st.now_serving = t + 1;
                    wake_next(&mut st);
                    drop(st);
                    // Off-monitor read work; lets the next tickets queue up.
                    thread::yield_now();
                    let mut st = state.lock();
                    st.reading -= 1;
                    if st.reading == 0 {
                        wake_next(&mut st);
                    }
                }
            }));
        }
        for _ in 0..writers {
            let (state, barrier) = (&state, &barrier);
            handles.push(s.spawn(move || {
                barrier.wait();
                for _ in 0..cfg.ops {
                    let mut st = state.lock();
                    let t = st.next_ticket;
                    st.next_ticket += 1;
                    st.stats.waits += 1;
                    st.stats.preds_evaluated += 1;
                    let admitted =
                        |st: &State| st.now_serving == t && st.writing == 0 && st.reading == 0;
                    if !admitted(&st) {
                        let cv = Arc::new(Condvar::new());
                        st.queue.insert(t, (true, cv.clone()));
                        while !admitted(&st) {
                            cv.wait(&mut st);
                            st.stats.wakeups += 1;
                            st.stats.preds_evaluated += 1;
                            if !admitted(&st) {
                                st.stats.futile_wakeups += 1;
                            }
                        }
                        st.queue.remove(&t);
                    }
                    assert_eq!(st.reading, 0, "write admitted during reads");
                    assert_eq!(st.writing, 0, "two writers admitted");
                    st.writing = 1;
                    st.now_serving = t + 1;
                    drop(st);
                    // Off-monitor write work.
                    thread::yield_now();
                    let mut st = state.lock();
                    st.writing = 0;
                    st.writes += 1;
                    wake_next(&mut st);
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
    let st = state.into_inner();
    assert_eq!(st.next_ticket, total as i64);
    assert_eq!(st.now_serving, total as i64);
    assert_eq!(st.reading, 0);
    assert_eq!(st.writing, 0);
    assert_eq!(st.writes, (writers as u64 * cfg.ops) as i64);
    assert!(st.queue.is_empty());

    RunResult {
        wall,
        counters: st.stats,
        digest: format!("tickets={total} writes={}", writers as u64 * cfg.ops),
    }
}

fn dining_philosophers(cfg: &RunConfig) -> RunResult {
    let n = cfg.threads;

    struct State {
        sticks: Vec<i64>,
        meals: i64,
        stats: Counters,
    }
    let state = Mutex::new(State {
        sticks: vec![1; n],
        meals: 0,
        stats: Counters::default(),
    });
    let phil_cvs: Vec<Condvar> = (0..n).map(|_| Condvar::new()).collect();

    let barrier = Barrier::new(n + 1);
    let mut wall = Instant::now().elapsed();
    thread::scope(|s| {
        let mut handles = Vec::new();
        for i in 0..n {
            let (state, phil_cvs, barrier) = (&state, &phil_cvs, &barrier);
            handles.push(s.spawn(move || {
                let j = (i + 1) % n;
                barrier.wait();
                for _ in 0..cfg.ops {
                    let mut st = state.lock();
                    st.stats.waits += 1;
                    st.stats.preds_evaluated += 1;
                    while !(st.sticks[i] == 1 && st.sticks[j] == 1) {
                        phil_cvs[i].wait(&mut st);
                        st.stats.wakeups += 1;
                        st.stats.preds_evaluated += 1;
                        if !(st.sticks[i] == 1 && st.sticks[j] == 1) {
                            st.stats.futile_wakeups += 1;
                        }
                    }
                    st.sticks[i] = 0;
                    st.sticks[j] = 0;
                    drop(st);
                    let mut st = state.lock();
                    st.sticks[i] = 1;
                    st.sticks[j] = 1;
                    st.meals += 1;
                    for nb in [(i + n - 1) % n, j] {
                        let (a, b) = (nb, (nb + 1) % n);
                        if st.sticks[a] == 1 && st.sticks[b] == 1 {
                            st.stats.signals += 1;
                            phil_cvs[nb].notify_one();
                        }
                    }
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
    let st = state.into_inner();
    assert_eq!(st.meals, total as i64);
    assert!(st.sticks.iter().all(|&s| s == 1), "a stick went missing");

    RunResult {
        wall,
        counters: st.stats,
        digest: format!("meals={total}"),
    }
}
