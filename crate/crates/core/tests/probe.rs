//! Throwaway timing probe; not part of the suite.

use std::time::Instant;

use automon::{Binding, Mechanism, Monitor, Wait, WaitTemplate};

#[test]
#[ignore]
fn case7() {
    use automon::testgen::random_wait_case;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xb1bd);
    for _ in 0..7 {
        random_wait_case(&mut rng);
    }
    let (pred, binding) = random_wait_case(&mut rng);
    println!("pred: {pred}");
    println!("binding: {binding:?}");
    let direct = Wait::new(pred.clone(), binding.clone()).unwrap();
    let templ = WaitTemplate::new(pred.clone())
        .unwrap()
        .bind(binding.clone())
        .unwrap();
    println!("direct:   {}", direct.key().pred());
    println!("template: {}", templ.key().pred());
}

#[test]
#[ignore]
fn wait_new_cost() {
    let m = Monitor::builder(Mechanism::Auto)
        .var("served", 0)
        .var("queued", 0)
        .flag("closing", false)
        .build()
        .unwrap();
    let pred = m.compile("served >= $pos").unwrap();

    let n = 200_000i64;
    let start = Instant::now();
    let mut keep = 0usize;
    for i in 0..n {
        let w = Wait::new(pred.clone(), Binding::new().with("pos", i)).unwrap();
        keep += w.key().pred().conjunctions.len();
    }
    let dt = start.elapsed();
    println!(
        "Wait::new: {:.0} ns/op ({keep})",
        dt.as_nanos() as f64 / n as f64
    );

    // Same, for the two-conjunction barber pred.
    let pred2 = m.compile("queued > served || closing").unwrap();
    let start = Instant::now();
    for _ in 0..n {
        let w = Wait::new(pred2.clone(), Binding::new()).unwrap();
        keep += w.key().pred().conjunctions.len();
    }
    let dt = start.elapsed();
    println!(
        "Wait::new shared 2-conj: {:.0} ns/op ({keep})",
        dt.as_nanos() as f64 / n as f64
    );

    let t = WaitTemplate::new(pred.clone()).unwrap();
    let start = Instant::now();
    for i in 0..n {
        let w = t.bind(Binding::new().with("pos", i)).unwrap();
        keep += w.key().pred().conjunctions.len();
    }
    let dt = start.elapsed();
    println!(
        "template bind: {:.0} ns/op ({keep})",
        dt.as_nanos() as f64 / n as f64
    );

    let t2 = WaitTemplate::new(pred2.clone()).unwrap();
    let start = Instant::now();
    for _ in 0..n {
        let w = t2.bind(Binding::new()).unwrap();
        keep += w.key().pred().conjunctions.len();
    }
    let dt = start.elapsed();
    println!(
        "template bind shared 2-conj: {:.0} ns/op ({keep})",
        dt.as_nanos() as f64 / n as f64
    );

    // Uncontended waituntil_prepared when the predicate is already true.
    let w = Wait::new(
        m.compile("served >= $pos").unwrap(),
        Binding::new().with("pos", -1),
    )
    .unwrap();
    let start = Instant::now();
    for _ in 0..n {
        let mut g = m.enter();
        g.waituntil_prepared(&w).unwrap();
    }
    let dt = start.elapsed();
    println!(
        "enter+true wait+exit: {:.0} ns/op",
        dt.as_nanos() as f64 / n as f64
    );

    // Set + exit (relay with nobody waiting).
    let start = Instant::now();
    for i in 0..n {
        let mut g = m.enter();
        g.set_int("served", i);
    }
    let dt = start.elapsed();
    println!(
        "enter+set+exit relay: {:.0} ns/op",
        dt.as_nanos() as f64 / n as f64
    );
}

#[test]
#[ignore]
fn barber_ratio() {
    use automon::{run_trimmed, Problem, RunConfig};
    let mut cfg = RunConfig::new(Problem::SleepingBarber, Mechanism::Auto, 32, 5_000);
    cfg.seed = 3;
    let auto = run_trimmed(&cfg, 7);
    cfg.mechanism = Mechanism::Explicit;
    let explicit = run_trimmed(&cfg, 7);
    println!(
        "auto {:.4}s explicit {:.4}s ratio {:.2}x",
        auto.trimmed_mean_s,
        explicit.trimmed_mean_s,
        auto.trimmed_mean_s / explicit.trimmed_mean_s
    );
}

#[test]
#[ignore]
fn barber_counters() {
    use automon::{run_once, Problem, RunConfig};
    let mut cfg = RunConfig::new(Problem::SleepingBarber, Mechanism::Auto, 32, 5_000);
    cfg.seed = 3;
    let r = run_once(&cfg);
    println!("auto wall {:?}\n{:#?}\n{}", r.wall, r.counters, r.digest);
    cfg.mechanism = Mechanism::Explicit;
    let r = run_once(&cfg);
    println!("explicit wall {:?}\n{:#?}\n{}", r.wall, r.counters, r.digest);
}
