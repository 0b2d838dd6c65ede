//! Command-line workbench for the monitor runtime: run benchmark
//! workloads, model-check scenarios, and explain how a wait condition is
//! normalized and indexed.

use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use automon::predicate::{classify, eval_pred, to_dnf, PredClass};
use automon::store::VarDecls;
use automon::tagging::tag_canonical;
use automon::verifier::{by_name, scenario_names, Mode, Verifier, VerifyOptions};
use automon::{
    canonical_key, globalize, parse_pred, run_trimmed, Binding, Domain, Mechanism, Problem,
    RunConfig, Store, Value, CSV_HEADER,
};

#[derive(Parser)]
#[command(
    name = "automon",
    version,
    about = "Automatic-signal monitors: benchmarks, model checking, predicate inspection"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one workload configuration and report timing and counters.
    Bench(BenchArgs),
    /// Run every problem under every mechanism; prints CSV.
    BenchAll(BenchAllArgs),
    /// Model-check a scenario within a bound.
    Verify(VerifyArgs),
    /// List the scenarios `verify` knows.
    Scenarios,
    /// Show how a wait condition is parsed, globalized, canonicalized,
    /// and tagged — and what it evaluates to, if values are given.
    Explain(ExplainArgs),
}

#[derive(Args)]
struct BenchArgs {
    /// Workload (see `bench-all` output or the README for names).
    #[arg(long)]
    problem: Problem,
    /// explicit, baseline, auto-notags, or auto.
    #[arg(long)]
    mechanism: Mechanism,
    #[arg(long, default_value_t = 32)]
    threads: usize,
    /// Operations per worker (role-dependent; see the problem docs).
    #[arg(long, default_value_t = 1000)]
    ops: u64,
    /// Repetitions; the best and worst run are dropped from the mean.
    #[arg(long, default_value_t = 25)]
    runs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Buffer capacity / chair count; 0 = problem default.
    #[arg(long, default_value_t = 0)]
    capacity: usize,
    /// Emit one CSV row (with header) instead of the human summary.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct BenchAllArgs {
    #[arg(long, default_value_t = 8)]
    threads: usize,
    #[arg(long, default_value_t = 200)]
    ops: u64,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct VerifyArgs {
    /// Scenario name (see `scenarios`).
    #[arg(long)]
    scenario: String,
    /// Problem size (items, rounds, customers — scenario-dependent).
    #[arg(long, default_value_t = 2)]
    bound: usize,
    /// Sample random schedules instead of exhausting the state space.
    #[arg(long)]
    random: bool,
    #[arg(long, default_value_t = 7, requires = "random")]
    seed: u64,
    #[arg(long, default_value_t = 2000, requires = "random")]
    trials: u32,
    /// Count complete executions exactly (no state deduplication).
    #[arg(long, conflicts_with = "random")]
    count_paths: bool,
    /// Bug switch: skip the relay when a thread leaves the monitor. The
    /// verifier is expected to report lost wakeups.
    #[arg(long)]
    no_exit_relay: bool,
}

#[derive(Args)]
struct ExplainArgs {
    /// The wait condition, e.g. 'count <= 8 - $batch'.
    pred: String,
    /// Shared integer variables the condition may read.
    #[arg(long = "int", value_name = "NAME")]
    ints: Vec<String>,
    /// Shared boolean variables the condition may read.
    #[arg(long = "bool", value_name = "NAME")]
    bools: Vec<String>,
    /// Bind a local (`x=3`) or give a shared variable a trial value for
    /// evaluation (`count=7`, `closing=true`).
    #[arg(long = "let", value_name = "NAME=VALUE")]
    lets: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Bench(a) => bench(&a),
        Cmd::BenchAll(a) => bench_all(&a),
        Cmd::Verify(a) => verify(&a),
        Cmd::Scenarios => {
            for name in scenario_names() {
                println!("{name}");
            }
            Ok(true)
        }
        Cmd::Explain(a) => explain(&a).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn bench(a: &BenchArgs) -> Result<bool> {
    let cfg = RunConfig {
        problem: a.problem,
        mechanism: a.mechanism,
        threads: a.threads,
        ops: a.ops,
        capacity: a.capacity,
        seed: a.seed,
    };
    if a.threads < a.problem.min_threads() {
        bail!("{} needs at least {} threads", a.problem, a.problem.min_threads());
    }
    let s = run_trimmed(&cfg, a.runs.max(1));
    if a.csv {
        println!("{CSV_HEADER}");
        println!("{}", s.csv_row());
    } else {
        println!(
            "{} / {}: threads={} ops={} runs={} seed={}",
            s.problem, s.mechanism, s.threads, s.ops, s.runs, s.seed
        );
        println!("  wall (trimmed mean): {:.6} s", s.trimmed_mean_s);
        let c = &s.counters;
        println!(
            "  signals={} broadcasts={} preds_evaluated={} (preds/signal {:.2})",
            c.signals,
            c.broadcasts,
            c.preds_evaluated,
            c.preds_per_signal()
        );
        println!(
            "  waits={} wakeups={} futile={} hash_probes={} heap_polls={}",
            c.waits, c.wakeups, c.futile_wakeups, c.hash_probes, c.heap_polls
        );
        println!(
            "  records: created={} reused={} evicted={}",
            c.records_created, c.records_reused, c.records_evicted
        );
        println!("  digest: {}", s.digest);
    }
    Ok(true)
}

fn bench_all(a: &BenchAllArgs) -> Result<bool> {
    println!("{CSV_HEADER}");
    for problem in Problem::ALL {
        for mechanism in Mechanism::ALL {
            let cfg = RunConfig {
                problem,
                mechanism,
                threads: a.threads.max(problem.min_threads()),
                ops: a.ops,
                capacity: 0,
                seed: a.seed,
            };
            let s = run_trimmed(&cfg, a.runs.max(1));
            println!("{}", s.csv_row());
        }
    }
    Ok(true)
}

fn verify(a: &VerifyArgs) -> Result<bool> {
    let scenario = by_name(&a.scenario, a.bound).ok_or_else(|| {
        anyhow!(
            "unknown scenario `{}` (known: {})",
            a.scenario,
            scenario_names().join(", ")
        )
    })?;
    let options = VerifyOptions {
        mode: if a.random {
            Mode::Random {
                seed: a.seed,
                trials: a.trials,
            }
        } else {
            Mode::Exhaustive {
                count_paths: a.count_paths,
            }
        },
        relay_on_exit: !a.no_exit_relay,
        ..VerifyOptions::default()
    };
    let verifier = Verifier::new(&scenario, options).context("building the scenario")?;
    let report = verifier.run().context("running the verifier")?;
    println!("{}: {report}", a.scenario);
    Ok(report.ok())
}

fn explain(a: &ExplainArgs) -> Result<()> {
    let mut decls = VarDecls::new();
    for name in &a.ints {
        decls.declare(name, Domain::Int);
    }
    for name in &a.bools {
        decls.declare(name, Domain::Bool);
    }

    let mut binding = Binding::new();
    let mut trial = Store::new();
    for kv in &a.lets {
        let (name, raw) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("--let takes NAME=VALUE, got `{kv}`"))?;
        let value = match raw {
            "true" => Value::Bool(true),
            "false" => Value::Bool(false),
            _ => Value::Int(raw.parse().with_context(|| format!("value of `{name}`"))?),
        };
        if decls.domain_of(name).is_some() {
            trial.declare(name, value)?;
        } else {
            binding = binding.with(name, value);
        }
    }

    let pred = parse_pred(&a.pred, &decls)
        .map_err(|e| anyhow!("{e}"))
        .context("parsing (declare shared variables with --int/--bool)")?;
    println!("parsed:      {pred}");

    let class = classify(&pred);
    println!(
        "class:       {}",
        match class {
            PredClass::Shared => "shared (any thread can evaluate it as written)",
            PredClass::Complex => "complex (reads locals; globalized per wait)",
        }
    );

    let global = match globalize(&pred, &binding) {
        Ok(g) => g,
        Err(e) => {
            println!("globalized:  rejected — {e}");
            return Ok(());
        }
    };
    if class == PredClass::Complex {
        println!("globalized:  {global}");
    }

    let dnf = to_dnf(&global).map_err(|e| anyhow!("{e}"))?;
    println!("disjunctive: {dnf}");

    let key = canonical_key(&dnf);
    println!("canonical:   {}", key.pred());

    let tags = tag_canonical(key.pred());
    for (i, tag) in tags.iter().enumerate() {
        println!("tag[{i}]:      {tag}");
    }
    if tags.is_empty() {
        println!("tags:        none — the predicate can never become true");
    }

    let missing = a
        .ints
        .iter()
        .chain(a.bools.iter())
        .any(|n| trial.get(n).is_err());
    if !missing {
        match eval_pred(&pred, &trial, &binding) {
            Ok(v) => println!("evaluates:   {v} (under the --let values)"),
            Err(e) => println!("evaluates:   error — {e}"),
        }
    }
    Ok(())
}
