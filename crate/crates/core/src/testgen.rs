//! Seeded random generators for the randomized conformance tests.
//!
//! These live in the library rather than a test module so integration
//! tests and benches draw from the same distributions. Everything is
//! deterministic in the caller's RNG.
//!
//! The predicate generator works over four shared integers `a..d` and two
//! locals `$p`/`$q`, all ranging over `{0, 1, 2}`, with small constants and
//! constant-factor products only — deep enough to exercise substitution,
//! normalization, and disjunctive expansion, small enough that arithmetic
//! can never overflow.

use rand::Rng;

use crate::predicate::{Atom, CmpOp, Expr, Pred, VarRef};
use crate::store::Binding;

/// Shared integer variables the generated predicates range over.
pub const SHARED_VARS: [&str; 4] = ["a", "b", "c", "d"];
/// Local variables; bindings assign them values in `{0, 1, 2}`.
pub const LOCAL_VARS: [&str; 2] = ["p", "q"];

const OPS: [CmpOp; 6] = [
    CmpOp::Eq,
    CmpOp::Ne,
    CmpOp::Lt,
    CmpOp::Le,
    CmpOp::Gt,
    CmpOp::Ge,
];

fn gen_expr(rng: &mut impl Rng, depth: u32, locals: bool) -> Expr {
    if depth == 0 || rng.gen_ratio(2, 5) {
        return match rng.gen_range(0..3u32) {
            0 => Expr::Int(rng.gen_range(-2..=2)),
            1 if locals && rng.gen_bool(0.4) => Expr::var(VarRef::local_int(
                LOCAL_VARS[rng.gen_range(0..LOCAL_VARS.len())],
            )),
            _ => Expr::var(VarRef::shared_int(
                SHARED_VARS[rng.gen_range(0..SHARED_VARS.len())],
            )),
        };
    }
    let l = gen_expr(rng, depth - 1, locals);
    let r = gen_expr(rng, depth - 1, locals);
    match rng.gen_range(0..4u32) {
        0 => Expr::add(l, r).expect("int + int"),
        1 => Expr::sub(l, r).expect("int - int"),
        // A constant factor keeps the atom linear regardless of `r`.
        2 => Expr::mul(Expr::Int(rng.gen_range(-2..=2)), r).expect("const * int"),
        _ => Expr::neg(l).expect("-int"),
    }
}

fn gen_atom(rng: &mut impl Rng, locals: bool) -> Atom {
    let depth = rng.gen_range(0..=2);
    let lhs = gen_expr(rng, depth, locals);
    let rhs = gen_expr(rng, depth, locals);
    let op = OPS[rng.gen_range(0..OPS.len())];
    Atom::new(lhs, op, rhs).expect("int comparison")
}

fn gen_pred(rng: &mut impl Rng, depth: u32, locals: bool) -> Pred {
    if depth == 0 || rng.gen_ratio(3, 10) {
        return Pred::atom(gen_atom(rng, locals));
    }
    match rng.gen_range(0..10u32) {
        0..=3 => Pred::and(
            gen_pred(rng, depth - 1, locals),
            gen_pred(rng, depth - 1, locals),
        ),
        4..=7 => Pred::or(
            gen_pred(rng, depth - 1, locals),
            gen_pred(rng, depth - 1, locals),
        ),
        _ => Pred::not(gen_pred(rng, depth - 1, locals)),
    }
}

/// A random wait condition over `a..d` and `$p`/`$q` (tree depth at most 5)
/// together with a binding for the locals.
pub fn random_wait_case(rng: &mut impl Rng) -> (Pred, Binding) {
    let pred = gen_pred(rng, 5, true);
    let mut binding = Binding::new();
    for name in LOCAL_VARS {
        binding = binding.with(name, rng.gen_range(0..=2i64));
    }
    (pred, binding)
}

/// A random predicate over shared variables only, ready for disjunctive
/// expansion without a binding.
pub fn random_shared_pred(rng: &mut impl Rng) -> Pred {
    gen_pred(rng, 4, false)
}

/// A randomized population of threshold waits over one shared variable.
#[derive(Debug, Clone)]
pub struct ThresholdCase {
    /// Wait predicate sources. Every conjunction is anchored on `x`; some
    /// carry an extra `y` atom so the anchor can hold while the full
    /// predicate is false.
    pub preds: Vec<String>,
    pub x: i64,
    pub y: i64,
}

/// Up to 32 threshold waits (`x < k`, `x <= k`, `x > k`, `x >= k`, possibly
/// `&& y >= j`) plus a store valuation to relay against.
pub fn random_threshold_case(rng: &mut impl Rng) -> ThresholdCase {
    let n = rng.gen_range(1..=32);
    let mut preds = Vec::with_capacity(n);
    for _ in 0..n {
        let op = ["<", "<=", ">", ">="][rng.gen_range(0..4)];
        let k = rng.gen_range(-8..=8i64);
        let mut src = format!("x {op} {k}");
        if rng.gen_ratio(3, 10) {
            src = format!("{src} && y >= {}", rng.gen_range(-2..=2i64));
        }
        preds.push(src);
    }
    ThresholdCase {
        preds,
        x: rng.gen_range(-10..=10),
        y: rng.gen_range(-2..=2),
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::predicate::{classify, eval_pred, globalize, PredClass};
    use crate::store::{Store, Value};

    #[test]
    fn wait_cases_are_deterministic_in_the_seed() {
        let (p1, _) = random_wait_case(&mut ChaCha8Rng::seed_from_u64(9));
        let (p2, _) = random_wait_case(&mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(p1, p2);
    }

    #[test]
    fn generated_preds_evaluate_without_type_or_overflow_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = Store::new();
        for v in SHARED_VARS {
            store.declare(v, Value::Int(1)).unwrap();
        }
        for _ in 0..200 {
            let (pred, binding) = random_wait_case(&mut rng);
            eval_pred(&pred, &store, &binding).expect("generated preds are well-typed");
        }
    }

    #[test]
    fn shared_preds_have_no_locals_and_globalization_respects_bindings() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let p = random_shared_pred(&mut rng);
            assert_eq!(classify(&p), PredClass::Shared);
            let (q, binding) = random_wait_case(&mut rng);
            if let Ok(g) = globalize(&q, &binding) {
                assert_eq!(classify(&g), PredClass::Shared);
            }
        }
    }

    #[test]
    fn threshold_cases_stay_within_the_tag_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let case = random_threshold_case(&mut rng);
            assert!((1..=32).contains(&case.preds.len()));
            assert!(case.preds.iter().all(|s| s.starts_with("x ")));
        }
    }
}
