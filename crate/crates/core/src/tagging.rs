//! Conjunction tags: one small summary per DNF conjunction that the
//! condition manager can index.
//!
//! A conjunction containing an equivalence atom `expr == key` is summarized
//! by that atom; it can only be true while `expr` evaluates to exactly `key`,
//! so a hash probe on the current value finds it in O(1). Failing that, an
//! order atom `expr {<,<=,>,>=} key` gives a threshold summary usable for
//! heap pruning. `!=` atoms and opaque atoms are summarized by neither (their
//! satisfying sets are too large to prune with), leaving the conjunction
//! untagged and subject to exhaustive scan.
//!
//! Exactly one tag per conjunction: indexing the same conjunction under two
//! tags cannot reduce the number of predicate evaluations, it only doubles
//! bookkeeping.

use std::fmt;

use crate::error::PredicateError;
use crate::predicate::linear::{CanonConj, CanonicalPred, LinExpr, NormalAtom};
use crate::predicate::{substitute_atom, CmpOp, Conjunction, DnfPred};
use crate::store::{Binding, Store};

/// The discriminant of a [`Tag`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TagMode {
    Equivalence,
    Threshold,
    None,
}

/// Summary of one conjunction, anchored to a single normalized atom.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Tag {
    /// Anchored to `expr == key`.
    Equivalence { expr: LinExpr, key: i64 },
    /// Anchored to `expr op key`, `op` one of `<`, `<=`, `>`, `>=`.
    Threshold { expr: LinExpr, op: CmpOp, key: i64 },
    /// No usable anchor; the conjunction is found by exhaustive scan only.
    None,
}

impl Tag {
    pub fn mode(&self) -> TagMode {
        match self {
            Tag::Equivalence { .. } => TagMode::Equivalence,
            Tag::Threshold { .. } => TagMode::Threshold,
            Tag::None => TagMode::None,
        }
    }

    /// Truth of the anchoring atom under `store`. An untagged conjunction has
    /// no anchor, so nothing can be pruned and the tag counts as true.
    pub fn eval(&self, store: &Store) -> Result<bool, PredicateError> {
        match self {
            Tag::Equivalence { expr, key } => Ok(expr.eval(store)? == *key),
            Tag::Threshold { expr, op, key } => Ok(op.eval_int(expr.eval(store)?, *key)),
            Tag::None => Ok(true),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Equivalence { expr, key } => write!(f, "(Equivalence, {expr}, {key}, _)"),
            Tag::Threshold { expr, op, key } => write!(f, "(Threshold, {expr}, {key}, {op})"),
            Tag::None => f.write_str("(None, _, _, _)"),
        }
    }
}

/// Tags an already-canonical conjunction. Atoms are inspected in canonical
/// order; the first equivalence anchor wins, then the first threshold anchor.
pub fn tag_canon_conj(c: &CanonConj) -> Tag {
    for a in &c.atoms {
        if let NormalAtom::Linear {
            expr,
            op: CmpOp::Eq,
            key,
        } = a
        {
            return Tag::Equivalence {
                expr: expr.clone(),
                key: *key,
            };
        }
    }
    for a in &c.atoms {
        if let NormalAtom::Linear { expr, op, key } = a {
            if op.is_order() {
                return Tag::Threshold {
                    expr: expr.clone(),
                    op: *op,
                    key: *key,
                };
            }
        }
    }
    Tag::None
}

/// One tag per canonical conjunction, in order.
pub fn tag_canonical(p: &CanonicalPred) -> Vec<Tag> {
    p.conjunctions.iter().map(tag_canon_conj).collect()
}

/// Tags a raw conjunction: locals are substituted from `b`, atoms normalized
/// and put in canonical order, then the priority scan runs. A conjunction
/// that folds to a constant gets the `None` tag (there is nothing to index).
pub fn tag_conjunction(c: &Conjunction, b: &Binding) -> Result<Tag, PredicateError> {
    let mut atoms = Vec::with_capacity(c.atoms.len());
    for a in &c.atoms {
        atoms.push(substitute_atom(a, b)?);
    }
    let canon = crate::predicate::linear::canonicalize_conjunction(&Conjunction { atoms });
    Ok(match canon {
        Some(cc) => tag_canon_conj(&cc),
        None => Tag::None,
    })
}

/// Tags every conjunction of a DNF predicate, in order.
pub fn tag_predicate(p: &DnfPred, b: &Binding) -> Result<Vec<Tag>, PredicateError> {
    p.conjunctions.iter().map(|c| tag_conjunction(c, b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predicate::parse::parse_pred;
    use crate::predicate::to_dnf;
    use crate::store::{Domain, VarDecls};

    fn decls() -> VarDecls {
        let mut d = VarDecls::new();
        for name in ["x", "y", "z", "count", "turn"] {
            d.declare(name, Domain::Int);
        }
        d.declare("closed", Domain::Bool);
        d
    }

    fn tags_of(src: &str, b: &Binding) -> Vec<Tag> {
        let p = parse_pred(src, &decls()).unwrap();
        tag_predicate(&to_dnf(&p).unwrap(), b).unwrap()
    }

    fn lone(src: &str, b: &Binding) -> Tag {
        let mut ts = tags_of(src, b);
        assert_eq!(ts.len(), 1);
        ts.pop().unwrap()
    }

    #[test]
    fn threshold_after_fold() {
        // x + b > 2y + a with a=11, b=2 anchors as x - 2y > 9.
        let b = Binding::new().with("a", 11).with("b", 2);
        let t = lone("x + $b > 2*y + $a", &b);
        match &t {
            Tag::Threshold { expr, op, key } => {
                assert_eq!(expr.to_string(), "x - 2*y");
                assert_eq!(*op, CmpOp::Gt);
                assert_eq!(*key, 9);
            }
            other => panic!("expected threshold, got {other}"),
        }
        assert_eq!(t.to_string(), "(Threshold, x - 2*y, 9, >)");
    }

    #[test]
    fn equivalence_from_rearranged_atom() {
        // x - a == y + b  ⇒  x - y == a + b; with a=3, b=4 the key is 7.
        let b = Binding::new().with("a", 3).with("b", 4);
        match lone("x - $a == y + $b", &b) {
            Tag::Equivalence { expr, key } => {
                assert_eq!(expr.to_string(), "x - y");
                assert_eq!(key, 7);
            }
            other => panic!("expected equivalence, got {other}"),
        }
    }

    #[test]
    fn first_equivalence_atom_in_canonical_order_anchors() {
        let b = Binding::new();
        match lone("x == 8 && y == 9", &b) {
            Tag::Equivalence { expr, key } => {
                assert_eq!(expr.to_string(), "x");
                assert_eq!(key, 8);
            }
            other => panic!("expected equivalence, got {other}"),
        }
    }

    #[test]
    fn equivalence_outranks_threshold() {
        let b = Binding::new();
        match lone("x >= 5 && z == 3", &b) {
            Tag::Equivalence { expr, key } => {
                assert_eq!(expr.to_string(), "z");
                assert_eq!(key, 3);
            }
            other => panic!("expected equivalence, got {other}"),
        }
    }

    #[test]
    fn not_equal_never_anchors() {
        assert_eq!(lone("x != 4", &Binding::new()), Tag::None);
    }

    #[test]
    fn bool_atoms_never_anchor() {
        assert_eq!(lone("closed", &Binding::new()), Tag::None);
    }

    #[test]
    fn shared_conjunct_yields_equal_tag_values() {
        let b = Binding::new();
        let t1 = tags_of("x == 5 && z <= 4", &b);
        let t2 = tags_of("x == 5 && y >= 4", &b);
        assert_eq!(t1[0], t2[0]);
        assert!(matches!(&t1[0], Tag::Equivalence { key: 5, .. }));
    }

    #[test]
    fn one_tag_per_conjunction_in_order() {
        let b = Binding::new();
        let ts = tags_of("(x >= 5 && y != 1) || x > 7", &b);
        assert_eq!(
            ts,
            vec![
                Tag::Threshold {
                    expr: single("x"),
                    op: CmpOp::Ge,
                    key: 5
                },
                Tag::Threshold {
                    expr: single("x"),
                    op: CmpOp::Gt,
                    key: 7
                },
            ]
        );
    }

    #[test]
    fn simple_threshold() {
        assert_eq!(
            lone("count > 0", &Binding::new()),
            Tag::Threshold {
                expr: single("count"),
                op: CmpOp::Gt,
                key: 0
            }
        );
    }

    #[test]
    fn tag_truth_follows_anchor() {
        use crate::store::Value;
        let mut store = Store::default();
        store.declare("turn", Value::Int(7)).unwrap();
        let t = lone("turn == 7", &Binding::new());
        assert!(t.eval(&store).unwrap());
        store.set("turn", Value::Int(8)).unwrap();
        assert!(!t.eval(&store).unwrap());
        assert!(Tag::None.eval(&store).unwrap());
    }

    // The canonical single-variable expression, for comparing tags.
    fn single(name: &str) -> LinExpr {
        let p = parse_pred(&format!("{name} > 0"), &decls()).unwrap();
        let dnf = to_dnf(&p).unwrap();
        let canon = crate::predicate::linear::canonicalize(&dnf);
        match &canon.conjunctions[0].atoms[0] {
            NormalAtom::Linear { expr, .. } => expr.clone(),
            _ => unreachable!(),
        }
    }
}
