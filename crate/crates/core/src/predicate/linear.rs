//! Linear normalization and canonical predicate forms.
//!
//! Most wait conditions in practice are linear comparisons over integers.
//! Normalization rewrites such an atom as `Σ cᵢ·mᵢ ⟨op⟩ k`: every monomial
//! over shared variables on the left (sorted, leading coefficient positive),
//! one folded integer key on the right. Two syntactically different atoms
//! that denote the same half-space then compare equal, e.g. `count < cap`
//! and `cap - count > 0` both normalize to `cap - count > 0`.
//!
//! Atoms that resist this shape — boolean comparisons, products mixing
//! scopes, leftover local variables, folds that overflow — are kept verbatim
//! as [`NormalAtom::Opaque`] and simply never anchor an index.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::PredicateError;
use crate::predicate::{Atom, CmpOp, Conjunction, DnfPred, Expr, VarRef};
use crate::store::{Binding, Domain, Scope, Store, Value};

/// A product of variables, kept sorted so `x*y` and `y*x` coincide.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(Vec<VarRef>);

impl Monomial {
    fn unit() -> Self {
        Monomial(Vec::new())
    }

    fn var(v: VarRef) -> Self {
        Monomial(vec![v])
    }

    fn is_unit(&self) -> bool {
        self.0.is_empty()
    }

    fn merged(&self, other: &Monomial) -> Monomial {
        let mut vars = self.0.clone();
        vars.extend(other.0.iter().cloned());
        vars.sort();
        Monomial(vars)
    }

    pub fn vars(&self) -> &[VarRef] {
        &self.0
    }

    fn has_local(&self) -> bool {
        self.0.iter().any(|v| v.scope == Scope::Local)
    }

    fn eval(&self, store: &Store) -> Result<i64, PredicateError> {
        let mut acc: i64 = 1;
        for v in &self.0 {
            let x = store.get(&v.name)?.as_int()?;
            acc = acc.checked_mul(x).ok_or(PredicateError::Overflow)?;
        }
        Ok(acc)
    }

    fn to_expr(&self) -> Expr {
        let mut it = self.0.iter();
        let first = it.next().expect("unit monomial has no expression form");
        it.fold(Expr::Var(first.clone()), |acc, v| {
            Expr::Mul(Box::new(acc), Box::new(Expr::Var(v.clone())))
        })
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("*")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// A sum of coefficient-weighted monomials with no constant term.
///
/// Invariants: terms sorted by monomial, no zero coefficients, no unit
/// (constant) monomial, leading coefficient positive when produced by
/// [`normalize_atom`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinExpr {
    terms: Vec<(Monomial, i64)>,
}

impl LinExpr {
    pub fn terms(&self) -> &[(Monomial, i64)] {
        &self.terms
    }

    /// The single variable, if this is `1·v` exactly.
    pub fn as_single_var(&self) -> Option<&VarRef> {
        match self.terms.as_slice() {
            [(m, 1)] => match m.vars() {
                [v] => Some(v),
                _ => None,
            },
            _ => None,
        }
    }

    pub fn eval(&self, store: &Store) -> Result<i64, PredicateError> {
        let mut acc: i64 = 0;
        for (m, c) in &self.terms {
            let t = c.checked_mul(m.eval(store)?).ok_or(PredicateError::Overflow)?;
            acc = acc.checked_add(t).ok_or(PredicateError::Overflow)?;
        }
        Ok(acc)
    }

    /// Rebuilds an expression tree denoting this sum.
    pub fn to_expr(&self) -> Expr {
        let mut acc: Option<Expr> = None;
        for (m, c) in &self.terms {
            let base = m.to_expr();
            acc = Some(match acc {
                None => scale(base, *c),
                Some(prev) => {
                    if *c < 0 {
                        Expr::Sub(Box::new(prev), Box::new(scale(base, c.unsigned_abs() as i64)))
                    } else {
                        Expr::Add(Box::new(prev), Box::new(scale(base, *c)))
                    }
                }
            });
        }
        acc.expect("an empty linear expression has no tree form")
    }
}

fn scale(base: Expr, c: i64) -> Expr {
    match c {
        1 => base,
        -1 => Expr::Neg(Box::new(base)),
        _ => Expr::Mul(Box::new(Expr::Int(c)), Box::new(base)),
    }
}

impl fmt::Display for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (m, c)) in self.terms.iter().enumerate() {
            let mag = c.unsigned_abs();
            if i == 0 {
                if *c < 0 {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if *c < 0 { " - " } else { " + " })?;
            }
            if mag != 1 {
                write!(f, "{mag}*")?;
            }
            write!(f, "{m}")?;
        }
        Ok(())
    }
}

/// An atom after normalization.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NormalAtom {
    /// `expr ⟨op⟩ key` with `expr` linear over shared variables.
    Linear { expr: LinExpr, op: CmpOp, key: i64 },
    /// Kept as written; evaluated via the generic atom evaluator.
    Opaque(Atom),
}

impl NormalAtom {
    pub fn eval(&self, store: &Store) -> Result<bool, PredicateError> {
        match self {
            NormalAtom::Linear { expr, op, key } => Ok(op.eval_int(expr.eval(store)?, *key)),
            NormalAtom::Opaque(a) => crate::predicate::eval_atom(a, store, &Binding::new()),
        }
    }
}

impl fmt::Display for NormalAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormalAtom::Linear { expr, op, key } => write!(f, "{expr} {op} {key}"),
            NormalAtom::Opaque(a) => write!(f, "{a}"),
        }
    }
}

/// Result of normalizing one atom: either a constant truth value (folded
/// away by canonicalization) or a residual atom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Normalized {
    Const(bool),
    Atom(NormalAtom),
}

// Polynomial form: monomial -> coefficient, with the unit monomial carrying
// the constant term. `None` marks anything non-polynomial (bools, overflow).
type Poly = BTreeMap<Monomial, i64>;

fn poly(e: &Expr) -> Option<Poly> {
    match e {
        Expr::Int(n) => {
            let mut p = Poly::new();
            if *n != 0 {
                p.insert(Monomial::unit(), *n);
            }
            Some(p)
        }
        Expr::Bool(_) => None,
        // Bool variables must stay opaque: a linear form would evaluate them
        // as integers.
        Expr::Var(v) if v.domain == Domain::Bool => None,
        Expr::Var(v) => {
            let mut p = Poly::new();
            p.insert(Monomial::var(v.clone()), 1);
            Some(p)
        }
        Expr::Add(a, b) => merge(poly(a)?, &poly(b)?, 1),
        Expr::Sub(a, b) => merge(poly(a)?, &poly(b)?, -1),
        Expr::Neg(a) => merge(Poly::new(), &poly(a)?, -1),
        Expr::Mul(a, b) => {
            let (pa, pb) = (poly(a)?, poly(b)?);
            let mut out = Poly::new();
            for (ma, ca) in &pa {
                for (mb, cb) in &pb {
                    let m = ma.merged(mb);
                    let c = ca.checked_mul(*cb)?;
                    let slot = out.entry(m).or_insert(0);
                    *slot = slot.checked_add(c)?;
                }
            }
            out.retain(|_, c| *c != 0);
            Some(out)
        }
    }
}

fn merge(mut into: Poly, from: &Poly, sign: i64) -> Option<Poly> {
    for (m, c) in from {
        let add = c.checked_mul(sign)?;
        let slot = into.entry(m.clone()).or_insert(0);
        *slot = slot.checked_add(add)?;
    }
    into.retain(|_, c| *c != 0);
    Some(into)
}

enum Sep {
    Linear { expr: LinExpr, op: CmpOp, key: i64 },
    Const(bool),
    Opaque,
}

fn separate(a: &Atom) -> Sep {
    // Variable-free atoms (including boolean constants) fold immediately.
    if let (Some(l), Some(r)) = (const_value(&a.lhs), const_value(&a.rhs)) {
        return match (l, r) {
            (Value::Int(x), Value::Int(y)) => Sep::Const(a.op.eval_int(x, y)),
            (Value::Bool(x), Value::Bool(y)) => match a.op {
                CmpOp::Eq => Sep::Const(x == y),
                CmpOp::Ne => Sep::Const(x != y),
                _ => Sep::Opaque,
            },
            _ => Sep::Opaque,
        };
    }

    let diff = match (poly(&a.lhs), poly(&a.rhs)) {
        (Some(l), Some(r)) => match merge(l, &r, -1) {
            Some(d) => d,
            None => return Sep::Opaque,
        },
        _ => return Sep::Opaque,
    };
    if diff.keys().any(Monomial::has_local) {
        return Sep::Opaque;
    }

    // lhs - rhs = T + c, so the atom holds iff T ⟨op⟩ -c.
    let c = diff.get(&Monomial::unit()).copied().unwrap_or(0);
    let mut terms: Vec<(Monomial, i64)> = diff.into_iter().filter(|(m, _)| !m.is_unit()).collect();
    if terms.is_empty() {
        return Sep::Const(a.op.eval_int(c, 0));
    }
    let key = match c.checked_neg() {
        Some(k) => k,
        None => return Sep::Opaque,
    };

    let mut op = a.op;
    if terms[0].1 < 0 {
        for (_, c) in &mut terms {
            *c = match c.checked_neg() {
                Some(n) => n,
                None => return Sep::Opaque,
            };
        }
        let key = match key.checked_neg() {
            Some(k) => k,
            None => return Sep::Opaque,
        };
        op = op.flipped();
        return Sep::Linear {
            expr: LinExpr { terms },
            op,
            key,
        };
    }
    Sep::Linear {
        expr: LinExpr { terms },
        op,
        key,
    }
}

fn const_value(e: &Expr) -> Option<Value> {
    match e {
        Expr::Int(n) => Some(Value::Int(*n)),
        Expr::Bool(b) => Some(Value::Bool(*b)),
        Expr::Var(_) => None,
        Expr::Add(a, b) => arith(e, const_value(a)?, const_value(b)?),
        Expr::Sub(a, b) => arith(e, const_value(a)?, const_value(b)?),
        Expr::Mul(a, b) => arith(e, const_value(a)?, const_value(b)?),
        Expr::Neg(a) => match const_value(a)? {
            Value::Int(n) => n.checked_neg().map(Value::Int),
            Value::Bool(_) => None,
        },
    }
}

fn arith(e: &Expr, l: Value, r: Value) -> Option<Value> {
    let (Value::Int(x), Value::Int(y)) = (l, r) else {
        return None;
    };
    let n = match e {
        Expr::Add(..) => x.checked_add(y)?,
        Expr::Sub(..) => x.checked_sub(y)?,
        Expr::Mul(..) => x.checked_mul(y)?,
        _ => unreachable!(),
    };
    Some(Value::Int(n))
}

/// Normalizes one atom into canonical linear shape, a constant, or itself.
pub fn normalize_atom(a: &Atom) -> Normalized {
    match separate(a) {
        Sep::Linear { expr, op, key } => Normalized::Atom(NormalAtom::Linear { expr, op, key }),
        Sep::Const(t) => Normalized::Const(t),
        Sep::Opaque => Normalized::Atom(NormalAtom::Opaque(a.clone())),
    }
}

pub(crate) enum Rebuilt {
    Const(bool),
    Atom(Atom),
}

/// Rewrites an atom into its canonical syntactic shape, used by
/// globalization so that `count >= $num` with `num = 48` comes out as the
/// plain `count >= 48` any other thread would have written.
pub(crate) fn rebuild_atom(a: &Atom) -> Rebuilt {
    match separate(a) {
        Sep::Const(t) => Rebuilt::Const(t),
        Sep::Linear { expr, op, key } => Rebuilt::Atom(Atom {
            lhs: expr.to_expr(),
            op,
            rhs: Expr::Int(key),
        }),
        Sep::Opaque => Rebuilt::Atom(a.clone()),
    }
}

/// One canonical conjunction: normalized atoms, sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonConj {
    pub atoms: Vec<NormalAtom>,
}

impl CanonConj {
    pub fn eval(&self, store: &Store) -> Result<bool, PredicateError> {
        for a in &self.atoms {
            if !a.eval(store)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// A canonical DNF predicate: conjunctions sorted and deduplicated, constant
/// atoms folded away. Equal canonical forms denote equal wait conditions, so
/// this is the identity under which the runtime shares predicate records.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalPred {
    pub conjunctions: Vec<CanonConj>,
}

impl CanonicalPred {
    pub fn eval(&self, store: &Store) -> Result<bool, PredicateError> {
        for c in &self.conjunctions {
            if c.eval(store)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// True when the predicate folded to the constant `true`.
    pub fn is_always_true(&self) -> bool {
        self.conjunctions.len() == 1 && self.conjunctions[0].atoms.is_empty()
    }

    /// True when the predicate folded to the constant `false`.
    pub fn is_never_true(&self) -> bool {
        self.conjunctions.is_empty()
    }
}

impl fmt::Display for CanonicalPred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.conjunctions.is_empty() {
            return f.write_str("false");
        }
        for (i, c) in self.conjunctions.iter().enumerate() {
            if i > 0 {
                f.write_str(" || ")?;
            }
            if c.atoms.is_empty() {
                f.write_str("true")?;
            } else {
                for (j, a) in c.atoms.iter().enumerate() {
                    if j > 0 {
                        f.write_str(" && ")?;
                    }
                    write!(f, "({a})")?;
                }
            }
        }
        Ok(())
    }
}

/// Canonicalizes a DNF predicate: each atom is normalized, constant-true
/// atoms and constant-false conjunctions are dropped, atoms and conjunctions
/// are sorted and deduplicated, and a conjunction that restates another with
/// extra atoms is absorbed by it. A conjunction that folds entirely away
/// makes the whole predicate the constant `true`.
pub fn canonicalize(p: &DnfPred) -> CanonicalPred {
    let mut conjunctions = Vec::with_capacity(p.conjunctions.len());
    'conj: for c in &p.conjunctions {
        let mut atoms = Vec::with_capacity(c.atoms.len());
        for a in &c.atoms {
            match normalize_atom(a) {
                Normalized::Const(false) => continue 'conj,
                Normalized::Const(true) => {}
                Normalized::Atom(na) => atoms.push(na),
            }
        }
        if atoms.is_empty() {
            return CanonicalPred {
                conjunctions: vec![CanonConj { atoms: Vec::new() }],
            };
        }
        atoms.sort();
        atoms.dedup();
        conjunctions.push(CanonConj { atoms });
    }
    conjunctions.sort();
    conjunctions.dedup();
    drop_absorbed(&mut conjunctions);
    CanonicalPred { conjunctions }
}

// With both atom lists sorted, subset testing is a forward merge.
fn subsumes(small: &CanonConj, big: &CanonConj) -> bool {
    let mut rest = big.atoms.iter();
    small.atoms.iter().all(|a| rest.any(|b| b == a))
}

/// Removes every conjunction another (strictly smaller) conjunction proves
/// redundant: `A ∨ (A ∧ B)` is `A`.
fn drop_absorbed(conjunctions: &mut Vec<CanonConj>) {
    let mut i = 0;
    while i < conjunctions.len() {
        let absorbed = conjunctions.iter().enumerate().any(|(j, small)| {
            j != i
                && small.atoms.len() < conjunctions[i].atoms.len()
                && subsumes(small, &conjunctions[i])
        });
        if absorbed {
            conjunctions.remove(i);
        } else {
            i += 1;
        }
    }
}

/// Canonicalizes a conjunction on its own (used by the verifier's static
/// scenario setup).
pub fn canonicalize_conjunction(c: &Conjunction) -> Option<CanonConj> {
    let dnf = DnfPred {
        conjunctions: vec![c.clone()],
    };
    canonicalize(&dnf).conjunctions.into_iter().next()
}

/// One atom of a compiled wait shape.
#[derive(Debug, Clone)]
enum TemplateAtom {
    /// Already canonical; no local variables involved.
    Ready(NormalAtom),
    /// `Σ shared + Σ locals + base ⟨op⟩ 0`: substituting the binding turns
    /// the local monomials into a constant, leaving a plain linear atom.
    /// `shared` is sorted by monomial with the sign not yet normalized.
    Subst {
        shared: Vec<(Monomial, i64)>,
        locals: Vec<(Monomial, i64)>,
        op: CmpOp,
        base: i64,
    },
}

/// One conjunction of a compiled wait shape.
#[derive(Debug, Clone)]
pub struct TemplateConj {
    atoms: Vec<TemplateAtom>,
}

/// How a compiled wait shape maps a binding to its canonical predicate.
/// Substitution commutes with canonicalization for linear atoms, so the
/// per-binding work is arithmetic on each atom's key instead of a rebuild
/// of the whole predicate.
#[derive(Debug, Clone)]
pub enum TemplatePlan {
    /// The binding cannot change the canonical form.
    Fixed(PredKey),
    /// Locals appear only in linear positions: substitute per binding.
    PerBinding(Vec<TemplateConj>),
    /// Locals sit where substitution can't reach them cheaply (opaque
    /// atoms, folds that overflow): run the full pipeline per binding.
    General,
}

enum TAtom {
    Const(bool),
    Ready(NormalAtom),
    Subst {
        shared: Vec<(Monomial, i64)>,
        locals: Vec<(Monomial, i64)>,
        op: CmpOp,
        base: i64,
    },
    General,
}

fn template_atom(a: &Atom) -> TAtom {
    let has_local = {
        let mut found = false;
        a.for_each_var(&mut |v| found |= v.scope == Scope::Local);
        found
    };
    if !has_local {
        return match normalize_atom(a) {
            Normalized::Const(t) => TAtom::Const(t),
            Normalized::Atom(na) => TAtom::Ready(na),
        };
    }
    let diff = match (poly(&a.lhs), poly(&a.rhs)) {
        (Some(l), Some(r)) => match merge(l, &r, -1) {
            Some(d) => d,
            None => return TAtom::General,
        },
        _ => return TAtom::General,
    };
    let mut base = 0;
    let mut shared = Vec::new();
    let mut locals = Vec::new();
    for (m, c) in diff {
        if m.is_unit() {
            base = c;
        } else if !m.has_local() {
            shared.push((m, c));
        } else if m.vars().iter().all(|v| v.scope == Scope::Local) {
            locals.push((m, c));
        } else {
            // A monomial mixing scopes can't be rebuilt after substitution.
            return TAtom::General;
        }
    }
    TAtom::Subst {
        shared,
        locals,
        op: a.op,
        base,
    }
}

impl TemplatePlan {
    /// Compiles a disjunctive predicate that references local variables.
    pub fn build(p: &DnfPred) -> TemplatePlan {
        let mut conjs = Vec::with_capacity(p.conjunctions.len());
        'conj: for c in &p.conjunctions {
            let mut atoms = Vec::with_capacity(c.atoms.len());
            for a in &c.atoms {
                match template_atom(a) {
                    TAtom::Const(true) => {}
                    TAtom::Const(false) => continue 'conj,
                    TAtom::Ready(na) => atoms.push(TemplateAtom::Ready(na)),
                    TAtom::Subst {
                        shared,
                        locals,
                        op,
                        base,
                    } => atoms.push(TemplateAtom::Subst {
                        shared,
                        locals,
                        op,
                        base,
                    }),
                    TAtom::General => return TemplatePlan::General,
                }
            }
            if atoms.is_empty() {
                // A conjunction held with no residual atoms: true under
                // every binding.
                return TemplatePlan::Fixed(PredKey::new(CanonicalPred {
                    conjunctions: vec![CanonConj { atoms: Vec::new() }],
                }));
            }
            conjs.push(TemplateConj { atoms });
        }
        TemplatePlan::PerBinding(conjs)
    }

    /// Substitutes `b`, producing the same key the full pipeline would.
    /// `None` means this plan (or this particular binding — a missing or
    /// non-integer local, an overflowing fold) needs the full pipeline.
    pub fn instantiate(&self, b: &Binding) -> Option<PredKey> {
        let conjs = match self {
            TemplatePlan::Fixed(key) => return Some(key.clone()),
            TemplatePlan::PerBinding(conjs) => conjs,
            TemplatePlan::General => return None,
        };
        let mut conjunctions = Vec::with_capacity(conjs.len());
        'conj: for tc in conjs {
            let mut atoms = Vec::with_capacity(tc.atoms.len());
            for ta in &tc.atoms {
                match ta {
                    TemplateAtom::Ready(na) => atoms.push(na.clone()),
                    TemplateAtom::Subst {
                        shared,
                        locals,
                        op,
                        base,
                    } => {
                        let mut diff = *base;
                        for (m, c) in locals {
                            let mut prod = *c;
                            for v in m.vars() {
                                let x = match b.get(&v.name)? {
                                    Value::Int(x) => x,
                                    Value::Bool(_) => return None,
                                };
                                prod = prod.checked_mul(x)?;
                            }
                            diff = diff.checked_add(prod)?;
                        }
                        // Σ shared + diff ⟨op⟩ 0, exactly as `separate` sees
                        // the substituted atom.
                        if shared.is_empty() {
                            if op.eval_int(diff, 0) {
                                continue;
                            }
                            continue 'conj;
                        }
                        let mut terms = shared.clone();
                        let mut key = diff.checked_neg()?;
                        let mut op = *op;
                        if terms[0].1 < 0 {
                            for (_, c) in &mut terms {
                                *c = c.checked_neg()?;
                            }
                            key = key.checked_neg()?;
                            op = op.flipped();
                        }
                        atoms.push(NormalAtom::Linear {
                            expr: LinExpr { terms },
                            op,
                            key,
                        });
                    }
                }
            }
            if atoms.is_empty() {
                return Some(PredKey::new(CanonicalPred {
                    conjunctions: vec![CanonConj { atoms: Vec::new() }],
                }));
            }
            atoms.sort();
            atoms.dedup();
            conjunctions.push(CanonConj { atoms });
        }
        conjunctions.sort();
        conjunctions.dedup();
        drop_absorbed(&mut conjunctions);
        Some(PredKey::new(CanonicalPred { conjunctions }))
    }
}

/// A shareable, hashable identity for a canonical predicate. Equality and
/// hashing go through the contents, so two keys built independently from the
/// same wait condition collide in a table — which is the point.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PredKey(Arc<CanonicalPred>);

impl PredKey {
    pub fn new(p: CanonicalPred) -> Self {
        PredKey(Arc::new(p))
    }

    pub fn pred(&self) -> &CanonicalPred {
        &self.0
    }
}

impl fmt::Display for PredKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Convenience: canonicalize and wrap as a key in one step.
pub fn canonical_key(p: &DnfPred) -> PredKey {
    PredKey::new(canonicalize(p))
}
