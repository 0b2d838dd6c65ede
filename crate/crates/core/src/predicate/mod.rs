//! Predicate syntax and the transformations a guarded wait runs through.
//!
//! A wait condition arrives as a [`Pred`] over shared and local integer/bool
//! variables. Before the runtime can hand it to other threads for evaluation
//! it is *globalized*: the waiting thread's local variables are snapshotted
//! from a [`Binding`] and folded into constants, so the resulting predicate
//! reads only shared state. Globalized predicates are converted to disjunctive
//! normal form ([`DnfPred`]), canonicalized, and indexed per conjunction.
//!
//! Evaluation is strict about types and arithmetic: comparisons other than
//! `=`/`≠` require integers, and any 64-bit overflow is reported as an error
//! rather than wrapped.

pub mod linear;
pub mod parse;

use std::fmt;
use std::sync::Arc;

use crate::error::PredicateError;
use crate::store::{Binding, Domain, Scope, Store, Value};

/// A named variable reference with its scope and domain.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarRef {
    pub name: Arc<str>,
    pub scope: Scope,
    pub domain: Domain,
}

impl VarRef {
    pub fn new(name: &str, scope: Scope, domain: Domain) -> Self {
        VarRef {
            name: Arc::from(name),
            scope,
            domain,
        }
    }

    pub fn shared_int(name: &str) -> Self {
        Self::new(name, Scope::Shared, Domain::Int)
    }

    pub fn shared_bool(name: &str) -> Self {
        Self::new(name, Scope::Shared, Domain::Bool)
    }

    pub fn local_int(name: &str) -> Self {
        Self::new(name, Scope::Local, Domain::Int)
    }

    pub fn local_bool(name: &str) -> Self {
        Self::new(name, Scope::Local, Domain::Bool)
    }
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.scope {
            Scope::Shared => write!(f, "{}", self.name),
            Scope::Local => write!(f, "${}", self.name),
        }
    }
}

/// An integer or boolean expression tree.
///
/// The checked constructors ([`Expr::add`], [`Expr::mul`], ...) enforce the
/// structural rules: arithmetic is integer-only, and a product of two
/// variable-bearing subtrees must not mix shared and local variables (such a
/// monomial could be neither globalized nor linearly separated). Building
/// variants directly bypasses those checks; evaluation still rejects the
/// type errors it can observe.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Var(VarRef),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
}

impl Expr {
    pub fn var(v: VarRef) -> Self {
        Expr::Var(v)
    }

    pub fn add(lhs: Expr, rhs: Expr) -> Result<Expr, PredicateError> {
        require_int(&lhs)?;
        require_int(&rhs)?;
        Ok(Expr::Add(Box::new(lhs), Box::new(rhs)))
    }

    pub fn sub(lhs: Expr, rhs: Expr) -> Result<Expr, PredicateError> {
        require_int(&lhs)?;
        require_int(&rhs)?;
        Ok(Expr::Sub(Box::new(lhs), Box::new(rhs)))
    }

    pub fn mul(lhs: Expr, rhs: Expr) -> Result<Expr, PredicateError> {
        require_int(&lhs)?;
        require_int(&rhs)?;
        let (ls, ll) = lhs.scope_flags();
        let (rs, rl) = rhs.scope_flags();
        if (ls && rl) || (ll && rs) {
            return Err(PredicateError::MixedScopeProduct);
        }
        Ok(Expr::Mul(Box::new(lhs), Box::new(rhs)))
    }

    pub fn neg(e: Expr) -> Result<Expr, PredicateError> {
        require_int(&e)?;
        Ok(Expr::Neg(Box::new(e)))
    }

    /// Static domain of the expression. Arithmetic nodes are `Int` by
    /// construction; ill-formed trees are caught at evaluation instead.
    pub fn domain(&self) -> Domain {
        match self {
            Expr::Int(_) => Domain::Int,
            Expr::Bool(_) => Domain::Bool,
            Expr::Var(v) => v.domain,
            Expr::Add(..) | Expr::Sub(..) | Expr::Mul(..) | Expr::Neg(..) => Domain::Int,
        }
    }

    /// (references a shared variable, references a local variable)
    pub fn scope_flags(&self) -> (bool, bool) {
        match self {
            Expr::Int(_) | Expr::Bool(_) => (false, false),
            Expr::Var(v) => (v.scope == Scope::Shared, v.scope == Scope::Local),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                let (s1, l1) = a.scope_flags();
                let (s2, l2) = b.scope_flags();
                (s1 || s2, l1 || l2)
            }
            Expr::Neg(a) => a.scope_flags(),
        }
    }

    pub fn has_vars(&self) -> bool {
        let (s, l) = self.scope_flags();
        s || l
    }

    fn for_each_var(&self, f: &mut impl FnMut(&VarRef)) {
        match self {
            Expr::Int(_) | Expr::Bool(_) => {}
            Expr::Var(v) => f(v),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
            Expr::Neg(a) => a.for_each_var(f),
        }
    }
}

fn require_int(e: &Expr) -> Result<(), PredicateError> {
    if e.domain() != Domain::Int {
        return Err(PredicateError::TypeMismatch(
            "arithmetic over a bool expression".into(),
        ));
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(n) => write!(f, "{n}"),
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
        }
    }
}

/// Comparison operator of an atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    /// The operator of the negated atom: `!(a < b)` is `a >= b`.
    pub fn negated(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }

    /// The operator with sides exchanged: `a < b` iff `b > a`.
    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            CmpOp::Eq | CmpOp::Ne => self,
        }
    }

    /// True for `<`, `<=`, `>`, `>=`.
    pub fn is_order(self) -> bool {
        matches!(self, CmpOp::Lt | CmpOp::Le | CmpOp::Gt | CmpOp::Ge)
    }

    pub fn eval_int(self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        };
        f.write_str(s)
    }
}

/// A single comparison between two expressions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub lhs: Expr,
    pub op: CmpOp,
    pub rhs: Expr,
}

impl Atom {
    /// Checked constructor: ordered comparisons require integer sides, and
    /// `=`/`≠` require both sides to share a domain.
    pub fn new(lhs: Expr, op: CmpOp, rhs: Expr) -> Result<Atom, PredicateError> {
        let (ld, rd) = (lhs.domain(), rhs.domain());
        if op.is_order() && (ld != Domain::Int || rd != Domain::Int) {
            return Err(PredicateError::TypeMismatch(format!(
                "ordered comparison `{op}` requires integers"
            )));
        }
        if ld != rd {
            return Err(PredicateError::TypeMismatch(format!(
                "cannot compare {ld} with {rd}"
            )));
        }
        Ok(Atom { lhs, op, rhs })
    }

    pub fn negated(&self) -> Atom {
        Atom {
            lhs: self.lhs.clone(),
            op: self.op.negated(),
            rhs: self.rhs.clone(),
        }
    }

    fn for_each_var(&self, f: &mut impl FnMut(&VarRef)) {
        self.lhs.for_each_var(f);
        self.rhs.for_each_var(f);
    }

    pub fn has_local_vars(&self) -> bool {
        let mut any = false;
        self.for_each_var(&mut |v| any |= v.scope == Scope::Local);
        any
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op, self.rhs)
    }
}

/// A boolean combination of atoms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pred {
    Atom(Atom),
    And(Box<Pred>, Box<Pred>),
    Or(Box<Pred>, Box<Pred>),
    Not(Box<Pred>),
}

impl Pred {
    pub fn atom(a: Atom) -> Pred {
        Pred::Atom(a)
    }

    pub fn and(l: Pred, r: Pred) -> Pred {
        Pred::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Pred, r: Pred) -> Pred {
        Pred::Or(Box::new(l), Box::new(r))
    }

    pub fn not(p: Pred) -> Pred {
        Pred::Not(Box::new(p))
    }

    /// A predicate that is trivially true (used when globalization folds the
    /// whole condition away).
    pub fn always_true() -> Pred {
        Pred::Atom(Atom {
            lhs: Expr::Bool(true),
            op: CmpOp::Eq,
            rhs: Expr::Bool(true),
        })
    }

    pub fn for_each_var(&self, f: &mut impl FnMut(&VarRef)) {
        match self {
            Pred::Atom(a) => a.for_each_var(f),
            Pred::And(l, r) | Pred::Or(l, r) => {
                l.for_each_var(f);
                r.for_each_var(f);
            }
            Pred::Not(p) => p.for_each_var(f),
        }
    }
}

impl fmt::Display for Pred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pred::Atom(a) => write!(f, "({a})"),
            Pred::And(l, r) => write!(f, "({l} && {r})"),
            Pred::Or(l, r) => write!(f, "({l} || {r})"),
            Pred::Not(p) => write!(f, "!{p}"),
        }
    }
}

/// Whether a predicate reads only shared state or also thread-local state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredClass {
    /// Every variable is shared: any thread can evaluate it as written.
    Shared,
    /// At least one local variable: must be globalized with a binding first.
    Complex,
}

/// Classifies a predicate by the scopes of the variables it references.
pub fn classify(p: &Pred) -> PredClass {
    let mut complex = false;
    p.for_each_var(&mut |v| complex |= v.scope == Scope::Local);
    if complex {
        PredClass::Complex
    } else {
        PredClass::Shared
    }
}

/// One conjunction of a DNF predicate: the conjoined atoms, in order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Conjunction {
    pub atoms: Vec<Atom>,
}

/// A predicate in disjunctive normal form. An empty disjunction is `false`;
/// a conjunction with no atoms is `true`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DnfPred {
    pub conjunctions: Vec<Conjunction>,
}

impl fmt::Display for DnfPred {
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

/// Default cap on the number of conjunctions `to_dnf` may produce.
pub const DNF_CONJUNCTION_LIMIT: usize = 256;

/// Converts a predicate to disjunctive normal form, pushing negations down to
/// atom operators (`!(a < b)` becomes `a >= b`) and distributing `&&` over
/// `||`. Fails with [`PredicateError::DnfLimit`] when the result would exceed
/// [`DNF_CONJUNCTION_LIMIT`] conjunctions.
pub fn to_dnf(p: &Pred) -> Result<DnfPred, PredicateError> {
    to_dnf_with_limit(p, DNF_CONJUNCTION_LIMIT)
}

/// `to_dnf` with an explicit conjunction cap.
pub fn to_dnf_with_limit(p: &Pred, limit: usize) -> Result<DnfPred, PredicateError> {
    fn rec(p: &Pred, negated: bool, limit: usize) -> Result<Vec<Conjunction>, PredicateError> {
        match (p, negated) {
            (Pred::Atom(a), false) => Ok(vec![Conjunction {
                atoms: vec![a.clone()],
            }]),
            (Pred::Atom(a), true) => Ok(vec![Conjunction {
                atoms: vec![a.negated()],
            }]),
            (Pred::Not(q), n) => rec(q, !n, limit),
            // Conjunctive position: distribute (cross product of clause sets).
            (Pred::And(l, r), false) | (Pred::Or(l, r), true) => {
                let left = rec(l, negated, limit)?;
                let right = rec(r, negated, limit)?;
                if left.len().saturating_mul(right.len()) > limit {
                    return Err(PredicateError::DnfLimit { limit });
                }
                let mut out = Vec::with_capacity(left.len() * right.len());
                for cl in &left {
                    for cr in &right {
                        let mut atoms = cl.atoms.clone();
                        atoms.extend(cr.atoms.iter().cloned());
                        out.push(Conjunction { atoms });
                    }
                }
                Ok(out)
            }
            // Disjunctive position: concatenate clause sets.
            (Pred::Or(l, r), false) | (Pred::And(l, r), true) => {
                let mut out = rec(l, negated, limit)?;
                out.extend(rec(r, negated, limit)?);
                if out.len() > limit {
                    return Err(PredicateError::DnfLimit { limit });
                }
                Ok(out)
            }
        }
    }
    Ok(DnfPred {
        conjunctions: rec(p, false, limit)?,
    })
}

/// Replaces every local variable with its bound constant value.
fn substitute_expr(e: &Expr, b: &Binding) -> Result<Expr, PredicateError> {
    Ok(match e {
        Expr::Int(_) | Expr::Bool(_) => e.clone(),
        Expr::Var(v) => {
            if v.scope == Scope::Local {
                match b.get(&v.name) {
                    Some(Value::Int(n)) => Expr::Int(n),
                    Some(Value::Bool(x)) => Expr::Bool(x),
                    None => return Err(PredicateError::UnboundLocal(v.name.to_string())),
                }
            } else {
                e.clone()
            }
        }
        Expr::Add(a, c) => Expr::Add(
            Box::new(substitute_expr(a, b)?),
            Box::new(substitute_expr(c, b)?),
        ),
        Expr::Sub(a, c) => Expr::Sub(
            Box::new(substitute_expr(a, b)?),
            Box::new(substitute_expr(c, b)?),
        ),
        Expr::Mul(a, c) => Expr::Mul(
            Box::new(substitute_expr(a, b)?),
            Box::new(substitute_expr(c, b)?),
        ),
        Expr::Neg(a) => Expr::Neg(Box::new(substitute_expr(a, b)?)),
    })
}

/// Replaces every local variable in an atom with its bound constant value.
pub(crate) fn substitute_atom(a: &Atom, b: &Binding) -> Result<Atom, PredicateError> {
    Ok(Atom {
        lhs: substitute_expr(&a.lhs, b)?,
        op: a.op,
        rhs: substitute_expr(&a.rhs, b)?,
    })
}

/// Globalizes a predicate: snapshots the local variables out of `b`, folds
/// constants, and rewrites each separable atom into its canonical linear
/// shape (shared terms on the left, a folded integer key on the right).
///
/// A predicate with no local variables and already-canonical atoms comes back
/// structurally identical. A predicate that folds to constant `false` is
/// rejected with [`PredicateError::PermanentlyFalse`]: no store state could
/// ever satisfy it, so a wait on it would never return. Constant `true` folds
/// to [`Pred::always_true`].
pub fn globalize(p: &Pred, b: &Binding) -> Result<Pred, PredicateError> {
    enum F {
        Const(bool),
        P(Pred),
    }

    fn rec(p: &Pred, b: &Binding) -> Result<F, PredicateError> {
        Ok(match p {
            Pred::Atom(a) => {
                let atom = substitute_atom(a, b)?;
                match linear::rebuild_atom(&atom) {
                    linear::Rebuilt::Const(t) => F::Const(t),
                    linear::Rebuilt::Atom(a2) => F::P(Pred::Atom(a2)),
                }
            }
            Pred::And(l, r) => match (rec(l, b)?, rec(r, b)?) {
                (F::Const(false), _) | (_, F::Const(false)) => F::Const(false),
                (F::Const(true), x) | (x, F::Const(true)) => x,
                (F::P(l2), F::P(r2)) => F::P(Pred::and(l2, r2)),
            },
            Pred::Or(l, r) => match (rec(l, b)?, rec(r, b)?) {
                (F::Const(true), _) | (_, F::Const(true)) => F::Const(true),
                (F::Const(false), x) | (x, F::Const(false)) => x,
                (F::P(l2), F::P(r2)) => F::P(Pred::or(l2, r2)),
            },
            Pred::Not(q) => match rec(q, b)? {
                F::Const(t) => F::Const(!t),
                F::P(q2) => F::P(Pred::not(q2)),
            },
        })
    }

    match rec(p, b)? {
        F::Const(false) => Err(PredicateError::PermanentlyFalse),
        F::Const(true) => Ok(Pred::always_true()),
        F::P(out) => Ok(out),
    }
}

fn checked(op: fn(i64, i64) -> Option<i64>, a: i64, b: i64) -> Result<i64, PredicateError> {
    op(a, b).ok_or(PredicateError::Overflow)
}

/// Evaluates an expression against the store, with locals from `b`.
pub fn eval_expr(e: &Expr, store: &Store, b: &Binding) -> Result<Value, PredicateError> {
    Ok(match e {
        Expr::Int(n) => Value::Int(*n),
        Expr::Bool(x) => Value::Bool(*x),
        Expr::Var(v) => match v.scope {
            Scope::Shared => store.get(&v.name)?,
            Scope::Local => b
                .get(&v.name)
                .ok_or_else(|| PredicateError::UnboundLocal(v.name.to_string()))?,
        },
        Expr::Add(a, c) => Value::Int(checked(
            i64::checked_add,
            eval_expr(a, store, b)?.as_int()?,
            eval_expr(c, store, b)?.as_int()?,
        )?),
        Expr::Sub(a, c) => Value::Int(checked(
            i64::checked_sub,
            eval_expr(a, store, b)?.as_int()?,
            eval_expr(c, store, b)?.as_int()?,
        )?),
        Expr::Mul(a, c) => Value::Int(checked(
            i64::checked_mul,
            eval_expr(a, store, b)?.as_int()?,
            eval_expr(c, store, b)?.as_int()?,
        )?),
        Expr::Neg(a) => Value::Int(
            eval_expr(a, store, b)?
                .as_int()?
                .checked_neg()
                .ok_or(PredicateError::Overflow)?,
        ),
    })
}

/// Evaluates a single atom.
pub fn eval_atom(a: &Atom, store: &Store, b: &Binding) -> Result<bool, PredicateError> {
    let l = eval_expr(&a.lhs, store, b)?;
    let r = eval_expr(&a.rhs, store, b)?;
    match (l, r) {
        (Value::Int(x), Value::Int(y)) => Ok(a.op.eval_int(x, y)),
        (Value::Bool(x), Value::Bool(y)) => match a.op {
            CmpOp::Eq => Ok(x == y),
            CmpOp::Ne => Ok(x != y),
            _ => Err(PredicateError::TypeMismatch(format!(
                "ordered comparison `{}` over bools",
                a.op
            ))),
        },
        _ => Err(PredicateError::TypeMismatch(
            "comparison between int and bool".into(),
        )),
    }
}

/// Evaluates a predicate tree against the store, with locals from `b`.
pub fn eval_pred(p: &Pred, store: &Store, b: &Binding) -> Result<bool, PredicateError> {
    Ok(match p {
        Pred::Atom(a) => eval_atom(a, store, b)?,
        Pred::And(l, r) => eval_pred(l, store, b)? && eval_pred(r, store, b)?,
        Pred::Or(l, r) => eval_pred(l, store, b)? || eval_pred(r, store, b)?,
        Pred::Not(q) => !eval_pred(q, store, b)?,
    })
}

/// Evaluates a DNF predicate against the store. The predicate is expected to
/// be globalized; any remaining local variable is an evaluation error.
pub fn eval_dnf(p: &DnfPred, store: &Store) -> Result<bool, PredicateError> {
    let empty = Binding::new();
    for c in &p.conjunctions {
        let mut all = true;
        for a in &c.atoms {
            if !eval_atom(a, store, &empty)? {
                all = false;
                break;
            }
        }
        if all {
            return Ok(true);
        }
    }
    Ok(false)
}
