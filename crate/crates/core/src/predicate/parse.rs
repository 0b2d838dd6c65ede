//! Text syntax for wait conditions.
//!
//! The grammar is the C expression subset you would expect, with `$name`
//! denoting a thread-local integer (snapshotted at wait time) and bare
//! boolean variables usable as atoms:
//!
//! ```text
//! pred  := or
//! or    := and ("||" and)*
//! and   := not ("&&" not)*
//! not   := "!" not | cmp
//! cmp   := sum (("==" | "=" | "!=" | "<=" | ">=" | "<" | ">") sum)?
//! sum   := prod (("+" | "-") prod)*
//! prod  := unary ("*" unary)*
//! unary := "-" unary | INT | "true" | "false" | IDENT | "$" IDENT | "(" pred ")"
//! ```
//!
//! Shared variables must be declared before parsing; referencing an unknown
//! name is a parse error, not a latent runtime one. Locals are always
//! integers in this syntax.

use crate::error::PredicateError;
use crate::predicate::{Atom, CmpOp, Expr, Pred, VarRef};
use crate::store::{Domain, VarDecls};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Ident(String),
    Local(String),
    LParen,
    RParen,
    AndAnd,
    OrOr,
    Not,
    Cmp(CmpOp),
    Plus,
    Minus,
    Star,
}

fn err(at: usize, msg: impl Into<String>) -> PredicateError {
    PredicateError::Parse {
        at,
        msg: msg.into(),
    }
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, PredicateError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let at = i;
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'(' => {
                out.push((at, Tok::LParen));
                i += 1;
            }
            b')' => {
                out.push((at, Tok::RParen));
                i += 1;
            }
            b'+' => {
                out.push((at, Tok::Plus));
                i += 1;
            }
            b'-' => {
                out.push((at, Tok::Minus));
                i += 1;
            }
            b'*' => {
                out.push((at, Tok::Star));
                i += 1;
            }
            b'&' => {
                if bytes.get(i + 1) == Some(&b'&') {
                    out.push((at, Tok::AndAnd));
                    i += 2;
                } else {
                    return Err(err(at, "expected `&&`"));
                }
            }
            b'|' => {
                if bytes.get(i + 1) == Some(&b'|') {
                    out.push((at, Tok::OrOr));
                    i += 2;
                } else {
                    return Err(err(at, "expected `||`"));
                }
            }
            b'!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push((at, Tok::Cmp(CmpOp::Ne)));
                    i += 2;
                } else {
                    out.push((at, Tok::Not));
                    i += 1;
                }
            }
            b'=' => {
                out.push((at, Tok::Cmp(CmpOp::Eq)));
                i += if bytes.get(i + 1) == Some(&b'=') { 2 } else { 1 };
            }
            b'<' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push((at, Tok::Cmp(CmpOp::Le)));
                    i += 2;
                } else {
                    out.push((at, Tok::Cmp(CmpOp::Lt)));
                    i += 1;
                }
            }
            b'>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push((at, Tok::Cmp(CmpOp::Ge)));
                    i += 2;
                } else {
                    out.push((at, Tok::Cmp(CmpOp::Gt)));
                    i += 1;
                }
            }
            b'$' => {
                let start = i + 1;
                let end = ident_end(bytes, start);
                if end == start {
                    return Err(err(at, "expected a name after `$`"));
                }
                out.push((at, Tok::Local(src[start..end].to_string())));
                i = end;
            }
            b'0'..=b'9' => {
                let end = ident_end(bytes, i);
                let text = &src[i..end];
                let n: i64 = text
                    .parse()
                    .map_err(|_| err(at, format!("bad integer literal `{text}`")))?;
                out.push((at, Tok::Int(n)));
                i = end;
            }
            _ if c.is_ascii_alphabetic() || c == b'_' => {
                let end = ident_end(bytes, i);
                out.push((at, Tok::Ident(src[i..end].to_string())));
                i = end;
            }
            _ => return Err(err(at, format!("unexpected character `{}`", c as char))),
        }
    }
    Ok(out)
}

fn ident_end(bytes: &[u8], start: usize) -> usize {
    let mut i = start;
    while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
        i += 1;
    }
    i
}

// Surface tree: comparisons and boolean connectives are parsed uniformly
// with arithmetic and only separated into Pred vs Expr while lowering.
struct S {
    at: usize,
    k: K,
}

enum K {
    Int(i64),
    Bool(bool),
    Var(String),
    Local(String),
    Neg(Box<S>),
    Add(Box<S>, Box<S>),
    Sub(Box<S>, Box<S>),
    Mul(Box<S>, Box<S>),
    Cmp(CmpOp, Box<S>, Box<S>),
    And(Box<S>, Box<S>),
    Or(Box<S>, Box<S>),
    Not(Box<S>),
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn at(&self) -> usize {
        self.toks.get(self.pos).map_or(self.len, |(a, _)| *a)
    }

    fn bump(&mut self) -> Option<(usize, Tok)> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn or(&mut self) -> Result<S, PredicateError> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::OrOr) {
            let at = self.at();
            self.bump();
            let rhs = self.and()?;
            lhs = S {
                at,
                k: K::Or(Box::new(lhs), Box::new(rhs)),
            };
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<S, PredicateError> {
        let mut lhs = self.not()?;
        while self.peek() == Some(&Tok::AndAnd) {
            let at = self.at();
            self.bump();
            let rhs = self.not()?;
            lhs = S {
                at,
                k: K::And(Box::new(lhs), Box::new(rhs)),
            };
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<S, PredicateError> {
        if self.peek() == Some(&Tok::Not) {
            let at = self.at();
            self.bump();
            let inner = self.not()?;
            return Ok(S {
                at,
                k: K::Not(Box::new(inner)),
            });
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<S, PredicateError> {
        let lhs = self.sum()?;
        if let Some(&Tok::Cmp(op)) = self.peek() {
            let at = self.at();
            self.bump();
            let rhs = self.sum()?;
            if let Some(&Tok::Cmp(_)) = self.peek() {
                return Err(err(self.at(), "comparisons do not chain"));
            }
            return Ok(S {
                at,
                k: K::Cmp(op, Box::new(lhs), Box::new(rhs)),
            });
        }
        Ok(lhs)
    }

    fn sum(&mut self) -> Result<S, PredicateError> {
        let mut lhs = self.prod()?;
        loop {
            let op = match self.peek() {
                Some(&Tok::Plus) => K::Add as fn(Box<S>, Box<S>) -> K,
                Some(&Tok::Minus) => K::Sub as fn(Box<S>, Box<S>) -> K,
                _ => break,
            };
            let at = self.at();
            self.bump();
            let rhs = self.prod()?;
            lhs = S {
                at,
                k: op(Box::new(lhs), Box::new(rhs)),
            };
        }
        Ok(lhs)
    }

    fn prod(&mut self) -> Result<S, PredicateError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Tok::Star) {
            let at = self.at();
            self.bump();
            let rhs = self.unary()?;
            lhs = S {
                at,
                k: K::Mul(Box::new(lhs), Box::new(rhs)),
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<S, PredicateError> {
        let at = self.at();
        match self.bump() {
            Some((_, Tok::Minus)) => {
                let inner = self.unary()?;
                Ok(S {
                    at,
                    k: K::Neg(Box::new(inner)),
                })
            }
            Some((_, Tok::Int(n))) => Ok(S { at, k: K::Int(n) }),
            Some((_, Tok::Ident(name))) => match name.as_str() {
                "true" => Ok(S {
                    at,
                    k: K::Bool(true),
                }),
                "false" => Ok(S {
                    at,
                    k: K::Bool(false),
                }),
                _ => Ok(S {
                    at,
                    k: K::Var(name),
                }),
            },
            Some((_, Tok::Local(name))) => Ok(S {
                at,
                k: K::Local(name),
            }),
            Some((_, Tok::LParen)) => {
                let inner = self.or()?;
                match self.bump() {
                    Some((_, Tok::RParen)) => Ok(inner),
                    _ => Err(err(self.len, "expected `)`")),
                }
            }
            Some((a, t)) => Err(err(a, format!("unexpected token `{t:?}`"))),
            None => Err(err(self.len, "unexpected end of input")),
        }
    }
}

fn lower_expr(s: &S, decls: &VarDecls) -> Result<Expr, PredicateError> {
    match &s.k {
        K::Int(n) => Ok(Expr::Int(*n)),
        K::Bool(b) => Ok(Expr::Bool(*b)),
        K::Var(name) => {
            let domain = decls
                .domain_of(name)
                .ok_or_else(|| err(s.at, format!("unknown variable `{name}`")))?;
            Ok(Expr::Var(VarRef::new(name, crate::store::Scope::Shared, domain)))
        }
        K::Local(name) => Ok(Expr::Var(VarRef::local_int(name))),
        K::Neg(a) => Expr::neg(lower_expr(a, decls)?).map_err(|e| retag(s.at, e)),
        K::Add(a, b) => Expr::add(lower_expr(a, decls)?, lower_expr(b, decls)?)
            .map_err(|e| retag(s.at, e)),
        K::Sub(a, b) => Expr::sub(lower_expr(a, decls)?, lower_expr(b, decls)?)
            .map_err(|e| retag(s.at, e)),
        K::Mul(a, b) => Expr::mul(lower_expr(a, decls)?, lower_expr(b, decls)?)
            .map_err(|e| retag(s.at, e)),
        K::Cmp(..) | K::And(..) | K::Or(..) | K::Not(..) => {
            Err(err(s.at, "condition used where a value was expected"))
        }
    }
}

fn lower_pred(s: &S, decls: &VarDecls) -> Result<Pred, PredicateError> {
    match &s.k {
        K::Cmp(op, l, r) => {
            let atom = Atom::new(lower_expr(l, decls)?, *op, lower_expr(r, decls)?)
                .map_err(|e| retag(s.at, e))?;
            Ok(Pred::Atom(atom))
        }
        K::And(l, r) => Ok(Pred::and(lower_pred(l, decls)?, lower_pred(r, decls)?)),
        K::Or(l, r) => Ok(Pred::or(lower_pred(l, decls)?, lower_pred(r, decls)?)),
        K::Not(p) => Ok(Pred::not(lower_pred(p, decls)?)),
        // A bare boolean variable is sugar for `name == true`.
        K::Var(name) => match decls.domain_of(name) {
            Some(Domain::Bool) => Ok(Pred::Atom(
                Atom::new(
                    Expr::Var(VarRef::shared_bool(name)),
                    CmpOp::Eq,
                    Expr::Bool(true),
                )
                .expect("bool/bool equality is well typed"),
            )),
            Some(Domain::Int) => Err(err(
                s.at,
                format!("`{name}` is an integer; compare it with something"),
            )),
            None => Err(err(s.at, format!("unknown variable `{name}`"))),
        },
        K::Bool(b) => Ok(Pred::Atom(
            Atom::new(Expr::Bool(true), CmpOp::Eq, Expr::Bool(*b))
                .expect("bool/bool equality is well typed"),
        )),
        K::Int(_) | K::Neg(_) | K::Add(..) | K::Sub(..) | K::Mul(..) | K::Local(_) => Err(err(
            s.at,
            "value used where a condition was expected",
        )),
    }
}

fn retag(at: usize, e: PredicateError) -> PredicateError {
    match e {
        PredicateError::Parse { .. } => e,
        other => err(at, other.to_string()),
    }
}

/// Parses a wait condition. Shared variables resolve against `decls`;
/// `$name` references are thread-local integers.
pub fn parse_pred(src: &str, decls: &VarDecls) -> Result<Pred, PredicateError> {
    let toks = tokenize(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        len: src.len(),
    };
    let s = p.or()?;
    if let Some((a, t)) = p.bump() {
        return Err(err(a, format!("unexpected token `{t:?}` after condition")));
    }
    lower_pred(&s, decls)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predicate::{classify, to_dnf, PredClass};

    fn decls() -> VarDecls {
        let mut d = VarDecls::new();
        d.declare("count", Domain::Int);
        d.declare("cap", Domain::Int);
        d.declare("x", Domain::Int);
        d.declare("y", Domain::Int);
        d.declare("waiting", Domain::Int);
        d.declare("closing", Domain::Bool);
        d
    }

    #[test]
    fn parses_threshold_with_local() {
        let p = parse_pred("count >= $num", &decls()).unwrap();
        let want = Pred::Atom(
            Atom::new(
                Expr::Var(VarRef::shared_int("count")),
                CmpOp::Ge,
                Expr::Var(VarRef::local_int("num")),
            )
            .unwrap(),
        );
        assert_eq!(p, want);
        assert_eq!(classify(&p), PredClass::Complex);
    }

    #[test]
    fn arithmetic_precedence_binds_tighter_than_comparison() {
        let p = parse_pred("x + $b > 2*y + $a", &decls()).unwrap();
        let Pred::Atom(a) = &p else { panic!("expected atom") };
        assert_eq!(a.op, CmpOp::Gt);
        assert_eq!(
            a.lhs,
            Expr::add(
                Expr::Var(VarRef::shared_int("x")),
                Expr::Var(VarRef::local_int("b"))
            )
            .unwrap()
        );
    }

    #[test]
    fn and_binds_tighter_than_or() {
        let p = parse_pred("x > 0 && y > 0 || count > 0", &decls()).unwrap();
        assert!(matches!(p, Pred::Or(..)));
        let dnf = to_dnf(&p).unwrap();
        assert_eq!(dnf.conjunctions.len(), 2);
        assert_eq!(dnf.conjunctions[0].atoms.len(), 2);
        assert_eq!(dnf.conjunctions[1].atoms.len(), 1);
    }

    #[test]
    fn bare_bool_variable_is_an_atom() {
        let p = parse_pred("waiting > 0 || closing", &decls()).unwrap();
        let Pred::Or(_, r) = &p else { panic!("expected or") };
        let Pred::Atom(a) = r.as_ref() else { panic!("expected atom") };
        assert_eq!(a.rhs, Expr::Bool(true));
    }

    #[test]
    fn negation_parses_and_flips_in_dnf() {
        let p = parse_pred("!(x < y)", &decls()).unwrap();
        let dnf = to_dnf(&p).unwrap();
        assert_eq!(dnf.conjunctions.len(), 1);
        assert_eq!(dnf.conjunctions[0].atoms[0].op, CmpOp::Ge);
    }

    #[test]
    fn unary_minus_and_parens() {
        let p = parse_pred("-(x + 1) <= y - -2", &decls()).unwrap();
        assert!(matches!(p, Pred::Atom(_)));
    }

    #[test]
    fn rejects_malformed_input() {
        let d = decls();
        for bad in [
            "count >",           // truncated
            "count >= bogus",    // unknown variable
            "x > true",          // int/bool comparison
            "x",                 // int as condition
            "$n",                // local as condition
            "2y > 1",            // implicit multiplication
            "x & y",             // single ampersand
            "x < y < count",     // chained comparison
            "closing + 1 > 0",   // bool in arithmetic
            "(x > 0",            // unbalanced paren
            "x > 99999999999999999999", // literal overflow
        ] {
            assert!(
                parse_pred(bad, &d).is_err(),
                "`{bad}` unexpectedly parsed"
            );
        }
    }

    #[test]
    fn error_positions_point_at_the_problem() {
        let e = parse_pred("count >= bogus", &decls()).unwrap_err();
        match e {
            PredicateError::Parse { at, .. } => assert_eq!(at, 9),
            other => panic!("expected parse error, got {other}"),
        }
    }
}
