//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised while building, transforming, or evaluating predicates.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredicateError {
    #[error("unknown shared variable `{0}`")]
    UnknownVariable(String),

    #[error("local variable `${0}` is not bound")]
    UnboundLocal(String),

    #[error("type mismatch: {0}")]
    TypeMismatch(String),

    #[error("integer overflow")]
    Overflow,

    #[error("product mixes shared and local variables")]
    MixedScopeProduct,

    #[error("DNF conversion exceeded the {limit}-conjunction limit")]
    DnfLimit { limit: usize },

    /// The predicate folded to `false` with every local substituted; a wait on
    /// it could never be satisfied by any store state.
    #[error("predicate is constantly false under the given binding")]
    PermanentlyFalse,

    #[error("predicate still contains local variables; globalize it first")]
    NotGlobalized,

    #[error("parse error at byte {at}: {msg}")]
    Parse { at: usize, msg: String },
}

/// Errors raised by monitor construction and monitor operations.
#[derive(Debug, Error)]
pub enum MonitorError {
    #[error(transparent)]
    Predicate(#[from] PredicateError),

    #[error("duplicate shared variable `{0}`")]
    DuplicateVariable(String),

    #[error("static predicate `{text}` must reference shared variables only")]
    StaticPredicateNotShared { text: String },
}
