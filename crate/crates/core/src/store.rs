//! The shared-variable store and per-wait local bindings.
//!
//! A [`Store`] holds the monitor-protected state that predicates evaluate
//! against. Variables are declared once with a fixed domain; reads and writes
//! are type-checked. A [`Binding`] supplies the values of a waiting thread's
//! local variables at the moment it issues a guarded wait.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::error::{MonitorError, PredicateError};

/// Value domain of a variable or expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    Int,
    Bool,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Int => f.write_str("int"),
            Domain::Bool => f.write_str("bool"),
        }
    }
}

/// Whether a variable lives in the monitor's shared store or in the waiting
/// thread's frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    Shared,
    Local,
}

/// A runtime value. Integers are 64-bit; arithmetic overflow is an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Value {
    Int(i64),
    Bool(bool),
}

impl Value {
    pub fn domain(self) -> Domain {
        match self {
            Value::Int(_) => Domain::Int,
            Value::Bool(_) => Domain::Bool,
        }
    }

    pub fn as_int(self) -> Result<i64, PredicateError> {
        match self {
            Value::Int(n) => Ok(n),
            Value::Bool(_) => Err(PredicateError::TypeMismatch(
                "expected int, found bool".into(),
            )),
        }
    }

    pub fn as_bool(self) -> Result<bool, PredicateError> {
        match self {
            Value::Bool(b) => Ok(b),
            Value::Int(_) => Err(PredicateError::TypeMismatch(
                "expected bool, found int".into(),
            )),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::Int(n)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

/// Declared shared variables and their domains, as seen by the parser.
#[derive(Debug, Clone, Default)]
pub struct VarDecls {
    map: BTreeMap<Arc<str>, Domain>,
}

impl VarDecls {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a shared variable; returns `false` if the name was taken.
    pub fn declare(&mut self, name: &str, domain: Domain) -> bool {
        if self.map.contains_key(name) {
            return false;
        }
        self.map.insert(Arc::from(name), domain);
        true
    }

    pub fn domain_of(&self, name: &str) -> Option<Domain> {
        self.map.get(name).copied()
    }

    /// The interned name, so predicate nodes share one allocation per variable.
    pub fn interned(&self, name: &str) -> Option<Arc<str>> {
        self.map.get_key_value(name).map(|(k, _)| Arc::clone(k))
    }

    pub fn names(&self) -> impl Iterator<Item = &Arc<str>> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// The monitor's shared state: a flat set of declared, typed variables.
#[derive(Debug, Clone, Default)]
pub struct Store {
    decls: VarDecls,
    index: HashMap<Arc<str>, usize>,
    values: Vec<Value>,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a variable with its initial value (which fixes the domain).
    pub fn declare(&mut self, name: &str, initial: Value) -> Result<(), MonitorError> {
        if !self.decls.declare(name, initial.domain()) {
            return Err(MonitorError::DuplicateVariable(name.to_string()));
        }
        let interned = self.decls.interned(name).expect("just declared");
        self.index.insert(interned, self.values.len());
        self.values.push(initial);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Value, PredicateError> {
        self.try_get(name)
            .ok_or_else(|| PredicateError::UnknownVariable(name.to_string()))
    }

    pub fn try_get(&self, name: &str) -> Option<Value> {
        self.index.get(name).map(|&i| self.values[i])
    }

    pub fn set(&mut self, name: &str, value: Value) -> Result<(), PredicateError> {
        let &i = self
            .index
            .get(name)
            .ok_or_else(|| PredicateError::UnknownVariable(name.to_string()))?;
        if self.values[i].domain() != value.domain() {
            return Err(PredicateError::TypeMismatch(format!(
                "variable `{name}` is {}, cannot assign {}",
                self.values[i].domain(),
                value.domain()
            )));
        }
        self.values[i] = value;
        Ok(())
    }

    pub fn decls(&self) -> &VarDecls {
        &self.decls
    }
}

/// Values of a waiting thread's local variables, captured at the wait site.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Binding {
    map: BTreeMap<Arc<str>, Value>,
}

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: &str, value: impl Into<Value>) {
        self.map.insert(Arc::from(name), value.into());
    }

    pub fn with(mut self, name: &str, value: impl Into<Value>) -> Self {
        self.set(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<Value> {
        self.map.get(name).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Arc<str>, &Value)> {
        self.map.iter()
    }
}
