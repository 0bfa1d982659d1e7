//! Reactive layer: declarative time-varying values with implicit lifting
//! and push-based, unidirectional, glitch-free propagation.
//!
//! A behavior is a time-varying value in a dependency DAG. Sources are set
//! directly; formula behaviors are defined declaratively over other
//! behaviors, spreadsheet style, and every operator or catalog function in a
//! formula is lifted implicitly. Setting a source recomputes each transitive
//! dependent exactly once, in topological order, so no dependent ever
//! observes a half-propagated state. A formula with any unset input stays
//! unset rather than failing.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::catalog::{self, CatalogError};
use crate::value::{binary_op, Value, ValueError};

/// Index of a behavior inside one reactive graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BehaviorId(pub usize);

impl fmt::Display for BehaviorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

/// Formula expression. References are by behavior id; name resolution is the
/// caller's concern (the DSL resolves names, tests build ids directly).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Value),
    Ref(BehaviorId),
    Unary(&'static str, Box<Expr>),
    Binary(&'static str, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
}

impl Expr {
    pub fn refs(&self, out: &mut Vec<BehaviorId>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Ref(id) => out.push(*id),
            Expr::Unary(_, e) => e.refs(out),
            Expr::Binary(_, a, b) => {
                a.refs(out);
                b.refs(out);
            }
            Expr::Call(_, args) => {
                for a in args {
                    a.refs(out);
                }
            }
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ReactiveError {
    #[error("behavior `{0}` already defined")]
    Redefined(String),
    #[error("unknown behavior id {0}")]
    UnknownId(BehaviorId),
    #[error("unknown behavior name `{0}`")]
    UnknownName(String),
    #[error("formula for `{0}` would create a dependency cycle")]
    Cycle(String),
    #[error("cannot set formula-defined behavior `{0}`")]
    SetOnFormula(String),
    #[error("behavior `{0}` is unset")]
    Unset(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Value(#[from] ValueError),
}

enum NodeKind {
    Source,
    Formula(Expr),
}

struct Node {
    name: String,
    kind: NodeKind,
    value: Option<Value>,
    dependents: Vec<BehaviorId>,
    /// 0 for sources, 1 + max(input ranks) for formulas.
    rank: usize,
    recomputes: u64,
}

/// One reactive dependency graph plus its current values.
pub struct ReactiveEngine {
    nodes: Vec<Node>,
    by_name: HashMap<String, BehaviorId>,
    step: u64,
}

impl Default for ReactiveEngine {
    fn default() -> Self {
        Self::new()
    }
}

impl ReactiveEngine {
    pub fn new() -> ReactiveEngine {
        ReactiveEngine {
            nodes: Vec::new(),
            by_name: HashMap::new(),
            step: 0,
        }
    }

    /// Declares a source behavior (set directly, never computed).
    pub fn source(&mut self, name: &str) -> Result<BehaviorId, ReactiveError> {
        if self.by_name.contains_key(name) {
            return Err(ReactiveError::Redefined(name.to_string()));
        }
        let id = BehaviorId(self.nodes.len());
        self.nodes.push(Node {
            name: name.to_string(),
            kind: NodeKind::Source,
            value: None,
            dependents: Vec::new(),
            rank: 0,
            recomputes: 0,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Defines a formula behavior. All referenced behaviors must already
    /// exist, which keeps the dependency relation acyclic by construction;
    /// a formula referencing its own name is reported as a cycle.
    pub fn define(&mut self, name: &str, expr: Expr) -> Result<BehaviorId, ReactiveError> {
        if self.by_name.contains_key(name) {
            return Err(ReactiveError::Redefined(name.to_string()));
        }
        let mut refs = Vec::new();
        expr.refs(&mut refs);
        refs.sort_unstable();
        refs.dedup();
        let mut rank = 0;
        for r in &refs {
            let node = self
                .nodes
                .get(r.0)
                .ok_or(ReactiveError::UnknownId(*r))?;
            rank = rank.max(node.rank + 1);
        }
        // validate any called functions up front
        validate_calls(&expr)?;

        let id = BehaviorId(self.nodes.len());
        self.nodes.push(Node {
            name: name.to_string(),
            kind: NodeKind::Formula(expr),
            value: None,
            dependents: Vec::new(),
            rank,
            recomputes: 0,
        });
        for r in refs {
            self.nodes[r.0].dependents.push(id);
        }
        self.by_name.insert(name.to_string(), id);
        // a formula with all inputs already set evaluates immediately, so
        // declaration order does not matter
        self.recompute(id)?;
        Ok(id)
    }

    pub fn lookup(&self, name: &str) -> Result<BehaviorId, ReactiveError> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| ReactiveError::UnknownName(name.to_string()))
    }

    pub fn name(&self, id: BehaviorId) -> Option<&str> {
        self.nodes.get(id.0).map(|n| n.name.as_str())
    }

    pub fn is_source(&self, id: BehaviorId) -> bool {
        matches!(self.nodes[id.0].kind, NodeKind::Source)
    }

    /// Sets a source behavior and pushes the change through all transitive
    /// dependents in topological (rank) order. Returns the propagation
    /// receipt: the set behavior followed by every recomputed behavior.
    pub fn set(&mut self, id: BehaviorId, value: Value) -> Result<Vec<BehaviorId>, ReactiveError> {
        let node = self
            .nodes
            .get_mut(id.0)
            .ok_or(ReactiveError::UnknownId(id))?;
        if !matches!(node.kind, NodeKind::Source) {
            return Err(ReactiveError::SetOnFormula(node.name.clone()));
        }
        node.value = Some(value);
        self.step += 1;

        // gather transitive dependents once, then evaluate in rank order so
        // each one recomputes exactly once per set
        let mut affected: Vec<BehaviorId> = Vec::new();
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<BehaviorId> = self.nodes[id.0].dependents.clone();
        while let Some(next) = stack.pop() {
            if seen[next.0] {
                continue;
            }
            seen[next.0] = true;
            affected.push(next);
            stack.extend(self.nodes[next.0].dependents.iter().copied());
        }
        affected.sort_by_key(|b| (self.nodes[b.0].rank, b.0));

        let mut receipt = vec![id];
        for b in affected {
            if self.recompute(b)? {
                receipt.push(b);
            }
        }
        Ok(receipt)
    }

    pub fn set_by_name(&mut self, name: &str, value: Value) -> Result<Vec<BehaviorId>, ReactiveError> {
        let id = self.lookup(name)?;
        self.set(id, value)
    }

    /// Samples the current value; unset behaviors are an error.
    pub fn sample(&self, id: BehaviorId) -> Result<Value, ReactiveError> {
        let node = self.nodes.get(id.0).ok_or(ReactiveError::UnknownId(id))?;
        node.value
            .clone()
            .ok_or_else(|| ReactiveError::Unset(node.name.clone()))
    }

    pub fn sample_by_name(&self, name: &str) -> Result<Value, ReactiveError> {
        self.sample(self.lookup(name)?)
    }

    pub fn value(&self, id: BehaviorId) -> Option<&Value> {
        self.nodes.get(id.0).and_then(|n| n.value.as_ref())
    }

    pub fn recompute_count(&self, id: BehaviorId) -> u64 {
        self.nodes[id.0].recomputes
    }

    /// Current values of all behaviors, sorted by name. Unset behaviors are
    /// reported as `unset`.
    pub fn snapshot(&self) -> Vec<(String, Option<Value>)> {
        let mut out: Vec<(String, Option<Value>)> = self
            .nodes
            .iter()
            .map(|n| (n.name.clone(), n.value.clone()))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.name.as_str())
    }

    /// Recomputes one formula node. Returns true when the node evaluated
    /// (all inputs set); with any unset input the node stays unset.
    fn recompute(&mut self, id: BehaviorId) -> Result<bool, ReactiveError> {
        let expr = match &self.nodes[id.0].kind {
            NodeKind::Source => return Ok(false),
            NodeKind::Formula(expr) => expr.clone(),
        };
        match self.eval(&expr)? {
            Some(v) => {
                let node = &mut self.nodes[id.0];
                node.value = Some(v);
                node.recomputes += 1;
                Ok(true)
            }
            None => Ok(false),
        }
    }

    /// Lifted evaluation: `None` bubbles up from any unset reference,
    /// otherwise each operator resolves to its unlifted counterpart applied
    /// to the sampled input values.
    fn eval(&self, expr: &Expr) -> Result<Option<Value>, ReactiveError> {
        Ok(match expr {
            Expr::Lit(v) => Some(v.clone()),
            Expr::Ref(id) => self
                .nodes
                .get(id.0)
                .ok_or(ReactiveError::UnknownId(*id))?
                .value
                .clone(),
            Expr::Unary(op, e) => match self.eval(e)? {
                None => None,
                Some(v) => Some(match *op {
                    "-" => catalog::call_pure("neg", &[v])?,
                    other => return Err(CatalogError::UnknownFunction(other.to_string()).into()),
                }),
            },
            Expr::Binary(op, a, b) => match (self.eval(a)?, self.eval(b)?) {
                (Some(a), Some(b)) => Some(binary_op(op, &a, &b)?),
                _ => None,
            },
            Expr::Call(name, args) => {
                let mut values = Vec::with_capacity(args.len());
                for a in args {
                    match self.eval(a)? {
                        Some(v) => values.push(v),
                        None => return Ok(None),
                    }
                }
                Some(catalog::call_pure(name, &values)?)
            }
        })
    }
}

fn validate_calls(expr: &Expr) -> Result<(), CatalogError> {
    match expr {
        Expr::Lit(_) | Expr::Ref(_) => Ok(()),
        Expr::Unary(_, e) => validate_calls(e),
        Expr::Binary(_, a, b) => {
            validate_calls(a)?;
            validate_calls(b)
        }
        Expr::Call(name, args) => {
            let f = catalog::pure_fn(name)?;
            if f.arity != args.len() {
                return Err(CatalogError::Arity {
                    name: name.clone(),
                    expected: f.arity,
                    got: args.len(),
                });
            }
            for a in args {
                validate_calls(a)?;
            }
            Ok(())
        }
    }
}
