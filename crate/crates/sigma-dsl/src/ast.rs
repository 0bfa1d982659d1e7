//! Syntax tree for model documents. The formatter renders from this tree;
//! lowering turns it into a stream graph plus reactive formulas.

use sigma_core::Value;

use crate::lexer::Pos;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub items: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Directive(Directive),
    Formula {
        name: String,
        pos: Pos,
        expr: Expr,
    },
    Pipeline(Pipeline),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Directive {
    Seed(u64),
    /// Virtual-time emission period for timed sources.
    Period(i64),
    /// Time compression scale, kept as decimal text for exact arithmetic.
    Scale(String),
    Horizon(i64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub stages: Vec<Stage>,
    /// `ops[i]` joins `stages[i]` to `stages[i+1]`.
    pub ops: Vec<PipeOp>,
    pub pos: Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipeOp {
    /// `->`: the feed arrow out of a source (synchronous).
    Feed,
    /// `|>`: synchronous hand-off.
    Sync,
    /// `~>`: asynchronous hand-off.
    Async,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    Source {
        path: String,
        pos: Pos,
    },
    Sink {
        path: String,
        pos: Pos,
    },
    Node {
        behavior: String,
        params: Vec<(String, Value)>,
        alias: Option<String>,
        pos: Pos,
    },
    Agent {
        behavior: String,
        params: Vec<(String, Value)>,
        alias: Option<String>,
        pos: Pos,
    },
    Split {
        policy: Policy,
        branches: Vec<Pipeline>,
        pos: Pos,
    },
    Feedback {
        field: String,
        cmp: String,
        than: Value,
        fuel: i64,
        body: Pipeline,
        pos: Pos,
    },
    Template {
        key: String,
        body: Pipeline,
        pos: Pos,
    },
}

impl Stage {
    pub fn pos(&self) -> Pos {
        match self {
            Stage::Source { pos, .. }
            | Stage::Sink { pos, .. }
            | Stage::Node { pos, .. }
            | Stage::Agent { pos, .. }
            | Stage::Split { pos, .. }
            | Stage::Feedback { pos, .. }
            | Stage::Template { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Broadcast,
    RoundRobin,
    Key(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    Num(f64, String),
    Ref(String, Pos),
    Call(String, Vec<Expr>, Pos),
    Neg(Box<Expr>),
    Binary(&'static str, Box<Expr>, Box<Expr>),
}
