//! The behavior catalog: named transformations that processor nodes run and
//! reactive formulas call.
//!
//! Two layers share one namespace. Pure functions map argument values to a
//! value and are what lifting exposes to the reactive layer. Stream
//! behaviors are (possibly stateful) per-node instances that transform
//! arriving fragments; the stateful ones (ewma, sma, cross, delay) keep
//! their state per node instance and are built from the same update
//! formulas as their pure counterparts.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::fragment::Fragment;
use crate::value::{binary_op, Value, ValueError};

#[derive(Debug, Error, PartialEq)]
pub enum CatalogError {
    #[error("unknown behavior `{0}`")]
    UnknownBehavior(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("`{name}` expects {expected} arguments, got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("`{behavior}` requires parameter `{param}`")]
    MissingParam { behavior: String, param: String },
    #[error(transparent)]
    Value(#[from] ValueError),
}

#[derive(Debug, Error)]
pub enum BehaviorError {
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("duplicate source_seq {0}")]
    DuplicateSeq(u64),
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error("{0}")]
    Other(String),
}

// ---------------------------------------------------------------------------
// Pure functions
// ---------------------------------------------------------------------------

pub type PureFnImpl = fn(&[Value]) -> Result<Value, ValueError>;

#[derive(Clone, Copy)]
pub struct PureFn {
    pub name: &'static str,
    pub arity: usize,
    pub call: PureFnImpl,
}

fn f_add(a: &[Value]) -> Result<Value, ValueError> {
    binary_op("+", &a[0], &a[1])
}
fn f_sub(a: &[Value]) -> Result<Value, ValueError> {
    binary_op("-", &a[0], &a[1])
}
fn f_mul(a: &[Value]) -> Result<Value, ValueError> {
    binary_op("*", &a[0], &a[1])
}
fn f_div(a: &[Value]) -> Result<Value, ValueError> {
    binary_op("/", &a[0], &a[1])
}
fn f_neg(a: &[Value]) -> Result<Value, ValueError> {
    match &a[0] {
        Value::Int(i) => i.checked_neg().map(Value::Int).ok_or(ValueError::Overflow("neg")),
        other => Ok(Value::Num(-other.as_num()?)),
    }
}
fn f_abs(a: &[Value]) -> Result<Value, ValueError> {
    match &a[0] {
        Value::Int(i) => i.checked_abs().map(Value::Int).ok_or(ValueError::Overflow("abs")),
        other => Ok(Value::Num(other.as_num()?.abs())),
    }
}
fn f_min(a: &[Value]) -> Result<Value, ValueError> {
    Ok(Value::Num(a[0].as_num()?.min(a[1].as_num()?)))
}
fn f_max(a: &[Value]) -> Result<Value, ValueError> {
    Ok(Value::Num(a[0].as_num()?.max(a[1].as_num()?)))
}
/// Mid price of a quote: `(bid + ask) / 2`.
fn f_midprice(a: &[Value]) -> Result<Value, ValueError> {
    Ok(Value::Num((a[0].as_num()? + a[1].as_num()?) / 2.0))
}
/// One exponentially weighted moving average step:
/// `ewma(prev, x, alpha) = alpha * x + (1 - alpha) * prev`.
fn f_ewma_update(a: &[Value]) -> Result<Value, ValueError> {
    let (prev, x, alpha) = (a[0].as_num()?, a[1].as_num()?, a[2].as_num()?);
    Ok(Value::Num(alpha * x + (1.0 - alpha) * prev))
}

const PURE_FNS: &[PureFn] = &[
    PureFn { name: "add", arity: 2, call: f_add },
    PureFn { name: "sub", arity: 2, call: f_sub },
    PureFn { name: "mul", arity: 2, call: f_mul },
    PureFn { name: "div", arity: 2, call: f_div },
    PureFn { name: "neg", arity: 1, call: f_neg },
    PureFn { name: "abs", arity: 1, call: f_abs },
    PureFn { name: "min", arity: 2, call: f_min },
    PureFn { name: "max", arity: 2, call: f_max },
    PureFn { name: "midprice", arity: 2, call: f_midprice },
    PureFn { name: "ewma_update", arity: 3, call: f_ewma_update },
];

pub fn pure_fn(name: &str) -> Result<&'static PureFn, CatalogError> {
    PURE_FNS
        .iter()
        .find(|f| f.name == name)
        .ok_or_else(|| CatalogError::UnknownFunction(name.to_string()))
}

pub fn pure_fns() -> impl Iterator<Item = &'static PureFn> {
    PURE_FNS.iter()
}

pub fn call_pure(name: &str, args: &[Value]) -> Result<Value, CatalogError> {
    let f = pure_fn(name)?;
    if args.len() != f.arity {
        return Err(CatalogError::Arity {
            name: name.to_string(),
            expected: f.arity,
            got: args.len(),
        });
    }
    Ok((f.call)(args)?)
}

// ---------------------------------------------------------------------------
// Stream behaviors
// ---------------------------------------------------------------------------

/// A per-node behavior instance. `apply` receives one fragment and pushes
/// zero or more fragments into `out`; returning `Err` means the fragment is
/// dropped and counted against the node.
pub trait StreamBehavior: Send {
    fn apply(&mut self, frag: Fragment, out: &mut Vec<Fragment>) -> Result<(), BehaviorError>;
    /// Stateless behaviors may run on pools larger than one task.
    fn stateless(&self) -> bool {
        false
    }
    /// Called once when the source side is exhausted; buffering behaviors
    /// (resequencers) flush here.
    fn flush(&mut self, _out: &mut Vec<Fragment>) -> Result<(), BehaviorError> {
        Ok(())
    }
}

fn text_param(
    behavior: &str,
    params: &IndexMap<String, Value>,
    name: &str,
    default: Option<&str>,
) -> Result<String, CatalogError> {
    match params.get(name) {
        Some(v) => Ok(v.as_text()?.to_string()),
        None => default.map(str::to_string).ok_or(CatalogError::MissingParam {
            behavior: behavior.to_string(),
            param: name.to_string(),
        }),
    }
}

fn num_param(
    behavior: &str,
    params: &IndexMap<String, Value>,
    name: &str,
    default: Option<f64>,
) -> Result<f64, CatalogError> {
    match params.get(name) {
        Some(v) => Ok(v.as_num()?),
        None => default.ok_or(CatalogError::MissingParam {
            behavior: behavior.to_string(),
            param: name.to_string(),
        }),
    }
}

fn int_param(
    behavior: &str,
    params: &IndexMap<String, Value>,
    name: &str,
    default: Option<i64>,
) -> Result<i64, CatalogError> {
    match params.get(name) {
        Some(v) => Ok(v.as_int()?),
        None => default.ok_or(CatalogError::MissingParam {
            behavior: behavior.to_string(),
            param: name.to_string(),
        }),
    }
}

// -- stateless single-field arithmetic --------------------------------------

struct MapField {
    field: String,
    out_field: String,
    op: MapOp,
}

enum MapOp {
    AddConst(Value),
    MulConst(Value),
    Neg,
    Abs,
}

impl StreamBehavior for MapField {
    fn apply(&mut self, mut frag: Fragment, out: &mut Vec<Fragment>) -> Result<(), BehaviorError> {
        let value = frag
            .get(&self.field)
            .cloned()
            .ok_or_else(|| BehaviorError::MissingField(self.field.clone()))?;
        let new = match &self.op {
            MapOp::AddConst(k) => binary_op("+", &value, k)?,
            MapOp::MulConst(k) => binary_op("*", &value, k)?,
            MapOp::Neg => f_neg(&[value])?,
            MapOp::Abs => f_abs(&[value])?,
        };
        frag.set(&self.out_field, new);
        out.push(frag);
        Ok(())
    }

    fn stateless(&self) -> bool {
        true
    }
}

struct MidPrice {
    bid: String,
    ask: String,
    out_field: String,
}

impl StreamBehavior for MidPrice {
    fn apply(&mut self, mut frag: Fragment, out: &mut Vec<Fragment>) -> Result<(), BehaviorError> {
        let bid = frag
            .get(&self.bid)
            .ok_or_else(|| BehaviorError::MissingField(self.bid.clone()))?
            .as_num()?;
        let ask = frag
            .get(&self.ask)
            .ok_or_else(|| BehaviorError::MissingField(self.ask.clone()))?
            .as_num()?;
        frag.set(&self.out_field, Value::Num((bid + ask) / 2.0));
        out.push(frag);
        Ok(())
    }

    fn stateless(&self) -> bool {
        true
    }
}

// -- stateful time-series operators ------------------------------------------

/// `EWMA_t = alpha * x_t + (1 - alpha) * EWMA_{t-1}`, seeded with the first
/// observation.
struct Ewma {
    field: String,
    out_field: String,
    alpha: f64,
    state: Option<f64>,
}

impl StreamBehavior for Ewma {
    fn apply(&mut self, mut frag: Fragment, out: &mut Vec<Fragment>) -> Result<(), BehaviorError> {
        let x = frag
            .get(&self.field)
            .ok_or_else(|| BehaviorError::MissingField(self.field.clone()))?
            .as_num()?;
        let next = match self.state {
            None => x,
            Some(prev) => self.alpha * x + (1.0 - self.alpha) * prev,
        };
        self.state = Some(next);
        frag.set(&self.out_field, Value::Num(next));
        out.push(frag);
        Ok(())
    }
}

/// Simple moving average over the last `window` observations; during warmup
/// it averages everything seen so far. The sum is recomputed from the buffer
/// on every step so results are bit-identical to a direct per-row oracle.
struct Sma {
    field: String,
    out_field: String,
    window: usize,
    buffer: std::collections::VecDeque<f64>,
}

impl StreamBehavior for Sma {
    fn apply(&mut self, mut frag: Fragment, out: &mut Vec<Fragment>) -> Result<(), BehaviorError> {
        let x = frag
            .get(&self.field)
            .ok_or_else(|| BehaviorError::MissingField(self.field.clone()))?
            .as_num()?;
        self.buffer.push_back(x);
        if self.buffer.len() > self.window {
            self.buffer.pop_front();
        }
        let sum: f64 = self.buffer.iter().sum();
        frag.set(&self.out_field, Value::Num(sum / self.buffer.len() as f64));
        out.push(frag);
        Ok(())
    }
}

/// Crossing detector: emits +1 when `fast` crosses above `slow`, -1 when it
/// crosses below, 0 otherwise. The first observation is always 0.
struct Cross {
    fast: String,
    slow: String,
    out_field: String,
    prev: Option<(f64, f64)>,
}

impl StreamBehavior for Cross {
    fn apply(&mut self, mut frag: Fragment, out: &mut Vec<Fragment>) -> Result<(), BehaviorError> {
        let fast = frag
            .get(&self.fast)
            .ok_or_else(|| BehaviorError::MissingField(self.fast.clone()))?
            .as_num()?;
        let slow = frag
            .get(&self.slow)
            .ok_or_else(|| BehaviorError::MissingField(self.slow.clone()))?
            .as_num()?;
        let signal = match self.prev {
            Some((pf, ps)) if pf <= ps && fast > slow => 1,
            Some((pf, ps)) if pf >= ps && fast < slow => -1,
            _ => 0,
        };
        self.prev = Some((fast, slow));
        frag.set(&self.out_field, Value::Int(signal));
        out.push(frag);
        Ok(())
    }
}

/// Lag operator: replaces the field with the value observed `n` arrivals
/// earlier, holding the first observation during warmup.
struct Delay {
    field: String,
    out_field: String,
    n: usize,
    history: Vec<Value>,
}

impl StreamBehavior for Delay {
    fn apply(&mut self, mut frag: Fragment, out: &mut Vec<Fragment>) -> Result<(), BehaviorError> {
        let x = frag
            .get(&self.field)
            .cloned()
            .ok_or_else(|| BehaviorError::MissingField(self.field.clone()))?;
        self.history.push(x);
        let idx = self.history.len().saturating_sub(1).saturating_sub(self.n);
        frag.set(&self.out_field, self.history[idx.min(self.history.len() - 1)].clone());
        out.push(frag);
        Ok(())
    }
}

/// Drops fragments whose field is not strictly greater than the threshold;
/// drops are counted, never silent.
struct KeepGt {
    field: String,
    threshold: f64,
}

impl StreamBehavior for KeepGt {
    fn apply(&mut self, frag: Fragment, out: &mut Vec<Fragment>) -> Result<(), BehaviorError> {
        let x = frag
            .get(&self.field)
            .ok_or_else(|| BehaviorError::MissingField(self.field.clone()))?
            .as_num()?;
        if x > self.threshold {
            out.push(frag);
        }
        Ok(())
    }
}

/// Adds gaussian-free uniform noise drawn from the node's seeded stream; the
/// one deliberately stochastic behavior, used to exercise determinism tests.
pub struct Jitter {
    pub field: String,
    pub out_field: String,
    pub spread: f64,
    pub rng: ChaCha12Rng,
}

impl StreamBehavior for Jitter {
    fn apply(&mut self, mut frag: Fragment, out: &mut Vec<Fragment>) -> Result<(), BehaviorError> {
        let x = frag
            .get(&self.field)
            .ok_or_else(|| BehaviorError::MissingField(self.field.clone()))?
            .as_num()?;
        let noise = self.rng.gen_range(-self.spread..=self.spread);
        frag.set(&self.out_field, Value::Num(x + noise));
        out.push(frag);
        Ok(())
    }
}

/// Reorders fragments into strictly increasing `source_seq`, buffering gaps.
/// Expected sequence starts at 0; anything still buffered when the stream
/// ends is flushed in order. Duplicate sequence numbers are an error.
pub struct Resequencer {
    next: u64,
    buffer: BTreeMap<u64, Fragment>,
}

impl Resequencer {
    pub fn new() -> Resequencer {
        Resequencer {
            next: 0,
            buffer: BTreeMap::new(),
        }
    }
}

impl Default for Resequencer {
    fn default() -> Self {
        Self::new()
    }
}

impl StreamBehavior for Resequencer {
    fn apply(&mut self, frag: Fragment, out: &mut Vec<Fragment>) -> Result<(), BehaviorError> {
        let seq = frag.source_seq;
        if seq < self.next || self.buffer.contains_key(&seq) {
            return Err(BehaviorError::DuplicateSeq(seq));
        }
        self.buffer.insert(seq, frag);
        while let Some(f) = self.buffer.remove(&self.next) {
            out.push(f);
            self.next += 1;
        }
        Ok(())
    }

    fn flush(&mut self, out: &mut Vec<Fragment>) -> Result<(), BehaviorError> {
        for (_, f) in std::mem::take(&mut self.buffer) {
            out.push(f);
        }
        Ok(())
    }
}

/// Pass-through used by join connectors and plain sinks.
struct Forward;

impl StreamBehavior for Forward {
    fn apply(&mut self, frag: Fragment, out: &mut Vec<Fragment>) -> Result<(), BehaviorError> {
        out.push(frag);
        Ok(())
    }

    fn stateless(&self) -> bool {
        true
    }
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

/// Behavior names that are valid on handler nodes.
pub const HANDLER_BEHAVIORS: &[&str] = &[
    "identity", "add", "scale", "mul", "negate", "abs", "midprice", "ewma", "sma", "cross",
    "delay", "keep_gt", "jitter", "source", "sink",
];

/// Behavior names that are valid on connector nodes.
pub const CONNECTOR_BEHAVIORS: &[&str] = &[
    "join",
    "split_broadcast",
    "split_key",
    "split_roundrobin",
    "resequence",
    "feedback_gate",
    "feedback_entry",
];

pub fn is_known_behavior(name: &str) -> bool {
    HANDLER_BEHAVIORS.contains(&name)
        || CONNECTOR_BEHAVIORS.contains(&name)
        || name == "modify"
        || name == "react"
        || name == "emit"
}

/// Default payload field operated on when a behavior has no `field` param.
pub const DEFAULT_FIELD: &str = "value";

/// Builds a behavior instance for a node. `seed` is the node's derived
/// random stream seed; only stochastic behaviors consume it.
pub fn build_behavior(
    name: &str,
    params: &IndexMap<String, Value>,
    seed: [u8; 32],
) -> Result<Box<dyn StreamBehavior>, CatalogError> {
    use rand::SeedableRng;
    let field = |default: &str| text_param(name, params, "field", Some(default));
    let out_field = |fallback: String| text_param(name, params, "out", Some(&fallback));
    Ok(match name {
        "identity" | "join" | "source" | "sink" | "emit" | "split_broadcast"
        | "feedback_entry" => Box::new(Forward),
        "add" => {
            let f = field(DEFAULT_FIELD)?;
            let k = params.get("k").cloned().ok_or(CatalogError::MissingParam {
                behavior: name.to_string(),
                param: "k".to_string(),
            })?;
            Box::new(MapField {
                out_field: out_field(f.clone())?,
                field: f,
                op: MapOp::AddConst(k),
            })
        }
        "scale" | "mul" => {
            let f = field(DEFAULT_FIELD)?;
            let k = params
                .get("factor")
                .or_else(|| params.get("k"))
                .cloned()
                .ok_or(CatalogError::MissingParam {
                    behavior: name.to_string(),
                    param: "factor".to_string(),
                })?;
            Box::new(MapField {
                out_field: out_field(f.clone())?,
                field: f,
                op: MapOp::MulConst(k),
            })
        }
        "negate" => {
            let f = field(DEFAULT_FIELD)?;
            Box::new(MapField {
                out_field: out_field(f.clone())?,
                field: f,
                op: MapOp::Neg,
            })
        }
        "abs" => {
            let f = field(DEFAULT_FIELD)?;
            Box::new(MapField {
                out_field: out_field(f.clone())?,
                field: f,
                op: MapOp::Abs,
            })
        }
        "midprice" => Box::new(MidPrice {
            bid: text_param(name, params, "bid", Some("bid"))?,
            ask: text_param(name, params, "ask", Some("ask"))?,
            out_field: text_param(name, params, "out", Some("mid"))?,
        }),
        "ewma" => {
            let f = field(DEFAULT_FIELD)?;
            Box::new(Ewma {
                alpha: num_param(name, params, "alpha", None)?,
                out_field: out_field(f.clone())?,
                field: f,
                state: None,
            })
        }
        "sma" => {
            let f = field(DEFAULT_FIELD)?;
            let window = int_param(name, params, "window", None)?;
            if window < 1 {
                return Err(CatalogError::MissingParam {
                    behavior: name.to_string(),
                    param: "window (must be >= 1)".to_string(),
                });
            }
            Box::new(Sma {
                out_field: out_field(f.clone())?,
                field: f,
                window: window as usize,
                buffer: std::collections::VecDeque::new(),
            })
        }
        "cross" => Box::new(Cross {
            fast: text_param(name, params, "fast", None)?,
            slow: text_param(name, params, "slow", None)?,
            out_field: text_param(name, params, "out", Some("signal"))?,
            prev: None,
        }),
        "delay" => {
            let f = field(DEFAULT_FIELD)?;
            let n = int_param(name, params, "n", Some(1))?;
            Box::new(Delay {
                out_field: out_field(f.clone())?,
                field: f,
                n: n.max(0) as usize,
                history: Vec::new(),
            })
        }
        "keep_gt" => Box::new(KeepGt {
            field: field(DEFAULT_FIELD)?,
            threshold: num_param(name, params, "threshold", None)?,
        }),
        "jitter" => {
            let f = field(DEFAULT_FIELD)?;
            Box::new(Jitter {
                out_field: out_field(f.clone())?,
                field: f,
                spread: num_param(name, params, "spread", Some(1.0))?,
                rng: ChaCha12Rng::from_seed(seed),
            })
        }
        "resequence" => Box::new(Resequencer::new()),
        other => return Err(CatalogError::UnknownBehavior(other.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frag(value: f64, seq: u64) -> Fragment {
        Fragment::new(seq as i64, seq).with(DEFAULT_FIELD, Value::Num(value))
    }

    fn run_behavior(b: &mut dyn StreamBehavior, inputs: Vec<Fragment>) -> Vec<Fragment> {
        let mut out = Vec::new();
        for f in inputs {
            b.apply(f, &mut out).unwrap();
        }
        b.flush(&mut out).unwrap();
        out
    }

    #[test]
    fn ewma_matches_update_formula() {
        let mut params = IndexMap::new();
        params.insert("alpha".to_string(), Value::Num(0.25));
        let mut b = build_behavior("ewma", &params, [0; 32]).unwrap();
        let out = run_behavior(b.as_mut(), vec![frag(10.0, 0), frag(20.0, 1), frag(30.0, 2)]);
        let mut expect = 10.0;
        assert_eq!(out[0].get(DEFAULT_FIELD).unwrap(), &Value::Num(expect));
        expect = 0.25 * 20.0 + 0.75 * expect;
        assert_eq!(out[1].get(DEFAULT_FIELD).unwrap(), &Value::Num(expect));
        expect = 0.25 * 30.0 + 0.75 * expect;
        assert_eq!(out[2].get(DEFAULT_FIELD).unwrap(), &Value::Num(expect));
    }

    #[test]
    fn sma_warms_up_over_available_values() {
        let mut params = IndexMap::new();
        params.insert("window".to_string(), Value::Int(2));
        let mut b = build_behavior("sma", &params, [0; 32]).unwrap();
        let out = run_behavior(b.as_mut(), vec![frag(1.0, 0), frag(3.0, 1), frag(5.0, 2)]);
        assert_eq!(out[0].get(DEFAULT_FIELD).unwrap(), &Value::Num(1.0));
        assert_eq!(out[1].get(DEFAULT_FIELD).unwrap(), &Value::Num(2.0));
        assert_eq!(out[2].get(DEFAULT_FIELD).unwrap(), &Value::Num(4.0));
    }

    #[test]
    fn cross_fires_on_strict_crossings() {
        let mut b = Cross {
            fast: "f".to_string(),
            slow: "s".to_string(),
            out_field: "sig".to_string(),
            prev: None,
        };
        let mk = |f: f64, s: f64, seq: u64| {
            Fragment::new(seq as i64, seq)
                .with("f", Value::Num(f))
                .with("s", Value::Num(s))
        };
        let mut out = Vec::new();
        for (i, (f, s)) in [(1.0, 2.0), (2.0, 2.0), (3.0, 2.0), (1.0, 2.0)].iter().enumerate() {
            b.apply(mk(*f, *s, i as u64), &mut out).unwrap();
        }
        let sigs: Vec<i64> = out
            .iter()
            .map(|f| f.get("sig").unwrap().as_int().unwrap())
            .collect();
        assert_eq!(sigs, vec![0, 0, 1, -1]);
    }

    #[test]
    fn resequencer_orders_and_flushes_gaps() {
        let mut r = Resequencer::new();
        let out = run_behavior(&mut r, vec![frag(0.0, 3), frag(0.0, 1), frag(0.0, 2)]);
        let seqs: Vec<u64> = out.iter().map(|f| f.source_seq).collect();
        assert_eq!(seqs, vec![1, 2, 3]);
    }

    #[test]
    fn resequencer_zero_buffering_on_ordered_input() {
        let mut r = Resequencer::new();
        let mut out = Vec::new();
        for i in 0..5 {
            r.apply(frag(0.0, i), &mut out).unwrap();
            assert_eq!(out.len() as u64, i + 1, "no buffering on in-order input");
        }
    }

    #[test]
    fn resequencer_rejects_duplicates() {
        let mut r = Resequencer::new();
        let mut out = Vec::new();
        r.apply(frag(0.0, 0), &mut out).unwrap();
        assert!(matches!(
            r.apply(frag(0.0, 0), &mut out),
            Err(BehaviorError::DuplicateSeq(0))
        ));
    }

    #[test]
    fn lifted_and_direct_midprice_agree() {
        let direct = (101.0 + 103.0) / 2.0;
        let via_catalog = call_pure("midprice", &[Value::Num(101.0), Value::Num(103.0)]).unwrap();
        assert_eq!(via_catalog, Value::Num(direct));
    }

    #[test]
    fn unknown_behavior_errors() {
        assert!(matches!(
            build_behavior("nope", &IndexMap::new(), [0; 32]),
            Err(CatalogError::UnknownBehavior(_))
        ));
    }

    #[test]
    fn keep_gt_drops_without_failing() {
        let mut params = IndexMap::new();
        params.insert("threshold".to_string(), Value::Num(0.0));
        let mut b = build_behavior("keep_gt", &params, [0; 32]).unwrap();
        let out = run_behavior(b.as_mut(), vec![frag(-1.0, 0), frag(2.0, 1)]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].source_seq, 1);
    }
}
