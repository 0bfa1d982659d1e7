//! Scalar values carried in fragment payloads and processor parameters.
//!
//! Every value has a canonical text form that round-trips exactly. Numbers
//! use the shortest representation that re-parses to the same bits, so
//! canonically serialized graphs and datasets can be compared byte for byte.

use std::fmt;

use thiserror::Error;

/// A scalar payload value: integer, decimal, text, boolean, or a
/// nanosecond timestamp.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Num(f64),
    Text(String),
    Bool(bool),
    /// Nanoseconds since epoch, or a logical tick index.
    Time(i64),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValueError {
    #[error("malformed value literal `{0}`")]
    Malformed(String),
    #[error("type mismatch: {op} on {lhs} and {rhs}")]
    TypeMismatch {
        op: &'static str,
        lhs: &'static str,
        rhs: &'static str,
    },
    #[error("integer overflow in {0}")]
    Overflow(&'static str),
    #[error("expected {expected}, got {got}")]
    WrongKind {
        expected: &'static str,
        got: &'static str,
    },
}

impl Value {
    pub fn kind(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Num(_) => "num",
            Value::Text(_) => "text",
            Value::Bool(_) => "bool",
            Value::Time(_) => "time",
        }
    }

    /// Numeric view, promoting integers. Errors on non-numeric kinds.
    pub fn as_num(&self) -> Result<f64, ValueError> {
        match self {
            Value::Int(i) => Ok(*i as f64),
            Value::Num(n) => Ok(*n),
            other => Err(ValueError::WrongKind {
                expected: "int or num",
                got: other.kind(),
            }),
        }
    }

    pub fn as_int(&self) -> Result<i64, ValueError> {
        match self {
            Value::Int(i) => Ok(*i),
            other => Err(ValueError::WrongKind {
                expected: "int",
                got: other.kind(),
            }),
        }
    }

    pub fn as_text(&self) -> Result<&str, ValueError> {
        match self {
            Value::Text(s) => Ok(s),
            other => Err(ValueError::WrongKind {
                expected: "text",
                got: other.kind(),
            }),
        }
    }

    pub fn as_bool(&self) -> Result<bool, ValueError> {
        match self {
            Value::Bool(b) => Ok(*b),
            other => Err(ValueError::WrongKind {
                expected: "bool",
                got: other.kind(),
            }),
        }
    }

    /// Key string used by routing and predicates: the text itself for text
    /// values, the canonical literal otherwise.
    pub fn route_key(&self) -> String {
        match self {
            Value::Text(s) => s.clone(),
            other => other.canonical(),
        }
    }

    /// Canonical literal. `Int` prints bare digits, `Num` always carries a
    /// `.`, an exponent, or a non-finite marker, `Time` is prefixed with `@`,
    /// text is double-quoted with escapes.
    pub fn canonical(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Num(n) => format_num(*n),
            Value::Text(s) => quote(s),
            Value::Bool(b) => b.to_string(),
            Value::Time(t) => format!("@{t}"),
        }
    }

    /// Parses a canonical literal produced by [`Value::canonical`].
    pub fn parse_canonical(text: &str) -> Result<Value, ValueError> {
        let t = text.trim();
        if t.is_empty() {
            return Err(ValueError::Malformed(text.to_string()));
        }
        if t == "true" {
            return Ok(Value::Bool(true));
        }
        if t == "false" {
            return Ok(Value::Bool(false));
        }
        if let Some(rest) = t.strip_prefix('@') {
            return rest
                .parse::<i64>()
                .map(Value::Time)
                .map_err(|_| ValueError::Malformed(text.to_string()));
        }
        if t.starts_with('"') {
            return unquote(t).map(Value::Text);
        }
        if t.contains(['.', 'e', 'E']) || t.contains("inf") || t.contains("NaN") {
            return t
                .parse::<f64>()
                .map(Value::Num)
                .map_err(|_| ValueError::Malformed(text.to_string()));
        }
        t.parse::<i64>()
            .map(Value::Int)
            .map_err(|_| ValueError::Malformed(text.to_string()))
    }

    /// Parses a plain (unquoted, untyped) cell according to a schema kind.
    pub fn parse_cell(kind: ValueKind, cell: &str) -> Result<Value, ValueError> {
        match kind {
            ValueKind::Int => cell
                .parse::<i64>()
                .map(Value::Int)
                .map_err(|_| ValueError::Malformed(cell.to_string())),
            ValueKind::Num => cell
                .parse::<f64>()
                .map(Value::Num)
                .map_err(|_| ValueError::Malformed(cell.to_string())),
            ValueKind::Text => Ok(Value::Text(cell.to_string())),
            ValueKind::Bool => match cell {
                "true" => Ok(Value::Bool(true)),
                "false" => Ok(Value::Bool(false)),
                _ => Err(ValueError::Malformed(cell.to_string())),
            },
            ValueKind::Time => cell
                .parse::<i64>()
                .map(Value::Time)
                .map_err(|_| ValueError::Malformed(cell.to_string())),
        }
    }

    /// Plain cell text (no quoting; CSV layering handles that).
    pub fn cell_text(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Num(n) => format_num(*n),
            Value::Text(s) => s.clone(),
            Value::Bool(b) => b.to_string(),
            Value::Time(t) => t.to_string(),
        }
    }
}

/// Schema-level kind tag for dataset columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Int,
    Num,
    Text,
    Bool,
    Time,
}

impl ValueKind {
    pub fn of(value: &Value) -> ValueKind {
        match value {
            Value::Int(_) => ValueKind::Int,
            Value::Num(_) => ValueKind::Num,
            Value::Text(_) => ValueKind::Text,
            Value::Bool(_) => ValueKind::Bool,
            Value::Time(_) => ValueKind::Time,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ValueKind::Int => "int",
            ValueKind::Num => "num",
            ValueKind::Text => "text",
            ValueKind::Bool => "bool",
            ValueKind::Time => "time",
        }
    }

    pub fn parse_name(name: &str) -> Result<ValueKind, ValueError> {
        match name {
            "int" => Ok(ValueKind::Int),
            "num" => Ok(ValueKind::Num),
            "text" => Ok(ValueKind::Text),
            "bool" => Ok(ValueKind::Bool),
            "time" => Ok(ValueKind::Time),
            other => Err(ValueError::Malformed(other.to_string())),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// Shortest round-tripping decimal for `n`, guaranteed to contain `.`, an
/// exponent, `inf`, or `NaN` so it never collides with an integer literal.
fn format_num(n: f64) -> String {
    if n.is_nan() {
        return "NaN".to_string();
    }
    if n.is_infinite() {
        return if n > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let s = format!("{n:?}");
    debug_assert!(s.contains('.') || s.contains('e') || s.contains('E'));
    s
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub(crate) fn unquote(s: &str) -> Result<String, ValueError> {
    let inner = s
        .strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .ok_or_else(|| ValueError::Malformed(s.to_string()))?;
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '"' {
            // an unescaped quote can only be the closing one
            return Err(ValueError::Malformed(s.to_string()));
        }
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('"') => out.push('"'),
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('r') => out.push('\r'),
            _ => return Err(ValueError::Malformed(s.to_string())),
        }
    }
    Ok(out)
}

/// Binary arithmetic on values. Int op Int stays Int (checked), any Num
/// operand promotes both sides; division always yields Num.
pub fn binary_op(op: &'static str, lhs: &Value, rhs: &Value) -> Result<Value, ValueError> {
    use Value::*;
    match (op, lhs, rhs) {
        ("+", Int(a), Int(b)) => a.checked_add(*b).map(Int).ok_or(ValueError::Overflow("+")),
        ("-", Int(a), Int(b)) => a.checked_sub(*b).map(Int).ok_or(ValueError::Overflow("-")),
        ("*", Int(a), Int(b)) => a.checked_mul(*b).map(Int).ok_or(ValueError::Overflow("*")),
        ("+", Text(a), Text(b)) => Ok(Text(format!("{a}{b}"))),
        ("/", _, _) => Ok(Num(lhs.as_num()? / rhs.as_num()?)),
        ("+", _, _) => Ok(Num(lhs.as_num()? + rhs.as_num()?)),
        ("-", _, _) => Ok(Num(lhs.as_num()? - rhs.as_num()?)),
        ("*", _, _) => Ok(Num(lhs.as_num()? * rhs.as_num()?)),
        _ => Err(ValueError::TypeMismatch {
            op,
            lhs: lhs.kind(),
            rhs: rhs.kind(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_round_trip() {
        let values = [
            Value::Int(42),
            Value::Int(-7),
            Value::Num(4.0),
            Value::Num(0.1),
            Value::Num(1e300),
            Value::Num(-0.0),
            Value::Text("he said \"hi\"\n".to_string()),
            Value::Bool(true),
            Value::Time(1_700_000_000_000_000_000),
        ];
        for v in values {
            let text = v.canonical();
            let back = Value::parse_canonical(&text).unwrap();
            assert_eq!(back.canonical(), text, "value {v:?}");
        }
    }

    #[test]
    fn num_literal_never_looks_like_int() {
        assert_eq!(Value::Num(4.0).canonical(), "4.0");
        assert!(matches!(
            Value::parse_canonical("4.0").unwrap(),
            Value::Num(_)
        ));
        assert!(matches!(Value::parse_canonical("4").unwrap(), Value::Int(4)));
    }

    #[test]
    fn int_arithmetic_stays_exact() {
        let v = binary_op("+", &Value::Int(2), &Value::Int(3)).unwrap();
        assert_eq!(v, Value::Int(5));
        let v = binary_op("/", &Value::Int(1), &Value::Int(2)).unwrap();
        assert_eq!(v, Value::Num(0.5));
        assert!(binary_op("*", &Value::Int(i64::MAX), &Value::Int(2)).is_err());
    }

    #[test]
    fn mismatched_kinds_error() {
        let err = binary_op("-", &Value::Bool(true), &Value::Int(1)).unwrap_err();
        assert!(matches!(err, ValueError::WrongKind { .. }));
    }
}
