//! Fragments: the timestamped units of meta-data that flow along edges.

use indexmap::IndexMap;

use crate::value::{Value, ValueError};

/// One unit of data moving through a stream graph. The payload is an ordered
/// map of field name to scalar; field order is the schema order and is
/// preserved through serialization.
///
/// Within one source, `source_seq` is strictly increasing and `event_time`
/// is nondecreasing; sources enforce this on emission. Equal timestamps are
/// permitted, with `source_seq` breaking ties.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub payload: IndexMap<String, Value>,
    /// Nanoseconds since epoch, or a logical tick index.
    pub event_time: i64,
    /// Monotonic per-source sequence number, starting at 0.
    pub source_seq: u64,
}

impl Fragment {
    pub fn new(event_time: i64, source_seq: u64) -> Fragment {
        Fragment {
            payload: IndexMap::new(),
            event_time,
            source_seq,
        }
    }

    pub fn with(mut self, field: &str, value: Value) -> Fragment {
        self.payload.insert(field.to_string(), value);
        self
    }

    pub fn get(&self, field: &str) -> Option<&Value> {
        self.payload.get(field)
    }

    pub fn require(&self, field: &str) -> Result<&Value, FragmentError> {
        self.payload
            .get(field)
            .ok_or_else(|| FragmentError::MissingField(field.to_string()))
    }

    pub fn set(&mut self, field: &str, value: Value) {
        self.payload.insert(field.to_string(), value);
    }

    /// Canonical single-line form: `seq=<n> time=<t> name=<lit> ...` with
    /// payload fields in payload order. Used by in-memory digests and the
    /// record-lines dataset format.
    pub fn canonical(&self) -> String {
        let mut out = format!("seq={} time={}", self.source_seq, self.event_time);
        for (name, value) in &self.payload {
            out.push(' ');
            out.push_str(name);
            out.push('=');
            out.push_str(&value.canonical());
        }
        out
    }

    /// Parses the canonical single-line form.
    pub fn parse_canonical(line: &str) -> Result<Fragment, FragmentError> {
        let mut seq: Option<u64> = None;
        let mut time: Option<i64> = None;
        let mut payload = IndexMap::new();
        for token in split_fields(line) {
            let (name, lit) = token
                .split_once('=')
                .ok_or_else(|| FragmentError::Malformed(line.to_string()))?;
            match name {
                "seq" => {
                    seq = Some(
                        lit.parse()
                            .map_err(|_| FragmentError::Malformed(line.to_string()))?,
                    )
                }
                "time" => {
                    time = Some(
                        lit.parse()
                            .map_err(|_| FragmentError::Malformed(line.to_string()))?,
                    )
                }
                _ => {
                    payload.insert(name.to_string(), Value::parse_canonical(lit)?);
                }
            }
        }
        match (seq, time) {
            (Some(source_seq), Some(event_time)) => Ok(Fragment {
                payload,
                event_time,
                source_seq,
            }),
            _ => Err(FragmentError::Malformed(line.to_string())),
        }
    }
}

/// Splits on spaces that are not inside a quoted literal.
fn split_fields(line: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let bytes = line.as_bytes();
    let mut start = 0;
    let mut in_quotes = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_quotes {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_quotes = false;
            }
        } else if b == b'"' {
            in_quotes = true;
        } else if b == b' ' {
            if start < i {
                parts.push(&line[start..i]);
            }
            start = i + 1;
        }
    }
    if start < line.len() {
        parts.push(&line[start..]);
    }
    parts
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FragmentError {
    #[error("fragment missing field `{0}`")]
    MissingField(String),
    #[error("malformed fragment record `{0}`")]
    Malformed(String),
    #[error(transparent)]
    Value(#[from] ValueError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_line_round_trips() {
        let frag = Fragment::new(17, 3)
            .with("sym", Value::Text("IBM US".to_string()))
            .with("bid", Value::Num(101.25))
            .with("lot", Value::Int(100));
        let line = frag.canonical();
        let back = Fragment::parse_canonical(&line).unwrap();
        assert_eq!(back, frag);
        assert_eq!(back.canonical(), line);
    }

    #[test]
    fn quoted_text_may_contain_spaces_and_equals() {
        let frag = Fragment::new(0, 0).with("note", Value::Text("a = b c".to_string()));
        let back = Fragment::parse_canonical(&frag.canonical()).unwrap();
        assert_eq!(back.get("note").unwrap().as_text().unwrap(), "a = b c");
    }

    #[test]
    fn missing_header_fields_rejected() {
        assert!(Fragment::parse_canonical("seq=1 a=2").is_err());
    }
}
