//! Canonical text serialization of stream graphs.
//!
//! The form is deterministic: nodes sorted by id, params sorted by key,
//! edges in declaration order (declaration order is semantic for the
//! single-task oracle), source/sink sets sorted. Snapshots and the DSL
//! formatter rely on byte equality of this form.

use indexmap::IndexMap;

use crate::value::{quote, unquote, Value};

use super::{GraphError, NodeId, ProcessorKind, ProcessorSpec, StreamGraph, SyncMode};

pub(super) fn to_canonical(graph: &StreamGraph) -> String {
    let mut out = String::from("graph {\n");
    let mut ids: Vec<&NodeId> = graph.node_ids().collect();
    ids.sort();
    for id in ids {
        let spec = graph.node(id).expect("listed id resolves");
        out.push_str("  node ");
        out.push_str(&quote(id.as_str()));
        out.push_str(" kind=");
        out.push_str(spec.kind.name());
        out.push_str(" behavior=");
        out.push_str(&quote(&spec.behavior));
        let mut keys: Vec<&String> = spec.params.keys().collect();
        keys.sort();
        for key in keys {
            out.push(' ');
            out.push_str(key);
            out.push('=');
            out.push_str(&spec.params[key].canonical());
        }
        out.push('\n');
    }
    for edge in graph.edges() {
        out.push_str("  edge ");
        out.push_str(&quote(edge.from.as_str()));
        out.push_str(" -> ");
        out.push_str(&quote(edge.to.as_str()));
        out.push_str(" mode=");
        out.push_str(&edge.mode.canonical());
        out.push('\n');
    }
    for src in graph.sources() {
        out.push_str("  source ");
        out.push_str(&quote(src.as_str()));
        out.push('\n');
    }
    for sink in graph.sinks() {
        out.push_str("  sink ");
        out.push_str(&quote(sink.as_str()));
        out.push('\n');
    }
    out.push_str("}\n");
    out
}

/// Parses the canonical graph form back into a graph value. Round-trips
/// exactly: `parse_canonical(g.canonical()) == g` up to node ordering, and
/// re-serializing yields identical bytes.
pub fn parse_canonical(text: &str) -> Result<StreamGraph, GraphError> {
    let mut graph = StreamGraph::empty();
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line == "graph {" || line == "}" {
            continue;
        }
        if let Some(rest) = line.strip_prefix("node ") {
            let (id, rest) = take_quoted(rest)?;
            let mut kind = None;
            let mut behavior = None;
            let mut params = IndexMap::new();
            for tok in split_tokens(rest) {
                let (key, lit) = tok
                    .split_once('=')
                    .ok_or_else(|| GraphError::Invalid(format!("bad node attr `{tok}`")))?;
                match key {
                    "kind" => {
                        kind = Some(ProcessorKind::parse_name(lit).ok_or_else(|| {
                            GraphError::Invalid(format!("unknown kind `{lit}`"))
                        })?)
                    }
                    "behavior" => {
                        behavior = Some(
                            unquote(lit)
                                .map_err(|e| GraphError::Invalid(e.to_string()))?,
                        )
                    }
                    _ => {
                        let value = Value::parse_canonical(lit)
                            .map_err(|e| GraphError::Invalid(e.to_string()))?;
                        params.insert(key.to_string(), value);
                    }
                }
            }
            let (kind, behavior) = match (kind, behavior) {
                (Some(k), Some(b)) => (k, b),
                _ => return Err(GraphError::Invalid(format!("incomplete node line `{line}`"))),
            };
            graph.add_node(ProcessorSpec {
                id: NodeId::new(id),
                kind,
                behavior,
                params,
            })?;
        } else if let Some(rest) = line.strip_prefix("edge ") {
            let (from, rest) = take_quoted(rest)?;
            let rest = rest
                .strip_prefix(" -> ")
                .ok_or_else(|| GraphError::Invalid(format!("bad edge line `{line}`")))?;
            let (to, rest) = take_quoted(rest)?;
            let mode = rest
                .trim()
                .strip_prefix("mode=")
                .ok_or_else(|| GraphError::Invalid(format!("bad edge line `{line}`")))?;
            let mode = parse_mode(mode)?;
            graph.add_edge(&NodeId::new(from), &NodeId::new(to), mode)?;
        } else if let Some(rest) = line.strip_prefix("source ") {
            let (id, _) = take_quoted(rest)?;
            graph.mark_source(&NodeId::new(id))?;
        } else if let Some(rest) = line.strip_prefix("sink ") {
            let (id, _) = take_quoted(rest)?;
            graph.mark_sink(&NodeId::new(id))?;
        } else {
            return Err(GraphError::Invalid(format!("unrecognized line `{line}`")));
        }
    }
    Ok(graph)
}

fn parse_mode(text: &str) -> Result<SyncMode, GraphError> {
    if text == "sync" {
        return Ok(SyncMode::Sync);
    }
    if let Some(cap) = text.strip_prefix("async(").and_then(|r| r.strip_suffix(')')) {
        let queue_capacity = cap
            .parse()
            .map_err(|_| GraphError::Invalid(format!("bad capacity `{cap}`")))?;
        return Ok(SyncMode::Async { queue_capacity });
    }
    Err(GraphError::Invalid(format!("unknown mode `{text}`")))
}

/// Reads a leading quoted string, returning it and the remainder.
fn take_quoted(text: &str) -> Result<(String, &str), GraphError> {
    if !text.starts_with('"') {
        return Err(GraphError::Invalid(format!("expected quoted id in `{text}`")));
    }
    let bytes = text.as_bytes();
    let mut escaped = false;
    for i in 1..bytes.len() {
        if escaped {
            escaped = false;
        } else if bytes[i] == b'\\' {
            escaped = true;
        } else if bytes[i] == b'"' {
            let id = unquote(&text[..=i]).map_err(|e| GraphError::Invalid(e.to_string()))?;
            return Ok((id, &text[i + 1..]));
        }
    }
    Err(GraphError::Invalid(format!("unterminated quote in `{text}`")))
}

/// Splits `key=value` tokens on spaces outside quotes.
fn split_tokens(text: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let bytes = text.as_bytes();
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
                parts.push(&text[start..i]);
            }
            start = i + 1;
        }
    }
    if start < text.len() {
        parts.push(&text[start..]);
    }
    parts
}
