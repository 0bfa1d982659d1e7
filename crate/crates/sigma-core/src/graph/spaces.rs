//! Distribution spaces: connector-bounded fragments of a graph.
//!
//! Space boundaries are the edges incident to connectors. Cutting those
//! edges and collecting weakly connected components yields the spaces; each
//! connector then joins the space of its first upstream neighbor (or first
//! downstream neighbor when it has no inbound edge), so spaces partition the
//! node set exactly.

use std::collections::BTreeSet;
use std::collections::HashMap;

use super::{GraphError, NodeId, ProcessorKind, StreamGraph};

/// A space: a named, nonempty set of nodes assignable to an execution
/// context without changing the model. The id is the lexicographically
/// smallest member node id, which is stable across runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Space {
    pub id: String,
    pub members: BTreeSet<NodeId>,
}

/// Partitions a valid graph's nodes into spaces.
pub fn partition_spaces(graph: &StreamGraph) -> Result<Vec<Space>, GraphError> {
    let report = super::validate(graph);
    if !report.is_empty() {
        return Err(GraphError::Invalid(
            report
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }

    let ids: Vec<&NodeId> = graph.node_ids().collect();
    let index: HashMap<&NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut uf = UnionFind::new(ids.len());

    let is_connector = |id: &NodeId| {
        graph
            .node(id)
            .map(|s| s.kind == ProcessorKind::Connector || s.kind == ProcessorKind::Modifier)
            .unwrap_or(false)
    };

    for edge in graph.edges() {
        if !is_connector(&edge.from) && !is_connector(&edge.to) {
            uf.union(index[&edge.from], index[&edge.to]);
        }
    }
    // Attach each connector to its first upstream neighbor in edge
    // declaration order, falling back to its first downstream neighbor.
    for id in &ids {
        if !is_connector(id) {
            continue;
        }
        let attach = graph
            .in_edges(id)
            .next()
            .map(|e| &e.from)
            .or_else(|| graph.out_edges(id).next().map(|e| &e.to));
        if let Some(peer) = attach {
            uf.union(index[id], index[peer]);
        }
    }

    let mut groups: HashMap<usize, BTreeSet<NodeId>> = HashMap::new();
    for (i, id) in ids.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().insert((*id).clone());
    }
    let mut spaces: Vec<Space> = groups
        .into_values()
        .map(|members| Space {
            id: members
                .iter()
                .next()
                .expect("space nonempty")
                .as_str()
                .to_string(),
            members,
        })
        .collect();
    spaces.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(spaces)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}
