//! Structural validation. Violations are data, not failures: a valid graph
//! yields an empty, deterministically ordered report.

use std::collections::{HashMap, HashSet};
use std::fmt;

use super::{NodeId, ProcessorKind, StreamGraph};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Violation {
    /// Node cannot be reached from any declared source.
    Unreachable(NodeId),
    /// A cycle is not broken by an async connector-to-connector loopback
    /// edge; such cycles would deadlock synchronous hand-off.
    SyncCycle(Vec<NodeId>),
    /// Node's in/out degree is outside its kind's port arity.
    Arity(NodeId, String),
    /// Graph has no sources at all (nothing can ever flow).
    NoSources,
    /// A declared source has inbound edges or a declared sink has outbound
    /// edges.
    EndpointPosition(NodeId, String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Unreachable(id) => write!(f, "node `{id}` unreachable from any source"),
            Violation::SyncCycle(ids) => {
                let names: Vec<&str> = ids.iter().map(|i| i.as_str()).collect();
                write!(
                    f,
                    "sync cycle through [{}] lacks an async connector loopback",
                    names.join(", ")
                )
            }
            Violation::Arity(id, msg) => write!(f, "arity violation at `{id}`: {msg}"),
            Violation::NoSources => write!(f, "graph declares no sources"),
            Violation::EndpointPosition(id, msg) => write!(f, "endpoint violation at `{id}`: {msg}"),
        }
    }
}

/// Validates a graph, returning every violation in deterministic order.
pub fn validate(graph: &StreamGraph) -> Vec<Violation> {
    let mut report = Vec::new();

    if graph.node_count() > 0 && graph.sources().is_empty() {
        report.push(Violation::NoSources);
    }

    // reachability from sources
    let mut reached: HashSet<&NodeId> = HashSet::new();
    let mut stack: Vec<&NodeId> = graph.sources().iter().collect();
    while let Some(id) = stack.pop() {
        if !reached.insert(id) {
            continue;
        }
        for edge in graph.out_edges(id) {
            stack.push(&edge.to);
        }
    }
    for id in graph.node_ids() {
        if !reached.contains(id) {
            report.push(Violation::Unreachable(id.clone()));
        }
    }

    report.extend(cycle_violations(graph));

    for spec in graph.nodes() {
        let ind = graph.in_degree(&spec.id);
        let outd = graph.out_degree(&spec.id);
        let is_source = graph.sources().contains(&spec.id);
        let is_sink = graph.sinks().contains(&spec.id);
        if is_source && ind > 0 {
            report.push(Violation::EndpointPosition(
                spec.id.clone(),
                format!("declared source has {ind} inbound edges"),
            ));
        }
        if is_sink && outd > 0 {
            report.push(Violation::EndpointPosition(
                spec.id.clone(),
                format!("declared sink has {outd} outbound edges"),
            ));
        }
        // Port arities: a missing inbound edge is satisfied by source
        // designation, a missing outbound edge by sink designation.
        let arity_err = match spec.kind {
            ProcessorKind::Handler | ProcessorKind::Reactive => {
                if ind > 1 {
                    Some(format!("{} accepts exactly 1 inbound edge, has {ind}", spec.kind.name()))
                } else if outd > 1 {
                    Some(format!("{} accepts exactly 1 outbound edge, has {outd}", spec.kind.name()))
                } else if ind == 0 && !is_source {
                    Some("inbound port unbound (not a source)".to_string())
                } else if outd == 0 && !is_sink {
                    Some("outbound port unbound (not a sink)".to_string())
                } else {
                    None
                }
            }
            ProcessorKind::Connector => {
                if ind == 0 && !is_source {
                    Some("connector requires n>=1 inbound edges".to_string())
                } else if outd == 0 && !is_sink {
                    Some("connector requires m>=1 outbound edges".to_string())
                } else {
                    None
                }
            }
            // A modification connector starts with zero branches; outbound
            // edges appear as plasticity instantiates them.
            ProcessorKind::Modifier => {
                if ind > 1 {
                    Some(format!("modifier accepts exactly 1 inbound edge, has {ind}"))
                } else if ind == 0 && !is_source {
                    Some("inbound port unbound (not a source)".to_string())
                } else {
                    None
                }
            }
            // Agents are driven by the simulation scheduler, not by edges.
            ProcessorKind::Agent => None,
        };
        if let Some(msg) = arity_err {
            report.push(Violation::Arity(spec.id.clone(), msg));
        }
    }

    report.sort();
    report.dedup();
    report
}

/// Finds strongly connected components; any nontrivial component must become
/// acyclic once async connector-to-connector edges (the legal feedback
/// loopbacks) are removed.
fn cycle_violations(graph: &StreamGraph) -> Vec<Violation> {
    let ids: Vec<&NodeId> = graph.node_ids().collect();
    let index: HashMap<&NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let n = ids.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for edge in graph.edges() {
        adj[index[&edge.from]].push(index[&edge.to]);
    }

    let sccs = tarjan(n, &adj);

    let mut out = Vec::new();
    for comp in sccs {
        let in_comp: HashSet<usize> = comp.iter().copied().collect();
        let nontrivial = comp.len() > 1
            || graph
                .edges()
                .iter()
                .any(|e| e.from == *ids[comp[0]] && e.to == *ids[comp[0]]);
        if !nontrivial {
            continue;
        }
        // drop legal loopback edges inside the component, then re-check
        let mut sub_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for edge in graph.edges() {
            let (f, t) = (index[&edge.from], index[&edge.to]);
            if !in_comp.contains(&f) || !in_comp.contains(&t) {
                continue;
            }
            let legal_loopback = edge.mode.is_async()
                && graph.node(&edge.from).map(|s| s.kind) == Some(ProcessorKind::Connector)
                && graph.node(&edge.to).map(|s| s.kind) == Some(ProcessorKind::Connector);
            if !legal_loopback {
                sub_adj[f].push(t);
            }
        }
        if has_cycle_within(&comp, &sub_adj) {
            let mut names: Vec<NodeId> = comp.iter().map(|&i| ids[i].clone()).collect();
            names.sort();
            out.push(Violation::SyncCycle(names));
        }
    }
    out
}

fn has_cycle_within(comp: &[usize], adj: &[Vec<usize>]) -> bool {
    // Kahn on the induced subgraph
    let members: HashSet<usize> = comp.iter().copied().collect();
    let mut indeg: HashMap<usize, usize> = comp.iter().map(|&i| (i, 0)).collect();
    for &u in comp {
        for &v in &adj[u] {
            if members.contains(&v) {
                *indeg.get_mut(&v).unwrap() += 1;
            }
        }
    }
    let mut queue: Vec<usize> = indeg
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&i, _)| i)
        .collect();
    let mut seen = 0;
    while let Some(u) = queue.pop() {
        seen += 1;
        for &v in &adj[u] {
            if members.contains(&v) {
                let d = indeg.get_mut(&v).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push(v);
                }
            }
        }
    }
    seen != comp.len()
}

/// Iterative Tarjan SCC.
fn tarjan(n: usize, adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    #[derive(Clone)]
    struct NodeState {
        index: Option<usize>,
        lowlink: usize,
        on_stack: bool,
    }
    let mut state = vec![
        NodeState {
            index: None,
            lowlink: 0,
            on_stack: false
        };
        n
    ];
    let mut next_index = 0;
    let mut stack: Vec<usize> = Vec::new();
    let mut sccs = Vec::new();

    for start in 0..n {
        if state[start].index.is_some() {
            continue;
        }
        // explicit DFS stack: (node, next child position)
        let mut dfs: Vec<(usize, usize)> = vec![(start, 0)];
        state[start].index = Some(next_index);
        state[start].lowlink = next_index;
        state[start].on_stack = true;
        stack.push(start);
        next_index += 1;

        while let Some(&mut (v, ref mut child)) = dfs.last_mut() {
            if *child < adj[v].len() {
                let w = adj[v][*child];
                *child += 1;
                if state[w].index.is_none() {
                    state[w].index = Some(next_index);
                    state[w].lowlink = next_index;
                    state[w].on_stack = true;
                    stack.push(w);
                    next_index += 1;
                    dfs.push((w, 0));
                } else if state[w].on_stack {
                    state[v].lowlink = state[v].lowlink.min(state[w].index.unwrap());
                }
            } else {
                dfs.pop();
                if let Some(&(parent, _)) = dfs.last() {
                    let vl = state[v].lowlink;
                    state[parent].lowlink = state[parent].lowlink.min(vl);
                }
                if state[v].lowlink == state[v].index.unwrap() {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack nonempty");
                        state[w].on_stack = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    sccs.push(comp);
                }
            }
        }
    }
    sccs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{compose, ProcessorSpec, SyncMode};

    fn handler(id: &str) -> ProcessorSpec {
        ProcessorSpec::handler(id, "identity")
    }

    #[test]
    fn linear_sync_chain_is_valid() {
        let g = compose(
            vec![handler("a"), handler("b"), handler("c")],
            vec![SyncMode::Sync, SyncMode::Sync],
        )
        .unwrap();
        assert!(validate(&g).is_empty());
    }

    #[test]
    fn sync_cycle_without_connectors_reported() {
        let mut g = compose(vec![handler("a"), handler("b")], vec![SyncMode::Sync]).unwrap();
        g.add_edge(&"b".into(), &"a".into(), SyncMode::Sync).unwrap();
        // b is the declared sink; give the loop edge anyway and expect the
        // cycle violation among the results
        let report = validate(&g);
        assert!(report
            .iter()
            .any(|v| matches!(v, Violation::SyncCycle(_))));
    }

    #[test]
    fn async_connector_loopback_is_legal() {
        // source -> cs -> body -> cj, cj ~> cs loopback
        let mut g = StreamGraph::empty();
        g.add_node(handler("src")).unwrap();
        g.add_node(ProcessorSpec::connector("cs", "join")).unwrap();
        g.add_node(handler("body")).unwrap();
        g.add_node(ProcessorSpec::connector("cj", "feedback_gate"))
            .unwrap();
        g.add_node(handler("out")).unwrap();
        g.add_edge(&"src".into(), &"cs".into(), SyncMode::Sync).unwrap();
        g.add_edge(&"cs".into(), &"body".into(), SyncMode::Sync).unwrap();
        g.add_edge(&"body".into(), &"cj".into(), SyncMode::Sync).unwrap();
        g.add_edge(&"cj".into(), &"cs".into(), SyncMode::asynchronous())
            .unwrap();
        g.add_edge(&"cj".into(), &"out".into(), SyncMode::Sync).unwrap();
        g.mark_source(&"src".into()).unwrap();
        g.mark_sink(&"out".into()).unwrap();
        let report = validate(&g);
        assert!(report.is_empty(), "unexpected violations: {report:?}");
    }

    #[test]
    fn sync_loopback_between_connectors_is_still_a_cycle() {
        let mut g = StreamGraph::empty();
        g.add_node(ProcessorSpec::connector("cs", "join")).unwrap();
        g.add_node(ProcessorSpec::connector("cj", "join")).unwrap();
        g.add_edge(&"cs".into(), &"cj".into(), SyncMode::Sync).unwrap();
        g.add_edge(&"cj".into(), &"cs".into(), SyncMode::Sync).unwrap();
        g.mark_source(&"cs".into()).unwrap();
        g.mark_sink(&"cj".into()).unwrap();
        assert!(validate(&g)
            .iter()
            .any(|v| matches!(v, Violation::SyncCycle(_))));
    }

    #[test]
    fn unreachable_node_reported() {
        let mut g = compose(vec![handler("a")], vec![]).unwrap();
        g.add_node(handler("stranded")).unwrap();
        let report = validate(&g);
        assert!(report
            .iter()
            .any(|v| *v == Violation::Unreachable("stranded".into())));
    }

    #[test]
    fn handler_with_fanout_reported() {
        let mut g = compose(vec![handler("a"), handler("b")], vec![SyncMode::Sync]).unwrap();
        g.add_node(handler("c")).unwrap();
        g.add_edge(&"a".into(), &"c".into(), SyncMode::Sync).unwrap();
        g.mark_sink(&"c".into()).unwrap();
        let report = validate(&g);
        assert!(report.iter().any(|v| matches!(v, Violation::Arity(id, _) if id.as_str() == "a")));
    }
}
