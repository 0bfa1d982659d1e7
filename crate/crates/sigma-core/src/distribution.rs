//! Distribution patterns: split-join and feedback connector arrangements,
//! and the mapping of spaces onto execution contexts.
//!
//! Builders only arrange graphs; they never execute anything. Split-join
//! edges are asynchronous by construction, so branch execution order is
//! unspecified and only the output multiset is guaranteed; inserting a
//! `resequence` connector after the join restores source order. Feedback
//! loopbacks are asynchronous connector-to-connector edges and carry a fuel
//! bound so loops terminate by construction.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::graph::{partition_spaces, NodeId, ProcessorSpec, StreamGraph, SyncMode};
use crate::value::Value;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DistributionError {
    #[error("split-join requires at least one branch")]
    NoBranches,
    #[error("feedback fuel must be >= 1, got {0}")]
    BadFuel(i64),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error("space `{0}` is not assigned to any execution context")]
    UnassignedSpace(String),
    #[error("assignment names unknown space `{0}`")]
    UnknownSpace(String),
    #[error("malformed deployment plan line `{0}`")]
    MalformedPlan(String),
}

/// How a splitter dispatches fragments across branches.
#[derive(Debug, Clone, PartialEq)]
pub enum DispatchPolicy {
    /// Every branch receives every fragment.
    Broadcast,
    /// Each distinct key is pinned to one branch (first-seen keys assigned
    /// round-robin), so routing is total and stable.
    KeyRoute { key_field: String },
    /// Fragments rotate across branches.
    RoundRobin,
}

impl DispatchPolicy {
    fn behavior(&self) -> &'static str {
        match self {
            DispatchPolicy::Broadcast => "split_broadcast",
            DispatchPolicy::KeyRoute { .. } => "split_key",
            DispatchPolicy::RoundRobin => "split_roundrobin",
        }
    }
}

/// A built split-join: splitter and joiner bracket the branches. The joiner
/// is the continuation point for downstream composition.
#[derive(Debug, Clone)]
pub struct SplitJoin {
    pub graph: StreamGraph,
    pub splitter: NodeId,
    pub joiner: NodeId,
}

/// Builds the split-join pattern around the given branch sub-graphs. All
/// splitter-to-branch and branch-to-joiner edges are asynchronous.
pub fn split_join(
    name: &str,
    branches: Vec<StreamGraph>,
    policy: DispatchPolicy,
    queue_capacity: usize,
) -> Result<SplitJoin, DistributionError> {
    if branches.is_empty() {
        return Err(DistributionError::NoBranches);
    }
    let splitter_id = NodeId::new(format!("{name}.split"));
    let joiner_id = NodeId::new(format!("{name}.join"));

    let mut splitter = ProcessorSpec::connector(splitter_id.as_str(), policy.behavior());
    if let DispatchPolicy::KeyRoute { key_field } = &policy {
        splitter = splitter.with_param("key", Value::Text(key_field.clone()));
    }

    let mut graph = StreamGraph::empty();
    graph.add_node(splitter)?;
    graph.add_node(ProcessorSpec::connector(joiner_id.as_str(), "join"))?;

    let mode = SyncMode::Async { queue_capacity };
    for branch in branches {
        let entries: Vec<NodeId> = branch.sources().iter().cloned().collect();
        let exits: Vec<NodeId> = branch.sinks().iter().cloned().collect();
        graph.merge(branch)?;
        for entry in entries {
            graph.add_edge(&splitter_id, &entry, mode)?;
            graph.unmark_source(&entry);
        }
        for exit in exits {
            graph.add_edge(&exit, &joiner_id, mode)?;
            graph.unmark_sink(&exit);
        }
    }
    graph.mark_source(&splitter_id)?;
    graph.mark_sink(&joiner_id)?;
    Ok(SplitJoin {
        graph,
        splitter: splitter_id,
        joiner: joiner_id,
    })
}

/// Builds a standalone resequencer connector node.
pub fn resequencer(id: &str) -> ProcessorSpec {
    ProcessorSpec::connector(id, "resequence")
}

/// Condition deciding whether a fragment re-enters the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopPredicate {
    pub field: String,
    /// One of `gt`, `lt`, `ge`, `le`, `eq`, `ne`.
    pub op: String,
    pub than: Value,
}

/// A built feedback loop. Fragments enter at `entry`; fragments failing the
/// predicate leave through `exit`; fragments exceeding the fuel bound land
/// in the `error_sink`.
#[derive(Debug, Clone)]
pub struct FeedbackLoop {
    pub graph: StreamGraph,
    pub entry: NodeId,
    pub exit: NodeId,
    pub error_sink: NodeId,
}

/// Wraps `body` in a feedback loop: entry connector, body, gate. The gate
/// re-injects fragments satisfying the predicate over an asynchronous
/// loopback edge, stamping a `_loop` counter; once the counter reaches
/// `fuel` the fragment routes to the error sink instead.
pub fn feedback(
    name: &str,
    body: StreamGraph,
    predicate: LoopPredicate,
    fuel: i64,
) -> Result<FeedbackLoop, DistributionError> {
    if fuel < 1 {
        return Err(DistributionError::BadFuel(fuel));
    }
    let entry_id = NodeId::new(format!("{name}.entry"));
    let gate_id = NodeId::new(format!("{name}.gate"));
    let exit_id = NodeId::new(format!("{name}.exit"));
    let err_id = NodeId::new(format!("{name}.err"));

    let mut graph = StreamGraph::empty();
    graph.add_node(ProcessorSpec::connector(entry_id.as_str(), "feedback_entry"))?;
    graph.add_node(
        ProcessorSpec::connector(gate_id.as_str(), "feedback_gate")
            .with_param("field", Value::Text(predicate.field.clone()))
            .with_param("op", Value::Text(predicate.op.clone()))
            .with_param("than", predicate.than.clone())
            .with_param("fuel", Value::Int(fuel))
            .with_param("loop_to", Value::Text(entry_id.as_str().to_string()))
            .with_param("error_to", Value::Text(err_id.as_str().to_string())),
    )?;
    graph.add_node(ProcessorSpec::connector(exit_id.as_str(), "join"))?;
    graph.add_node(ProcessorSpec::handler(err_id.as_str(), "sink"))?;

    let body_entries: Vec<NodeId> = body.sources().iter().cloned().collect();
    let body_exits: Vec<NodeId> = body.sinks().iter().cloned().collect();
    graph.merge(body)?;
    for entry in &body_entries {
        graph.add_edge(&entry_id, entry, SyncMode::Sync)?;
        graph.unmark_source(entry);
    }
    for exit in &body_exits {
        graph.add_edge(exit, &gate_id, SyncMode::Sync)?;
        graph.unmark_sink(exit);
    }
    graph.add_edge(&gate_id, &entry_id, SyncMode::asynchronous())?;
    graph.add_edge(&gate_id, &exit_id, SyncMode::Sync)?;
    graph.add_edge(&gate_id, &err_id, SyncMode::asynchronous())?;
    graph.mark_source(&entry_id)?;
    graph.mark_sink(&exit_id)?;
    graph.mark_sink(&err_id)?;
    Ok(FeedbackLoop {
        graph,
        entry: entry_id,
        exit: exit_id,
        error_sink: err_id,
    })
}

/// Execution context a space maps onto.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContextDescriptor {
    /// Run inside the caller's process with the given task pool size.
    InlinePool(usize),
    /// Run on a named worker context (dedicated threads at desk scale; a
    /// network transport can implement the same contract later).
    WorkerContext(String),
}

impl fmt::Display for ContextDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContextDescriptor::InlinePool(n) => write!(f, "inline({n})"),
            ContextDescriptor::WorkerContext(name) => {
                write!(f, "worker({})", crate::value::quote(name))
            }
        }
    }
}

/// Space-to-context assignment supplied by the operator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpaceAssignment {
    pub contexts: BTreeMap<String, ContextDescriptor>,
}

/// Placement plan derived from a validated assignment. Assigning spaces
/// never changes the model: the graph's canonical serialization is the same
/// before and after.
#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentPlan {
    pub contexts: BTreeMap<String, ContextDescriptor>,
    /// node id -> space id, for runtime placement.
    pub node_space: BTreeMap<NodeId, String>,
}

/// Validates that `assignment` covers the graph's spaces exactly and builds
/// the placement plan.
pub fn assign_spaces(
    graph: &StreamGraph,
    assignment: &SpaceAssignment,
) -> Result<DeploymentPlan, DistributionError> {
    let spaces = partition_spaces(graph)?;
    for space in &spaces {
        if !assignment.contexts.contains_key(&space.id) {
            return Err(DistributionError::UnassignedSpace(space.id.clone()));
        }
    }
    for id in assignment.contexts.keys() {
        if !spaces.iter().any(|s| &s.id == id) {
            return Err(DistributionError::UnknownSpace(id.clone()));
        }
    }
    let mut node_space = BTreeMap::new();
    for space in &spaces {
        for node in &space.members {
            node_space.insert(node.clone(), space.id.clone());
        }
    }
    Ok(DeploymentPlan {
        contexts: assignment.contexts.clone(),
        node_space,
    })
}

impl DeploymentPlan {
    /// Text form: one `space "<id>" <context>` line per space, sorted.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, ctx) in &self.contexts {
            out.push_str(&format!("space {} {ctx}\n", crate::value::quote(id)));
        }
        out
    }
}

impl SpaceAssignment {
    pub fn assign(mut self, space: &str, ctx: ContextDescriptor) -> SpaceAssignment {
        self.contexts.insert(space.to_string(), ctx);
        self
    }

    /// Parses the deployment plan file format written by
    /// [`DeploymentPlan::to_text`].
    pub fn parse(text: &str) -> Result<SpaceAssignment, DistributionError> {
        let mut contexts = BTreeMap::new();
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let rest = line
                .strip_prefix("space ")
                .ok_or_else(|| DistributionError::MalformedPlan(line.to_string()))?;
            let close = rest
                .char_indices()
                .skip(1)
                .find(|(_, c)| *c == '"')
                .map(|(i, _)| i)
                .ok_or_else(|| DistributionError::MalformedPlan(line.to_string()))?;
            let id = crate::value::unquote(&rest[..=close])
                .map_err(|_| DistributionError::MalformedPlan(line.to_string()))?;
            let ctx_text = rest[close + 1..].trim();
            let ctx = if let Some(n) = ctx_text
                .strip_prefix("inline(")
                .and_then(|r| r.strip_suffix(')'))
            {
                ContextDescriptor::InlinePool(
                    n.parse()
                        .map_err(|_| DistributionError::MalformedPlan(line.to_string()))?,
                )
            } else if let Some(q) = ctx_text
                .strip_prefix("worker(")
                .and_then(|r| r.strip_suffix(')'))
            {
                ContextDescriptor::WorkerContext(
                    crate::value::unquote(q)
                        .map_err(|_| DistributionError::MalformedPlan(line.to_string()))?,
                )
            } else {
                return Err(DistributionError::MalformedPlan(line.to_string()));
            };
            contexts.insert(id, ctx);
        }
        Ok(SpaceAssignment { contexts })
    }

    pub fn load(path: &Path) -> Result<SpaceAssignment, DistributionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DistributionError::MalformedPlan(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::compose;

    fn branch(id: &str) -> StreamGraph {
        compose(vec![ProcessorSpec::handler(id, "identity")], vec![]).unwrap()
    }

    #[test]
    fn split_join_wires_async_bridges() {
        let sj = split_join(
            "sj",
            vec![branch("b1"), branch("b2"), branch("b3")],
            DispatchPolicy::Broadcast,
            16,
        )
        .unwrap();
        assert_eq!(sj.graph.node_count(), 5);
        assert_eq!(sj.graph.edges().len(), 6);
        assert!(sj.graph.edges().iter().all(|e| e.mode.is_async()));
    }

    #[test]
    fn split_join_requires_branches() {
        assert_eq!(
            split_join("sj", vec![], DispatchPolicy::Broadcast, 16).unwrap_err(),
            DistributionError::NoBranches
        );
    }

    #[test]
    fn feedback_loopback_is_async_and_validates() {
        let fb = feedback(
            "fb",
            branch("body"),
            LoopPredicate {
                field: "value".to_string(),
                op: "gt".to_string(),
                than: Value::Num(0.0),
            },
            10,
        )
        .unwrap();
        let mut graph = fb.graph.clone();
        // give it a source feeding the entry so validation passes
        graph
            .add_node(ProcessorSpec::handler("feed", "source"))
            .unwrap();
        graph.add_edge(&"feed".into(), &fb.entry, SyncMode::Sync).unwrap();
        graph.unmark_source(&fb.entry);
        graph.mark_source(&"feed".into()).unwrap();
        let report = crate::graph::validate(&graph);
        assert!(report.is_empty(), "{report:?}");
        let loopback = graph
            .edges()
            .iter()
            .find(|e| e.from == fb.graph.node(&"fb.gate".into()).unwrap().id && e.to == fb.entry)
            .unwrap();
        assert!(loopback.mode.is_async());
    }

    #[test]
    fn feedback_rejects_zero_fuel() {
        let err = feedback(
            "fb",
            branch("body"),
            LoopPredicate {
                field: "value".to_string(),
                op: "gt".to_string(),
                than: Value::Num(0.0),
            },
            0,
        )
        .unwrap_err();
        assert_eq!(err, DistributionError::BadFuel(0));
    }

    #[test]
    fn assignment_must_cover_spaces_exactly() {
        let sj = split_join(
            "sj",
            vec![branch("b1"), branch("b2"), branch("b3")],
            DispatchPolicy::Broadcast,
            16,
        )
        .unwrap();
        let mut graph = sj.graph.clone();
        graph.add_node(ProcessorSpec::handler("feed", "source")).unwrap();
        graph.add_edge(&"feed".into(), &sj.splitter, SyncMode::Sync).unwrap();
        graph.unmark_source(&sj.splitter);
        graph.mark_source(&"feed".into()).unwrap();
        graph.add_node(ProcessorSpec::handler("post", "identity")).unwrap();
        graph.add_edge(&sj.joiner, &"post".into(), SyncMode::Sync).unwrap();
        graph.unmark_sink(&sj.joiner);
        graph.mark_sink(&"post".into()).unwrap();

        let spaces = partition_spaces(&graph).unwrap();
        // pre-split, three branches, post-join
        assert_eq!(spaces.len(), 5);

        let mut assignment = SpaceAssignment::default();
        for (i, s) in spaces.iter().enumerate() {
            if i > 0 {
                assignment = assignment.assign(&s.id, ContextDescriptor::InlinePool(1));
            }
        }
        assert!(matches!(
            assign_spaces(&graph, &assignment),
            Err(DistributionError::UnassignedSpace(_))
        ));

        let full = assignment.assign(&spaces[0].id, ContextDescriptor::WorkerContext("w0".into()));
        let before = graph.canonical();
        let plan = assign_spaces(&graph, &full).unwrap();
        assert_eq!(graph.canonical(), before, "assignment must not touch the model");
        assert_eq!(plan.contexts.len(), 5);
        assert_eq!(plan.node_space.len(), graph.node_count());
    }

    #[test]
    fn plan_text_round_trips() {
        let assignment = SpaceAssignment::default()
            .assign("a", ContextDescriptor::InlinePool(2))
            .assign("b branch", ContextDescriptor::WorkerContext("risk-1".into()));
        let plan = DeploymentPlan {
            contexts: assignment.contexts.clone(),
            node_space: BTreeMap::new(),
        };
        let text = plan.to_text();
        let back = SpaceAssignment::parse(&text).unwrap();
        assert_eq!(back, assignment);
    }
}
