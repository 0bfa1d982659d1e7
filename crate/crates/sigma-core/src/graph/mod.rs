//! Stream graphs: processor nodes chained by synchronicity-typed edges.
//!
//! A financial model is a directed graph of processors. Edges carry a
//! hand-off mode: synchronous (upstream blocks until downstream completes
//! the fragment) or asynchronous (upstream proceeds, fragment queues).
//! Graphs are immutable values after construction; plasticity produces new
//! graph versions rather than mutating in place.

mod canonical;
mod spaces;
mod template;
mod validate;

pub use canonical::parse_canonical;
pub use spaces::{partition_spaces, Space};
pub use template::{BranchInstance, SubgraphTemplate, TemplateError};
pub use validate::{validate, Violation};

/// Appends an instantiated template branch to `base`, wiring the modifier
/// node to the branch entry. Returns the new graph version value.
pub fn template_append(
    base: &StreamGraph,
    modifier: &NodeId,
    branch: &BranchInstance,
    mode: SyncMode,
) -> Result<StreamGraph, GraphError> {
    template::append_branch(base, modifier, branch, mode)
}

use std::collections::BTreeSet;
use std::fmt;

use indexmap::IndexMap;

use crate::value::Value;

pub const DEFAULT_ASYNC_CAPACITY: usize = 1024;

/// Stable node identifier, unique within a graph. Template instantiation
/// derives branch ids by suffixing the triggering key, e.g. `price[AMZN]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> NodeId {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Branch instance id for a keyed template instantiation.
    pub fn keyed(&self, key: &str) -> NodeId {
        NodeId(format!("{}[{}]", self.0, key))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> NodeId {
        NodeId(s.to_string())
    }
}

/// Leaf of the processor taxonomy: handlers transform fragments, connectors
/// bridge sub-graphs, modifiers rewrite the graph itself, reactives bridge
/// into the behavior layer, agents play scheduled roles in simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcessorKind {
    Handler,
    Connector,
    Modifier,
    Reactive,
    Agent,
}

impl ProcessorKind {
    pub fn name(self) -> &'static str {
        match self {
            ProcessorKind::Handler => "handler",
            ProcessorKind::Connector => "connector",
            ProcessorKind::Modifier => "modifier",
            ProcessorKind::Reactive => "reactive",
            ProcessorKind::Agent => "agent",
        }
    }

    pub fn parse_name(name: &str) -> Option<ProcessorKind> {
        Some(match name {
            "handler" => ProcessorKind::Handler,
            "connector" => ProcessorKind::Connector,
            "modifier" => ProcessorKind::Modifier,
            "reactive" => ProcessorKind::Reactive,
            "agent" => ProcessorKind::Agent,
            _ => return None,
        })
    }
}

/// Edge hand-off mode. Queue capacity exists only on async edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncMode {
    Sync,
    Async { queue_capacity: usize },
}

impl SyncMode {
    pub fn asynchronous() -> SyncMode {
        SyncMode::Async {
            queue_capacity: DEFAULT_ASYNC_CAPACITY,
        }
    }

    pub fn is_async(self) -> bool {
        matches!(self, SyncMode::Async { .. })
    }

    pub fn canonical(self) -> String {
        match self {
            SyncMode::Sync => "sync".to_string(),
            SyncMode::Async { queue_capacity } => format!("async({queue_capacity})"),
        }
    }
}

/// A processor node specification: identity, taxonomy kind, the behavior it
/// runs (a name resolved against the behavior catalog), and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessorSpec {
    pub id: NodeId,
    pub kind: ProcessorKind,
    pub behavior: String,
    pub params: IndexMap<String, Value>,
}

impl ProcessorSpec {
    pub fn new(id: impl Into<String>, kind: ProcessorKind, behavior: impl Into<String>) -> Self {
        ProcessorSpec {
            id: NodeId::new(id),
            kind,
            behavior: behavior.into(),
            params: IndexMap::new(),
        }
    }

    pub fn handler(id: impl Into<String>, behavior: impl Into<String>) -> Self {
        Self::new(id, ProcessorKind::Handler, behavior)
    }

    pub fn connector(id: impl Into<String>, behavior: impl Into<String>) -> Self {
        Self::new(id, ProcessorKind::Connector, behavior)
    }

    pub fn with_param(mut self, name: &str, value: Value) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn param(&self, name: &str) -> Option<&Value> {
        self.params.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub mode: SyncMode,
}

/// The graph value: nodes, edges in declaration order, and the designated
/// source and sink subsets. Edge declaration order is semantic — the
/// single-task oracle processes async fan-out in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamGraph {
    nodes: IndexMap<NodeId, ProcessorSpec>,
    edges: Vec<Edge>,
    sources: BTreeSet<NodeId>,
    sinks: BTreeSet<NodeId>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GraphError {
    #[error("processor list is empty")]
    EmptyChain,
    #[error("arity mismatch: {processors} processors require {} modes, got {modes}", processors - 1)]
    ModeCountMismatch { processors: usize, modes: usize },
    #[error("duplicate node id `{0}`")]
    DuplicateNode(NodeId),
    #[error("node id collision between merged graphs: `{0}`")]
    NodeCollision(NodeId),
    #[error("node `{0}` is not a connector")]
    NotAConnector(NodeId),
    #[error("connector arity violation: {0}")]
    ConnectorArity(String),
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("graph is invalid: {0}")]
    Invalid(String),
}

impl StreamGraph {
    pub fn empty() -> StreamGraph {
        StreamGraph {
            nodes: IndexMap::new(),
            edges: Vec::new(),
            sources: BTreeSet::new(),
            sinks: BTreeSet::new(),
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ProcessorSpec> {
        self.nodes.values()
    }

    pub fn node(&self, id: &NodeId) -> Option<&ProcessorSpec> {
        self.nodes.get(id)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn sources(&self) -> &BTreeSet<NodeId> {
        &self.sources
    }

    pub fn sinks(&self) -> &BTreeSet<NodeId> {
        &self.sinks
    }

    pub fn out_edges<'g>(&'g self, id: &'g NodeId) -> impl Iterator<Item = &'g Edge> {
        self.edges.iter().filter(move |e| &e.from == id)
    }

    pub fn in_edges<'g>(&'g self, id: &'g NodeId) -> impl Iterator<Item = &'g Edge> {
        self.edges.iter().filter(move |e| &e.to == id)
    }

    pub fn in_degree(&self, id: &NodeId) -> usize {
        self.in_edges(id).count()
    }

    pub fn out_degree(&self, id: &NodeId) -> usize {
        self.out_edges(id).count()
    }

    /// Deterministic text form: nodes sorted by id, edges in declaration
    /// order, params with stable key ordering. Byte equality of two
    /// canonical forms is graph equality.
    pub fn canonical(&self) -> String {
        canonical::to_canonical(self)
    }

    /// Builder access for modules that assemble graphs (DSL lowering,
    /// templates, distribution patterns). Duplicate ids are an error.
    pub fn add_node(&mut self, spec: ProcessorSpec) -> Result<(), GraphError> {
        if self.nodes.contains_key(&spec.id) {
            return Err(GraphError::DuplicateNode(spec.id));
        }
        self.nodes.insert(spec.id.clone(), spec);
        Ok(())
    }

    pub fn add_edge(
        &mut self,
        from: &NodeId,
        to: &NodeId,
        mode: SyncMode,
    ) -> Result<(), GraphError> {
        if !self.nodes.contains_key(from) {
            return Err(GraphError::UnknownNode(from.clone()));
        }
        if !self.nodes.contains_key(to) {
            return Err(GraphError::UnknownNode(to.clone()));
        }
        self.edges.push(Edge {
            from: from.clone(),
            to: to.clone(),
            mode,
        });
        Ok(())
    }

    pub fn mark_source(&mut self, id: &NodeId) -> Result<(), GraphError> {
        if !self.nodes.contains_key(id) {
            return Err(GraphError::UnknownNode(id.clone()));
        }
        self.sources.insert(id.clone());
        Ok(())
    }

    pub fn mark_sink(&mut self, id: &NodeId) -> Result<(), GraphError> {
        if !self.nodes.contains_key(id) {
            return Err(GraphError::UnknownNode(id.clone()));
        }
        self.sinks.insert(id.clone());
        Ok(())
    }

    pub fn unmark_source(&mut self, id: &NodeId) {
        self.sources.remove(id);
    }

    pub fn unmark_sink(&mut self, id: &NodeId) {
        self.sinks.remove(id);
    }

    /// Merges `other` into `self`. Node id sets must be disjoint.
    pub fn merge(&mut self, other: StreamGraph) -> Result<(), GraphError> {
        for id in other.nodes.keys() {
            if self.nodes.contains_key(id) {
                return Err(GraphError::NodeCollision(id.clone()));
            }
        }
        self.nodes.extend(other.nodes);
        self.edges.extend(other.edges);
        self.sources.extend(other.sources);
        self.sinks.extend(other.sinks);
        Ok(())
    }
}

/// Composes an ordered list of processors into a linear chain,
/// `x -> P1 d1 P2 d2 ... Pn`. Node `i` connects to node `i+1` with
/// `modes[i]`; the first node is marked source and the last sink.
pub fn compose(
    processors: Vec<ProcessorSpec>,
    modes: Vec<SyncMode>,
) -> Result<StreamGraph, GraphError> {
    if processors.is_empty() {
        return Err(GraphError::EmptyChain);
    }
    if modes.len() != processors.len() - 1 {
        return Err(GraphError::ModeCountMismatch {
            processors: processors.len(),
            modes: modes.len(),
        });
    }
    let mut graph = StreamGraph::empty();
    let ids: Vec<NodeId> = processors.iter().map(|p| p.id.clone()).collect();
    for spec in processors {
        graph.add_node(spec)?;
    }
    for (i, mode) in modes.into_iter().enumerate() {
        graph.add_edge(&ids[i], &ids[i + 1], mode)?;
    }
    graph.mark_source(&ids[0])?;
    graph.mark_sink(&ids[ids.len() - 1])?;
    Ok(graph)
}

/// Bridges `n` inbound sub-graphs to `m` outbound sub-graphs through a
/// connector. Every sink of each inbound graph gains an edge into the
/// connector, and the connector gains an edge to every source of each
/// outbound graph; `inbound_modes[i]` / `outbound_modes[j]` set the hand-off
/// per sub-graph. All node ids are preserved and must be disjoint.
pub fn connect(
    connector: ProcessorSpec,
    inbound: Vec<StreamGraph>,
    outbound: Vec<StreamGraph>,
    inbound_modes: Vec<SyncMode>,
    outbound_modes: Vec<SyncMode>,
) -> Result<StreamGraph, GraphError> {
    if connector.kind != ProcessorKind::Connector {
        return Err(GraphError::NotAConnector(connector.id));
    }
    if inbound.is_empty() || outbound.is_empty() {
        return Err(GraphError::ConnectorArity(format!(
            "connector `{}` requires n>=1 inbound and m>=1 outbound sub-graphs, got {}:{}",
            connector.id,
            inbound.len(),
            outbound.len()
        )));
    }
    if inbound_modes.len() != inbound.len() || outbound_modes.len() != outbound.len() {
        return Err(GraphError::ConnectorArity(format!(
            "mode count mismatch: {}:{} modes for {}:{} sub-graphs",
            inbound_modes.len(),
            outbound_modes.len(),
            inbound.len(),
            outbound.len()
        )));
    }

    let connector_id = connector.id.clone();
    let mut graph = StreamGraph::empty();
    graph.add_node(connector)?;

    let mut inbound_sinks: Vec<(Vec<NodeId>, SyncMode)> = Vec::new();
    for (sub, mode) in inbound.into_iter().zip(inbound_modes) {
        inbound_sinks.push((sub.sinks.iter().cloned().collect(), mode));
        graph.merge(sub)?;
    }
    let mut outbound_sources: Vec<(Vec<NodeId>, SyncMode)> = Vec::new();
    for (sub, mode) in outbound.into_iter().zip(outbound_modes) {
        outbound_sources.push((sub.sources.iter().cloned().collect(), mode));
        graph.merge(sub)?;
    }

    for (sinks, mode) in inbound_sinks {
        for sink in sinks {
            graph.add_edge(&sink, &connector_id, mode)?;
            graph.unmark_sink(&sink);
        }
    }
    for (srcs, mode) in outbound_sources {
        for src in srcs {
            graph.add_edge(&connector_id, &src, mode)?;
            graph.unmark_source(&src);
        }
    }
    Ok(graph)
}
