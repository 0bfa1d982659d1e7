//! Shared execution core: compiled topology, per-node state, and the
//! depth-first fragment processor used by both execution modes.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicI64, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use indexmap::IndexMap;

use crate::catalog::{self, StreamBehavior};
use crate::digest::derive_seed;
use crate::endpoints::{
    open_sink, open_source, DatasetEndpoint, FragmentSink, FragmentSource, SharedSink,
};
use crate::fragment::Fragment;
use crate::graph::{NodeId, ProcessorKind, StreamGraph, SyncMode};
use crate::plasticity::{ModificationConnector, PlasticEngine, Predicate, RouteDecision};
use crate::reactives::ReactiveEngine;
use crate::value::Value;

use super::{
    ExecutionMode, ModifierConfig, NodeCounts, PlasticSummary, RunConfig, RunOutcome, RunReport,
    RunSetup, RuntimeError, SourceStats,
};

// ---------------------------------------------------------------------------
// Compiled topology
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub(crate) struct OutEdge {
    pub target: usize,
    pub mode: SyncMode,
}

pub(crate) struct TopoNode {
    pub id: NodeId,
    pub kind: ProcessorKind,
    pub behavior: String,
    pub params: IndexMap<String, Value>,
    pub out: Vec<OutEdge>,
    pub is_source: bool,
    pub is_sink: bool,
}

pub(crate) struct Topology {
    pub nodes: Vec<TopoNode>,
    pub index: HashMap<NodeId, usize>,
    /// Region per node: maximal weakly connected components over Sync edges.
    pub region_of: Vec<usize>,
    pub region_count: usize,
    /// Static nodes in dependency order, loopback edges ignored; drives the
    /// end-of-input flush sequence.
    pub topo_order: Vec<usize>,
    pub async_capacity_total: usize,
}

pub(crate) fn compile(graph: &StreamGraph) -> Topology {
    let ids: Vec<NodeId> = graph.node_ids().cloned().collect();
    let index: HashMap<NodeId, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i))
        .collect();

    let mut nodes: Vec<TopoNode> = graph
        .nodes()
        .map(|spec| TopoNode {
            id: spec.id.clone(),
            kind: spec.kind,
            behavior: spec.behavior.clone(),
            params: spec.params.clone(),
            out: Vec::new(),
            is_source: graph.sources().contains(&spec.id),
            is_sink: graph.sinks().contains(&spec.id),
        })
        .collect();
    let mut async_capacity_total = 0;
    for edge in graph.edges() {
        let from = index[&edge.from];
        if let SyncMode::Async { queue_capacity } = edge.mode {
            async_capacity_total += queue_capacity;
        }
        nodes[from].out.push(OutEdge {
            target: index[&edge.to],
            mode: edge.mode,
        });
    }

    // regions: union-find over Sync edges
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for edge in graph.edges() {
        if edge.mode == SyncMode::Sync {
            let (a, b) = (
                find(&mut parent, index[&edge.from]),
                find(&mut parent, index[&edge.to]),
            );
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut region_ids: HashMap<usize, usize> = HashMap::new();
    let mut region_of = vec![0usize; nodes.len()];
    for i in 0..nodes.len() {
        let root = find(&mut parent, i);
        let next = region_ids.len();
        let region = *region_ids.entry(root).or_insert(next);
        region_of[i] = region;
    }

    // dependency order with legal loopbacks (async connector-to-connector
    // edges) removed; validation guarantees the remainder is acyclic
    let mut indeg = vec![0usize; nodes.len()];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for edge in graph.edges() {
        let (f, t) = (index[&edge.from], index[&edge.to]);
        let loopback = edge.mode.is_async()
            && nodes[f].kind == ProcessorKind::Connector
            && nodes[t].kind == ProcessorKind::Connector;
        if !loopback {
            adj[f].push(t);
            indeg[t] += 1;
        }
    }
    let mut ready: Vec<usize> = (0..nodes.len()).filter(|&i| indeg[i] == 0).collect();
    ready.sort_unstable();
    let mut topo_order = Vec::with_capacity(nodes.len());
    let mut queue = std::collections::VecDeque::from(ready);
    while let Some(u) = queue.pop_front() {
        topo_order.push(u);
        for &v in &adj[u] {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                queue.push_back(v);
            }
        }
    }
    // cycles that validation tolerated (none expected) fall back to index order
    if topo_order.len() != nodes.len() {
        topo_order = (0..nodes.len()).collect();
    }

    Topology {
        region_count: region_ids.len(),
        nodes,
        index,
        region_of,
        topo_order,
        async_capacity_total,
    }
}

// ---------------------------------------------------------------------------
// Shared run state
// ---------------------------------------------------------------------------

#[derive(Default)]
pub(crate) struct NodeCounters {
    pub inbound: AtomicU64,
    pub outbound: AtomicU64,
    pub dropped: AtomicU64,
}

pub(crate) struct CounterRegistry {
    inner: Mutex<BTreeMap<String, Arc<NodeCounters>>>,
}

impl CounterRegistry {
    fn new() -> CounterRegistry {
        CounterRegistry {
            inner: Mutex::new(BTreeMap::new()),
        }
    }

    pub(crate) fn register(&self, id: &NodeId) -> Arc<NodeCounters> {
        self.inner
            .lock()
            .expect("counter registry")
            .entry(id.as_str().to_string())
            .or_default()
            .clone()
    }

    fn snapshot(&self) -> BTreeMap<String, NodeCounts> {
        self.inner
            .lock()
            .expect("counter registry")
            .iter()
            .map(|(id, c)| {
                (
                    id.clone(),
                    NodeCounts {
                        inbound: c.inbound.load(Ordering::Relaxed),
                        outbound: c.outbound.load(Ordering::Relaxed),
                        dropped: c.dropped.load(Ordering::Relaxed),
                    },
                )
            })
            .collect()
    }
}

/// State shared by every worker of a run.
pub(crate) struct Shared {
    pub config: RunConfig,
    pub counters: CounterRegistry,
    pub reactive: Option<Arc<Mutex<ReactiveEngine>>>,
    /// Sinks deduplicated by path so branches appending to one location
    /// share a single writer.
    pub path_sinks: Mutex<HashMap<PathBuf, SharedSink>>,
    pub fallback_sink: Option<SharedSink>,
    pub errors: Mutex<Vec<String>>,
    pub dropped_total: AtomicU64,
    pub fuel_exhausted: AtomicU64,
    pub queue_resident: AtomicI64,
    pub queue_peak: AtomicI64,
    pub next_dynamic: AtomicUsize,
    pub cancel: std::sync::atomic::AtomicBool,
}

impl Shared {
    pub(crate) fn new(setup: &RunSetup, config: RunConfig, first_dynamic: usize) -> Shared {
        Shared {
            config,
            counters: CounterRegistry::new(),
            reactive: setup.reactive.clone(),
            path_sinks: Mutex::new(HashMap::new()),
            fallback_sink: setup.fallback_sink.clone(),
            errors: Mutex::new(Vec::new()),
            dropped_total: AtomicU64::new(0),
            fuel_exhausted: AtomicU64::new(0),
            queue_resident: AtomicI64::new(0),
            queue_peak: AtomicI64::new(0),
            next_dynamic: AtomicUsize::new(first_dynamic),
            cancel: std::sync::atomic::AtomicBool::new(false),
        }
    }

    pub(crate) fn note_error(&self, node: &NodeId, seq: u64, message: impl std::fmt::Display) {
        let mut errors = self.errors.lock().expect("error log");
        if errors.len() < 64 {
            errors.push(format!("node `{node}` fragment seq {seq}: {message}"));
        }
        self.dropped_total.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn failure_limit_hit(&self) -> bool {
        match self.config.failure_limit {
            Some(limit) => self.dropped_total.load(Ordering::Relaxed) > limit,
            None => false,
        }
    }

    pub(crate) fn counters_snapshot(&self) -> BTreeMap<String, NodeCounts> {
        self.counters.snapshot()
    }
}

// ---------------------------------------------------------------------------
// Node state and dispatch
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CmpOp {
    Gt,
    Lt,
    Ge,
    Le,
    Eq,
    Ne,
}

impl CmpOp {
    fn parse(text: &str) -> Option<CmpOp> {
        Some(match text {
            "gt" | ">" => CmpOp::Gt,
            "lt" | "<" => CmpOp::Lt,
            "ge" | ">=" => CmpOp::Ge,
            "le" | "<=" => CmpOp::Le,
            "eq" | "==" => CmpOp::Eq,
            "ne" | "!=" => CmpOp::Ne,
            _ => return None,
        })
    }

    fn eval(self, lhs: &Value, rhs: &Value) -> Result<bool, crate::value::ValueError> {
        Ok(match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            CmpOp::Gt => lhs.as_num()? > rhs.as_num()?,
            CmpOp::Lt => lhs.as_num()? < rhs.as_num()?,
            CmpOp::Ge => lhs.as_num()? >= rhs.as_num()?,
            CmpOp::Le => lhs.as_num()? <= rhs.as_num()?,
        })
    }
}

struct GateState {
    field: String,
    op: CmpOp,
    than: Value,
    fuel: i64,
    loop_edge: usize,
    error_edge: usize,
    forward_edges: Vec<usize>,
}

struct ModifierState {
    engine: PlasticEngine,
    branch_mode: SyncMode,
    template: crate::graph::SubgraphTemplate,
    /// branch entry node id -> dynamic node index
    entries: HashMap<NodeId, usize>,
    /// dynamic node indices in creation order, for the flush pass
    branch_nodes: Vec<usize>,
    unroutable: u64,
}

enum Dispatch {
    /// Route each output along every out edge (handlers have at most one).
    Forward,
    KeyRoute {
        field: String,
        assign: HashMap<String, usize>,
        next: usize,
    },
    RoundRobin {
        next: usize,
    },
    Gate(GateState),
    Modify(Box<ModifierState>),
    ReactiveSet {
        name: String,
        field: String,
    },
}

pub(crate) struct NodeState {
    pub idx: usize,
    pub id: NodeId,
    behavior: Option<Box<dyn StreamBehavior>>,
    dispatch: Dispatch,
    pub sink: Option<Box<dyn FragmentSink>>,
    counters: Arc<NodeCounters>,
    out: Vec<OutEdge>,
}

/// Reserved payload field carrying the feedback loop counter.
pub const LOOP_FIELD: &str = "_loop";

fn loop_count(frag: &Fragment) -> i64 {
    frag.get(LOOP_FIELD)
        .and_then(|v| v.as_int().ok())
        .unwrap_or(0)
}

/// Builds the mutable state for one static node. `graph` is the full model
/// graph, the base of any modifier's version chain.
pub(crate) fn build_node_state(
    topo: &Topology,
    graph: &StreamGraph,
    idx: usize,
    setup_sinks: &mut HashMap<NodeId, Box<dyn FragmentSink>>,
    templates: &mut HashMap<NodeId, ModifierConfig>,
    shared: &Shared,
) -> Result<NodeState, RuntimeError> {
    let node = &topo.nodes[idx];
    let counters = shared.counters.register(&node.id);
    let seed = derive_seed(shared.config.seed, node.id.as_str());

    let dispatch = match node.kind {
        ProcessorKind::Modifier => {
            let config = templates
                .remove(&node.id)
                .ok_or_else(|| RuntimeError::MissingTemplate(node.id.clone()))?;
            let engine = PlasticEngine::new(
                graph.clone(),
                ModificationConnector {
                    node: node.id.clone(),
                    predicate: Predicate::first_arrival(&config.key_field),
                    template: config.template.clone(),
                    branch_mode: config.branch_mode,
                },
            );
            Dispatch::Modify(Box::new(ModifierState {
                engine,
                branch_mode: config.branch_mode,
                template: config.template,
                entries: HashMap::new(),
                branch_nodes: Vec::new(),
                unroutable: 0,
            }))
        }
        ProcessorKind::Reactive => Dispatch::ReactiveSet {
            name: node
                .params
                .get("name")
                .and_then(|v| v.as_text().ok().map(str::to_string))
                .unwrap_or_else(|| node.id.as_str().to_string()),
            field: node
                .params
                .get("field")
                .and_then(|v| v.as_text().ok().map(str::to_string))
                .unwrap_or_else(|| catalog::DEFAULT_FIELD.to_string()),
        },
        _ => match node.behavior.as_str() {
            "split_key" => Dispatch::KeyRoute {
                field: node
                    .params
                    .get("key")
                    .and_then(|v| v.as_text().ok().map(str::to_string))
                    .unwrap_or_else(|| catalog::DEFAULT_FIELD.to_string()),
                assign: HashMap::new(),
                next: 0,
            },
            "split_roundrobin" => Dispatch::RoundRobin { next: 0 },
            "feedback_gate" => {
                let text = |name: &str| {
                    node.params
                        .get(name)
                        .and_then(|v| v.as_text().ok().map(str::to_string))
                };
                let loop_to = text("loop_to").map(NodeId::new);
                let error_to = text("error_to").map(NodeId::new);
                let find_edge = |target: &Option<NodeId>| {
                    target.as_ref().and_then(|t| {
                        topo.index.get(t).and_then(|&tidx| {
                            node.out.iter().position(|e| e.target == tidx)
                        })
                    })
                };
                let loop_edge = find_edge(&loop_to);
                let error_edge = find_edge(&error_to);
                let (loop_edge, error_edge) = match (loop_edge, error_edge) {
                    (Some(l), Some(e)) => (l, e),
                    _ => {
                        return Err(RuntimeError::Behavior {
                            node: node.id.clone(),
                            source: catalog::CatalogError::MissingParam {
                                behavior: "feedback_gate".to_string(),
                                param: "loop_to/error_to".to_string(),
                            },
                        })
                    }
                };
                let forward_edges = (0..node.out.len())
                    .filter(|&i| i != loop_edge && i != error_edge)
                    .collect();
                Dispatch::Gate(GateState {
                    field: text("field").unwrap_or_else(|| catalog::DEFAULT_FIELD.to_string()),
                    op: node
                        .params
                        .get("op")
                        .and_then(|v| v.as_text().ok())
                        .and_then(CmpOp::parse)
                        .unwrap_or(CmpOp::Gt),
                    than: node.params.get("than").cloned().unwrap_or(Value::Int(0)),
                    fuel: node
                        .params
                        .get("fuel")
                        .and_then(|v| v.as_int().ok())
                        .unwrap_or(1),
                    loop_edge,
                    error_edge,
                    forward_edges,
                })
            }
            _ => Dispatch::Forward,
        },
    };

    let behavior = match &dispatch {
        Dispatch::Modify(_) | Dispatch::ReactiveSet { .. } => None,
        Dispatch::Gate(_) | Dispatch::KeyRoute { .. } | Dispatch::RoundRobin { .. } => None,
        Dispatch::Forward => Some(
            catalog::build_behavior(&node.behavior, &node.params, seed).map_err(|e| {
                RuntimeError::Behavior {
                    node: node.id.clone(),
                    source: e,
                }
            })?,
        ),
    };

    let sink = if node.is_sink {
        Some(resolve_sink(&node.id, &node.params, setup_sinks, shared)?)
    } else {
        None
    };

    Ok(NodeState {
        idx,
        id: node.id.clone(),
        behavior,
        dispatch,
        sink,
        counters,
        out: node.out.clone(),
    })
}

fn resolve_sink(
    id: &NodeId,
    params: &IndexMap<String, Value>,
    setup_sinks: &mut HashMap<NodeId, Box<dyn FragmentSink>>,
    shared: &Shared,
) -> Result<Box<dyn FragmentSink>, RuntimeError> {
    if let Some(bound) = setup_sinks.remove(id) {
        return Ok(bound);
    }
    if let Some(Value::Text(location)) = params.get("location") {
        let path = PathBuf::from(location);
        let mut sinks = shared.path_sinks.lock().expect("path sinks");
        if let Some(existing) = sinks.get(&path) {
            return Ok(Box::new(existing.clone()));
        }
        let sink = SharedSink::new(open_sink(&DatasetEndpoint::new(&path))?);
        sinks.insert(path, sink.clone());
        return Ok(Box::new(sink));
    }
    if let Some(fallback) = &shared.fallback_sink {
        return Ok(Box::new(fallback.clone()));
    }
    Ok(Box::new(NullSink::default()))
}

pub(crate) fn resolve_source(
    id: &NodeId,
    params: &IndexMap<String, Value>,
    setup_sources: &mut HashMap<NodeId, Box<dyn FragmentSource>>,
) -> Result<Box<dyn FragmentSource>, RuntimeError> {
    if let Some(bound) = setup_sources.remove(id) {
        return Ok(bound);
    }
    if let Some(Value::Text(location)) = params.get("location") {
        return Ok(open_source(&DatasetEndpoint::new(PathBuf::from(location)))?);
    }
    Err(RuntimeError::UnboundSource(id.clone()))
}

/// Discards fragments while counting them.
#[derive(Default)]
struct NullSink {
    written: u64,
}

impl FragmentSink for NullSink {
    fn accept(&mut self, _frag: &Fragment) -> Result<(), crate::endpoints::EndpointError> {
        self.written += 1;
        Ok(())
    }

    fn finish(&mut self) -> Result<(), crate::endpoints::EndpointError> {
        Ok(())
    }

    fn written(&self) -> u64 {
        self.written
    }
}

// ---------------------------------------------------------------------------
// Local executor: depth-first processing over owned nodes
// ---------------------------------------------------------------------------

/// Where a routed fragment goes: to a node this executor owns, or across to
/// another region.
pub(crate) trait EdgeTransport {
    fn send_remote(&self, region: usize, target: usize, frag: Fragment);
}

/// Transport for the single-task oracle: everything is local.
pub(crate) struct NoTransport;

impl EdgeTransport for NoTransport {
    fn send_remote(&self, _region: usize, _target: usize, _frag: Fragment) {
        unreachable!("oracle execution owns every node");
    }
}

pub(crate) struct LocalExec<T: EdgeTransport> {
    pub nodes: HashMap<usize, NodeState>,
    pub shared: Arc<Shared>,
    /// Static node index -> owning region; dynamic nodes are always local.
    pub region_of: Arc<Vec<usize>>,
    pub my_region: usize,
    pub transport: T,
    /// Scratch stack reused across fragments.
    stack: Vec<(usize, Fragment)>,
}

impl<T: EdgeTransport> LocalExec<T> {
    pub(crate) fn new(
        shared: Arc<Shared>,
        region_of: Arc<Vec<usize>>,
        my_region: usize,
        transport: T,
    ) -> LocalExec<T> {
        LocalExec {
            nodes: HashMap::new(),
            shared,
            region_of,
            my_region,
            transport,
            stack: Vec::new(),
        }
    }

    fn is_local(&self, idx: usize) -> bool {
        if idx >= self.region_of.len() {
            return true; // dynamic nodes live with their modifier
        }
        self.region_of[idx] == self.my_region
    }

    /// Fully processes one fragment entering at `entry`, depth-first.
    /// Outgoing async edges to other regions hand off through the transport;
    /// everything local continues inline in edge-declaration order.
    pub(crate) fn process(&mut self, entry: usize, frag: Fragment) -> Result<(), RuntimeError> {
        debug_assert!(self.stack.is_empty());
        self.stack.push((entry, frag));
        while let Some((idx, frag)) = self.stack.pop() {
            self.step(idx, frag)?;
        }
        Ok(())
    }

    /// Routes `frag` along the node's out-edge at `slot`.
    fn route(&mut self, from: usize, slot: usize, frag: Fragment, pending: &mut Vec<(usize, Fragment)>) {
        let edge = self.nodes[&from].out[slot];
        if self.is_local(edge.target) {
            pending.push((edge.target, frag));
        } else {
            self.transport
                .send_remote(self.region_of[edge.target], edge.target, frag);
        }
    }

    fn step(&mut self, idx: usize, frag: Fragment) -> Result<(), RuntimeError> {
        let node = self
            .nodes
            .get_mut(&idx)
            .expect("fragment routed to unowned node");
        node.counters.inbound.fetch_add(1, Ordering::Relaxed);
        let seq = frag.source_seq;

        // Decide outputs and their edge slots without holding the borrow
        // across routing.
        enum Plan {
            Fan(Vec<Fragment>),            // all edges per fragment
            Slot(usize, Fragment),         // one edge
            DeliverDynamic(usize, Fragment),
            Instantiate(String, Fragment),
            Dropped,
        }

        let plan = match &mut node.dispatch {
            Dispatch::Forward => {
                let mut outputs = Vec::new();
                let behavior = node.behavior.as_mut().expect("forward node has behavior");
                match behavior.apply(frag, &mut outputs) {
                    Ok(()) => {
                        if outputs.is_empty() {
                            node.counters.dropped.fetch_add(1, Ordering::Relaxed);
                            Plan::Dropped
                        } else {
                            Plan::Fan(outputs)
                        }
                    }
                    Err(e) => {
                        node.counters.dropped.fetch_add(1, Ordering::Relaxed);
                        self.shared.note_error(&node.id, seq, e);
                        Plan::Dropped
                    }
                }
            }
            Dispatch::KeyRoute { field, assign, next } => {
                match frag.get(field.as_str()).map(|v| v.route_key()) {
                    None => {
                        node.counters.dropped.fetch_add(1, Ordering::Relaxed);
                        self.shared.note_error(
                            &node.id,
                            seq,
                            format!("missing routing key field `{field}`"),
                        );
                        Plan::Dropped
                    }
                    Some(key) => {
                        let edges = node.out.len().max(1);
                        let slot = *assign.entry(key).or_insert_with(|| {
                            let s = *next % edges;
                            *next += 1;
                            s
                        });
                        Plan::Slot(slot, frag)
                    }
                }
            }
            Dispatch::RoundRobin { next } => {
                let slot = *next % node.out.len().max(1);
                *next += 1;
                Plan::Slot(slot, frag)
            }
            Dispatch::Gate(gate) => {
                let satisfied = match frag.get(&gate.field) {
                    Some(v) => gate.op.eval(v, &gate.than).unwrap_or(false),
                    None => false,
                };
                if satisfied {
                    let count = loop_count(&frag);
                    if count < gate.fuel {
                        let mut looped = frag;
                        looped.set(LOOP_FIELD, Value::Int(count + 1));
                        Plan::Slot(gate.loop_edge, looped)
                    } else {
                        self.shared.fuel_exhausted.fetch_add(1, Ordering::Relaxed);
                        Plan::Slot(gate.error_edge, frag)
                    }
                } else {
                    let slots = gate.forward_edges.clone();
                    // fan over forward edges only
                    let mut plans = Vec::with_capacity(slots.len());
                    for slot in &slots {
                        plans.push((*slot, frag.clone()));
                    }
                    node.counters.outbound.fetch_add(plans.len() as u64, Ordering::Relaxed);
                    let mut pending = Vec::new();
                    for (slot, f) in plans.into_iter().rev() {
                        self.route(idx, slot, f, &mut pending);
                    }
                    for item in pending.into_iter().rev() {
                        self.stack.push(item);
                    }
                    return Ok(());
                }
            }
            Dispatch::Modify(state) => match state.engine.apply(&frag)? {
                RouteDecision::NewBranch { key, .. } => Plan::Instantiate(key, frag),
                RouteDecision::Existing { entry, .. } => {
                    let target = state.entries[&entry];
                    Plan::DeliverDynamic(target, frag)
                }
                RouteDecision::Unroutable { key } => {
                    state.unroutable += 1;
                    node.counters.dropped.fetch_add(1, Ordering::Relaxed);
                    self.shared
                        .note_error(&node.id, seq, format!("no branch for key `{key}`"));
                    Plan::Dropped
                }
            },
            Dispatch::ReactiveSet { name, field } => {
                let value = frag.get(field.as_str()).cloned();
                match (value, &self.shared.reactive) {
                    (Some(v), Some(engine)) => {
                        let result = engine
                            .lock()
                            .expect("reactive engine")
                            .set_by_name(name, v);
                        if let Err(e) = result {
                            node.counters.dropped.fetch_add(1, Ordering::Relaxed);
                            self.shared.note_error(&node.id, seq, e);
                            Plan::Dropped
                        } else {
                            Plan::Fan(vec![frag])
                        }
                    }
                    (None, _) => {
                        node.counters.dropped.fetch_add(1, Ordering::Relaxed);
                        self.shared.note_error(
                            &node.id,
                            seq,
                            format!("missing reactive payload field `{field}`"),
                        );
                        Plan::Dropped
                    }
                    (Some(_), None) => {
                        node.counters.dropped.fetch_add(1, Ordering::Relaxed);
                        self.shared
                            .note_error(&node.id, seq, "no reactive engine attached");
                        Plan::Dropped
                    }
                }
            }
        };

        match plan {
            Plan::Dropped => Ok(()),
            Plan::Fan(outputs) => {
                self.emit_fan(idx, outputs);
                Ok(())
            }
            Plan::Slot(slot, frag) => {
                let node = self.nodes.get_mut(&idx).unwrap();
                node.counters.outbound.fetch_add(1, Ordering::Relaxed);
                let mut pending = Vec::new();
                self.route(idx, slot, frag, &mut pending);
                for item in pending {
                    self.stack.push(item);
                }
                Ok(())
            }
            Plan::DeliverDynamic(target, frag) => {
                let node = self.nodes.get_mut(&idx).unwrap();
                node.counters.outbound.fetch_add(1, Ordering::Relaxed);
                self.stack.push((target, frag));
                Ok(())
            }
            Plan::Instantiate(key, frag) => {
                let entry_idx = self.instantiate_branch(idx, &key)?;
                let node = self.nodes.get_mut(&idx).unwrap();
                node.counters.outbound.fetch_add(1, Ordering::Relaxed);
                self.stack.push((entry_idx, frag));
                Ok(())
            }
        }
    }

    /// Emits behavior outputs: written to the node's sink when it is one,
    /// otherwise fanned over all out edges. Pushes in reverse so declaration
    /// order is processed first.
    fn emit_fan(&mut self, idx: usize, outputs: Vec<Fragment>) {
        let (edge_count, is_sink) = {
            let node = &self.nodes[&idx];
            (node.out.len(), node.sink.is_some())
        };
        let mut emitted = 0u64;
        let mut pending: Vec<(usize, Fragment)> = Vec::new();
        for frag in outputs {
            if is_sink {
                emitted += 1;
                let node = self.nodes.get_mut(&idx).unwrap();
                let sink = node.sink.as_mut().unwrap();
                if let Err(e) = sink.accept(&frag) {
                    let id = node.id.clone();
                    node.counters.dropped.fetch_add(1, Ordering::Relaxed);
                    self.shared.note_error(&id, frag.source_seq, e);
                }
                continue;
            }
            for slot in 0..edge_count {
                emitted += 1;
                self.route(idx, slot, frag.clone(), &mut pending);
            }
            if edge_count == 0 {
                // no sink and no edges: terminal counting only
                emitted += 1;
            }
        }
        self.nodes[&idx]
            .counters
            .outbound
            .fetch_add(emitted, Ordering::Relaxed);
        for item in pending.into_iter().rev() {
            self.stack.push(item);
        }
    }

    /// Compiles a freshly instantiated branch into dynamic node states owned
    /// by this executor. Returns the branch entry's dynamic index.
    fn instantiate_branch(&mut self, modifier_idx: usize, key: &str) -> Result<usize, RuntimeError> {
        let (instance, branch_mode) = {
            let node = self.nodes.get_mut(&modifier_idx).unwrap();
            let state = match &mut node.dispatch {
                Dispatch::Modify(state) => state,
                _ => unreachable!("instantiate on non-modifier"),
            };
            let instance = state
                .template
                .instantiate(key, &IndexMap::new())
                .map_err(crate::plasticity::PlasticityError::from)?;
            (instance, state.branch_mode)
        };
        let _ = branch_mode; // branches execute inline on the modifier's task

        // allocate dynamic indices
        let sub = &instance.subgraph;
        let mut local_index: HashMap<NodeId, usize> = HashMap::new();
        for spec in sub.nodes() {
            let dyn_idx = self.shared.next_dynamic.fetch_add(1, Ordering::Relaxed);
            local_index.insert(spec.id.clone(), dyn_idx);
        }
        let mut new_states = Vec::new();
        for spec in sub.nodes() {
            let dyn_idx = local_index[&spec.id];
            let counters = self.shared.counters.register(&spec.id);
            let seed = derive_seed(self.shared.config.seed, spec.id.as_str());
            let out: Vec<OutEdge> = sub
                .edges()
                .iter()
                .filter(|e| e.from == spec.id)
                .map(|e| OutEdge {
                    target: local_index[&e.to],
                    mode: e.mode,
                })
                .collect();
            let is_terminal = sub.sinks().contains(&spec.id);
            let sink = if is_terminal {
                let mut none = HashMap::new();
                Some(resolve_sink(&spec.id, &spec.params, &mut none, &self.shared)?)
            } else {
                None
            };
            let behavior = catalog::build_behavior(&spec.behavior, &spec.params, seed)
                .map_err(|e| RuntimeError::Behavior {
                    node: spec.id.clone(),
                    source: e,
                })?;
            new_states.push(NodeState {
                idx: dyn_idx,
                id: spec.id.clone(),
                behavior: Some(behavior),
                dispatch: Dispatch::Forward,
                sink,
                counters,
                out,
            });
        }
        let entry_idx = local_index[&instance.entry];
        let created: Vec<usize> = new_states.iter().map(|s| s.idx).collect();
        for state in new_states {
            self.nodes.insert(state.idx, state);
        }
        let node = self.nodes.get_mut(&modifier_idx).unwrap();
        if let Dispatch::Modify(state) = &mut node.dispatch {
            state.entries.insert(instance.entry.clone(), entry_idx);
            state.branch_nodes.extend(created);
        }
        Ok(entry_idx)
    }

    /// End-of-input flush for one node (and, for modifiers, their branches).
    /// Flushed fragments route exactly like normal outputs.
    pub(crate) fn flush_node(&mut self, idx: usize) -> Result<(), RuntimeError> {
        let mut targets = vec![idx];
        if let Some(node) = self.nodes.get(&idx) {
            if let Dispatch::Modify(state) = &node.dispatch {
                targets.extend(state.branch_nodes.iter().copied());
            }
        }
        for target in targets {
            let outputs = {
                let node = match self.nodes.get_mut(&target) {
                    Some(n) => n,
                    None => continue,
                };
                let mut outputs = Vec::new();
                if let Some(behavior) = node.behavior.as_mut() {
                    if let Err(e) = behavior.flush(&mut outputs) {
                        let id = node.id.clone();
                        self.shared.note_error(&id, 0, e);
                    }
                }
                outputs
            };
            if !outputs.is_empty() {
                self.emit_fan(target, outputs);
                while let Some((idx, frag)) = self.stack.pop() {
                    self.step(idx, frag)?;
                }
            }
        }
        Ok(())
    }

    /// Finishes all owned sinks.
    pub(crate) fn finish_sinks(&mut self) -> Result<(), RuntimeError> {
        for state in self.nodes.values_mut() {
            if let Some(sink) = state.sink.as_mut() {
                sink.finish()?;
            }
        }
        Ok(())
    }

    /// Extracts plastic summaries from owned modifier nodes.
    pub(crate) fn plastic_summaries(&self) -> BTreeMap<String, PlasticSummary> {
        let mut out = BTreeMap::new();
        for state in self.nodes.values() {
            if let Dispatch::Modify(m) = &state.dispatch {
                out.insert(
                    state.id.as_str().to_string(),
                    PlasticSummary {
                        versions: m.engine.versions().to_vec(),
                        branch_catalog: m.engine.branch_catalog(),
                        predicate_trace: m.engine.predicate_trace().to_vec(),
                        predicate_state: m.engine.predicate_state(),
                        final_graph: m.engine.current_graph().canonical(),
                        unroutable: m.unroutable,
                    },
                );
            }
        }
        out
    }

    pub(crate) fn sink_written(&self) -> BTreeMap<String, u64> {
        self.nodes
            .values()
            .filter_map(|s| {
                s.sink
                    .as_ref()
                    .map(|sink| (s.id.as_str().to_string(), sink.written()))
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Sources with peeking, for time-merged draining
// ---------------------------------------------------------------------------

pub(crate) struct PeekedSource {
    pub node_idx: usize,
    pub node_id: NodeId,
    pub decl_order: usize,
    source: Box<dyn FragmentSource>,
    buffered: Option<Fragment>,
    pub read: u64,
    exhausted: bool,
}

impl PeekedSource {
    pub(crate) fn new(
        node_idx: usize,
        node_id: NodeId,
        decl_order: usize,
        source: Box<dyn FragmentSource>,
    ) -> PeekedSource {
        PeekedSource {
            node_idx,
            node_id,
            decl_order,
            source,
            buffered: None,
            read: 0,
            exhausted: false,
        }
    }

    pub(crate) fn peek(&mut self) -> Result<Option<&Fragment>, RuntimeError> {
        if self.buffered.is_none() && !self.exhausted {
            match self.source.next()? {
                Some(f) => self.buffered = Some(f),
                None => self.exhausted = true,
            }
        }
        Ok(self.buffered.as_ref())
    }

    pub(crate) fn take(&mut self) -> Option<Fragment> {
        let f = self.buffered.take();
        if f.is_some() {
            self.read += 1;
        }
        f
    }

    pub(crate) fn rejected(&self) -> u64 {
        self.source.rejected()
    }
}

/// Picks the source with the smallest (event_time, declaration order) head.
pub(crate) fn next_source(sources: &mut [PeekedSource]) -> Result<Option<usize>, RuntimeError> {
    let mut best: Option<(i64, usize, usize)> = None;
    for (i, s) in sources.iter_mut().enumerate() {
        let decl = s.decl_order;
        if let Some(frag) = s.peek()? {
            let key = (frag.event_time, decl);
            if best.map(|(t, d, _)| key < (t, d)).unwrap_or(true) {
                best = Some((key.0, key.1, i));
            }
        }
    }
    Ok(best.map(|(_, _, i)| i))
}

// ---------------------------------------------------------------------------
// The single-task oracle
// ---------------------------------------------------------------------------

/// Deterministic inline executor: owns the whole compiled graph on the
/// calling thread. Used directly by the oracle mode and by the simulation
/// driver, which injects fragments under its own virtual-time scheduler.
pub struct InlineExecutor {
    exec: LocalExec<NoTransport>,
    sources: Vec<PeekedSource>,
    topo_order: Vec<usize>,
    index: HashMap<NodeId, usize>,
    started: Instant,
    async_capacity_total: usize,
}

impl InlineExecutor {
    /// Builds the executor. Source nodes without a binding or `location`
    /// param are allowed only when `require_sources` is false (the
    /// simulation driver injects fragments itself).
    pub fn new(mut setup: RunSetup, config: RunConfig, require_sources: bool) -> Result<InlineExecutor, RuntimeError> {
        let topo = compile(&setup.graph);
        let shared = Arc::new(Shared::new(&setup, config, topo.nodes.len()));
        let region_of = Arc::new(vec![0usize; topo.nodes.len()]);
        let mut exec = LocalExec::new(shared, region_of, 0, NoTransport);
        let mut templates = std::mem::take(&mut setup.templates);
        for idx in 0..topo.nodes.len() {
            let state = build_node_state(
                &topo,
                &setup.graph,
                idx,
                &mut setup.sinks,
                &mut templates,
                &exec.shared,
            )?;
            exec.nodes.insert(idx, state);
        }
        let mut sources = Vec::new();
        let mut decl = 0;
        for idx in 0..topo.nodes.len() {
            let node = &topo.nodes[idx];
            if node.is_source {
                match resolve_source(&node.id, &node.params, &mut setup.sources) {
                    Ok(src) => {
                        sources.push(PeekedSource::new(idx, node.id.clone(), decl, src));
                    }
                    Err(RuntimeError::UnboundSource(id)) if !require_sources => {
                        let _ = id;
                    }
                    Err(e) => return Err(e),
                }
                decl += 1;
            }
        }
        Ok(InlineExecutor {
            exec,
            sources,
            topo_order: topo.topo_order,
            index: topo.index,
            started: Instant::now(),
            async_capacity_total: topo.async_capacity_total,
        })
    }

    /// Injects one fragment at a node (the simulation bridge).
    pub fn inject(&mut self, node: &NodeId, frag: Fragment) -> Result<(), RuntimeError> {
        let idx = *self
            .index
            .get(node)
            .ok_or_else(|| RuntimeError::Graph(crate::graph::GraphError::UnknownNode(node.clone())))?;
        self.exec.process(idx, frag)
    }

    /// Drains all bound sources, merged by (event time, declaration order).
    pub fn drain_sources(&mut self) -> Result<(), RuntimeError> {
        while let Some(i) = next_source(&mut self.sources)? {
            if self.exec.shared.cancel.load(Ordering::Relaxed) {
                break;
            }
            if self.exec.shared.failure_limit_hit() {
                let limit = self.exec.shared.config.failure_limit.unwrap_or(0);
                return Err(RuntimeError::FailureLimit {
                    dropped: self.exec.shared.dropped_total.load(Ordering::Relaxed),
                    limit,
                });
            }
            let frag = self.sources[i].take().expect("peeked fragment");
            let entry = self.sources[i].node_idx;
            self.exec.process(entry, frag)?;
        }
        Ok(())
    }

    /// Flush pass and sink finalization; assembles the outcome.
    pub fn finish(mut self) -> Result<RunOutcome, RuntimeError> {
        for idx in self.topo_order.clone() {
            self.exec.flush_node(idx)?;
        }
        self.exec.finish_sinks()?;

        let shared = &self.exec.shared;
        let mut sources = BTreeMap::new();
        for s in &self.sources {
            sources.insert(
                s.node_id.as_str().to_string(),
                SourceStats {
                    read: s.read,
                    rejected: s.rejected(),
                },
            );
        }
        let reactive = shared
            .reactive
            .as_ref()
            .map(|engine| engine.lock().expect("reactive engine").snapshot())
            .unwrap_or_default();
        let report = RunReport {
            seed: shared.config.seed,
            mode: ExecutionMode::SingleTaskOracle,
            cancelled: shared.cancel.load(Ordering::Relaxed),
            nodes: shared.counters.snapshot(),
            sources,
            sinks: self.exec.sink_written(),
            wall: self.started.elapsed(),
            queue_peak: shared.queue_peak.load(Ordering::Relaxed),
            queue_capacity: self.async_capacity_total,
            fuel_exhausted: shared.fuel_exhausted.load(Ordering::Relaxed),
            errors: shared.errors.lock().expect("errors").clone(),
            config_version: None,
            input_contributions: Vec::new(),
            output_contributions: Vec::new(),
        };
        Ok(RunOutcome {
            plastic: self.exec.plastic_summaries(),
            reactive,
            report,
        })
    }
}

pub(crate) fn oracle_run(setup: RunSetup, config: RunConfig) -> Result<RunOutcome, RuntimeError> {
    let mut executor = InlineExecutor::new(setup, config, true)?;
    executor.drain_sources()?;
    executor.finish()
}
