//! Graph execution: fragments routed through task pools with sync/async
//! hand-off semantics.
//!
//! A maximal component connected by synchronous edges forms one completion
//! barrier: its nodes execute on a single logical task, one fragment at a
//! time, so an upstream node never consumes its next fragment until
//! downstream synchronous processing of the current one finished (pairwise
//! blocking extended transitively). Asynchronous edges cross between such
//! regions through bounded queues with block-when-full backpressure; nothing
//! is ever dropped silently.
//!
//! Two execution modes share one node-processing core. `SingleTaskOracle`
//! runs everything depth-first on the calling thread, processing async
//! fan-out in edge-declaration order — the deterministic reference
//! semantics. `MultiTask` gives each region a worker task pool (size 1
//! unless every node in the region is stateless), which makes cross-region
//! arrival order scheduling-dependent; outputs are guaranteed equal to the
//! oracle's as multisets, and equal as sequences once a resequencer sits on
//! the join output.

mod exec;
mod multitask;

pub use exec::InlineExecutor;
pub use multitask::RunHandle;

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::catalog::CatalogError;
use crate::endpoints::{EndpointError, FragmentSink, FragmentSource};
use crate::graph::{
    GraphError, NodeId, StreamGraph, SubgraphTemplate, SyncMode, Violation,
};
use crate::plasticity::{GraphVersion, PlasticityError};
use crate::reactives::ReactiveEngine;
use crate::value::Value;

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error("graph is invalid: {0:?}")]
    Invalid(Vec<Violation>),
    #[error("source node `{0}` is not bound to an endpoint")]
    UnboundSource(NodeId),
    #[error("node `{node}`: {source}")]
    Behavior {
        node: NodeId,
        #[source]
        source: CatalogError,
    },
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Plasticity(#[from] PlasticityError),
    #[error("modifier node `{0}` has no template configured")]
    MissingTemplate(NodeId),
    #[error("worker panicked: {0}")]
    WorkerPanic(String),
    #[error("failure limit exceeded: {dropped} fragments dropped (limit {limit})")]
    FailureLimit { dropped: u64, limit: u64 },
}

/// Execution mode: real task pools, or the deterministic single-task
/// reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutionMode {
    MultiTask,
    SingleTaskOracle,
}

impl ExecutionMode {
    pub fn name(self) -> &'static str {
        match self {
            ExecutionMode::MultiTask => "multitask",
            ExecutionMode::SingleTaskOracle => "oracle",
        }
    }
}

/// Run configuration. `SingleTaskOracle` ignores `pool_size`.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: ExecutionMode,
    pub seed: u64,
    /// Worker count for regions whose nodes are all stateless.
    pub pool_size: usize,
    /// Abort once this many fragments dropped to behavior failures.
    pub failure_limit: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: ExecutionMode::SingleTaskOracle,
            seed: 0,
            pool_size: 1,
            failure_limit: None,
        }
    }
}

impl RunConfig {
    pub fn oracle(seed: u64) -> RunConfig {
        RunConfig {
            mode: ExecutionMode::SingleTaskOracle,
            seed,
            ..Default::default()
        }
    }

    pub fn multitask(seed: u64) -> RunConfig {
        RunConfig {
            mode: ExecutionMode::MultiTask,
            seed,
            ..Default::default()
        }
    }
}

/// Per-node fragment accounting. For handler nodes,
/// `inbound == outbound + dropped` always holds at run end.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeCounts {
    pub inbound: u64,
    pub outbound: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SourceStats {
    pub read: u64,
    pub rejected: u64,
}

/// The run report: counts, configuration echo, and registry references
/// filled in by the orchestration layer. The canonical text form is the
/// replay-comparison contract and deliberately excludes wall time.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub seed: u64,
    pub mode: ExecutionMode,
    pub cancelled: bool,
    pub nodes: BTreeMap<String, NodeCounts>,
    pub sources: BTreeMap<String, SourceStats>,
    pub sinks: BTreeMap<String, u64>,
    pub wall: Duration,
    pub queue_peak: i64,
    pub queue_capacity: usize,
    pub fuel_exhausted: u64,
    pub errors: Vec<String>,
    /// Configuration snapshot version, set by the orchestration layer.
    pub config_version: Option<String>,
    pub input_contributions: Vec<String>,
    pub output_contributions: Vec<String>,
}

impl RunReport {
    /// Deterministic text record with stable field order.
    pub fn canonical(&self) -> String {
        let mut out = String::from("report {\n");
        out.push_str(&format!("  seed {}\n", self.seed));
        out.push_str(&format!("  mode {}\n", self.mode.name()));
        out.push_str(&format!("  cancelled {}\n", self.cancelled));
        if let Some(v) = &self.config_version {
            out.push_str(&format!("  config {v}\n"));
        }
        for (id, c) in &self.nodes {
            out.push_str(&format!(
                "  node {} in={} out={} dropped={}\n",
                crate::value::quote(id),
                c.inbound,
                c.outbound,
                c.dropped
            ));
        }
        for (id, s) in &self.sources {
            out.push_str(&format!(
                "  source {} read={} rejected={}\n",
                crate::value::quote(id),
                s.read,
                s.rejected
            ));
        }
        for (id, written) in &self.sinks {
            out.push_str(&format!(
                "  sink {} written={}\n",
                crate::value::quote(id),
                written
            ));
        }
        out.push_str(&format!("  fuel_exhausted {}\n", self.fuel_exhausted));
        for input in &self.input_contributions {
            out.push_str(&format!("  input {input}\n"));
        }
        for output in &self.output_contributions {
            out.push_str(&format!("  output {output}\n"));
        }
        out.push_str("}\n");
        out
    }
}

/// Post-run view of one modification connector.
#[derive(Debug, Clone)]
pub struct PlasticSummary {
    pub versions: Vec<GraphVersion>,
    pub branch_catalog: BTreeMap<String, Vec<NodeId>>,
    pub predicate_trace: Vec<bool>,
    pub predicate_state: Vec<String>,
    pub final_graph: String,
    pub unroutable: u64,
}

/// Everything a finished run hands back.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub plastic: BTreeMap<String, PlasticSummary>,
    /// Final reactive values, sorted by behavior name.
    pub reactive: Vec<(String, Option<Value>)>,
}

/// Modification-connector wiring for a modifier node: the routing key
/// field, the branch template, and the hand-off mode of modifier-to-branch
/// edges.
pub struct ModifierConfig {
    pub key_field: String,
    pub template: SubgraphTemplate,
    pub branch_mode: SyncMode,
}

/// A run's bindings and collaborators. Sources bind by node id or via a
/// node's `location` parameter; sinks additionally fall back to
/// `fallback_sink` (handy for collecting branch outputs in tests) or a
/// discarding sink.
pub struct RunSetup {
    pub graph: StreamGraph,
    pub sources: HashMap<NodeId, Box<dyn FragmentSource>>,
    pub sinks: HashMap<NodeId, Box<dyn FragmentSink>>,
    pub templates: HashMap<NodeId, ModifierConfig>,
    pub reactive: Option<Arc<Mutex<ReactiveEngine>>>,
    pub fallback_sink: Option<crate::endpoints::SharedSink>,
}

impl RunSetup {
    pub fn new(graph: StreamGraph) -> RunSetup {
        RunSetup {
            graph,
            sources: HashMap::new(),
            sinks: HashMap::new(),
            templates: HashMap::new(),
            reactive: None,
            fallback_sink: None,
        }
    }

    pub fn bind_source(mut self, id: &str, source: Box<dyn FragmentSource>) -> Self {
        self.sources.insert(NodeId::from(id), source);
        self
    }

    pub fn bind_sink(mut self, id: &str, sink: Box<dyn FragmentSink>) -> Self {
        self.sinks.insert(NodeId::from(id), sink);
        self
    }

    pub fn with_template(mut self, id: &str, config: ModifierConfig) -> Self {
        self.templates.insert(NodeId::from(id), config);
        self
    }
}

/// Validates and runs a graph to completion in the configured mode.
pub fn run(setup: RunSetup, config: RunConfig) -> Result<RunOutcome, RuntimeError> {
    let report = crate::graph::validate(&setup.graph);
    if !report.is_empty() {
        return Err(RuntimeError::Invalid(report));
    }
    match config.mode {
        ExecutionMode::SingleTaskOracle => exec::oracle_run(setup, config),
        ExecutionMode::MultiTask => multitask::multitask_run(setup, config),
    }
}

/// Deterministic single-task reference run, regardless of `config.mode`.
pub fn oracle_run(setup: RunSetup, mut config: RunConfig) -> Result<RunOutcome, RuntimeError> {
    config.mode = ExecutionMode::SingleTaskOracle;
    run(setup, config)
}

/// Starts a cancellable multi-task run. With `gated` the workers hold until
/// [`RunHandle::release`] (or `cancel`) is called.
pub fn spawn(
    setup: RunSetup,
    mut config: RunConfig,
    gated: bool,
) -> Result<RunHandle, RuntimeError> {
    config.mode = ExecutionMode::MultiTask;
    let report = crate::graph::validate(&setup.graph);
    if !report.is_empty() {
        return Err(RuntimeError::Invalid(report));
    }
    Ok(multitask::spawn_run(setup, config, gated))
}
