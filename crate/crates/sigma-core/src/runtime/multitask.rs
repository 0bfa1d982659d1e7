//! Multi-task execution: one worker pool per sync region, bounded queues on
//! the async edges between them.
//!
//! Termination uses an in-flight message count plus a count of regions still
//! draining sources. A cross-region send increments in-flight before the
//! (possibly blocking) enqueue; the receiving worker decrements after fully
//! processing the message, so (sources done && in-flight == 0) proves the
//! whole graph is drained. The coordinator then performs the flush pass in
//! dependency order and shuts the workers down.

use std::sync::atomic::Ordering;
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Instant;

use crossbeam_channel::{bounded, Receiver, Sender, TryRecvError};

use crate::fragment::Fragment;
use crate::graph::{NodeId, ProcessorKind};

use super::exec::{
    build_node_state, compile, next_source, resolve_source, EdgeTransport, LocalExec,
    PeekedSource, Shared,
};
use super::{
    ExecutionMode, RunConfig, RunOutcome, RunReport, RunSetup, RuntimeError, SourceStats,
};

enum Msg {
    Frag { node: usize, frag: Fragment },
    Flush { node: usize },
    Shutdown,
}

struct Progress {
    state: Mutex<(i64, usize)>, // (in-flight messages, regions still sourcing)
    cv: Condvar,
}

impl Progress {
    fn new(sourcing_regions: usize) -> Progress {
        Progress {
            state: Mutex::new((0, sourcing_regions)),
            cv: Condvar::new(),
        }
    }

    fn inc_inflight(&self) {
        self.state.lock().expect("progress").0 += 1;
    }

    fn dec_inflight(&self) {
        let mut s = self.state.lock().expect("progress");
        s.0 -= 1;
        if s.0 == 0 {
            self.cv.notify_all();
        }
    }

    fn source_region_done(&self) {
        let mut s = self.state.lock().expect("progress");
        s.1 -= 1;
        self.cv.notify_all();
    }

    fn wait_idle(&self) {
        let mut s = self.state.lock().expect("progress");
        while !(s.0 == 0 && s.1 == 0) {
            s = self.cv.wait(s).expect("progress wait");
        }
    }

    fn wait_inflight_zero(&self) {
        let mut s = self.state.lock().expect("progress");
        while s.0 != 0 {
            s = self.cv.wait(s).expect("progress wait");
        }
    }
}

struct ChannelTransport {
    senders: Vec<Sender<Msg>>,
    progress: Arc<Progress>,
    shared: Arc<Shared>,
}

impl EdgeTransport for ChannelTransport {
    fn send_remote(&self, region: usize, target: usize, frag: Fragment) {
        self.progress.inc_inflight();
        // block-when-full backpressure; receivers outlive senders until
        // shutdown, so a send only fails after coordination ended
        if self.senders[region].send(Msg::Frag { node: target, frag }).is_err() {
            self.progress.dec_inflight();
            return;
        }
        let resident = self.shared.queue_resident.fetch_add(1, Ordering::Relaxed) + 1;
        self.shared.queue_peak.fetch_max(resident, Ordering::Relaxed);
    }
}

struct WorkerOutcome {
    exec: LocalExec<ChannelTransport>,
    sources: Vec<(NodeId, u64, u64)>, // id, read, rejected
    error: Option<RuntimeError>,
}

enum Handled {
    Continue,
    Stop,
}

fn handle_msg(
    exec: &mut LocalExec<ChannelTransport>,
    progress: &Progress,
    error: &mut Option<RuntimeError>,
    msg: Msg,
) -> Handled {
    match msg {
        Msg::Frag { node, frag } => {
            exec.shared.queue_resident.fetch_sub(1, Ordering::Relaxed);
            let result = exec.process(node, frag);
            progress.dec_inflight();
            if let Err(e) = result {
                error_store(error, e);
            }
            Handled::Continue
        }
        Msg::Flush { node } => {
            let result = exec.flush_node(node);
            progress.dec_inflight();
            if let Err(e) = result {
                error_store(error, e);
            }
            Handled::Continue
        }
        Msg::Shutdown => Handled::Stop,
    }
}

fn worker_loop(
    mut exec: LocalExec<ChannelTransport>,
    mut sources: Vec<PeekedSource>,
    rx: Receiver<Msg>,
    progress: Arc<Progress>,
) -> WorkerOutcome {
    let mut sources_done = sources.is_empty();
    let mut error: Option<RuntimeError> = None;

    loop {
        if !sources_done {
            match rx.try_recv() {
                Ok(msg) => {
                    if let Handled::Stop = handle_msg(&mut exec, &progress, &mut error, msg) {
                        break;
                    }
                    continue;
                }
                Err(TryRecvError::Empty) => {}
                Err(TryRecvError::Disconnected) => break,
            }
            if exec.shared.cancel.load(Ordering::Relaxed) || exec.shared.failure_limit_hit() {
                sources_done = true;
                progress.source_region_done();
                continue;
            }
            match next_source(&mut sources) {
                Ok(Some(i)) => {
                    let frag = sources[i].take().expect("peeked fragment");
                    let entry = sources[i].node_idx;
                    if let Err(e) = exec.process(entry, frag) {
                        error_store(&mut error, e);
                        sources_done = true;
                        progress.source_region_done();
                    }
                }
                Ok(None) => {
                    sources_done = true;
                    progress.source_region_done();
                }
                Err(e) => {
                    error_store(&mut error, e);
                    sources_done = true;
                    progress.source_region_done();
                }
            }
        } else {
            match rx.recv() {
                Ok(msg) => {
                    if let Handled::Stop = handle_msg(&mut exec, &progress, &mut error, msg) {
                        break;
                    }
                }
                Err(_) => break,
            }
        }
    }

    if let Err(e) = exec.finish_sinks() {
        error_store(&mut error, e);
    }
    let sources = sources
        .iter()
        .map(|s| (s.node_id.clone(), s.read, s.rejected()))
        .collect();
    WorkerOutcome {
        exec,
        sources,
        error,
    }
}

fn error_store(slot: &mut Option<RuntimeError>, e: RuntimeError) {
    if slot.is_none() {
        *slot = Some(e);
    }
}

/// Handle to an in-progress multi-task run.
pub struct RunHandle {
    cancel: Arc<std::sync::atomic::AtomicBool>,
    gate: Arc<(Mutex<bool>, Condvar)>,
    thread: Option<JoinHandle<Result<RunOutcome, RuntimeError>>>,
    finished: Option<Result<RunOutcome, RuntimeError>>,
}

impl RunHandle {
    /// Opens the start gate (no-op for ungated runs).
    pub fn release(&self) {
        let (lock, cv) = &*self.gate;
        *lock.lock().expect("gate") = true;
        cv.notify_all();
    }

    /// Stops consuming new source fragments; in-flight fragments drain.
    /// Returns the final report (a finished run returns it unchanged).
    pub fn cancel(&mut self) -> &Result<RunOutcome, RuntimeError> {
        self.cancel.store(true, Ordering::SeqCst);
        self.release();
        self.wait()
    }

    /// Blocks until the run completes.
    pub fn wait(&mut self) -> &Result<RunOutcome, RuntimeError> {
        if self.finished.is_none() {
            let result = self
                .thread
                .take()
                .expect("run joined once")
                .join()
                .unwrap_or_else(|p| {
                    Err(RuntimeError::WorkerPanic(format!("{p:?}")))
                });
            self.finished = Some(result);
        }
        self.finished.as_ref().expect("stored result")
    }

    /// Consumes the handle, yielding the outcome.
    pub fn join(mut self) -> Result<RunOutcome, RuntimeError> {
        self.wait();
        self.finished.take().expect("stored result")
    }
}

pub(crate) fn spawn_run(setup: RunSetup, config: RunConfig, gated: bool) -> RunHandle {
    let gate = Arc::new((Mutex::new(!gated), Condvar::new()));
    let cancel_flag = Arc::new(std::sync::atomic::AtomicBool::new(false));
    let gate_thread = gate.clone();
    let cancel_thread = cancel_flag.clone();
    let thread = std::thread::spawn(move || {
        {
            let (lock, cv) = &*gate_thread;
            let mut open = lock.lock().expect("gate");
            while !*open {
                open = cv.wait(open).expect("gate wait");
            }
        }
        coordinate(setup, config, cancel_thread)
    });
    RunHandle {
        cancel: cancel_flag,
        gate,
        thread: Some(thread),
        finished: None,
    }
}

pub(crate) fn multitask_run(setup: RunSetup, config: RunConfig) -> Result<RunOutcome, RuntimeError> {
    let cancel = Arc::new(std::sync::atomic::AtomicBool::new(false));
    coordinate(setup, config, cancel)
}

fn coordinate(
    mut setup: RunSetup,
    config: RunConfig,
    cancel: Arc<std::sync::atomic::AtomicBool>,
) -> Result<RunOutcome, RuntimeError> {
    let started = Instant::now();
    let topo = compile(&setup.graph);
    let shared = Arc::new(Shared::new(&setup, config.clone(), topo.nodes.len()));
    let region_of = Arc::new(topo.region_of.clone());

    // group nodes by region
    let mut region_nodes: Vec<Vec<usize>> = vec![Vec::new(); topo.region_count];
    for (idx, &region) in topo.region_of.iter().enumerate() {
        region_nodes[region].push(idx);
    }

    // per-region channel capacity: sum of inbound async edge capacities
    let mut region_capacity = vec![0usize; topo.region_count];
    for node in &topo.nodes {
        for edge in &node.out {
            if let crate::graph::SyncMode::Async { queue_capacity } = edge.mode {
                let target_region = topo.region_of[edge.target];
                region_capacity[target_region] += queue_capacity;
            }
        }
    }

    let mut senders = Vec::with_capacity(topo.region_count);
    let mut receivers = Vec::with_capacity(topo.region_count);
    for cap in &region_capacity {
        let (tx, rx) = bounded((*cap).max(4));
        senders.push(tx);
        receivers.push(rx);
    }

    // pool sizing: >1 only when every node in the region is a stateless
    // handler/connector that is neither endpoint nor special-dispatch
    let pool_sizes: Vec<usize> = region_nodes
        .iter()
        .map(|nodes| {
            if config.pool_size <= 1 {
                return 1;
            }
            let eligible = nodes.iter().all(|&idx| {
                let node = &topo.nodes[idx];
                let plain_kind = matches!(
                    node.kind,
                    ProcessorKind::Handler | ProcessorKind::Connector | ProcessorKind::Agent
                );
                let plain_behavior = !matches!(
                    node.behavior.as_str(),
                    "split_key" | "split_roundrobin" | "feedback_gate" | "resequence"
                );
                let stateless_probe = crate::catalog::build_behavior(
                    &node.behavior,
                    &node.params,
                    [0u8; 32],
                )
                .map(|b| b.stateless())
                .unwrap_or(false);
                plain_kind
                    && plain_behavior
                    && stateless_probe
                    && !node.is_source
                    && !node.is_sink
            });
            if eligible {
                config.pool_size
            } else {
                1
            }
        })
        .collect();

    let sourcing_regions = {
        let mut regions_with_sources = std::collections::HashSet::new();
        for (idx, node) in topo.nodes.iter().enumerate() {
            if node.is_source {
                regions_with_sources.insert(topo.region_of[idx]);
            }
        }
        regions_with_sources.len()
    };
    let progress = Arc::new(Progress::new(sourcing_regions));
    shared
        .cancel
        .store(cancel.load(Ordering::SeqCst), Ordering::SeqCst);

    // build worker states and spawn
    let mut templates = std::mem::take(&mut setup.templates);
    let mut handles: Vec<JoinHandle<WorkerOutcome>> = Vec::new();
    for region in 0..topo.region_count {
        let workers = pool_sizes[region];
        for worker_idx in 0..workers {
            let mut exec = LocalExec::new(
                shared.clone(),
                region_of.clone(),
                region,
                ChannelTransport {
                    senders: senders.clone(),
                    progress: progress.clone(),
                    shared: shared.clone(),
                },
            );
            let mut sources = Vec::new();
            for &idx in &region_nodes[region] {
                let state = build_node_state(
                    &topo,
                    &setup.graph,
                    idx,
                    &mut setup.sinks,
                    &mut templates,
                    &shared,
                )?;
                exec.nodes.insert(idx, state);
                let node = &topo.nodes[idx];
                if node.is_source && worker_idx == 0 {
                    let src = resolve_source(&node.id, &node.params, &mut setup.sources)?;
                    sources.push(PeekedSource::new(idx, node.id.clone(), idx, src));
                }
            }
            // in pools > 1, templates/sinks for the same node were consumed
            // by worker 0; pool eligibility guarantees none are needed here
            let rx = receivers[region].clone();
            let progress = progress.clone();
            let handle = std::thread::Builder::new()
                .name(format!("sigma-r{region}w{worker_idx}"))
                .spawn(move || worker_loop(exec, sources, rx, progress))
                .expect("spawn worker");
            handles.push(handle);
        }
    }
    drop(receivers);

    // propagate external cancellation while waiting
    let watcher = {
        let shared = shared.clone();
        let cancel = cancel.clone();
        let progress = progress.clone();
        std::thread::spawn(move || loop {
            if cancel.load(Ordering::SeqCst) {
                shared.cancel.store(true, Ordering::SeqCst);
                progress.cv.notify_all();
                break;
            }
            {
                let s = progress.state.lock().expect("progress");
                if s.0 == 0 && s.1 == 0 {
                    break;
                }
            }
            std::thread::sleep(std::time::Duration::from_millis(1));
        })
    };

    progress.wait_idle();
    watcher.join().ok();

    // end-of-input flush in dependency order
    for &idx in &topo.topo_order {
        let region = topo.region_of[idx];
        progress.inc_inflight();
        if senders[region].send(Msg::Flush { node: idx }).is_err() {
            progress.dec_inflight();
        }
        progress.wait_inflight_zero();
    }

    // shutdown: one token per worker
    for region in 0..topo.region_count {
        for _ in 0..pool_sizes[region] {
            let _ = senders[region].send(Msg::Shutdown);
        }
    }

    let mut first_error: Option<RuntimeError> = None;
    let mut plastic = std::collections::BTreeMap::new();
    let mut sinks = std::collections::BTreeMap::new();
    let mut source_stats: std::collections::BTreeMap<String, SourceStats> =
        std::collections::BTreeMap::new();
    for handle in handles {
        match handle.join() {
            Ok(outcome) => {
                if let Some(e) = outcome.error {
                    error_store(&mut first_error, e);
                }
                plastic.extend(outcome.exec.plastic_summaries());
                sinks.extend(outcome.exec.sink_written());
                for (id, read, rejected) in outcome.sources {
                    source_stats
                        .insert(id.as_str().to_string(), SourceStats { read, rejected });
                }
            }
            Err(p) => error_store(
                &mut first_error,
                RuntimeError::WorkerPanic(format!("{p:?}")),
            ),
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }

    let reactive = shared
        .reactive
        .as_ref()
        .map(|engine| engine.lock().expect("reactive engine").snapshot())
        .unwrap_or_default();
    let report = RunReport {
        seed: shared.config.seed,
        mode: ExecutionMode::MultiTask,
        cancelled: shared.cancel.load(Ordering::SeqCst),
        nodes: {
            // counters snapshot lives in Shared
            let mut map = std::collections::BTreeMap::new();
            for (id, counts) in shared_counters_snapshot(&shared) {
                map.insert(id, counts);
            }
            map
        },
        sources: source_stats,
        sinks,
        wall: started.elapsed(),
        queue_peak: shared.queue_peak.load(Ordering::Relaxed),
        queue_capacity: topo.async_capacity_total,
        fuel_exhausted: shared.fuel_exhausted.load(Ordering::Relaxed),
        errors: shared.errors.lock().expect("errors").clone(),
        config_version: None,
        input_contributions: Vec::new(),
        output_contributions: Vec::new(),
    };
    Ok(RunOutcome {
        report,
        plastic,
        reactive,
    })
}

fn shared_counters_snapshot(
    shared: &Shared,
) -> std::collections::BTreeMap<String, super::NodeCounts> {
    shared.counters_snapshot()
}
