//! The discrete-event simulation environment.
//!
//! Agents are cooperative processes coordinated by activate, cancel, and
//! yield signals over a shared context of named, capacity-bounded
//! resources. The scheduler pops events in (virtual time, insertion
//! sequence) order — ties resolve FIFO — activates the agent, and handles
//! whatever signal the agent returns: yields schedule the next wake and
//! de-schedule the agent, cancel releases everything it holds and removes
//! it. Scheduling is non-preemptive: exactly one agent runs at a time.
//!
//! Every stochastic draw comes from a per-agent stream derived from the
//! environment seed, so a fixed seed makes the whole run a deterministic
//! special case, and adding an agent never perturbs the draws of others.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::digest::derive_seed;
use crate::fragment::Fragment;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DesError {
    #[error("environment has no agents")]
    NoAgents,
    #[error("horizon must be positive, got {0}")]
    BadHorizon(i64),
    #[error("unknown resource `{0}`")]
    UnknownResource(String),
    #[error("agent `{0}` released `{1}` without holding it")]
    ReleaseWithoutHold(String, String),
}

/// What an agent tells the scheduler when it yields control.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentSignal {
    /// Sleep for a virtual duration, then wake.
    YieldFor(i64),
    /// Sleep until an absolute virtual time (clamped to now).
    YieldUntil(i64),
    /// Request a unit of a named resource; waits FIFO when the resource is
    /// at capacity, wakes when granted.
    Acquire(String),
    /// Release a held unit and continue at the current time.
    Release(String),
    /// Release everything and leave the simulation.
    Cancel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentStatus {
    Eligible,
    Running,
    Waiting,
    Cancelled,
}

/// Handle passed to an agent while it runs: virtual now, its seeded random
/// stream, and an emission buffer bridging into stream graphs.
pub struct AgentContext<'e> {
    pub now: i64,
    pub rng: &'e mut ChaCha12Rng,
    emitted: &'e mut Vec<Fragment>,
}

impl AgentContext<'_> {
    /// Queues a fragment for delivery to whatever the environment's emission
    /// hook routes it to (a stream graph source, a trace, a sink).
    pub fn emit(&mut self, frag: Fragment) {
        self.emitted.push(frag);
    }
}

/// A cooperative agent process. Each activation runs the agent until it
/// returns a signal; state lives inside the implementor.
pub trait AgentProcess: Send {
    fn resume(&mut self, ctx: &mut AgentContext<'_>) -> AgentSignal;
}

/// Blanket for closures: `FnMut(&mut AgentContext) -> AgentSignal`.
impl<F> AgentProcess for F
where
    F: FnMut(&mut AgentContext<'_>) -> AgentSignal + Send,
{
    fn resume(&mut self, ctx: &mut AgentContext<'_>) -> AgentSignal {
        self(ctx)
    }
}

pub type AgentId = usize;

struct AgentSlot {
    name: String,
    process: Box<dyn AgentProcess>,
    status: AgentStatus,
    rng: ChaCha12Rng,
    held: Vec<String>,
}

struct Resource {
    capacity: usize,
    occupancy: usize,
    waiters: VecDeque<AgentId>,
    grants: u64,
    releases: u64,
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct QueuedEvent {
    time: i64,
    seq: u64,
    agent: AgentId,
}

/// One record of the simulation trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: i64,
    pub agent: String,
    pub signal: String,
    pub detail: String,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t={} agent={} signal={} detail={}",
            self.time,
            crate::value::quote(&self.agent),
            self.signal,
            crate::value::quote(&self.detail),
        )
    }
}

/// The environment: event queue, agent registry, shared resources, seed.
pub struct DesEnvironment {
    seed: u64,
    agents: Vec<AgentSlot>,
    resources: BTreeMap<String, Resource>,
    queue: BinaryHeap<Reverse<QueuedEvent>>,
    insert_seq: u64,
    now: i64,
    trace: Vec<TraceRecord>,
}

impl DesEnvironment {
    pub fn new(seed: u64) -> DesEnvironment {
        DesEnvironment {
            seed,
            agents: Vec::new(),
            resources: BTreeMap::new(),
            queue: BinaryHeap::new(),
            insert_seq: 0,
            now: 0,
            trace: Vec::new(),
        }
    }

    /// Registers a named capacity-bounded resource in the shared context.
    pub fn add_resource(&mut self, name: &str, capacity: usize) {
        self.resources.insert(
            name.to_string(),
            Resource {
                capacity,
                occupancy: 0,
                waiters: VecDeque::new(),
                grants: 0,
                releases: 0,
            },
        );
    }

    /// Registers an agent; initial activation is scheduled at time 0 in
    /// registration order.
    pub fn add_agent(&mut self, name: &str, process: Box<dyn AgentProcess>) -> AgentId {
        let id = self.agents.len();
        let rng = ChaCha12Rng::from_seed(derive_seed(self.seed, &format!("agent:{name}")));
        self.agents.push(AgentSlot {
            name: name.to_string(),
            process,
            status: AgentStatus::Eligible,
            rng,
            held: Vec::new(),
        });
        self.schedule(0, id);
        id
    }

    pub fn now(&self) -> i64 {
        self.now
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn trace_text(&self) -> String {
        let mut out = String::new();
        for r in &self.trace {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    pub fn agent_status(&self, id: AgentId) -> AgentStatus {
        self.agents[id].status
    }

    /// Current occupancy of a resource.
    pub fn occupancy(&self, name: &str) -> Option<usize> {
        self.resources.get(name).map(|r| r.occupancy)
    }

    fn schedule(&mut self, time: i64, agent: AgentId) {
        self.queue.push(Reverse(QueuedEvent {
            time,
            seq: self.insert_seq,
            agent,
        }));
        self.insert_seq += 1;
    }

    fn record(&mut self, agent: AgentId, signal: &str, detail: String) {
        self.trace.push(TraceRecord {
            time: self.now,
            agent: self.agents[agent].name.clone(),
            signal: signal.to_string(),
            detail,
        });
    }

    /// Runs the scheduler loop until the queue drains or the next event
    /// would pass the horizon. `on_emit` receives every fragment agents
    /// emitted during an activation, in order.
    pub fn run<F>(&mut self, horizon: i64, mut on_emit: F) -> Result<(), DesError>
    where
        F: FnMut(&mut DesEnvironment, AgentId, Fragment) -> Result<(), DesError>,
    {
        if self.agents.is_empty() {
            return Err(DesError::NoAgents);
        }
        if horizon <= 0 {
            return Err(DesError::BadHorizon(horizon));
        }
        while let Some(Reverse(ev)) = self.queue.peek() {
            if ev.time > horizon {
                break;
            }
            let Reverse(ev) = self.queue.pop().expect("peeked event");
            debug_assert!(ev.time >= self.now, "event queue is time-ordered");
            self.now = ev.time;
            let id = ev.agent;
            if self.agents[id].status == AgentStatus::Cancelled {
                continue;
            }
            self.agents[id].status = AgentStatus::Running;
            self.record(id, "activate", String::new());

            let mut emitted = Vec::new();
            let signal = {
                let slot = &mut self.agents[id];
                let mut ctx = AgentContext {
                    now: ev.time,
                    rng: &mut slot.rng,
                    emitted: &mut emitted,
                };
                slot.process.resume(&mut ctx)
            };
            for frag in emitted {
                on_emit(self, id, frag)?;
            }
            self.handle_signal(id, signal)?;
        }
        Ok(())
    }

    fn handle_signal(&mut self, id: AgentId, signal: AgentSignal) -> Result<(), DesError> {
        match signal {
            AgentSignal::YieldFor(d) => {
                self.record(id, "yield_for", d.to_string());
                let wake = self.now.saturating_add(d.max(0));
                self.agents[id].status = AgentStatus::Waiting;
                self.schedule(wake, id);
            }
            AgentSignal::YieldUntil(t) => {
                self.record(id, "yield_until", t.to_string());
                self.agents[id].status = AgentStatus::Waiting;
                self.schedule(t.max(self.now), id);
            }
            AgentSignal::Acquire(name) => {
                self.record(id, "acquire", name.clone());
                let resource = self
                    .resources
                    .get_mut(&name)
                    .ok_or_else(|| DesError::UnknownResource(name.clone()))?;
                if resource.occupancy < resource.capacity {
                    resource.occupancy += 1;
                    resource.grants += 1;
                    self.agents[id].held.push(name.clone());
                    self.record(id, "grant", name);
                    self.agents[id].status = AgentStatus::Eligible;
                    self.schedule(self.now, id);
                } else {
                    resource.waiters.push_back(id);
                    self.record(id, "wait", name);
                    self.agents[id].status = AgentStatus::Waiting;
                }
            }
            AgentSignal::Release(name) => {
                self.release_one(id, &name, true)?;
                self.agents[id].status = AgentStatus::Eligible;
                self.schedule(self.now, id);
            }
            AgentSignal::Cancel => {
                self.record(id, "cancel", String::new());
                let held = std::mem::take(&mut self.agents[id].held);
                for name in held {
                    self.release_held(id, &name)?;
                }
                self.agents[id].status = AgentStatus::Cancelled;
            }
        }
        Ok(())
    }

    fn release_one(&mut self, id: AgentId, name: &str, record: bool) -> Result<(), DesError> {
        let pos = self.agents[id]
            .held
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| {
                DesError::ReleaseWithoutHold(self.agents[id].name.clone(), name.to_string())
            })?;
        self.agents[id].held.remove(pos);
        if record {
            self.record(id, "release", name.to_string());
        }
        self.release_held(id, name)
    }

    /// Lowers occupancy and grants the next FIFO waiter, if any.
    fn release_held(&mut self, _id: AgentId, name: &str) -> Result<(), DesError> {
        let resource = self
            .resources
            .get_mut(name)
            .ok_or_else(|| DesError::UnknownResource(name.to_string()))?;
        resource.occupancy -= 1;
        resource.releases += 1;
        if let Some(waiter) = resource.waiters.pop_front() {
            resource.occupancy += 1;
            resource.grants += 1;
            self.agents[waiter].held.push(name.to_string());
            self.record(waiter, "grant", name.to_string());
            self.agents[waiter].status = AgentStatus::Eligible;
            self.schedule(self.now, waiter);
        }
        Ok(())
    }
}

/// Convenience driver when no emission routing is needed.
pub fn des_run(env: &mut DesEnvironment, horizon: i64) -> Result<Vec<TraceRecord>, DesError> {
    env.run(horizon, |_, _, _| Ok(()))?;
    Ok(env.trace().to_vec())
}

/// A periodic ticker agent: emits one fragment per activation, yielding for
/// `period` between them; cancels after `count` emissions (0 = forever).
pub struct Ticker {
    pub period: i64,
    pub count: u64,
    emitted: u64,
    template: Fragment,
}

impl Ticker {
    pub fn new(period: i64, count: u64, template: Fragment) -> Ticker {
        Ticker {
            period,
            count,
            emitted: 0,
            template,
        }
    }
}

impl AgentProcess for Ticker {
    fn resume(&mut self, ctx: &mut AgentContext<'_>) -> AgentSignal {
        if self.count != 0 && self.emitted >= self.count {
            return AgentSignal::Cancel;
        }
        let mut frag = self.template.clone();
        frag.source_seq = self.emitted;
        frag.event_time = ctx.now;
        ctx.emit(frag);
        self.emitted += 1;
        AgentSignal::YieldFor(self.period)
    }
}
