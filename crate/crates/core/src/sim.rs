//! Discrete-event engine.
//!
//! Events are processed strictly in `(time, seq)` order, `seq` being assigned when an event
//! is scheduled. A node cycles through compute, commit and admission:
//!
//! * `StepComplete` commits the node's update to the server, bumps its counter and
//!   schedules an `AdmissionCheck` at the same instant.
//! * `AdmissionCheck` asks the barrier policy. If admitted, the node syncs its model and
//!   schedules its next `StepComplete`. Otherwise, under centralised state, it waits until
//!   the counters it depends on catch up (or their owners leave) and then gets a `Wakeup`;
//!   under distributed state it retries the check after a backoff. A held sample under
//!   centralised state keeps the peers drawn at refusal; a retry draws a fresh one.
//! * `Join` and `Leave` change membership.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal};

use crate::barrier::{self, Admission, ViewSource};
use crate::config::{Family, SimConfig, StatePlacement, WorkloadKind};
use crate::error::{Error, Result};
use crate::model::{read_my_writes_view, ModelState, NodeId, NodeState, Update};
use crate::rng::{self, SimRng, Stream};
use crate::trace::{EventKind, EventRecord, NodeFinal, RunChecks, RunTrace, StalenessAudit};
use crate::workload::{
    self, merge_summaries, sgd_gradient_step, AggregationTask, Dataset, LinearTask, LocalData, SummaryStat,
};

/// Runs one experiment to completion.
pub fn run(config: &SimConfig) -> Result<RunTrace> {
    config.validate()?;
    Engine::new(config)?.run()
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
    pub node: NodeId,
}

impl Eq for Event {}

impl Ord for Event {
    // Reversed so that `BinaryHeap` pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Debug)]
enum Sampler {
    Constant(f64),
    LogNormal(LogNormal<f64>),
    Exp(Exp<f64>),
}

impl Sampler {
    fn new(family: Family, mean: f64, dispersion: f64, field: &str) -> Result<Self> {
        let bad = |e: String| Error::config(field, e);
        Ok(match family {
            Family::Constant => Sampler::Constant(mean),
            Family::Lognormal => Sampler::LogNormal(
                LogNormal::new(mean.ln() - dispersion * dispersion / 2.0, dispersion)
                    .map_err(|e| bad(e.to_string()))?,
            ),
            Family::Exponential => Sampler::Exp(Exp::new(1.0 / mean).map_err(|e| bad(e.to_string()))?),
        })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Constant(v) => *v,
            Sampler::LogNormal(d) => d.sample(rng),
            Sampler::Exp(d) => d.sample(rng),
        }
    }
}

/// Node states and the live-counter multiset: what admission checks read.
struct Population {
    states: Vec<NodeState>,
    live: Vec<NodeId>,
    counts: BTreeMap<u64, usize>,
}

impl Population {
    fn add(&mut self, state: NodeState) {
        debug_assert_eq!(state.id.index(), self.states.len());
        *self.counts.entry(state.counter).or_default() += 1;
        // ids are handed out in increasing order, so `live` stays sorted
        self.live.push(state.id);
        self.states.push(state);
    }

    fn uncount(&mut self, counter: u64) {
        let n = self.counts.get_mut(&counter).expect("counter is tracked");
        *n -= 1;
        if *n == 0 {
            self.counts.remove(&counter);
        }
    }

    fn commit(&mut self, id: NodeId, server_version: u64) {
        let old = self.states[id.index()].counter;
        self.uncount(old);
        self.states[id.index()].record_commit(server_version);
        *self.counts.entry(old + 1).or_default() += 1;
    }

    fn remove(&mut self, id: NodeId) {
        let state = &mut self.states[id.index()];
        state.live = false;
        let counter = state.counter;
        self.uncount(counter);
        let pos = self.live.binary_search(&id).expect("node is live");
        self.live.remove(pos);
    }

    fn is_live(&self, id: NodeId) -> bool {
        self.states.get(id.index()).is_some_and(|s| s.live)
    }

    fn counter(&self, id: NodeId) -> u64 {
        self.states[id.index()].counter
    }

    fn min(&self) -> Option<u64> {
        self.counts.keys().next().copied()
    }

    fn spread(&self) -> u64 {
        match (self.counts.keys().next(), self.counts.keys().next_back()) {
            (Some(lo), Some(hi)) => hi - lo,
            _ => 0,
        }
    }
}

impl ViewSource for Population {
    fn live_nodes(&self) -> &[NodeId] {
        &self.live
    }

    fn counter_of(&self, node: NodeId) -> Option<u64> {
        self.states
            .get(node.index())
            .filter(|s| s.live)
            .map(|s| s.counter)
    }

    fn global_min(&self) -> Option<u64> {
        self.min()
    }
}

/// What a blocked node is waiting for.
#[derive(Clone, Debug)]
enum Wait {
    /// Every live node at or above `required`.
    Global { required: u64 },
    /// Every live node of `sample` at or above `required`; `outstanding` still short.
    Peers {
        required: u64,
        sample: Vec<NodeId>,
        outstanding: usize,
    },
}

#[derive(Clone, Debug)]
enum Phase {
    Computing,
    Blocked { since: f64, episode: u64, wait: Wait },
    /// Released, `Wakeup` pending.
    Waking { since: f64, wait: Wait },
    /// Refused under distributed placement, retry pending.
    Retrying { since: f64 },
    Dead,
}

struct NodeRuntime {
    phase: Phase,
    straggler: bool,
    blocked_time: f64,
    episode: u64,
    last_complete: f64,
    step_rng: SimRng,
    sample_rng: SimRng,
    work_rng: SimRng,
    data: Option<LocalData>,
}

enum Work {
    Sgd { task: LinearTask, eval: Dataset },
    Aggregation { task: AggregationTask, pooled: SummaryStat },
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    placement: StatePlacement,
    beta: usize,
    lag_bound: Option<u64>,
    now: f64,
    seq: u64,
    queue: BinaryHeap<Event>,
    pop: Population,
    nodes: Vec<NodeRuntime>,
    server: ModelState,
    work: Work,
    step_time: Sampler,
    speed: Sampler,
    leave: Option<Exp<f64>>,
    join: Option<(Exp<f64>, SimRng)>,
    cache_budget: usize,
    cache_used: usize,
    blocked_global: BTreeMap<u64, BTreeSet<NodeId>>,
    /// Peer -> (waiting node, block episode) for sampled waits.
    peer_waiters: HashMap<NodeId, Vec<(NodeId, u64)>>,
    next_loss: u64,
    trace: RunTrace,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self> {
        let (work, dim) = match cfg.workload {
            WorkloadKind::Sgd => {
                let task = LinearTask::new(cfg.model_dim, cfg.sgd.clone(), cfg.master_seed);
                let eval = task.eval_dataset();
                (Work::Sgd { task, eval }, cfg.model_dim)
            }
            WorkloadKind::Aggregation => (
                Work::Aggregation {
                    task: AggregationTask::new(cfg.aggregation.clone(), cfg.master_seed),
                    pooled: SummaryStat::default(),
                },
                AggregationTask::MODEL_DIM,
            ),
        };
        let step_time = Sampler::new(
            cfg.step_time.family,
            cfg.step_time.mean,
            cfg.step_time.dispersion,
            "step_time",
        )?;
        let speed = Sampler::new(cfg.heterogeneity.family, 1.0, cfg.heterogeneity.dispersion, "heterogeneity")?;
        let rate = |r: f64, field: &str| -> Result<Option<Exp<f64>>> {
            if r > 0.0 {
                Exp::new(r).map(Some).map_err(|e| Error::config(field, e.to_string()))
            } else {
                Ok(None)
            }
        };
        let leave = rate(cfg.churn.leave_rate, "churn.leave_rate")?;
        let join = rate(cfg.churn.join_rate * cfg.num_nodes as f64, "churn.join_rate")?
            .map(|d| (d, rng::stream(cfg.master_seed, Stream::Join, 0)));
        let lag_bound = cfg.policy.lag_bound();
        Ok(Engine {
            cfg,
            placement: cfg.resolved_placement(),
            beta: cfg.effective_sample_size(),
            lag_bound,
            now: 0.0,
            seq: 0,
            queue: BinaryHeap::new(),
            pop: Population {
                states: Vec::with_capacity(cfg.num_nodes),
                live: Vec::with_capacity(cfg.num_nodes),
                counts: BTreeMap::new(),
            },
            nodes: Vec::with_capacity(cfg.num_nodes),
            server: ModelState::zeros(dim),
            work,
            step_time,
            speed,
            leave,
            join,
            cache_budget: cfg.sgd.cache_limit_mb << 20,
            cache_used: 0,
            blocked_global: BTreeMap::new(),
            peer_waiters: HashMap::new(),
            next_loss: 0,
            trace: RunTrace {
                config_fingerprint: cfg.fingerprint(),
                master_seed: cfg.master_seed,
                per_node_final: Vec::new(),
                events: cfg.keep_events.then(Vec::new),
                staleness_audits: Vec::new(),
                loss_curve: Vec::new(),
                membership_curve: Vec::new(),
                checks: RunChecks::default(),
                terminated_early: false,
                end_time: cfg.duration,
                total_commits: 0,
                final_model: ModelState::zeros(dim),
                aggregate: None,
            },
        })
    }

    fn schedule(&mut self, time: f64, kind: EventKind, node: NodeId) {
        self.queue.push(Event {
            time,
            seq: self.seq,
            kind,
            node,
        });
        self.seq += 1;
    }

    fn log(&mut self, ev: &Event, admitted: Option<bool>) {
        let counter = self.pop.counter(ev.node);
        if let Some(events) = &mut self.trace.events {
            events.push(EventRecord {
                time: ev.time,
                seq: ev.seq,
                kind: ev.kind,
                node: ev.node,
                counter,
                admitted,
            });
        }
    }

    fn spawn(&mut self, counter: u64) -> NodeId {
        let id = NodeId(self.pop.states.len() as u32);
        let seed = self.cfg.master_seed;
        let index = u64::from(id.0);
        let mut het = rng::stream(seed, Stream::Heterogeneity, index);
        let speed_factor = self.speed.sample(&mut het);
        let straggler = het.gen::<f64>() < self.cfg.straggler.fraction;
        let data = match &self.work {
            Work::Sgd { task, .. } => {
                let bytes = task.footprint_bytes(1);
                let keep = self.cache_used + bytes <= self.cache_budget;
                if keep {
                    self.cache_used += bytes;
                }
                Some(LocalData::for_node(task, id, keep))
            }
            Work::Aggregation { .. } => None,
        };
        let mut state = NodeState::new(id, counter, self.server.clone(), speed_factor);
        state.local_model = read_my_writes_view(&state, &self.server).expect("new node is live");
        self.pop.add(state);
        self.nodes.push(NodeRuntime {
            phase: Phase::Computing,
            straggler,
            blocked_time: 0.0,
            episode: 0,
            last_complete: f64::NEG_INFINITY,
            step_rng: rng::stream(seed, Stream::StepTime, index),
            sample_rng: rng::stream(seed, Stream::Sampling, index),
            work_rng: rng::stream(seed, Stream::Minibatch, index),
            data,
        });
        if let Some(leave) = self.leave {
            let mut r = rng::stream(seed, Stream::Leave, index);
            let at = self.now + leave.sample(&mut r);
            self.schedule(at, EventKind::Leave, id);
        }
        let at = self.now + self.step_duration(id);
        self.schedule(at, EventKind::StepComplete, id);
        id
    }

    fn step_duration(&mut self, id: NodeId) -> f64 {
        let speed = self.pop.states[id.index()].speed_factor;
        let rt = &mut self.nodes[id.index()];
        let slow = if rt.straggler { self.cfg.straggler.slowdown } else { 1.0 };
        self.step_time.sample(&mut rt.step_rng) * speed * slow
    }

    fn run(mut self) -> Result<RunTrace> {
        // Sizing the cache for the initial population as a whole keeps it all-or-nothing.
        if let Work::Sgd { task, .. } = &self.work {
            if task.footprint_bytes(self.cfg.num_nodes) > self.cache_budget {
                self.cache_budget = 0;
            }
        }
        for _ in 0..self.cfg.num_nodes {
            self.spawn(0);
        }
        self.trace.membership_curve.push((0.0, self.pop.live.len()));
        self.trace.checks.max_counter_spread = self.pop.spread();
        if let Some((d, r)) = &mut self.join {
            let at = d.sample(r);
            self.schedule(at, EventKind::Join, NodeId(u32::MAX));
        }

        while let Some(ev) = self.queue.pop() {
            if ev.time >= self.cfg.duration {
                break;
            }
            self.sample_loss(ev.time, false)?;
            self.now = ev.time;
            match ev.kind {
                EventKind::StepComplete => self.on_step_complete(ev)?,
                EventKind::AdmissionCheck => self.on_admission_check(ev)?,
                EventKind::Wakeup => self.on_wakeup(ev)?,
                EventKind::Leave => self.on_leave(ev)?,
                EventKind::Join => self.on_join(ev),
            }
            if self.trace.terminated_early {
                self.trace.end_time = self.now;
                break;
            }
        }
        let end = self.trace.end_time;
        self.sample_loss(end, true)?;
        self.trace.checks.liveness_violations += self.liveness_violations();
        Ok(self.finish(end))
    }

    /// Records loss samples due before `t` (through `t` when `inclusive`).
    fn sample_loss(&mut self, t: f64, inclusive: bool) -> Result<()> {
        loop {
            let at = self.next_loss as f64 * self.cfg.loss_interval;
            if at > t || (!inclusive && at == t) || at > self.cfg.duration {
                return Ok(());
            }
            let value = match &self.work {
                Work::Sgd { eval, .. } => workload::loss(&self.server, eval)?,
                Work::Aggregation { task, pooled } => task.loss(pooled),
            };
            self.trace.loss_curve.push((at, value));
            self.next_loss += 1;
        }
    }

    fn on_step_complete(&mut self, ev: Event) -> Result<()> {
        let id = ev.node;
        if !self.pop.is_live(id) {
            return Ok(());
        }
        let i = id.index();
        debug_assert!(matches!(self.nodes[i].phase, Phase::Computing));
        let step = self.pop.states[i].counter;
        let update: Update = match &mut self.work {
            Work::Sgd { task, .. } => {
                let rt = &mut self.nodes[i];
                let data = rt.data.as_ref().expect("sgd nodes carry data");
                sgd_gradient_step(&self.pop.states[i].local_model, task, data, id, step, &mut rt.work_rng)?
            }
            Work::Aggregation { task, pooled } => {
                let (u, s) = task.step(id, step, &mut self.nodes[i].work_rng)?;
                *pooled = merge_summaries(*pooled, s);
                u
            }
        };
        self.server.apply(&update)?;
        self.pop.commit(id, self.server.version());
        self.trace.total_commits += 1;
        let rt = &mut self.nodes[i];
        if ev.time <= rt.last_complete {
            self.trace.checks.causality_violations += 1;
        }
        rt.last_complete = ev.time;
        self.track_spread();
        self.log(&ev, None);

        let mut released = self.release_global();
        released.extend(self.release_peers_of(id, false));
        self.wake(released);
        self.schedule(self.now, EventKind::AdmissionCheck, id);
        Ok(())
    }

    fn on_admission_check(&mut self, ev: Event) -> Result<()> {
        let id = ev.node;
        if !self.pop.is_live(id) {
            return Ok(());
        }
        let i = id.index();
        let counter = self.pop.counter(id);
        let decision = barrier::evaluate(
            &self.cfg.policy,
            id,
            counter,
            self.beta,
            &self.pop,
            &mut self.nodes[i].sample_rng,
        )?;
        self.log(&ev, Some(decision.admitted()));
        match decision {
            Admission::Admit { lag } => {
                if let Phase::Retrying { since } = self.nodes[i].phase {
                    self.nodes[i].blocked_time += self.now - since;
                }
                self.audit(id, lag);
                self.start_step(id)?;
            }
            Admission::WaitGlobal { .. } | Admission::WaitPeers { .. }
                if self.placement == StatePlacement::Distributed =>
            {
                let since = match self.nodes[i].phase {
                    Phase::Retrying { since } => since,
                    _ => self.now,
                };
                self.nodes[i].phase = Phase::Retrying { since };
                self.schedule(self.now + self.cfg.retry_backoff(), EventKind::AdmissionCheck, id);
            }
            Admission::WaitGlobal { required } => {
                self.blocked_global.entry(required).or_default().insert(id);
                self.block(id, Wait::Global { required });
            }
            Admission::WaitPeers {
                required,
                sample,
                behind,
            } => {
                let episode = self.nodes[i].episode + 1;
                for &peer in &behind {
                    self.peer_waiters.entry(peer).or_default().push((id, episode));
                }
                self.block(
                    id,
                    Wait::Peers {
                        required,
                        sample,
                        outstanding: behind.len(),
                    },
                );
            }
        }
        Ok(())
    }

    fn block(&mut self, id: NodeId, wait: Wait) {
        let rt = &mut self.nodes[id.index()];
        rt.episode += 1;
        rt.phase = Phase::Blocked {
            since: self.now,
            episode: rt.episode,
            wait,
        };
    }

    fn on_wakeup(&mut self, ev: Event) -> Result<()> {
        let id = ev.node;
        if !self.pop.is_live(id) {
            return Ok(());
        }
        let i = id.index();
        let Phase::Waking { since, wait } = std::mem::replace(&mut self.nodes[i].phase, Phase::Computing) else {
            unreachable!("wakeup for a node that was not released");
        };
        self.nodes[i].blocked_time += self.now - since;
        let counter = self.pop.counter(id);
        let min = match &wait {
            Wait::Global { .. } => self.pop.min(),
            Wait::Peers { sample, .. } => sample.iter().filter_map(|&p| self.pop.counter_of(p)).min(),
        };
        self.log(&ev, Some(true));
        self.audit(id, min.map(|m| counter.saturating_sub(m)));
        self.start_step(id)
    }

    fn on_leave(&mut self, ev: Event) -> Result<()> {
        let id = ev.node;
        if !self.pop.is_live(id) {
            return Ok(());
        }
        self.log(&ev, None);
        let i = id.index();
        match std::mem::replace(&mut self.nodes[i].phase, Phase::Dead) {
            Phase::Blocked { since, wait, .. } => {
                self.nodes[i].blocked_time += self.now - since;
                if let Wait::Global { required } = wait {
                    if let Some(set) = self.blocked_global.get_mut(&required) {
                        set.remove(&id);
                        if set.is_empty() {
                            self.blocked_global.remove(&required);
                        }
                    }
                }
            }
            Phase::Waking { since, .. } | Phase::Retrying { since } => {
                self.nodes[i].blocked_time += self.now - since;
            }
            Phase::Computing | Phase::Dead => {}
        }
        self.pop.remove(id);
        self.nodes[i].data = None;
        self.trace.membership_curve.push((self.now, self.pop.live.len()));
        if self.pop.live.is_empty() {
            self.trace.terminated_early = true;
            return Ok(());
        }
        self.track_spread();
        let mut released = self.release_global();
        released.extend(self.release_peers_of(id, true));
        self.wake(released);
        self.trace.checks.liveness_violations += self.liveness_violations();
        Ok(())
    }

    fn on_join(&mut self, ev: Event) {
        // Newcomers start level with the slowest live node so they never hold anyone back.
        let counter = self.pop.min().unwrap_or(0);
        let id = self.spawn(counter);
        self.log(&Event { node: id, ..ev }, None);
        self.trace.membership_curve.push((self.now, self.pop.live.len()));
        self.track_spread();
        if let Some((d, r)) = &mut self.join {
            let at = self.now + d.sample(r);
            self.schedule(at, EventKind::Join, NodeId(u32::MAX));
        }
        self.trace.checks.liveness_violations += self.liveness_violations();
    }

    fn track_spread(&mut self) {
        let s = self.pop.spread();
        let checks = &mut self.trace.checks;
        checks.max_counter_spread = checks.max_counter_spread.max(s);
    }

    fn start_step(&mut self, id: NodeId) -> Result<()> {
        let i = id.index();
        let view = read_my_writes_view(&self.pop.states[i], &self.server)?;
        let state = &mut self.pop.states[i];
        state.sync(view);
        if !state.sees_own_writes() {
            self.trace.checks.own_write_violations += 1;
        }
        self.nodes[i].phase = Phase::Computing;
        let at = self.now + self.step_duration(id);
        self.schedule(at, EventKind::StepComplete, id);
        Ok(())
    }

    fn audit(&mut self, id: NodeId, lag: Option<u64>) {
        let Some(bound) = self.lag_bound else { return };
        let counter = self.pop.counter(id);
        let global_lag = counter.saturating_sub(self.pop.min().unwrap_or(counter));
        self.trace.staleness_audits.push(StalenessAudit {
            time: self.now,
            node: id,
            counter,
            lag,
            global_lag,
            bound,
        });
    }

    /// Nodes blocked on the whole population whose requirement is now met.
    fn release_global(&mut self) -> Vec<NodeId> {
        let Some(min) = self.pop.min() else {
            return Vec::new();
        };
        let mut out = Vec::new();
        while let Some(entry) = self.blocked_global.first_entry() {
            if *entry.key() > min {
                break;
            }
            out.extend(entry.remove());
        }
        out
    }

    /// Nodes blocked on a sample containing `peer` that no longer wait on anyone, after
    /// `peer` committed or (`departed`) left.
    fn release_peers_of(&mut self, peer: NodeId, departed: bool) -> Vec<NodeId> {
        let Some(mut waiters) = self.peer_waiters.remove(&peer) else {
            return Vec::new();
        };
        let peer_counter = self.pop.counter(peer);
        let mut out = Vec::new();
        waiters.retain(|&(w, ep)| {
            let Phase::Blocked {
                episode,
                wait: Wait::Peers {
                    required,
                    outstanding,
                    ..
                },
                ..
            } = &mut self.nodes[w.index()].phase
            else {
                return false;
            };
            if *episode != ep {
                return false;
            }
            if departed || peer_counter >= *required {
                *outstanding -= 1;
                if *outstanding == 0 {
                    out.push(w);
                }
                false
            } else {
                true
            }
        });
        if !waiters.is_empty() {
            self.peer_waiters.insert(peer, waiters);
        }
        out
    }

    fn wake(&mut self, mut released: Vec<NodeId>) {
        released.sort_unstable();
        for id in released {
            let rt = &mut self.nodes[id.index()];
            let Phase::Blocked { since, wait, .. } = std::mem::replace(&mut rt.phase, Phase::Computing) else {
                unreachable!("released node was blocked");
            };
            rt.phase = Phase::Waking { since, wait };
            self.schedule(self.now, EventKind::Wakeup, id);
        }
    }

    /// Blocked nodes whose condition is already satisfied by the live population, i.e.
    /// nodes stuck on a departed peer.
    fn liveness_violations(&self) -> u64 {
        let min = self.pop.min();
        self.nodes
            .iter()
            .filter(|rt| match &rt.phase {
                Phase::Blocked {
                    wait: Wait::Global { required },
                    ..
                } => min.is_none_or(|m| m >= *required),
                Phase::Blocked {
                    wait: Wait::Peers { required, sample, .. },
                    ..
                } => sample
                    .iter()
                    .filter_map(|&p| self.pop.counter_of(p))
                    .all(|c| c >= *required),
                _ => false,
            })
            .count() as u64
    }

    fn finish(mut self, end: f64) -> RunTrace {
        for (state, rt) in self.pop.states.iter().zip(&mut self.nodes) {
            match rt.phase {
                Phase::Blocked { since, .. } | Phase::Waking { since, .. } | Phase::Retrying { since } => {
                    rt.blocked_time += end - since;
                }
                Phase::Computing | Phase::Dead => {}
            }
            self.trace.per_node_final.push(NodeFinal {
                node: state.id,
                counter: state.counter,
                blocked_time: rt.blocked_time,
                live: state.live,
                speed_factor: state.speed_factor,
                straggler: rt.straggler,
            });
        }
        if let Work::Aggregation { pooled, .. } = &self.work {
            self.trace.aggregate = Some(*pooled);
        }
        self.trace.final_model = self.server;
        self.trace
    }
}
