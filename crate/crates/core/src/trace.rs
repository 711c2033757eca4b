use serde::{Deserialize, Serialize};

use crate::model::{ModelState, NodeId};
use crate::workload::SummaryStat;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeFinal {
    pub node: NodeId,
    pub counter: u64,
    /// Simulated seconds spent waiting at barriers.
    pub blocked_time: f64,
    pub live: bool,
    pub speed_factor: f64,
    pub straggler: bool,
}

/// One admission that a bounded policy granted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StalenessAudit {
    pub time: f64,
    pub node: NodeId,
    /// Completed iterations of the admitted node.
    pub counter: u64,
    /// Lag behind the slowest node of the view the decision was made on; `None` for an
    /// empty sample.
    pub lag: Option<u64>,
    /// Lag behind the slowest live node.
    pub global_lag: u64,
    /// Largest lag the policy permits.
    pub bound: u64,
}

impl StalenessAudit {
    pub fn violated(&self) -> bool {
        self.lag.is_some_and(|l| l > self.bound)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    StepComplete,
    AdmissionCheck,
    Wakeup,
    Join,
    Leave,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::StepComplete => "step_complete",
            EventKind::AdmissionCheck => "admission_check",
            EventKind::Wakeup => "wakeup",
            EventKind::Join => "join",
            EventKind::Leave => "leave",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
    pub node: NodeId,
    /// Counter of `node` after the event.
    pub counter: u64,
    /// Outcome of an admission check or wakeup.
    pub admitted: Option<bool>,
}

/// Invariant checks the engine evaluates while running.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunChecks {
    /// Largest `max - min` over live counters seen after any event.
    pub max_counter_spread: u64,
    /// Blocked nodes whose wait condition was already met by the live population.
    pub liveness_violations: u64,
    /// Syncs whose snapshot missed one of the node's own commits.
    pub own_write_violations: u64,
    /// Step completions not strictly later than the node's previous one.
    pub causality_violations: u64,
}

/// Everything a run produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub config_fingerprint: String,
    pub master_seed: u64,
    /// Every node that was ever live, by id.
    pub per_node_final: Vec<NodeFinal>,
    pub events: Option<Vec<EventRecord>>,
    pub staleness_audits: Vec<StalenessAudit>,
    /// `(simulated time, loss)`.
    pub loss_curve: Vec<(f64, f64)>,
    /// `(simulated time, live nodes)` at start and after every membership change.
    pub membership_curve: Vec<(f64, usize)>,
    pub checks: RunChecks,
    /// Set when every node left before the configured duration.
    pub terminated_early: bool,
    pub end_time: f64,
    pub total_commits: u64,
    pub final_model: ModelState,
    /// Pooled summary of the aggregation workload.
    pub aggregate: Option<SummaryStat>,
}

impl RunTrace {
    pub fn live_finals(&self) -> impl Iterator<Item = &NodeFinal> + '_ {
        self.per_node_final.iter().filter(|f| f.live)
    }

    /// Final counters of the nodes live at the end of the run.
    pub fn final_counters(&self) -> Vec<u64> {
        self.live_finals().map(|f| f.counter).collect()
    }

    pub fn staleness_violations(&self) -> usize {
        self.staleness_audits.iter().filter(|a| a.violated()).count()
    }
}
