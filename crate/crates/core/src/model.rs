//! Parameter vectors, updates and node-local views.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A versioned parameter vector. The version counts applied updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    params: Vec<f64>,
    version: u64,
}

impl ModelState {
    pub fn zeros(dim: usize) -> Self {
        Self::from_params(vec![0.0; dim])
    }

    pub fn from_params(params: Vec<f64>) -> Self {
        ModelState { params, version: 0 }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    /// Adds `update.delta` element-wise and bumps the version.
    pub fn apply(&mut self, update: &Update) -> Result<()> {
        if update.delta.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                found: update.delta.len(),
            });
        }
        for (p, d) in self.params.iter_mut().zip(&update.delta) {
            *p += d;
        }
        self.version += 1;
        Ok(())
    }
}

/// A model delta committed by a worker after one iteration.
///
/// Deltas are already scaled by the learning rate, so applying an update is plain addition
/// and the order in which a set of updates is applied does not matter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Update {
    pub delta: Vec<f64>,
    pub origin_node: NodeId,
    /// Counter of the origin node when the update was computed.
    pub origin_step: u64,
}

pub fn apply_update(mut model: ModelState, update: &Update) -> Result<ModelState> {
    model.apply(update)?;
    Ok(model)
}

/// Per-node bookkeeping: iteration counter, local model snapshot and liveness.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeState {
    pub id: NodeId,
    /// Completed iterations.
    pub counter: u64,
    pub local_model: ModelState,
    pub last_synced_version: u64,
    /// Multiplier on the sampled step time; above 1 means slower than nominal.
    pub speed_factor: f64,
    pub live: bool,
    /// Server version right after this node's latest commit, if it has committed.
    pub last_commit_version: Option<u64>,
}

impl NodeState {
    pub fn new(id: NodeId, counter: u64, local_model: ModelState, speed_factor: f64) -> Self {
        let last_synced_version = local_model.version();
        NodeState {
            id,
            counter,
            local_model,
            last_synced_version,
            speed_factor,
            live: true,
            last_commit_version: None,
        }
    }

    /// Records that the server applied an update from this node and advances the counter.
    pub fn record_commit(&mut self, server_version: u64) {
        self.counter += 1;
        self.last_commit_version = Some(server_version);
    }

    /// Replaces the local snapshot.
    pub fn sync(&mut self, view: ModelState) {
        self.last_synced_version = view.version();
        self.local_model = view;
    }

    /// True when the local snapshot contains every update this node has committed.
    pub fn sees_own_writes(&self) -> bool {
        self.last_commit_version
            .is_none_or(|v| self.last_synced_version >= v)
    }
}

/// The model a node reads before its next iteration.
///
/// The server applies every commit as it arrives, so its current state always contains the
/// node's own updates; which of the other nodes' updates it contains is decided by when the
/// barrier let this node through.
pub fn read_my_writes_view(node: &NodeState, server: &ModelState) -> Result<ModelState> {
    if !node.live {
        return Err(Error::NotLive(node.id));
    }
    debug_assert!(node
        .last_commit_version
        .is_none_or(|v| server.version() >= v));
    Ok(server.clone())
}
