//! Barrier control for distributed SGD over large, heterogeneous and unreliable node
//! populations.
//!
//! The crate simulates workers that alternate between computing an update and crossing a
//! barrier, under five strategies: BSP, ASP, SSP and the probabilistic variants pBSP and
//! pSSP, which apply the BSP or SSP rule to a random sample of peers. Runs are
//! deterministic in their [`SimConfig`] (including the master seed).
//!
//! ```
//! use barrierlab::{run, BarrierPolicy, SimConfig};
//!
//! let config = SimConfig {
//!     num_nodes: 20,
//!     duration: 2.0,
//!     model_dim: 10,
//!     policy: BarrierPolicy::pbsp(2),
//!     ..Default::default()
//! };
//! let trace = run(&config).unwrap();
//! assert_eq!(trace.per_node_final.len(), 20);
//! ```

pub mod barrier;
pub mod config;
pub mod error;
pub mod export;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sim;
pub mod trace;
pub mod workload;

pub use barrier::{BarrierMethod, BarrierPolicy, InnerMethod, Staleness, StateView};
pub use config::{ChurnSpec, SimConfig, StatePlacement, WorkloadKind};
pub use error::{Error, Result};
pub use model::{ModelState, NodeId, NodeState, Update};
pub use sim::run;
pub use trace::RunTrace;
