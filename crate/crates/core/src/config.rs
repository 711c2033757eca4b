//! Experiment description.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::barrier::BarrierPolicy;
use crate::error::{Error, Result};
use crate::workload::{AggregationSpec, SgdSpec};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Constant,
    Lognormal,
    Exponential,
}

/// Nominal duration of one computation step, communication included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepTimeSpec {
    pub family: Family,
    /// Mean in simulated seconds.
    pub mean: f64,
    /// Log-space standard deviation for `lognormal`; ignored otherwise.
    pub dispersion: f64,
}

impl Default for StepTimeSpec {
    fn default() -> Self {
        StepTimeSpec {
            family: Family::Lognormal,
            mean: 0.05,
            dispersion: 0.25,
        }
    }
}

/// Distribution of the per-node speed factor. Factors have mean 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeterogeneitySpec {
    pub family: Family,
    pub dispersion: f64,
}

impl Default for HeterogeneitySpec {
    fn default() -> Self {
        HeterogeneitySpec {
            family: Family::Lognormal,
            dispersion: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StragglerSpec {
    /// Probability that a node is a straggler.
    pub fraction: f64,
    /// Step-time multiplier for stragglers.
    pub slowdown: f64,
}

impl Default for StragglerSpec {
    fn default() -> Self {
        StragglerSpec {
            fraction: 0.02,
            slowdown: 5.0,
        }
    }
}

/// Node departures and arrivals. Both rates zero disables churn.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChurnSpec {
    /// Per live node, per second.
    pub leave_rate: f64,
    /// Per initial node, per second: arrivals form a Poisson process of rate
    /// `join_rate * num_nodes`, so the equilibrium population is
    /// `num_nodes * join_rate / leave_rate`.
    pub join_rate: f64,
}

impl ChurnSpec {
    pub fn enabled(&self) -> bool {
        self.leave_rate > 0.0 || self.join_rate > 0.0
    }
}

/// Where barrier state (node counters) lives.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatePlacement {
    /// Centralised for bsp and ssp, distributed for asp, pbsp and pssp.
    #[default]
    Auto,
    /// A server sees every counter. Blocked nodes are re-evaluated whenever a counter they
    /// wait on changes or a node leaves.
    Centralised,
    /// Nodes decide on their own. A refused node retries its admission check, with a fresh
    /// sample, after a backoff.
    Distributed,
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkloadKind {
    #[default]
    Sgd,
    Aggregation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub num_nodes: usize,
    /// Simulated seconds.
    pub duration: f64,
    pub model_dim: usize,
    pub policy: BarrierPolicy,
    pub step_time: StepTimeSpec,
    pub heterogeneity: HeterogeneitySpec,
    pub straggler: StragglerSpec,
    pub churn: ChurnSpec,
    pub state_placement: StatePlacement,
    pub workload: WorkloadKind,
    pub sgd: SgdSpec,
    pub aggregation: AggregationSpec,
    pub master_seed: u64,
    /// Retry delay for refused checks under distributed placement; defaults to the mean
    /// step time.
    pub retry_backoff: Option<f64>,
    /// Spacing of loss samples in simulated seconds.
    pub loss_interval: f64,
    /// Retain the full event log in the trace.
    pub keep_events: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            num_nodes: 1000,
            duration: 40.0,
            model_dim: 1000,
            policy: BarrierPolicy::default(),
            step_time: StepTimeSpec::default(),
            heterogeneity: HeterogeneitySpec::default(),
            straggler: StragglerSpec::default(),
            churn: ChurnSpec::default(),
            state_placement: StatePlacement::default(),
            workload: WorkloadKind::default(),
            sgd: SgdSpec::default(),
            aggregation: AggregationSpec::default(),
            master_seed: 0,
            retry_backoff: None,
            loss_interval: 1.0,
            keep_events: false,
        }
    }
}

fn require(ok: bool, field: &str, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(field, message()))
    }
}

fn positive(value: f64, field: &str) -> Result<()> {
    require(value.is_finite() && value > 0.0, field, || {
        format!("must be a finite positive number, got {value}")
    })
}

fn nonnegative(value: f64, field: &str) -> Result<()> {
    require(value.is_finite() && value >= 0.0, field, || {
        format!("must be a finite nonnegative number, got {value}")
    })
}

impl SimConfig {
    /// Placement actually simulated; never `Auto`.
    pub fn resolved_placement(&self) -> StatePlacement {
        match self.state_placement {
            StatePlacement::Auto if self.policy.method.needs_global_state() => StatePlacement::Centralised,
            StatePlacement::Auto => StatePlacement::Distributed,
            p => p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require(self.num_nodes > 0, "num_nodes", || "must be at least 1".into())?;
        require(self.num_nodes < 1 << 27, "num_nodes", || "must be below 2^27".into())?;
        positive(self.duration, "duration")?;
        require(self.model_dim > 0, "model_dim", || "must be at least 1".into())?;
        positive(self.step_time.mean, "step_time.mean")?;
        nonnegative(self.step_time.dispersion, "step_time.dispersion")?;
        nonnegative(self.heterogeneity.dispersion, "heterogeneity.dispersion")?;
        require(
            (0.0..=1.0).contains(&self.straggler.fraction),
            "straggler.fraction",
            || format!("must lie in [0, 1], got {}", self.straggler.fraction),
        )?;
        positive(self.straggler.slowdown, "straggler.slowdown")?;
        nonnegative(self.churn.leave_rate, "churn.leave_rate")?;
        nonnegative(self.churn.join_rate, "churn.join_rate")?;
        if let Some(b) = self.retry_backoff {
            positive(b, "retry_backoff")?;
        }
        positive(self.loss_interval, "loss_interval")?;
        if self.state_placement == StatePlacement::Distributed {
            require(
                !self.policy.method.needs_global_state(),
                "state_placement",
                || {
                    format!(
                        "distributed state placement needs an asp, pbsp or pssp policy, not {}",
                        self.policy.method
                    )
                },
            )?;
        }
        match self.workload {
            WorkloadKind::Sgd => {
                let s = &self.sgd;
                require(s.samples_per_node > 0, "sgd.samples_per_node", || "must be at least 1".into())?;
                require(s.samples_per_node <= 1 << 20, "sgd.samples_per_node", || {
                    "must not exceed 2^20".into()
                })?;
                require(s.batch_size > 0, "sgd.batch_size", || "must be at least 1".into())?;
                positive(s.learning_rate, "sgd.learning_rate")?;
                nonnegative(s.noise_sigma, "sgd.noise_sigma")?;
                require(s.eval_samples > 0, "sgd.eval_samples", || "must be at least 1".into())?;
            }
            WorkloadKind::Aggregation => {
                let a = &self.aggregation;
                require(a.batch_size > 0, "aggregation.batch_size", || "must be at least 1".into())?;
                nonnegative(a.node_mean_spread, "aggregation.node_mean_spread")?;
                nonnegative(a.value_sigma, "aggregation.value_sigma")?;
                require(a.global_mean.is_finite(), "aggregation.global_mean", || "must be finite".into())?;
            }
        }
        Ok(())
    }

    pub fn effective_sample_size(&self) -> usize {
        self.policy.effective_sample_size(self.num_nodes)
    }

    pub fn retry_backoff(&self) -> f64 {
        self.retry_backoff.unwrap_or(self.step_time.mean)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Directory-friendly name for a run of this config.
    pub fn run_id(&self) -> String {
        format!(
            "{}-n{}-seed{}",
            self.policy.label(self.num_nodes),
            self.num_nodes,
            self.master_seed
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::Staleness;

    #[test]
    fn defaults_are_valid() {
        let c = SimConfig::default();
        c.validate().unwrap();
        assert_eq!(c.num_nodes, 1000);
        assert_eq!(c.duration, 40.0);
        assert_eq!(c.model_dim, 1000);
        assert_eq!(c.effective_sample_size(), 10);
    }

    #[test]
    fn rejects_bad_fields() {
        let cases: Vec<(SimConfig, &str)> = vec![
            (SimConfig { num_nodes: 0, ..Default::default() }, "num_nodes"),
            (SimConfig { duration: 0.0, ..Default::default() }, "duration"),
            (
                SimConfig {
                    churn: ChurnSpec { leave_rate: -1.0, join_rate: 0.0 },
                    ..Default::default()
                },
                "churn.leave_rate",
            ),
            (
                SimConfig {
                    state_placement: StatePlacement::Distributed,
                    policy: BarrierPolicy::ssp(Staleness::Bounded(4)),
                    ..Default::default()
                },
                "state_placement",
            ),
        ];
        for (c, field) in cases {
            match c.validate() {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected config error on {field}, got {other:?}"),
            }
        }
        let ok = SimConfig {
            state_placement: StatePlacement::Distributed,
            policy: BarrierPolicy::pbsp(3),
            ..Default::default()
        };
        ok.validate().unwrap();
        assert_eq!(ok.resolved_placement(), StatePlacement::Distributed);
        let auto = |policy| SimConfig { policy, ..Default::default() }.resolved_placement();
        assert_eq!(auto(BarrierPolicy::bsp()), StatePlacement::Centralised);
        assert_eq!(auto(BarrierPolicy::ssp(Staleness::Bounded(2))), StatePlacement::Centralised);
        assert_eq!(auto(BarrierPolicy::asp()), StatePlacement::Distributed);
        assert_eq!(auto(BarrierPolicy::pssp(Staleness::Bounded(2), 3)), StatePlacement::Distributed);
    }

    #[test]
    fn json_round_trip_and_fingerprint() {
        let c = SimConfig {
            policy: BarrierPolicy::pssp(Staleness::Unbounded, 7),
            master_seed: 99,
            ..Default::default()
        };
        let json = serde_json::to_string(&c).unwrap();
        let back: SimConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.fingerprint(), c.fingerprint());
        assert_ne!(SimConfig::default().fingerprint(), c.fingerprint());
        assert!(serde_json::from_str::<SimConfig>(r#"{"nodes": 3}"#).is_err());
    }
}
