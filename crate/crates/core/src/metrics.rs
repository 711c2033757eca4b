//! Progress distributions and parameter sweeps over run traces.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::{BarrierPolicy, Staleness};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::sim;
use crate::trace::RunTrace;
use crate::workload::SummaryStat;

/// Summary of final progress over the nodes live at the end of a run. `std` is the
/// population standard deviation.
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProgressStats {
    pub nodes: usize,
    pub mean: f64,
    pub std: f64,
    pub min: u64,
    pub max: u64,
}

pub fn progress_stats(trace: &RunTrace) -> ProgressStats {
    let counters = trace.final_counters();
    let summary: SummaryStat = counters.iter().map(|&c| c as f64).collect();
    ProgressStats {
        nodes: counters.len(),
        mean: summary.mean,
        std: summary.std_dev(),
        min: counters.iter().copied().min().unwrap_or(0),
        max: counters.iter().copied().max().unwrap_or(0),
    }
}

/// Final counters binned as `[k * bin_width, (k + 1) * bin_width)`; only occupied bins are
/// listed, keyed by their lower edge.
pub fn progress_histogram(trace: &RunTrace, bin_width: u64) -> Result<Vec<(u64, usize)>> {
    if bin_width == 0 {
        return Err(Error::config("bin_width", "must be positive"));
    }
    let mut bins = BTreeMap::new();
    for c in trace.final_counters() {
        *bins.entry(c / bin_width * bin_width).or_insert(0) += 1;
    }
    Ok(bins.into_iter().collect())
}

/// Empirical CDF of final progress: `(step, fraction of nodes with counter <= step)` at
/// every occupied step.
pub fn progress_cdf(trace: &RunTrace) -> Vec<(u64, f64)> {
    cdf_of(&trace.final_counters())
}

pub fn cdf_of(counters: &[u64]) -> Vec<(u64, f64)> {
    let mut counts = BTreeMap::new();
    for &c in counters {
        *counts.entry(c).or_insert(0usize) += 1;
    }
    let n = counters.len() as f64;
    let mut seen = 0;
    counts
        .into_iter()
        .map(|(step, k)| {
            seen += k;
            (step, seen as f64 / n)
        })
        .collect()
}

/// Evaluates a step CDF at `x`.
pub fn cdf_at(cdf: &[(u64, f64)], x: u64) -> f64 {
    match cdf.partition_point(|&(s, _)| s <= x) {
        0 => 0.0,
        i => cdf[i - 1].1,
    }
}

/// Largest vertical gap between two step CDFs.
pub fn cdf_sup_distance(a: &[(u64, f64)], b: &[(u64, f64)]) -> f64 {
    a.iter()
        .chain(b)
        .map(|&(s, _)| (cdf_at(a, s) - cdf_at(b, s)).abs())
        .fold(0.0, f64::max)
}

/// Smallest step whose CDF value reaches `q`.
pub fn cdf_quantile(cdf: &[(u64, f64)], q: f64) -> Option<u64> {
    cdf.iter().find(|&&(_, f)| f >= q).map(|&(s, _)| s)
}

pub fn interquartile_range(cdf: &[(u64, f64)]) -> Option<u64> {
    Some(cdf_quantile(cdf, 0.75)? - cdf_quantile(cdf, 0.25)?)
}

/// Which policy parameter a sweep varies.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepFamily {
    /// Probabilistic BSP, varying the sample size.
    Pbsp,
    /// Probabilistic SSP, varying the sample size at the base staleness.
    Pssp,
    /// SSP, varying the staleness.
    Ssp,
}

impl SweepFamily {
    pub fn parameter_name(self) -> &'static str {
        match self {
            SweepFamily::Pbsp | SweepFamily::Pssp => "sample_size",
            SweepFamily::Ssp => "staleness",
        }
    }

    pub fn policy(self, base: &BarrierPolicy, param: u64) -> BarrierPolicy {
        match self {
            SweepFamily::Pbsp => BarrierPolicy {
                sample_include_self: base.sample_include_self,
                ..BarrierPolicy::pbsp(param as usize)
            },
            SweepFamily::Pssp => BarrierPolicy {
                sample_include_self: base.sample_include_self,
                ..BarrierPolicy::pssp(base.staleness, param as usize)
            },
            SweepFamily::Ssp => BarrierPolicy::ssp(Staleness::Bounded(param)),
        }
    }
}

impl FromStr for SweepFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pbsp" => Ok(SweepFamily::Pbsp),
            "pssp" => Ok(SweepFamily::Pssp),
            "ssp" => Ok(SweepFamily::Ssp),
            other => Err(format!("unknown sweep family `{other}` (expected pbsp, pssp or ssp)")),
        }
    }
}

impl fmt::Display for SweepFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepFamily::Pbsp => "pbsp",
            SweepFamily::Pssp => "pssp",
            SweepFamily::Ssp => "ssp",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: u64,
    pub seed: u64,
    pub stats: ProgressStats,
}

/// Config for one cell of a sweep.
pub fn sweep_config(base: &SimConfig, family: SweepFamily, param: u64, seed: u64) -> SimConfig {
    SimConfig {
        policy: family.policy(&base.policy, param),
        master_seed: seed,
        ..base.clone()
    }
}

/// Runs every `(param, seed)` cell and maps each trace through `f`. Cells run in
/// parallel; results come back in `(param, seed)` order.
pub fn sweep_map<T, F>(base: &SimConfig, family: SweepFamily, params: &[u64], seeds: &[u64], f: F) -> Result<Vec<(u64, u64, T)>>
where
    T: Send,
    F: Fn(&SimConfig, RunTrace) -> Result<T> + Sync,
{
    if seeds.is_empty() {
        return Err(Error::config("seeds", "a sweep needs at least one seed"));
    }
    let cells: Vec<(u64, u64)> = params
        .iter()
        .flat_map(|&p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    cells
        .into_par_iter()
        .map(|(param, seed)| {
            let cfg = sweep_config(base, family, param, seed);
            let trace = sim::run(&cfg)?;
            Ok((param, seed, f(&cfg, trace)?))
        })
        .collect()
}

pub fn sweep(base: &SimConfig, family: SweepFamily, params: &[u64], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    Ok(sweep_map(base, family, params, seeds, |_, t| Ok(progress_stats(&t)))?
        .into_iter()
        .map(|(param, seed, stats)| SweepRow { param, seed, stats })
        .collect())
}

/// Counts adjacent pairs where `values` increases by more than `rel_tol` relative to the
/// earlier value.
pub fn increasing_inversions(values: &[f64], rel_tol: f64) -> usize {
    values
        .windows(2)
        .filter(|w| w[1] > w[0] * (1.0 + rel_tol) && w[1] - w[0] > f64::EPSILON)
        .count()
}
