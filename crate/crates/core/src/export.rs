//! On-disk artifacts and the trace-directory audit.
//!
//! A run directory holds:
//!
//! * `progress.csv`: one row per node ever live (id, final counter, blocked seconds, ...)
//! * `histogram.csv`, `cdf.csv`: progress distribution of the nodes live at the end
//! * `loss.csv`, `membership.csv`: time series
//! * `audit.csv`: per-node staleness summary for bounded policies
//! * `events.csv`, `audit_log.csv`: full logs, only when events were kept
//! * `meta.json`: config echo, seed, fingerprint, library version and run checks
//!
//! A sweep directory holds `sweep.csv` and `meta.json`. Floats in CSV files are written
//! with 17 significant digits, so identical traces give byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::barrier::BarrierMethod;
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::metrics::{progress_cdf, progress_histogram, progress_stats, ProgressStats, SweepFamily, SweepRow};
use crate::trace::{RunChecks, RunTrace};

pub const LIBRARY: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const VARIANCE_CONVENTION: &str = "population (m2 / count)";

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_file<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Staleness summary stored in `meta.json`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub bound: Option<u64>,
    pub admissions: usize,
    pub violations: usize,
    pub max_lag: Option<u64>,
    pub max_global_lag: Option<u64>,
}

impl AuditSummary {
    pub fn of(trace: &RunTrace, config: &SimConfig) -> Self {
        let a = &trace.staleness_audits;
        AuditSummary {
            bound: config.policy.lag_bound(),
            admissions: a.len(),
            violations: trace.staleness_violations(),
            max_lag: a.iter().filter_map(|x| x.lag).max(),
            max_global_lag: a.iter().map(|x| x.global_lag).max(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub kind: String,
    pub library: String,
    pub version: String,
    pub run_id: String,
    pub config_fingerprint: String,
    pub master_seed: u64,
    pub variance_convention: String,
    pub terminated_early: bool,
    pub end_time: f64,
    pub total_commits: u64,
    pub final_version: u64,
    pub progress: ProgressStats,
    pub checks: RunChecks,
    pub audit: AuditSummary,
    pub config: SimConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepMeta {
    pub kind: String,
    pub library: String,
    pub version: String,
    pub family: SweepFamily,
    pub parameter: String,
    pub params: Vec<u64>,
    pub seeds: Vec<u64>,
    pub variance_convention: String,
    pub base_config: SimConfig,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Writes every artifact of one run into `dir`, creating it if needed.
pub fn write_run(dir: &Path, config: &SimConfig, trace: &RunTrace) -> Result<()> {
    fs::create_dir_all(dir)?;
    csv_file(
        &dir.join("progress.csv"),
        &["node", "final_counter", "blocked_time", "live", "speed_factor", "straggler"],
        trace.per_node_final.iter().map(|f| {
            [
                f.node.to_string(),
                f.counter.to_string(),
                fmt_float(f.blocked_time),
                f.live.to_string(),
                fmt_float(f.speed_factor),
                f.straggler.to_string(),
            ]
        }),
    )?;
    csv_file(
        &dir.join("histogram.csv"),
        &["bin_start", "count"],
        progress_histogram(trace, 1)?
            .into_iter()
            .map(|(b, c)| [b.to_string(), c.to_string()]),
    )?;
    csv_file(
        &dir.join("cdf.csv"),
        &["step", "fraction"],
        progress_cdf(trace)
            .into_iter()
            .map(|(s, f)| [s.to_string(), fmt_float(f)]),
    )?;
    csv_file(
        &dir.join("loss.csv"),
        &["time", "loss"],
        trace.loss_curve.iter().map(|&(t, l)| [fmt_float(t), fmt_float(l)]),
    )?;
    csv_file(
        &dir.join("membership.csv"),
        &["time", "live"],
        trace
            .membership_curve
            .iter()
            .map(|&(t, n)| [fmt_float(t), n.to_string()]),
    )?;

    #[derive(Default)]
    struct PerNode {
        admissions: u64,
        max_lag: Option<u64>,
        max_global_lag: u64,
        violations: u64,
        bound: u64,
    }
    let mut per_node: BTreeMap<u32, PerNode> = BTreeMap::new();
    for a in &trace.staleness_audits {
        let e = per_node.entry(a.node.0).or_default();
        e.admissions += 1;
        e.max_lag = e.max_lag.max(a.lag);
        e.max_global_lag = e.max_global_lag.max(a.global_lag);
        e.violations += u64::from(a.violated());
        e.bound = a.bound;
    }
    csv_file(
        &dir.join("audit.csv"),
        &["node", "admissions", "max_lag", "max_global_lag", "bound", "violations"],
        per_node.into_iter().map(|(n, e)| {
            [
                n.to_string(),
                e.admissions.to_string(),
                opt(e.max_lag),
                e.max_global_lag.to_string(),
                e.bound.to_string(),
                e.violations.to_string(),
            ]
        }),
    )?;

    if let Some(events) = &trace.events {
        csv_file(
            &dir.join("events.csv"),
            &["time", "seq", "kind", "node", "counter", "admitted"],
            events.iter().map(|e| {
                [
                    fmt_float(e.time),
                    e.seq.to_string(),
                    e.kind.name().to_owned(),
                    e.node.to_string(),
                    e.counter.to_string(),
                    opt(e.admitted),
                ]
            }),
        )?;
        csv_file(
            &dir.join("audit_log.csv"),
            &["time", "node", "counter", "lag", "global_lag", "bound"],
            trace.staleness_audits.iter().map(|a| {
                [
                    fmt_float(a.time),
                    a.node.to_string(),
                    a.counter.to_string(),
                    opt(a.lag),
                    a.global_lag.to_string(),
                    a.bound.to_string(),
                ]
            }),
        )?;
    }

    let meta = RunMeta {
        kind: "run".into(),
        library: LIBRARY.into(),
        version: VERSION.into(),
        run_id: config.run_id(),
        config_fingerprint: trace.config_fingerprint.clone(),
        master_seed: trace.master_seed,
        variance_convention: VARIANCE_CONVENTION.into(),
        terminated_early: trace.terminated_early,
        end_time: trace.end_time,
        total_commits: trace.total_commits,
        final_version: trace.final_model.version(),
        progress: progress_stats(trace),
        checks: trace.checks.clone(),
        audit: AuditSummary::of(trace, config),
        config: config.clone(),
    };
    write_json(&dir.join("meta.json"), &meta)
}

pub fn write_sweep(dir: &Path, base: &SimConfig, family: SweepFamily, params: &[u64], seeds: &[u64], rows: &[SweepRow]) -> Result<()> {
    fs::create_dir_all(dir)?;
    csv_file(
        &dir.join("sweep.csv"),
        &[family.parameter_name(), "seed", "nodes", "mean", "std", "min", "max"],
        rows.iter().map(|r| {
            [
                r.param.to_string(),
                r.seed.to_string(),
                r.stats.nodes.to_string(),
                fmt_float(r.stats.mean),
                fmt_float(r.stats.std),
                r.stats.min.to_string(),
                r.stats.max.to_string(),
            ]
        }),
    )?;
    let meta = SweepMeta {
        kind: "sweep".into(),
        library: LIBRARY.into(),
        version: VERSION.into(),
        family,
        parameter: family.parameter_name().into(),
        params: params.to_vec(),
        seeds: seeds.to_vec(),
        variance_convention: VARIANCE_CONVENTION.into(),
        base_config: base.clone(),
    };
    write_json(&dir.join("meta.json"), &meta)
}

/// One row of a policy comparison: a run's progress summary and, when a BSP run with the
/// same seed is available, the sup-norm distance between their progress CDFs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub policy: String,
    pub seed: u64,
    pub stats: ProgressStats,
    pub cdf_distance_to_bsp: Option<f64>,
}

pub fn write_comparison(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    csv_file(
        path,
        &["policy", "seed", "nodes", "mean", "std", "min", "max", "cdf_distance_to_bsp"],
        rows.iter().map(|r| {
            [
                r.policy.clone(),
                r.seed.to_string(),
                r.stats.nodes.to_string(),
                fmt_float(r.stats.mean),
                fmt_float(r.stats.std),
                r.stats.min.to_string(),
                r.stats.max.to_string(),
                r.cdf_distance_to_bsp.map(fmt_float).unwrap_or_default(),
            ]
        }),
    )
}

/// One problem found by [`audit_dir`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Finding {
    pub run: PathBuf,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub runs_checked: usize,
    pub findings: Vec<Finding>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.runs_checked > 0 && self.findings.is_empty()
    }
}

fn run_dirs(root: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let meta = root.join("meta.json");
    if meta.is_file() {
        let v: serde_json::Value = serde_json::from_reader(fs::File::open(&meta)?)?;
        if v.get("kind").and_then(|k| k.as_str()) == Some("run") {
            out.push(root.to_path_buf());
        }
    }
    let mut children: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    children.sort();
    for c in children {
        run_dirs(&c, out)?;
    }
    Ok(())
}

fn parse_opt(s: &str) -> Result<Option<u64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse()
            .map(Some)
            .map_err(|_| Error::config("audit", format!("bad integer `{s}`")))
    }
}

fn audit_run(dir: &Path, findings: &mut Vec<Finding>) -> Result<()> {
    let meta: RunMeta = serde_json::from_reader(fs::File::open(dir.join("meta.json"))?)?;
    let mut flag = |message: String| {
        findings.push(Finding {
            run: dir.to_path_buf(),
            message,
        })
    };
    let c = &meta.checks;
    if meta.audit.violations > 0 {
        flag(format!("{} staleness violations recorded", meta.audit.violations));
    }
    if meta.config.policy.method == BarrierMethod::Bsp && c.max_counter_spread > 1 {
        flag(format!("bsp lockstep broken: counter spread reached {}", c.max_counter_spread));
    }
    if c.liveness_violations > 0 {
        flag(format!("{} nodes blocked on departed peers", c.liveness_violations));
    }
    if c.own_write_violations > 0 {
        flag(format!("{} syncs missed the node's own writes", c.own_write_violations));
    }
    if c.causality_violations > 0 {
        flag(format!("{} out-of-order step completions", c.causality_violations));
    }

    // Recheck the lag records themselves rather than trusting the counters above.
    let mut rdr = csv::Reader::from_path(dir.join("audit.csv"))?;
    for row in rdr.records() {
        let row = row?;
        let max_lag = parse_opt(&row[2])?;
        let bound = parse_opt(&row[4])?.unwrap_or(u64::MAX);
        if max_lag.is_some_and(|l| l > bound) {
            flag(format!("node {} admitted with lag {} over bound {bound}", &row[0], max_lag.unwrap()));
        }
    }
    let log = dir.join("audit_log.csv");
    if log.is_file() {
        let mut rdr = csv::Reader::from_path(log)?;
        for row in rdr.records() {
            let row = row?;
            let lag = parse_opt(&row[3])?;
            let bound = parse_opt(&row[5])?.unwrap_or(u64::MAX);
            if lag.is_some_and(|l| l > bound) {
                flag(format!("node {} admitted at t={} with lag over bound", &row[1], &row[0]));
            }
        }
    }
    Ok(())
}

/// Checks every run directory under `root` for staleness, lockstep, liveness,
/// read-my-writes and causality violations.
pub fn audit_dir(root: &Path) -> Result<AuditReport> {
    let mut dirs = Vec::new();
    run_dirs(root, &mut dirs)?;
    let mut report = AuditReport {
        runs_checked: dirs.len(),
        findings: Vec::new(),
    };
    for d in dirs {
        audit_run(&d, &mut report.findings)?;
    }
    Ok(report)
}
