//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero if any
//! criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use barrierlab::barrier::Staleness;
use barrierlab::export;
use barrierlab::metrics::{self, cdf_sup_distance, increasing_inversions, progress_cdf, progress_stats, SweepFamily};
use barrierlab::model::{ModelState, NodeId};
use barrierlab::workload::{self, local_summary, merge_summaries, tree_merge, LinearTask, LocalData, SgdSpec, SummaryStat};
use barrierlab::{BarrierPolicy, ChurnSpec, RunTrace, SimConfig, StatePlacement};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: std::ops::RangeInclusive<u64> = 1..=10;
const BETAS: [u64; 8] = [0, 1, 2, 4, 8, 16, 32, 64];

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict { pass, detail: detail.into() }
    }
}

/// Shared state: every run written for the audit, and the statistics later criteria reuse.
struct Suite {
    root: PathBuf,
    /// (policy label, seed) -> (mean, std) at N = 200, 20 s.
    desk: BTreeMap<(String, u64), (f64, f64)>,
    bsp_cdfs: BTreeMap<u64, Vec<(u64, f64)>>,
    beta_std: BTreeMap<u64, f64>,
}

fn run_and_write(cfg: &SimConfig, dir: &Path) -> RunTrace {
    let trace = barrierlab::run(cfg).expect("acceptance config is valid");
    export::write_run(dir, cfg, &trace).expect("writable run directory");
    trace
}

fn desk(policy: BarrierPolicy, seed: u64) -> SimConfig {
    SimConfig {
        num_nodes: 200,
        duration: 20.0,
        policy,
        master_seed: seed,
        ..Default::default()
    }
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn degeneracy(s: &mut Suite) -> Verdict {
    let dir = s.root.join("identities");
    let base = SimConfig {
        num_nodes: 100,
        duration: 10.0,
        master_seed: 7,
        ..Default::default()
    };
    let with = |name: &str, policy: BarrierPolicy, placement: StatePlacement| {
        let cfg = SimConfig { policy, state_placement: placement, ..base.clone() };
        run_and_write(&cfg, &dir.join(name));
        fs::read(dir.join(name).join("progress.csv")).unwrap()
    };
    let auto = StatePlacement::Auto;
    let bsp = with("bsp", BarrierPolicy::bsp(), auto);
    let asp = with("asp", BarrierPolicy::asp(), auto);
    let pairs = [
        ("ssp(s=0) = bsp", with("ssp0", BarrierPolicy::ssp(Staleness::Bounded(0)), auto) == bsp),
        ("ssp(s=unbounded) = asp", with("ssp-inf", BarrierPolicy::ssp(Staleness::Unbounded), auto) == asp),
        ("pbsp(0) = asp", with("pbsp0", BarrierPolicy::pbsp(0), auto) == asp),
        (
            "pbsp(N-1) = bsp",
            with("pbsp99", BarrierPolicy::pbsp(99), StatePlacement::Centralised) == bsp,
        ),
    ];
    let failed: Vec<&str> = pairs.iter().filter(|p| !p.1).map(|p| p.0).collect();
    Verdict::new(
        failed.is_empty(),
        if failed.is_empty() {
            "4/4 progress.csv pairs byte-identical".to_string()
        } else {
            format!("differ: {}", failed.join(", "))
        },
    )
}

fn ordering(s: &mut Suite) -> Verdict {
    let policies = [
        ("bsp", BarrierPolicy::bsp()),
        ("ssp4", BarrierPolicy::ssp(Staleness::Bounded(4))),
        ("asp", BarrierPolicy::asp()),
    ];
    for seed in SEEDS {
        for (name, policy) in &policies {
            let cfg = desk(policy.clone(), seed);
            let trace = run_and_write(&cfg, &s.root.join("desk").join(cfg.run_id()));
            let st = progress_stats(&trace);
            s.desk.insert((name.to_string(), seed), (st.mean, st.std));
            if *name == "bsp" {
                s.bsp_cdfs.insert(seed, progress_cdf(&trace));
            }
        }
    }
    let get = |n: &str, seed| s.desk[&(n.to_string(), seed)];
    let mean_ok = SEEDS.filter(|&k| get("bsp", k).0 < get("ssp4", k).0 && get("ssp4", k).0 < get("asp", k).0).count();
    let std_ok = SEEDS.filter(|&k| get("bsp", k).1 < get("ssp4", k).1 && get("ssp4", k).1 < get("asp", k).1).count();
    let avg = |n: &str, i: usize| mean(SEEDS.map(|k| if i == 0 { get(n, k).0 } else { get(n, k).1 }));
    Verdict::new(
        mean_ok >= 8 && std_ok >= 8,
        format!(
            "mean order {mean_ok}/10 seeds, std order {std_ok}/10 seeds; mean {:.1} < {:.1} < {:.1}, std {:.2} < {:.2} < {:.2}",
            avg("bsp", 0),
            avg("ssp4", 0),
            avg("asp", 0),
            avg("bsp", 1),
            avg("ssp4", 1),
            avg("asp", 1)
        ),
    )
}

fn sample_sweep(s: &mut Suite) -> Verdict {
    let base = desk(BarrierPolicy::pbsp(1), 0);
    let seeds: Vec<u64> = SEEDS.collect();
    let root = s.root.join("sweep");
    let cells = metrics::sweep_map(&base, SweepFamily::Pbsp, &BETAS, &seeds, |cfg, trace| {
        export::write_run(&root.join(cfg.run_id()), cfg, &trace)?;
        Ok((progress_stats(&trace).std, progress_cdf(&trace)))
    })
    .expect("sweep runs");
    let mut stds = Vec::new();
    let mut dists = Vec::new();
    for beta in BETAS {
        let row: Vec<_> = cells.iter().filter(|c| c.0 == beta).collect();
        let std = mean(row.iter().map(|c| c.2 .0));
        s.beta_std.insert(beta, std);
        stds.push(std);
        dists.push(mean(row.iter().map(|c| cdf_sup_distance(&c.2 .1, &s.bsp_cdfs[&c.1]))));
    }
    let (si, di) = (increasing_inversions(&stds, 0.02), increasing_inversions(&dists, 0.02));
    let fmt = |v: &[f64], p: usize| v.iter().map(|x| format!("{x:.p$}")).collect::<Vec<_>>().join(" ");
    Verdict::new(
        si <= 1 && di <= 1,
        format!(
            "std [{}] ({si} inversions); cdf distance to bsp [{}] ({di} inversions)",
            fmt(&stds, 2),
            fmt(&dists, 3)
        ),
    )
}

fn small_sample(s: &mut Suite) -> Verdict {
    let asp = mean(SEEDS.map(|k| s.desk[&("asp".to_string(), k)].1));
    let beta2 = s.beta_std[&2];
    Verdict::new(
        beta2 < 0.5 * asp,
        format!("std pbsp(2) {beta2:.2} vs asp {asp:.2} (ratio {:.3})", beta2 / asp),
    )
}

fn staleness_audit(s: &mut Suite) -> Verdict {
    // Probabilistic SSP runs under both placements join the SSP and BSP runs already written.
    for seed in SEEDS {
        for placement in [StatePlacement::Auto, StatePlacement::Centralised] {
            let cfg = SimConfig {
                state_placement: placement,
                ..desk(BarrierPolicy::pssp(Staleness::Bounded(4), 2), seed)
            };
            let tag = if placement == StatePlacement::Auto { "auto" } else { "centralised" };
            run_and_write(&cfg, &s.root.join("pssp").join(format!("{}-{tag}", cfg.run_id())));
        }
    }
    let out = Command::new(env!("CARGO_BIN_EXE_barrierlab"))
        .arg("audit")
        .arg(&s.root)
        .output()
        .expect("audit runs");
    let stdout = String::from_utf8_lossy(&out.stdout);
    let last = stdout.lines().last().unwrap_or("").to_string();
    Verdict::new(out.status.success(), format!("audit exit {:?}: {last}", out.status.code()))
}

fn rows(task: &LinearTask, node: NodeId) -> (DMatrix<f64>, DVector<f64>) {
    let d = task.local_dataset(node);
    (
        DMatrix::from_row_iterator(d.len(), d.dim(), d.rows().flat_map(|(x, _)| x.iter().copied())),
        DVector::from_iterator(d.len(), d.rows().map(|(_, y)| y)),
    )
}

fn half_mse(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> f64 {
    (x * w - y).norm_squared() / (2.0 * y.len() as f64)
}

fn sgd_correctness(_: &mut Suite) -> Verdict {
    // Full-batch steps with unit learning rate: the update is minus the gradient of the
    // local half-MSE, which is differentiated numerically.
    let mut probe = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    for k in 0..100u64 {
        let dim = probe.gen_range(1..12);
        let samples = probe.gen_range(1..20);
        let spec = SgdSpec {
            learning_rate: 1.0,
            batch_size: samples,
            samples_per_node: samples,
            ..Default::default()
        };
        let task = LinearTask::new(dim, spec, k);
        let node = NodeId(probe.gen_range(0..50));
        let (x, y) = rows(&task, node);
        let w: Vec<f64> = (0..dim).map(|_| probe.gen_range(-3.0..3.0)).collect();
        let update = workload::sgd_gradient_step(
            &ModelState::from_params(w.clone()),
            &task,
            &LocalData::for_node(&task, node, true),
            node,
            k,
            &mut ChaCha8Rng::seed_from_u64(k),
        )
        .unwrap();
        let h = 1e-5;
        for j in 0..dim {
            let at = |delta: f64| {
                let mut v = DVector::from_column_slice(&w);
                v[j] += delta;
                half_mse(&x, &y, &v)
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let analytic = -update.delta[j];
            worst = worst.max((fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-8));
        }
    }

    let cfg = SimConfig {
        num_nodes: 50,
        duration: 40.0,
        model_dim: 100,
        policy: BarrierPolicy::bsp(),
        sgd: SgdSpec { samples_per_node: 200, ..Default::default() },
        master_seed: 1,
        ..Default::default()
    };
    let trace = barrierlab::run(&cfg).unwrap();
    let task = LinearTask::new(cfg.model_dim, cfg.sgd.clone(), cfg.master_seed);
    let blocks: Vec<_> = (0..50).map(|n| rows(&task, NodeId(n))).collect();
    let x = DMatrix::from_fn(10_000, 100, |r, c| blocks[r / 200].0[(r % 200, c)]);
    let y = DVector::from_fn(10_000, |r, _| blocks[r / 200].1[r % 200]);
    let w_star = (x.transpose() * &x).cholesky().unwrap().solve(&(x.transpose() * &y));
    let optimum = half_mse(&x, &y, &w_star);
    let reached = half_mse(&x, &y, &DVector::from_column_slice(trace.final_model.params()));
    let excess = reached / optimum - 1.0;
    Verdict::new(
        worst <= 1e-6 && excess <= 0.05,
        format!(
            "max relative gradient error {worst:.2e} over 100 probes; final loss {reached:.6} vs optimum {optimum:.6} ({:+.2}%)",
            100.0 * excess
        ),
    )
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn aggregation(_: &mut Suite) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let len = rng.gen_range(0..25);
        let centre = rng.gen_range(-100.0..100.0);
        (0..len).map(|_| centre + rng.gen_range(-5.0..5.0)).collect()
    };
    let nodes: Vec<Vec<f64>> = (0..10_000).map(|_| draw(&mut rng)).collect();
    let merged = tree_merge(&nodes.iter().map(|v| local_summary(v)).collect::<Vec<_>>());
    let pooled = local_summary(&nodes.concat());
    let tree_ok = merged.count == pooled.count
        && close(merged.mean, pooled.mean, 1e-9)
        && close(merged.variance(), pooled.variance(), 1e-9);

    let same = |a: SummaryStat, b: SummaryStat| a.count == b.count && close(a.mean, b.mean, 1e-12) && close(a.m2, b.m2, 1e-12);
    let mut algebra_ok = 0;
    for _ in 0..1000 {
        let (a, b, c) = (local_summary(&draw(&mut rng)), local_summary(&draw(&mut rng)), local_summary(&draw(&mut rng)));
        let comm = same(merge_summaries(a, b), merge_summaries(b, a));
        let assoc = same(merge_summaries(merge_summaries(a, b), c), merge_summaries(a, merge_summaries(b, c)));
        algebra_ok += usize::from(comm && assoc);
    }
    Verdict::new(
        tree_ok && algebra_ok == 1000,
        format!(
            "tree merge of 10000 summaries: mean {:.12} vs {:.12}; {algebra_ok}/1000 triples commute and associate",
            merged.mean, pooled.mean
        ),
    )
}

fn files_under(dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>, root: &Path) {
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            files_under(&p, out, root);
        } else {
            out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
        }
    }
}

fn determinism(s: &mut Suite) -> Verdict {
    // Re-run a cross-section of the suite into a fresh tree and compare every file.
    let again = tempfile::tempdir().unwrap();
    let rerun = |sub: &str, cfg: &SimConfig, name: String| {
        run_and_write(cfg, &again.path().join(sub).join(&name));
        (sub.to_string(), name)
    };
    let mut dirs = Vec::new();
    for seed in [1, 2] {
        for p in [BarrierPolicy::bsp(), BarrierPolicy::ssp(Staleness::Bounded(4)), BarrierPolicy::asp()] {
            let cfg = desk(p, seed);
            dirs.push(rerun("desk", &cfg, cfg.run_id()));
        }
        let cfg = desk(BarrierPolicy::pbsp(2), seed);
        dirs.push(rerun("sweep", &cfg, cfg.run_id()));
    }
    for seed in 1..=5 {
        let cfg = churn_config(seed);
        dirs.push(rerun("churn", &cfg, cfg.run_id()));
    }
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for (sub, name) in dirs {
        let (mut a, mut b) = (BTreeMap::new(), BTreeMap::new());
        files_under(&s.root.join(&sub).join(&name), &mut a, &s.root);
        files_under(&again.path().join(&sub).join(&name), &mut b, again.path());
        compared += a.len();
        if a.is_empty() || a != b {
            mismatched.push(format!("{sub}/{name}"));
        }
    }
    Verdict::new(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("{compared} files byte-identical across repeated runs")
        } else {
            format!("mismatch in {}", mismatched.join(", "))
        },
    )
}

fn churn_config(seed: u64) -> SimConfig {
    SimConfig {
        num_nodes: 100,
        duration: 10.0,
        policy: BarrierPolicy::bsp(),
        churn: ChurnSpec { leave_rate: 0.05, join_rate: 0.0 },
        master_seed: seed,
        ..Default::default()
    }
}

fn churn_liveness(s: &mut Suite) -> Verdict {
    let mut violations = 0;
    let mut departed = 0;
    let mut min_progress = u64::MAX;
    for seed in 1..=5 {
        let cfg = churn_config(seed);
        let trace = run_and_write(&cfg, &s.root.join("churn").join(cfg.run_id()));
        violations += trace.checks.liveness_violations;
        departed += trace.per_node_final.iter().filter(|f| !f.live).count();
        min_progress = min_progress.min(progress_stats(&trace).min);
    }
    Verdict::new(
        violations == 0 && departed > 0 && min_progress > 0,
        format!("{departed} departures over 5 runs, {violations} liveness violations, slowest live node at step {min_progress}"),
    )
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let mut suite = Suite {
        root: tmp.path().to_path_buf(),
        desk: BTreeMap::new(),
        bsp_cdfs: BTreeMap::new(),
        beta_std: BTreeMap::new(),
    };
    type Criterion = fn(&mut Suite) -> Verdict;
    let criteria: [(u8, &str, Option<Duration>, Criterion); 9] = [
        (1, "degeneracy identities", Some(Duration::from_secs(30)), degeneracy),
        (2, "ordering bsp < ssp < asp", Some(Duration::from_secs(120)), ordering),
        (3, "sample-size sweep shape", Some(Duration::from_secs(300)), sample_sweep),
        (4, "small-sample effectiveness", None, small_sample),
        (5, "staleness and lockstep audit", None, staleness_audit),
        (6, "sgd correctness", Some(Duration::from_secs(60)), sgd_correctness),
        (7, "aggregation exactness", None, aggregation),
        (9, "churn liveness", None, churn_liveness),
        (8, "determinism", None, determinism),
    ];
    let mut failures = 0;
    let mut lines = Vec::new();
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let mut v = check(&mut suite);
        let elapsed = start.elapsed();
        if let Some(limit) = limit {
            if elapsed > limit {
                v.pass = false;
                v.detail.push_str(&format!("; exceeded {} s limit", limit.as_secs()));
            }
        }
        let line = format!(
            "{} [{id}] {name}: {} ({:.1} s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64()
        );
        println!("{line}");
        lines.push((id, line));
        failures += usize::from(!v.pass);
    }
    lines.sort_by_key(|l| l.0);
    println!("\nsummary");
    for (_, line) in &lines {
        println!("{line}");
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
