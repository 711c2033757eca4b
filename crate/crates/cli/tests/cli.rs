use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use barrierlab::SimConfig;

fn barrierlab(args: &[&str], outdir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_barrierlab"))
        .args(args)
        .env("BARRIERLAB_OUTDIR", outdir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], outdir: &Path) -> String {
    let out = barrierlab(args, outdir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn repeated_runs_write_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["run", "--policy", "asp", "--nodes", "10", "--duration", "1", "--seed", "42", "--keep-events"];
    ok(&args, a.path());
    ok(&args, b.path());
    let (fa, fb) = (files(&a.path().join("asp-n10-seed42")), files(&b.path().join("asp-n10-seed42")));
    assert!(fa.iter().any(|(n, _)| n == "events.csv"));
    assert_eq!(fa, fb);
}

#[test]
fn zero_staleness_ssp_matches_bsp() {
    let tmp = tempfile::tempdir().unwrap();
    let common = ["--nodes", "40", "--duration", "3", "--model-dim", "8", "--seed", "7"];
    ok(&[&["run", "--policy", "ssp", "--staleness", "0"][..], &common].concat(), tmp.path());
    ok(&[&["run", "--policy", "bsp"][..], &common].concat(), tmp.path());
    let ssp = fs::read(tmp.path().join("ssp-s0-n40-seed7/progress.csv")).unwrap();
    let bsp = fs::read(tmp.path().join("bsp-n40-seed7/progress.csv")).unwrap();
    assert_eq!(ssp, bsp);
}

#[test]
fn seed_ranges_produce_one_directory_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = ok(&["run", "--policy", "pssp", "--sample-size", "2", "--nodes", "12", "--duration", "1", "--seeds", "3..5"], tmp.path());
    assert_eq!(stdout.lines().count(), 3);
    for seed in 3..=5 {
        assert!(tmp.path().join(format!("pssp-s4-b2-n12-seed{seed}/meta.json")).is_file());
    }
}

#[test]
fn meta_config_echo_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("exp.toml");
    fs::write(
        &file,
        "num_nodes = 15\nduration = 2.0\nmodel_dim = 3\n\n[policy]\nmethod = \"pssp\"\nstaleness = \"unbounded\"\nsample_size = 3\n\n[churn]\nleave_rate = 0.05\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    ok(&["run", "-c", file.to_str().unwrap(), "--set", "step_time.mean=0.1", "--seed", "9"], &out);
    let dir = fs::read_dir(&out).unwrap().next().unwrap().unwrap().path();
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("meta.json")).unwrap()).unwrap();
    let echoed: SimConfig = serde_json::from_value(meta["config"].clone()).unwrap();
    assert_eq!(echoed.num_nodes, 15);
    assert_eq!(echoed.step_time.mean, 0.1);
    assert_eq!(echoed.churn.leave_rate, 0.05);
    assert_eq!(echoed.master_seed, 9);
    assert_eq!(meta["config_fingerprint"].as_str().unwrap(), echoed.fingerprint());

    // Re-running from the echoed config reproduces the run.
    let again = tmp.path().join("again.json");
    fs::write(&again, serde_json::to_string(&meta["config"]).unwrap()).unwrap();
    let trace = barrierlab::run(&serde_json::from_slice(&fs::read(&again).unwrap()).unwrap()).unwrap();
    assert_eq!(trace.config_fingerprint, echoed.fingerprint());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| barrierlab(args, tmp.path()).status.code();
    assert_eq!(code(&["run", "--set", "step_time.meen=1"]), Some(2));
    assert_eq!(code(&["run", "--duration", "-1"]), Some(2));
    assert_eq!(code(&["run", "--policy", "bsp", "--placement", "distributed"]), Some(2));
    assert_eq!(code(&["run", "--policy", "bsp", "--inner", "ssp"]), Some(2));
    assert_eq!(code(&["run", "--no-such-flag"]), Some(2));
    assert_eq!(code(&["run", "-c", "/definitely/not/here.toml"]), Some(3));

    let bad = barrierlab(&["run", "--set", "churn.leave_rate=-2"], tmp.path());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("churn.leave_rate"));

    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = barrierlab(&["run", "--nodes", "2", "--duration", "0.5", "--outdir", blocker.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn audit_flags_tampered_runs() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["run", "--policy", "ssp", "--staleness", "1", "--nodes", "20", "--duration", "2", "--seed", "1"], tmp.path());
    ok(&["run", "--policy", "bsp", "--nodes", "20", "--duration", "2", "--seed", "1"], tmp.path());
    assert!(barrierlab(&["audit", tmp.path().to_str().unwrap()], tmp.path()).status.success());

    let audit = tmp.path().join("ssp-s1-n20-seed1/audit.csv");
    let text = fs::read_to_string(&audit).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // node,admissions,max_lag,max_global_lag,bound,violations
    let mut cells: Vec<String> = lines[1].split(',').map(String::from).collect();
    cells[2] = "9".into();
    lines[1] = cells.join(",");
    fs::write(&audit, lines.join("\n") + "\n").unwrap();
    let out = barrierlab(&["audit", tmp.path().to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(1));

    let empty = tempfile::tempdir().unwrap();
    assert_eq!(barrierlab(&["audit", empty.path().to_str().unwrap()], tmp.path()).status.code(), Some(1));
}

#[test]
fn sweep_and_reproduction_layouts() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["sweep", "--family", "pbsp", "--params", "0,1,2", "--nodes", "15", "--duration", "1", "--model-dim", "4", "--seeds", "1..2"], tmp.path());
    let sweep = fs::read_to_string(tmp.path().join("sweep-pbsp-n15/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 3 * 2);

    ok(&["reproduce-fig84", "--nodes", "15", "--duration", "1", "--model-dim", "4", "--seeds", "1..2", "--betas", "0,2"], tmp.path());
    let root = tmp.path().join("fig84-n15");
    let comparison = fs::read_to_string(root.join("comparison.csv")).unwrap();
    assert_eq!(comparison.lines().count(), 1 + 5 * 2);
    assert_eq!(fs::read_dir(root.join("runs")).unwrap().count(), 10);
    let sweep = fs::read_to_string(root.join("sweep-pbsp-n15/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 2 * 2);
    assert!(barrierlab(&["audit", root.to_str().unwrap()], tmp.path()).status.success());

    let refused = barrierlab(&["reproduce-fig84", "--policy", "asp"], tmp.path());
    assert_eq!(refused.status.code(), Some(2));
}
