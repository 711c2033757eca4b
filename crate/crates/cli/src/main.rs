mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use barrierlab::barrier::{BarrierMethod, InnerMethod, Staleness};
use barrierlab::export::{self, ComparisonRow};
use barrierlab::metrics::{self, SweepFamily};
use barrierlab::{BarrierPolicy, SimConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use toml::{Table, Value};

use settings::{Failure, EXIT_VIOLATIONS};

#[derive(Parser)]
#[command(name = "barrierlab", version, about = "Simulate barrier control methods for distributed SGD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation per seed and write its artifacts to <outdir>/<run id>/.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Vary one policy parameter over a list of values and seeds.
    Sweep {
        #[arg(long)]
        family: SweepFamily,
        /// Parameter values, e.g. `0,1,2,4` or `0..8`.
        #[arg(long, value_parser = parse_list)]
        params: List,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Five-policy comparison plus a pBSP sample-size sweep. Defaults to 1000 nodes, 40
    /// simulated seconds and 1000 parameters; --nodes and --duration scale it down.
    #[command(name = "reproduce-fig84")]
    ReproduceFig84 {
        /// Sample sizes for the pBSP sweep.
        #[arg(long, value_parser = parse_list, default_value = "0,1,2,4,8,16,32,64")]
        betas: List,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Check every run directory below DIR; exits 1 on any violation.
    Audit { dir: PathBuf },
}

#[derive(Copy, Clone, ValueEnum)]
enum PolicyName {
    Bsp,
    Asp,
    Ssp,
    Pbsp,
    Pssp,
    /// Probabilistic; the inner method comes from --inner (default bsp).
    Psp,
}

#[derive(Copy, Clone, ValueEnum)]
enum Inner {
    Bsp,
    Ssp,
}

#[derive(Copy, Clone, ValueEnum)]
enum Workload {
    Sgd,
    Aggregation,
}

#[derive(Copy, Clone, ValueEnum)]
enum Placement {
    Auto,
    Centralised,
    Distributed,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; keys mirror the run's meta.json config echo.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Dotted override applied after the file, e.g. `step_time.mean=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    policy: Option<PolicyName>,
    /// Integer or `unbounded`.
    #[arg(long)]
    staleness: Option<Staleness>,
    #[arg(long)]
    sample_size: Option<usize>,
    #[arg(long)]
    inner: Option<Inner>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    duration: Option<f64>,
    #[arg(long)]
    model_dim: Option<usize>,
    #[arg(long)]
    workload: Option<Workload>,
    /// Leave rate per node per second.
    #[arg(long, allow_negative_numbers = true)]
    churn_leave: Option<f64>,
    /// Join rate per node per second, scaled by the initial node count.
    #[arg(long, allow_negative_numbers = true)]
    churn_join: Option<f64>,
    #[arg(long)]
    placement: Option<Placement>,
    #[arg(long)]
    keep_events: bool,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Seeds, e.g. `1..10` (inclusive) or `1,5,9`.
    #[arg(long, value_parser = parse_list)]
    seeds: Option<List>,
    #[arg(long, env = "BARRIERLAB_OUTDIR", default_value = "out")]
    outdir: PathBuf,
}

#[derive(Clone, Debug)]
struct List(Vec<u64>);

fn parse_list(s: &str) -> Result<List, String> {
    settings::parse_u64_list(s).map(List)
}

impl OutputArgs {
    fn seeds(&self, cfg: &SimConfig) -> Vec<u64> {
        match (&self.seeds, self.seed) {
            (Some(s), _) => s.0.clone(),
            (None, Some(s)) => vec![s],
            (None, None) => vec![cfg.master_seed],
        }
    }
}

fn method_name(p: PolicyName, inner: Option<Inner>) -> Result<&'static str, Failure> {
    Ok(match (p, inner) {
        (PolicyName::Bsp, None) => "bsp",
        (PolicyName::Asp, None) => "asp",
        (PolicyName::Ssp, None) => "ssp",
        (PolicyName::Pbsp | PolicyName::Psp, None | Some(Inner::Bsp)) => "pbsp",
        (PolicyName::Pssp | PolicyName::Psp, None | Some(Inner::Ssp)) => "pssp",
        _ => {
            return Err(Failure::config(
                "invalid config: --inner must match a probabilistic --policy",
            ))
        }
    })
}

impl ConfigArgs {
    /// Merged config table: file, then `--set`, then flags.
    fn table(&self) -> Result<Table, Failure> {
        let mut t = match &self.config {
            Some(path) => settings::read_file(path)?,
            None => Table::new(),
        };
        for o in &self.overrides {
            settings::apply_override(&mut t, o)?;
        }
        let mut set = |key: &str, v: Value| settings::set_path(&mut t, key, v);
        if let Some(p) = self.policy {
            set("policy.method", Value::from(method_name(p, self.inner)?))?;
        }
        if let Some(s) = self.staleness {
            let v = match s {
                Staleness::Bounded(n) => Value::Integer(to_i64(n, "--staleness")?),
                Staleness::Unbounded => Value::from("unbounded"),
            };
            set("policy.staleness", v)?;
        }
        if let Some(b) = self.sample_size {
            set("policy.sample_size", Value::Integer(to_i64(b as u64, "--sample-size")?))?;
        }
        if let Some(n) = self.nodes {
            set("num_nodes", Value::Integer(to_i64(n as u64, "--nodes")?))?;
        }
        if let Some(d) = self.duration {
            set("duration", Value::Float(d))?;
        }
        if let Some(d) = self.model_dim {
            set("model_dim", Value::Integer(to_i64(d as u64, "--model-dim")?))?;
        }
        if let Some(w) = self.workload {
            set("workload", Value::from(match w {
                Workload::Sgd => "sgd",
                Workload::Aggregation => "aggregation",
            }))?;
        }
        if let Some(r) = self.churn_leave {
            set("churn.leave_rate", Value::Float(r))?;
        }
        if let Some(r) = self.churn_join {
            set("churn.join_rate", Value::Float(r))?;
        }
        if let Some(p) = self.placement {
            set("state_placement", Value::from(match p {
                Placement::Auto => "auto",
                Placement::Centralised => "centralised",
                Placement::Distributed => "distributed",
            }))?;
        }
        if self.keep_events {
            set("keep_events", Value::Boolean(true))?;
        }
        Ok(t)
    }

    fn load(&self) -> Result<SimConfig, Failure> {
        let mut cfg = settings::build(self.table()?)?;
        if let Some(inner) = self.inner {
            if self.policy.is_none() {
                let inner = match inner {
                    Inner::Bsp => InnerMethod::Bsp,
                    Inner::Ssp => InnerMethod::Ssp,
                };
                if !cfg.policy.method.is_probabilistic() {
                    return Err(Failure::config(format!(
                        "invalid config: --inner applies to probabilistic policies, not {}",
                        cfg.policy.method
                    )));
                }
                cfg.policy.method = BarrierMethod::Probabilistic(inner);
            }
        }
        Ok(cfg)
    }
}

fn to_i64(v: u64, flag: &str) -> Result<i64, Failure> {
    i64::try_from(v).map_err(|_| Failure::config(format!("{flag} is too large")))
}

fn run_one(cfg: &SimConfig, dir: &Path) -> Result<barrierlab::RunTrace, Failure> {
    let trace = barrierlab::run(cfg)?;
    export::write_run(dir, cfg, &trace).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
    Ok(trace)
}

fn report(cfg: &SimConfig, trace: &barrierlab::RunTrace, dir: &Path) {
    let s = metrics::progress_stats(trace);
    println!(
        "{}  nodes {}  mean {:.2}  std {:.2}  min {}  max {}  -> {}",
        cfg.run_id(),
        s.nodes,
        s.mean,
        s.std,
        s.min,
        s.max,
        dir.display()
    );
}

fn cmd_run(config: &ConfigArgs, output: &OutputArgs) -> Result<(), Failure> {
    let base = config.load()?;
    for seed in output.seeds(&base) {
        let cfg = SimConfig { master_seed: seed, ..base.clone() };
        let dir = output.outdir.join(cfg.run_id());
        let trace = run_one(&cfg, &dir)?;
        report(&cfg, &trace, &dir);
    }
    Ok(())
}

fn sweep_dir(outdir: &Path, base: &SimConfig, family: SweepFamily) -> PathBuf {
    outdir.join(format!("sweep-{family}-n{}", base.num_nodes))
}

fn cmd_sweep(family: SweepFamily, params: &[u64], config: &ConfigArgs, output: &OutputArgs) -> Result<(), Failure> {
    let base = config.load()?;
    for &p in params {
        metrics::sweep_config(&base, family, p, base.master_seed).validate()?;
    }
    let seeds = output.seeds(&base);
    let rows = metrics::sweep(&base, family, params, &seeds)?;
    let dir = sweep_dir(&output.outdir, &base, family);
    export::write_sweep(&dir, &base, family, params, &seeds, &rows)
        .map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
    for &p in params {
        let cells: Vec<_> = rows.iter().filter(|r| r.param == p).collect();
        let k = cells.len() as f64;
        println!(
            "{} {p:>4}  mean {:.2}  std {:.2}",
            family.parameter_name(),
            cells.iter().map(|r| r.stats.mean).sum::<f64>() / k,
            cells.iter().map(|r| r.stats.std).sum::<f64>() / k,
        );
    }
    println!("-> {}", dir.display());
    Ok(())
}

/// Learning rate that keeps synchronous SGD stable as the population grows: summing N
/// updates from one snapshot multiplies the effective step by N.
fn scaled_learning_rate(base_rate: f64, num_nodes: usize) -> f64 {
    base_rate * (100.0 / num_nodes as f64).min(1.0)
}

fn cmd_fig84(betas: &[u64], config: &ConfigArgs, output: &OutputArgs) -> Result<(), Failure> {
    if config.policy.is_some() || config.inner.is_some() {
        return Err(Failure::config("invalid config: reproduce-fig84 fixes the policies; drop --policy/--inner"));
    }
    let table = config.table()?;
    let mut base = config.load()?;
    if !settings::has_path(&table, "sgd.learning_rate") {
        base.sgd.learning_rate = scaled_learning_rate(base.sgd.learning_rate, base.num_nodes);
    }
    let s = base.policy.staleness;
    let template = BarrierPolicy { method: BarrierMethod::Bsp, ..base.policy.clone() };
    let policies = [
        BarrierPolicy::bsp(),
        BarrierPolicy::ssp(s),
        BarrierPolicy { method: BarrierMethod::Probabilistic(InnerMethod::Bsp), ..template.clone() },
        BarrierPolicy { method: BarrierMethod::Probabilistic(InnerMethod::Ssp), ..template },
        BarrierPolicy::asp(),
    ];
    let root = output.outdir.join(format!("fig84-n{}", base.num_nodes));
    let mut rows = Vec::new();
    for seed in output.seeds(&base) {
        let mut bsp_cdf: Option<Vec<(u64, f64)>> = None;
        for policy in &policies {
            let cfg = SimConfig { policy: policy.clone(), master_seed: seed, ..base.clone() };
            let dir = root.join("runs").join(cfg.run_id());
            let trace = run_one(&cfg, &dir)?;
            report(&cfg, &trace, &dir);
            let cdf = metrics::progress_cdf(&trace);
            let distance = bsp_cdf.as_ref().map(|b| metrics::cdf_sup_distance(&cdf, b));
            if policy.method == BarrierMethod::Bsp {
                bsp_cdf = Some(cdf);
            }
            rows.push(ComparisonRow {
                policy: policy.label(cfg.num_nodes),
                seed,
                stats: metrics::progress_stats(&trace),
                cdf_distance_to_bsp: distance,
            });
        }
    }
    let summary = root.join("comparison.csv");
    export::write_comparison(&summary, &rows).map_err(|e| Failure::io(format!("{}: {e}", summary.display())))?;
    println!("-> {}", summary.display());

    let seeds = output.seeds(&base);
    let sweep_rows = metrics::sweep(&base, SweepFamily::Pbsp, betas, &seeds)?;
    let dir = sweep_dir(&root, &base, SweepFamily::Pbsp);
    export::write_sweep(&dir, &base, SweepFamily::Pbsp, betas, &seeds, &sweep_rows)
        .map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
    println!("-> {}", dir.display());
    Ok(())
}

fn cmd_audit(dir: &Path) -> Result<(), Failure> {
    let report = export::audit_dir(dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
    for f in &report.findings {
        println!("VIOLATION {}: {}", f.run.display(), f.message);
    }
    if report.runs_checked == 0 {
        return Err(Failure { code: EXIT_VIOLATIONS, message: format!("no run directories under {}", dir.display()) });
    }
    println!("checked {} runs, {} findings", report.runs_checked, report.findings.len());
    if report.passed() {
        Ok(())
    } else {
        Err(Failure { code: EXIT_VIOLATIONS, message: "audit failed".into() })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, output } => cmd_run(config, output),
        Command::Sweep { family, params, config, output } => cmd_sweep(*family, &params.0, config, output),
        Command::ReproduceFig84 { betas, config, output } => cmd_fig84(&betas.0, config, output),
        Command::Audit { dir } => cmd_audit(dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
