//! Subcommands behind the `slsac` binary.

pub mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use slsac::checkpoint::Checkpoint;
use slsac::config::TrainConfig;
use slsac::env::make_env;
use slsac::metrics::JsonlSink;
use slsac::trainer::{ablation_grid, evaluate, AblationAxis, Agent, EvalResult, TrainSummary, Trainer};
use slsac::verify::{run_all, VerifyOptions, VerifyReport};
use slsac::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Number of trailing episodes summarized in run tables.
pub const TAIL_EPISODES: usize = 50;

#[derive(Debug, Parser)]
#[command(name = "slsac", version, about = "Risk-constrained actor-critic training with Langevin critics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat `section.key = value` config file.
    #[arg(long, short)]
    pub config: PathBuf,
    /// `key=value`, repeatable; applied after the file.
    #[arg(long = "override", short = 'o', value_name = "K=V")]
    pub overrides: Vec<String>,
    /// Run directory name under the output root (default: config file stem).
    #[arg(long)]
    pub run: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every configured seed.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Seeds run concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Deterministic rollouts of a saved checkpoint.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to `train.eval_episodes`.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Expand one ablation axis into its grid and train every cell.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// optimizer, epsilon, aggregation, m or cost_optimizer.
        #[arg(long)]
        axis: String,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Run the numerical bound checks.
    Verify {
        /// JSON report path (default: `<out>/verify_report.json`).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Aggregate metrics files into `<out>.svg` and `<out>.csv`.
    Plot {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Cost threshold line; read from a `config.cfg` next to the first
        /// metrics file when absent, else 25.
        #[arg(long)]
        beta: Option<f64>,
    },
}

/// Failure carrying the process exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NumericalAbort { .. } => EXIT_NUMERIC,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: msg.into(),
    }
}

/// Output root: `$SLSAC_OUT_DIR`, else `./runs`.
pub fn out_root() -> PathBuf {
    std::env::var_os("SLSAC_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn run_name(args: &ConfigArgs) -> String {
    args.run.clone().unwrap_or_else(|| {
        args.config
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into())
    })
}

fn load_config(args: &ConfigArgs) -> Result<TrainConfig, Failure> {
    if !args.config.is_file() {
        return Err(usage(format!("config file not found: {}", args.config.display())));
    }
    Ok(TrainConfig::load(&args.config, &args.overrides)?)
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    version: String,
    command: &'a str,
    seeds: &'a [u64],
    config: String,
    layout: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub summary: TrainSummary,
    pub eval: EvalResult,
    pub tail_cvar: Option<f64>,
    pub tail_mean_cost: Option<f64>,
}

fn write_manifest(dir: &Path, command: &str, cfg: &TrainConfig) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    let text = cfg.to_text();
    fs::write(dir.join("config.cfg"), &text)?;
    let m = Manifest {
        version: format!("slsac {}", env!("CARGO_PKG_VERSION")),
        command,
        seeds: &cfg.seeds,
        config: text,
        layout: cfg
            .seeds
            .iter()
            .map(|s| format!("seed_{s}/{{config.cfg,metrics.jsonl,checkpoint.bin,summary.json}}"))
            .collect(),
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&m).expect("manifest serializes"),
    )?;
    Ok(())
}

/// Trains, evaluates and checkpoints one seed under `dir/seed_<k>`.
pub fn run_seed(cfg: &TrainConfig, seed: u64, dir: &Path) -> Result<SeedResult, Failure> {
    let sdir = dir.join(format!("seed_{seed}"));
    fs::create_dir_all(&sdir)?;
    fs::write(sdir.join("config.cfg"), cfg.to_text())?;
    let mut sink = JsonlSink::create(&sdir.join("metrics.jsonl"))?;
    let mut tr = Trainer::new(cfg.clone(), seed)?;
    let summary = tr.train(&mut sink)?;
    sink.flush()?;
    tr.agent.to_checkpoint()?.save(&sdir.join("checkpoint.bin"))?;
    let eval = evaluate(&tr.agent.policy, &cfg.env, cfg.eval_episodes, seed)?;
    let res = SeedResult {
        seed,
        tail_cvar: summary.tail_cvar(TAIL_EPISODES, cfg.constraint_epsilon).ok(),
        tail_mean_cost: summary.tail_mean_cost(TAIL_EPISODES).ok(),
        summary,
        eval,
    };
    fs::write(
        sdir.join("summary.json"),
        serde_json::to_string_pretty(&res).expect("summary serializes"),
    )?;
    Ok(res)
}

/// Runs all seeds, with up to `parallel` seeds at a time.
pub fn run_seeds(cfg: &TrainConfig, dir: &Path, parallel: usize) -> Result<Vec<SeedResult>, Failure> {
    let seeds = cfg.seeds.clone();
    let workers = parallel.clamp(1, seeds.len().max(1));
    if workers == 1 {
        return seeds.iter().map(|&s| run_seed(cfg, s, dir)).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SeedResult, Failure>>>> =
        Mutex::new((0..seeds.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= seeds.len() {
                    break;
                }
                let r = run_seed(cfg, seeds[i], dir);
                results.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|r| r.expect("every seed ran"))
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn table_row(label: &str, res: &[SeedResult]) -> String {
    format!(
        "{label},{},{},{},{},{}",
        res.len(),
        mean(res.iter().map(|r| r.eval.mean_return)),
        mean(res.iter().map(|r| r.eval.mean_cost)),
        mean(res.iter().filter_map(|r| r.tail_cvar)),
        mean(res.iter().map(|r| r.summary.final_lambda)),
    )
}

const TABLE_HEADER: &str = "label,seeds,eval_return_mean,eval_cost_mean,tail_cost_cvar_mean,final_lambda_mean";

pub fn cmd_train(args: &ConfigArgs, parallel: usize) -> Result<(), Failure> {
    let cfg = load_config(args)?;
    let dir = out_root().join(run_name(args));
    write_manifest(&dir, "train", &cfg)?;
    let res = run_seeds(&cfg, &dir, parallel)?;
    let table = format!("{TABLE_HEADER}\n{}\n", table_row("train", &res));
    fs::write(dir.join("results.csv"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn cmd_eval(args: &ConfigArgs, checkpoint: &Path, episodes: Option<usize>, seed: u64) -> Result<(), Failure> {
    let cfg = load_config(args)?;
    if !checkpoint.is_file() {
        return Err(usage(format!("checkpoint not found: {}", checkpoint.display())));
    }
    let ck = Checkpoint::load(checkpoint)?;
    let env = make_env(&cfg.env);
    let mut agent = Agent::new(&cfg, env.obs_dim(), env.act_dim(), seed)?;
    agent.load_checkpoint(&ck)?;
    let res = evaluate(&agent.policy, &cfg.env, episodes.unwrap_or(cfg.eval_episodes), seed)?;
    println!("{}", serde_json::to_string(&res).expect("eval result serializes"));
    Ok(())
}

pub fn cmd_ablate(args: &ConfigArgs, axis: &str, parallel: usize) -> Result<(), Failure> {
    let axis: AblationAxis = axis.parse()?;
    load_config(args)?;
    let dir = out_root().join(run_name(args)).join(format!("ablate_{}", axis_name(axis)));
    let mut table = format!("{TABLE_HEADER}\n");
    for (label, kv) in ablation_grid(axis) {
        let mut overrides = args.overrides.clone();
        overrides.extend(kv);
        let cfg = TrainConfig::load(&args.config, &overrides)?;
        let cell = dir.join(&label);
        write_manifest(&cell, "ablate", &cfg)?;
        let res = run_seeds(&cfg, &cell, parallel)?;
        table.push_str(&table_row(&label, &res));
        table.push('\n');
    }
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("comparison.csv"), &table)?;
    print!("{table}");
    Ok(())
}

fn axis_name(a: AblationAxis) -> &'static str {
    match a {
        AblationAxis::Optimizer => "optimizer",
        AblationAxis::Epsilon => "epsilon",
        AblationAxis::Aggregation => "aggregation",
        AblationAxis::M => "m",
        AblationAxis::CostOptimizer => "cost_optimizer",
    }
}

#[derive(Debug, Serialize)]
struct VerifyFile<'a> {
    passed: bool,
    seed: u64,
    reports: &'a [VerifyReport],
}

pub fn cmd_verify(report: Option<&Path>, seed: u64, inject_fault: bool) -> Result<(), Failure> {
    let opts = VerifyOptions {
        seed,
        inject_fault,
        ..VerifyOptions::default()
    };
    let reports = run_all(&opts);
    let passed = reports.iter().all(|r| r.passed);
    println!("{:<22} {:>6} {:>8} {:>11} {:>14}", "check", "status", "cases", "violations", "worst_slack");
    for r in &reports {
        println!(
            "{:<22} {:>6} {:>8} {:>11} {:>14.6e}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.cases,
            r.violations,
            r.worst_slack
        );
    }
    let path = report
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out_root().join("verify_report.json"));
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let body = VerifyFile {
        passed,
        seed,
        reports: &reports,
    };
    fs::write(&path, serde_json::to_string_pretty(&body).expect("report serializes"))?;
    if passed {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFY,
            message: "one or more bound checks failed".into(),
        })
    }
}

/// `constraint.beta` from a config file, if present and parseable.
fn beta_from_config(path: &Path) -> Option<f64> {
    let text = fs::read_to_string(path).ok()?;
    text.lines().find_map(|l| {
        let (k, v) = l.split_once('=')?;
        (k.trim() == "constraint.beta").then(|| v.trim().parse().ok()).flatten()
    })
}

pub fn cmd_plot(metrics: &[PathBuf], out: &Path, beta: Option<f64>) -> Result<(), Failure> {
    let mut texts = Vec::with_capacity(metrics.len());
    for p in metrics {
        texts.push(
            fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?,
        );
    }
    let beta = beta
        .or_else(|| {
            metrics[0]
                .parent()
                .and_then(|d| beta_from_config(&d.join("config.cfg")))
        })
        .unwrap_or(25.0);
    let (points, skipped) = plot::aggregate(&texts);
    if skipped > 0 {
        log::warn!("skipped {skipped} malformed metrics line(s)");
        eprintln!("warning: skipped {skipped} malformed metrics line(s)");
    }
    let base = out.with_extension("");
    if let Some(parent) = base.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(base.with_extension("csv"), plot::to_csv(&points))?;
    fs::write(base.with_extension("svg"), plot::to_svg(&points, beta))?;
    Ok(())
}

/// Parses arguments and dispatches; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let res = match &cli.command {
        Command::Train { cfg, parallel } => cmd_train(cfg, *parallel),
        Command::Eval {
            cfg,
            checkpoint,
            episodes,
            seed,
        } => cmd_eval(cfg, checkpoint, *episodes, *seed),
        Command::Ablate { cfg, axis, parallel } => cmd_ablate(cfg, axis, *parallel),
        Command::Verify {
            report,
            seed,
            inject_fault,
        } => cmd_verify(report.as_deref(), *seed, *inject_fault),
        Command::Plot { metrics, out, beta } => cmd_plot(metrics, out, *beta),
    };
    match res {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
