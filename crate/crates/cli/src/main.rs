//! `pipewright` command line.
//!
//! Exit codes: 0 success, 1 the run or bench produced no valid result,
//! 2 usage or configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pipewright::error::Error;
use pipewright::harness::config::{self, parse_override, RunConfig};
use pipewright::harness::{cmd_bench, cmd_report, cmd_run, cmd_split, SplitOptions};
use serde_json::Value;

#[derive(Parser, Debug)]
#[command(name = "pipewright", version, about = "Contract-verified ML pipeline synthesis")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra `key=value` override (`section.key` for nested keys). Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    show_config: bool,
    #[command(subcommand)]
    cmd: Option<Cmd>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Build a pipeline for one task directory.
    Run {
        task: PathBuf,
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: RunArgs,
    },
    /// Split a labeled table into a task with a sealed answer key.
    Split {
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        description: Option<PathBuf>,
    },
    /// Run and grade a list of split tasks.
    Bench {
        /// Task directories produced by `split`.
        tasks: Vec<PathBuf>,
        /// File with one task directory per line.
        #[arg(long)]
        task_list: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Tasks run at once.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// JSON thresholds per task (`median`, `bronze`, `silver`, `gold`).
        #[arg(long)]
        thresholds: Option<PathBuf>,
        #[command(flatten)]
        opts: RunArgs,
    },
    /// Recompute bench aggregates from a bench directory.
    Report { bench_dir: PathBuf },
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    #[arg(long)]
    debug_budget: Option<u32>,
    /// Comma-separated subset of traditional, pretrained, custom_neural.
    #[arg(long, value_delimiter = ',')]
    tracks: Option<Vec<String>>,
    /// best, voting, averaging or stacking.
    #[arg(long)]
    aggregate: Option<String>,
    #[arg(long)]
    strip_description: bool,
    /// Seconds for the whole run.
    #[arg(long)]
    time_budget: Option<f64>,
    /// scripted or http.
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long)]
    interpreter: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// External runner replacing the built-in launcher.
    #[arg(long)]
    shim: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(Vec<String>, Value)> {
        let mut out: Vec<(&str, Value)> = Vec::new();
        let path = |p: &Path| Value::String(p.display().to_string());
        if let Some(v) = self.debug_budget {
            out.push(("debug_budget", v.into()));
        }
        if let Some(v) = &self.tracks {
            out.push(("tracks", Value::Array(v.iter().map(|s| Value::String(s.trim().to_string())).collect())));
        }
        if let Some(v) = &self.aggregate {
            out.push(("aggregate", Value::String(v.clone())));
        }
        if self.strip_description {
            out.push(("strip_description", true.into()));
        }
        if let Some(v) = self.time_budget {
            out.push(("time_budget", v.into()));
        }
        if let Some(v) = &self.provider {
            out.push(("provider", Value::String(v.clone())));
        }
        if let Some(v) = &self.fixtures {
            out.push(("fixtures", path(v)));
        }
        if let Some(v) = &self.interpreter {
            out.push(("interpreter", Value::String(v.clone())));
        }
        if let Some(v) = self.seed {
            out.push(("seed", v.into()));
        }
        if let Some(v) = &self.catalog {
            out.push(("catalog", path(v)));
        }
        if let Some(v) = &self.shim {
            out.push(("shim", path(v)));
        }
        out.into_iter().map(|(k, v)| (vec![k.to_string()], v)).collect()
    }
}

fn resolve(cli: &Cli, opts: Option<&RunArgs>) -> Result<RunConfig, Error> {
    let defaults = serde_json::to_value(RunConfig::default())?;
    let mut overrides = Vec::new();
    for s in &cli.set {
        overrides.push(parse_override(&defaults, s)?);
    }
    if let Some(o) = opts {
        overrides.extend(o.overrides());
    }
    config::resolve(cli.config.as_deref(), &config::process_env(), &overrides)
}

fn read_task_list(path: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

fn real_main(cli: Cli) -> Result<u8> {
    let run_opts = match &cli.cmd {
        Some(Cmd::Run { opts, .. }) | Some(Cmd::Bench { opts, .. }) => Some(opts),
        _ => None,
    };
    if cli.show_config {
        let cfg = resolve(&cli, run_opts)?;
        print!("{}", cfg.to_toml());
        return Ok(0);
    }
    let Some(cmd) = &cli.cmd else {
        return Err(Error::Usage("a subcommand is required (run, split, bench, report)".into()).into());
    };
    match cmd {
        Cmd::Run { task, out, opts } => {
            let cfg = resolve(&cli, Some(opts))?;
            let o = cmd_run(task, &cfg, out)?;
            let r = &o.report;
            let line = serde_json::json!({
                "status": r.status,
                "failure": r.failure,
                "chosen": r.chosen,
                "validation_score": r.validation_score,
                "report": o.layout.report(),
            });
            println!("{line}");
            Ok(o.exit_code() as u8)
        }
        Cmd::Split { dataset, out, ratio, seed, target, id, description } => {
            let opts = SplitOptions {
                ratio: *ratio,
                seed: *seed,
                target: target.clone(),
                id_column: id.clone(),
                description: description.clone(),
            };
            let m = cmd_split(dataset, &opts, out)?;
            for w in &m.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{}",
                serde_json::json!({"train": m.train_ids.len(), "test": m.test_ids.len(), "strategy": m.strategy})
            );
            Ok(0)
        }
        Cmd::Bench { tasks, task_list, out, parallel, thresholds, opts } => {
            let cfg = resolve(&cli, Some(opts))?;
            let mut all = tasks.clone();
            if let Some(p) = task_list {
                all.extend(read_task_list(p)?);
            }
            let report = cmd_bench(&all, &cfg, out, *parallel, thresholds.as_deref())?;
            print!("{}", pipewright::harness::bench::table_csv(&report)?);
            Ok(if report.aggregate.pct_valid > 0.0 { 0 } else { 1 })
        }
        Cmd::Report { bench_dir } => {
            let report = cmd_report(bench_dir)?;
            print!("{}", pipewright::harness::bench::table_csv(&report)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let usage = e.downcast_ref::<Error>().is_some_and(|e| e.code() == "USAGE");
            let code = e.downcast_ref::<Error>().map(Error::code).unwrap_or("ERROR");
            eprintln!("error: {e:#}");
            println!("{}", serde_json::json!({"status": "error", "failure": {"code": code, "message": format!("{e:#}")}}));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
