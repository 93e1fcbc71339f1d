//! `bubbletree` — configuration-driven driver for the numerical experiments.
//!
//! Exit codes: `0` all gating checks passed, `1` a check failed or a
//! pipeline errored, `2` bad arguments, configuration or environment.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use config::RunConfig;
use output::{Artifacts, Check, ManifestInput, Outcome};

#[derive(Parser, Debug)]
#[command(
    name = "bubbletree",
    version,
    about = "Bubble-tree numerics: identities, scale hierarchies, spectral data, correctors, propagators and wave simulations"
)]
struct Cli {
    /// JSON configuration file (strict: unknown keys are rejected).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (default: `out/<command>`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form integrals, spectral scalars, Wronskian and profile table.
    Identities,
    /// Scale hierarchy in logarithmic variables.
    Modulation,
    /// Scattering coefficient and spectral density table.
    Spectral,
    /// Elliptic corrector convergence, growth suppression and source moments.
    Corrector,
    /// Discrete-mode and continuous-spectrum propagators.
    Propagators,
    /// Radial wave simulation (evolution or collapse diagnostic).
    Simulate {
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long, value_name = "CHECKPOINT")]
        resume: Option<PathBuf>,
    },
    /// Run the configured list of independent runs on a worker pool.
    Sweep,
    /// Run every check; `--fast` restricts to the cheap closed-form tier.
    VerifyAll {
        #[arg(long)]
        fast: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Identities => "identities",
            Command::Modulation => "modulation",
            Command::Spectral => "spectral",
            Command::Corrector => "corrector",
            Command::Propagators => "propagators",
            Command::Simulate { .. } => "simulate",
            Command::Sweep => "sweep",
            Command::VerifyAll { .. } => "verify-all",
        }
    }
}

/// Failures that map to exit code 2.
#[derive(Debug)]
struct UsageError(anyhow::Error);

fn threads() -> Result<usize> {
    match std::env::var("BUBBLETREE_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("BUBBLETREE_THREADS={v:?} is not a positive integer"))?;
            if n == 0 {
                bail!("BUBBLETREE_THREADS must be at least 1");
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("configuring the worker pool")?;
            Ok(n)
        }
        Err(_) => Ok(rayon::current_num_threads()),
    }
}

/// One pipeline run in `dir`; returns whether all gating checks passed and
/// the report lines.
fn run_single(
    command: &str,
    cfg: &RunConfig,
    dir: &Path,
    resume: Option<&Path>,
    argv: &[String],
    threads: usize,
) -> std::result::Result<(bool, Vec<String>, Outcome), UsageError> {
    let art = Artifacts::new(dir).map_err(UsageError)?;
    let start = Instant::now();
    let result = match command {
        "identities" => commands::identities(cfg, art),
        "modulation" => commands::modulation(cfg, art),
        "spectral" => commands::spectral(cfg, art),
        "corrector" => commands::corrector(cfg, art),
        "propagators" => commands::propagators(cfg, art),
        "simulate" => commands::simulate(cfg, art, resume),
        other => return Err(UsageError(anyhow::anyhow!("unknown command {other}"))),
    };
    let (outcome, error) = match result {
        Ok(o) => (o, None),
        Err(e) => {
            let art = Artifacts::new(dir).map_err(UsageError)?;
            let o = Outcome {
                checks: vec![Check::holds(format!("{command} pipeline completed"), false)],
                artifacts: art,
                results: Value::Null,
            };
            (o, Some(format!("{e:#}")))
        }
    };
    finish(command, cfg, outcome, error, argv, threads, start)
}

fn finish(
    command: &str,
    cfg: &RunConfig,
    outcome: Outcome,
    error: Option<String>,
    argv: &[String],
    threads: usize,
    start: Instant,
) -> std::result::Result<(bool, Vec<String>, Outcome), UsageError> {
    let mut lines: Vec<String> = outcome.checks.iter().map(Check::line).collect();
    if let Some(e) = &error {
        lines.push(format!("error: {e}"));
    }
    let config = serde_json::to_value(cfg).map_err(|e| UsageError(e.into()))?;
    output::write_manifest(
        &outcome,
        &ManifestInput {
            command,
            argv,
            config: &config,
            threads,
            wall: start.elapsed(),
            error: error.clone(),
        },
    )
    .map_err(UsageError)?;
    let ok = error.is_none() && outcome.passed();
    lines.push(format!(
        "{command}: {} ({:.2} s) → {}",
        if ok {
            "all gating checks passed"
        } else {
            "FAILED"
        },
        start.elapsed().as_secs_f64(),
        outcome.artifacts.path("manifest.json").display()
    ));
    Ok((ok, lines, outcome))
}

/// Register a sub-run's files (including its manifest) in the parent.
fn adopt(parent: &mut Artifacts, sub: &str, outcome: &Outcome) -> Result<()> {
    for f in &outcome.artifacts.files {
        parent.register(&format!("{sub}/{}", f.path))?;
    }
    parent.register(&format!("{sub}/manifest.json"))
}

fn sweep(
    cfg: &RunConfig,
    dir: &Path,
    argv: &[String],
    threads: usize,
) -> std::result::Result<(bool, Vec<String>), UsageError> {
    let start = Instant::now();
    if cfg.sweep.runs.is_empty() {
        return Err(UsageError(anyhow::anyhow!("sweep.runs is empty")));
    }
    let mut art = Artifacts::new(dir).map_err(UsageError)?;
    let results: Vec<_> = cfg
        .sweep
        .runs
        .par_iter()
        .map(|run| {
            run_single(
                &run.command,
                &run.config,
                &dir.join(&run.name),
                None,
                argv,
                threads,
            )
        })
        .collect();
    let mut lines = Vec::new();
    let mut checks = Vec::new();
    for (run, res) in cfg.sweep.runs.iter().zip(results) {
        let (ok, sub_lines, outcome) = res?;
        lines.push(format!("── {} ({})", run.name, run.command));
        lines.extend(sub_lines);
        adopt(&mut art, &run.name, &outcome).map_err(UsageError)?;
        checks.push(Check::holds(
            format!("run {} ({})", run.name, run.command),
            ok,
        ));
    }
    let outcome = Outcome {
        checks,
        artifacts: art,
        results: json!({ "runs": cfg.sweep.runs.len() }),
    };
    let (ok, tail, _) = finish("sweep", cfg, outcome, None, argv, threads, start)?;
    lines.extend(tail);
    Ok((ok, lines))
}

fn verify_all(
    cfg: &RunConfig,
    dir: &Path,
    fast: bool,
    argv: &[String],
    threads: usize,
) -> std::result::Result<(bool, Vec<String>), UsageError> {
    let start = Instant::now();
    let mut art = Artifacts::new(dir).map_err(UsageError)?;
    let mut lines = Vec::new();
    let mut checks = match commands::trivial_checks() {
        Ok(c) => c,
        Err(e) => vec![Check::holds(format!("closed-form tier: {e:#}"), false)],
    };
    if !fast {
        for command in config::SWEEPABLE {
            let (_, sub_lines, outcome) =
                run_single(command, cfg, &dir.join(command), None, argv, threads)?;
            // Keep only the per-command summary; the checks are listed below.
            lines.extend(sub_lines.last().cloned());
            adopt(&mut art, command, &outcome).map_err(UsageError)?;
            checks.extend(outcome.checks.iter().map(|c| Check {
                name: format!("{command}: {}", c.name),
                ..c.clone()
            }));
        }
    }
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| {
            vec![
                c.name.clone(),
                output::num(c.value),
                c.target.clone(),
                c.pass.to_string(),
                c.gating.to_string(),
            ]
        })
        .collect();
    art.csv(
        "checks.csv",
        &output::header(&["check", "value", "target", "pass", "gating"]),
        &rows,
    )
    .map_err(UsageError)?;
    let outcome = Outcome {
        checks,
        artifacts: art,
        results: json!({ "fast": fast }),
    };
    let (ok, tail, _) = finish("verify-all", cfg, outcome, None, argv, threads, start)?;
    lines.extend(tail);
    Ok((ok, lines))
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let usage = |e: anyhow::Error| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    };
    let threads = match threads() {
        Ok(n) => n,
        Err(e) => return usage(e),
    };
    let cfg = match &cli.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => return usage(e),
        },
        None => RunConfig::default(),
    };
    let name = cli.command.name();
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(name));
    let result = match &cli.command {
        Command::Sweep => sweep(&cfg, &dir, &argv, threads),
        Command::VerifyAll { fast } => verify_all(&cfg, &dir, *fast, &argv, threads),
        Command::Simulate { resume } => {
            // An unreadable checkpoint is an argument error, not a failed run.
            if let Some(p) = resume {
                if let Err(e) = bubbletree::wavesim::read_checkpoint(p) {
                    return usage(e.into());
                }
            }
            run_single(name, &cfg, &dir, resume.as_deref(), &argv, threads)
                .map(|(ok, lines, _)| (ok, lines))
        }
        _ => run_single(name, &cfg, &dir, None, &argv, threads).map(|(ok, lines, _)| (ok, lines)),
    };
    match result {
        Ok((ok, lines)) => {
            for l in lines {
                println!("{l}");
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(UsageError(e)) => usage(e),
    }
}
