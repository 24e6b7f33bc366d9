//! Subcommand definitions and their execution.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tcem::harness::{simulate_path, Experiment};
use tcem::models::{
    by_name, probe_assumption_1, probe_assumption_2, probe_assumption_3, probe_assumption_4,
    AssumptionReport, MODEL_NAMES,
};
use tcem::rng::{substream, tag};
use tcem::subordinator::{validate_laplace, SubordinatorSpec};

use crate::config::{resolve, CliError, ConfigArgs};
use crate::output::{
    emit_csv, emit_laplace_csv, emit_moments_csv, emit_path_csv, manifest_path, LaplaceRow,
    RunManifest,
};

#[derive(Debug, Parser)]
#[command(
    name = "tcem",
    version,
    about = "Truncated Euler-Maruyama for SDEs driven by an inverse subordinator"
)]
pub struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, env = "TCEM_THREADS", global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coupled strong-error experiment and log-log regression.
    Converge(ExperimentArgs),
    /// Sup-norm moments of truncated and plain EM across step sizes.
    Moments(ExperimentArgs),
    /// Screen a model against the structural assumptions (JSON).
    Probe(ProbeArgs),
    /// Laplace-transform check of subordinator increments.
    Laplace(LaplaceArgs),
    /// Dump one trajectory.
    Path(PathArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output file; stdout when absent. A manifest is written next to it.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ProbeArgs {
    #[arg(long, default_value = "example1")]
    pub model: String,
    #[arg(long, default_value_t = 10_000)]
    pub n_probes: usize,
    #[arg(long, default_value_t = 3.0)]
    pub radius: f64,
    /// Moment exponent of the monotonicity condition.
    #[arg(long, default_value_t = 3.0)]
    pub p: f64,
    /// Moment exponent of the Khasminskii condition.
    #[arg(long, default_value_t = 3.0)]
    pub q: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct LaplaceArgs {
    /// Comma-separated stability indices.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.7, 0.9])]
    pub beta: Vec<f64>,
    /// Comma-separated step sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 1.0])]
    pub delta: Vec<f64>,
    /// Comma-separated transform arguments.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
    pub r: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PathArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Step size of the simulated path.
    #[arg(long, default_value_t = 1e-2)]
    pub delta: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn runtime(e: io::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Write through `emit` to the requested file (plus manifest) or stdout.
fn deliver<C: Serialize, R: Serialize>(
    output: &OutputArgs,
    emit: impl FnOnce(&mut dyn Write) -> io::Result<()>,
    manifest: impl FnOnce() -> RunManifest<C, R>,
) -> Result<(), CliError> {
    match &output.out {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            emit(&mut w).map_err(runtime)?;
            w.flush().map_err(runtime)?;
            manifest().write(&manifest_path(path)).map_err(runtime)
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            match emit(&mut lock) {
                // a closed pipe (`tcem path | head`) is not a failure
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
                other => other.map_err(runtime),
            }
        }
    }
}

pub fn run(command: &Command) -> Result<(), CliError> {
    let started = Instant::now();
    let elapsed = move || started.elapsed().as_secs_f64();
    match command {
        Command::Converge(args) => {
            let cfg = resolve(&args.config)?;
            let report = Experiment::new(cfg.clone())?.run()?;
            deliver(
                &args.output,
                |w| emit_csv(&report, w),
                || RunManifest::new("converge", cfg.clone(), elapsed(), &report),
            )
        }
        Command::Moments(args) => {
            let cfg = resolve(&args.config)?;
            let table = Experiment::new(cfg.clone())?.moments()?;
            deliver(
                &args.output,
                |w| emit_moments_csv(&table, w),
                || RunManifest::new("moments", cfg.clone(), elapsed(), &table),
            )
        }
        Command::Probe(args) => {
            let reports = probe(args)?;
            #[derive(Serialize)]
            struct ProbeOutput<'a> {
                model: &'a str,
                n_probes: usize,
                ball_radius: f64,
                p: f64,
                q: f64,
                seed: u64,
                reports: &'a [AssumptionReport],
            }
            let body = ProbeOutput {
                model: &args.model,
                n_probes: args.n_probes,
                ball_radius: args.radius,
                p: args.p,
                q: args.q,
                seed: args.seed,
                reports: &reports,
            };
            let json = serde_json::to_string_pretty(&body)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            deliver(
                &args.output,
                |w| writeln!(w, "{json}"),
                || RunManifest::new("probe", &body, elapsed(), ()),
            )
        }
        Command::Laplace(args) => {
            let rows = laplace(args)?;
            deliver(
                &args.output,
                |w| emit_laplace_csv(&rows, w),
                || {
                    let cfg = serde_json::json!({
                        "beta": args.beta, "delta": args.delta, "r": args.r,
                        "samples": args.samples, "seed": args.seed,
                    });
                    RunManifest::new("laplace", cfg, elapsed(), &rows)
                },
            )
        }
        Command::Path(args) => {
            let cfg = resolve(&args.config)?;
            let model = by_name(&cfg.model)?;
            let record = simulate_path(
                model.as_ref(),
                &cfg.subordinator,
                cfg.epsilon,
                args.delta,
                cfg.horizon,
                cfg.scheme,
                cfg.seed,
            )?;
            deliver(
                &args.output,
                |w| emit_path_csv(&record, w),
                || {
                    let cfg = serde_json::json!({ "experiment": cfg, "delta": args.delta });
                    RunManifest::new("path", cfg, elapsed(), ())
                },
            )
        }
    }
}

/// The four assumption reports, each from its own stream.
pub fn probe(args: &ProbeArgs) -> Result<Vec<AssumptionReport>, CliError> {
    if !MODEL_NAMES.contains(&args.model.as_str()) {
        return Err(CliError::Usage {
            key: "model".into(),
            message: format!(
                "unknown model `{}`; expected one of {}",
                args.model,
                MODEL_NAMES.join(", ")
            ),
        });
    }
    let model = by_name(&args.model)?;
    let m = model.as_ref();
    let rng = |i| substream(args.seed, tag::PROBE, i);
    Ok(vec![
        probe_assumption_1(m, args.n_probes, args.radius, &mut rng(1))?,
        probe_assumption_2(m, args.p, args.n_probes, args.radius, &mut rng(2))?,
        probe_assumption_3(m, args.q, args.n_probes, args.radius, &mut rng(3))?,
        probe_assumption_4(m, args.n_probes, &mut rng(4))?,
    ])
}

/// One row per `(β, Δ, r)` cell, each from its own stream.
pub fn laplace(args: &LaplaceArgs) -> Result<Vec<LaplaceRow>, CliError> {
    let mut rows = Vec::new();
    for &beta in &args.beta {
        let spec = SubordinatorSpec::stable(beta)?;
        for &delta in &args.delta {
            for &r in &args.r {
                let mut rng = substream(args.seed, tag::LAPLACE, rows.len() as u64);
                let check = validate_laplace(&spec, delta, r, args.samples, &mut rng)?;
                rows.push(LaplaceRow {
                    beta,
                    delta,
                    r,
                    n_samples: args.samples,
                    check,
                });
            }
        }
    }
    Ok(rows)
}

/// Install the global thread pool if a size was requested.
pub fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage {
                key: "threads".into(),
                message: "must be at least 1".into(),
            });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}
