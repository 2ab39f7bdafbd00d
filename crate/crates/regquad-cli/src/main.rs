//! Command-line harness for regularized-quadratic experiments.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use regquad::bounds::{BoundEnvelope, BoundKind, BoundParams};
use regquad::instances::InstanceSpec;
use regquad::model::RegQuadProblem;
use regquad::solvers::{solve_stationary, SolverConfig};

use regquad_cli::config::{ExperimentConfig, MethodId, Overrides};
use regquad_cli::experiments;

#[derive(Parser)]
#[command(
    name = "regquad",
    about = "Experiment harness for composite quadratic minimization with power-norm regularization",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config file.
    Run {
        /// Path to the experiment config (JSON).
        config: PathBuf,
        /// Override the RNG seed (applies to config and instance).
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Override the solver iteration budget.
        #[arg(long)]
        max_iters: Option<usize>,
        /// Write the constructed instance to the output directory before solving.
        #[arg(long)]
        dump_instance: bool,
    },
    /// Solve a serialized instance with one method.
    Solve {
        /// Path to an instance JSON file.
        #[arg(long)]
        instance: PathBuf,
        /// Solver to apply.
        #[arg(long, value_enum)]
        method: MethodId,
        /// Iteration budget (first-order methods).
        #[arg(long, default_value_t = 1000)]
        max_iters: usize,
        /// Gradient-norm stopping tolerance.
        #[arg(long)]
        grad_tol: Option<f64>,
        /// Directory for the trace CSV / solution JSON (defaults to stdout summary only).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Generate an instance from a spec file and serialize it.
    Gen {
        /// Path to an instance spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// Output path for the instance JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a bound curve over an iteration range and write it as CSV.
    Bounds {
        /// Bound kind (e.g. upper-gd, lb-multi-res, lb-one-step-dist).
        #[arg(long)]
        kind: String,
        /// Bound parameters as a JSON object, e.g. '{"p":3,"s":1,"L":1,"mu":0,"r":0.5}'.
        #[arg(long)]
        params: String,
        /// Comma-separated iteration counts (default 1..=100).
        #[arg(long)]
        iters: Option<String>,
        /// Output CSV path (defaults to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    if let Err(err) = dispatch() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn dispatch() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, out_dir, max_iters, dump_instance } => {
            let bytes = std::fs::read(&config)
                .with_context(|| format!("reading config {}", config.display()))?;
            let mut experiment = ExperimentConfig::from_path(&config)?;
            experiment.apply(&Overrides { seed, out_dir, max_iters });
            experiment.validate()?;
            let report =
                experiments::run_experiment(&experiment, Some(&bytes), dump_instance)?;
            println!(
                "wrote {} outputs to {}",
                report.manifest["outputs"].as_object().map_or(0, |m| m.len()) + 1,
                report.out_dir.display()
            );
            if let Some(summary) = report.manifest.get("summary") {
                println!("summary: {summary}");
            }
            Ok(())
        }
        Command::Solve { instance, method, max_iters, grad_tol, out_dir } => {
            solve_command(&instance, method, max_iters, grad_tol, out_dir.as_deref())
        }
        Command::Gen { spec, out } => {
            let text = std::fs::read_to_string(&spec)
                .with_context(|| format!("reading spec {}", spec.display()))?;
            let spec: InstanceSpec = serde_json::from_str(&text).context("parsing instance spec")?;
            spec.validate()?;
            let problem = spec.build()?;
            std::fs::write(&out, problem.to_json()?)
                .with_context(|| format!("writing {}", out.display()))?;
            println!("wrote instance (dim {}) to {}", problem.dim(), out.display());
            Ok(())
        }
        Command::Bounds { kind, params, iters, out } => bounds_command(&kind, &params, iters, out),
    }
}

fn solve_command(
    instance: &std::path::Path,
    method: MethodId,
    max_iters: usize,
    grad_tol: Option<f64>,
    out_dir: Option<&std::path::Path>,
) -> Result<()> {
    let text = std::fs::read_to_string(instance)
        .with_context(|| format!("reading instance {}", instance.display()))?;
    let problem = RegQuadProblem::from_json(&text)?;

    if method == MethodId::Exact {
        let x = solve_stationary(&problem, 1e-12)?;
        let info = problem.first_order_at(&x);
        let stationarity = info.gradient.norm();
        println!(
            "exact solve: f* = {}, ||x*|| = {}, stationarity residual = {stationarity:e}",
            info.value,
            x.norm()
        );
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)?;
            let payload = serde_json::json!({
                "f_star": info.value,
                "norm": x.norm(),
                "stationarity_residual": stationarity,
                "x": x.as_slice(),
            });
            let path = dir.join("solution.json");
            std::fs::write(&path, serde_json::to_vec_pretty(&payload)?)?;
            println!("wrote {}", path.display());
        }
        return Ok(());
    }

    let solver_config = SolverConfig {
        max_iters,
        grad_tol,
        record_trace: false,
        ..SolverConfig::default()
    };
    let x_star = solve_stationary(&problem, 1e-12)?;
    let f_star = problem.first_order_at(&x_star).value;
    let mut trace =
        experiments::run_method(&problem, method, &solver_config, Some(x_star.norm()))?;
    trace.f_star = Some(f_star);
    let record = trace.final_record();
    println!(
        "{}: iter {} f_gap {:e} grad_norm {:e} status {:?}",
        method.as_str(),
        record.iter,
        record.f - f_star,
        record.grad_norm,
        trace.status
    );
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("trace_{}.csv", method.as_str()));
        let mut bytes = Vec::new();
        trace.write_csv(&mut bytes)?;
        std::fs::write(&path, bytes)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn bounds_command(
    kind: &str,
    params_json: &str,
    iters: Option<String>,
    out: Option<PathBuf>,
) -> Result<()> {
    let kind = BoundKind::parse(kind).map_err(|_| {
        anyhow!(
            "unknown bound kind '{kind}'; expected one of: {}",
            BoundKind::ALL.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", ")
        )
    })?;
    let raw: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(params_json).context("parsing --params as a JSON object")?;
    let mut params = BoundParams::default();
    for (key, value) in &raw {
        let number = || {
            value
                .as_f64()
                .ok_or_else(|| anyhow!("parameter '{key}' must be a number, got {value}"))
        };
        match key.as_str() {
            "p" => params.p = number()?,
            "s" => params.s = number()?,
            "mu" => params.mu = number()?,
            "L" | "l" => params.l = number()?,
            "r" => params.r = number()?,
            "m_star" | "M_star" => params.m_star = number()?,
            "m0" | "M0" => params.m0 = number()?,
            "f0" | "F0" => params.f0 = number()?,
            "simplified" => {
                params.simplified = value
                    .as_bool()
                    .ok_or_else(|| anyhow!("parameter 'simplified' must be a boolean"))?
            }
            other => bail!("unknown bound parameter '{other}'"),
        }
    }
    let iter_list: Vec<usize> = match iters {
        Some(text) => text
            .split(',')
            .map(|tok| tok.trim().parse::<usize>().context("parsing --iters entry"))
            .collect::<Result<_>>()?,
        None => (1..=100).collect(),
    };
    let envelope = BoundEnvelope::evaluate(kind, &params, &iter_list)?;
    match out {
        Some(path) => {
            let mut bytes = Vec::new();
            envelope.write_csv(&mut bytes)?;
            std::fs::write(&path, bytes)
                .with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            envelope.write_csv(&mut stdout)?;
        }
    }
    Ok(())
}
