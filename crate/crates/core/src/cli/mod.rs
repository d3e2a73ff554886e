//! Command-line front end.
//!
//! Exit codes: 0 success or campaign pass, 1 campaign fail, 2 usage or
//! configuration error, 3 algorithmic halt of a simulation.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::bounds::{
    middle_term_is_zero, min_unlabeled_for_rate, min_unlabeled_self_consistent, ratt_bound_relaxed,
    ratt_bound_theorem1, supervised_ceiling, BoundReport, ConvergenceSpec, EmpiricalErrors,
    ProblemSpec, SplitSpec, DEFAULT_COMPLEXITY_CAP,
};
use crate::engine::{run_algorithm1, run_algorithm2, HaltReason, Trajectory};
use crate::harness::{CampaignContext, CampaignRegistry, HarnessError, REPORT_SCHEMA_VERSION};
use crate::learners::save_model;

use config::Algorithm;
pub use config::RunConfig;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_CAMPAIGN_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_HALT: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("run failed: {0}")]
    Engine(#[from] crate::engine::EngineError),
}

#[derive(Debug, Parser)]
#[command(
    name = "plcert",
    version,
    about = "Risk bounds and simulations for pseudo-label self-training"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormulaArg {
    Theorem1,
    Relaxed,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a risk bound from empirical errors on clean and randomized data.
    Bound {
        #[arg(long, value_enum)]
        formula: FormulaArg,
        #[arg(long)]
        k: usize,
        /// Size of the randomized subset.
        #[arg(long)]
        m: u64,
        /// Size of the clean subset.
        #[arg(long)]
        n: u64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        e_clean: f64,
        #[arg(long)]
        e_random: f64,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Smallest unlabeled-set size that guarantees contraction at rate p.
    Complexity {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta_tilde: f64,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        c1: f64,
        #[arg(long)]
        c2: f64,
        /// Use this supervised ceiling instead of solving for a self-consistent N.
        #[arg(long)]
        e_d_star: Option<f64>,
        /// Upper end of the self-consistent search.
        #[arg(long, default_value_t = DEFAULT_COMPLEXITY_CAP)]
        cap: u64,
    },
    /// Run a self-training loop and write its trajectory.
    Simulate { config: PathBuf },
    /// Run a verification campaign and write its JSON report.
    Verify {
        config: PathBuf,
        /// Worker threads; defaults to the number of available processors.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    match cmd {
        Command::Bound {
            formula,
            k,
            m,
            n,
            delta,
            e_clean,
            e_random,
            json,
        } => cmd_bound(formula, k, m, n, delta, e_clean, e_random, json, out),
        Command::Complexity {
            k,
            delta,
            epsilon,
            delta_tilde,
            p,
            c1,
            c2,
            e_d_star,
            cap,
        } => {
            let spec = ProblemSpec::new(k, delta, epsilon, delta_tilde)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let conv =
                ConvergenceSpec::new(p, c1, c2).map_err(|e| CliError::Usage(e.to_string()))?;
            cmd_complexity(&spec, &conv, e_d_star, cap, out)
        }
        Command::Simulate { config } => cmd_simulate(&config, out, err),
        Command::Verify { config, jobs } => cmd_verify(&config, jobs, out),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn stdout_err(source: std::io::Error) -> CliError {
    CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_bound(
    formula: FormulaArg,
    k: usize,
    m: u64,
    n: u64,
    delta: f64,
    e_clean: f64,
    e_random: f64,
    json: bool,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let usage = |e: crate::bounds::BoundsError| CliError::Usage(e.to_string());
    // epsilon and delta_tilde do not enter either bound formula.
    let spec = ProblemSpec::new(k, delta, 0.0, 0.5).map_err(usage)?;
    let split = SplitSpec::new(m, n).map_err(usage)?;
    let errs = EmpiricalErrors::new(e_clean, e_random).map_err(usage)?;
    let report: BoundReport = match formula {
        FormulaArg::Theorem1 => ratt_bound_theorem1(&spec, &split, &errs),
        FormulaArg::Relaxed => ratt_bound_relaxed(&spec, &split, &errs).map_err(usage)?,
    };
    if json {
        let value = serde_json::json!({
            "inputs": { "k": k, "m": m, "n": n, "delta": delta, "e_clean": e_clean, "e_random": e_random },
            "report": report,
        });
        writeln!(
            out,
            "{}",
            serde_json::to_string_pretty(&value).expect("json")
        )
        .map_err(stdout_err)?;
        return Ok(EXIT_OK);
    }
    let term_random = if middle_term_is_zero(k, e_random) {
        0.0
    } else {
        report.term_random
    };
    let rows: [(&str, String); 13] = [
        ("formula", report.formula.to_string()),
        ("k", k.to_string()),
        ("m", m.to_string()),
        ("n", n.to_string()),
        ("delta", delta.to_string()),
        ("e_clean", e_clean.to_string()),
        ("e_random", e_random.to_string()),
        ("term_clean", report.term_clean.to_string()),
        ("term_random", term_random.to_string()),
        ("term_concentration", report.term_concentration.to_string()),
        ("constant_used", report.constant_used.to_string()),
        ("total", report.total.to_string()),
        ("vacuous", report.vacuous.to_string()),
    ];
    for (key, value) in rows {
        writeln!(out, "{key:<20}{value}").map_err(stdout_err)?;
    }
    Ok(EXIT_OK)
}

fn cmd_complexity(
    spec: &ProblemSpec,
    conv: &ConvergenceSpec,
    e_d_star: Option<f64>,
    cap: u64,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let usage = |e: crate::bounds::BoundsError| CliError::Usage(e.to_string());
    let (mode, n, e) = match e_d_star {
        Some(e) => (
            "explicit",
            min_unlabeled_for_rate(spec, conv, e).map_err(usage)?,
            e,
        ),
        None => {
            let n = min_unlabeled_self_consistent(spec, conv, cap).map_err(usage)?;
            (
                "self_consistent",
                n,
                supervised_ceiling(spec, n).map_err(usage)?,
            )
        }
    };
    let rows: [(&str, String); 11] = [
        ("k", spec.k().to_string()),
        ("delta", spec.delta().to_string()),
        ("epsilon", spec.epsilon().to_string()),
        ("delta_tilde", spec.delta_tilde().to_string()),
        ("p", conv.p().to_string()),
        ("c1", conv.c1().to_string()),
        ("c2", conv.c2().to_string()),
        ("mode", mode.to_string()),
        (
            "cap",
            if e_d_star.is_some() {
                "-".to_string()
            } else {
                cap.to_string()
            },
        ),
        ("e_d_star", e.to_string()),
        ("n_required", n.to_string()),
    ];
    for (key, value) in rows {
        writeln!(out, "{key:<14}{value}").map_err(stdout_err)?;
    }
    Ok(EXIT_OK)
}

fn write_artifact(path: Option<&Path>, bytes: &[u8], out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(io_err(p)),
        None => out.write_all(bytes).map_err(stdout_err),
    }
}

fn config_echo(cfg: &RunConfig) -> Vec<String> {
    let mut lines = vec![format!("plcert {TOOL_VERSION}")];
    lines.extend(
        cfg.to_toml()
            .lines()
            .filter(|l| !l.is_empty())
            .map(str::to_string),
    );
    lines
}

fn halt_str(h: HaltReason) -> &'static str {
    match h {
        HaltReason::Completed => "completed",
        HaltReason::InfeasibleGamma => "infeasible_gamma",
        HaltReason::MZero => "m_zero",
    }
}

fn cmd_simulate(path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = RunConfig::load(path)?;
    let engine = cfg.engine()?;
    let algorithm = cfg.engine_section()?.algorithm;
    let traj: Trajectory = match algorithm {
        Algorithm::One => run_algorithm1(&engine)?,
        Algorithm::Two => run_algorithm2(&engine)?,
    };
    let mut preamble = config_echo(&cfg);
    preamble.push(format!("halt_reason {}", halt_str(traj.halt_reason)));
    preamble.push(format!(
        "bound_applications {} per_application_delta {}",
        traj.bound_applications, traj.per_application_delta
    ));
    let mut csv = Vec::new();
    traj.write_csv(&mut csv, &preamble).map_err(stdout_err)?;
    write_artifact(cfg.output.trajectory.as_deref(), &csv, out)?;

    if let Some(model_path) = &cfg.output.model {
        let mut buf = Vec::new();
        for line in config_echo(&cfg) {
            writeln!(buf, "# {line}").expect("vec write");
        }
        save_model(traj.final_model.as_ref(), &mut buf).expect("vec write");
        fs::write(model_path, buf).map_err(io_err(model_path))?;
    }
    let _ = writeln!(err, "halt_reason: {}", halt_str(traj.halt_reason));
    Ok(match traj.halt_reason {
        HaltReason::Completed => EXIT_OK,
        HaltReason::InfeasibleGamma | HaltReason::MZero => EXIT_HALT,
    })
}

fn cmd_verify(path: &Path, jobs: Option<usize>, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = RunConfig::load(path)?;
    let (name, params) = cfg.campaign()?;
    let campaign = CampaignRegistry::builtin().build(&name, params)?;
    let needs_data = matches!(campaign.name(), "coverage" | "audit");
    let jobs = match jobs {
        Some(0) => return Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(j) => j,
        None => std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
    };
    let ctx = CampaignContext {
        spec: cfg.problem,
        distribution: match (&cfg.distribution, needs_data) {
            (Some(_), _) | (None, true) => cfg.distribution()?,
            (None, false) => {
                crate::datagen::DataDistribution::axis_aligned(cfg.problem.k(), 1, 1.0, 1.0)
                    .expect("placeholder distribution")
            }
        },
        learner: match (&cfg.learner, needs_data) {
            (Some(_), _) | (None, true) => cfg.learner()?,
            (None, false) => crate::learners::LearnerConfig::new("nearest_centroid"),
        },
        convergence: cfg.convergence,
        engine: if cfg.engine.is_some() {
            Some(cfg.engine()?)
        } else {
            None
        },
        seed: cfg.seed,
        pool: rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))?,
    };
    let outcome = campaign.run(&ctx)?;
    let envelope = serde_json::json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool_version": TOOL_VERSION,
        "campaign": outcome.name,
        "seed": cfg.seed,
        "jobs": jobs,
        "config": cfg,
        "pass": outcome.pass,
        "report": outcome.report,
    });
    let json = serde_json::to_string_pretty(&envelope).expect("json") + "\n";
    out.write_all(outcome.table.as_bytes())
        .map_err(stdout_err)?;
    write_artifact(cfg.output.report.as_deref(), json.as_bytes(), out)?;
    Ok(if outcome.pass {
        EXIT_OK
    } else {
        EXIT_CAMPAIGN_FAIL
    })
}
