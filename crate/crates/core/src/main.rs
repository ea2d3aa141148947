#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use nlfrag::bounds::{classify_regime, existence_hypotheses, gronwall_envelope, nonexistence_hypotheses, Regime};
use nlfrag::diagnostics::{
    c1_bound_check, mass_budget_check, moment_identity_residual, nonexistence_growth_check, shattering_study,
    tail_monotonicity_check, weighted_distance,
};
use nlfrag::integrate::run;
use nlfrag::output::{bounds_for, emit_outputs, read_run_dir};
use nlfrag::{Error, SimConfig};

/// Relative residual accepted for the moment identity in `verify`.
const IDENTITY_TOLERANCE: f64 = 0.05;

#[derive(Parser)]
#[command(name = "nlfrag", version, about = "Collision-induced fragmentation solver and bound calculator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write moments, snapshots and a manifest.
    Simulate {
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print every explicit constant and time bound as JSON.
    Bounds { config: PathBuf },
    /// Print the parameter regime and the hypothesis checklist as JSON.
    Regime { config: PathBuf },
    /// Run the applicable checks on a run directory.
    Verify { run_dir: PathBuf },
    /// Weighted distance between two runs on the same grid.
    Distance { run_a: PathBuf, run_b: PathBuf },
    /// Dust fraction at t_end for several values of grid.x_min.
    ShatterStudy {
        config: PathBuf,
        /// Comma-separated list of x_min values (at least three).
        #[arg(long, value_delimiter = ',', required = true)]
        xmins: Vec<f64>,
    },
}

enum Failure {
    Error(Error),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let s = serde_json::to_string_pretty(value).map_err(|e| Error::Input(e.to_string()))?;
    println!("{s}");
    Ok(())
}

fn simulate(config: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = SimConfig::from_path(config)?;
    let output = run(&cfg)?;
    let report = bounds_for(&cfg, &output.grid, &output.snapshots[0], &cfg.snapshot_times())?;
    let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
    let hash = emit_outputs(&output, &cfg, &report, &dir)?;
    print_json(&json!({
        "output_dir": dir.display().to_string(),
        "snapshots": output.snapshots.len(),
        "final_dust_mass": output.final_state().dust_mass,
        "content_hash": hash,
    }))
}

fn bounds(config: &Path) -> Result<(), Failure> {
    let cfg = SimConfig::from_path(config)?;
    let grid = cfg.build_grid()?;
    let state0 = cfg.init.discretize(&grid)?;
    let report = bounds_for(&cfg, &grid, &state0, &cfg.snapshot_times())?;
    print_json(&report)
}

fn regime(config: &Path) -> Result<(), Failure> {
    let cfg = SimConfig::from_path(config)?;
    print_json(&json!({
        "regime": classify_regime(&cfg.kernel, &cfg.law),
        "existence_hypotheses": existence_hypotheses(&cfg.kernel, &cfg.law),
        "nonexistence_hypotheses": nonexistence_hypotheses(&cfg.kernel, &cfg.law),
    }))
}

fn verify(dir: &Path) -> Result<(), Failure> {
    let rd = read_run_dir(dir)?;
    let (cfg, out) = (&rd.config, &rd.run);
    let k0 = cfg.law.k0();
    let report = bounds_for(cfg, &out.grid, &out.snapshots[0], &out.times())?;
    let mut checks = Vec::new();
    let mut all = true;
    let mut push = |name: String, pass: bool, detail: serde_json::Value| {
        all &= pass;
        checks.push(json!({ "check": name, "pass": pass, "detail": detail }));
    };

    let budget = mass_budget_check(out);
    push("mass_budget".into(), budget.holds, to_value(&budget));
    for k in [1.0, 1.0 + k0] {
        let tail = tail_monotonicity_check(out, k);
        push(format!("tail_monotonicity_k{k}"), tail.holds, to_value(&tail));
    }
    if out.snapshots.len() >= 3 {
        for &k in &out.moment_orders {
            let id = moment_identity_residual(out, &cfg.kernel, &cfg.law, k)?;
            let rel = id.relative();
            push(
                format!("moment_identity_k{k}"),
                rel <= IDENTITY_TOLERANCE,
                json!({ "relative_residual": rel, "tolerance": IDENTITY_TOLERANCE }),
            );
        }
    }
    match report.regime {
        Regime::GlobalExistence | Regime::LocalExistence => {
            let e = report.existence.as_ref().expect("existence regime has constants");
            let horizon = out.times().into_iter().filter(|&t| t < e.t_k0).fold(0.0, f64::max);
            let c1 = c1_bound_check(out, &report, k0, horizon)?;
            push("c1_bound".into(), c1.holds, to_value(&c1));
        }
        Regime::NonExistence => {
            let g = nonexistence_growth_check(out, &report, &cfg.kernel, &cfg.law, k0)?;
            push("nonexistence_growth".into(), g.holds, to_value(&g));
        }
        Regime::Uncovered => {}
    }
    print_json(&json!({ "run_dir": dir.display().to_string(), "regime": report.regime, "pass": all, "checks": checks }))?;
    if all {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn distance(a: &Path, b: &Path) -> Result<(), Failure> {
    let ra = read_run_dir(a)?;
    let rb = read_run_dir(b)?;
    if ra.run.grid != rb.run.grid {
        return Err(Error::Input("the two runs use different grids".into()).into());
    }
    let (ta, tb) = (ra.run.times(), rb.run.times());
    if ta != tb {
        return Err(Error::Input("the two runs use different snapshot times".into()).into());
    }
    let k0 = ra.config.law.k0();
    let grid = &ra.run.grid;
    let dist = ra
        .run
        .snapshots
        .iter()
        .zip(&rb.run.snapshots)
        .map(|(x, y)| weighted_distance(x, y, grid, k0))
        .collect::<nlfrag::Result<Vec<f64>>>()?;
    let high = 1.0 + k0 + ra.config.kernel.lambda2();
    let sum: Vec<_> = ra
        .run
        .snapshots
        .iter()
        .zip(&rb.run.snapshots)
        .map(|(x, y)| nlfrag::State::from_contents(x.contents.iter().zip(&y.contents).map(|(p, q)| p + q).collect()))
        .collect();
    let m_k0: Vec<f64> = sum.iter().map(|s| grid.moment(s, k0)).collect();
    let m_high: Vec<f64> = sum.iter().map(|s| grid.moment(s, high)).collect();
    let envelope = gronwall_envelope(&ra.config.law, &ta, &m_k0, &m_high, dist[0])?;
    let within = dist.iter().zip(&envelope).all(|(d, e)| *d <= *e * (1.0 + 1e-12));
    print_json(&json!({
        "times": ta,
        "distance": dist,
        "gronwall_envelope": envelope,
        "within_envelope": within,
    }))?;
    if within {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn shatter(config: &Path, xmins: &[f64]) -> Result<(), Failure> {
    let cfg = SimConfig::from_path(config)?;
    let study = shattering_study(&cfg, xmins)?;
    print_json(&study)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { config, out } => simulate(config, out.clone()),
        Command::Bounds { config } => bounds(config),
        Command::Regime { config } => regime(config),
        Command::Verify { run_dir } => verify(run_dir),
        Command::Distance { run_a, run_b } => distance(run_a, run_b),
        Command::ShatterStudy { config, xmins } => shatter(config, xmins),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(4),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                ref e if e.is_numerical() => ExitCode::from(3),
                _ => ExitCode::from(1),
            }
        }
    }
}
