use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mimo_sim::config::{Command, ExperimentSpec, Profile};
use mimo_sim::error::{io_err, Result, SimError};
use mimo_sim::experiment::run_experiment;
use mimo_sim::output::{emit_results, per_user_cdf, write_cdf, write_timing, write_trajectories, Format};
use mimo_sim::validate::run_suite;

#[derive(Parser)]
#[command(name = "mimo-sim", version, about = "Multi-cell massive MIMO pilot assignment and power control simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Estimator and deterministic-equivalent checks against Monte Carlo.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Multiplier on the Monte Carlo sample counts of the checks.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Sum SE per cell of the pilot assignment schemes over a sweep.
    Sweep(Common),
    /// Power control schemes on a fixed pilot assignment.
    Power(Common),
    /// Pilot assignment schemes under several combiners.
    PaCompare(Common),
}

#[derive(Args)]
struct Common {
    /// Partial JSON experiment spec merged over the profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn spec_for(cmd: Command, c: &Common) -> Result<ExperimentSpec> {
    let mut spec = match &c.config {
        Some(path) => ExperimentSpec::load(c.profile, cmd, path)?,
        None => ExperimentSpec::profile(c.profile, cmd),
    };
    if let Some(seed) = c.seed {
        spec.seed = seed;
    }
    spec.normalize();
    spec.validate()?;
    Ok(spec)
}

fn run_experiment_cmd(cmd: Command, c: &Common) -> Result<()> {
    let spec = spec_for(cmd, c)?;
    let out = run_experiment(&spec)?;
    let dir = &c.out;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    std::fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&spec)? + "\n").map_err(io_err(dir))?;
    emit_results(&out.records, &dir.join("results.csv"), Format::Csv)?;
    emit_results(&out.records, &dir.join("results.json"), Format::Json)?;
    if !out.records.is_empty() {
        write_cdf(&per_user_cdf(&out.records, spec.cdf_points)?, &dir.join("cdf.csv"))?;
    }
    write_trajectories(&out.trajectories, &dir.join("trajectories.csv"))?;
    write_timing(&out.records, &dir.join("timing.json"))?;
    for r in &out.records {
        println!(
            "{}={:<8} {:<28} {:<8} {:<12} sum SE/cell {:8.3} ± {:.3}",
            r.sweep_axis, r.sweep_value, r.pa, r.combiner, r.power, r.sum_se_per_cell, r.sum_se_std_err
        );
    }
    Ok(())
}

fn validate_cmd(c: &Common, scale: f64) -> Result<bool> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(SimError::Config(format!("scale {scale} must be positive")));
    }
    let seed = match &c.config {
        Some(_) => spec_for(Command::Validate, c)?.seed,
        None => c.seed.unwrap_or(1),
    };
    let checks = run_suite(seed, scale)?;
    let dir: &Path = &c.out;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("validate.json");
    std::fs::write(&path, serde_json::to_string_pretty(&checks)? + "\n").map_err(io_err(&path))?;
    for ch in &checks {
        let verdict = if ch.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {:<36} {:.3e} (<= {:.1e})", ch.name, ch.value, ch.threshold);
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.cmd {
        Cmd::Validate { common, .. } | Cmd::Sweep(common) | Cmd::Power(common) | Cmd::PaCompare(common) => common,
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.cmd {
        Cmd::Validate { common, scale } => validate_cmd(common, *scale),
        Cmd::Sweep(c) => run_experiment_cmd(Command::Sweep, c).map(|_| true),
        Cmd::Power(c) => run_experiment_cmd(Command::Power, c).map(|_| true),
        Cmd::PaCompare(c) => run_experiment_cmd(Command::PaCompare, c).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
