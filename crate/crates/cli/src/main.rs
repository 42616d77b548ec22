use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gravcollapse::config::{emit, parse_config, RunConfig};
use gravcollapse::estimators::{
    collapse_time_estimate, coulomb_gravity_ratio, fifth_power_scaling_check, self_grav_energy,
};
use gravcollapse::output::{error_payload, execute, exit_code, init_workers, run_sweep, WORKERS_ENV};
use gravcollapse::{Error, UnitSystem};

#[derive(Parser)]
#[command(name = "gravcollapse", version, about = "Deterministic gravity-induced collapse simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its report, series and metadata.
    Run {
        config: PathBuf,
        /// Overrides `output.directory`.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Worker threads for ensembles.
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
    /// Run every point of the `[sweep]` table.
    Sweep {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
    /// Closed-form collapse-time and Coulomb/gravity estimates in SI units.
    Estimate {
        /// Mass in kg.
        #[arg(long)]
        mass: f64,
        /// Size in m.
        #[arg(long)]
        size: f64,
        #[arg(long)]
        epsilon: f64,
        /// Also evaluate a body of this size at the same density.
        #[arg(long)]
        scaled_size: Option<f64>,
    },
    /// Parse and validate a configuration without running it.
    Validate {
        config: PathBuf,
        /// Print the configuration with all defaults filled in.
        #[arg(long)]
        emit: bool,
    },
}

fn report_error(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    eprintln!("{}", error_payload(err));
    ExitCode::from(exit_code(err) as u8)
}

/// Any failure to obtain a configuration is a configuration error.
fn load(path: &Path, output: Option<PathBuf>) -> Result<RunConfig, Error> {
    let mut cfg = parse_config(path).map_err(|e| match e {
        Error::Io { .. } => Error::ConfigValidation(e.to_string()),
        other => other,
    })?;
    if let Some(dir) = output {
        cfg.output.directory = dir;
    }
    Ok(cfg)
}

fn estimate(mass: f64, size: f64, epsilon: f64, scaled_size: Option<f64>) -> Result<serde_json::Value, Error> {
    let si = UnitSystem::si();
    let tau = collapse_time_estimate(epsilon, mass, size, &si)?;
    let mut out = serde_json::json!({
        "epsilon": epsilon,
        "mass_kg": mass,
        "size_m": size,
        "self_energy_j": self_grav_energy(mass, size, &si)?,
        "collapse_time_s": tau,
        "coulomb_gravity_ratio": coulomb_gravity_ratio(&si)?,
    });
    if let Some(s) = scaled_size {
        let density = mass / size.powi(3);
        let check = fifth_power_scaling_check(density, &[size, s], epsilon, &si)?;
        out["scaled"] = serde_json::json!({
            "size_m": s,
            "mass_kg": check.points[1].mass,
            "collapse_time_s": check.points[1].collapse_time,
            "log_log_slope": check.log_log_slope,
        });
    }
    Ok(out)
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Run { config, output, workers: w } => {
            let cfg = load(&config, output)?;
            init_workers(w)?;
            let summary = execute(&cfg)?;
            println!("wrote {} files to {}", summary.files.len(), summary.directory.display());
        }
        Command::Sweep { config, output, workers: w } => {
            let cfg = load(&config, output)?;
            init_workers(w)?;
            let entries = run_sweep(&cfg)?;
            println!("ran {} sweep points into {}", entries.len(), cfg.output.directory.display());
        }
        Command::Estimate {
            mass,
            size,
            epsilon,
            scaled_size,
        } => {
            let v = estimate(mass, size, epsilon, scaled_size)?;
            println!("{}", serde_json::to_string_pretty(&v).unwrap_or_default());
        }
        Command::Validate { config, emit: show } => {
            let cfg = load(&config, None)?;
            if show {
                print!("{}", emit(&cfg)?);
            } else {
                println!("ok: {}", cfg.scenario.kind());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(&e),
    }
}
