use mimalloc::MiMalloc;

#[global_allocator]
static GLOBAL: MiMalloc = MiMalloc;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nlwave::criteria::{breaking_condition, RiccatiParams};
use nlwave::harness::oracle::oracle_check;
use nlwave::harness::report::emit_report;
use nlwave::harness::{compare_fw, run_single, run_sweep, RunConfig};
use nlwave::spectral::Grid;
use nlwave::Error;

/// Oracle-check tolerances.
const ORACLE_REL_TOL: f64 = 1e-6;
const FORM_TOL: f64 = 1e-11;

#[derive(Parser)]
#[command(name = "nlwave", version, about = "Wave-breaking experiments for a non-local nonlinear wave equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunFlags {
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Snapshot cadence in steps (overrides the config).
    #[arg(long)]
    record_every: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run a configuration over a list of values of one scalar field.
    Sweep {
        config: PathBuf,
        /// Dotted field path, e.g. `initial.target_m0`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values; an empty list writes only the header.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Evaluate the breaking criterion for given initial slopes and constant.
    Criteria {
        #[arg(long, allow_hyphen_values = true)]
        m0: f64,
        #[arg(long = "M0", allow_hyphen_values = true)]
        big_m0: f64,
        #[arg(long)]
        c0: f64,
    },
    /// Cross-check the spectral operators against direct quadrature.
    OracleCheck {
        #[arg(long, default_value_t = 2048)]
        n_points: usize,
        #[arg(long, default_value_t = 40.0)]
        half_length: f64,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Paired run of the non-local model and the Fornberg-Whitham model.
    CompareFw {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
}

enum Failure {
    Error(Error),
    Inconsistent(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn load(path: &PathBuf, flags: &RunFlags) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(out) = &flags.out {
        cfg.output_dir = out.clone();
    }
    if let Some(k) = flags.record_every {
        cfg.stepper.record_every = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Print to stdout, treating a closed pipe as success.
fn print_line(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
}

fn emit(value: &impl serde::Serialize) -> Result<(), Error> {
    print_line(&serde_json::to_string_pretty(value)?);
    Ok(())
}

fn parse_values(list: &str) -> Result<Vec<f64>, Error> {
    list.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<f64>()
                .map_err(|e| Error::Config(format!("sweep value `{v}`: {e}")))
        })
        .collect()
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate { config, flags } => {
            let cfg = load(&config, &flags)?;
            let out = run_single(&cfg)?;
            emit_report(std::slice::from_ref(&out), &cfg.output_dir)?;
            emit(&out.result)?;
            if !out.result.theorem_consistent {
                return Err(Failure::Inconsistent(format!(
                    "T_sim = {} exceeds t* = {:?}",
                    out.result.final_time, out.result.verdict.t_star_main
                )));
            }
        }
        Command::Sweep {
            config,
            axis,
            values,
            workers,
            flags,
        } => {
            let values = parse_values(&values)?;
            let cfg = load(&config, &flags)?;
            let sweep = run_sweep(&cfg, &axis, &values, workers)?;
            print_line(&sweep.summary_path.display().to_string());
            let bad: Vec<String> = values
                .iter()
                .zip(&sweep.results)
                .filter(|(_, r)| !r.theorem_consistent)
                .map(|(v, _)| v.to_string())
                .collect();
            if sweep.results.iter().any(|r| r.failure.is_some()) {
                return Err(Error::NumericalFailure("one or more sweep runs failed".into()).into());
            }
            if !bad.is_empty() {
                return Err(Failure::Inconsistent(format!(
                    "theorem_consistent false for values {}",
                    bad.join(", ")
                )));
            }
        }
        Command::Criteria { m0, big_m0, c0 } => {
            let params = RiccatiParams::new(m0, big_m0, c0)?;
            let verdict = breaking_condition(&params);
            emit(&verdict)?;
        }
        Command::OracleCheck {
            n_points,
            half_length,
            count,
            seed,
        } => {
            let grid = Grid::new(n_points, half_length).map_err(|e| Error::Config(e.to_string()))?;
            let rep = oracle_check(&grid, count, seed)?;
            emit(&rep)?;
            if rep.max_rel_error >= ORACLE_REL_TOL || rep.max_form_difference >= FORM_TOL {
                return Err(Failure::Inconsistent("oracle tolerances not met".into()));
            }
        }
        Command::CompareFw { config, flags } => {
            let cfg = load(&config, &flags)?;
            let (a, b) = compare_fw(&cfg)?;
            emit_report(&[a.clone(), b.clone()], &cfg.output_dir)?;
            let pair = serde_json::json!({ "nonlocal": a.result, "fornberg_whitham": b.result });
            emit(&pair)?;
            if !a.result.theorem_consistent {
                return Err(Failure::Inconsistent("non-local run exceeds t*".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Inconsistent(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::NumericalFailure(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
