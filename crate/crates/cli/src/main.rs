//! `dgreedy`: run double greedy experiments from a TOML config.
//!
//! - `dgreedy run --config exp.toml [--problem ...] [--out DIR]`
//! - `dgreedy verify`
//!
//! Exit codes: 0 success, 1 i/o failure, 2 invalid configuration, 3 numerical
//! failure or a failed self-check.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dgreedy_core::experiments::{
    emit_outputs, run_experiment, self_checks, ExperimentConfig, ProblemChoice,
};
use dgreedy_core::Error;

#[derive(Parser)]
#[command(
    name = "dgreedy",
    version,
    about = "Double greedy reduced bases for transport-dominated problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write table.csv, history.json and decay.csv.
    Run(Box<RunArgs>),
    /// Run quick invariant checks on tiny problems.
    Verify,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// cd, transport, transport_jump or synthetic_saddle.
    #[arg(long)]
    problem: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    omega: Option<f64>,
    #[arg(long)]
    trial_level: Option<u32>,
    #[arg(long)]
    test_level: Option<u32>,
    /// Number of training parameters.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    zeta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    tol: Option<f64>,
    #[arg(long)]
    n_max: Option<usize>,
    /// Tightening cycles after the first run (transport only).
    #[arg(long)]
    cycles: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = &self.problem {
            cfg.problem = ProblemChoice::parse(p)?;
        }
        macro_rules! set {
            ($($field:ident <- $arg:ident),* $(,)?) => {
                $(if let Some(v) = self.$arg.clone() { cfg.$field = v; })*
            };
        }
        set!(
            epsilon <- epsilon,
            omega <- omega,
            trial_level <- trial_level,
            test_level <- test_level,
            sample_count <- samples,
            zeta <- zeta,
            delta <- delta,
            tol <- tol,
            n_max <- n_max,
            cycles <- cycles,
            output_dir <- out,
        );
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::Io { .. } => 1,
        _ => 3,
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x:.3e}")
}

fn run(args: &RunArgs) -> Result<(), Error> {
    let cfg = args.config()?;
    let result = run_experiment(&cfg)?;
    println!("piece cycle  n    m  delta      surrogate  rb_truth   rb_l2      ratio");
    for r in &result.table.rows {
        println!(
            "{:5} {:5} {:2} {:4}  {:.3}  {}  {}  {}  {}",
            r.piece,
            r.cycle,
            r.n,
            r.m,
            r.delta,
            fmt_f(r.max_surrogate),
            fmt_f(r.rb_truth),
            fmt_f(r.rb_l2),
            fmt_f(r.ratio)
        );
    }
    for piece in &result.history.pieces {
        for c in &piece.cycles {
            println!(
                "piece {} cycle {}: {:?}",
                piece.piece, c.cycle, c.termination
            );
        }
    }
    let files = emit_outputs(&cfg, &result, &cfg.output_dir)?;
    for f in files {
        println!("wrote {}", f.display());
    }
    println!("elapsed {:.2} s", result.elapsed_s);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match run(&args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("dgreedy: {e}");
                ExitCode::from(exit_code(&e))
            }
        },
        Command::Verify => {
            let checks = self_checks();
            for c in &checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
    }
}
