//! Command-line experiment runner: `train`, `eval`, `sweep-lambda`,
//! `gradcheck`, `heatmap` and `inspect-dataset`.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 numeric failure.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{format_gradcheck, format_inspect};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "mega", version, about = "Graph contrastive learning with a meta-learned augmenter")]
pub struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train once and save metrics and parameters.
    Train,
    /// Run the multi-run linear-probe protocol.
    Eval {
        /// Evaluate these parameters instead of training per run.
        #[arg(long, value_name = "FILE")]
        params: Option<PathBuf>,
    },
    /// Run the protocol for several values of lambda and write a CSV.
    SweepLambda {
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.01, 0.1, 1.0])]
        values: Vec<f64>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Finite-difference checks of every differentiable primitive.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        corrupt_fixture: bool,
    },
    /// Write the embeddings of every graph as a PPM image.
    Heatmap {
        #[arg(long, value_name = "FILE")]
        params: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Print graph, class and feature counts.
    InspectDataset,
}

/// Defaults, then `MEGA_DATA_ROOT`, then the config file, then `--set`.
pub fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::from_env();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        cfg.apply_text(&text)?;
    }
    for spec in &cli.overrides {
        cfg.apply_override(spec)?;
    }
    Ok(cfg.finish()?)
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Train => {
            let s = commands::cmd_train(&cfg)?;
            println!(
                "{} {}: {} iterations, test accuracy {:.4}; wrote {} and {}",
                s.dataset,
                s.mode,
                s.iterations,
                s.test_accuracy,
                cfg.output_dir.join(commands::METRICS_FILE).display(),
                s.params_file.display()
            );
        }
        Command::Eval { params } => {
            let r = commands::cmd_eval(&cfg, params.as_deref())?;
            println!(
                "{}: accuracy {:.4} +- {:.4} over {} runs; wrote {}",
                r.dataset,
                r.mean,
                r.std,
                r.n_runs,
                cfg.output_dir.join(commands::EVAL_FILE).display()
            );
        }
        Command::SweepLambda { values, jobs } => {
            let rows = commands::cmd_sweep_lambda(&cfg, values, *jobs)?;
            print!("{}", commands::sweep_csv(&rows));
        }
        Command::Gradcheck { seed, corrupt_fixture } => {
            let report = commands::cmd_gradcheck(*seed, *corrupt_fixture)?;
            print!("{}", format_gradcheck(&report));
            let failed = report.failures().count();
            if failed > 0 {
                return Err(CliError::GradcheckFailed(failed));
            }
            println!("all {} checks passed", report.checks.len());
        }
        Command::Heatmap { params, out } => {
            commands::cmd_heatmap(&cfg, params, out)?;
            println!("wrote {}", out.display());
        }
        Command::InspectDataset => print!("{}", format_inspect(&commands::cmd_inspect(&cfg)?)),
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
