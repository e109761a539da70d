mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use config::{Overrides, Settings};

#[derive(Debug, Parser)]
#[command(
    name = "cvp",
    version,
    about = "Fit and evaluate Chinese Voting Process models of Q&A communities"
)]
struct Cli {
    /// TOML file of settings; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check an event log and report its size and filter outcome.
    Validate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        metadata: Option<PathBuf>,
    },
    /// Generate a synthetic community.
    Simulate {
        /// Without a directory the event log goes to stdout.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Fit selection and voting parameters.
    Fit {
        /// Event log, or `-` for stdin.
        #[arg(long)]
        input: PathBuf,
        /// Without a directory the parameter file goes to stdout.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Trendiness and conformity of one or more communities.
    Coeffs {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        metadata: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Also write one (trendiness, conformity) row per community.
        #[arg(long)]
        emit_embedding: bool,
    },
    /// Predictive log-likelihood of the model and its ablations.
    Eval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Compare display order and fitted quality against external sentiment.
    Quality {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        metadata: PathBuf,
        /// Parameter file from `fit`; fitted on the fly when absent.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        output_dir: PathBuf,
    },
}

fn run(cli: &Cli) -> commands::Outcome {
    let settings = Settings::resolve(cli.config.as_deref(), &cli.overrides)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(settings.threads)
        .build_global()
        .map_err(anyhow::Error::from)?;
    info!("settings:\n{}", settings.to_toml().trim_end());
    match &cli.command {
        Command::Validate { input, metadata } => {
            commands::validate(input, metadata.as_deref(), &settings)
        }
        Command::Simulate { output_dir } => commands::simulate(output_dir.as_deref(), &settings),
        Command::Fit { input, output_dir } => {
            commands::fit(input, output_dir.as_deref(), &settings)
        }
        Command::Coeffs {
            input,
            metadata,
            output_dir,
            emit_embedding,
        } => commands::coeffs(
            input,
            metadata.as_deref(),
            output_dir.as_deref(),
            *emit_embedding,
            &settings,
        ),
        Command::Eval { input, output_dir } => commands::eval(input, output_dir, &settings),
        Command::Quality {
            input,
            metadata,
            params,
            output_dir,
        } => commands::quality(input, metadata, params.as_deref(), output_dir, &settings),
    }
}

fn main() -> ExitCode {
    // usage errors are input errors; 2 is kept for numerical failures
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            error!("{:#}", failure.error());
            ExitCode::from(failure.exit_code())
        }
    }
}
