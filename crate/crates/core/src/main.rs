use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dosebandit::cli::{cmd_inspect, cmd_run, cmd_synth, format_summary, CliError, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "dosebandit", version, about = "Contextual bandit dose-level simulations")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Summarize the cohort: size, dose levels, race counts, missing rates.
    Inspect(CommonArgs),
    /// Replay the configured algorithms over shuffled cohorts and export metrics.
    Run(CommonArgs),
    /// Run the configured algorithms on the synthetic linear environment.
    Synth(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides base_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides n_runs.
    #[arg(long)]
    runs: Option<usize>,
}

impl CommonArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            output: self.output.clone(),
            seed: self.seed,
            runs: self.runs,
        });
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Inspect(args) => args.load().and_then(|cfg| cmd_inspect(&cfg)).map(|s| print!("{s}")),
        Cmd::Run(args) => args.load().and_then(|cfg| {
            let report = cmd_run(&cfg)?;
            print!("{}", format_summary(&report.summary));
            println!("wrote {} files to {}", report.files.len(), cfg.output_dir.display());
            Ok(())
        }),
        Cmd::Synth(args) => args.load().and_then(|cfg| {
            let report = cmd_synth(&cfg)?;
            print!("{}", format_summary(&report.summary));
            println!("wrote {} files to {}", report.files.len(), cfg.output_dir.display());
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
