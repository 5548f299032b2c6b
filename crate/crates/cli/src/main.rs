use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use labormarkdown_cli::config::{parse_steps, RunConfig};
use labormarkdown_cli::pipeline::{load_panel, run_bootstrap, run_pipeline, run_report, run_simulate, PipelineError};

const EXIT_VALIDATION: u8 = 2;
const EXIT_ESTIMATION: u8 = 3;

#[derive(Parser)]
#[command(name = "labormarkdown", version, about = "Production, markup and markdown estimation on plant panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic panel with known parameters.
    Simulate(Common),
    /// Run estimation steps and write parameter tables and per-observation results.
    Estimate(Common),
    /// Wild bootstrap of the production parameters and pairs bootstrap of the bargaining weight.
    Bootstrap(Common),
    /// Rebuild summary tables and plot data from a previous estimation directory.
    Report(Common),
    /// Check the configuration and the input panel without estimating.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Panel CSV, overriding the configuration.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Seed for simulation and bootstrap draws.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Steps to run, e.g. `1..3`.
    #[arg(long)]
    steps: Option<String>,
    /// Bootstrap replications.
    #[arg(long)]
    reps: Option<usize>,
}

impl Common {
    fn config(&self) -> labormarkdown::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.input {
            cfg.input.panel = Some(p.clone());
        }
        if let Some(s) = self.seed {
            cfg.simulate.seed = s;
            cfg.bootstrap.seed = s;
        }
        if let Some(s) = &self.steps {
            cfg.steps = parse_steps(s)?;
        }
        if let Some(r) = self.reps {
            cfg.bootstrap.reps = r;
            cfg.bootstrap.theta_reps = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn report_failure(e: &PipelineError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_ESTIMATION })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (Command::Simulate(common)
    | Command::Estimate(common)
    | Command::Bootstrap(common)
    | Command::Report(common)
    | Command::Validate(common)) = &cli.command;
    let cfg = match common.config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let out = &common.out;
    let result = match &cli.command {
        Command::Simulate(_) => run_simulate(&cfg, out),
        Command::Estimate(_) => run_pipeline(&cfg, out).map(|(m, _)| m),
        Command::Bootstrap(_) => run_bootstrap(&cfg, out),
        Command::Report(_) => run_report(&cfg, out),
        Command::Validate(_) => {
            return match load_panel(&cfg) {
                Ok((panel, _)) => {
                    println!(
                        "ok: {} observations, {} plants, {} markets, {} years",
                        panel.len(),
                        panel.plants().len(),
                        panel.markets().len(),
                        panel.years().len()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_VALIDATION)
                }
            };
        }
    };
    match result {
        Ok(m) => {
            println!("wrote {} file(s) to {}", m.outputs.len(), out.display());
            ExitCode::SUCCESS
        }
        Err(e) => report_failure(&e),
    }
}
