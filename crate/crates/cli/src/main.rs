use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ocbf_core::{ConfigError, ControlMode, ScenarioConfig};

mod experiment;
mod output;
mod verify;

#[derive(Parser)]
#[command(name = "ocbf", version, about = "Optimal-plan tracking with control barrier functions for highway merging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trajectory log and metrics.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sweep the objective weight over matched seeds.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.25, 0.40, 0.60])]
        alphas: Vec<f64>,
        /// Number of consecutive seeds per grid point, starting at --seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Run controller modes on the same arrivals and report per-CAV deltas.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "ocbf,track_only")]
        compare: Vec<ControlMode>,
    },
    /// Run the built-in oracle checks.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Replace every check's tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<ControlMode>,
    #[arg(long, conflicts_with = "beta")]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Disturbance bounds as `w1,w2`.
    #[arg(long, value_parser = parse_pair)]
    noise: Option<(f64, f64)>,
    /// Give the controller the noise bounds (robust rows).
    #[arg(long)]
    robust: bool,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected two comma-separated numbers")?;
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}"));
    Ok((num(a)?, num(b)?))
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ScenarioConfig::load(p)?,
            None => ScenarioConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.mode {
            cfg.controller.mode = m;
        }
        if let Some(a) = self.alpha {
            cfg.set_alpha(a);
        }
        if let Some(b) = self.beta {
            cfg.set_beta(b);
        }
        if let Some((w1, w2)) = self.noise {
            cfg.noise.w1 = w1;
            cfg.noise.w2 = w2;
        }
        cfg.controller.robust |= self.robust;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{0} verification checks failed")]
    Verify(usize),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Verify(_) => 3,
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { scenario, out } => experiment::run(&scenario.load()?, &out),
        Command::Sweep { scenario, out, alphas, seeds } => experiment::sweep(&scenario.load()?, &out, &alphas, seeds),
        Command::Compare { scenario, out, compare } => experiment::compare(&scenario.load()?, &out, &compare),
        Command::Verify { config, tol } => verify::verify(config.as_deref(), tol),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
