use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qsmooth_cli::config::SEED_ENV;
use qsmooth_cli::{csv, run_command, CliError, Command, ScenarioConfig};

/// Quantum and classical linear-Gaussian filtering and fixed-point smoothing.
#[derive(Debug, Parser)]
#[command(name = "qsmooth", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Scenario file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Write the CSV here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(flatten)]
    keys: KeyFlags,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Filtered mean and covariance of the joint state.
    Filter,
    /// Smoothed estimate of Bob's initial pair, smoother gain and error.
    Smooth,
    /// Closed-form curves for the two-mode squeezed prior.
    Analytic,
    /// Monte Carlo smoothing error with standard errors.
    Simulate,
    /// Brute-force Gaussian conditioning against the continuous estimator.
    Oracle,
    /// Early information rate and asymptote over a coupling grid.
    Sweep,
    /// Mutual information split into filter and smoother parts.
    Info,
    /// Filter for the QND coordinate of a degenerate coupling.
    Qnd,
}

/// Overrides for config keys, one `--key=value` flag per key.
#[derive(Debug, Args)]
struct KeyFlags {
    #[arg(long = "r", global = true, allow_hyphen_values = true)]
    r: Option<String>,
    #[arg(long = "alphaA", global = true, allow_hyphen_values = true)]
    alpha_a: Option<String>,
    #[arg(long = "betaA", global = true, allow_hyphen_values = true)]
    beta_a: Option<String>,
    #[arg(long = "gammaA", global = true, allow_hyphen_values = true)]
    gamma_a: Option<String>,
    #[arg(long = "deltaA", global = true, allow_hyphen_values = true)]
    delta_a: Option<String>,
    #[arg(long = "alphaB", global = true, allow_hyphen_values = true)]
    alpha_b: Option<String>,
    #[arg(long = "betaB", global = true, allow_hyphen_values = true)]
    beta_b: Option<String>,
    #[arg(long = "gammaB", global = true, allow_hyphen_values = true)]
    gamma_b: Option<String>,
    #[arg(long = "deltaB", global = true, allow_hyphen_values = true)]
    delta_b: Option<String>,
    #[arg(long = "Theta1", global = true, allow_hyphen_values = true)]
    theta1: Option<String>,
    #[arg(long = "Theta2", global = true, allow_hyphen_values = true)]
    theta2: Option<String>,
    #[arg(long = "dt", global = true, allow_hyphen_values = true)]
    dt: Option<String>,
    #[arg(long = "t_end", global = true, allow_hyphen_values = true)]
    t_end: Option<String>,
    #[arg(long = "n_traj", global = true, allow_hyphen_values = true)]
    n_traj: Option<String>,
    #[arg(long = "seed", global = true, allow_hyphen_values = true)]
    seed: Option<String>,
    #[arg(long = "stride", global = true, allow_hyphen_values = true)]
    stride: Option<String>,
    #[arg(long = "sweep_min", global = true, allow_hyphen_values = true)]
    sweep_min: Option<String>,
    #[arg(long = "sweep_max", global = true, allow_hyphen_values = true)]
    sweep_max: Option<String>,
    #[arg(long = "sweep_n", global = true, allow_hyphen_values = true)]
    sweep_n: Option<String>,
    #[arg(long = "qnd_var0", global = true, allow_hyphen_values = true)]
    qnd_var0: Option<String>,
}

impl KeyFlags {
    fn pairs(&self) -> Vec<(String, String)> {
        let all = [
            ("r", &self.r),
            ("alphaA", &self.alpha_a),
            ("betaA", &self.beta_a),
            ("gammaA", &self.gamma_a),
            ("deltaA", &self.delta_a),
            ("alphaB", &self.alpha_b),
            ("betaB", &self.beta_b),
            ("gammaB", &self.gamma_b),
            ("deltaB", &self.delta_b),
            ("Theta1", &self.theta1),
            ("Theta2", &self.theta2),
            ("dt", &self.dt),
            ("t_end", &self.t_end),
            ("n_traj", &self.n_traj),
            ("seed", &self.seed),
            ("stride", &self.stride),
            ("sweep_min", &self.sweep_min),
            ("sweep_max", &self.sweep_max),
            ("sweep_n", &self.sweep_n),
            ("qnd_var0", &self.qnd_var0),
        ];
        all.into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

fn command(cmd: &Cmd) -> Command {
    match cmd {
        Cmd::Filter => Command::Filter,
        Cmd::Smooth => Command::Smooth,
        Cmd::Analytic => Command::Analytic,
        Cmd::Simulate => Command::Simulate,
        Cmd::Oracle => Command::Oracle,
        Cmd::Sweep => Command::Sweep,
        Cmd::Info => Command::Info,
        Cmd::Qnd => Command::Qnd,
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let env_seed = std::env::var(SEED_ENV).ok();
    let cfg = ScenarioConfig::load(cli.config.as_deref(), env_seed.as_deref(), &cli.keys.pairs())?;
    log::debug!("{cfg:?}");
    let table = run_command(command(&cli.command), &cfg)?;
    match &cli.out {
        Some(path) => {
            let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
            csv::write_csv(&table, &mut file)?;
            file.flush()?;
        }
        None => csv::write_csv(&table, &mut std::io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { qsmooth_cli::error::EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("qsmooth: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
