//! `aoisa`: run and verify delayed stochastic approximation experiments.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{config_hash, parse_config, ConfigError, Format, Overrides};

pub mod exit {
    pub const OK: u8 = 0;
    pub const RUNTIME: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const MISSING_CONFIG: u8 = 3;
    pub const SCHEMA: u8 = 4;
    pub const INCONSISTENT: u8 = 5;
    pub const DIVERGED: u8 = 6;
    pub const VERIFIER_FAILED: u8 = 7;
}

#[derive(Parser)]
#[command(name = "aoisa", version, about = "Distributed stochastic approximation under Age-of-Information delays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Summary,
    Both,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            horizon: self.horizon,
            replications: self.replications,
            out: self.out.clone(),
            format: self.format.map(|f| match f {
                FormatArg::Csv => Format::Csv,
                FormatArg::Summary => Format::Summary,
                FormatArg::Both => Format::Both,
            }),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured iteration and write per-seed trajectories.
    Run(Common),
    /// Check AoI path properties and eventual fractional exceedance.
    VerifyAoi(Common),
    /// Check decay of stepsize sums over AoI windows.
    VerifyWindow(Common),
    /// Check the Gronwall-type bounds on random equality recursions.
    VerifyGronwall {
        /// Number of random instances.
        #[arg(long, default_value_t = 1000)]
        random: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Delayed distributed SGD on a stochastic quadratic.
    Sgd(Common),
    /// Heavy-ball iteration against its plain twin.
    Momentum(Common),
    /// Per-segment tracking of the rescaled iterates by the ODE.
    Track(Common),
}

const GRONWALL_HORIZON: usize = 500;

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(execute(cli.command))
}

fn execute(command: Command) -> u8 {
    let (name, common) = match &command {
        Command::Run(c) => ("run", c),
        Command::VerifyAoi(c) => ("verify-aoi", c),
        Command::VerifyWindow(c) => ("verify-window", c),
        Command::VerifyGronwall { common, .. } => ("verify-gronwall", common),
        Command::Sgd(c) => ("sgd", c),
        Command::Momentum(c) => ("momentum", c),
        Command::Track(c) => ("track", c),
    };
    let overrides = common.overrides();

    let loaded = match (&command, &common.config) {
        (_, Some(path)) => match parse_config(path, &overrides) {
            Ok(c) => Some(c),
            Err(e) => return report_config_error(&e),
        },
        (Command::VerifyGronwall { .. }, None) => None,
        (_, None) => {
            eprintln!("error: `{name}` requires --config PATH");
            return exit::USAGE;
        }
    };

    let (dir, format) = match &loaded {
        Some(c) => (c.output.dir.clone(), c.output.format),
        None => (
            overrides.out.clone().unwrap_or_else(|| PathBuf::from("out")),
            overrides.format.unwrap_or(Format::Both),
        ),
    };

    let result = match (&command, &loaded) {
        (Command::VerifyGronwall { random, .. }, cfg) => {
            let seed = common.seed.or(cfg.as_ref().map(|c| c.run.seed)).unwrap_or(0);
            let horizon = common.horizon.unwrap_or(GRONWALL_HORIZON);
            let hash = cfg.as_ref().map_or_else(|| config_hash("", &overrides), |c| c.hash.clone());
            commands::verify_gronwall(*random, seed, horizon, &hash)
        }
        (Command::Run(_), Some(c)) => commands::run(c),
        (Command::VerifyAoi(_), Some(c)) => commands::verify_aoi(c),
        (Command::VerifyWindow(_), Some(c)) => commands::verify_window(c),
        (Command::Sgd(_), Some(c)) => commands::sgd(c),
        (Command::Momentum(_), Some(c)) => commands::momentum(c),
        (Command::Track(_), Some(c)) => commands::track(c),
        (_, None) => unreachable!("config presence checked above"),
    };

    let mut outcome = match result {
        Ok(o) => o,
        Err(e) => {
            if let Some(ce) = e.downcast_ref::<ConfigError>() {
                return report_config_error(ce);
            }
            eprintln!("error: {e:#}");
            return exit::RUNTIME;
        }
    };

    let code = if outcome.diverged {
        exit::DIVERGED
    } else if !outcome.summary.failures().is_empty() {
        exit::VERIFIER_FAILED
    } else {
        exit::OK
    };
    let status = match code {
        exit::OK => "pass",
        exit::DIVERGED => "diverged",
        _ => "fail",
    };
    outcome.summary.set("failed_checks", outcome.summary.failures().join(","));
    outcome.summary.set("status", status);
    outcome.summary.set("exit_code", code);

    if format.csv() {
        for (file, bytes) in &outcome.files {
            if let Err(e) = output::write_atomic(&dir, file, bytes) {
                eprintln!("error: {e:#}");
                return exit::RUNTIME;
            }
        }
    }
    let text = outcome.summary.render();
    if format.summary() {
        let file = format!("{}_summary.txt", name.replace('-', "_"));
        if let Err(e) = output::write_atomic(&dir, &file, text.as_bytes()) {
            eprintln!("error: {e:#}");
            return exit::RUNTIME;
        }
    }
    println!("{name}: {status}");
    for f in outcome.summary.failures() {
        println!("  failed: {f}");
    }
    code
}

fn report_config_error(e: &ConfigError) -> u8 {
    eprint!("error: {e}");
    if matches!(e, ConfigError::Missing(_)) {
        eprintln!();
    }
    match e {
        ConfigError::Missing(_) => exit::MISSING_CONFIG,
        ConfigError::Schema(_) => exit::SCHEMA,
        ConfigError::Inconsistent(_) => exit::INCONSISTENT,
    }
}
