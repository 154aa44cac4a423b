use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use fogduel::runtime::check::run_checks;
use fogduel::runtime::{ablate, evaluate_checkpoint, train, ConfigError, RunConfig, RunError, RunMode, Variant};
use fogduel::sim::{Rules, ScriptedPolicy};

const EXIT_VERIFY: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_CRASH: u8 = 3;

#[derive(Parser)]
#[command(name = "fogduel", version, about = "Recurrent distributed DQN on a fog-of-war macro duel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a JSON run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Force the single-threaded reproducible schedule.
        #[arg(long)]
        deterministic: bool,
    },
    /// Greedy win rates of a checkpoint against every scripted opponent.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 200)]
        games: u32,
    },
    /// Paired baseline and ablated runs.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// One of no_lstm, sign_reward_only, high_exploration.
        #[arg(long)]
        variant: String,
    },
    /// Fast verification suite.
    Check {
        /// Run under a modified combat divisor (mutation harness).
        #[arg(long, hide = true)]
        combat_divisor: Option<u32>,
    },
}

enum Failure {
    Config(anyhow::Error),
    Verify,
    Crash(anyhow::Error),
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => Failure::Config(c.into()),
            other => Failure::Crash(other.into()),
        }
    }
}

fn load(path: &Path) -> Result<RunConfig, Failure> {
    RunConfig::load(path).map_err(|e: ConfigError| Failure::Config(e.into()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train { config, deterministic } => {
            let mut cfg = load(&config)?;
            if deterministic {
                cfg.mode = RunMode::Deterministic;
            }
            let report = train(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Evaluate { checkpoint, games } => {
            let table = evaluate_checkpoint(&checkpoint, &ScriptedPolicy::ALL, games)?;
            let text = serde_json::to_string_pretty(&table).expect("table serializes");
            let out = checkpoint.with_extension("eval.json");
            std::fs::write(&out, &text)
                .with_context(|| format!("writing {}", out.display()))
                .map_err(Failure::Crash)?;
            println!("{text}");
        }
        Command::Ablate { config, variant } => {
            let cfg = load(&config)?;
            let v = Variant::from_name(&variant).ok_or_else(|| {
                let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
                Failure::Config(anyhow::anyhow!("unknown variant {variant:?}; expected one of {}", names.join(", ")))
            })?;
            let report = ablate(&cfg, v)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Check { combat_divisor } => {
            let mut rules = Rules::default();
            if let Some(d) = combat_divisor {
                if d == 0 {
                    return Err(Failure::Config(anyhow::anyhow!("combat divisor must be positive")));
                }
                rules.combat_divisor = d;
            }
            let results = run_checks(&rules);
            for r in &results {
                println!("{r}");
            }
            if results.iter().any(|r| !r.passed) {
                return Err(Failure::Verify);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verify) => ExitCode::from(EXIT_VERIFY),
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Crash(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CRASH)
        }
    }
}
