use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bibc_core::harness::{default_out_dir, OUT_DIR_ENV};
use bibc_core::{load_config, run_scenario, Error, Preset, ScenarioConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bibc-sim",
    version,
    about = "Bistatic backscatter detection simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario preset and write its CSV artifacts.
    Run {
        /// JSON scenario config; missing keys take their defaults.
        #[arg(long)]
        config: PathBuf,
        /// One of fig3, fig4, fig5, fig6, custom.
        #[arg(long)]
        scenario: Preset,
        /// Output directory. Defaults to $BIBC_SIM_OUT, then ./bibc-out.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Worker threads for the Monte Carlo loops.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a config file and print the resolved configuration.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    // A missing or unreadable config file is a config problem, not a run failure.
    load_config(path).map_err(Failure::Config)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = load(&config)?;
            print!("{}", cfg.to_json());
            eprintln!("{}: ok", config.display());
        }
        Command::Run {
            config,
            scenario,
            out,
            seed,
            trials,
            threads,
        } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if trials.is_some() {
                cfg.trials = trials;
            }
            cfg.validate().map_err(Failure::Config)?;
            if threads == Some(0) {
                return Err(Failure::Config(Error::Config {
                    key: "--threads".into(),
                    message: "must be >= 1".into(),
                }));
            }
            let out = out.unwrap_or_else(default_out_dir);
            let art = run_scenario(&cfg, scenario, &out, threads)?;
            println!(
                "run {} ({scenario}, seed {}) -> {}",
                art.run_id,
                art.seed,
                art.dir.display()
            );
            for f in &art.files {
                println!("  {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("bibc-sim: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("bibc-sim: {e}");
            if matches!(e, Error::Io { .. }) {
                eprintln!("(set {OUT_DIR_ENV} or --out to choose another output directory)");
            }
            ExitCode::from(1)
        }
    }
}
