use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ntkdip::config::{EnvOverrides, Experiment, ExperimentConfig};
use ntkdip::error::CliError;
use ntkdip::runner;

#[derive(Parser)]
#[command(name = "ntkdip", version, about = "Kernel-regime and self-guided DIP experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Workers for replicate seeds.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory; overrides the config and NTKDIP_OUTPUT_DIR.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and print the resolved settings.
    Validate { config: PathBuf },
    /// List the experiment names.
    ListExperiments,
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    EnvOverrides::from_env().apply(&mut cfg)?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::ListExperiments => {
            for e in Experiment::ALL {
                println!("{:<22} {}", e.name(), e.description());
            }
            Ok(())
        }
        Cmd::Validate { config } => load(&config).and_then(|cfg| {
            for s in cfg.seeds() {
                let r = cfg.resolve_seed(s)?;
                println!("{}", serde_json::to_string_pretty(&r).expect("config serializes"));
            }
            Ok(())
        }),
        Cmd::Run { config, jobs, out } => load(&config).and_then(|cfg| {
            let dir = runner::output_dir(&cfg, out.as_deref());
            let outcome = runner::run(&cfg, &dir, jobs)?;
            for (seed, checks) in &outcome.seeds {
                for c in checks {
                    let tag = if c.pass { "PASS" } else { "FAIL" };
                    println!("seed {seed}: {tag} {}: {}", c.name, c.detail);
                }
            }
            println!("wrote {}", outcome.out_dir.display());
            Ok(())
        }),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
