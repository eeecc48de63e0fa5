use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use dramlat::Exec;
use dramlat_cli::commands::{self, Ctx, ProfileMode, Status};
use dramlat_cli::config::Experiment;
use dramlat_cli::{exit, exit_code};

/// Trace-driven DRAM latency simulator.
#[derive(Parser)]
#[command(name = "dramlat", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides the config's top-level seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for batch computations; 1 runs everything sequentially.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate traces and write stats.csv and report.toml.
    Run {
        #[command(flatten)]
        common: Common,
        /// Post-LLC request trace, one per core.
        #[arg(long = "trace", required = true)]
        traces: Vec<PathBuf>,
        /// Exit with status 3 if any uncorrectable error reaches the core.
        #[arg(long)]
        fail_on_uncorrectable: bool,
    },
    /// Characterize the chip over the `[sweep]` axes and write sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Identify an AL-DRAM timing table or an AVA profile; writes profile.toml.
    Profile {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: ProfileMode,
    },
    /// Compare ECC outcomes with and without burst shuffling; writes shuffle.csv.
    ShuffleEval {
        #[command(flatten)]
        common: Common,
        /// Exit with status 3 if uncorrectable errors remain after shuffling.
        #[arg(long)]
        fail_on_uncorrectable: bool,
    },
}

impl Common {
    fn context(&self) -> Result<Ctx> {
        let exec = match self.jobs {
            Some(0) => bail!("--jobs must be at least 1"),
            Some(1) => Exec::Sequential,
            Some(n) => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("cannot size the worker pool: {e}");
                }
                Exec::Parallel
            }
            None => Exec::Parallel,
        };
        let exp = Experiment::load(&self.config, self.seed)?;
        let out_dir = match (&self.out_dir, &exp.cfg.output.dir) {
            (Some(d), _) => d.clone(),
            (None, Some(d)) => exp.resolve(d),
            (None, None) => PathBuf::from("."),
        };
        Ok(Ctx { exp, out_dir, exec })
    }
}

fn dispatch(cmd: Cmd) -> Result<Status> {
    match cmd {
        Cmd::Run { common, traces, fail_on_uncorrectable } => commands::run(&common.context()?, &traces, fail_on_uncorrectable),
        Cmd::Sweep { common } => commands::sweep_cmd(&common.context()?),
        Cmd::Profile { common, mode } => commands::profile(&common.context()?, mode),
        Cmd::ShuffleEval { common, fail_on_uncorrectable } => commands::shuffle_eval(&common.context()?, fail_on_uncorrectable),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(Status::Ok) => ExitCode::from(exit::SUCCESS),
        Ok(Status::Uncorrectable(msg)) => {
            eprintln!("dramlat: {msg}");
            ExitCode::from(exit::RELIABILITY)
        }
        Err(e) => {
            eprintln!("dramlat: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
