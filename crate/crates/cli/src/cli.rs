//! Command-line front end.

use std::path::PathBuf;

use clap::{error::ErrorKind, Parser, Subcommand, ValueEnum};

use crate::config::{ExperimentConfig, SolverKind, SweepAxis};
use crate::experiment::{self, RunError};
use crate::plot;

#[derive(Debug, Parser)]
#[command(name = "ucfalloc", version, about = "Subband allocation experiments for user-centric cell-free MIMO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Profile {
    /// Full-scale defaults.
    Full,
    /// Small deployment that runs in minutes on a laptop.
    Desk,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Configuration file; its keys override the profile.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base profile the configuration file is applied to.
    #[arg(long, value_enum, default_value = "full")]
    profile: Profile,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (defaults to experiment.out_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write channel tensors, link gains and serving clusters.
    GenChannels {
        #[command(flatten)]
        common: Common,
    },
    /// Run the solvers on shared channel snapshots.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of ao, rlm, hym.
        #[arg(long, value_delimiter = ',', value_parser = SolverKind::parse)]
        solvers: Option<Vec<SolverKind>>,
    },
    /// Re-run the hybrid solver across UE counts or subband counts.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = SweepAxis::parse)]
        axis: Option<SweepAxis>,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<usize>>,
    },
    /// Random search over learning hyperparameters.
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Plot one metric from metrics CSVs as SVG.
    Plot {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "best_objective")]
        metric: String,
        #[arg(long, default_value = "plot.svg")]
        output: PathBuf,
    },
    /// Check a configuration file and print its canonical form.
    ValidateConfig {
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: &Common) -> Result<(ExperimentConfig, PathBuf), RunError> {
    let base = match common.profile {
        Profile::Full => ExperimentConfig::default(),
        Profile::Desk => ExperimentConfig::desk(),
    };
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| RunError::Io { path: path.clone(), source })?;
            ExperimentConfig::parse_onto(base, &text).map_err(|e| {
                RunError::Config(crate::config::ConfigError::Invalid(format!("{}: {e}", path.display())))
            })?
        }
        None => base,
    };
    if let Some(s) = common.seed {
        cfg.experiment.seeds = vec![s];
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.experiment.out_dir.clone());
    Ok((cfg, out))
}

fn announce(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(command: Command) -> Result<(), RunError> {
    match command {
        Command::GenChannels { common } => {
            let (cfg, out) = resolve(&common)?;
            for &seed in &cfg.experiment.seeds {
                announce(&experiment::gen_channels(&cfg, seed, &out)?);
            }
        }
        Command::Compare { common, solvers } => {
            let (mut cfg, out) = resolve(&common)?;
            if let Some(s) = solvers {
                cfg.solvers = s;
            }
            let res = experiment::run_compare(&cfg, &out)?;
            for s in &res.solvers {
                for (seed, msg) in &s.failures {
                    eprintln!("{} seed {seed} failed: {msg}", s.solver);
                }
            }
            announce(&res.files);
        }
        Command::Sweep { common, axis, values } => {
            let (cfg, out) = resolve(&common)?;
            let axis = axis.unwrap_or(cfg.sweep.axis);
            let values = values.unwrap_or_else(|| cfg.sweep.values.clone());
            let points = experiment::run_sweep(&cfg, axis, &values, &out)?;
            for p in &points {
                if p.over_capacity {
                    eprintln!("note: {}={} exceeds the spatial capacity of the deployment", axis.name(), p.value);
                }
            }
            println!("wrote {}", out.join(format!("sweep_{}_summary.csv", axis.name())).display());
        }
        Command::Tune { common, trials, episodes } => {
            let (mut cfg, out) = resolve(&common)?;
            if let Some(e) = episodes {
                cfg.tune.episodes = e;
            }
            let trials = trials.unwrap_or(cfg.tune.trials);
            let (best, _) = experiment::run_tune(&cfg, trials, &out)?;
            let h = &best.hyper;
            println!("best trial {} (final episode reward {:?})", best.trial, best.score);
            println!("ddpg.actor_lr = {:?}", h.actor_lr);
            println!("ddpg.critic_lr = {:?}", h.critic_lr);
            println!("ddpg.gamma = {:?}", h.gamma);
            println!("ddpg.buffer_capacity = {}", h.buffer_capacity);
            println!("ddpg.batch_size = {}", h.batch_size);
            println!("ddpg.tau = {:?}", h.tau);
            println!("ddpg.noise = {:?}", h.noise);
            println!("wrote {}", out.join("tune.csv").display());
        }
        Command::Plot { inputs, metric, output } => {
            plot::emit_plot(&inputs, &metric, &output)?;
            println!("wrote {}", output.display());
        }
        Command::ValidateConfig { common } => {
            let (cfg, _) = resolve(&common)?;
            print!("{}", cfg.serialize());
            if cfg.over_capacity() {
                eprintln!("note: num_ues exceeds antennas_per_ap * cluster_size * num_subbands");
            }
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit status: 0 on success, 1 for usage or
/// configuration errors, 2 for runtime failures.
pub fn cli_dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

