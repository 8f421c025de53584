use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mpp_core::bench::{
    gen_lowerbound_pair, gen_random_instance, read_csv_column, run_experiment, RewardFamily, RunConfig,
};
use mpp_core::instance::{ensure_valid, MppInstance};
use mpp_core::metrics::{compute_opt, fit_growth_exponent};

#[derive(Parser)]
#[command(name = "mpplab", version, about = "Online learning lab for Markov persuasion processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rewards {
    Bernoulli,
    Deterministic,
    ScaledBeta,
}

impl From<Rewards> for RewardFamily {
    fn from(r: Rewards) -> Self {
        match r {
            Rewards::Bernoulli => RewardFamily::Bernoulli,
            Rewards::Deterministic => RewardFamily::Deterministic,
            Rewards::ScaledBeta => RewardFamily::ScaledBeta,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated instance as JSON.
    Gen {
        /// Number of layers L.
        #[arg(long, default_value_t = 2)]
        layers: usize,
        /// Sizes of the internal layers 1..L-1, comma separated.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 2)]
        outcomes: usize,
        #[arg(long, default_value_t = 2)]
        actions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "bernoulli")]
        rewards: Rewards,
        /// Emit instance 1 or 2 of the lower-bound pair with this epsilon instead.
        #[arg(long, conflicts_with_all = ["sizes", "seed"])]
        lowerbound: Option<f64>,
        #[arg(long, default_value_t = 1, requires = "lowerbound")]
        which: u8,
        /// Output path; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Execute a TOML run configuration.
    Run { config: PathBuf },
    /// Print OPT and the optimal occupancy measure of an instance.
    EvalOpt { instance: PathBuf },
    /// Fit the log-log growth exponent of a CSV column.
    FitExponent {
        csv: PathBuf,
        #[arg(long, default_value = "cum_regret")]
        column: String,
        /// First row of the window (1-based episode); default is the second half.
        #[arg(long)]
        from: Option<usize>,
    },
}

fn load_instance(path: &PathBuf) -> Result<MppInstance> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let inst = MppInstance::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    ensure_valid(&inst)?;
    Ok(inst)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Gen { layers, sizes, outcomes, actions, seed, rewards, lowerbound, which, out } => {
            let inst = match lowerbound {
                Some(eps) => {
                    let (one, two) = gen_lowerbound_pair(eps)?;
                    match which {
                        1 => one,
                        2 => two,
                        _ => bail!("--which must be 1 or 2"),
                    }
                }
                None => gen_random_instance(layers, &sizes, outcomes, actions, seed, rewards.into())?,
            };
            let json = inst.to_json();
            match out {
                Some(path) => std::fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?,
                None => println!("{json}"),
            }
        }
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let manifest = run_experiment(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&manifest.learners)?);
        }
        Command::EvalOpt { instance } => {
            let inst = load_instance(&instance)?;
            let (opt, q) = compute_opt(&inst)?;
            let out = serde_json::json!({
                "opt": opt,
                "occupancy": q.to_json(&inst.content_hash()),
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::FitExponent { csv, column, from } => {
            let values = read_csv_column(&csv, &column)?;
            let start = match from {
                Some(0) => bail!("--from is 1-based"),
                Some(t) => t - 1,
                None => values.len() / 2,
            };
            let slope = fit_growth_exponent(&values, start..values.len())?;
            println!("{slope}");
        }
    }
    Ok(())
}
