use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use stackelberg_core::game::{BanditGame, TieBreaking};
use stackelberg_core::instances::{Family, InstanceDescriptor};
use stackelberg_core::lp::constrained_best_response;
use stackelberg_core::mdp::EpisodicMdp;
use stackelberg_lab::config::{ExperimentConfig, Setting};
use stackelberg_lab::output::persist;
use stackelberg_lab::{gap_curve, run_experiment, summarize};

#[derive(Parser)]
#[command(name = "stackelberg-lab", version, about = "Seeded Stackelberg learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write the records CSV plus a manifest.
    Run(RunArgs),
    /// Print max phi_eps and gap_eps over a grid of epsilons.
    GapCurve {
        #[arg(long)]
        game: PathBuf,
        /// Comma-separated epsilons.
        #[arg(long, value_delimiter = ',', required = true)]
        eps_grid: Vec<f64>,
    },
    /// Instance generators.
    Instances {
        #[command(subcommand)]
        command: InstancesCommand,
    },
    /// Occupancy-measure programs.
    Lp {
        #[command(subcommand)]
        command: LpCommand,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SettingArg {
    Bandit,
    BanditRl,
    Linear,
    Simultaneous,
}

impl From<SettingArg> for Setting {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::Bandit => Setting::Bandit,
            SettingArg::BanditRl => Setting::BanditRl,
            SettingArg::Linear => Setting::Linear,
            SettingArg::Simultaneous => Setting::Simultaneous,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    setting: SettingArg,
    #[arg(long)]
    config: PathBuf,
    /// Overrides the output path from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the tie-breaking rule from the config.
    #[arg(long, value_parser = parse_tie)]
    tie: Option<TieBreaking>,
}

#[derive(Subcommand)]
enum InstancesCommand {
    /// Write a generated game as JSON.
    Gen {
        #[arg(long)]
        family: String,
        /// Comma-separated `key=value` pairs.
        #[arg(long, value_delimiter = ',')]
        params: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; a pair is written as `<stem>-0.json` and `<stem>-1.json`.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum LpCommand {
    /// Worst-case leader value over follower policies meeting a threshold.
    Wcbr {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        threshold: f64,
        /// Solve the best case instead.
        #[arg(long)]
        best_case: bool,
    },
}

fn parse_tie(s: &str) -> Result<TieBreaking, String> {
    match s {
        "pessimistic" => Ok(TieBreaking::Pessimistic),
        "optimistic" => Ok(TieBreaking::Optimistic),
        _ => Err(format!("unknown tie-breaking rule `{s}`")),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::GapCurve { game, eps_grid } => {
            let game: BanditGame = read_json(&game)?;
            println!("epsilon,max_phi,gap");
            for p in gap_curve(&game, &eps_grid)? {
                println!("{},{},{}", p.epsilon, p.max_phi, p.gap);
            }
            Ok(())
        }
        Command::Instances {
            command: InstancesCommand::Gen { family, params, seed, out },
        } => {
            let family: Family = family.parse()?;
            let mut pairs = Vec::with_capacity(params.len());
            for p in &params {
                let Some((k, v)) = p.split_once('=') else {
                    bail!("parameter `{p}` is not key=value");
                };
                let v: f64 = v.trim().parse().with_context(|| format!("parameter `{k}`"))?;
                pairs.push((k.trim().to_string(), v));
            }
            let descriptor = InstanceDescriptor {
                family,
                params: pairs.into_iter().collect(),
                seed,
            };
            let games = descriptor.build()?;
            if games.len() == 1 {
                std::fs::write(&out, serde_json::to_string_pretty(&games[0])? + "\n")?;
                println!("{}", out.display());
            } else {
                let stem = out.with_extension("");
                for (i, g) in games.iter().enumerate() {
                    let path = PathBuf::from(format!("{}-{i}.json", stem.display()));
                    std::fs::write(&path, serde_json::to_string_pretty(g)? + "\n")?;
                    println!("{}", path.display());
                }
            }
            Ok(())
        }
        Command::Lp {
            command: LpCommand::Wcbr { mdp, threshold, best_case },
        } => {
            let mdp: EpisodicMdp = read_json(&mdp)?;
            let tie = if best_case { TieBreaking::Optimistic } else { TieBreaking::Pessimistic };
            let sol = constrained_best_response(&mdp, threshold, tie)?;
            let report = serde_json::json!({
                "value": sol.value,
                "follower_value": sol.follower_value,
                "policy": sol.policy,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    let setting = Setting::from(args.setting);
    if cfg.setting != setting {
        bail!("config is for the {} setting, not {setting}", cfg.setting);
    }
    if let Some(t) = args.tie {
        cfg.tie = t;
    }
    if let Some(o) = args.out {
        cfg.output = Some(o);
    }
    let out = cfg.output.clone().unwrap_or_else(|| PathBuf::from(format!("{setting}-records.csv")));
    let records = run_experiment(&cfg)?;
    let manifest = persist(&cfg, &records, &out)?;
    print!("{}", summarize(&records)?);
    eprintln!("wrote {} and {}", out.display(), manifest.display());
    Ok(())
}
