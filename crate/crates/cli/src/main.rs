use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use pgi_core::harness::{run_sweep, sweep::single_bs_preset, write_manifest, Axis};
use pgi_core::{Baseline, SystemConfig};

#[derive(Parser)]
#[command(name = "pgi", version, about = "Dominating path-gain feedback simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a parameter sweep and write its table and manifest.
    Simulate(SimulateArgs),
    /// Print the default (or preset) configuration as TOML.
    Config {
        #[arg(long, value_enum)]
        preset: Option<Preset>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// One BS, 8 paths, budget 4.
    SingleBs,
}

impl Preset {
    fn config(self) -> SystemConfig {
        match self {
            Preset::SingleBs => single_bs_preset(),
        }
    }
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// TOML configuration; defaults apply to omitted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a named preset instead of the defaults.
    #[arg(long, value_enum, conflicts_with = "config")]
    preset: Option<Preset>,
    /// snr_db, feedback_bits, path_budget, num_paths or num_bs.
    #[arg(long)]
    sweep: String,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Use the config's full-scale trial count.
    #[arg(long, conflicts_with = "trials")]
    full_scale: bool,
    /// Comma-separated baselines (ideal_pgi, random_path, rvq_csi) or `none`.
    #[arg(long)]
    baselines: Option<String>,
    /// Estimate AoDs with MUSIC instead of using the true angles.
    #[arg(long)]
    estimated_aods: bool,
}

fn parse_baselines(s: &str) -> Result<Vec<Baseline>> {
    if s.trim() == "none" || s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|b| Baseline::parse(b.trim()).with_context(|| format!("unknown baseline `{}`", b.trim())))
        .collect()
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut config = match (&args.config, args.preset) {
        (Some(path), _) => SystemConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        (None, Some(p)) => p.config(),
        (None, None) => SystemConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(list) = &args.baselines {
        config.baselines = parse_baselines(list)?;
    }
    if args.estimated_aods {
        config.use_estimated_aods = true;
    }
    config.validate()?;
    let axis: Axis = args.sweep.parse()?;
    let trials = match (args.trials, args.full_scale) {
        (Some(t), _) => t,
        (None, true) => config.full_scale_trials,
        (None, false) => config.trials,
    };
    if trials < 2 {
        bail!("--trials must be at least 2");
    }
    log::info!("sweeping {axis} over {:?} with {trials} trials, seed {}", args.values, config.master_seed);
    let result = run_sweep(&config, axis, &args.values, trials)?;
    let (table, manifest) = write_manifest(&args.out, &result, trials)?;
    for (i, v) in result.axis_values.iter().enumerate() {
        for s in &result.series {
            let p = s.points[i];
            println!("{axis}={v} {:<12} {:>9.4} ± {:.4} ({} trials, {} failed)", s.scheme, p.mean, p.ci95, p.trials, p.failed_trials);
        }
    }
    println!("wrote {} and {}", table.display(), manifest.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Simulate(args) => simulate(args),
        Command::Config { preset } => {
            print!("{}", preset.map_or_else(SystemConfig::default, Preset::config).to_toml_string());
            Ok(())
        }
    }
}
