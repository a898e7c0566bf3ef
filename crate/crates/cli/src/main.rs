use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use beamtrain::harness::{
    read_results_csv, summarize, write_results_csv, write_summary_csv, CdfMetric, CdfThresholds,
};
use beamtrain::{run_trials, Algorithm, CkmGrid, Scenario, ScenarioConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "beamtrain",
    version,
    about = "Map-aided hierarchical beam training simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the channel knowledge map of a scenario and write it to a file.
    BuildCkm {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run paired Monte-Carlo trials and write one row per (trial, SNR, algorithm, user).
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Prebuilt map; built from the config when omitted.
        #[arg(long)]
        ckm: Option<PathBuf>,
        /// Comma-separated algorithm tags, e.g. alg1,alg2,baseline-hier.
        #[arg(long, value_delimiter = ',')]
        algo: Option<Vec<Algorithm>>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated SNRs in dB; `inf` means noiseless.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snr_db: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate a results file into per (algorithm, SNR) statistics.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// CDF tables to include: overhead, gain.
        #[arg(long, value_delimiter = ',', default_value = "overhead,gain")]
        cdf: Vec<CdfMetric>,
    },
    /// Print a built-in scenario profile as JSON.
    Profile {
        #[arg(value_parser = ["desk", "paper"])]
        name: String,
    },
}

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ScenarioConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::BuildCkm { config, out } => {
            let scenario = Scenario::new(load_config(&config)?)?;
            let ckm = scenario.build_ckm()?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            ckm.write_to(BufWriter::new(file))?;
            eprintln!(
                "wrote {} ({} points x {} codewords)",
                out.display(),
                scenario.grid.num_points(),
                scenario.codebook.num_codewords()
            );
        }
        Command::Run {
            config,
            ckm,
            algo,
            trials,
            seed,
            snr_db,
            out,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(a) = algo {
                cfg.algorithms = a;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(s) = snr_db {
                cfg.snr_db = s;
            }
            let scenario = Scenario::new(cfg)?;
            let map = match ckm {
                Some(path) => {
                    let file =
                        File::open(&path).with_context(|| format!("opening {}", path.display()))?;
                    CkmGrid::read_from(BufReader::new(file))
                        .with_context(|| format!("reading map {}", path.display()))?
                }
                None => scenario.build_ckm()?,
            };
            let results = run_trials(&scenario, &map)?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_results_csv(&results, BufWriter::new(file))?;
            eprintln!("wrote {} rows to {}", results.len(), out.display());
        }
        Command::Summarize { input, out, cdf } => {
            let file =
                File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let results = read_results_csv(BufReader::new(file))?;
            if results.is_empty() {
                bail!("{} has no result rows", input.display());
            }
            let groups = summarize(&results, &CdfThresholds::auto(&results, &cdf))?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_summary_csv(&groups, BufWriter::new(file))?;
            for g in &groups {
                eprintln!(
                    "{:<20} snr {:>5} dB  overhead {:6.3}  per-trial {:7.3}  hit {:.3}  se {:.3}",
                    g.algorithm,
                    g.snr_db,
                    g.mean_overhead,
                    g.mean_trial_overhead,
                    g.hit_rate,
                    g.mean_se_bps_hz
                );
            }
        }
        Command::Profile { name } => {
            let cfg = match name.as_str() {
                "desk" => ScenarioConfig::desk_default(),
                _ => ScenarioConfig::paper_scale(),
            };
            println!("{}", cfg.to_json()?);
        }
    }
    Ok(())
}
