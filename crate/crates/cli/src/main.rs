use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use cellfree::harness::{
    compare_pc, compare_training, emit::unix_now, run_experiment, selftest, sweep_pilot_lengths, write_outputs,
    ExperimentSpec, RateKind,
};

#[derive(Parser)]
#[command(version, about = "Cell-free massive MIMO downlink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment TOML; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the number of placements.
    #[arg(long)]
    placements: Option<usize>,
    /// Overrides the Monte Carlo draws per placement.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rate {
    Cf,
    Scsi,
    Ub,
    Unf,
    Lb,
}

impl From<Rate> for RateKind {
    fn from(r: Rate) -> Self {
        match r {
            Rate::Cf => RateKind::Cf,
            Rate::Scsi => RateKind::Scsi,
            Rate::Ub => RateKind::Ub,
            Rate::Unf => RateKind::Unf,
            Rate::Lb => RateKind::Lb,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Runs an experiment and writes results.csv, results.jsonl and manifest.json.
    Run {
        #[command(flatten)]
        common: Common,
        /// Output directory; defaults to the config's output_path or ./out.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean net rate over a grid of uplink and downlink pilot lengths, as CSV.
    SweepPilots {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        ul: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        dl: Vec<usize>,
        #[arg(long, value_enum, default_value = "cf")]
        rate: Rate,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compares power-control policies on identical placements, as JSON.
    ComparePc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compares rates with and without downlink training, as JSON.
    CompareTraining {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Checks the build against hand-computed values.
    Selftest,
}

fn load_spec(common: &Common) -> Result<ExperimentSpec> {
    let mut spec = match &common.config {
        Some(path) => ExperimentSpec::load(path)?,
        None => ExperimentSpec::default(),
    };
    if let Some(seed) = common.seed {
        spec.scenario.rng_seed = seed;
    }
    if let Some(w) = common.workers {
        spec.workers = w;
    }
    if let Some(n) = common.placements {
        spec.num_placements = n;
    }
    if let Some(n) = common.trials {
        spec.num_fading_draws = n;
    }
    spec.validate()?;
    Ok(spec)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { common, out } => {
            let spec = load_spec(&common)?;
            let started = unix_now();
            let outcome = run_experiment(&spec)?;
            let dir = out.or_else(|| spec.output_path.clone()).unwrap_or_else(|| PathBuf::from("out"));
            for f in write_outputs(&dir, &spec, &outcome, started)? {
                info!("wrote {}", f.display());
            }
            if !outcome.failures.is_empty() {
                info!("{} placements failed and were skipped", outcome.failures.len());
            }
        }
        Command::SweepPilots { common, ul, dl, rate, out } => {
            let spec = load_spec(&common)?;
            let cells = sweep_pilot_lengths(&spec, &ul, &dl, rate.into())?;
            let mut w = csv::Writer::from_path(&out).with_context(|| format!("writing {}", out.display()))?;
            for c in &cells {
                w.serialize(c)?;
            }
            w.flush()?;
            info!("wrote {}", out.display());
        }
        Command::ComparePc { common, out } => {
            let spec = load_spec(&common)?;
            let cmp = compare_pc(&spec)?;
            for n in 1..=spec.sca.iterations {
                if let Some(m) = cmp.mean_min_cf_at(n) {
                    info!("mean minimum rate after iteration {n}: {m:.4}");
                }
            }
            info!("SCA beats statistical max-min on {:.0}% of placements", 100.0 * cmp.fraction_sca_beats_scsi());
            write_json(&out, &cmp)?;
        }
        Command::CompareTraining { common, out } => {
            let spec = load_spec(&common)?;
            let cmp = compare_training(&spec)?;
            info!(
                "5th percentile {:.4} with training, {:.4} without, gain {:.1}%",
                cmp.p5_with,
                cmp.p5_without,
                100.0 * cmp.gain_p5
            );
            write_json(&out, &cmp)?;
        }
        Command::Selftest => {
            let checks = selftest::run();
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                bail!("{failed} self-checks failed");
            }
        }
    }
    Ok(())
}
