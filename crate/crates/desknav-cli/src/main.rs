//! Command-line front end: world generation, calibration, benchmark runs,
//! and report recomputation. Every verb exits nonzero on any violated
//! invariant or malformed input.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use desknav::harness::{
    generate_worlds, presets, report_from_dir, run_benchmark, run_calibration, sweep_from_dir,
    write_outputs, RunConfig, WorldKind,
};
use std::fs;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "desknav",
    version,
    about = "Desk-scale navigation decision stack: procedural worlds, conformal calibration, benchmark runs, and SR/SPL reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate procedural world files.
    GenWorlds {
        /// World family: open, corridor, rooms, or trap.
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Directory for the world JSON files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate a conformal threshold on a disjoint episode set and write
    /// the model file.
    Calibrate {
        #[command(flatten)]
        source: ConfigSource,
        /// Miscoverage rate.
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Calibration episodes sampled per world.
        #[arg(long, default_value_t = 10)]
        episodes_per_world: usize,
        /// Path of the calibration file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a benchmark: per-episode logs plus aggregate reports.
    Run {
        #[command(flatten)]
        source: ConfigSource,
        /// Output directory for logs and reports.
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the aggregate table from a run directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Recompute aggregates at chosen success distance thresholds.
    SweepSdt {
        #[arg(long)]
        dir: PathBuf,
        /// Comma-separated ascending thresholds in meters.
        #[arg(long, default_value = "1.0,1.5,2.0,2.5,3.0")]
        thresholds: String,
    },
}

#[derive(clap::Args)]
struct ConfigSource {
    /// Run config JSON file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset: smoke or complementary.
    #[arg(long)]
    preset: Option<String>,
    /// Root seed for --preset runs.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

impl ConfigSource {
    fn load(&self) -> Result<RunConfig> {
        match (&self.config, &self.preset) {
            (Some(path), None) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                RunConfig::from_json(&text)
                    .with_context(|| format!("parsing config {}", path.display()))
            }
            (None, Some(name)) => presets::preset(name, self.seed).with_context(|| {
                format!("unknown preset {name:?} (expected smoke or complementary)")
            }),
            _ => bail!("exactly one of --config or --preset is required"),
        }
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenWorlds {
            kind,
            count,
            seed,
            out,
        } => {
            let Some(kind) = WorldKind::parse(&kind) else {
                bail!("unknown world kind {kind:?} (expected open, corridor, rooms, or trap)");
            };
            let worlds = generate_worlds(kind, count, seed)?;
            fs::create_dir_all(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            for w in &worlds {
                let path = out.join(format!("{}.json", w.id));
                fs::write(&path, w.to_json())
                    .with_context(|| format!("writing {}", path.display()))?;
                println!("wrote {}", path.display());
            }
        }
        Command::Calibrate {
            source,
            epsilon,
            episodes_per_world,
            out,
        } => {
            let cfg = source.load()?;
            let (model, outcome) = run_calibration(&cfg, epsilon, episodes_per_world)?;
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)
                        .with_context(|| format!("creating {}", parent.display()))?;
                }
            }
            fs::write(&out, model.to_json())
                .with_context(|| format!("writing {}", out.display()))?;
            if outcome.insufficient {
                eprintln!(
                    "warning: only {} decision points (fewer than 100); calibration written anyway",
                    outcome.decision_points
                );
            }
            println!(
                "calibrated tau = {:.4} at epsilon = {} from {} decision points over {} episodes -> {}",
                model.tau,
                epsilon,
                outcome.decision_points,
                outcome.episodes,
                out.display()
            );
        }
        Command::Run { source, out } => {
            let cfg = source.load()?;
            let report = run_benchmark(&cfg)?;
            write_outputs(&report, &cfg, &out)?;
            print!("{}", report.render_text());
            println!("run written to {}", out.display());
        }
        Command::Report { dir } => {
            print!("{}", report_from_dir(&dir)?);
        }
        Command::SweepSdt { dir, thresholds } => {
            let parsed: Result<Vec<f64>, _> =
                thresholds.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let thresholds = parsed.context("thresholds must be comma-separated numbers")?;
            print!("{}", sweep_from_dir(&dir, &thresholds)?);
        }
    }
    Ok(())
}
