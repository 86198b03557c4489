//! Batch CLI for the oscillatory component mining pipeline.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use oscmine::pipeline::{emit_plots, generate_synthetic, run_pipeline, PipelineConfig};
use oscmine::synth::{demo_generator_spec, GeneratorSpec};

#[derive(Parser)]
#[command(name = "oscmine", version, about = "Mine reliable oscillatory components from multichannel recordings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full mining pipeline: harvest, select, condense, cluster, validate.
    Mine(MineArgs),
    /// Generate a synthetic recording with planted sources and ground truth.
    Synth(SynthArgs),
    /// Emit per-cluster envelope panels and scatter data from a finished run.
    Plots(PlotsArgs),
    /// Print the run manifest of an artifact directory.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct MineArgs {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the parallel stages (0 = automatic).
    #[arg(long, env = "OSCMINE_WORKERS")]
    workers: Option<usize>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reuse stage artifacts already present in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator specification (TOML); omit for the built-in demo spec.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the spec's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output base path; writes `<base>.oschdr.json`, `<base>.oscdat`,
    /// `<base>.gt.json` and `<base>.z.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Trial count for the built-in demo spec.
    #[arg(long, default_value_t = 150)]
    trials: usize,
}

#[derive(Args)]
struct PlotsArgs {
    /// Artifact directory of a finished `mine` run.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    /// Artifact directory of a finished `mine` run.
    #[arg(long)]
    out: PathBuf,
}

fn load_pipeline_config(args: &MineArgs) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let mut config: PipelineConfig =
        toml::from_str(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(workers) = args.workers {
        config.workers = workers;
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    if args.resume {
        config.resume = true;
    }
    Ok(config)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Mine(args) => {
            let config = load_pipeline_config(&args)?;
            let manifest = run_pipeline(&config)?;
            println!(
                "mined {} configurations: {} components, {} selected ({:.2}%)",
                manifest.n_configs,
                manifest.n_components,
                manifest.n_selected,
                100.0 * manifest.selection_fraction
            );
            for run in &manifest.runs {
                println!(
                    "run {}: {} samples, epsilon {:.6}, {} homogeneous of {} clusters, {} outliers",
                    run.run, run.n_samples, run.epsilon, run.n_hom, run.n_clusters, run.n_outliers
                );
            }
            println!("artifacts in {}", config.out_dir.display());
        }
        Command::Synth(args) => {
            let mut spec: GeneratorSpec = match &args.config {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading spec {}", path.display()))?;
                    let mut spec: GeneratorSpec =
                        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                    // normalize patterns so hand-written specs need not be exact
                    for src in &mut spec.sources {
                        let norm: f64 = src.pattern.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if norm > 0.0 {
                            for v in &mut src.pattern {
                                *v /= norm;
                            }
                        }
                    }
                    spec
                }
                None => demo_generator_spec(args.trials, args.seed.unwrap_or(0)),
            };
            if let Some(seed) = args.seed {
                spec.seed = seed;
            }
            generate_synthetic(&spec, &args.out)?;
            println!(
                "wrote {}.oschdr.json / .oscdat / .gt.json / .z.csv ({} channels, {} trials)",
                args.out.display(),
                spec.n_channels,
                spec.n_trials
            );
        }
        Command::Plots(args) => {
            if !args.out.join("manifest.json").exists() {
                bail!("{} holds no manifest.json; run `mine` first", args.out.display());
            }
            let n = emit_plots(&args.out)?;
            println!("wrote {n} envelope panel files under {}", args.out.join("plots").display());
        }
        Command::Inspect(args) => {
            let manifest = std::fs::read_to_string(args.out.join("manifest.json"))
                .with_context(|| format!("no manifest in {}", args.out.display()))?;
            println!("{manifest}");
        }
    }
    Ok(())
}
