//! Experiment command line: dataset generation, training runs, lambda sweeps,
//! figure-data reports, step benchmarks, and augmentation contact sheets.

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use dcaug::augment::SpaceVariant;
use dcaug::harness::{self, DatasetSource, ExperimentConfig};
use dcaug::imaging::Image;
use dcaug::selection::RewardVariant;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "dcaug", version, about = "Reward-guided augmentation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct ConfigArgs {
    /// JSON experiment config; defaults apply for every omitted field.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Method variant: domain|label|label-ema|domain-div-label-con|ema-both|ta|erm.
    #[arg(long)]
    variant: Option<String>,
    /// Balancing coefficient in [0, 1].
    #[arg(long)]
    lambda: Option<f64>,
    /// Search space: default|wide|wider.
    #[arg(long)]
    space: Option<String>,
    /// Restrict to a single held-out domain.
    #[arg(long)]
    holdout: Option<usize>,
    /// Also measure affinity/diversity per seed.
    #[arg(long)]
    analytics: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(variant) = &self.variant {
            cfg.variant = RewardVariant::parse(variant)?;
        }
        if let Some(lambda) = self.lambda {
            cfg.lambda = lambda;
        }
        if let Some(space) = &self.space {
            cfg.space = SpaceVariant::parse(space)?;
        }
        if let Some(holdout) = self.holdout {
            cfg.holdout = Some(holdout);
        }
        if self.analytics {
            cfg.analytics = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic dataset to PNGs with a manifest.
    Generate {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate with the configured method over the leave-one-out
    /// protocol; writes CSV results, JSON summary, selection logs, checkpoints.
    Run {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run once per lambda and select the best by source-validation accuracy.
    Sweep {
        #[command(flatten)]
        args: ConfigArgs,
        /// Comma-separated lambda grid.
        #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.5, 0.8])]
        lambdas: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate a result directory into figure-ready CSVs.
    Report {
        /// Directory written by `run` or `sweep`.
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Median per-step training time per method variant.
    Bench {
        #[command(flatten)]
        args: ConfigArgs,
        /// Timed steps per variant (after warmup).
        #[arg(long, default_value_t = 30)]
        steps: usize,
        /// Optional output directory for bench.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Contact sheet of every transform across magnitude quantiles.
    DumpGrid {
        /// Search space: default|wide|wider.
        #[arg(long, default_value = "wider")]
        space: String,
        /// Synthetic sample side length when no image is given.
        #[arg(long, default_value_t = 64)]
        side: usize,
        /// Optional input PNG.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn configure_workers() -> Result<()> {
    #[cfg(feature = "parallel")]
    if let Ok(workers) = std::env::var("DCAUG_WORKERS") {
        let n: usize = workers
            .parse()
            .with_context(|| format!("DCAUG_WORKERS must be a number, got `{workers}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("initializing worker pool")?;
    }
    Ok(())
}

fn main() -> Result<()> {
    configure_workers()?;
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { args, out } => {
            let cfg = args.resolve()?;
            let spec = match &cfg.dataset {
                DatasetSource::Spec(spec) => spec.clone(),
                DatasetSource::Path(p) => {
                    anyhow::bail!("generate needs an inline dataset spec, not a path ({p})")
                }
            };
            let seed = args.seed.unwrap_or(cfg.dataset_seed);
            harness::generate(&spec, seed, &out)?;
            println!(
                "generated {} domains x {} samples at side {} -> {}",
                spec.domains.len(),
                spec.samples_per_domain,
                spec.side,
                out.display()
            );
        }
        Command::Run { args, out } => {
            let cfg = args.resolve()?;
            let outcome = harness::run(&cfg, &out)?;
            for (domain, mean, std) in &outcome.table.per_domain {
                println!("holdout {domain}: {:.4} +- {:.4}", mean, std);
            }
            println!(
                "{} (lambda {}): overall {:.4} +- {:.4}",
                cfg.variant.method_name(),
                cfg.lambda,
                outcome.table.overall_mean,
                outcome.table.overall_std
            );
            println!("results: {}", outcome.results_csv.display());
        }
        Command::Sweep { args, lambdas, out } => {
            let cfg = args.resolve()?;
            let outcome = harness::sweep_lambda(&cfg, &lambdas, &out)?;
            for (holdout, lambda, val, test) in &outcome.selected {
                println!(
                    "holdout {holdout}: best lambda {lambda} (val {:.4}, test {:.4})",
                    val, test
                );
            }
            println!("grid: {}", out.join("sweep.csv").display());
        }
        Command::Report { results, out } => {
            let written = harness::report(&results, &out)?;
            for path in written {
                println!("wrote {}", path.display());
            }
        }
        Command::Bench { args, steps, out } => {
            let cfg = args.resolve()?;
            let report = harness::bench_step(&cfg, 3, steps)?;
            println!("variant        median_ms   ratio_vs_erm");
            for row in &report.rows {
                println!(
                    "{:<14} {:>9.3}   {:>6.2}x",
                    row.variant, row.median_ms, row.ratio_vs_erm
                );
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                let path = dir.join("bench.csv");
                std::fs::write(&path, report.to_csv())?;
                println!("wrote {}", path.display());
            }
        }
        Command::DumpGrid {
            space,
            side,
            image,
            out,
        } => {
            let variant = SpaceVariant::parse(&space)?;
            let base = match image {
                Some(path) => Some(Image::load_png(&path)?),
                None => None,
            };
            let path = harness::dump_grid(variant, side, base, &out)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
