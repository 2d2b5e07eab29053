//! Experiment configuration, run orchestration, lambda sweeps, report
//! emission, and per-step benchmarking.
//!
//! Every emitted number is determined by the configuration and its seeds:
//! independent `(held-out domain, seed)` runs fan out in parallel, each on a
//! derived seed, and outputs are written in a fixed order with no timestamps.

use crate::augment::{self, MagnitudeRange, SearchSpace, SpaceVariant, WeakConfig, ALL_OPS};
use crate::data::{self, DomainDataset, SyntheticDomainSpec};
use crate::error::{Error, Result};
use crate::exec;
use crate::imaging::Image;
use crate::metrics::{
    self, DiversityOptions, LooCell, LooTable, PolicyKind, RejectionStats,
};
use crate::rng;
use crate::selection::{RewardConfig, RewardVariant, SelectionRecord};
use crate::train::{self, train_run, TrainOptions};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Where the samples come from: an inline synthetic spec or a directory
/// written by `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetSource {
    Path(String),
    Spec(SyntheticDomainSpec),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Spec(SyntheticDomainSpec::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub ema_beta: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 64,
            ema_beta: 0.999,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 1e-3,
            weight_decay: 0.0,
        }
    }
}

/// The full experiment specification. Every field has a default, so a
/// one-line JSON document is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub dataset_seed: u64,
    pub variant: RewardVariant,
    pub lambda: f64,
    pub space: SpaceVariant,
    pub weak: WeakConfig,
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub steps: usize,
    pub batch_per_domain: usize,
    pub seeds: Vec<u64>,
    pub val_fraction: f64,
    pub checkpoint_percent: usize,
    /// Restrict to one held-out domain; `None` runs the full leave-one-out.
    pub holdout: Option<usize>,
    /// Also measure affinity/diversity per seed (slower).
    pub analytics: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSource::default(),
            dataset_seed: 1234,
            variant: RewardVariant::Label,
            lambda: 0.5,
            space: SpaceVariant::Wider,
            weak: WeakConfig::default(),
            model: ModelConfig::default(),
            optim: OptimConfig::default(),
            steps: 2000,
            batch_per_domain: 8,
            seeds: vec![0, 1, 2],
            val_fraction: 0.2,
            checkpoint_percent: 10,
            holdout: None,
            analytics: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if let DatasetSource::Spec(spec) = &self.dataset {
            spec.validate()
                .map_err(|e| Error::config("dataset", e.to_string()))?;
        }
        RewardConfig::new(self.variant, self.lambda)
            .map_err(|e| Error::config("lambda", e.to_string()))?;
        self.weak
            .validate()
            .map_err(|e| Error::config("weak", e.to_string()))?;
        if self.model.hidden == 0 {
            return Err(Error::config("model.hidden", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.model.ema_beta) {
            return Err(Error::config("model.ema_beta", "must lie in [0, 1)"));
        }
        if !self.optim.lr.is_finite() || self.optim.lr <= 0.0 {
            return Err(Error::config("optim.lr", "must be positive"));
        }
        if self.optim.weight_decay < 0.0 {
            return Err(Error::config("optim.weight_decay", "must be >= 0"));
        }
        if self.steps == 0 {
            return Err(Error::config("steps", "must be positive"));
        }
        if self.batch_per_domain == 0 {
            return Err(Error::config("batch_per_domain", "must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed required"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::config("val_fraction", "must lie in [0, 1)"));
        }
        if self.checkpoint_percent == 0 || self.checkpoint_percent > 100 {
            return Err(Error::config(
                "checkpoint_percent",
                "must lie in [1, 100]",
            ));
        }
        Ok(())
    }

    pub fn resolve_dataset(&self) -> Result<DomainDataset> {
        match &self.dataset {
            DatasetSource::Spec(spec) => data::generate_dataset(spec, self.dataset_seed),
            DatasetSource::Path(p) => data::load_dataset(Path::new(p)),
        }
    }

    pub fn train_options(&self) -> Result<TrainOptions> {
        Ok(TrainOptions {
            reward: RewardConfig::new(self.variant, self.lambda)?,
            space_variant: self.space,
            weak: self.weak,
            hidden: self.model.hidden,
            ema_beta: self.model.ema_beta,
            lr: self.optim.lr,
            weight_decay: self.optim.weight_decay,
            steps: self.steps,
            batch_per_domain: self.batch_per_domain,
            val_fraction: self.val_fraction,
            checkpoint_percent: self.checkpoint_percent,
        })
    }

    fn holdouts(&self, dataset: &DomainDataset) -> Result<Vec<usize>> {
        match self.holdout {
            Some(d) if d >= dataset.num_domains() => Err(Error::config(
                "holdout",
                format!("domain {d} out of range for {} domains", dataset.num_domains()),
            )),
            Some(d) => Ok(vec![d]),
            None => Ok((0..dataset.num_domains()).collect()),
        }
    }
}

/// Everything `run` produced, with paths to the files it wrote.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub table: LooTable,
    pub results_csv: PathBuf,
    pub summary_json: PathBuf,
}

#[derive(Serialize)]
struct SummaryCell {
    holdout: usize,
    seed: u64,
    val_accuracy: f64,
    test_accuracy: f64,
    best_step: u64,
}

#[derive(Serialize)]
struct Summary<'a> {
    method: &'a str,
    variant: &'a str,
    lambda: f64,
    space: &'a str,
    overall_mean: f64,
    overall_std: f64,
    per_domain: Vec<SummaryDomain>,
    cells: Vec<SummaryCell>,
}

#[derive(Serialize)]
struct SummaryDomain {
    domain: usize,
    mean: f64,
    std: f64,
}

#[derive(Serialize, Deserialize)]
struct RunMeta {
    holdout: usize,
    seed: u64,
    steps: usize,
    steps_per_epoch: usize,
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    for line in lines {
        writeln!(f, "{line}")?;
    }
    Ok(())
}

struct JobOutput {
    cell: LooCell,
    best_step: u64,
}

/// Execute the configured runs and write results, summaries, selection logs,
/// and checkpoints under `out_dir`.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let dataset = config.resolve_dataset()?;
    let holdouts = config.holdouts(&dataset)?;
    let opts = config.train_options()?;
    std::fs::create_dir_all(out_dir)?;

    let mut jobs = Vec::new();
    for &seed in &config.seeds {
        for &holdout in &holdouts {
            jobs.push((seed, holdout));
        }
    }
    let outputs: Vec<Result<JobOutput>> = exec::map(&jobs, |&(seed, holdout)| {
        let run_seed = rng::derive_seed(&[seed, holdout as u64]);
        let result = train_run(&dataset, holdout, &opts, run_seed)?;

        let log_path = out_dir.join(format!("selections_h{holdout}_s{seed}.jsonl"));
        let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
        for record in &result.records {
            serde_json::to_writer(&mut log, record)?;
            log.write_all(b"\n")?;
        }
        log.flush()?;
        let meta = RunMeta {
            holdout,
            seed,
            steps: opts.steps,
            steps_per_epoch: result.steps_per_epoch,
        };
        std::fs::write(
            out_dir.join(format!("meta_h{holdout}_s{seed}.json")),
            serde_json::to_string_pretty(&meta)?,
        )?;
        result
            .best_model
            .write_checkpoint(&out_dir.join(format!("checkpoint_h{holdout}_s{seed}.bin")))?;

        let holdout_refs: Vec<&data::Sample> = dataset.domains[holdout].iter().collect();
        let test_accuracy = train::accuracy(&result.best_model, &holdout_refs)?;
        Ok(JobOutput {
            cell: LooCell {
                holdout,
                seed,
                val_accuracy: result.best_val_accuracy,
                test_accuracy,
            },
            best_step: result.best_step,
        })
    });
    let outputs = outputs.into_iter().collect::<Result<Vec<_>>>()?;

    let mut csv = vec!["method,variant,lambda,holdout,seed,accuracy".to_string()];
    for out in &outputs {
        csv.push(format!(
            "{},{},{},{},{},{}",
            config.variant.method_name(),
            config.variant.tag(),
            config.lambda,
            out.cell.holdout,
            out.cell.seed,
            out.cell.test_accuracy
        ));
    }
    let results_csv = out_dir.join("results.csv");
    write_lines(&results_csv, &csv)?;

    let cells: Vec<LooCell> = outputs.iter().map(|o| o.cell).collect();
    let table = LooTable::from_cells(cells, &holdouts, &config.seeds);
    let summary = Summary {
        method: config.variant.method_name(),
        variant: config.variant.tag(),
        lambda: config.lambda,
        space: config.space.name(),
        overall_mean: table.overall_mean,
        overall_std: table.overall_std,
        per_domain: table
            .per_domain
            .iter()
            .map(|&(domain, mean, std)| SummaryDomain { domain, mean, std })
            .collect(),
        cells: outputs
            .iter()
            .map(|o| SummaryCell {
                holdout: o.cell.holdout,
                seed: o.cell.seed,
                val_accuracy: o.cell.val_accuracy,
                test_accuracy: o.cell.test_accuracy,
                best_step: o.best_step,
            })
            .collect(),
    };
    let summary_json = out_dir.join("summary.json");
    std::fs::write(&summary_json, serde_json::to_string_pretty(&summary)?)?;

    if config.analytics {
        write_analytics(config, &dataset, out_dir)?;
    }

    Ok(RunOutcome {
        table,
        results_csv,
        summary_json,
    })
}

/// Affinity/diversity probes for the standard policy set, one row per
/// `(policy, seed)`, written as `affinity_diversity.csv`.
fn write_analytics(
    config: &ExperimentConfig,
    dataset: &DomainDataset,
    out_dir: &Path,
) -> Result<()> {
    let policies = [
        PolicyKind::Identity,
        PolicyKind::Weak,
        PolicyKind::Space(SpaceVariant::Wide),
        PolicyKind::Space(SpaceVariant::Wider),
    ];
    let div_opts = DiversityOptions {
        hidden: config.model.hidden,
        lr: config.optim.lr,
        weight_decay: config.optim.weight_decay,
        steps: (config.steps / 4).max(50),
        batch: config.batch_per_domain * dataset.num_domains(),
    };
    let mut rows = vec![
        "policy,seed,affinity,clean_accuracy,augmented_accuracy,diversity".to_string(),
    ];
    for &seed in &config.seeds {
        let probe_seed = rng::derive_seed(&[seed, 0xA11A]);
        let (train_samples, val_samples) =
            train::source_split(dataset, config.val_fraction, probe_seed)?;
        let probe = metrics::train_erm_probe(&train_samples, &div_opts, probe_seed)?;
        for policy in policies {
            let aff = metrics::affinity(&probe, &val_samples, policy, &config.weak, probe_seed)?;
            let div = metrics::diversity(
                &train_samples,
                &div_opts,
                policy,
                &config.weak,
                probe_seed,
            )?;
            rows.push(format!(
                "{},{},{},{},{},{}",
                policy.tag(),
                seed,
                aff.affinity,
                aff.clean_accuracy,
                aff.augmented_accuracy,
                div.mean_final_loss
            ));
        }
    }
    write_lines(&out_dir.join("affinity_diversity.csv"), &rows)
}

/// One sweep row: the per-holdout grid and the validation-selected lambda.
#[derive(Debug, Clone, Serialize)]
pub struct SweepOutcome {
    /// `(lambda, holdout, seed, val_accuracy, test_accuracy)` for every run.
    pub grid: Vec<(f64, usize, u64, f64, f64)>,
    /// Per holdout: the lambda maximizing mean validation accuracy, with its
    /// mean validation and test accuracies.
    pub selected: Vec<(usize, f64, f64, f64)>,
}

/// Run the config once per lambda value and select, per held-out domain, the
/// lambda maximizing source-validation accuracy.
pub fn sweep_lambda(
    config: &ExperimentConfig,
    lambdas: &[f64],
    out_dir: &Path,
) -> Result<SweepOutcome> {
    if lambdas.is_empty() {
        return Err(Error::InvalidParameter("empty lambda grid".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut grid = Vec::new();
    for &lambda in lambdas {
        let mut sub = config.clone();
        sub.lambda = lambda;
        sub.validate()?;
        let outcome = run(&sub, &out_dir.join(format!("lambda_{lambda}")))?;
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&outcome.summary_json)?)?;
        for cell in summary["cells"].as_array().into_iter().flatten() {
            grid.push((
                lambda,
                cell["holdout"].as_u64().unwrap() as usize,
                cell["seed"].as_u64().unwrap(),
                cell["val_accuracy"].as_f64().unwrap(),
                cell["test_accuracy"].as_f64().unwrap(),
            ));
        }
    }

    let mut rows = vec!["lambda,holdout,seed,val_accuracy,test_accuracy".to_string()];
    for (l, h, s, v, t) in &grid {
        rows.push(format!("{l},{h},{s},{v},{t}"));
    }
    write_lines(&out_dir.join("sweep.csv"), &rows)?;

    let mut holdouts: Vec<usize> = grid.iter().map(|r| r.1).collect();
    holdouts.sort_unstable();
    holdouts.dedup();
    let mut selected = Vec::new();
    for &h in &holdouts {
        let mut best: Option<(f64, f64, f64)> = None; // (lambda, mean val, mean test)
        for &lambda in lambdas {
            let vals: Vec<f64> = grid
                .iter()
                .filter(|r| r.0 == lambda && r.1 == h)
                .map(|r| r.3)
                .collect();
            let tests: Vec<f64> = grid
                .iter()
                .filter(|r| r.0 == lambda && r.1 == h)
                .map(|r| r.4)
                .collect();
            let mean_val = vals.iter().sum::<f64>() / vals.len() as f64;
            let mean_test = tests.iter().sum::<f64>() / tests.len() as f64;
            // strict improvement keeps the earliest grid entry on ties
            if best.is_none_or(|(_, v, _)| mean_val > v) {
                best = Some((lambda, mean_val, mean_test));
            }
        }
        let (lambda, val, test) = best.expect("non-empty grid");
        selected.push((h, lambda, val, test));
    }
    let mut rows = vec!["holdout,lambda,val_accuracy,test_accuracy".to_string()];
    for (h, l, v, t) in &selected {
        rows.push(format!("{h},{l},{v},{t}"));
    }
    write_lines(&out_dir.join("selected.csv"), &rows)?;
    Ok(SweepOutcome { grid, selected })
}

/// Aggregate a result directory into figure-ready CSVs: rejection-ratio
/// series per domain, the affinity/diversity scatter, and lambda curves.
/// Emits whichever figures the directory has inputs for; errors if none.
pub fn report(result_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    // rejection-rate series from selection logs
    let mut metas: Vec<RunMeta> = Vec::new();
    for entry in std::fs::read_dir(result_dir)? {
        let path = entry?.path();
        let name = path.file_name().unwrap_or_default().to_string_lossy().to_string();
        if name.starts_with("meta_h") && name.ends_with(".json") {
            metas.push(serde_json::from_str(&std::fs::read_to_string(&path)?)?);
        }
    }
    metas.sort_by_key(|m| (m.seed, m.holdout));
    if !metas.is_empty() {
        let mut rows = vec!["holdout,seed,epoch,domain,wider,weak,ratio".to_string()];
        for meta in &metas {
            let log = result_dir.join(format!("selections_h{}_s{}.jsonl", meta.holdout, meta.seed));
            let records = read_selection_log(&log)?;
            let stats = rejection_series_for(&records, meta.steps_per_epoch);
            for (&(epoch, domain), counts) in &stats.per_epoch {
                rows.push(format!(
                    "{},{},{},{},{},{},{}",
                    meta.holdout,
                    meta.seed,
                    epoch,
                    domain,
                    counts.wider,
                    counts.weak,
                    counts.ratio()
                ));
            }
        }
        let path = out_dir.join("fig_rejection.csv");
        write_lines(&path, &rows)?;
        written.push(path);
    }

    // affinity/diversity scatter
    let scatter_src = result_dir.join("affinity_diversity.csv");
    if scatter_src.exists() {
        let body = std::fs::read_to_string(&scatter_src)?;
        let mut rows = vec!["policy,seed,affinity,diversity".to_string()];
        for line in body.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() >= 6 {
                rows.push(format!("{},{},{},{}", cols[0], cols[1], cols[2], cols[5]));
            }
        }
        let path = out_dir.join("fig_affinity_diversity.csv");
        write_lines(&path, &rows)?;
        written.push(path);
    }

    // lambda curves
    let sweep_src = result_dir.join("sweep.csv");
    if sweep_src.exists() {
        let body = std::fs::read_to_string(&sweep_src)?;
        let mut points: std::collections::BTreeMap<(String, usize), Vec<f64>> =
            std::collections::BTreeMap::new();
        for line in body.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() == 5 {
                points
                    .entry((cols[0].to_string(), cols[1].parse().unwrap_or(0)))
                    .or_default()
                    .push(cols[4].parse().unwrap_or(0.0));
            }
        }
        let mut rows = vec!["lambda,holdout,mean_test_accuracy".to_string()];
        for ((lambda, holdout), accs) in &points {
            let mean = accs.iter().sum::<f64>() / accs.len() as f64;
            rows.push(format!("{lambda},{holdout},{mean}"));
        }
        let path = out_dir.join("fig_lambda.csv");
        write_lines(&path, &rows)?;
        written.push(path);
    }

    if written.is_empty() {
        return Err(Error::MissingInput(format!(
            "no selection logs, analytics, or sweep results under {}",
            result_dir.display()
        )));
    }
    Ok(written)
}

/// Parse a selection JSONL log.
pub fn read_selection_log(path: &Path) -> Result<Vec<SelectionRecord>> {
    let body = std::fs::read_to_string(path)?;
    body.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

fn rejection_series_for(records: &[SelectionRecord], steps_per_epoch: usize) -> RejectionStats {
    metrics::rejection_series(records, steps_per_epoch)
}

/// Median per-step wall time for the forced policies and every reward
/// variant, on identical data and seeds, with ratios relative to the
/// weak-only baseline.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub variant: String,
    pub median_ms: f64,
    pub ratio_vs_erm: f64,
}

/// Time `train_minibatch` per variant: same dataset, same run seed, same batch
/// and augmentation streams; median over `timed` steps after `warmup`.
pub fn bench_step(
    config: &ExperimentConfig,
    warmup: usize,
    timed: usize,
) -> Result<BenchReport> {
    config.validate()?;
    let dataset = config.resolve_dataset()?;
    let opts = config.train_options()?;
    let holdout = config.holdout.unwrap_or(0);
    let run_seed = rng::derive_seed(&[config.seeds[0], holdout as u64]);
    let split = train::LooSplit::new(&dataset, holdout, opts.val_fraction, run_seed)?;
    let space = SearchSpace::new(opts.space_variant, dataset.side);
    let shape = crate::model::ModelShape::for_images(dataset.side, opts.hidden, dataset.classes);

    let variants = [
        RewardVariant::Erm,
        RewardVariant::Ta,
        RewardVariant::Domain,
        RewardVariant::Label,
        RewardVariant::LabelEma,
    ];
    let mut rows = Vec::new();
    let mut erm_median = None;
    for variant in variants {
        let mut state = crate::selection::MethodState::new(
            RewardConfig::new(variant, config.lambda)?,
            shape,
            split.train_domains.len(),
            opts.ema_beta,
            opts.lr,
            opts.weight_decay,
            run_seed,
        )?;
        let mut times = Vec::with_capacity(timed);
        for step in 0..(warmup + timed) as u64 {
            let batch =
                train::sample_batch(&dataset, &split, opts.batch_per_domain, run_seed, step);
            let start = Instant::now();
            crate::selection::train_minibatch(
                &mut state, &batch, &opts.weak, &space, run_seed, step,
            )?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            if step >= warmup as u64 {
                times.push(elapsed);
            }
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = times[times.len() / 2];
        if variant == RewardVariant::Erm {
            erm_median = Some(median);
        }
        let ratio = median / erm_median.expect("erm benched first");
        rows.push(BenchRow {
            variant: variant.tag().to_string(),
            median_ms: median,
            ratio_vs_erm: ratio,
        });
    }
    Ok(BenchReport { rows })
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,median_ms,ratio_vs_erm\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{:.4},{:.4}\n",
                row.variant, row.median_ms, row.ratio_vs_erm
            ));
        }
        out
    }
}

/// Contact sheet of every transform at five magnitude quantiles of the given
/// space, applied to `base` (or a default synthetic sample). Parameterless
/// ops repeat their single output across the row.
pub fn dump_grid(
    space_variant: SpaceVariant,
    side: usize,
    base: Option<Image>,
    out_path: &Path,
) -> Result<PathBuf> {
    let base = match base {
        Some(img) => img,
        None => {
            let spec = SyntheticDomainSpec {
                side,
                samples_per_domain: 5,
                ..Default::default()
            };
            data::generate_dataset(&spec, 7)?.domains[0][0].image.clone()
        }
    };
    let space = SearchSpace::new(space_variant, base.width());
    let quantiles = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut tiles = Vec::with_capacity(ALL_OPS.len() * quantiles.len());
    for op in ALL_OPS {
        match space.range(op) {
            MagnitudeRange::Parameterless => {
                let t = augment::AppliedTransform {
                    op,
                    magnitude: None,
                    provenance: crate::rng::StreamKey::new(0, 0, 0),
                };
                let img = augment::apply(&t, &base)?;
                for _ in &quantiles {
                    tiles.push(img.clone());
                }
            }
            MagnitudeRange::Real(lo, hi) => {
                for q in quantiles {
                    let t = augment::AppliedTransform {
                        op,
                        magnitude: Some(lo + q * (hi - lo)),
                        provenance: crate::rng::StreamKey::new(0, 0, 0),
                    };
                    tiles.push(augment::apply(&t, &base)?);
                }
            }
            MagnitudeRange::Integer(lo, hi) => {
                for q in quantiles {
                    let m = (lo as f64 + q * (hi - lo) as f64).round();
                    let t = augment::AppliedTransform {
                        op,
                        magnitude: Some(m),
                        provenance: crate::rng::StreamKey::new(0, 0, 0),
                    };
                    tiles.push(augment::apply(&t, &base)?);
                }
            }
        }
    }
    let grid = crate::imaging::tile_grid(&tiles, quantiles.len())?;
    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    grid.save_png(out_path)?;
    Ok(out_path.to_path_buf())
}

/// Generate a dataset from a spec and save it with its manifest.
pub fn generate(spec: &SyntheticDomainSpec, seed: u64, out_dir: &Path) -> Result<()> {
    let dataset = data::generate_dataset(spec, seed)?;
    data::save_dataset(&dataset, spec, seed, out_dir)
}
