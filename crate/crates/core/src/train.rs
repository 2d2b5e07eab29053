//! The seeded training loop: leave-one-out splits, domain-quota minibatch
//! sampling, checkpoint evaluation, and best-checkpoint selection.

use crate::augment::{SearchSpace, SpaceVariant, WeakConfig};
use crate::data::{DomainDataset, Sample};
use crate::error::{Error, Result};
use crate::model::{Classifier, ModelShape};
use crate::rng::{purpose, SampleRng, StreamKey};
use crate::selection::{
    train_minibatch, BatchSample, MethodState, RewardConfig, SelectionRecord,
};
use rand::Rng;

/// Train/validation indices for one source domain.
#[derive(Debug, Clone)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Resolved leave-one-out context: which domains train, and each source
/// domain's seeded stratified split.
#[derive(Debug, Clone)]
pub struct LooSplit {
    pub holdout: usize,
    pub train_domains: Vec<usize>,
    pub splits: Vec<SplitIndices>,
}

impl LooSplit {
    /// Stratified-by-class 80/20 split of every source domain, seeded per
    /// `(run_seed, domain)`, holding `holdout` out entirely.
    pub fn new(
        dataset: &DomainDataset,
        holdout: usize,
        val_fraction: f64,
        run_seed: u64,
    ) -> Result<Self> {
        if dataset.num_domains() < 2 {
            return Err(Error::Dataset(
                "leave-one-out needs at least 2 domains".into(),
            ));
        }
        if holdout >= dataset.num_domains() {
            return Err(Error::Dataset(format!(
                "holdout domain {holdout} out of range for {} domains",
                dataset.num_domains()
            )));
        }
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(Error::InvalidParameter(format!(
                "validation fraction {val_fraction} outside [0, 1)"
            )));
        }
        let train_domains: Vec<usize> = (0..dataset.num_domains())
            .filter(|&d| d != holdout)
            .collect();
        let mut splits = Vec::with_capacity(train_domains.len());
        for &d in &train_domains {
            let samples = &dataset.domains[d];
            let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.classes];
            for (i, s) in samples.iter().enumerate() {
                per_class[s.label].push(i);
            }
            let mut rng = SampleRng::derive(StreamKey::new(run_seed, d as u64, 0), purpose::SPLIT);
            let mut train = Vec::new();
            let mut val = Vec::new();
            for class_indices in per_class.iter_mut() {
                // Fisher-Yates shuffle, then peel off the validation tail
                for i in (1..class_indices.len()).rev() {
                    let j = rng.rng.gen_range(0..=i as u64) as usize;
                    class_indices.swap(i, j);
                }
                let n = class_indices.len();
                let n_val = ((n as f64 * val_fraction).round() as usize).min(n.saturating_sub(1));
                let cut = n - n_val;
                train.extend_from_slice(&class_indices[..cut]);
                val.extend_from_slice(&class_indices[cut..]);
            }
            train.sort_unstable();
            val.sort_unstable();
            if train.is_empty() {
                return Err(Error::Dataset(format!("domain {d} has no training samples")));
            }
            splits.push(SplitIndices { train, val });
        }
        Ok(LooSplit {
            holdout,
            train_domains,
            splits,
        })
    }

    /// All validation samples pooled across source domains.
    pub fn validation_samples<'a>(&self, dataset: &'a DomainDataset) -> Vec<&'a Sample> {
        self.train_domains
            .iter()
            .zip(&self.splits)
            .flat_map(|(&d, split)| split.val.iter().map(move |&i| &dataset.domains[d][i]))
            .collect()
    }

    /// All training samples pooled across source domains.
    pub fn training_samples<'a>(&self, dataset: &'a DomainDataset) -> Vec<&'a Sample> {
        self.train_domains
            .iter()
            .zip(&self.splits)
            .flat_map(|(&d, split)| split.train.iter().map(move |&i| &dataset.domains[d][i]))
            .collect()
    }
}

/// Seeded stratified 80/20-style split of every domain, holding nothing out.
/// Returns pooled (train, validation) sample references.
pub fn source_split(
    dataset: &DomainDataset,
    val_fraction: f64,
    run_seed: u64,
) -> Result<(Vec<&Sample>, Vec<&Sample>)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::InvalidParameter(format!(
            "validation fraction {val_fraction} outside [0, 1)"
        )));
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (d, samples) in dataset.domains.iter().enumerate() {
        let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.classes];
        for (i, s) in samples.iter().enumerate() {
            per_class[s.label].push(i);
        }
        let mut rng = SampleRng::derive(StreamKey::new(run_seed, d as u64, 1), purpose::SPLIT);
        for class_indices in per_class.iter_mut() {
            for i in (1..class_indices.len()).rev() {
                let j = rng.rng.gen_range(0..=i as u64) as usize;
                class_indices.swap(i, j);
            }
            let n = class_indices.len();
            let n_val = ((n as f64 * val_fraction).round() as usize).min(n.saturating_sub(1));
            let cut = n - n_val;
            train.extend(class_indices[..cut].iter().map(|&i| &samples[i]));
            val.extend(class_indices[cut..].iter().map(|&i| &samples[i]));
        }
    }
    Ok((train, val))
}

/// Everything a single training run needs besides the dataset and seed.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub reward: RewardConfig,
    pub space_variant: SpaceVariant,
    pub weak: WeakConfig,
    pub hidden: usize,
    pub ema_beta: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub steps: usize,
    pub batch_per_domain: usize,
    pub val_fraction: f64,
    /// Checkpoint cadence as a percentage of total steps.
    pub checkpoint_percent: usize,
}

impl TrainOptions {
    pub fn checkpoint_interval(&self) -> usize {
        (self.steps * self.checkpoint_percent / 100).max(1)
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone)]
pub struct RunResult {
    /// Deployed parameters at the best checkpoint.
    pub best_model: Classifier,
    pub best_val_accuracy: f64,
    pub best_step: u64,
    /// `(step, validation accuracy)` at every checkpoint.
    pub checkpoints: Vec<(u64, f64)>,
    pub records: Vec<SelectionRecord>,
    pub split: LooSplit,
    pub steps_per_epoch: usize,
    pub final_state: MethodState,
}

/// Fraction of correct argmax predictions, evaluated in one batched pass.
pub fn accuracy(model: &Classifier, samples: &[&Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Dataset("accuracy over an empty sample set".into()));
    }
    let images: Vec<&crate::imaging::Image> = samples.iter().map(|s| &s.image).collect();
    let predictions = model.predict_images(&images)?;
    let correct = predictions
        .iter()
        .zip(samples)
        .filter(|(p, s)| **p == s.label)
        .count();
    Ok(correct as f64 / samples.len() as f64)
}

/// Draw one minibatch: `batch_per_domain` uniform draws (with replacement)
/// from each source domain's training split, domains in sorted order. The
/// per-domain quota keeps every training domain represented in every batch.
pub fn sample_batch(
    dataset: &DomainDataset,
    split: &LooSplit,
    batch_per_domain: usize,
    run_seed: u64,
    step: u64,
) -> Vec<BatchSample> {
    let mut batch = Vec::with_capacity(batch_per_domain * split.train_domains.len());
    for (local, (&d, indices)) in split
        .train_domains
        .iter()
        .zip(split.splits.iter().map(|s| &s.train))
        .enumerate()
    {
        let mut rng = SampleRng::derive(StreamKey::new(run_seed, step, d as u64), purpose::BATCH);
        for _ in 0..batch_per_domain {
            let pick = indices[rng.rng.gen_range(0..indices.len() as u64) as usize];
            let sample = &dataset.domains[d][pick];
            batch.push(BatchSample {
                image: sample.image.clone(),
                label: sample.label,
                domain: d,
                domain_local: Some(local),
                sample_id: sample.id,
            });
        }
    }
    batch
}

/// Run one seeded training: split, train for `steps` minibatches, evaluate the
/// deployed classifier on the pooled source validation set at every
/// checkpoint, and keep the checkpoint maximizing validation accuracy
/// (earliest wins ties).
pub fn train_run(
    dataset: &DomainDataset,
    holdout: usize,
    opts: &TrainOptions,
    run_seed: u64,
) -> Result<RunResult> {
    if opts.steps == 0 {
        return Err(Error::InvalidParameter("steps must be positive".into()));
    }
    if opts.batch_per_domain == 0 {
        return Err(Error::InvalidParameter(
            "batch per domain must be positive".into(),
        ));
    }
    opts.weak.validate()?;
    let split = LooSplit::new(dataset, holdout, opts.val_fraction, run_seed)?;
    let val_samples = split.validation_samples(dataset);
    let space = SearchSpace::new(opts.space_variant, dataset.side);
    let shape = ModelShape::for_images(dataset.side, opts.hidden, dataset.classes);
    let mut state = MethodState::new(
        opts.reward,
        shape,
        split.train_domains.len(),
        opts.ema_beta,
        opts.lr,
        opts.weight_decay,
        run_seed,
    )?;

    let train_total: usize = split.splits.iter().map(|s| s.train.len()).sum();
    let batch_size = opts.batch_per_domain * split.train_domains.len();
    let steps_per_epoch = train_total.div_ceil(batch_size).max(1);
    let interval = opts.checkpoint_interval();

    let mut records = Vec::with_capacity(opts.steps * batch_size);
    let mut checkpoints = Vec::new();
    let mut best: Option<(f64, u64, Classifier)> = None;
    for step in 0..opts.steps as u64 {
        let batch = sample_batch(dataset, &split, opts.batch_per_domain, run_seed, step);
        let mut step_records =
            train_minibatch(&mut state, &batch, &opts.weak, &space, run_seed, step)?;
        records.append(&mut step_records);

        let due = (step + 1) % interval as u64 == 0 || step + 1 == opts.steps as u64;
        if due {
            let deployed = state.final_classifier();
            let val_acc = accuracy(deployed, &val_samples)?;
            checkpoints.push((step + 1, val_acc));
            let better = match &best {
                None => true,
                Some((acc, _, _)) => val_acc > *acc,
            };
            if better {
                best = Some((val_acc, step + 1, deployed.clone()));
            }
        }
    }
    let (best_val_accuracy, best_step, best_model) = best.expect("at least one checkpoint");
    Ok(RunResult {
        best_model,
        best_val_accuracy,
        best_step,
        checkpoints,
        records,
        split,
        steps_per_epoch,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, SyntheticDomainSpec};
    use crate::selection::{Decision, RewardVariant};

    fn small_dataset() -> DomainDataset {
        let spec = SyntheticDomainSpec {
            samples_per_domain: 30,
            side: 16,
            ..Default::default()
        };
        generate_dataset(&spec, 11).unwrap()
    }

    fn quick_opts(variant: RewardVariant) -> TrainOptions {
        TrainOptions {
            reward: RewardConfig::new(variant, 0.5).unwrap(),
            space_variant: SpaceVariant::Wider,
            weak: WeakConfig::default(),
            hidden: 12,
            ema_beta: 0.99,
            lr: 1e-3,
            weight_decay: 0.0,
            steps: 8,
            batch_per_domain: 4,
            val_fraction: 0.2,
            checkpoint_percent: 50,
        }
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let ds = small_dataset();
        let split = LooSplit::new(&ds, 1, 0.2, 7).unwrap();
        assert_eq!(split.train_domains, vec![0, 2, 3]);
        for (k, s) in split.splits.iter().enumerate() {
            let d = split.train_domains[k];
            let n = ds.domains[d].len();
            assert_eq!(s.train.len() + s.val.len(), n);
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).copied().collect();
            all.sort_unstable();
            all.dedup();
            assert_eq!(all.len(), n);
            // 30 samples, 6 per class: exactly 1 validation sample per class
            for class in 0..ds.classes {
                let val_count = s
                    .val
                    .iter()
                    .filter(|&&i| ds.domains[d][i].label == class)
                    .count();
                assert_eq!(val_count, 1);
            }
        }
    }

    #[test]
    fn split_is_seed_deterministic() {
        let ds = small_dataset();
        let a = LooSplit::new(&ds, 0, 0.2, 5).unwrap();
        let b = LooSplit::new(&ds, 0, 0.2, 5).unwrap();
        assert_eq!(a.splits[0].train, b.splits[0].train);
        let c = LooSplit::new(&ds, 0, 0.2, 6).unwrap();
        assert_ne!(a.splits[0].train, c.splits[0].train);
    }

    #[test]
    fn batches_respect_the_domain_quota() {
        let ds = small_dataset();
        let split = LooSplit::new(&ds, 2, 0.2, 3).unwrap();
        for step in 0..5 {
            let batch = sample_batch(&ds, &split, 3, 3, step);
            assert_eq!(batch.len(), 9);
            for (k, &d) in split.train_domains.iter().enumerate() {
                assert_eq!(batch.iter().filter(|s| s.domain == d).count(), 3);
                assert!(batch
                    .iter()
                    .filter(|s| s.domain == d)
                    .all(|s| s.domain_local == Some(k)));
            }
        }
    }

    #[test]
    fn batches_never_touch_holdout_or_validation() {
        let ds = small_dataset();
        let split = LooSplit::new(&ds, 0, 0.2, 9).unwrap();
        for step in 0..20 {
            for s in sample_batch(&ds, &split, 4, 9, step) {
                assert_ne!(s.domain, 0);
                let k = split.train_domains.iter().position(|&d| d == s.domain).unwrap();
                assert!(split.splits[k].train.contains(&(s.sample_id as usize)));
                assert!(!split.splits[k].val.contains(&(s.sample_id as usize)));
            }
        }
    }

    #[test]
    fn train_run_produces_checkpoints_and_records() {
        let ds = small_dataset();
        let opts = quick_opts(RewardVariant::Label);
        let out = train_run(&ds, 1, &opts, 21).unwrap();
        assert_eq!(out.checkpoints.len(), 2); // 50% cadence on 8 steps
        assert_eq!(out.records.len(), 8 * 12);
        assert!(out.best_val_accuracy >= 0.0 && out.best_val_accuracy <= 1.0);
        assert!(out.records.iter().all(|r| r.domain != 1));
    }

    #[test]
    fn train_run_is_reproducible() {
        let ds = small_dataset();
        let opts = quick_opts(RewardVariant::Domain);
        let a = train_run(&ds, 0, &opts, 13).unwrap();
        let b = train_run(&ds, 0, &opts, 13).unwrap();
        assert_eq!(a.best_model, b.best_model);
        assert_eq!(a.best_val_accuracy, b.best_val_accuracy);
        assert_eq!(
            serde_json::to_string(&a.records).unwrap(),
            serde_json::to_string(&b.records).unwrap()
        );
    }

    #[test]
    fn erm_run_records_only_weak_decisions() {
        let ds = small_dataset();
        let opts = quick_opts(RewardVariant::Erm);
        let out = train_run(&ds, 3, &opts, 2).unwrap();
        assert!(out.records.iter().all(|r| r.decision == Decision::Weak));
    }

    #[test]
    fn accuracy_bounds_and_empty_error() {
        let ds = small_dataset();
        let samples: Vec<&Sample> = ds.domains[0].iter().collect();
        let model = Classifier::init(
            ModelShape::for_images(ds.side, 8, ds.classes),
            &mut crate::rng::stream(&[1]),
        );
        let acc = accuracy(&model, &samples).unwrap();
        assert!((0.0..=1.0).contains(&acc));
        assert!(accuracy(&model, &[]).is_err());
    }
}
