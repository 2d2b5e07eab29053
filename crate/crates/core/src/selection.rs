//! The diversity/consistency reward, the per-sample weak-vs-wider selection
//! rule, and the two-phase minibatch training step.
//!
//! Each step first freezes all parameters and, per sample, builds a weak and a
//! wider candidate, scores both with the reward
//! `r = (1 - lambda) * r_div - lambda * r_con`, and keeps the wider candidate
//! exactly when its reward is at least the weak one's (ties go to wider).
//! Only then are the classifiers updated on the selected images. Candidate
//! evaluation across a minibatch is embarrassingly parallel; updates are
//! serialized.

use crate::augment::{self, AppliedTransform, SearchSpace, WeakConfig};
use crate::error::{Error, Result};
use crate::exec;
use crate::imaging::Image;
use crate::model::{cross_entropy, flatten_image, Classifier, EmaState, ModelShape, OptimState};
use crate::rng::{purpose, SampleRng, StreamKey};
use serde::{Deserialize, Serialize};

/// Method variant: which models and labels feed the two reward terms, or a
/// forced policy that skips the comparison entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardVariant {
    /// Diversity and consistency from the domain classifier and its EMA.
    Domain,
    /// Diversity and consistency from the label classifier and its EMA.
    Label,
    /// Same training as `Label`, but the EMA shadow is the deployed model.
    LabelEma,
    /// Ablation: domain student for diversity, label student for consistency.
    DomainDivLabelCon,
    /// Ablation: EMA versions of both classifiers.
    EmaBoth,
    /// Always take the wider candidate (uniform sampling, no rejection).
    Ta,
    /// Always take the weak candidate (the plain baseline).
    Erm,
}

pub const ALL_VARIANTS: [RewardVariant; 7] = [
    RewardVariant::Domain,
    RewardVariant::Label,
    RewardVariant::LabelEma,
    RewardVariant::DomainDivLabelCon,
    RewardVariant::EmaBoth,
    RewardVariant::Ta,
    RewardVariant::Erm,
];

impl RewardVariant {
    /// Config/CLI tag.
    pub fn tag(self) -> &'static str {
        match self {
            RewardVariant::Domain => "domain",
            RewardVariant::Label => "label",
            RewardVariant::LabelEma => "label-ema",
            RewardVariant::DomainDivLabelCon => "domain-div-label-con",
            RewardVariant::EmaBoth => "ema-both",
            RewardVariant::Ta => "ta",
            RewardVariant::Erm => "erm",
        }
    }

    /// Human-facing method name used in result tables.
    pub fn method_name(self) -> &'static str {
        match self {
            RewardVariant::Domain => "dcaug-domain",
            RewardVariant::Label => "dcaug-label",
            RewardVariant::LabelEma => "teach-dcaug-label",
            RewardVariant::DomainDivLabelCon => "dcaug-div-domain-con-label",
            RewardVariant::EmaBoth => "dcaug-ema-both",
            RewardVariant::Ta => "ta",
            RewardVariant::Erm => "erm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ALL_VARIANTS
            .into_iter()
            .find(|v| v.tag() == s)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown variant `{s}` (expected one of domain|label|label-ema|domain-div-label-con|ema-both|ta|erm)"
                ))
            })
    }

    /// Forced decision for the degenerate policies, if any.
    pub fn forced_decision(self) -> Option<Decision> {
        match self {
            RewardVariant::Ta => Some(Decision::Wider),
            RewardVariant::Erm => Some(Decision::Weak),
            _ => None,
        }
    }

    pub fn needs_domain_classifier(self) -> bool {
        matches!(
            self,
            RewardVariant::Domain | RewardVariant::DomainDivLabelCon | RewardVariant::EmaBoth
        )
    }

    pub fn needs_label_ema(self) -> bool {
        matches!(
            self,
            RewardVariant::Label | RewardVariant::LabelEma | RewardVariant::EmaBoth
        )
    }

    pub fn needs_domain_ema(self) -> bool {
        matches!(self, RewardVariant::Domain | RewardVariant::EmaBoth)
    }

    pub fn needs_domain_label(self) -> bool {
        self.needs_domain_classifier()
    }
}

/// Balancing coefficient and variant tag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub lambda: f64,
    pub variant: RewardVariant,
}

impl RewardConfig {
    pub fn new(variant: RewardVariant, lambda: f64) -> Result<Self> {
        let cfg = RewardConfig { lambda, variant };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Diversity term, consistency term, and combined reward
/// `r = (1 - lambda) * r_div - lambda * r_con`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_div: f64,
    pub r_con: f64,
    pub r: f64,
}

impl RewardBreakdown {
    pub fn new(r_div: f64, r_con: f64, lambda: f64) -> Self {
        RewardBreakdown {
            r_div,
            r_con,
            r: (1.0 - lambda) * r_div - lambda * r_con,
        }
    }

    pub const ZERO: RewardBreakdown = RewardBreakdown {
        r_div: 0.0,
        r_con: 0.0,
        r: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Weak,
    Wider,
}

/// The selection rule: wider wins exactly when its reward is at least the
/// weak candidate's.
pub fn decide(weak: &RewardBreakdown, wider: &RewardBreakdown) -> Decision {
    if wider.r >= weak.r {
        Decision::Wider
    } else {
        Decision::Weak
    }
}

/// Per-sample audit record: identity, both reward breakdowns, the sampled
/// wider transform, and the decision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub step: u64,
    pub slot: usize,
    pub sample: u64,
    pub domain: usize,
    pub label: usize,
    pub weak: RewardBreakdown,
    pub wider: RewardBreakdown,
    pub transform: AppliedTransform,
    pub decision: Decision,
}

/// One labeled training input inside a minibatch. `domain` is the global
/// domain index; `domain_local` is the classifier target (the index among the
/// training domains of the current run) when domain labels are available.
#[derive(Debug, Clone)]
pub struct BatchSample {
    pub image: Image,
    pub label: usize,
    pub domain: usize,
    pub domain_local: Option<usize>,
    pub sample_id: u64,
}

/// All trainable state of one method run: the label classifier, the optional
/// domain classifier, their EMA shadows when the variant uses them, and the
/// optimizers.
#[derive(Debug, Clone)]
pub struct MethodState {
    pub cfg: RewardConfig,
    pub label_model: Classifier,
    pub label_ema: Option<EmaState>,
    pub domain_model: Option<Classifier>,
    pub domain_ema: Option<EmaState>,
    pub label_optim: OptimState,
    pub domain_optim: Option<OptimState>,
}

impl MethodState {
    pub fn new(
        cfg: RewardConfig,
        label_shape: ModelShape,
        train_domains: usize,
        ema_beta: f64,
        lr: f64,
        weight_decay: f64,
        run_seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut init = SampleRng::derive(StreamKey::new(run_seed, 0, 0), purpose::INIT);
        let label_model = Classifier::init(label_shape, &mut init.rng);
        let label_ema = if cfg.variant.needs_label_ema() {
            Some(EmaState::new(&label_model, ema_beta)?)
        } else {
            None
        };
        let (domain_model, domain_ema, domain_optim) = if cfg.variant.needs_domain_classifier() {
            if train_domains < 2 {
                return Err(Error::InvalidParameter(
                    "domain-based variants need at least 2 training domains".into(),
                ));
            }
            let shape = ModelShape::new(label_shape.input, label_shape.hidden, train_domains);
            let mut init = SampleRng::derive(StreamKey::new(run_seed, 0, 1), purpose::INIT);
            let h = Classifier::init(shape, &mut init.rng);
            let ema = if cfg.variant.needs_domain_ema() {
                Some(EmaState::new(&h, ema_beta)?)
            } else {
                None
            };
            let optim = OptimState::new(shape, lr, weight_decay);
            (Some(h), ema, Some(optim))
        } else {
            (None, None, None)
        };
        Ok(MethodState {
            cfg,
            label_optim: OptimState::new(label_shape, lr, weight_decay),
            label_model,
            label_ema,
            domain_model,
            domain_ema,
            domain_optim,
        })
    }

    /// The model to deploy after training: the EMA shadow for the
    /// EMA-final variant, the plain label classifier otherwise.
    pub fn final_classifier(&self) -> &Classifier {
        match self.cfg.variant {
            RewardVariant::LabelEma => {
                &self
                    .label_ema
                    .as_ref()
                    .expect("label-ema variant maintains a shadow")
                    .params
            }
            _ => &self.label_model,
        }
    }

    /// Combined checksum over every parameter set, for frozen-phase purity
    /// assertions.
    pub fn checksum(&self) -> u64 {
        let mut h = self.label_model.checksum();
        for c in [
            self.label_ema.as_ref().map(|e| &e.params),
            self.domain_model.as_ref(),
            self.domain_ema.as_ref().map(|e| &e.params),
        ]
        .into_iter()
        .flatten()
        {
            h ^= c.checksum().rotate_left(17);
        }
        h
    }

    /// The (diversity, consistency) scoring models and whether each term
    /// targets the domain label rather than the class label.
    fn reward_models(&self) -> Result<RewardModels<'_>> {
        let dom = || -> Result<&Classifier> {
            self.domain_model.as_ref().ok_or_else(|| {
                Error::InvalidParameter("variant requires a domain classifier".into())
            })
        };
        let dom_ema = || -> Result<&Classifier> {
            self.domain_ema
                .as_ref()
                .map(|e| &e.params)
                .ok_or_else(|| Error::InvalidParameter("variant requires a domain EMA".into()))
        };
        let lab_ema = || -> Result<&Classifier> {
            self.label_ema
                .as_ref()
                .map(|e| &e.params)
                .ok_or_else(|| Error::InvalidParameter("variant requires a label EMA".into()))
        };
        match self.cfg.variant {
            RewardVariant::Domain => Ok(((dom()?, true), (dom_ema()?, true))),
            RewardVariant::Label | RewardVariant::LabelEma => {
                Ok(((&self.label_model, false), (lab_ema()?, false)))
            }
            RewardVariant::DomainDivLabelCon => Ok(((dom()?, true), (&self.label_model, false))),
            RewardVariant::EmaBoth => Ok(((dom_ema()?, true), (lab_ema()?, false))),
            RewardVariant::Ta | RewardVariant::Erm => Err(Error::InvalidParameter(format!(
                "policy `{}` defines no reward",
                self.cfg.variant.tag()
            ))),
        }
    }
}

/// Scoring model and domain-target flag for each reward term.
type RewardModels<'a> = ((&'a Classifier, bool), (&'a Classifier, bool));

fn term_target(
    targets_domain: bool,
    label: usize,
    domain_local: Option<usize>,
    variant: RewardVariant,
) -> Result<usize> {
    if targets_domain {
        domain_local.ok_or(Error::MissingDomainLabel {
            variant: variant.tag().into(),
        })
    } else {
        Ok(label)
    }
}

/// Reward breakdown for a single candidate image on the frozen state.
pub fn reward_components(
    state: &MethodState,
    x: &Image,
    label: usize,
    domain_local: Option<usize>,
) -> Result<RewardBreakdown> {
    let ((div_model, div_dom), (con_model, con_dom)) = state.reward_models()?;
    let flat = flatten_image(x);
    let div_target = term_target(div_dom, label, domain_local, state.cfg.variant)?;
    let con_target = term_target(con_dom, label, domain_local, state.cfg.variant)?;
    let r_div = cross_entropy(&div_model.forward(&flat)?, div_target)?;
    let r_con = cross_entropy(&con_model.forward(&flat)?, con_target)?;
    Ok(RewardBreakdown::new(r_div, r_con, state.cfg.lambda))
}

/// Score both candidates on the frozen state and pick one per the selection
/// rule. Forced policies return zero breakdowns and their fixed decision.
pub fn select<'a>(
    weak_img: &'a Image,
    wider_img: &'a Image,
    label: usize,
    domain_local: Option<usize>,
    state: &MethodState,
) -> Result<(&'a Image, Decision, RewardBreakdown, RewardBreakdown)> {
    if let Some(decision) = state.cfg.variant.forced_decision() {
        let img = match decision {
            Decision::Weak => weak_img,
            Decision::Wider => wider_img,
        };
        return Ok((img, decision, RewardBreakdown::ZERO, RewardBreakdown::ZERO));
    }
    let weak = reward_components(state, weak_img, label, domain_local)?;
    let wider = reward_components(state, wider_img, label, domain_local)?;
    let decision = decide(&weak, &wider);
    let img = match decision {
        Decision::Weak => weak_img,
        Decision::Wider => wider_img,
    };
    Ok((img, decision, weak, wider))
}

/// Output of the frozen phase: per-slot selected images and audit records.
#[derive(Debug)]
pub struct Phase1Output {
    pub chosen: Vec<Image>,
    pub records: Vec<SelectionRecord>,
}

struct Candidates {
    weak: Image,
    wider: Option<Image>,
    transform: AppliedTransform,
}

fn placeholder_transform(key: StreamKey) -> AppliedTransform {
    AppliedTransform {
        op: augment::TransformOp::Posterize,
        magnitude: Some(8.0),
        provenance: key,
    }
}

/// Frozen phase of one step: augment every sample (weak always, wider unless
/// the policy never uses it), score the candidates, and select. Reads state
/// immutably; per-sample work runs in parallel. Candidate streams derive from
/// `(run_seed, step, slot)`, so outcomes are independent of scheduling.
pub fn phase1_select_batch(
    state: &MethodState,
    batch: &[BatchSample],
    weak_cfg: &WeakConfig,
    space: &SearchSpace,
    run_seed: u64,
    step: u64,
) -> Result<Phase1Output> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if state.cfg.variant.needs_domain_label() {
        for s in batch {
            if s.domain_local.is_none() {
                return Err(Error::MissingDomainLabel {
                    variant: state.cfg.variant.tag().into(),
                });
            }
        }
    }
    let skip_wider = state.cfg.variant == RewardVariant::Erm;
    let candidates: Vec<Candidates> = exec::map_indices(batch.len(), |slot| {
        let key = StreamKey::new(run_seed, step, slot as u64);
        let mut weak_rng = SampleRng::derive(key, purpose::WEAK);
        let weak = augment::weak_augment(&batch[slot].image, weak_cfg, &mut weak_rng);
        if skip_wider {
            // the weak-only policy never materializes a wider candidate
            Candidates {
                weak,
                wider: None,
                transform: placeholder_transform(key),
            }
        } else {
            let mut wider_rng = SampleRng::derive(key, purpose::WIDER);
            let (wider, transform) = augment::wider_augment(&weak, space, &mut wider_rng);
            Candidates {
                weak,
                wider: Some(wider),
                transform,
            }
        }
    });

    let forced = state.cfg.variant.forced_decision();
    let (weak_scores, wider_scores) = if forced.is_some() {
        (
            vec![RewardBreakdown::ZERO; batch.len()],
            vec![RewardBreakdown::ZERO; batch.len()],
        )
    } else {
        score_candidates(state, batch, &candidates)?
    };

    let mut chosen = Vec::with_capacity(batch.len());
    let mut records = Vec::with_capacity(batch.len());
    for (slot, cand) in candidates.into_iter().enumerate() {
        let decision = match forced {
            Some(d) => d,
            None => decide(&weak_scores[slot], &wider_scores[slot]),
        };
        let image = match decision {
            Decision::Weak => cand.weak,
            Decision::Wider => cand.wider.expect("wider candidate exists unless weak-only"),
        };
        records.push(SelectionRecord {
            step,
            slot,
            sample: batch[slot].sample_id,
            domain: batch[slot].domain,
            label: batch[slot].label,
            weak: weak_scores[slot],
            wider: wider_scores[slot],
            transform: cand.transform,
            decision,
        });
        chosen.push(image);
    }
    Ok(Phase1Output { chosen, records })
}

/// Batched reward evaluation: one forward pass per scoring model over the
/// concatenated `[weak..., wider...]` candidates. Bit-identical to calling
/// [`reward_components`] per candidate.
fn score_candidates(
    state: &MethodState,
    batch: &[BatchSample],
    candidates: &[Candidates],
) -> Result<(Vec<RewardBreakdown>, Vec<RewardBreakdown>)> {
    let n = batch.len();
    let ((div_model, div_dom), (con_model, con_dom)) = state.reward_models()?;
    let all: Vec<&Image> = candidates
        .iter()
        .map(|c| &c.weak)
        .chain(candidates.iter().map(|c| c.wider.as_ref().expect("scored")))
        .collect();
    let flat: Vec<Vec<f64>> = exec::map(&all, |img| flatten_image(img));
    let refs: Vec<&[f64]> = flat.iter().map(|v| v.as_slice()).collect();
    let div_logits = div_model.logits_batch(&refs)?;
    let con_logits = con_model.logits_batch(&refs)?;
    let variant = state.cfg.variant;
    let lambda = state.cfg.lambda;
    let score = |idx: usize, slot: usize| -> Result<RewardBreakdown> {
        let s = &batch[slot];
        let div_target = term_target(div_dom, s.label, s.domain_local, variant)?;
        let con_target = term_target(con_dom, s.label, s.domain_local, variant)?;
        Ok(RewardBreakdown::new(
            cross_entropy(&div_logits[idx], div_target)?,
            cross_entropy(&con_logits[idx], con_target)?,
            lambda,
        ))
    };
    let mut weak_scores = Vec::with_capacity(n);
    let mut wider_scores = Vec::with_capacity(n);
    for slot in 0..n {
        weak_scores.push(score(slot, slot)?);
        wider_scores.push(score(n + slot, slot)?);
    }
    Ok((weak_scores, wider_scores))
}

/// One full training step: frozen-phase selection, then a label-classifier
/// Adam step on the selected images, then the EMA and domain-classifier
/// updates the variant maintains, in that order.
pub fn train_minibatch(
    state: &mut MethodState,
    batch: &[BatchSample],
    weak_cfg: &WeakConfig,
    space: &SearchSpace,
    run_seed: u64,
    step: u64,
) -> Result<Vec<SelectionRecord>> {
    let phase1 = phase1_select_batch(state, batch, weak_cfg, space, run_seed, step)?;

    let flat: Vec<Vec<f64>> = exec::map(&phase1.chosen, flatten_image);
    let refs: Vec<&[f64]> = flat.iter().map(|v| v.as_slice()).collect();
    let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();

    let (grad, _) = state.label_model.backward_batch(&refs, &labels)?;
    state.label_optim.step(&mut state.label_model, &grad)?;
    if let Some(ema) = state.label_ema.as_mut() {
        ema.update(&state.label_model)?;
    }

    if let Some(domain_model) = state.domain_model.as_mut() {
        let targets: Vec<usize> = batch
            .iter()
            .map(|s| {
                s.domain_local.ok_or(Error::MissingDomainLabel {
                    variant: state.cfg.variant.tag().into(),
                })
            })
            .collect::<Result<_>>()?;
        let (grad, _) = domain_model.backward_batch(&refs, &targets)?;
        state
            .domain_optim
            .as_mut()
            .expect("domain optimizer exists with domain model")
            .step(domain_model, &grad)?;
        if let Some(ema) = state.domain_ema.as_mut() {
            ema.update(domain_model)?;
        }
    }
    Ok(phase1.records)
}
