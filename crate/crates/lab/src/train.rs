//! One-vs-rest training with canonicalization in the loop, evaluation and
//! stratified folds.
//!
//! Per-sample searches run in parallel; every quantity that depends on
//! summation order (losses, gradients, counts) is reduced sequentially in
//! sample order, so results do not depend on the number of threads.

use anisocanon::canon::{Budget, MultiClassCanonicalizer, Trainable, TransformationFamily};
use anisocanon::nn::{bce_with_logits, Adam, Parameterized};
use anisocanon::rng::RngStream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

const SHUFFLE_TAG: u64 = 0x7368_7566;
const SEARCH_TAG: u64 = 0x7365_6172;
const VALID_TAG: u64 = 0x7661_6c69;
const SPLIT_TAG: u64 = 0x7370_6c69;
const EVAL_TAG: u64 = 0x6576_616c;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub budget: Budget,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 100,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            patience: 100,
            validation_fraction: 0.1,
            budget: Budget::sampling(8),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (0 means the initial parameters).
    pub best_epoch: usize,
    /// Candidate evaluations spent by canonicalization during training.
    pub evaluations: u64,
}

type Input<M> = <<M as MultiClassCanonicalizer>::Family as TransformationFamily>::Input;
type Transform<M> = <<M as MultiClassCanonicalizer>::Family as TransformationFamily>::Transform;

/// Stratified split of `indices` into (train, validation) with roughly
/// `fraction` of every class held out.
pub fn validation_split(indices: &[usize], labels: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    if fraction <= 0.0 {
        return (indices.to_vec(), Vec::new());
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut rng = RngStream::new(seed, SPLIT_TAG);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for c in 0..classes {
        let mut members: Vec<usize> = indices.iter().copied().filter(|&i| labels[i] == c).collect();
        rng.shuffle(&mut members);
        let hold = ((members.len() as f64) * fraction).round() as usize;
        let hold = hold.min(members.len().saturating_sub(1));
        val.extend_from_slice(&members[..hold]);
        train.extend_from_slice(&members[hold..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Stratified `k`-fold partition: every class is shuffled and dealt round
/// robin, continuing across classes so fold sizes differ by at most one.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> LabResult<Vec<Vec<usize>>> {
    if folds < 2 || folds > labels.len() {
        return Err(LabError::BadFoldCount { folds, samples: labels.len() });
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut rng = RngStream::new(seed, SPLIT_TAG ^ 1);
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        rng.shuffle(&mut members);
        for i in members {
            out[next % folds].push(i);
            next += 1;
        }
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

fn search_rng(seed: u64, epoch: usize, sample: usize) -> RngStream {
    RngStream::new(seed, SEARCH_TAG).derive(&[epoch as u64, sample as u64])
}

/// Mean summed-BCE over `indices`, canonicalizing with fixed streams.
fn mean_loss<M>(model: &M, inputs: &[Input<M>], labels: &[usize], indices: &[usize], budget: &Budget, seed: u64) -> LabResult<f64>
where
    M: Trainable + Sync,
    Input<M>: Sync,
    Transform<M>: Send,
{
    let per_sample: Vec<f64> = indices
        .par_iter()
        .map(|&i| {
            let rng = RngStream::new(seed, VALID_TAG).derive(&[i as u64]);
            let decisions = model.decide(&inputs[i], budget, &rng)?;
            let s: Vec<f64> = decisions.iter().map(|d| d.logit).collect();
            let y: Vec<f64> = (0..s.len()).map(|d| if d == labels[i] { 1.0 } else { 0.0 }).collect();
            Ok(bce_with_logits(&s, &y, None)?.0)
        })
        .collect::<LabResult<_>>()?;
    if per_sample.is_empty() {
        return Ok(0.0);
    }
    Ok(per_sample.iter().sum::<f64>() / per_sample.len() as f64)
}

/// Trains `model` on `indices`, keeping the parameters with the lowest
/// validation loss.
pub fn train_one_vs_rest<M>(
    model: &mut M,
    inputs: &[Input<M>],
    labels: &[usize],
    indices: &[usize],
    cfg: &TrainConfig,
) -> LabResult<TrainOutcome>
where
    M: Trainable + Sync,
    Input<M>: Sync,
    Transform<M>: Send,
{
    if indices.is_empty() {
        return Err(LabError::Data("empty training set".into()));
    }
    let classes = model.num_classes();
    if let Some(&bad) = indices.iter().find(|&&i| labels[i] >= classes) {
        return Err(LabError::Data(format!("label {} out of range", labels[bad])));
    }
    let mut outcome = TrainOutcome { history: Vec::new(), best_epoch: 0, evaluations: 0 };
    if cfg.epochs == 0 {
        return Ok(outcome);
    }
    let (train, val) = validation_split(indices, labels, cfg.validation_fraction, cfg.seed);
    let mut adam = Adam::new(model.net().num_params(), cfg.learning_rate).with_weight_decay(cfg.weight_decay);
    let mut best_params = model.net().params();
    let mut best_val = if val.is_empty() {
        f64::INFINITY
    } else {
        mean_loss(model, inputs, labels, &val, &cfg.budget, cfg.seed)?
    };
    let mut since_best = 0;
    let batch = cfg.batch_size.max(1);

    for epoch in 1..=cfg.epochs {
        let mut order = train.clone();
        RngStream::new(cfg.seed, SHUFFLE_TAG).derive(&[epoch as u64]).shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let model_ref = &*model;
            let examples = chunk
                .par_iter()
                .map(|&i| {
                    let rng = search_rng(cfg.seed, epoch, i);
                    let (ex, dec) = model_ref.canonical_example(&inputs[i], labels[i], &cfg.budget, &rng)?;
                    Ok((ex, dec.iter().map(|d| d.evaluations as u64).sum::<u64>()))
                })
                .collect::<LabResult<Vec<_>>>()?;
            outcome.evaluations += examples.iter().map(|e| e.1).sum::<u64>();
            let examples: Vec<_> = examples.into_iter().map(|e| e.0).collect();
            let (loss, grads) = model.net().loss_and_gradient(&examples)?;
            total += loss;
            // Mean over the batch keeps the step size independent of batch size.
            let scale = 1.0 / examples.len() as f64;
            let grads: Vec<f64> = grads.iter().map(|g| g * scale).collect();
            adam.step_model(model.net_mut(), &grads)?;
        }
        let train_loss = total / train.len() as f64;
        let validation_loss = if val.is_empty() {
            None
        } else {
            Some(mean_loss(model, inputs, labels, &val, &cfg.budget, cfg.seed)?)
        };
        outcome.history.push(EpochRecord { epoch, train_loss, validation_loss });
        match validation_loss {
            Some(v) if v < best_val => {
                best_val = v;
                best_params = model.net().params();
                outcome.best_epoch = epoch;
                since_best = 0;
            }
            Some(_) => {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
            None => outcome.best_epoch = epoch,
        }
    }
    if !val.is_empty() {
        model.net_mut().set_params(&best_params)?;
    }
    Ok(outcome)
}

/// One line of the decision audit log: what the search chose for one
/// (sample, class) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub sample: usize,
    pub class: usize,
    pub candidate_index: usize,
    pub refine_gain: f64,
    pub logit: f64,
    pub objective: f64,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    pub predictions: Vec<usize>,
    pub evaluations: u64,
    pub decisions: Vec<DecisionRecord>,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Canonicalize-and-classify every sample in `indices`.
pub fn evaluate<M>(
    model: &M,
    inputs: &[Input<M>],
    labels: &[usize],
    indices: &[usize],
    budget: &Budget,
    seed: u64,
) -> LabResult<Evaluation>
where
    M: MultiClassCanonicalizer + Sync,
    Input<M>: Sync,
    Transform<M>: Send,
{
    let per_sample: Vec<(usize, Vec<DecisionRecord>)> = indices
        .par_iter()
        .map(|&i| {
            let rng = RngStream::new(seed, EVAL_TAG).derive(&[i as u64]);
            let decisions = model.decide(&inputs[i], budget, &rng)?;
            let class = anisocanon::canon::one_vs_rest_decide(&decisions, model.num_classes())?;
            let records = decisions
                .iter()
                .map(|d| DecisionRecord {
                    sample: i,
                    class: d.class,
                    candidate_index: d.candidate_index,
                    refine_gain: d.refine_gain,
                    logit: d.logit,
                    objective: d.objective,
                    evaluations: d.evaluations,
                })
                .collect();
            Ok((class, records))
        })
        .collect::<LabResult<_>>()?;
    let predictions: Vec<usize> = per_sample.iter().map(|p| p.0).collect();
    let correct = predictions.iter().zip(indices).filter(|(p, &i)| **p == labels[i]).count();
    let decisions: Vec<DecisionRecord> = per_sample.into_iter().flat_map(|p| p.1).collect();
    Ok(Evaluation {
        correct,
        total: indices.len(),
        predictions,
        evaluations: decisions.iter().map(|d| d.evaluations as u64).sum(),
        decisions,
    })
}
