use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{HarnessError, Sample};
use crate::diffcore::{Gradients, Optimizer, Real, Tape};
use crate::metrics::{evaluate, EvalReport, DEFAULT_CHI};
use crate::potentialnet::{batch_weights, weighted_loss, ModelConfig, PotentialNet, PreparedGraph};

pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_EPOCHS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { epochs: DEFAULT_EPOCHS, batch_size: DEFAULT_BATCH_SIZE }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.epochs == 0 {
            return Err(HarnessError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(HarnessError::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_score: Option<f64>,
}

/// Result of one training run. `model` holds the best-epoch weights (the
/// last epoch when no validation score was available).
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: PotentialNet<f32>,
    pub best_epoch: Option<usize>,
    pub best_score: Option<f64>,
    pub history: Vec<EpochRecord>,
    /// Set when the loss or the weights became non-finite.
    pub failure: Option<String>,
}

impl TrainOutcome {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

/// Independent ChaCha stream `stream` of `seed`.
pub(crate) fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn prepare_all(model: &PotentialNet<f32>, samples: &[&Sample]) -> Result<Vec<PreparedGraph<f32>>, HarnessError> {
    samples
        .par_iter()
        .map(|s| model.prepare(&s.graph).map_err(|e| HarnessError::sample(&s.id, e)))
        .collect()
}

fn predict_prepared(model: &PotentialNet<f32>, graphs: &[PreparedGraph<f32>]) -> Result<Vec<Vec<f64>>, HarnessError> {
    graphs.par_iter().map(|g| Ok(model.predict(g)?)).collect()
}

/// Predictions for `samples`, one row per sample.
pub fn predict_samples(model: &PotentialNet<f32>, samples: &[&Sample]) -> Result<Vec<Vec<f64>>, HarnessError> {
    predict_prepared(model, &prepare_all(model, samples)?)
}

/// Full metric report of `model` on `samples`.
pub fn evaluate_model(
    model: &PotentialNet<f32>,
    samples: &[&Sample],
    tasks: &[String],
    chi: f64,
) -> Result<EvalReport, HarnessError> {
    let preds = predict_samples(model, samples)?;
    let labels: Vec<Vec<Option<f64>>> = samples.iter().map(|s| s.labels.clone()).collect();
    Ok(evaluate(&labels, &preds, tasks, model.config.task_kind, chi)?)
}

fn selection_score(
    model: &PotentialNet<f32>,
    graphs: &[PreparedGraph<f32>],
    samples: &[&Sample],
) -> Result<Option<f64>, HarnessError> {
    if samples.is_empty() {
        return Ok(None);
    }
    let preds = predict_prepared(model, graphs)?;
    if preds.iter().flatten().any(|v| !v.is_finite()) {
        return Ok(None);
    }
    let labels: Vec<Vec<Option<f64>>> = samples.iter().map(|s| s.labels.clone()).collect();
    let tasks: Vec<String> = (0..model.config.n_tasks).map(|j| format!("t{j}")).collect();
    Ok(evaluate(&labels, &preds, &tasks, model.config.task_kind, DEFAULT_CHI).ok().and_then(|r| r.selection_score()))
}

/// Minibatch training. Each epoch shuffles the training samples, then for
/// every batch sums per-sample gradients (computed in parallel, merged in
/// sample order) and takes one optimizer step. After each epoch the
/// validation Pearson (ROC AUC for classification) is computed and the best
/// epoch's weights are retained; the first epoch wins ties.
pub fn train(
    config: &ModelConfig,
    train_set: &[&Sample],
    valid_set: &[&Sample],
    opts: &TrainOptions,
) -> Result<TrainOutcome, HarnessError> {
    opts.validate()?;
    if train_set.is_empty() {
        return Err(HarnessError::Config("training set is empty".into()));
    }
    let mut model = PotentialNet::<f32>::new(config.clone())?;
    let train_graphs = prepare_all(&model, train_set)?;
    let valid_graphs = prepare_all(&model, valid_set)?;
    let kind = config.task_kind;
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, config.weight_decay, &model.params);
    let mut shuffle_rng = rng_stream(config.seed, 1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(opts.epochs);
    let mut best: Option<(usize, f64, PotentialNet<f32>)> = None;
    let mut failure = None;
    'epochs: for epoch in 1..=opts.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0;
        for batch in order.chunks(opts.batch_size) {
            let rows: Vec<&[Option<f64>]> = batch.iter().map(|&i| train_set[i].labels.as_slice()).collect();
            let weights = match batch_weights(&rows, kind) {
                Ok(w) => w,
                // a batch without any label contributes nothing
                Err(_) => continue,
            };
            let params = &model.params;
            let model_ref = &model;
            let per_sample: Vec<Result<(Gradients<f32>, f64), HarnessError>> = batch
                .par_iter()
                .zip(weights.par_iter())
                .map(|(&i, w)| {
                    let mut tape = Tape::new(params);
                    let mut rng = rng_stream(config.seed, 2 + ((epoch as u64) << 32 | i as u64));
                    let pred = model_ref.forward(&mut tape, &train_graphs[i], true, &mut rng)?;
                    let l = weighted_loss(&mut tape, pred, &train_set[i].labels, w, kind)?;
                    let value = tape.value(l).data()[0].as_f64();
                    Ok((tape.backward(l)?, value))
                })
                .collect();
            let mut grads = Gradients::zeros_like(&model.params);
            let mut batch_loss = 0.0;
            for r in per_sample {
                let (g, l) = r?;
                grads.accumulate(&g);
                batch_loss += l;
            }
            if !batch_loss.is_finite() || !grads.all_finite() {
                failure = Some(format!("loss diverged at epoch {epoch}"));
                break 'epochs;
            }
            optimizer.step(&mut model.params, &grads);
            if !model.params.all_finite() {
                failure = Some(format!("weights became non-finite at epoch {epoch}"));
                break 'epochs;
            }
            epoch_loss += batch_loss;
            n_batches += 1;
        }
        let train_loss = if n_batches > 0 { epoch_loss / n_batches as f64 } else { 0.0 };
        let valid_score = selection_score(&model, &valid_graphs, valid_set)?;
        log::debug!("epoch {epoch}: train loss {train_loss:.6}, validation {valid_score:?}");
        if let Some(s) = valid_score {
            if best.as_ref().is_none_or(|(_, b, _)| s > *b) {
                best = Some((epoch, s, model.clone()));
            }
        }
        history.push(EpochRecord { epoch, train_loss, valid_score });
    }
    let (best_epoch, best_score, model) = match best {
        Some((e, s, m)) => (Some(e), Some(s), m),
        None => (None, None, model),
    };
    Ok(TrainOutcome { model, best_epoch, best_score, history, failure })
}
