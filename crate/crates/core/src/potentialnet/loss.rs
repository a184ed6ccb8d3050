use super::{ModelError, TaskKind};
use crate::diffcore::{Real, Tape, Var};

/// Per-element weights making `Σ_i loss_i(weights_i)` the batch objective.
///
/// Regression: mean over samples of the per-sample mean squared error over
/// present tasks. Classification: for each task `j` with `n_j` present labels,
/// `(1 / n_j) Σ_i BCE_ij`, averaged over tasks that have any label.
pub fn batch_weights(labels: &[&[Option<f64>]], kind: TaskKind) -> Result<Vec<Vec<f64>>, ModelError> {
    let t = labels.first().map_or(0, |l| l.len());
    if labels.iter().any(|l| l.len() != t) {
        return Err(ModelError::Labels("label rows have different task counts".into()));
    }
    let mut out: Vec<Vec<f64>> = labels.iter().map(|_| vec![0.0; t]).collect();
    match kind {
        TaskKind::Regression => {
            let present: Vec<usize> = labels.iter().map(|l| l.iter().flatten().count()).collect();
            let samples = present.iter().filter(|&&c| c > 0).count();
            if samples == 0 {
                return Err(ModelError::Labels("no labels present in batch".into()));
            }
            for ((row, l), &c) in out.iter_mut().zip(labels).zip(&present) {
                for (w, y) in row.iter_mut().zip(l.iter()) {
                    if y.is_some() {
                        *w = 1.0 / (samples as f64 * c as f64);
                    }
                }
            }
        }
        TaskKind::MultitaskClassification => {
            let n_j: Vec<usize> = (0..t).map(|j| labels.iter().filter(|l| l[j].is_some()).count()).collect();
            let active = n_j.iter().filter(|&&n| n > 0).count();
            if active == 0 {
                return Err(ModelError::Labels("no labels present in batch".into()));
            }
            for (row, l) in out.iter_mut().zip(labels) {
                for j in 0..t {
                    if l[j].is_some() {
                        row[j] = 1.0 / (n_j[j] as f64 * active as f64);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Weighted loss of one prediction row. Absent labels must carry zero weight.
pub fn weighted_loss<T: Real>(
    tape: &mut Tape<T>,
    pred: Var,
    labels: &[Option<f64>],
    weights: &[f64],
    kind: TaskKind,
) -> Result<Var, ModelError> {
    let targets: Vec<T> = labels.iter().map(|y| T::of(y.unwrap_or(0.0))).collect();
    let w: Vec<T> = weights.iter().zip(labels).map(|(&w, y)| if y.is_some() { T::of(w) } else { T::zero() }).collect();
    Ok(match kind {
        TaskKind::Regression => tape.squared_error(pred, &targets, &w)?,
        TaskKind::MultitaskClassification => tape.bce_with_logits(pred, &targets, &w)?,
    })
}

/// Loss of a single sample: mean over its present tasks.
pub fn loss<T: Real>(tape: &mut Tape<T>, pred: Var, labels: &[Option<f64>], kind: TaskKind) -> Result<Var, ModelError> {
    let weights = batch_weights(&[labels], kind)?;
    weighted_loss(tape, pred, labels, &weights[0], kind)
}
