use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::{evaluate_model, rng_stream, train, TrainOptions};
use super::{HarnessError, Sample};
use crate::metrics::EvalReport;
use crate::potentialnet::{Mode, ModelConfig};

/// Search domains; the defaults are the published grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    /// Shared by `f_bond` and `f_spatial`.
    pub gather_widths: Vec<usize>,
    pub bond_k: Vec<usize>,
    pub spatial_k: Vec<usize>,
    pub f_gather: Vec<usize>,
    pub k: Vec<usize>,
    /// The last width of each entry is replaced by the task count.
    pub fc_widths: Vec<Vec<usize>>,
    pub learning_rate: Vec<f64>,
    pub weight_decay: Vec<f64>,
    pub dropout: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            gather_widths: vec![64, 128],
            bond_k: vec![1, 2],
            spatial_k: vec![1, 2, 3],
            f_gather: vec![64, 128],
            k: vec![1, 2, 3],
            fc_widths: vec![vec![128, 32, 1], vec![128, 1], vec![64, 32, 1], vec![64, 1]],
            learning_rate: vec![1e-3, 2e-4],
            weight_decay: vec![0.0, 1e-7, 1e-5, 1e-3],
            dropout: vec![0.0, 0.25, 0.4, 0.5],
        }
    }
}

fn fc_hidden(w: &[usize]) -> &[usize] {
    &w[..w.len().saturating_sub(1)]
}

impl HyperGrid {
    /// Every dimension must be nonempty; unless `allow_override`, every value
    /// must also belong to the default domain.
    pub fn validate(&self, allow_override: bool) -> Result<(), HarnessError> {
        let table = HyperGrid::default();
        let bad = |msg: String| Err(HarnessError::Config(msg));
        macro_rules! dim {
            ($name:ident, $inside:expr) => {{
                if self.$name.is_empty() {
                    return bad(format!("grid dimension {} is empty", stringify!($name)));
                }
                if !allow_override {
                    for v in &self.$name {
                        if !$inside(v, &table.$name) {
                            return bad(format!(
                                "grid value {:?} for {} is outside {:?}; set allow_grid_override to use it",
                                v,
                                stringify!($name),
                                table.$name
                            ));
                        }
                    }
                }
            }};
        }
        let exact = |v: &usize, d: &Vec<usize>| d.contains(v);
        let real = |v: &f64, d: &Vec<f64>| d.contains(v);
        dim!(gather_widths, exact);
        dim!(bond_k, exact);
        dim!(spatial_k, exact);
        dim!(f_gather, exact);
        dim!(k, exact);
        dim!(fc_widths, |v: &Vec<usize>, d: &Vec<Vec<usize>>| d.iter().any(|w| fc_hidden(w) == fc_hidden(v)));
        dim!(learning_rate, real);
        dim!(weight_decay, real);
        dim!(dropout, real);
        if self.fc_widths.iter().any(|w| w.is_empty()) {
            return bad("FC width lists must be nonempty".into());
        }
        Ok(())
    }

    /// Number of distinct points.
    pub fn size(&self) -> usize {
        self.gather_widths.len()
            * self.bond_k.len()
            * self.spatial_k.len()
            * self.f_gather.len()
            * self.k.len()
            * self.fc_widths.len()
            * self.learning_rate.len()
            * self.weight_decay.len()
            * self.dropout.len()
    }

    /// Uniform draw, each dimension independently.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HyperSample {
        fn pick<T: Clone, R: Rng + ?Sized>(rng: &mut R, v: &[T]) -> T {
            v[rng.gen_range(0..v.len())].clone()
        }
        HyperSample {
            gather_width: pick(rng, &self.gather_widths),
            bond_k: pick(rng, &self.bond_k),
            spatial_k: pick(rng, &self.spatial_k),
            f_gather: pick(rng, &self.f_gather),
            k: pick(rng, &self.k),
            fc_widths: pick(rng, &self.fc_widths),
            learning_rate: pick(rng, &self.learning_rate),
            weight_decay: pick(rng, &self.weight_decay),
            dropout: pick(rng, &self.dropout),
        }
    }
}

/// One point of the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperSample {
    pub gather_width: usize,
    pub bond_k: usize,
    pub spatial_k: usize,
    pub f_gather: usize,
    pub k: usize,
    pub fc_widths: Vec<usize>,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
}

impl HyperSample {
    /// `base` with this sample's values; the final FC width becomes `n_tasks`.
    pub fn apply(&self, base: &ModelConfig) -> ModelConfig {
        let mut c = base.clone();
        c.f_bond = self.gather_width;
        c.f_spatial = self.gather_width;
        c.bond_k = self.bond_k;
        c.spatial_k = self.spatial_k;
        c.f_gather = self.f_gather;
        c.k = self.k;
        let mut fc = self.fc_widths.clone();
        if let Some(last) = fc.last_mut() {
            *last = base.n_tasks;
        }
        c.fc_widths = fc;
        c.learning_rate = self.learning_rate;
        c.weight_decay = self.weight_decay;
        c.dropout = self.dropout;
        if c.mode == Mode::SingleUpdate {
            c.spatial_k = c.spatial_k.max(1);
        }
        c
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldOrder {
    #[default]
    Random,
    /// Contiguous blocks of samples sorted by date.
    Temporal,
}

fn check_k(n: usize, k: usize) -> Result<(), HarnessError> {
    if k < 2 {
        return Err(HarnessError::Config(format!("K = {k}; cross-validation needs at least 2 folds")));
    }
    if n < k {
        return Err(HarnessError::Config(format!("{n} samples cannot form {k} folds")));
    }
    Ok(())
}

fn chunks(order: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = order.len();
    (0..k).map(|f| order[f * n / k..(f + 1) * n / k].to_vec()).collect()
}

/// `k` disjoint, exhaustive folds of `0..n` from a seeded shuffle; sizes
/// differ by at most one.
pub fn kfold_random(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, HarnessError> {
    check_k(n, k)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_stream(seed, 3));
    Ok(chunks(&order, k))
}

/// `k` contiguous folds after sorting by date (ties by position).
pub fn kfold_temporal(ids: &[&str], dates: &HashMap<String, String>, k: usize) -> Result<Vec<Vec<usize>>, HarnessError> {
    check_k(ids.len(), k)?;
    let mut keyed = Vec::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        let d = dates.get(*id).ok_or_else(|| HarnessError::Config(format!("no date for sample {id:?}")))?;
        keyed.push((d.as_str(), i));
    }
    keyed.sort();
    let order: Vec<usize> = keyed.into_iter().map(|(_, i)| i).collect();
    Ok(chunks(&order, k))
}

/// Reads a `sample_id,date` CSV. Dates are compared as strings, so ISO 8601
/// (`YYYY-MM-DD`) orders correctly.
pub fn load_dates(bytes: &[u8]) -> Result<HashMap<String, String>, HarnessError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let parse = |line: usize, msg: String| HarnessError::Parse { line, msg };
    let header = reader.headers().map_err(|e| parse(1, e.to_string()))?;
    if header.len() != 2 || &header[0] != "sample_id" || &header[1] != "date" {
        return Err(parse(1, "header must be \"sample_id,date\"".into()));
    }
    let mut out = HashMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec[0].is_empty() || rec[1].is_empty() {
            return Err(parse(line, "empty field".into()));
        }
        if out.insert(rec[0].to_string(), rec[1].to_string()).is_some() {
            return Err(parse(line, format!("duplicate sample id {:?}", &rec[0])));
        }
    }
    Ok(out)
}

/// What the cross-validation protocol needs besides the data.
#[derive(Clone, Debug)]
pub struct SearchSetup {
    pub base: ModelConfig,
    pub grid: HyperGrid,
    pub training: TrainOptions,
    pub k: usize,
    pub fold_order: FoldOrder,
    pub dates: Option<HashMap<String, String>>,
    pub seed: u64,
}

impl SearchSetup {
    /// CV partitions of `pool`; `round` 0 is used for selection, 1 for the
    /// final test runs.
    pub fn folds(&self, pool: &[&Sample], round: u64) -> Result<Vec<Vec<usize>>, HarnessError> {
        match self.fold_order {
            FoldOrder::Random => kfold_random(pool.len(), self.k, self.seed.wrapping_add(round)),
            FoldOrder::Temporal => {
                let dates = self
                    .dates
                    .as_ref()
                    .ok_or_else(|| HarnessError::Config("temporal folds need a date file".into()))?;
                let ids: Vec<&str> = pool.iter().map(|s| s.id.as_str()).collect();
                kfold_temporal(&ids, dates, self.k)
            }
        }
    }
}

/// One hyperparameter sample evaluated by K-fold cross-validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub hyper: HyperSample,
    pub seed: u64,
    /// Best-epoch validation score of each held-out fold.
    pub fold_scores: Vec<Option<f64>>,
    pub best_epochs: Vec<Option<usize>>,
    /// Mean of `fold_scores`; absent for failed runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_valid: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    /// Index into `runs` of the selected sample.
    pub best: usize,
    pub runs: Vec<RunRecord>,
}

impl SearchOutcome {
    pub fn best_run(&self) -> &RunRecord {
        &self.runs[self.best]
    }
}

fn split_pool<'a>(pool: &[&'a Sample], held_out: &[usize]) -> (Vec<&'a Sample>, Vec<&'a Sample>) {
    let mut mask = vec![false; pool.len()];
    for &i in held_out {
        mask[i] = true;
    }
    let (valid, train): (Vec<_>, Vec<_>) = pool.iter().zip(&mask).partition(|(_, &m)| m);
    (train.into_iter().map(|(s, _)| *s).collect(), valid.into_iter().map(|(s, _)| *s).collect())
}

fn run_cv(setup: &SearchSetup, index: usize, hyper: HyperSample, pool: &[&Sample], folds: &[Vec<usize>]) -> Result<RunRecord, HarnessError> {
    let seed = setup.seed.wrapping_add(index as u64);
    let config = ModelConfig { seed, ..hyper.apply(&setup.base) };
    config.validate()?;
    let mut record = RunRecord { index, hyper, seed, fold_scores: vec![], best_epochs: vec![], mean_valid: None, failure: None };
    for held_out in folds {
        let (tr, va) = split_pool(pool, held_out);
        let out = train(&config, &tr, &va, &setup.training)?;
        record.fold_scores.push(out.best_score);
        record.best_epochs.push(out.best_epoch);
        if let Some(f) = out.failure {
            record.failure = Some(f);
            return Ok(record);
        }
    }
    let scores: Option<Vec<f64>> = record.fold_scores.iter().copied().collect();
    match scores {
        Some(s) => record.mean_valid = Some(s.iter().sum::<f64>() / s.len() as f64),
        None => record.failure = Some("validation score undefined on a fold".into()),
    }
    Ok(record)
}

/// Random search: `n_samples` grid draws, each scored by the mean best-epoch
/// validation score over K folds of `pool`. Draws are sequential from the
/// seed; runs execute in parallel and never see test data.
pub fn hyperparameter_search(setup: &SearchSetup, pool: &[&Sample], n_samples: usize) -> Result<SearchOutcome, HarnessError> {
    if n_samples == 0 {
        return Err(HarnessError::Config("n_samples must be at least 1".into()));
    }
    setup.training.validate()?;
    let folds = setup.folds(pool, 0)?;
    let mut rng = rng_stream(setup.seed, 4);
    let draws: Vec<HyperSample> = (0..n_samples).map(|_| setup.grid.sample(&mut rng)).collect();
    let runs: Vec<RunRecord> = draws
        .into_par_iter()
        .enumerate()
        .map(|(i, h)| run_cv(setup, i, h, pool, &folds))
        .collect::<Result<_, _>>()?;
    for r in &runs {
        match (&r.failure, r.mean_valid) {
            (Some(f), _) => log::warn!("run {} failed: {f}", r.index),
            (None, Some(m)) => log::info!("run {}: mean validation {m:.4}", r.index),
            _ => {}
        }
    }
    let best = runs
        .iter()
        .filter_map(|r| r.mean_valid.map(|m| (r.index, m)))
        .fold(None, |acc: Option<(usize, f64)>, (i, m)| match acc {
            Some((_, bm)) if bm >= m => acc,
            _ => Some((i, m)),
        })
        .map(|(i, _)| i)
        .ok_or(HarnessError::AllRunsFailed(runs.len()))?;
    Ok(SearchOutcome { best, runs })
}

/// Median of `values` (mean of the middle pair for even counts).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Population standard deviation.
pub fn population_stdev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt()
}

/// `"0.668 (0.043)"`.
pub fn format_median_stdev(values: &[f64]) -> String {
    format!("{:.3} ({:.3})", median(values), population_stdev(values))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub median: f64,
    pub stdev: f64,
    pub display: String,
}

/// Test metrics of the selected configuration over K re-split folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub hyper: HyperSample,
    pub best_epochs: Vec<Option<usize>>,
    pub per_fold: Vec<EvalReport>,
    pub summary: Vec<MetricSummary>,
}

impl FinalReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for s in &self.summary {
            out.push_str(&format!("{:<9} {}\n", s.metric, s.display));
        }
        out
    }
}

/// Re-splits `pool` into K new folds; for each, trains with `hyper`, keeps
/// the epoch with the best held-out score and evaluates it on `test`.
/// Reported values are the median and population standard deviation over
/// folds.
pub fn final_test(
    setup: &SearchSetup,
    hyper: &HyperSample,
    pool: &[&Sample],
    test: &[&Sample],
    tasks: &[String],
    chi: f64,
) -> Result<FinalReport, HarnessError> {
    if test.is_empty() {
        return Err(HarnessError::Config("test set is empty".into()));
    }
    let folds = setup.folds(pool, 1)?;
    let config = ModelConfig { seed: setup.seed, ..hyper.apply(&setup.base) };
    let mut per_fold = Vec::with_capacity(folds.len());
    let mut best_epochs = Vec::with_capacity(folds.len());
    for held_out in &folds {
        let (tr, va) = split_pool(pool, held_out);
        let out = train(&config, &tr, &va, &setup.training)?;
        if let Some(f) = out.failure {
            return Err(HarnessError::Numeric(f));
        }
        best_epochs.push(out.best_epoch);
        per_fold.push(evaluate_model(&out.model, test, tasks, chi)?);
    }
    let mut summary = Vec::new();
    for metric in per_fold[0].columns() {
        let values: Option<Vec<f64>> =
            per_fold.iter().map(|r| r.mean.as_ref().unwrap_or(&r.tasks[0]).get(metric)).collect();
        if let Some(v) = values {
            summary.push(MetricSummary {
                metric: metric.to_string(),
                median: median(&v),
                stdev: population_stdev(&v),
                display: format_median_stdev(&v),
            });
        }
    }
    Ok(FinalReport { hyper: hyper.clone(), best_epochs, per_fold, summary })
}
