//! Training loop, K-fold cross-validation, random hyperparameter search and
//! evaluation of saved models.

mod dataset;
mod search;
mod train;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chemio::ChemError;
use crate::cvsplit::{Fold, FoldAssignment, Fractions, SplitError};
use crate::diffcore::DiffError;
use crate::graphbuild::GraphError;
use crate::metrics::{EvalReport, MetricError, DEFAULT_CHI};
use crate::potentialnet::{ModelConfig, ModelError, PotentialNet};

pub use dataset::{Dataset, DatasetMeta, Sample, DATASET_MAGIC, DATASET_VERSION};
pub use search::{
    final_test, format_median_stdev, hyperparameter_search, kfold_random, kfold_temporal, load_dates, median,
    population_stdev, FinalReport, FoldOrder, HyperGrid, HyperSample, MetricSummary, RunRecord, SearchOutcome,
    SearchSetup,
};
pub use train::{
    evaluate_model, predict_samples, train, EpochRecord, TrainOptions, TrainOutcome, DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS,
};

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "SGC_SEED";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("all {0} hyperparameter runs failed")]
    AllRunsFailed(usize),
    #[error(transparent)]
    Chem(#[from] ChemError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Model(ModelError),
}

impl From<ModelError> for HarnessError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(msg) => HarnessError::Config(msg),
            ModelError::Schema(msg) => HarnessError::Schema(msg),
            other => HarnessError::Model(other),
        }
    }
}

impl From<DiffError> for HarnessError {
    fn from(e: DiffError) -> Self {
        HarnessError::Model(ModelError::Diff(e))
    }
}

/// Broad failure classes, used for process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureClass {
    /// Unreadable or malformed input.
    Parse,
    /// Invalid or inconsistent configuration.
    Config,
    /// Divergence or undefined metrics.
    Numeric,
}

impl HarnessError {
    pub(crate) fn sample(id: &str, e: ModelError) -> Self {
        HarnessError::from(ModelError::Sample { id: id.to_string(), source: Box::new(e) })
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    pub fn class(&self) -> FailureClass {
        fn model_class(e: &ModelError) -> FailureClass {
            match e {
                ModelError::Config(_) | ModelError::Schema(_) => FailureClass::Config,
                ModelError::Chem(_) | ModelError::Graph(_) => FailureClass::Parse,
                ModelError::Diff(DiffError::Checkpoint(_)) => FailureClass::Parse,
                ModelError::Diff(DiffError::MissingParam(_) | DiffError::UnknownParam(_)) => FailureClass::Config,
                ModelError::Sample { source, .. } => model_class(source),
                ModelError::Labels(_) | ModelError::Diff(_) => FailureClass::Numeric,
            }
        }
        match self {
            HarnessError::Io { .. }
            | HarnessError::Parse { .. }
            | HarnessError::Dataset(_)
            | HarnessError::Chem(_)
            | HarnessError::Graph(_) => FailureClass::Parse,
            HarnessError::Split(SplitError::Parse { .. } | SplitError::Sequence(_)) => FailureClass::Parse,
            HarnessError::Split(_) | HarnessError::Config(_) | HarnessError::Schema(_) => FailureClass::Config,
            HarnessError::Numeric(_) | HarnessError::AllRunsFailed(_) | HarnessError::Metric(_) => FailureClass::Numeric,
            HarnessError::Model(e) => model_class(e),
        }
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, HarnessError> {
    std::fs::read(path).map_err(|e| HarnessError::io(path, e))
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

/// Everything a training or search run needs. Relative paths are resolved
/// against the directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Featurized dataset.
    pub data: Option<PathBuf>,
    /// `sample_id,fold` CSV; without it a random split by `fractions` is made.
    pub folds: Option<PathBuf>,
    pub fractions: Fractions,
    pub model: ModelConfig,
    pub grid: HyperGrid,
    /// Permit grid values outside the published domains.
    pub allow_grid_override: bool,
    pub training: TrainOptions,
    /// Cross-validation folds within the training pool.
    pub k: usize,
    pub fold_order: FoldOrder,
    /// `sample_id,date` CSV for temporal folds.
    pub dates: Option<PathBuf>,
    /// Drives initialization, shuffling, dropout and splits.
    pub seed: u64,
    pub chi: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: None,
            folds: None,
            fractions: Fractions::default(),
            model: ModelConfig::default(),
            grid: HyperGrid::default(),
            allow_grid_override: false,
            training: TrainOptions::default(),
            k: 3,
            fold_order: FoldOrder::Random,
            dates: None,
            seed: 0,
            chi: DEFAULT_CHI,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let mut c: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        c.model.seed = c.seed;
        c.validate()?;
        Ok(c)
    }

    /// Reads the file, resolves relative paths and applies `SGC_SEED`.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = String::from_utf8(read_file(path)?)
            .map_err(|_| HarnessError::Config(format!("{} is not UTF-8", path.display())))?;
        let mut c = Self::from_json(&text)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [&mut c.data, &mut c.folds, &mut c.dates].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        if let Some(seed) = seed_from_env()? {
            c.set_seed(seed);
        }
        Ok(c)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.model.seed = seed;
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.model.validate()?;
        self.grid.validate(self.allow_grid_override)?;
        self.training.validate()?;
        self.fractions.validate()?;
        if self.k < 2 {
            return Err(HarnessError::Config(format!("k = {} must be at least 2", self.k)));
        }
        if !(self.chi > 0.0 && self.chi <= 1.0) {
            return Err(HarnessError::Config(format!("chi {} outside (0, 1]", self.chi)));
        }
        if self.fold_order == FoldOrder::Temporal && self.dates.is_none() {
            return Err(HarnessError::Config("temporal fold order needs a dates file".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Search setup; reads the dates file when temporal folds are requested.
    pub fn search_setup(&self) -> Result<SearchSetup, HarnessError> {
        let dates = match (&self.fold_order, &self.dates) {
            (FoldOrder::Temporal, Some(p)) => Some(load_dates(&read_file(p)?)?),
            _ => None,
        };
        Ok(SearchSetup {
            base: self.model.clone(),
            grid: self.grid.clone(),
            training: self.training.clone(),
            k: self.k,
            fold_order: self.fold_order,
            dates,
            seed: self.seed,
        })
    }
}

/// `SGC_SEED`, if set.
pub fn seed_from_env() -> Result<Option<u64>, HarnessError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| HarnessError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Dataset samples per fold. Samples absent from the assignment are ignored;
/// assigned ids missing from the dataset are an error.
pub struct FoldedData<'a> {
    pub train: Vec<&'a Sample>,
    pub valid: Vec<&'a Sample>,
    test_ids: Vec<String>,
}

impl<'a> FoldedData<'a> {
    pub fn new(data: &'a Dataset, folds: &FoldAssignment) -> Result<Self, HarnessError> {
        let known: std::collections::HashSet<&str> = data.samples.iter().map(|s| s.id.as_str()).collect();
        if let Some((id, _)) = folds.iter().find(|(id, _)| !known.contains(id)) {
            return Err(HarnessError::Config(format!("fold file names unknown sample {id:?}")));
        }
        let mut out = FoldedData { train: vec![], valid: vec![], test_ids: vec![] };
        for s in &data.samples {
            match folds.get(&s.id) {
                Some(Fold::Train) => out.train.push(s),
                Some(Fold::Valid) => out.valid.push(s),
                Some(Fold::Test) => out.test_ids.push(s.id.clone()),
                None => {}
            }
        }
        Ok(out)
    }

    /// Train and validation samples together.
    pub fn pool(&self) -> Vec<&'a Sample> {
        self.train.iter().chain(&self.valid).copied().collect()
    }

    /// Ids of held-out test samples; their labels stay untouched until
    /// [`FoldedData::unseal_test`] after model selection.
    pub fn test_ids(&self) -> &[String] {
        &self.test_ids
    }

    pub fn unseal_test(self, data: &'a Dataset) -> Vec<&'a Sample> {
        let ids: std::collections::HashSet<&str> = self.test_ids.iter().map(String::as_str).collect();
        data.samples.iter().filter(|s| ids.contains(s.id.as_str())).collect()
    }
}

/// Restores a saved model and reports its metrics on `samples` (all of
/// `data` when `None`).
pub fn evaluate_checkpoint(
    config: ModelConfig,
    checkpoint: &[u8],
    data: &Dataset,
    ids: Option<&[String]>,
    chi: f64,
) -> Result<EvalReport, HarnessError> {
    data.check_compatible(&config)?;
    let model = PotentialNet::<f32>::from_checkpoint(config, checkpoint)?;
    let samples: Vec<&Sample> = match ids {
        None => data.samples.iter().collect(),
        Some(ids) => {
            let wanted: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
            data.samples.iter().filter(|s| wanted.contains(s.id.as_str())).collect()
        }
    };
    if samples.is_empty() {
        return Err(HarnessError::Config("no samples to evaluate".into()));
    }
    evaluate_model(&model, &samples, &data.meta.tasks, chi)
}
