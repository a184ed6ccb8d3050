use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ef_chi_regression, mue, pearson, r2, residual_stdev, rmse, roc_auc, spearman, MetricError};
use crate::potentialnet::TaskKind;

/// Top fraction of predictions used for EF^(R)_χ unless configured otherwise.
pub const DEFAULT_CHI: f64 = 0.05;

const REGRESSION_COLUMNS: [&str; 7] = ["r2", "ef", "pearson", "spearman", "stdev", "mue", "rmse"];
const CLASSIFICATION_COLUMNS: [&str; 1] = ["roc_auc"];

/// Metrics of one task. A metric that is undefined for the data (for example
/// a correlation with constant predictions) is `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ef: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pearson: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spearman: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stdev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mue: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roc_auc: Option<f64>,
}

impl TaskReport {
    fn empty(task: &str, n: usize) -> Self {
        TaskReport {
            task: task.to_string(),
            n,
            r2: None,
            ef: None,
            pearson: None,
            spearman: None,
            stdev: None,
            mue: None,
            rmse: None,
            roc_auc: None,
        }
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        match metric {
            "r2" => self.r2,
            "ef" => self.ef,
            "pearson" => self.pearson,
            "spearman" => self.spearman,
            "stdev" => self.stdev,
            "mue" => self.mue,
            "rmse" => self.rmse,
            "roc_auc" => self.roc_auc,
            _ => None,
        }
    }

    fn set(&mut self, metric: &str, value: Option<f64>) {
        let slot = match metric {
            "r2" => &mut self.r2,
            "ef" => &mut self.ef,
            "pearson" => &mut self.pearson,
            "spearman" => &mut self.spearman,
            "stdev" => &mut self.stdev,
            "mue" => &mut self.mue,
            "rmse" => &mut self.rmse,
            "roc_auc" => &mut self.roc_auc,
            _ => return,
        };
        *slot = value;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: TaskKind,
    pub n: usize,
    pub chi: f64,
    pub tasks: Vec<TaskReport>,
    /// Mean over tasks of each metric defined for every task; only present
    /// with more than one task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<TaskReport>,
}

impl EvalReport {
    pub fn columns(&self) -> &'static [&'static str] {
        match self.kind {
            TaskKind::Regression => &REGRESSION_COLUMNS,
            TaskKind::MultitaskClassification => &CLASSIFICATION_COLUMNS,
        }
    }

    /// Headline score used for model selection: Pearson for regression,
    /// ROC AUC for classification, averaged over tasks.
    pub fn selection_score(&self) -> Option<f64> {
        let metric = match self.kind {
            TaskKind::Regression => "pearson",
            TaskKind::MultitaskClassification => "roc_auc",
        };
        self.mean.as_ref().unwrap_or(&self.tasks[0]).get(metric)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table with one row per task (plus the mean row).
    pub fn to_table(&self) -> String {
        let mut rows: Vec<&TaskReport> = self.tasks.iter().collect();
        if let Some(m) = &self.mean {
            rows.push(m);
        }
        let name_w = rows.iter().map(|r| r.task.len()).max().unwrap_or(4).max(4);
        let mut out = String::new();
        write!(out, "{:<name_w$} {:>6}", "task", "n").unwrap();
        for c in self.columns() {
            write!(out, " {:>9}", c).unwrap();
        }
        out.push('\n');
        for r in rows {
            write!(out, "{:<name_w$} {:>6}", r.task, r.n).unwrap();
            for c in self.columns() {
                match r.get(c) {
                    Some(v) => write!(out, " {:>9.4}", v).unwrap(),
                    None => write!(out, " {:>9}", "-").unwrap(),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Per-task metrics over the samples that carry a label for that task.
/// `predictions` are raw values for regression and scores for classification.
pub fn evaluate(
    labels: &[Vec<Option<f64>>],
    predictions: &[Vec<f64>],
    task_names: &[String],
    kind: TaskKind,
    chi: f64,
) -> Result<EvalReport, MetricError> {
    if labels.len() != predictions.len() {
        return Err(MetricError::Length(labels.len(), predictions.len()));
    }
    if labels.is_empty() {
        return Err(MetricError::Empty);
    }
    if !(chi > 0.0 && chi <= 1.0) {
        return Err(MetricError::Chi(chi));
    }
    let t = task_names.len();
    if labels.iter().any(|l| l.len() != t) {
        return Err(MetricError::Length(t, labels.iter().map(Vec::len).find(|&l| l != t).unwrap_or(0)));
    }
    if predictions.iter().any(|p| p.len() != t) {
        return Err(MetricError::Length(t, predictions.iter().map(Vec::len).find(|&l| l != t).unwrap_or(0)));
    }
    let mut tasks = Vec::with_capacity(t);
    for (j, name) in task_names.iter().enumerate() {
        let (y, p): (Vec<f64>, Vec<f64>) =
            labels.iter().zip(predictions).filter_map(|(l, pr)| l[j].map(|v| (v, pr[j]))).unzip();
        let mut r = TaskReport::empty(name, y.len());
        if y.is_empty() {
            tasks.push(r);
            continue;
        }
        match kind {
            TaskKind::Regression => {
                r.r2 = r2(&y, &p).ok();
                r.ef = ef_chi_regression(&y, &p, chi).ok();
                r.pearson = pearson(&y, &p).ok();
                r.spearman = spearman(&y, &p).ok();
                r.stdev = Some(residual_stdev(&y, &p)?);
                r.mue = Some(mue(&y, &p)?);
                r.rmse = Some(rmse(&y, &p)?);
            }
            TaskKind::MultitaskClassification => {
                r.roc_auc = match roc_auc(&y, &p) {
                    Ok(v) => Some(v),
                    Err(MetricError::SingleClass) => None,
                    Err(e) => return Err(e),
                };
            }
        }
        tasks.push(r);
    }
    let n = labels.len();
    let mut report = EvalReport { kind, n, chi, tasks, mean: None };
    if t > 1 {
        let mut mean = TaskReport::empty("mean", n);
        for c in report.columns() {
            let vals: Option<Vec<f64>> = report.tasks.iter().map(|r| r.get(c)).collect();
            mean.set(c, vals.map(|v| v.iter().sum::<f64>() / v.len() as f64));
        }
        report.mean = Some(mean);
    }
    Ok(report)
}
