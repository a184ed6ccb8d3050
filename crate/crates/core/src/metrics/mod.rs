//! Regression and classification statistics, including the regression
//! enrichment factor EF^(R)_χ.

mod report;

use thiserror::Error;

pub use report::{evaluate, EvalReport, TaskReport, DEFAULT_CHI};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("empty input")]
    Empty,
    #[error("need at least {need} samples, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("length mismatch: {0} observed vs {1} predicted")]
    Length(usize, usize),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("degenerate label distribution")]
    DegenerateLabels,
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("both classes must be present")]
    SingleClass,
    #[error("chi {0} outside (0, 1]")]
    Chi(f64),
    #[error("label {0} is not binary")]
    NotBinary(f64),
}

fn check(y: &[f64], y_hat: &[f64], min: usize) -> Result<(), MetricError> {
    if y.len() != y_hat.len() {
        return Err(MetricError::Length(y.len(), y_hat.len()));
    }
    if y.is_empty() {
        return Err(MetricError::Empty);
    }
    if y.len() < min {
        return Err(MetricError::TooFew { need: min, got: y.len() });
    }
    for (k, (a, b)) in y.iter().zip(y_hat).enumerate() {
        if !a.is_finite() || !b.is_finite() {
            return Err(MetricError::NonFinite(k));
        }
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
fn pop_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Number of top-ranked samples used by EF^(R)_χ: `max(1, round(χ·N))`.
pub fn enrichment_count(n: usize, chi: f64) -> usize {
    ((chi * n as f64).round() as usize).clamp(1, n.max(1))
}

/// EF^(R)_χ: mean z-score (population σ over all observed labels) of the
/// observed values of the top `max(1, round(χN))` predictions. Prediction
/// ties go to the lower index.
pub fn ef_chi_regression(y: &[f64], y_hat: &[f64], chi: f64) -> Result<f64, MetricError> {
    if !(chi > 0.0 && chi <= 1.0) {
        return Err(MetricError::Chi(chi));
    }
    check(y, y_hat, 2)?;
    let sigma = pop_std(y);
    if sigma == 0.0 {
        return Err(MetricError::DegenerateLabels);
    }
    let n = y.len();
    let k = enrichment_count(n, chi);
    if k == n {
        return Ok(0.0);
    }
    let y_bar = mean(y);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y_hat[b].total_cmp(&y_hat[a]).then(a.cmp(&b)));
    let total: f64 = order[..k].iter().map(|&i| (y[i] - y_bar) / sigma).sum();
    Ok(total / k as f64)
}

pub fn pearson(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricError> {
    check(y, y_hat, 2)?;
    let (my, mp) = (mean(y), mean(y_hat));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(y_hat) {
        let (da, db) = (a - my, b - mp);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 {
        return Err(MetricError::ZeroVariance("observed values"));
    }
    if syy == 0.0 {
        return Err(MetricError::ZeroVariance("predictions"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn spearman(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricError> {
    check(y, y_hat, 2)?;
    pearson(&average_ranks(y), &average_ranks(y_hat))
}

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r2(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricError> {
    check(y, y_hat, 2)?;
    let my = mean(y);
    let ss_tot: f64 = y.iter().map(|a| (a - my) * (a - my)).sum();
    if ss_tot == 0.0 {
        return Err(MetricError::ZeroVariance("observed values"));
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricError> {
    check(y, y_hat, 1)?;
    Ok((y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64).sqrt())
}

/// Mean unsigned error.
pub fn mue(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricError> {
    check(y, y_hat, 1)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Population standard deviation of the residuals `y − ŷ`.
pub fn residual_stdev(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricError> {
    check(y, y_hat, 1)?;
    let residuals: Vec<f64> = y.iter().zip(y_hat).map(|(a, b)| a - b).collect();
    Ok(pop_std(&residuals))
}

/// Area under the ROC curve as `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)`, computed from
/// average ranks.
pub fn roc_auc(labels: &[f64], scores: &[f64]) -> Result<f64, MetricError> {
    check(labels, scores, 1)?;
    if let Some(&bad) = labels.iter().find(|&&l| l != 0.0 && l != 1.0) {
        return Err(MetricError::NotBinary(bad));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1.0).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ef_examples() {
        assert_eq!(ef_chi_regression(&[1.0, 5.0, 2.0, 7.0], &[0.3, 0.1, 0.9, 0.2], 1.0).unwrap(), 0.0);
        let ef = ef_chi_regression(&[0.0, 0.0, 0.0, 4.0], &[0.1, 0.2, 0.3, 0.9], 0.25).unwrap();
        assert!((ef - 3.0_f64.sqrt()).abs() < 1e-15);
        // a single strong hit among many inactives pushes EF above 1
        assert!(ef > 1.0);
        assert_eq!(ef_chi_regression(&[2.0, 2.0], &[0.0, 1.0], 0.5), Err(MetricError::DegenerateLabels));
        assert_eq!(ef_chi_regression(&[], &[], 0.5), Err(MetricError::Empty));
        assert!(ef_chi_regression(&[1.0, 2.0], &[1.0, 2.0], 0.0).is_err());
        assert!(ef_chi_regression(&[1.0, 2.0], &[1.0, 2.0], 1.5).is_err());
    }

    #[test]
    fn ef_ties_go_to_lower_index() {
        // both predictions tie; index 0 (y = 0) is chosen
        let ef = ef_chi_regression(&[0.0, 2.0, 1.0], &[1.0, 1.0, 0.0], 0.3).unwrap();
        let expect = (0.0 - 1.0) / (2.0f64 / 3.0).sqrt();
        assert!((ef - expect).abs() < 1e-15);
    }

    #[test]
    fn enrichment_count_rounds() {
        assert_eq!(enrichment_count(100, 0.05), 5);
        assert_eq!(enrichment_count(10, 0.05), 1);
        assert_eq!(enrichment_count(30, 0.05), 2);
        assert_eq!(enrichment_count(7, 1.0), 7);
    }

    #[test]
    fn perfect_and_inverted_predictions() {
        let y = [1.0, -2.0, 0.5, 3.0, -2.5];
        assert!((pearson(&y, &y).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&y, &y).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(r2(&y, &y).unwrap(), 1.0);
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        assert_eq!(mue(&y, &y).unwrap(), 0.0);
        let z = [1.0, -1.0, 2.0, -2.0];
        let neg: Vec<f64> = z.iter().map(|v| -v).collect();
        assert!((pearson(&z, &neg).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn correlation_errors() {
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(MetricError::ZeroVariance("observed values")));
        assert_eq!(pearson(&[1.0, 2.0], &[3.0, 3.0]), Err(MetricError::ZeroVariance("predictions")));
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
        assert!(r2(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn spearman_is_rank_based() {
        let y = [0.5, 2.0, -1.0, 3.0, 3.0];
        let p = [1.0, 4.0, 0.0, 2.0, 9.0];
        let cubed: Vec<f64> = p.iter().map(|v: &f64| v.powi(3) + 7.0).collect();
        assert_eq!(spearman(&y, &p).unwrap(), spearman(&y, &cubed).unwrap());
    }

    #[test]
    fn auc_cases() {
        assert_eq!(roc_auc(&[0.0, 0.0, 1.0, 1.0], &[0.1, 0.2, 0.8, 0.9]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.0, 1.0, 0.0, 1.0], &[0.5; 4]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[1.0, 1.0], &[0.1, 0.2]), Err(MetricError::SingleClass));
        assert_eq!(roc_auc(&[0.5, 1.0], &[0.1, 0.2]), Err(MetricError::NotBinary(0.5)));
        // pairs (pos, neg): (0.8: >0.1, >0.4, <0.9) (0.4: >0.1, =0.4, <0.9) (0.35: >0.1, <0.4, <0.9)
        let auc = roc_auc(&[1.0, 0.0, 1.0, 0.0, 1.0, 0.0], &[0.8, 0.1, 0.4, 0.4, 0.35, 0.9]).unwrap();
        assert!((auc - 4.5 / 9.0).abs() < 1e-15);
    }
}
