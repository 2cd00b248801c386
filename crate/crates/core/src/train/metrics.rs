use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion matrix (rows true, columns predicted) and the challenge metrics.
///
/// Weighted accuracy is the overall hit rate, unweighted accuracy the mean
/// recall over classes present in the true labels. F1 is support-weighted and
/// macro-averaged over the same classes. The task scores average each pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_classes: usize,
    pub confusion: Vec<Vec<u64>>,
    pub per_class_f1: Vec<f64>,
    pub acc_weighted: f64,
    pub acc_unweighted: f64,
    pub f1_weighted: f64,
    pub f1_unweighted: f64,
    pub acc_task: f64,
    pub f1_task: f64,
}

pub fn compute_metrics(truth: &[usize], pred: &[usize], n_classes: usize) -> Result<MetricsReport> {
    if truth.len() != pred.len() {
        return Err(Error::invalid(format!(
            "{} true labels but {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::invalid("no labels to score"));
    }
    if let Some(&bad) = truth.iter().chain(pred).find(|&&y| y >= n_classes) {
        return Err(Error::invalid(format!("label {bad} out of range for {n_classes} classes")));
    }
    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(pred) {
        confusion[t][p] += 1;
    }
    let total = truth.len() as f64;
    let support: Vec<u64> = confusion.iter().map(|r| r.iter().sum()).collect();
    let predicted: Vec<u64> = (0..n_classes).map(|c| confusion.iter().map(|r| r[c]).sum()).collect();
    let hits: u64 = (0..n_classes).map(|c| confusion[c][c]).sum();

    let mut per_class_f1 = vec![0.0; n_classes];
    let (mut recall_sum, mut f1_sum, mut f1_weighted, mut present) = (0.0, 0.0, 0.0, 0usize);
    for c in 0..n_classes {
        let tp = confusion[c][c] as f64;
        let precision = if predicted[c] > 0 { tp / predicted[c] as f64 } else { 0.0 };
        let recall = if support[c] > 0 { tp / support[c] as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class_f1[c] = f1;
        if support[c] > 0 {
            present += 1;
            recall_sum += recall;
            f1_sum += f1;
            f1_weighted += f1 * support[c] as f64;
        }
    }
    let acc_weighted = hits as f64 / total;
    let acc_unweighted = recall_sum / present as f64;
    let f1_weighted = f1_weighted / total;
    let f1_unweighted = f1_sum / present as f64;
    Ok(MetricsReport {
        n_classes,
        confusion,
        per_class_f1,
        acc_weighted,
        acc_unweighted,
        f1_weighted,
        f1_unweighted,
        acc_task: (acc_weighted + acc_unweighted) / 2.0,
        f1_task: (f1_weighted + f1_unweighted) / 2.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let m = compute_metrics(&[0, 0, 0, 1], &[0, 0, 0, 0], 2).unwrap();
        assert_eq!(m.confusion, vec![vec![3, 0], vec![1, 0]]);
        assert_eq!((m.acc_weighted, m.acc_unweighted, m.acc_task), (0.75, 0.5, 0.625));
        assert!((m.per_class_f1[0] - 6.0 / 7.0).abs() < 1e-12);
        assert!((m.f1_unweighted - 3.0 / 7.0).abs() < 1e-12);
        assert!((m.f1_weighted - 9.0 / 14.0).abs() < 1e-12);
        assert!((m.f1_task - 0.535714).abs() < 1e-6);
    }

    #[test]
    fn perfect_predictions_score_one() {
        let y = [0, 1, 2, 2, 4];
        let m = compute_metrics(&y, &y, 5).unwrap();
        for v in [m.acc_weighted, m.acc_unweighted, m.f1_weighted, m.f1_unweighted, m.acc_task, m.f1_task] {
            assert_eq!(v, 1.0);
        }
        assert_eq!(m.confusion.iter().flatten().sum::<u64>(), 5);
    }

    #[test]
    fn balanced_truth_gives_equal_accuracies() {
        let m = compute_metrics(&[0, 0, 1, 1, 2, 2], &[0, 1, 1, 2, 2, 0], 3).unwrap();
        assert_eq!(m.acc_weighted, m.acc_unweighted);
    }

    #[test]
    fn contract_violations() {
        assert!(compute_metrics(&[0, 1], &[0], 2).is_err());
        assert!(compute_metrics(&[0, 2], &[0, 1], 2).is_err());
        assert!(compute_metrics(&[0, 1], &[0, 3], 3).is_err());
        assert!(compute_metrics(&[], &[], 2).is_err());
    }
}
