use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Classes with fewer training samples than this count as tail classes.
pub const DEFAULT_TAIL_THRESHOLD: usize = 100;
/// Classes with more training samples than this count as head classes.
pub const DEFAULT_HEAD_THRESHOLD: usize = 1000;

/// Accuracy breakdown for a long-tailed test set.
///
/// Accuracies over an empty class set are `None` (JSON `null`), never zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: f64,
    /// Mean recall over classes with at least one test sample.
    pub macro_per_class: Option<f64>,
    /// Mean recall over test-present classes with `train_count < tail_threshold`.
    pub tail_per_class: Option<f64>,
    /// Mean recall over test-present classes with `train_count > head_threshold`.
    pub head_per_class: Option<f64>,
    pub per_class: Vec<Option<f64>>,
    pub test_counts: Vec<usize>,
    pub train_counts: Vec<usize>,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub tail_threshold: usize,
    pub head_threshold: usize,
    pub tail_classes: Vec<usize>,
    pub head_classes: Vec<usize>,
    /// Neighbor count used for the predictions, when known.
    pub k: Option<usize>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn compute_metrics(
    predictions: &[usize],
    truth: &[usize],
    train_counts: &[usize],
    tail_threshold: usize,
    head_threshold: usize,
) -> Result<MetricsReport> {
    if predictions.len() != truth.len() {
        return Err(Error::DimMismatch {
            context: "metrics predictions",
            expected: truth.len(),
            actual: predictions.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::invalid("no test items"));
    }
    let classes = train_counts.len();
    if let Some(&bad) = truth.iter().chain(predictions).find(|&&c| c >= classes) {
        return Err(Error::invalid(format!(
            "class {bad} outside the {classes} classes in the training counts"
        )));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&t, &p) in truth.iter().zip(predictions) {
        confusion[t][p] += 1;
    }
    let test_counts: Vec<usize> = confusion.iter().map(|row| row.iter().sum()).collect();
    let per_class: Vec<Option<f64>> = (0..classes)
        .map(|c| (test_counts[c] > 0).then(|| confusion[c][c] as f64 / test_counts[c] as f64))
        .collect();
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let overall = correct as f64 / truth.len() as f64;

    let tail_classes: Vec<usize> = (0..classes)
        .filter(|&c| train_counts[c] < tail_threshold && per_class[c].is_some())
        .collect();
    let head_classes: Vec<usize> = (0..classes)
        .filter(|&c| train_counts[c] > head_threshold && per_class[c].is_some())
        .collect();
    let recall = |c: &usize| per_class[*c].expect("test-present");

    Ok(MetricsReport {
        overall,
        macro_per_class: mean_of(per_class.iter().flatten().copied()),
        tail_per_class: mean_of(tail_classes.iter().map(recall)),
        head_per_class: mean_of(head_classes.iter().map(recall)),
        per_class,
        test_counts,
        train_counts: train_counts.to_vec(),
        confusion,
        tail_threshold,
        head_threshold,
        tail_classes,
        head_classes,
        k: None,
    })
}
