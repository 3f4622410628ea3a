use serde::{Deserialize, Serialize};

use crate::corpus::{Label, NUM_CLASSES};

/// Precision, recall and F1 of one class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Micro-averaged accuracy, `trace(confusion) / Σ confusion`.
    pub accuracy: f64,
    /// Keyed by class code (NR, FR, TR, UR) in label order.
    pub per_class: Vec<(String, ClassScores)>,
    /// `confusion[true][predicted]`.
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
}

impl Metrics {
    /// Builds metrics from `(true, predicted)` class index pairs. `None`
    /// when `pairs` is empty.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Option<Self> {
        let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
        for (t, p) in pairs {
            confusion[t][p] += 1;
        }
        let total: usize = confusion.iter().flatten().sum();
        if total == 0 {
            return None;
        }
        let trace: usize = (0..NUM_CLASSES).map(|c| confusion[c][c]).sum();
        let per_class = Label::ALL
            .iter()
            .map(|l| {
                let c = l.index();
                let tp = confusion[c][c] as f64;
                let predicted: usize = (0..NUM_CLASSES).map(|t| confusion[t][c]).sum();
                let support: usize = confusion[c].iter().sum();
                let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
                let recall = if support == 0 { 0.0 } else { tp / support as f64 };
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                (l.code().to_string(), ClassScores { precision, recall, f1, support })
            })
            .collect();
        Some(Self {
            accuracy: trace as f64 / total as f64,
            per_class,
            confusion,
        })
    }

    pub fn f1(&self, label: Label) -> f64 {
        self.per_class[label.index()].1.f1
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}
