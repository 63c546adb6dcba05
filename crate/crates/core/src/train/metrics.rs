use serde::{Deserialize, Serialize};

use crate::pointcloud::Label;
use crate::{Error, Result};

/// 3×3 counts; rows are ground truth, columns predictions, both indexed by
/// [`Label::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: Label, pred: Label) {
        self.counts[truth.index()][pred.index()] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (r, o) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in r.iter_mut().zip(o) {
                *a += b;
            }
        }
    }

    /// Ground-truth count of `class`.
    pub fn support(&self, class: Label) -> u64 {
        self.counts[class.index()].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Rows divided by their sums; rows without support stay zero.
    pub fn normalized(&self) -> [[f64; 3]; 3] {
        self.counts.map(|row| {
            let s: u64 = row.iter().sum();
            if s == 0 {
                [0.0; 3]
            } else {
                row.map(|c| c as f64 / s as f64)
            }
        })
    }
}

/// Counts and row-normalized fractions for paired label sequences.
pub fn confusion(truth: &[Label], pred: &[Label]) -> Result<(ConfusionMatrix, [[f64; 3]; 3])> {
    if truth.len() != pred.len() {
        return Err(Error::shape("confusion", truth.len(), pred.len()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in truth.iter().zip(pred) {
        cm.add(t, p);
    }
    let norm = cm.normalized();
    Ok((cm, norm))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean, zero when both inputs are zero.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// One-vs-rest precision, recall and F1 of `class`.
pub fn precision_recall_f1(cm: &ConfusionMatrix, class: Label) -> ClassMetrics {
    let c = class.index();
    let tp = cm.counts[c][c];
    let predicted: u64 = (0..3).map(|r| cm.counts[r][c]).sum();
    let actual = cm.support(class);
    let precision = ratio(tp, predicted);
    let recall = ratio(tp, actual);
    ClassMetrics {
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

/// Unweighted mean of each statistic over the two moving classes.
pub fn macro_average(vehicle: &ClassMetrics, pedestrian: &ClassMetrics) -> ClassMetrics {
    ClassMetrics {
        precision: 0.5 * (vehicle.precision + pedestrian.precision),
        recall: 0.5 * (vehicle.recall + pedestrian.recall),
        f1: 0.5 * (vehicle.f1 + pedestrian.f1),
    }
}

/// Segmentation metrics for the two moving classes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub vehicle: ClassMetrics,
    pub pedestrian: ClassMetrics,
    pub average: ClassMetrics,
}

impl Metrics {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Self {
        let vehicle = precision_recall_f1(cm, Label::Vehicle);
        let pedestrian = precision_recall_f1(cm, Label::Pedestrian);
        Metrics {
            vehicle,
            pedestrian,
            average: macro_average(&vehicle, &pedestrian),
        }
    }

    pub fn macro_f1(&self) -> f64 {
        self.average.f1
    }
}
