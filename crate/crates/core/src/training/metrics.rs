use super::Target;
use crate::model::Prediction;

/// Running counts for accuracy or micro-F1; merging is order independent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MetricCounts {
    pub correct: u64,
    pub total: u64,
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
}

impl MetricCounts {
    pub fn record(&mut self, prediction: &Prediction, target: &Target) {
        self.total += 1;
        match (prediction, target) {
            (Prediction::Binary { label, .. }, Target::Index(y))
            | (Prediction::Multiclass { class: label, .. }, Target::Index(y)) => {
                self.correct += u64::from(label == y);
            }
            (Prediction::Multilabel { labels, .. }, Target::Labels(ys)) => {
                for (i, y) in ys.iter().enumerate() {
                    let predicted = labels.contains(&i);
                    match (predicted, *y == 1) {
                        (true, true) => self.true_pos += 1,
                        (true, false) => self.false_pos += 1,
                        (false, true) => self.false_neg += 1,
                        (false, false) => {}
                    }
                }
            }
            _ => {}
        }
    }

    pub fn merge(&mut self, other: &MetricCounts) {
        self.correct += other.correct;
        self.total += other.total;
        self.true_pos += other.true_pos;
        self.false_pos += other.false_pos;
        self.false_neg += other.false_neg;
    }

    /// Percentage in `[0, 100]`.
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.total as f64
        }
    }

    /// Percentage in `[0, 100]`. No positives anywhere counts as perfect.
    pub fn micro_f1(&self) -> f64 {
        micro_f1(self.true_pos, self.false_pos, self.false_neg)
    }
}

pub fn micro_f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    if tp + fp + fn_ == 0 {
        return 100.0;
    }
    100.0 * 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}
