use serde::{Deserialize, Serialize};

use super::mlp::{MlpCoefficients, Sample};
use crate::error::{Error, Result};
use crate::signal::Label;

/// Threshold used by [`evaluate`].
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Binary confusion counts with `SignalPresent` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth.is_signal(), predicted.is_signal()) {
            (true, true) => self.true_pos += 1,
            (false, true) => self.false_pos += 1,
            (false, false) => self.true_neg += 1,
            (true, false) => self.false_neg += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            true_pos: self.true_pos + other.true_pos,
            false_pos: self.false_pos + other.false_pos,
            true_neg: self.true_neg + other.true_neg,
            false_neg: self.false_neg + other.false_neg,
        }
    }

    pub fn metrics(&self) -> Metrics {
        metrics(self)
    }
}

/// Detection metrics. `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Probability of detection; identical to recall.
    pub pd: Option<f64>,
    /// Probability of false alarm, `fp / (fp + tn)`.
    pub pfa: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let precision = ratio(c.true_pos, c.true_pos + c.false_pos);
    let recall = ratio(c.true_pos, c.true_pos + c.false_neg);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Metrics {
        accuracy: ratio(c.true_pos + c.true_neg, c.total()),
        precision,
        recall,
        f1,
        pd: recall,
        pfa: ratio(c.false_pos, c.false_pos + c.true_neg),
    }
}

/// Confusion counts of `coeffs` at threshold 0.5 against the samples' labels.
pub fn evaluate(coeffs: &MlpCoefficients, samples: &[Sample]) -> Result<ConfusionCounts> {
    if samples.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let mut counts = ConfusionCounts::default();
    for s in samples {
        counts.record(s.label, coeffs.classify(&s.x, DECISION_THRESHOLD)?);
    }
    Ok(counts)
}
