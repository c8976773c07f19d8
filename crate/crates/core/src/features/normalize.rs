use serde::{Deserialize, Serialize};

use super::FeatureRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormalizerKind {
    MinMax,
    ZScore,
}

/// A single fitted per-feature normaliser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Normalizer {
    /// Maps `[min, max]` onto `[0, 1]`, clamping values outside the fitted range.
    MinMax { min: f64, max: f64 },
    /// `(v - mean) / std` with the population standard deviation.
    ZScore { mean: f64, std: f64 },
}

impl Normalizer {
    pub fn kind(&self) -> NormalizerKind {
        match self {
            Normalizer::MinMax { .. } => NormalizerKind::MinMax,
            Normalizer::ZScore { .. } => NormalizerKind::ZScore,
        }
    }

    pub fn fit(kind: NormalizerKind, values: &[f64], feature: &str) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("normalisers need at least 2 records"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateData(format!(
                "feature {feature} has non-finite values"
            )));
        }
        match kind {
            NormalizerKind::MinMax => {
                let min = values.iter().copied().fold(f64::INFINITY, f64::min);
                let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if max <= min {
                    return Err(Error::DegenerateData(format!(
                        "feature {feature} has zero range"
                    )));
                }
                Ok(Normalizer::MinMax { min, max })
            }
            NormalizerKind::ZScore => {
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let std = var.sqrt();
                // identical inputs can leave rounding residue in the variance
                if std <= 1e-12 * mean.abs() || std == 0.0 {
                    return Err(Error::DegenerateData(format!(
                        "feature {feature} has zero standard deviation"
                    )));
                }
                Ok(Normalizer::ZScore { mean, std })
            }
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        match *self {
            Normalizer::MinMax { min, max } => ((v - min) / (max - min)).clamp(0.0, 1.0),
            Normalizer::ZScore { mean, std } => (v - mean) / std,
        }
    }
}

/// Normalisers for the full feature vector.
///
/// Eigenvalues, `T` and mean power are z-scored; autocorrelation is min-max scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizerSet {
    pub eigenvalues: Vec<Normalizer>,
    pub metric_t: Normalizer,
    pub mean_power: Normalizer,
    pub autocorr: Normalizer,
}

/// Fits the normaliser set on training records (labels are not used).
pub fn fit_normalizers(records: &[FeatureRecord]) -> Result<NormalizerSet> {
    if records.len() < 2 {
        return Err(Error::invalid("normalisers need at least 2 records"));
    }
    let l = records[0].eigenvalues.len();
    if records.iter().any(|r| r.eigenvalues.len() != l) {
        return Err(Error::invalid("records disagree on eigenvalue count"));
    }
    let column = |f: &dyn Fn(&FeatureRecord) -> f64| -> Vec<f64> { records.iter().map(f).collect() };

    let eigenvalues = (0..l)
        .map(|i| {
            Normalizer::fit(
                NormalizerKind::ZScore,
                &column(&|r| r.eigenvalues[i]),
                &format!("g{i}"),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NormalizerSet {
        eigenvalues,
        metric_t: Normalizer::fit(NormalizerKind::ZScore, &column(&|r| r.metric_t), "t")?,
        mean_power: Normalizer::fit(NormalizerKind::ZScore, &column(&|r| r.mean_power), "mu")?,
        autocorr: Normalizer::fit(NormalizerKind::MinMax, &column(&|r| r.autocorr), "ac")?,
    })
}

impl NormalizerSet {
    /// Input dimension of the vectors this set produces (`L + 3`).
    pub fn output_dim(&self) -> usize {
        self.eigenvalues.len() + 3
    }

    /// Normalised model input in the fixed order `[g0 .. g(L-1), t, mu, ac]`.
    pub fn apply(&self, record: &FeatureRecord) -> Vec<f64> {
        debug_assert_eq!(record.eigenvalues.len(), self.eigenvalues.len());
        let mut out: Vec<f64> = self
            .eigenvalues
            .iter()
            .zip(&record.eigenvalues)
            .map(|(n, &v)| n.apply(v))
            .collect();
        out.push(self.metric_t.apply(record.metric_t));
        out.push(self.mean_power.apply(record.mean_power));
        out.push(self.autocorr.apply(record.autocorr));
        out
    }
}

pub fn apply_normalizers(norms: &NormalizerSet, record: &FeatureRecord) -> Vec<f64> {
    norms.apply(record)
}
