//! Decentralised coefficient exchange.
//!
//! Every round, each sensor with training data trains locally and measures its
//! validation accuracy. Then every sensor (including those without data)
//! replaces its coefficients with
//!
//! ```text
//! w_own · own + (1 − w_own) · Σ_i idw_i · neighbour_i
//! ```
//!
//! where `w_own` ramps linearly from `own_weight_start` to `own_weight_end`
//! across rounds and is scaled by the sensor's last accuracy (a sensor that was
//! never evaluated uses 0), and `idw_i ∝ d_i^(−p)` over its `k` nearest
//! neighbours. All blends read the coefficients as they stood after the
//! training phase of the round, so the processing order of sensors is irrelevant.

use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{evaluate, train, MlpCoefficients, Sample, TrainConfig};
use crate::seed;
use crate::signal::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionPolicy {
    pub idw_exponent: f64,
    pub neighbor_count: usize,
    pub own_weight_start: f64,
    pub own_weight_end: f64,
    pub rounds: usize,
}

impl Default for FusionPolicy {
    fn default() -> Self {
        Self {
            idw_exponent: 0.0,
            neighbor_count: 3,
            own_weight_start: 0.8,
            own_weight_end: 0.99,
            rounds: 10,
        }
    }
}

impl FusionPolicy {
    pub fn validate(&self, sensors: usize) -> Result<()> {
        if !(self.idw_exponent.is_finite() && self.idw_exponent >= 0.0) {
            return Err(Error::invalid("IDW exponent must be a non-negative number"));
        }
        if self.neighbor_count == 0 || self.neighbor_count + 1 > sensors {
            return Err(Error::invalid(format!(
                "neighbour count {} must be in 1..={}",
                self.neighbor_count,
                sensors.saturating_sub(1)
            )));
        }
        let (s, e) = (self.own_weight_start, self.own_weight_end);
        if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&e) || s > e {
            return Err(Error::invalid(
                "own weights must satisfy 0 ≤ start ≤ end ≤ 1",
            ));
        }
        if self.rounds == 0 {
            return Err(Error::invalid("rounds must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorState {
    pub id: usize,
    pub coeffs: MlpCoefficients,
    pub has_training_data: bool,
    /// Accuracy on the validation split after the latest local training; `None`
    /// until the sensor has been evaluated.
    pub last_accuracy: Option<f64>,
    pub position: Point2,
}

/// Training and validation samples of one data-holding sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorData {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
}

/// `w_i = d_i^(−p) / Σ_j d_j^(−p)`.
pub fn idw_weights(distances: &[f64], p: f64) -> Result<Vec<f64>> {
    if distances.is_empty() {
        return Err(Error::invalid("no distances"));
    }
    if let Some(d) = distances.iter().find(|&&d| !(d.is_finite() && d > 0.0)) {
        return Err(Error::invalid(format!("distance {d} is not positive")));
    }
    if !(p.is_finite() && p >= 0.0) {
        return Err(Error::invalid(format!("IDW exponent {p} must be non-negative")));
    }
    // scale by the nearest distance first so large exponents cannot overflow
    let nearest = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = distances.iter().map(|d| (d / nearest).powf(-p)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Own-coefficient weight for `round`: the linear start→end ramp scaled by
/// `last_accuracy` (0 when absent).
pub fn own_weight(round: usize, policy: &FusionPolicy, last_accuracy: Option<f64>) -> Result<f64> {
    if round >= policy.rounds {
        return Err(Error::invalid(format!(
            "round {round} outside 0..{}",
            policy.rounds
        )));
    }
    let base = if policy.rounds == 1 {
        policy.own_weight_start
    } else if round == policy.rounds - 1 {
        policy.own_weight_end
    } else {
        let t = round as f64 / (policy.rounds - 1) as f64;
        policy.own_weight_start + (policy.own_weight_end - policy.own_weight_start) * t
    };
    let accuracy = last_accuracy.unwrap_or(0.0);
    if !(0.0..=1.0).contains(&accuracy) {
        return Err(Error::invalid(format!("accuracy {accuracy} outside [0, 1]")));
    }
    Ok(base * accuracy)
}

/// The `k` sensors nearest to `state` (excluding itself), nearest first; equal
/// distances are ordered by id.
pub fn select_neighbors(
    state: &SensorState,
    all: &[SensorState],
    k: usize,
) -> Result<Vec<(usize, f64)>> {
    let mut others: Vec<(usize, f64)> = all
        .iter()
        .filter(|s| s.id != state.id)
        .map(|s| (s.id, state.position.distance(&s.position)))
        .collect();
    if k == 0 || k > others.len() {
        return Err(Error::invalid(format!(
            "cannot select {k} neighbours from {} other sensors",
            others.len()
        )));
    }
    others.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    others.truncate(k);
    Ok(others)
}

/// `w_own · own + (1 − w_own) · Σ w_i · neighbour_i`.
pub fn blend(
    own: &MlpCoefficients,
    w_own: f64,
    neighbors: &[(&MlpCoefficients, f64)],
) -> Result<MlpCoefficients> {
    if !(0.0..=1.0).contains(&w_own) {
        return Err(Error::invalid(format!("own weight {w_own} outside [0, 1]")));
    }
    if neighbors.is_empty() {
        return Err(Error::invalid("blend needs at least one neighbour"));
    }
    let sum: f64 = neighbors.iter().map(|(_, w)| w).sum();
    if (sum - 1.0).abs() > 1e-9 || neighbors.iter().any(|(_, w)| *w < 0.0) {
        return Err(Error::invalid(format!(
            "neighbour weights must be non-negative and sum to 1, got {sum}"
        )));
    }
    let mut terms = Vec::with_capacity(neighbors.len() + 1);
    terms.push((own, w_own));
    terms.extend(neighbors.iter().map(|&(c, w)| (c, (1.0 - w_own) * w)));
    MlpCoefficients::weighted_sum(&terms)
}

/// What one sensor did in one round, for audit trails.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub round: usize,
    pub sensor: usize,
    pub own_weight: f64,
    pub neighbor_ids: Vec<usize>,
    pub neighbor_weights: Vec<f64>,
    pub last_accuracy: Option<f64>,
}

/// One synchronous round: local training, barrier, then blending against the
/// post-training snapshot.
///
/// `datasets[i]` belongs to `sensors[i]` and must be `Some` exactly when that
/// sensor has training data. Local training uses `train_cfg` with a seed
/// derived from `(train_cfg.seed, sensor id, round)`.
pub fn federated_round(
    sensors: &[SensorState],
    policy: &FusionPolicy,
    round: usize,
    train_cfg: &TrainConfig,
    datasets: &[Option<&SensorData>],
) -> Result<(Vec<SensorState>, Vec<RoundTrace>)> {
    policy.validate(sensors.len())?;
    if datasets.len() != sensors.len() {
        return Err(Error::invalid("one dataset slot per sensor required"));
    }
    for (s, d) in sensors.iter().zip(datasets) {
        if s.has_training_data != d.is_some() {
            return Err(Error::invalid(format!(
                "sensor {} dataset presence does not match has_training_data",
                s.id
            )));
        }
    }

    // phase 1: local training
    let trained: Vec<SensorState> = sensors
        .par_iter()
        .zip(datasets.par_iter())
        .map(|(state, data)| -> Result<SensorState> {
            let Some(data) = data else {
                return Ok(state.clone());
            };
            let cfg = TrainConfig {
                seed: seed::derive_seed(
                    train_cfg.seed,
                    &format!("federation/sensor{}/round{round}", state.id),
                ),
                ..*train_cfg
            };
            let (coeffs, _) = train(&state.coeffs, &data.train, &cfg)?;
            let accuracy = evaluate(&coeffs, &data.validation)?
                .metrics()
                .accuracy
                .expect("validation set is nonempty");
            Ok(SensorState {
                coeffs,
                last_accuracy: Some(accuracy),
                ..state.clone()
            })
        })
        .collect::<Result<_>>()?;

    // phase 2: `trained` is the immutable snapshot every blend reads from
    let by_id = |id: usize| -> &SensorState {
        trained
            .iter()
            .find(|s| s.id == id)
            .expect("neighbour ids come from the snapshot")
    };

    // phase 3: blend
    let blended: Vec<(SensorState, RoundTrace)> = trained
        .par_iter()
        .map(|state| -> Result<(SensorState, RoundTrace)> {
            let neighbors = select_neighbors(state, &trained, policy.neighbor_count)?;
            let distances: Vec<f64> = neighbors.iter().map(|&(_, d)| d).collect();
            let weights = idw_weights(&distances, policy.idw_exponent)?;
            let w_own = own_weight(round, policy, state.last_accuracy)?;
            let terms: Vec<(&MlpCoefficients, f64)> = neighbors
                .iter()
                .zip(&weights)
                .map(|(&(id, _), &w)| (&by_id(id).coeffs, w))
                .collect();
            let coeffs = blend(&state.coeffs, w_own, &terms)?;
            let trace = RoundTrace {
                round,
                sensor: state.id,
                own_weight: w_own,
                neighbor_ids: neighbors.iter().map(|&(id, _)| id).collect(),
                neighbor_weights: weights,
                last_accuracy: state.last_accuracy,
            };
            Ok((
                SensorState {
                    coeffs,
                    ..state.clone()
                },
                trace,
            ))
        })
        .collect::<Result<_>>()?;

    Ok(blended.into_iter().unzip())
}

/// Writes round traces as CSV:
/// `round,sensor,w_own,neighbor_ids,neighbor_weights,last_accuracy`, with the
/// list columns `;`-separated and an empty accuracy for never-evaluated sensors.
pub fn write_round_trace<W: io::Write>(writer: W, traces: &[RoundTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "round",
        "sensor",
        "w_own",
        "neighbor_ids",
        "neighbor_weights",
        "last_accuracy",
    ])?;
    for t in traces {
        let ids: Vec<String> = t.neighbor_ids.iter().map(usize::to_string).collect();
        let ws: Vec<String> = t.neighbor_weights.iter().map(f64::to_string).collect();
        w.write_record([
            t.round.to_string(),
            t.sensor.to_string(),
            t.own_weight.to_string(),
            ids.join(";"),
            ws.join(";"),
            t.last_accuracy.map(|a| a.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
