//! Labelled IQ campaigns.
//!
//! Power convention: 0 dBm corresponds to a unit mean-square sample value, so
//! `linear = 10^(dBm / 10)`. All powers are relative to this software reference.
//!
//! The transmitted waveform is a multicarrier surrogate of a DVB-T signal: a set
//! of equal-amplitude subcarriers with random (per-frame) phases on a 56-point
//! grid, sent as 64-sample blocks whose first 8 samples repeat the tail of the
//! useful part (a cyclic prefix of 1/8 of the block). The waveform is therefore
//! periodic with the block length, which divides every power-of-two row length
//! used by the feature extractor.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Useful (FFT) part of a surrogate symbol, in samples.
pub const USEFUL_LEN: usize = 56;
/// Cyclic prefix length in samples.
pub const CYCLIC_PREFIX_LEN: usize = 8;
/// Full block length (cyclic prefix + useful part).
pub const SYMBOL_LEN: usize = USEFUL_LEN + CYCLIC_PREFIX_LEN;
/// Upper bound on the number of active subcarriers.
pub const MAX_SUBCARRIERS: usize = USEFUL_LEN;
/// Default active subcarriers: 40 of 56 grid points, about 7.1 MHz at 10 MS/s.
pub const DEFAULT_SUBCARRIERS: usize = 40;
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 10e6;

pub fn dbm_to_linear(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn linear_to_dbm(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Ground-truth occupancy of a frame (and the binary class used downstream).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    NoiseOnly,
    SignalPresent,
}

impl Label {
    pub fn is_signal(self) -> bool {
        self == Label::SignalPresent
    }

    pub fn from_bool(signal: bool) -> Self {
        if signal {
            Label::SignalPresent
        } else {
            Label::NoiseOnly
        }
    }

    /// Numeric target for the classifier: 1.0 for signal, 0.0 for noise.
    pub fn target(self) -> f64 {
        if self.is_signal() {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IqFrame {
    samples: Vec<Complex64>,
    sample_rate_hz: f64,
    label: Label,
    tx_power_dbm: Option<f64>,
}

impl IqFrame {
    pub fn new(
        samples: Vec<Complex64>,
        sample_rate_hz: f64,
        label: Label,
        tx_power_dbm: Option<f64>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("frame must contain at least one sample"));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        match (label, tx_power_dbm) {
            (Label::SignalPresent, None) => {
                return Err(Error::invalid("signal frame requires a TX power"))
            }
            (Label::NoiseOnly, Some(_)) => {
                return Err(Error::invalid("noise-only frame cannot carry a TX power"))
            }
            (_, Some(p)) if !p.is_finite() => {
                return Err(Error::invalid("TX power must be finite"))
            }
            _ => {}
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            label,
            tx_power_dbm,
        })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn tx_power_dbm(&self) -> Option<f64> {
        self.tx_power_dbm
    }

    /// Mean of |x|² over the frame.
    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    /// Same provenance, new samples. Length must stay nonzero.
    pub(crate) fn with_samples(&self, samples: Vec<Complex64>) -> Self {
        debug_assert!(!samples.is_empty());
        Self {
            samples,
            ..self.clone()
        }
    }
}

/// 2-D position in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    transmitter: Point2,
    sensors: Vec<Point2>,
}

/// Transmitter and sensor layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTopology", into = "RawTopology")]
pub struct Topology {
    transmitter: Point2,
    sensors: Vec<Point2>,
}

impl TryFrom<RawTopology> for Topology {
    type Error = Error;

    fn try_from(raw: RawTopology) -> Result<Self> {
        Topology::new(raw.transmitter, raw.sensors)
    }
}

impl From<Topology> for RawTopology {
    fn from(t: Topology) -> Self {
        RawTopology {
            transmitter: t.transmitter,
            sensors: t.sensors,
        }
    }
}

impl Topology {
    pub fn new(transmitter: Point2, sensors: Vec<Point2>) -> Result<Self> {
        if sensors.len() < 2 {
            return Err(Error::invalid("topology needs at least 2 sensors"));
        }
        if !transmitter.is_finite() || sensors.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("topology positions must be finite"));
        }
        for (i, a) in sensors.iter().enumerate() {
            for (j, b) in sensors.iter().enumerate().skip(i + 1) {
                if a.distance(b) <= 0.0 {
                    return Err(Error::invalid(format!(
                        "sensors {i} and {j} share the same position"
                    )));
                }
            }
        }
        Ok(Self {
            transmitter,
            sensors,
        })
    }

    /// Room-scale layout: transmitter at the origin, five sensors between 2 and 6.3 m away.
    pub fn room() -> Self {
        Self::new(
            Point2::new(0.0, 0.0),
            vec![
                Point2::new(2.0, 1.0),
                Point2::new(3.0, -1.0),
                Point2::new(4.0, 2.0),
                Point2::new(5.0, 0.0),
                Point2::new(6.0, -2.0),
            ],
        )
        .expect("static layout is valid")
    }

    /// Five sensors at the same 4 m range from the transmitter, irregularly
    /// spaced in angle, so every sensor sees the same path loss while the
    /// sensor-to-sensor distances differ.
    pub fn uniform_range() -> Self {
        let radius = 4.0;
        let angles_deg = [0.0f64, 25.0, 70.0, 160.0, 250.0];
        let sensors = angles_deg
            .iter()
            .map(|a| {
                let r = a.to_radians();
                Point2::new(radius * r.cos(), radius * r.sin())
            })
            .collect();
        Self::new(Point2::new(0.0, 0.0), sensors).expect("static layout is valid")
    }

    pub fn transmitter(&self) -> Point2 {
        self.transmitter
    }

    pub fn sensors(&self) -> &[Point2] {
        &self.sensors
    }

    pub fn sensor_count(&self) -> usize {
        self.sensors.len()
    }

    pub fn tx_distance(&self, sensor: usize) -> f64 {
        self.sensors[sensor].distance(&self.transmitter)
    }
}

impl Default for Topology {
    fn default() -> Self {
        Self::room()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    /// Signal-present runs per TX power level.
    pub runs_on: usize,
    /// Noise-only runs.
    pub runs_off: usize,
    pub power_min_dbm: f64,
    pub power_max_dbm: f64,
    pub power_step_dbm: f64,
    pub samples_per_run: usize,
    pub noise_power_dbm: f64,
    pub path_loss_exponent: f64,
    pub sample_rate_hz: f64,
    pub num_subcarriers: usize,
    /// Set by the experiment runner from the top-level seed; not read from config files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            runs_on: 10,
            runs_off: 10,
            power_min_dbm: -20.0,
            power_max_dbm: 10.0,
            power_step_dbm: 5.0,
            samples_per_run: 1 << 18,
            noise_power_dbm: 0.0,
            path_loss_exponent: 2.0,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            num_subcarriers: DEFAULT_SUBCARRIERS,
            seed: 0,
        }
    }
}

impl CampaignConfig {
    /// Laboratory scale: 50 + 50 runs, −40…10 dBm in 1 dB steps, 10M samples per run.
    pub fn laboratory_scale() -> Self {
        Self {
            runs_on: 50,
            runs_off: 50,
            power_min_dbm: -40.0,
            power_max_dbm: 10.0,
            power_step_dbm: 1.0,
            samples_per_run: 10_000_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs_on == 0 || self.runs_off == 0 {
            return Err(Error::invalid("runs_on and runs_off must be at least 1"));
        }
        if !(self.power_min_dbm.is_finite() && self.power_max_dbm.is_finite()) {
            return Err(Error::invalid("power sweep bounds must be finite"));
        }
        if self.power_min_dbm > self.power_max_dbm {
            return Err(Error::invalid("power_min_dbm must not exceed power_max_dbm"));
        }
        if !(self.power_step_dbm.is_finite() && self.power_step_dbm > 0.0) {
            return Err(Error::invalid("power_step_dbm must be positive"));
        }
        if self.samples_per_run == 0 {
            return Err(Error::invalid("samples_per_run must be positive"));
        }
        if !self.noise_power_dbm.is_finite() {
            return Err(Error::invalid("noise_power_dbm must be finite"));
        }
        if !(self.path_loss_exponent.is_finite() && self.path_loss_exponent > 0.0) {
            return Err(Error::invalid("path_loss_exponent must be positive"));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::invalid("sample_rate_hz must be positive"));
        }
        check_subcarriers(self.samples_per_run, self.num_subcarriers)
    }

    /// TX power levels of the sweep, inclusive of both ends when the step divides the span.
    pub fn power_levels(&self) -> Vec<f64> {
        let span = self.power_max_dbm - self.power_min_dbm;
        let count = (span / self.power_step_dbm + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| self.power_min_dbm + i as f64 * self.power_step_dbm)
            .collect()
    }

    pub fn frames_per_sensor(&self) -> usize {
        self.runs_off + self.runs_on * self.power_levels().len()
    }
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    Ok(())
}

fn check_subcarriers(n: usize, num_subcarriers: usize) -> Result<()> {
    if num_subcarriers < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 subcarriers, got {num_subcarriers}"
        )));
    }
    if num_subcarriers > MAX_SUBCARRIERS {
        return Err(Error::invalid(format!(
            "at most {MAX_SUBCARRIERS} subcarriers fit the symbol grid, got {num_subcarriers}"
        )));
    }
    if n < num_subcarriers {
        return Err(Error::invalid(format!(
            "frame length {n} shorter than subcarrier count {num_subcarriers}"
        )));
    }
    Ok(())
}

fn gaussian_samples(n: usize, power: f64, rng: &mut seed::Rng) -> Vec<Complex64> {
    let sigma = (power / 2.0).sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..n)
        .map(|_| Complex64::new(sigma * normal.sample(rng), sigma * normal.sample(rng)))
        .collect()
}

/// Circularly symmetric complex Gaussian noise at the given power.
pub fn generate_noise(n: usize, noise_power_dbm: f64, seed: u64) -> Result<IqFrame> {
    check_count(n)?;
    let mut rng = seed::rng(seed);
    let samples = gaussian_samples(n, dbm_to_linear(noise_power_dbm), &mut rng);
    IqFrame::new(samples, DEFAULT_SAMPLE_RATE_HZ, Label::NoiseOnly, None)
}

/// Multicarrier surrogate waveform scaled to `tx_power_dbm` (empirical mean power).
pub fn generate_signal(
    n: usize,
    tx_power_dbm: f64,
    num_subcarriers: usize,
    seed: u64,
) -> Result<IqFrame> {
    check_subcarriers(n, num_subcarriers)?;
    if !tx_power_dbm.is_finite() {
        return Err(Error::invalid("TX power must be finite"));
    }
    let mut rng = seed::rng(seed);
    let phases: Vec<f64> = (0..num_subcarriers)
        .map(|_| rng.random_range(0.0..2.0 * PI))
        .collect();

    // subcarriers centred on DC: -K/2 .. K - K/2 - 1
    let first = -((num_subcarriers / 2) as i64);
    let useful: Vec<Complex64> = (0..USEFUL_LEN)
        .map(|m| {
            phases
                .iter()
                .enumerate()
                .map(|(i, phase)| {
                    let k = (first + i as i64) as f64;
                    Complex64::from_polar(1.0, 2.0 * PI * k * m as f64 / USEFUL_LEN as f64 + phase)
                })
                .sum()
        })
        .collect();

    let block: Vec<Complex64> = useful[USEFUL_LEN - CYCLIC_PREFIX_LEN..]
        .iter()
        .chain(useful.iter())
        .copied()
        .collect();
    let mut samples: Vec<Complex64> = block.iter().copied().cycle().take(n).collect();

    let measured = samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / n as f64;
    let scale = (dbm_to_linear(tx_power_dbm) / measured).sqrt();
    for s in &mut samples {
        *s *= scale;
    }
    IqFrame::new(
        samples,
        DEFAULT_SAMPLE_RATE_HZ,
        Label::SignalPresent,
        Some(tx_power_dbm),
    )
}

/// Log-distance path loss in dB with a 1 m reference distance.
pub fn path_loss_db(distance_m: f64, path_loss_exponent: f64) -> f64 {
    10.0 * path_loss_exponent * distance_m.log10()
}

/// Attenuates `frame` by log-distance path loss and adds independent Gaussian noise.
pub fn apply_channel(
    frame: &IqFrame,
    distance_m: f64,
    path_loss_exponent: f64,
    noise_power_dbm: f64,
    seed: u64,
) -> Result<IqFrame> {
    if !(distance_m.is_finite() && distance_m > 0.0) {
        return Err(Error::invalid(format!(
            "distance must be positive, got {distance_m}"
        )));
    }
    let gain = 10f64.powf(-path_loss_db(distance_m, path_loss_exponent) / 20.0);
    let mut rng = seed::rng(seed);
    let noise = gaussian_samples(frame.len(), dbm_to_linear(noise_power_dbm), &mut rng);
    let samples = frame
        .samples()
        .iter()
        .zip(noise)
        .map(|(s, w)| s * gain + w)
        .collect();
    Ok(frame.with_samples(samples))
}

/// Runs the whole measurement campaign.
///
/// For each sensor: `runs_off` noise-only frames followed by `runs_on` signal
/// frames per TX power level (levels ascending, runs within a level). A given
/// (level, run) transmission is the same waveform at every sensor; only the
/// channel and the receiver noise differ.
pub fn run_campaign(config: &CampaignConfig, topology: &Topology) -> Result<Vec<Vec<IqFrame>>> {
    config.validate()?;
    let levels = config.power_levels();
    (0..topology.sensor_count())
        .into_par_iter()
        .map(|sensor| {
            let distance = topology.tx_distance(sensor);
            let mut frames = Vec::with_capacity(config.frames_per_sensor());
            for run in 0..config.runs_off {
                let s = seed::derive_seed(config.seed, &format!("campaign/sensor{sensor}/off/{run}"));
                let frame = generate_noise(config.samples_per_run, config.noise_power_dbm, s)?;
                frames.push(frame.with_rate(config.sample_rate_hz));
            }
            for (level_idx, &level) in levels.iter().enumerate() {
                for run in 0..config.runs_on {
                    let tx_seed =
                        seed::derive_seed(config.seed, &format!("campaign/tx/{level_idx}/{run}"));
                    let tx = generate_signal(
                        config.samples_per_run,
                        level,
                        config.num_subcarriers,
                        tx_seed,
                    )?;
                    let rx_seed = seed::derive_seed(
                        config.seed,
                        &format!("campaign/sensor{sensor}/on/{level_idx}/{run}"),
                    );
                    let rx = apply_channel(
                        &tx,
                        distance,
                        config.path_loss_exponent,
                        config.noise_power_dbm,
                        rx_seed,
                    )?;
                    frames.push(rx.with_rate(config.sample_rate_hz));
                }
            }
            Ok(frames)
        })
        .collect()
}

impl IqFrame {
    fn with_rate(mut self, sample_rate_hz: f64) -> Self {
        self.sample_rate_hz = sample_rate_hz;
        self
    }
}

/// Reads raw interleaved little-endian `f32` I/Q pairs (no header).
pub fn load_iq_file(
    path: impl AsRef<Path>,
    sample_rate_hz: f64,
    label: Label,
    tx_power_dbm: Option<f64>,
) -> Result<IqFrame> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.is_empty() {
        return Err(Error::format(format!("{}: empty IQ file", path.display())));
    }
    if bytes.len() % 8 != 0 {
        return Err(Error::format(format!(
            "{}: {} bytes is not a whole number of I/Q float32 pairs",
            path.display(),
            bytes.len()
        )));
    }
    let samples = bytes
        .chunks_exact(8)
        .map(|pair| {
            let i = f32::from_le_bytes(pair[..4].try_into().unwrap());
            let q = f32::from_le_bytes(pair[4..].try_into().unwrap());
            Complex64::new(i as f64, q as f64)
        })
        .collect();
    IqFrame::new(samples, sample_rate_hz, label, tx_power_dbm)
}

/// Writes samples as interleaved little-endian `f32` I/Q pairs.
pub fn write_iq_file(path: impl AsRef<Path>, samples: &[Complex64]) -> Result<()> {
    let mut buf = Vec::with_capacity(samples.len() * 8);
    for s in samples {
        buf.extend_from_slice(&(s.re as f32).to_le_bytes());
        buf.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}
