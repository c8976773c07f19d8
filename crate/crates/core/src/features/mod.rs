//! Frame → feature vector.
//!
//! The pipeline is: band filter, reshape the first `N·L` samples into `L` rows
//! of `N`, then compute the mean power `μ`, the correlation matrix
//! `R = X·Xᴴ / N`, its eigenvalues `γ_0 ≥ … ≥ γ_{L-1}`, the ratio
//! `T = γ_max / γ_min` and the normalised autocorrelation magnitude of the
//! filtered frame at a fixed lag.

mod eigen;
mod filter;
mod normalize;

use std::io;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use eigen::{
    eigenvalues_hermitian, jacobi_symmetric, ComplexMatrix, HERMITIAN_TOLERANCE, JACOBI_TOLERANCE,
};
pub use filter::{bandpass_filter, convolve_same, lowpass_taps, FILTER_TAPS};
pub use normalize::{apply_normalizers, fit_normalizers, Normalizer, NormalizerKind, NormalizerSet};

use crate::error::{Error, Result};
use crate::signal::{IqFrame, Label, USEFUL_LEN};

/// `L` rows of `N` consecutive samples, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl SampleMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows < 2 {
            return Err(Error::invalid(format!("need at least 2 rows, got {rows}")));
        }
        if cols < rows {
            return Err(Error::invalid(format!(
                "row length {cols} shorter than row count {rows}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::invalid("sample count does not match rows × cols"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }
}

pub fn frame_samples(frame: &IqFrame, n: usize, l: usize) -> Result<SampleMatrix> {
    let needed = n
        .checked_mul(l)
        .ok_or_else(|| Error::invalid("N·L overflows"))?;
    if frame.len() < needed {
        return Err(Error::invalid(format!(
            "frame has {} samples, N·L = {needed} required",
            frame.len()
        )));
    }
    SampleMatrix::new(l, n, frame.samples()[..needed].to_vec())
}

pub fn mean_power(m: &SampleMatrix) -> f64 {
    m.data.iter().map(|s| s.norm_sqr()).sum::<f64>() / m.data.len() as f64
}

/// `R = X·Xᴴ / N`.
pub fn correlation_matrix(m: &SampleMatrix) -> ComplexMatrix {
    let l = m.rows;
    let mut r = ComplexMatrix::zeros(l);
    let n = m.cols as f64;
    for i in 0..l {
        for j in i..l {
            let v: Complex64 = m
                .row(i)
                .iter()
                .zip(m.row(j))
                .map(|(a, b)| a * b.conj())
                .sum::<Complex64>()
                / n;
            r[(i, j)] = v;
            r[(j, i)] = v.conj();
        }
        // the diagonal is real by construction
        r[(i, i)].im = 0.0;
    }
    r
}

/// `T = γ_max / γ_min` for eigenvalues sorted descending.
pub fn decision_metric(eigs: &[f64]) -> Result<f64> {
    let (Some(&max), Some(&min)) = (eigs.first(), eigs.last()) else {
        return Err(Error::invalid("no eigenvalues"));
    };
    if !(min > 0.0) {
        return Err(Error::DegenerateInput(format!(
            "smallest eigenvalue {min} is not positive (zero or rank-deficient frame)"
        )));
    }
    Ok(max / min)
}

/// `|Σ x[k]·conj(x[k+lag])| / sqrt(Σ|x[k]|² · Σ|x[k+lag]|²)` over the overlap.
/// A zero-power overlap yields 0.
pub fn autocorrelation(frame: &IqFrame, lag: usize) -> Result<f64> {
    let x = frame.samples();
    if lag == 0 || lag >= x.len() {
        return Err(Error::invalid(format!(
            "lag {lag} outside [1, {})",
            x.len()
        )));
    }
    let head = &x[..x.len() - lag];
    let tail = &x[lag..];
    let cross: Complex64 = head.iter().zip(tail).map(|(a, b)| a * b.conj()).sum();
    let e_head: f64 = head.iter().map(|s| s.norm_sqr()).sum();
    let e_tail: f64 = tail.iter().map(|s| s.norm_sqr()).sum();
    let denom = (e_head * e_tail).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((cross.norm() / denom).min(1.0))
}

/// Raw (un-normalised) features of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    /// Sorted descending.
    pub eigenvalues: Vec<f64>,
    pub metric_t: f64,
    pub mean_power: f64,
    pub autocorr: f64,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    /// Row length `N`.
    pub n: usize,
    /// Row count `L`.
    pub l: usize,
    /// Autocorrelation lag in samples (default: useful symbol length).
    pub lag: usize,
    pub bandwidth_hz: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            n: 32768,
            l: 8,
            lag: USEFUL_LEN,
            bandwidth_hz: 8e6,
        }
    }
}

impl FeatureParams {
    pub fn validate(&self) -> Result<()> {
        if self.l < 2 || self.n < self.l {
            return Err(Error::invalid(format!(
                "need L ≥ 2 and N ≥ L, got N={} L={}",
                self.n, self.l
            )));
        }
        if self.lag == 0 {
            return Err(Error::invalid("autocorrelation lag must be at least 1"));
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(Error::invalid("bandwidth must be positive"));
        }
        Ok(())
    }
}

pub fn extract_features(frame: &IqFrame, params: &FeatureParams) -> Result<FeatureRecord> {
    params.validate()?;
    let filtered = bandpass_filter(frame, params.bandwidth_hz)?;
    let matrix = frame_samples(&filtered, params.n, params.l)?;
    let mu = mean_power(&matrix);
    let r = correlation_matrix(&matrix);
    let eigenvalues = eigenvalues_hermitian(&r)?;
    let metric_t = decision_metric(&eigenvalues)?;
    let autocorr = autocorrelation(&filtered, params.lag)?;
    Ok(FeatureRecord {
        eigenvalues,
        metric_t,
        mean_power: mu,
        autocorr,
        label: frame.label(),
    })
}

fn header(l: usize) -> Vec<String> {
    let mut h: Vec<String> = (0..l).map(|i| format!("g{i}")).collect();
    h.extend(["t", "mu", "ac", "label"].map(String::from));
    h
}

/// Writes records as CSV with header `g0..g{L-1},t,mu,ac,label` (label 1 = signal).
pub fn write_features_csv<W: io::Write>(writer: W, records: &[FeatureRecord]) -> Result<()> {
    let l = records.first().map_or(8, |r| r.eigenvalues.len());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header(l))?;
    for r in records {
        if r.eigenvalues.len() != l {
            return Err(Error::invalid("records disagree on eigenvalue count"));
        }
        let mut row: Vec<String> = r.eigenvalues.iter().map(f64::to_string).collect();
        row.push(r.metric_t.to_string());
        row.push(r.mean_power.to_string());
        row.push(r.autocorr.to_string());
        row.push(if r.label.is_signal() { "1" } else { "0" }.to_string());
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_features_csv(path: impl AsRef<Path>, records: &[FeatureRecord]) -> Result<()> {
    write_features_csv(std::fs::File::create(path)?, records)
}

pub fn read_features_csv<R: io::Read>(reader: R) -> Result<Vec<FeatureRecord>> {
    let mut rd = csv::Reader::from_reader(reader);
    let headers = rd.headers()?.clone();
    let l = headers.len().checked_sub(4).filter(|&l| l >= 1).ok_or_else(|| {
        Error::format("feature CSV needs at least g0,t,mu,ac,label columns")
    })?;
    let expected = header(l);
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::format(format!(
            "unexpected feature CSV header, expected {}",
            expected.join(",")
        )));
    }
    let parse = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::format(format!("bad number {s:?}")))
    };
    rd.records()
        .map(|row| {
            let row = row?;
            let label = match &row[l + 3] {
                "1" => Label::SignalPresent,
                "0" => Label::NoiseOnly,
                other => return Err(Error::format(format!("bad label {other:?}"))),
            };
            Ok(FeatureRecord {
                eigenvalues: (0..l).map(|i| parse(&row[i])).collect::<Result<_>>()?,
                metric_t: parse(&row[l])?,
                mean_power: parse(&row[l + 1])?,
                autocorr: parse(&row[l + 2])?,
                label,
            })
        })
        .collect()
}
