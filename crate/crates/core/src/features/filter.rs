use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::IqFrame;

pub const FILTER_TAPS: usize = 129;

/// Windowed-sinc (Hamming) low-pass taps for a two-sided `bandwidth_hz`,
/// normalised to unit DC gain.
pub fn lowpass_taps(bandwidth_hz: f64, sample_rate_hz: f64, taps: usize) -> Result<Vec<f64>> {
    if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0 && bandwidth_hz <= sample_rate_hz) {
        return Err(Error::invalid(format!(
            "bandwidth {bandwidth_hz} Hz outside (0, {sample_rate_hz}]"
        )));
    }
    if taps % 2 == 0 {
        return Err(Error::invalid("filter length must be odd"));
    }
    // cutoff in cycles/sample
    let cutoff = bandwidth_hz / (2.0 * sample_rate_hz);
    let centre = (taps / 2) as f64;
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let t = i as f64 - centre;
            let sinc = if t == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * t).sin() / (PI * t)
            };
            let window = 0.54 - 0.46 * (2.0 * PI * i as f64 / (taps - 1) as f64).cos();
            sinc * window
        })
        .collect();
    let sum: f64 = h.iter().sum();
    for tap in &mut h {
        *tap /= sum;
    }
    Ok(h)
}

/// "Same"-length convolution with zero-padded edges.
pub fn convolve_same(samples: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    let n = samples.len() as isize;
    let half = (taps.len() / 2) as isize;
    (0..n)
        .map(|i| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &h) in taps.iter().enumerate() {
                let j = i + half - k as isize;
                if (0..n).contains(&j) {
                    acc += samples[j as usize] * h;
                }
            }
            acc
        })
        .collect()
}

/// Keeps the `bandwidth_hz` band centred on DC (the complex baseband equivalent
/// of the channel band-pass filter).
pub fn bandpass_filter(frame: &IqFrame, bandwidth_hz: f64) -> Result<IqFrame> {
    let taps = lowpass_taps(bandwidth_hz, frame.sample_rate_hz(), FILTER_TAPS)?;
    Ok(frame.with_samples(convolve_same(frame.samples(), &taps)))
}
