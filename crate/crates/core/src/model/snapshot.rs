//! Flat-text coefficient snapshots.
//!
//! Six lines, one per tensor in the order `W1 b1 W2 b2 W3 b3`; each line holds
//! the row-major values separated by single spaces. Values are written in the
//! shortest form that parses back to the identical `f64`.

use std::fmt::Write as _;

use super::mlp::{DenseLayer, MlpCoefficients, HIDDEN};
use crate::error::{Error, Result};

pub fn to_text(coeffs: &MlpCoefficients) -> String {
    let mut out = String::new();
    for layer in coeffs.layers() {
        for tensor in [&layer.weights, &layer.biases] {
            let line: Vec<String> = tensor.iter().map(f64::to_string).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
    }
    out
}

fn parse_line(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| {
                Error::format(format!("line {lineno}: cannot parse {tok:?} as a number"))
            })
        })
        .collect()
}

pub fn from_text(text: &str) -> Result<MlpCoefficients> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != 6 {
        return Err(Error::format(format!(
            "snapshot must have 6 tensor lines, found {}",
            lines.len()
        )));
    }
    let tensors = lines
        .iter()
        .enumerate()
        .map(|(i, l)| parse_line(l, i + 1))
        .collect::<Result<Vec<_>>>()?;

    let w1 = &tensors[0];
    if w1.is_empty() || w1.len() % HIDDEN != 0 {
        return Err(Error::format(format!(
            "first weight tensor has {} values, not a positive multiple of {HIDDEN}",
            w1.len()
        )));
    }
    let d = w1.len() / HIDDEN;
    let shapes = [(HIDDEN, d), (HIDDEN, HIDDEN), (1, HIDDEN)];
    let mut layers = Vec::with_capacity(3);
    for (i, &(rows, cols)) in shapes.iter().enumerate() {
        let weights = tensors[2 * i].clone();
        let biases = tensors[2 * i + 1].clone();
        if weights.len() != rows * cols || biases.len() != rows {
            return Err(Error::format(format!(
                "layer {} expects {}×{} weights and {} biases, found {} and {}",
                i + 1,
                rows,
                cols,
                rows,
                weights.len(),
                biases.len()
            )));
        }
        layers.push(DenseLayer {
            rows,
            cols,
            weights,
            biases,
        });
    }
    let layers: [DenseLayer; 3] = layers.try_into().expect("three layers");
    MlpCoefficients::from_layers(layers).map_err(|e| Error::format(e.to_string()))
}
