//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use fedsense::features::ComplexMatrix;
use fedsense::model::{MlpCoefficients, Sample};
use fedsense::signal::Label;
use num_complex::Complex64;
use rand::Rng;

pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(n);
    for i in 0..n {
        m[(i, i)] = Complex64::new(rng.random_range(-1.0..1.0), 0.0);
        for j in i + 1..n {
            let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

fn matmul(a: &[Complex64], b: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

/// Characteristic polynomial coefficients, highest degree first, via Faddeev–LeVerrier.
pub fn characteristic_polynomial(m: &ComplexMatrix) -> Vec<Complex64> {
    let n = m.dim();
    let a: Vec<Complex64> = (0..n * n).map(|k| m[(k / n, k % n)]).collect();
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    let mut mk = vec![Complex64::new(0.0, 0.0); n * n];
    for k in 1..=n {
        let mut next = matmul(&a, &mk, n);
        let c_prev = *coeffs.last().unwrap();
        for i in 0..n {
            next[i * n + i] += c_prev;
        }
        let am = matmul(&a, &next, n);
        let tr: Complex64 = (0..n).map(|i| am[i * n + i]).sum();
        coeffs.push(-tr / k as f64);
        mk = next;
    }
    coeffs
}

fn horner(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let deg = coeffs.len() - 1;
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for (i, &c) in coeffs.iter().enumerate() {
        if i > 0 {
            dp = dp * z + p;
        }
        p = p * z + c;
        let _ = deg;
    }
    (p, dp)
}

/// All roots of a monic polynomial by Aberth–Ehrlich iteration.
pub fn polynomial_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let deg = coeffs.len() - 1;
    let bound = 1.0 + coeffs[1..].iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut z: Vec<Complex64> = (0..deg)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / deg as f64 + 0.4;
            Complex64::from_polar(bound * 0.7, theta)
        })
        .collect();
    for _ in 0..500 {
        let mut max_step: f64 = 0.0;
        for i in 0..deg {
            let (p, dp) = horner(coeffs, z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..deg)
                .filter(|&j| j != i)
                .map(|j| Complex64::new(1.0, 0.0) / (z[i] - z[j]))
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            z[i] -= step;
            max_step = max_step.max(step.norm());
        }
        if max_step < 1e-15 {
            break;
        }
    }
    z
}

/// Eigenvalues of a Hermitian matrix, descending, from its characteristic polynomial.
pub fn eigenvalues_by_charpoly(m: &ComplexMatrix) -> Vec<f64> {
    let coeffs = characteristic_polynomial(m);
    let mut roots: Vec<f64> = polynomial_roots(&coeffs)
        .into_iter()
        .map(|z| {
            // Newton polish on the real axis
            let mut x = z.re;
            for _ in 0..5 {
                let (p, dp) = horner(&coeffs, Complex64::new(x, 0.0));
                if dp.re.abs() > 1e-300 {
                    x -= p.re / dp.re;
                }
            }
            x
        })
        .collect();
    roots.sort_by(|a, b| b.total_cmp(a));
    roots
}

/// Central-difference gradient of the batch loss, in `params()` order.
pub fn finite_difference_gradient(model: &MlpCoefficients, batch: &[Sample], h: f64) -> Vec<f64> {
    let base = model.to_flat();
    let dim = model.input_dim();
    (0..base.len())
        .map(|i| {
            let mut plus = base.clone();
            plus[i] += h;
            let mut minus = base.clone();
            minus[i] -= h;
            let lp = MlpCoefficients::from_flat(dim, &plus).unwrap().loss(batch).unwrap();
            let lm = MlpCoefficients::from_flat(dim, &minus).unwrap().loss(batch).unwrap();
            (lp - lm) / (2.0 * h)
        })
        .collect()
}

pub fn random_batch(rng: &mut impl Rng, dim: usize, n: usize) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let x = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            Sample::new(x, Label::from_bool(i % 2 == 0))
        })
        .collect()
}

/// Model with every parameter, biases included, drawn from uniform(-1, 1), so
/// no ReLU sits exactly on its kink.
pub fn random_model(rng: &mut impl Rng, dim: usize) -> MlpCoefficients {
    let count = MlpCoefficients::zeros(dim).param_count();
    let values: Vec<f64> = (0..count).map(|_| rng.random_range(-1.0..1.0)).collect();
    MlpCoefficients::from_flat(dim, &values).unwrap()
}
