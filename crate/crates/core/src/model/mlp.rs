use rand::Rng as _;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::signal::Label;

/// Width of both hidden layers.
pub const HIDDEN: usize = 4;

/// Seed of the default coefficients every untrained sensor starts from.
pub const DEFAULT_COEFF_SEED: u64 = 0x5EED_0F_DEFA;

/// Fully connected layer: `out = W·x + b`, `W` row-major `rows × cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            biases: vec![0.0; rows],
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                let row = &self.weights[r * self.cols..(r + 1) * self.cols];
                row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.biases[r]
            })
            .collect()
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// Weights and biases of the `D → 4 → 4 → 1` classifier.
///
/// The same structure doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpCoefficients {
    layers: [DenseLayer; 3],
}

/// One normalised input vector with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub label: Label,
}

impl Sample {
    pub fn new(x: Vec<f64>, label: Label) -> Self {
        Self { x, label }
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `sigmoid(z)` against `y`, computed from the logit.
fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

struct Activations {
    z1: Vec<f64>,
    h1: Vec<f64>,
    z2: Vec<f64>,
    h2: Vec<f64>,
    logit: f64,
}

impl MlpCoefficients {
    pub fn zeros(input_dim: usize) -> Self {
        Self {
            layers: [
                DenseLayer::zeros(HIDDEN, input_dim),
                DenseLayer::zeros(HIDDEN, HIDDEN),
                DenseLayer::zeros(1, HIDDEN),
            ],
        }
    }

    /// Builds coefficients from explicit layers, checking the 4-4-1 shape.
    pub fn from_layers(layers: [DenseLayer; 3]) -> Result<Self> {
        let d = layers[0].cols;
        let template = Self::zeros(d);
        for (got, want) in layers.iter().zip(&template.layers) {
            if !got.same_shape(want)
                || got.weights.len() != want.weights.len()
                || got.biases.len() != want.biases.len()
            {
                return Err(Error::invalid(format!(
                    "layer shape {}×{} does not fit the {d}-4-4-1 architecture",
                    got.rows, got.cols
                )));
            }
        }
        if d == 0 {
            return Err(Error::invalid("input dimension must be at least 1"));
        }
        let coeffs = Self { layers };
        if coeffs.params().any(|v| !v.is_finite()) {
            return Err(Error::invalid("coefficients must be finite"));
        }
        Ok(coeffs)
    }

    pub fn layers(&self) -> &[DenseLayer; 3] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// All parameters in snapshot order: W1, b1, W2, b2, W3, b3.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.params().copied().collect()
    }

    pub fn from_flat(input_dim: usize, values: &[f64]) -> Result<Self> {
        let mut c = Self::zeros(input_dim);
        if values.len() != c.param_count() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                c.param_count(),
                values.len()
            )));
        }
        for (dst, src) in c.params_mut().zip(values) {
            *dst = *src;
        }
        Ok(c)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers
            .iter()
            .zip(&other.layers)
            .all(|(a, b)| a.same_shape(b))
    }

    /// Output bias (the single bias of the last layer).
    pub fn output_bias_mut(&mut self) -> &mut f64 {
        &mut self.layers[2].biases[0]
    }

    /// `Σ weight_i · coeffs_i` element-wise. All terms must share one shape.
    pub fn weighted_sum(terms: &[(&MlpCoefficients, f64)]) -> Result<Self> {
        let (first, _) = terms
            .first()
            .ok_or_else(|| Error::invalid("weighted sum of no models"))?;
        if terms.iter().any(|(c, _)| !c.same_shape(first)) {
            return Err(Error::invalid("coefficient shapes differ"));
        }
        let mut out = Self::zeros(first.input_dim());
        for (c, w) in terms {
            for (dst, src) in out.params_mut().zip(c.params()) {
                *dst += w * src;
            }
        }
        Ok(out)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn activations(&self, x: &[f64]) -> Activations {
        let z1 = self.layers[0].affine(x);
        let h1: Vec<f64> = z1.iter().copied().map(relu).collect();
        let z2 = self.layers[1].affine(&h1);
        let h2: Vec<f64> = z2.iter().copied().map(relu).collect();
        let logit = self.layers[2].affine(&h2)[0];
        Activations {
            z1,
            h1,
            z2,
            h2,
            logit,
        }
    }

    /// `sigmoid(w3·relu(W2·relu(W1·x + b1) + b2) + b3)`.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(sigmoid(self.activations(x).logit))
    }

    /// Decides `SignalPresent` when the output reaches `threshold`.
    pub fn classify(&self, x: &[f64], threshold: f64) -> Result<Label> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::invalid(format!(
                "threshold {threshold} outside (0, 1)"
            )));
        }
        Ok(Label::from_bool(self.forward(x)? >= threshold))
    }

    /// Mean binary cross-entropy over `batch`.
    pub fn loss(&self, batch: &[Sample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let mut total = 0.0;
        for s in batch {
            self.check_input(&s.x)?;
            total += bce_with_logit(self.activations(&s.x).logit, s.label.target());
        }
        Ok(total / batch.len() as f64)
    }

    /// Analytic gradient of the mean binary cross-entropy over `batch`.
    pub fn gradient(&self, batch: &[Sample]) -> Result<MlpCoefficients> {
        Ok(self.gradient_and_loss(batch)?.0)
    }

    fn gradient_and_loss(&self, batch: &[Sample]) -> Result<(MlpCoefficients, f64)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let [l1, l2, l3] = &self.layers;
        let mut grad = Self::zeros(self.input_dim());
        let mut loss = 0.0;
        for s in batch {
            self.check_input(&s.x)?;
            let a = self.activations(&s.x);
            let y = s.label.target();
            loss += bce_with_logit(a.logit, y);

            let d_logit = sigmoid(a.logit) - y;
            let [g1, g2, g3] = &mut grad.layers;

            for (k, h) in a.h2.iter().enumerate() {
                g3.weights[k] += d_logit * h;
            }
            g3.biases[0] += d_logit;

            let dz2: Vec<f64> = (0..HIDDEN)
                .map(|k| {
                    if a.z2[k] > 0.0 {
                        l3.weights[k] * d_logit
                    } else {
                        0.0
                    }
                })
                .collect();
            for r in 0..HIDDEN {
                for c in 0..HIDDEN {
                    g2.weights[r * HIDDEN + c] += dz2[r] * a.h1[c];
                }
                g2.biases[r] += dz2[r];
            }

            let dz1: Vec<f64> = (0..HIDDEN)
                .map(|c| {
                    if a.z1[c] > 0.0 {
                        (0..HIDDEN).map(|r| l2.weights[r * HIDDEN + c] * dz2[r]).sum()
                    } else {
                        0.0
                    }
                })
                .collect();
            let d = l1.cols;
            for r in 0..HIDDEN {
                for (c, xv) in s.x.iter().enumerate() {
                    g1.weights[r * d + c] += dz1[r] * xv;
                }
                g1.biases[r] += dz1[r];
            }
        }
        let scale = 1.0 / batch.len() as f64;
        for g in grad.params_mut() {
            *g *= scale;
        }
        Ok((grad, loss * scale))
    }
}

fn uniform_init(input_dim: usize, rng: &mut seed::Rng) -> MlpCoefficients {
    let mut c = MlpCoefficients::zeros(input_dim);
    for layer in &mut c.layers {
        for w in &mut layer.weights {
            *w = rng.random_range(-0.5..0.5);
        }
    }
    c
}

/// The fixed default coefficients: zero biases, weights uniform in (−0.5, 0.5)
/// drawn from [`DEFAULT_COEFF_SEED`].
pub fn init_default(input_dim: usize) -> Result<MlpCoefficients> {
    init_random(input_dim, DEFAULT_COEFF_SEED)
}

pub fn init_random(input_dim: usize, seed: u64) -> Result<MlpCoefficients> {
    if input_dim == 0 {
        return Err(Error::invalid("input dimension must be at least 1"));
    }
    Ok(uniform_init(input_dim, &mut seed::rng(seed)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Set by the experiment runner from the top-level seed; not read from config files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 200,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        Ok(())
    }
}

/// Mini-batch gradient descent on binary cross-entropy.
///
/// Samples are reshuffled every epoch from a stream seeded by `cfg.seed`.
/// Returns the trained coefficients and the mean loss seen during the final epoch.
pub fn train(
    coeffs: &MlpCoefficients,
    data: &[Sample],
    cfg: &TrainConfig,
) -> Result<(MlpCoefficients, f64)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("no training data"));
    }
    let positives = data.iter().filter(|s| s.label.is_signal()).count();
    if positives == 0 || positives == data.len() {
        return Err(Error::DegenerateData(
            "training data must contain both classes".into(),
        ));
    }

    let mut model = coeffs.clone();
    let mut rng = seed::rng(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch: Vec<Sample> = Vec::with_capacity(cfg.batch_size);
    let mut epoch_loss = 0.0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            let (grad, loss) = model.gradient_and_loss(&batch)?;
            epoch_loss += loss * batch.len() as f64;
            for (p, g) in model.params_mut().zip(grad.params()) {
                *p -= cfg.learning_rate * g;
            }
        }
        epoch_loss /= data.len() as f64;
    }
    Ok((model, epoch_loss))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_fixed() {
        let a = init_default(11).unwrap();
        assert_eq!(a, init_default(11).unwrap());
        assert_eq!(a.layers()[0].rows, 4);
        assert_eq!(a.layers()[0].cols, 11);
        assert_eq!(a.layers()[1].weights.len(), 16);
        assert_eq!(a.layers()[2].weights.len(), 4);
        assert!(a.layers().iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
        assert!(a.params().all(|w| (-0.5..0.5).contains(w)));
        assert!(init_default(0).is_err());
    }

    #[test]
    fn random_init_seeded() {
        assert_eq!(init_random(3, 1).unwrap(), init_random(3, 1).unwrap());
        assert_ne!(init_random(3, 1).unwrap(), init_random(3, 2).unwrap());
        assert_eq!(init_random(3, 1).unwrap().param_count(), 4 * 3 + 4 + 16 + 4 + 4 + 1);
    }

    #[test]
    fn zero_model_outputs_half() {
        let m = MlpCoefficients::zeros(5);
        assert_eq!(m.forward(&[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap(), 0.5);
    }

    #[test]
    fn output_bias_is_monotone() {
        let mut m = init_default(3).unwrap();
        let x = [0.2, -0.4, 1.3];
        let mut last = m.forward(&x).unwrap();
        for _ in 0..5 {
            *m.output_bias_mut() += 0.25;
            let next = m.forward(&x).unwrap();
            assert!(next > last);
            last = next;
        }
    }

    #[test]
    fn dimension_mismatch() {
        let m = init_default(3).unwrap();
        assert!(matches!(m.forward(&[1.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn classify_threshold() {
        let mut m = MlpCoefficients::zeros(1);
        // output exactly 0.5: ties go to SignalPresent
        assert_eq!(m.classify(&[0.0], 0.5).unwrap(), Label::SignalPresent);
        // sigmoid(z) = 0.7
        *m.output_bias_mut() = (0.7f64 / 0.3).ln();
        assert_eq!(m.classify(&[0.0], 0.5).unwrap(), Label::SignalPresent);
        assert_eq!(m.classify(&[0.0], 0.75).unwrap(), Label::NoiseOnly);
        assert!(m.classify(&[0.0], 1.0).is_err());
        assert!(m.classify(&[0.0], 0.0).is_err());
    }

    #[test]
    fn stationary_output_bias() {
        // zero weights, balanced labels, symmetric inputs: output is 0.5 for every
        // sample, so the output-bias gradient (mean of p - y) vanishes
        let m = MlpCoefficients::zeros(2);
        let batch = vec![
            Sample::new(vec![1.0, -1.0], Label::SignalPresent),
            Sample::new(vec![-1.0, 1.0], Label::NoiseOnly),
        ];
        let g = m.gradient(&batch).unwrap();
        assert_eq!(g.layers()[2].biases[0], 0.0);
    }

    #[test]
    fn duplicated_batch_same_gradient() {
        let m = init_random(3, 4).unwrap();
        let batch = vec![
            Sample::new(vec![0.5, -1.0, 2.0], Label::SignalPresent),
            Sample::new(vec![-0.3, 0.1, 0.7], Label::NoiseOnly),
        ];
        let doubled: Vec<Sample> = batch.iter().chain(batch.iter()).cloned().collect();
        let a = m.gradient(&batch).unwrap().to_flat();
        let b = m.gradient(&doubled).unwrap().to_flat();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-15 * x.abs().max(1.0));
        }
    }

    #[test]
    fn weighted_sum_rejects_mismatch() {
        let a = MlpCoefficients::zeros(2);
        let b = MlpCoefficients::zeros(3);
        assert!(MlpCoefficients::weighted_sum(&[(&a, 0.5), (&b, 0.5)]).is_err());
        assert!(MlpCoefficients::weighted_sum(&[]).is_err());
    }

    #[test]
    fn train_rejects_single_class() {
        let data = vec![Sample::new(vec![1.0], Label::NoiseOnly); 4];
        let m = init_default(1).unwrap();
        assert!(matches!(
            train(&m, &data, &TrainConfig::default()),
            Err(Error::DegenerateData(_))
        ));
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn flat_round_trip() {
        let m = init_random(4, 8).unwrap();
        assert_eq!(MlpCoefficients::from_flat(4, &m.to_flat()).unwrap(), m);
        assert!(MlpCoefficients::from_flat(4, &m.to_flat()[1..]).is_err());
    }
}
