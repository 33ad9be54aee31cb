//! Minimal multilayer perceptron with manual differentiation.
//!
//! Rectifier hidden layers, softmax output, cross-entropy loss. Backprop
//! returns gradients with respect to both the parameters and the input image,
//! which is what the gradient-sign attacks consume. No autograd, no
//! framework: the analytic gradients are checked against central finite
//! differences in the tests.

use alloc::vec;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

const HIDDEN_BIAS_INIT: f64 = 0.05;

/// Fully-connected classifier: `sizes[0]` inputs through rectifier hidden
/// layers to `sizes.last()` softmax classes.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    sizes: Vec<usize>,
    /// Per layer, `fan_in x fan_out` row-major (input index major).
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    /// Seed the parameters were initialized from (carried into checkpoints).
    pub seed: u64,
}

impl MlpModel {
    /// Glorot-uniform initialization from a seeded generator; hidden biases
    /// start slightly positive so rectifier units are live at step one.
    pub fn new_random(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::BadDataset("model needs at least input and output layers"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let layer_count = sizes.len() - 1;
        for k in 0..layer_count {
            let (fan_in, fan_out) = (sizes[k], sizes[k + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
            weights.push(w);
            let bias_init = if k + 1 < layer_count { HIDDEN_BIAS_INIT } else { 0.0 };
            biases.push(vec![bias_init; fan_out]);
        }
        Ok(Self { sizes: sizes.to_vec(), weights, biases, seed })
    }

    pub fn from_parts(sizes: Vec<usize>, weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || weights.len() != sizes.len() - 1 || biases.len() != sizes.len() - 1 {
            return Err(Error::BadDataset("layer counts do not chain"));
        }
        for k in 0..weights.len() {
            if weights[k].len() != sizes[k] * sizes[k + 1] || biases[k].len() != sizes[k + 1] {
                return Err(Error::BadDataset("parameter shapes do not chain"));
            }
        }
        Ok(Self { sizes, weights, biases, seed })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn class_count(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    /// All parameters flattened layer by layer (weights then bias per layer).
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for k in 0..self.weights.len() {
            out.extend_from_slice(&self.weights[k]);
            out.extend_from_slice(&self.biases[k]);
        }
        out
    }

    /// Inverse of [`MlpModel::parameters`].
    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        let expected: usize = self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>();
        if flat.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: flat.len() });
        }
        let mut offset = 0;
        for k in 0..self.weights.len() {
            let wl = self.weights[k].len();
            self.weights[k].copy_from_slice(&flat[offset..offset + wl]);
            offset += wl;
            let bl = self.biases[k].len();
            self.biases[k].copy_from_slice(&flat[offset..offset + bl]);
            offset += bl;
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    /// Forward pass: softmax probabilities plus the penultimate activations
    /// (the input itself for a single-layer model).
    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        self.check_input(x)?;
        let acts = self.activations(x);
        let penultimate = acts[acts.len() - 2].clone();
        let probs = acts.last().unwrap().clone();
        Ok(Forward { probs, penultimate })
    }

    /// All layer activations, input first, softmax probabilities last.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(x.to_vec());
        for k in 0..self.weights.len() {
            let input = acts.last().unwrap();
            let (fan_in, fan_out) = (self.sizes[k], self.sizes[k + 1]);
            let mut z = self.biases[k].clone();
            for i in 0..fan_in {
                let xi = input[i];
                if xi != 0.0 {
                    let row = &self.weights[k][i * fan_out..(i + 1) * fan_out];
                    for (zj, wj) in z.iter_mut().zip(row) {
                        *zj += xi * wj;
                    }
                }
            }
            if k + 1 < self.weights.len() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            } else {
                softmax_inplace(&mut z);
            }
            acts.push(z);
        }
        acts
    }

    /// Cross-entropy loss and its gradients with respect to all parameters
    /// and the input.
    pub fn backprop(&self, x: &[f64], label: usize) -> Result<Gradients> {
        self.check_input(x)?;
        let acts = self.activations(x);
        let probs = acts.last().unwrap().clone();
        let loss = -probs[label].max(1e-300).ln();

        // Softmax + cross-entropy: delta at the output is p - onehot(y).
        let mut delta: Vec<f64> = probs.clone();
        delta[label] -= 1.0;

        let layers = self.weights.len();
        let mut grad_w: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut grad_b: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();

        for k in (0..layers).rev() {
            let fan_out = self.sizes[k + 1];
            let input = &acts[k];
            for (i, &xi) in input.iter().enumerate() {
                if xi != 0.0 {
                    let row = &mut grad_w[k][i * fan_out..(i + 1) * fan_out];
                    for (g, d) in row.iter_mut().zip(&delta) {
                        *g += xi * d;
                    }
                }
            }
            grad_b[k].copy_from_slice(&delta);

            // Propagate to the previous activation; gate by the rectifier
            // except at the input.
            let fan_in = self.sizes[k];
            let mut prev = vec![0.0; fan_in];
            for i in 0..fan_in {
                let row = &self.weights[k][i * fan_out..(i + 1) * fan_out];
                prev[i] = row.iter().zip(&delta).map(|(w, d)| w * d).sum();
            }
            if k > 0 {
                for (p, a) in prev.iter_mut().zip(&acts[k]) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }

        Ok(Gradients { weights: grad_w, biases: grad_b, input: delta, probs, loss })
    }
}

/// Output of a forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub probs: Vec<f64>,
    pub penultimate: Vec<f64>,
}

/// Cross-entropy gradients of one sample.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub input: Vec<f64>,
    pub probs: Vec<f64>,
    pub loss: f64,
}

fn softmax_inplace(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    z.iter_mut().for_each(|v| *v *= inv);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let mut model = MlpModel::new_random(&[4, 3], 0).unwrap();
        model.weights[0].iter_mut().for_each(|w| *w = 0.0);
        let f = model.forward(&[0.3, 0.1, 0.9, 0.2]).unwrap();
        for p in &f.probs {
            assert!((p - 1.0 / 3.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let model = MlpModel::new_random(&[6, 5, 3], 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = model.forward(&x).unwrap();
            let sum: f64 = f.probs.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn hand_built_two_class_model_matches_dominant_half() {
        // Single layer on 4 inputs: class 0 reads the first half, class 1 the second.
        let weights = vec![vec![
            1.0, 0.0, //
            1.0, 0.0, //
            0.0, 1.0, //
            0.0, 1.0,
        ]];
        let biases = vec![vec![0.0, 0.0]];
        let model = MlpModel::from_parts(vec![4, 2], weights, biases, 0).unwrap();
        let front = model.forward(&[1.0, 0.8, 0.0, 0.1]).unwrap();
        assert!(front.probs[0] > front.probs[1]);
        let back = model.forward(&[0.1, 0.0, 0.9, 0.7]).unwrap();
        assert!(back.probs[1] > back.probs[0]);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let model = MlpModel::new_random(&[8, 6, 3], 42).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(0.05..0.95)).collect();
        let label = 1;
        let grads = model.backprop(&x, label).unwrap();
        let h = 1e-6;
        for _ in 0..20 {
            let i = rng.random_range(0..8);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let lp = model.backprop(&xp, label).unwrap().loss;
            let lm = model.backprop(&xm, label).unwrap().loss;
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = grads.input[i];
            let denom = numeric.abs().max(analytic.abs()).max(1e-8);
            assert!(
                (numeric - analytic).abs() / denom <= 1e-5,
                "coord {i}: numeric {numeric} vs analytic {analytic}"
            );
        }
    }

    #[test]
    fn parameter_gradients_match_finite_differences_across_layers() {
        let model = MlpModel::new_random(&[5, 4, 4, 2], 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(0.05..0.95)).collect();
        let label = 0;
        let grads = model.backprop(&x, label).unwrap();
        let flat_grad: Vec<f64> = {
            let mut out = Vec::new();
            for k in 0..grads.weights.len() {
                out.extend_from_slice(&grads.weights[k]);
                out.extend_from_slice(&grads.biases[k]);
            }
            out
        };
        let theta = model.parameters();
        let h = 1e-6;
        for _ in 0..100 {
            let i = rng.random_range(0..theta.len());
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let mut mp = model.clone();
            mp.set_parameters(&tp).unwrap();
            let mut mm = model.clone();
            mm.set_parameters(&tm).unwrap();
            let numeric =
                (mp.backprop(&x, label).unwrap().loss - mm.backprop(&x, label).unwrap().loss) / (2.0 * h);
            let analytic = flat_grad[i];
            let denom = numeric.abs().max(analytic.abs()).max(1e-8);
            assert!(
                (numeric - analytic).abs() / denom <= 1e-5,
                "param {i}: numeric {numeric} vs analytic {analytic}"
            );
        }
    }

    #[test]
    fn saturated_softmax_has_vanishing_gradient() {
        // Huge bias on the true class: p -> onehot, gradients -> 0.
        let mut model = MlpModel::new_random(&[3, 2], 1).unwrap();
        model.weights[0].iter_mut().for_each(|w| *w = 0.0);
        model.biases[0] = vec![50.0, -50.0];
        let grads = model.backprop(&[0.5, 0.5, 0.5], 0).unwrap();
        let norm: f64 = grads.input.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1e-6, "gradient norm {norm}");
    }

    #[test]
    fn linear_model_input_gradient_is_weighted_error() {
        // No hidden layer: dL/dx = W (p - onehot).
        let model = MlpModel::new_random(&[4, 3], 3).unwrap();
        let x = [0.2, 0.6, 0.1, 0.9];
        let grads = model.backprop(&x, 2).unwrap();
        let f = model.forward(&x).unwrap();
        let mut err = f.probs.clone();
        err[2] -= 1.0;
        for i in 0..4 {
            let expect: f64 =
                model.weights[0][i * 3..(i + 1) * 3].iter().zip(&err).map(|(w, d)| w * d).sum();
            assert!((grads.input[i] - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let model = MlpModel::new_random(&[4, 2], 0).unwrap();
        assert!(matches!(
            model.forward(&[0.0; 3]),
            Err(Error::DimensionMismatch { expected: 4, got: 3 })
        ));
    }
}
