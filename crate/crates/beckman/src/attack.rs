//! Signed-gradient l-infinity attacks against the toy classifier.

use alloc::vec::Vec;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::nn::MlpModel;
use crate::{Error, Result};

/// l-infinity attack budget and iteration schedule.
#[derive(Debug, Clone, Copy)]
pub struct AttackConfig {
    /// Budget in pixel units, within `(0, 1)`; 0 disables the perturbation.
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
    pub random_start: bool,
}

impl AttackConfig {
    /// Single-step config with `step_size = epsilon`.
    pub fn fgsm(epsilon: f64) -> Self {
        Self { epsilon, steps: 1, step_size: epsilon, random_start: false }
    }

    /// Iterated config with the conventional `2.5 * epsilon / steps` step
    /// (epsilon/4 for 10 steps) and a random start.
    pub fn pgd(epsilon: f64, steps: usize) -> Self {
        Self { epsilon, steps, step_size: 2.5 * epsilon / steps.max(1) as f64, random_start: true }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::BadAttackConfig("epsilon must lie in [0, 1)"));
        }
        if self.steps == 0 {
            return Err(Error::BadAttackConfig("steps must be >= 1"));
        }
        if self.epsilon > 0.0 && self.step_size * self.steps as f64 + 1e-12 < self.epsilon {
            return Err(Error::BadAttackConfig("step_size * steps must cover epsilon"));
        }
        Ok(())
    }
}

/// Fast gradient sign method: `clamp(x + eps * sign(grad), 0, 1)`.
/// The config must describe a single step.
pub fn attack_fgsm(model: &MlpModel, image: &[f64], label: usize, cfg: &AttackConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.steps != 1 {
        return Err(Error::BadAttackConfig("fgsm requires steps = 1"));
    }
    if cfg.epsilon == 0.0 {
        return Ok(image.to_vec());
    }
    let grads = model.backprop(image, label)?;
    Ok(image
        .iter()
        .zip(&grads.input)
        .map(|(x, g)| (x + cfg.epsilon * sign(*g)).clamp(0.0, 1.0))
        .collect())
}

/// Projected gradient descent: iterated signed-gradient steps, each projected
/// into the epsilon ball around the original image and into `[0, 1]`, with an
/// optional uniform random start inside the ball.
pub fn attack_pgd(
    model: &MlpModel,
    image: &[f64],
    label: usize,
    cfg: &AttackConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.epsilon == 0.0 {
        return Ok(image.to_vec());
    }
    let eps = cfg.epsilon;
    let mut adv: Vec<f64> = if cfg.random_start {
        image.iter().map(|x| (x + rng.random_range(-eps..eps)).clamp(0.0, 1.0)).collect()
    } else {
        image.to_vec()
    };
    for _ in 0..cfg.steps {
        let grads = model.backprop(&adv, label)?;
        for ((a, x), g) in adv.iter_mut().zip(image).zip(&grads.input) {
            let stepped = *a + cfg.step_size * sign(*g);
            *a = stepped.clamp(x - eps, x + eps).clamp(0.0, 1.0);
        }
    }
    Ok(adv)
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
