//! Closed-form proximal/shrinkage operators used by the primal updates.

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

use crate::grid::{FluxField, ScalarField};

/// Elementwise soft threshold: `sign(x) * max(|x| - t, 0)`.
pub fn shrink_l1(x: &ScalarField, t: f64) -> ScalarField {
    debug_assert!(t > 0.0);
    let mut out = x.clone();
    shrink_l1_inplace(&mut out, t);
    out
}

pub(crate) fn shrink_l1_inplace(x: &mut ScalarField, t: f64) {
    for v in x.values_mut() {
        *v = soft_threshold(*v, t);
    }
}

#[inline]
pub(crate) fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Row-wise l2 shrinkage: each pixel's flux vector `v` becomes
/// `v * max(||v|| - t, 0) / ||v||`, with `(0, 0)` at zero-norm pixels.
pub fn shrink_l21(m: &FluxField, t: f64) -> FluxField {
    debug_assert!(t > 0.0);
    let mut out = m.clone();
    shrink_l21_inplace(&mut out, t);
    out
}

pub(crate) fn shrink_l21_inplace(m: &mut FluxField, t: f64) {
    let n = m.mx().len();
    for i in 0..n {
        let x = m.mx()[i];
        let y = m.my()[i];
        let norm = (x * x + y * y).sqrt();
        let scale = if norm > 0.0 { (norm - t).max(0.0) / norm } else { 0.0 };
        m.mx_mut()[i] = x * scale;
        m.my_mut()[i] = y * scale;
    }
}

/// Closed-form update of the relaxed marginal: elementwise
/// `max{0, (rho*tau1*mu_input + mu_prime_prev - tau1*lambda) / (1 + rho*tau1)}`.
pub fn prox_mu_prime(
    mu_prime_prev: &ScalarField,
    mu_input: &ScalarField,
    lambda: &ScalarField,
    rho: f64,
    tau1: f64,
) -> ScalarField {
    debug_assert!(rho > 0.0 && tau1 > 0.0);
    debug_assert_eq!(mu_prime_prev.shape(), mu_input.shape());
    debug_assert_eq!(mu_prime_prev.shape(), lambda.shape());
    let denom = 1.0 + rho * tau1;
    let mut out = mu_prime_prev.clone();
    for (i, v) in out.values_mut().iter_mut().enumerate() {
        let num = rho * tau1 * mu_input.values()[i] + *v - tau1 * lambda.values()[i];
        *v = (num / denom).max(0.0);
    }
    out
}
