//! Discrete 2-D fields, the divergence operator, its adjoint, and the
//! spectral estimate used by the solver's step-size condition.
//!
//! Conventions. Fields are row-major `height x width`; `mx` is the flux
//! component along the width axis (columns), `my` along the height axis
//! (rows). The divergence is the backward difference of each component along
//! its own axis,
//!
//! ```text
//! div(M)[r,c] = (mx[r,c] - mx[r,c-1]) + (my[r,c] - my[r-1,c])
//! ```
//!
//! with reads outside the grid equal to zero (zero-flux boundary). The
//! adjoint is the negated forward difference clipped at the boundary, so that
//! `<div(M), lambda> = <M, div*(lambda)>` holds exactly.

use alloc::vec;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Dense scalar field on a `height x width` grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ScalarField {
    /// Builds a field after checking the length and that every entry is finite.
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyGrid);
        }
        if values.len() != height * width {
            return Err(Error::LengthMismatch { h: height, w: width, len: values.len() });
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NotFinite { index: i, value: v });
            }
        }
        Ok(Self { height, width, values })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, values: vec![0.0; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.width + c] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn norm_l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &ScalarField) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    /// Largest absolute difference to another field of the same shape.
    pub fn linf_distance(&self, other: &ScalarField) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn same_shape(&self, other: &ScalarField) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected_h: self.height,
                expected_w: self.width,
                got_h: other.height,
                got_w: other.width,
            });
        }
        Ok(())
    }
}

/// Nonnegative scalar field with its total mass cached.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    field: ScalarField,
    mass: f64,
}

impl DensityGrid {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let field = ScalarField::new(height, width, values)?;
        Self::from_field(field)
    }

    pub fn from_field(field: ScalarField) -> Result<Self> {
        for (i, &v) in field.values().iter().enumerate() {
            if v < 0.0 {
                return Err(Error::NegativeDensity { index: i, value: v });
            }
        }
        let mass = field.sum();
        Ok(Self { field, mass })
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn into_field(self) -> ScalarField {
        self.field
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn shape(&self) -> (usize, usize) {
        self.field.shape()
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    /// Rescales to unit mass. Returns `None` for a zero-mass density.
    pub fn normalized(&self) -> Option<DensityGrid> {
        if self.mass <= 0.0 {
            return None;
        }
        let inv = 1.0 / self.mass;
        let values = self.field.values().iter().map(|v| v * inv).collect();
        let field = ScalarField { height: self.field.height, width: self.field.width, values };
        Some(DensityGrid { mass: field.sum(), field })
    }

    /// Multiplies every cell by `factor` (must be nonnegative).
    pub fn scaled(&self, factor: f64) -> DensityGrid {
        debug_assert!(factor >= 0.0);
        let values: Vec<f64> = self.field.values().iter().map(|v| v * factor).collect();
        let field = ScalarField { height: self.field.height, width: self.field.width, values };
        DensityGrid { mass: field.sum(), field }
    }
}

/// Per-pixel flux vectors `(mx, my)` on a `height x width` grid.
///
/// Values addressed outside the grid are zero (zero-flux convention).
#[derive(Debug, Clone, PartialEq)]
pub struct FluxField {
    height: usize,
    width: usize,
    mx: Vec<f64>,
    my: Vec<f64>,
}

impl FluxField {
    pub fn new(height: usize, width: usize, mx: Vec<f64>, my: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyGrid);
        }
        let n = height * width;
        if mx.len() != n {
            return Err(Error::LengthMismatch { h: height, w: width, len: mx.len() });
        }
        if my.len() != n {
            return Err(Error::LengthMismatch { h: height, w: width, len: my.len() });
        }
        for (i, v) in mx.iter().chain(my.iter()).enumerate() {
            if !v.is_finite() {
                return Err(Error::NotFinite { index: i, value: *v });
            }
        }
        Ok(Self { height, width, mx, my })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        let n = height * width;
        Self { height, width, mx: vec![0.0; n], my: vec![0.0; n] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn mx(&self) -> &[f64] {
        &self.mx
    }

    pub fn my(&self) -> &[f64] {
        &self.my
    }

    pub fn mx_mut(&mut self) -> &mut [f64] {
        &mut self.mx
    }

    pub fn my_mut(&mut self) -> &mut [f64] {
        &mut self.my
    }

    /// Sum over pixels of the Euclidean norm of the flux vector: `||M||_{2,1}`.
    pub fn norm_l21(&self) -> f64 {
        self.mx
            .iter()
            .zip(&self.my)
            .map(|(x, y)| (x * x + y * y).sqrt())
            .sum()
    }

    /// Frobenius-style inner product of two flux fields.
    pub fn dot(&self, other: &FluxField) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        let mut acc = 0.0;
        for i in 0..self.mx.len() {
            acc += self.mx[i] * other.mx[i] + self.my[i] * other.my[i];
        }
        acc
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// Backward-difference divergence with zero-flux reads outside the grid.
pub fn divergence(m: &FluxField) -> ScalarField {
    let (h, w) = m.shape();
    let mut out = ScalarField::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let mut v = m.mx[i] + m.my[i];
            if c > 0 {
                v -= m.mx[i - 1];
            }
            if r > 0 {
                v -= m.my[i - w];
            }
            out.values[i] = v;
        }
    }
    out
}

/// Adjoint of [`divergence`]: negated forward differences clipped at the
/// boundary, `(D* lambda)x[r,c] = lambda[r,c] - lambda[r,c+1]` (zero past the
/// last column), and analogously in `y`.
pub fn divergence_adjoint(lambda: &ScalarField) -> FluxField {
    let (h, w) = lambda.shape();
    let mut out = FluxField::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let v = lambda.values[i];
            out.mx[i] = if c + 1 < w { v - lambda.values[i + 1] } else { v };
            out.my[i] = if r + 1 < h { v - lambda.values[i + w] } else { v };
        }
    }
    out
}

/// Adjoint restricted to the live flux components of the grid.
///
/// Flux along an axis of extent 1 is identically zero (every face along that
/// axis is boundary), so the solver and the spectral estimate only see the
/// surviving components.
pub(crate) fn divergence_adjoint_masked(lambda: &ScalarField) -> FluxField {
    let (h, w) = lambda.shape();
    let mut out = divergence_adjoint(lambda);
    if w < 2 {
        out.mx.iter_mut().for_each(|v| *v = 0.0);
    }
    if h < 2 {
        out.my.iter_mut().for_each(|v| *v = 0.0);
    }
    out
}

const POWER_ITERATION_CAP: usize = 10_000;
const POWER_ITERATION_TOL: f64 = 1e-9;
const POWER_ITERATION_SEED: u64 = 0x42;

/// Largest eigenvalue of the discrete Laplacian `D D^T` (the divergence
/// composed with its adjoint), estimated by power iteration from a seeded
/// random start vector.
///
/// The result lies in `(0, 8]` for the 5-point stencil; a 1x1 grid is the
/// single flux self-difference with eigenvalue exactly 1.
pub fn laplacian_max_eig(height: usize, width: usize) -> Result<f64> {
    if height == 0 || width == 0 {
        return Err(Error::EmptyGrid);
    }
    if height == 1 && width == 1 {
        return Ok(1.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_ITERATION_SEED);
    let mut v = ScalarField::zeros(height, width);
    for x in v.values_mut() {
        *x = rng.random_range(0.1..1.1);
    }
    let mut last = 0.0;
    for k in 0..POWER_ITERATION_CAP {
        let av = divergence(&divergence_adjoint_masked(&v));
        let estimate = v.dot(&av) / v.dot(&v);
        let norm = av.norm_l2();
        if norm == 0.0 {
            return Err(Error::PowerIterationStalled { iterations: k, last: estimate });
        }
        let inv = 1.0 / norm;
        v = av;
        v.values_mut().iter_mut().for_each(|x| *x *= inv);
        if k > 0 && (estimate - last).abs() <= POWER_ITERATION_TOL * estimate.abs() {
            return Ok(estimate);
        }
        last = estimate;
    }
    Err(Error::PowerIterationStalled { iterations: POWER_ITERATION_CAP, last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_field(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ScalarField {
        let values = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        ScalarField::new(h, w, values).unwrap()
    }

    fn random_flux(rng: &mut ChaCha8Rng, h: usize, w: usize) -> FluxField {
        let mx = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let my = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        FluxField::new(h, w, mx, my).unwrap()
    }

    #[test]
    fn divergence_of_zero_flux_is_zero() {
        let out = divergence(&FluxField::zeros(4, 5));
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn divergence_telescopes_on_a_line() {
        let m = FluxField::new(1, 3, vec![1.0, 1.0, 0.0], vec![0.0; 3]).unwrap();
        assert_eq!(divergence(&m).values(), &[1.0, 0.0, -1.0]);
    }

    #[test]
    fn divergence_sum_equals_boundary_flux() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_flux(&mut rng, 8, 8);
        let total: f64 = divergence(&m).sum();
        // Direct summation: telescoping leaves the last column of mx and the
        // last row of my.
        let mut boundary = 0.0;
        for r in 0..8 {
            boundary += m.mx()[r * 8 + 7];
        }
        for c in 0..8 {
            boundary += m.my()[7 * 8 + c];
        }
        assert!((total - boundary).abs() <= 1e-12);
    }

    #[test]
    fn adjoint_of_zero_is_zero_flux() {
        let out = divergence_adjoint(&ScalarField::zeros(3, 3));
        assert!(out.mx().iter().all(|&v| v == 0.0));
        assert!(out.my().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_of_constant_field_lives_on_the_far_boundary() {
        let lambda = ScalarField::new(3, 3, vec![2.0; 9]).unwrap();
        let out = divergence_adjoint(&lambda);
        for r in 0..3 {
            for c in 0..3 {
                let i = r * 3 + c;
                let expect_x = if c == 2 { 2.0 } else { 0.0 };
                let expect_y = if r == 2 { 2.0 } else { 0.0 };
                assert_eq!(out.mx()[i], expect_x);
                assert_eq!(out.my()[i], expect_y);
            }
        }
    }

    #[test]
    fn adjoint_identity_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let h = rng.random_range(1..=16);
            let w = rng.random_range(1..=16);
            let m = random_flux(&mut rng, h, w);
            let lambda = random_field(&mut rng, h, w);
            let lhs = divergence(&m).dot(&lambda);
            let rhs = m.dot(&divergence_adjoint(&lambda));
            let bound = 1e-10 * (m.norm_l2() * lambda.norm_l2() + 1.0);
            assert!((lhs - rhs).abs() <= bound, "adjoint identity violated: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn divergence_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m1 = random_flux(&mut rng, 6, 7);
        let m2 = random_flux(&mut rng, 6, 7);
        let (a, b) = (1.7, -0.3);
        let combo = FluxField::new(
            6,
            7,
            m1.mx().iter().zip(m2.mx()).map(|(x, y)| a * x + b * y).collect(),
            m1.my().iter().zip(m2.my()).map(|(x, y)| a * x + b * y).collect(),
        )
        .unwrap();
        let d = divergence(&combo);
        let d1 = divergence(&m1);
        let d2 = divergence(&m2);
        for i in 0..d.len() {
            let expect = a * d1.values()[i] + b * d2.values()[i];
            assert!((d.values()[i] - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn laplacian_closed_form_on_two_cells() {
        // Width-2 line: D = [[1,0],[-1,1]], D D^T = [[1,-1],[-1,2]],
        // largest eigenvalue (3+sqrt(5))/2.
        let expect = (3.0 + 5.0f64.sqrt()) / 2.0;
        let got = laplacian_max_eig(1, 2).unwrap();
        assert!((got - expect).abs() <= 1e-6 * expect, "{got} vs {expect}");
        let got_t = laplacian_max_eig(2, 1).unwrap();
        assert!((got_t - expect).abs() <= 1e-6 * expect);
    }

    #[test]
    fn laplacian_single_cell() {
        assert_eq!(laplacian_max_eig(1, 1).unwrap(), 1.0);
    }

    #[test]
    fn laplacian_large_grid_approaches_stencil_bound() {
        let got = laplacian_max_eig(64, 64).unwrap();
        assert!(got > 7.9 && got < 8.0, "{got}");
    }

    #[test]
    fn laplacian_monotone_and_bounded() {
        let mut prev = 0.0;
        for n in [1usize, 2, 3, 5, 9, 16, 32] {
            let lam = laplacian_max_eig(n, n).unwrap();
            assert!(lam <= 8.0 + 1e-9);
            assert!(lam >= prev - 1e-5, "not monotone at {n}: {lam} < {prev}");
            prev = lam;
        }
    }

    #[test]
    fn density_rejects_negative_values() {
        let err = DensityGrid::new(1, 2, vec![0.5, -0.1]).unwrap_err();
        assert!(matches!(err, Error::NegativeDensity { index: 1, .. }));
    }

    #[test]
    fn density_mass_matches_sum() {
        let d = DensityGrid::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!((d.mass() - 1.0).abs() <= 1e-9 * d.mass().max(1.0));
        let n = d.normalized().unwrap();
        assert!((n.mass() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn scalar_field_rejects_bad_input() {
        assert!(matches!(ScalarField::new(2, 2, vec![0.0; 3]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(
            ScalarField::new(1, 2, vec![0.0, f64::NAN]),
            Err(Error::NotFinite { index: 1, .. })
        ));
        assert!(matches!(ScalarField::new(0, 2, vec![]), Err(Error::EmptyGrid)));
    }
}
