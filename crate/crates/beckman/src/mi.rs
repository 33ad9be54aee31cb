//! Mutual-information diagnostics over softmax prediction sets.
//!
//! Two estimators: a softmax-variance surrogate for the information between
//! model parameters and outputs, and the discrete mutual information of the
//! empirical joint prediction distribution between two input streams.

use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float as _;

use crate::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-6;

/// `n` rows of `C` softmax probabilities, each row summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    n: usize,
    classes: usize,
    /// Row-major `n x classes`.
    p: Vec<f64>,
}

impl PredictionSet {
    /// Validates that every row is a probability vector (entries in `[0, 1]`,
    /// sum 1 within 1e-6) before building the set.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_tolerance(rows, ROW_SUM_TOL)
    }

    /// Same as [`PredictionSet::new`] with a caller-chosen row-sum tolerance.
    pub fn with_tolerance(rows: Vec<Vec<f64>>, tol: f64) -> Result<Self> {
        let n = rows.len();
        let classes = rows.first().map_or(0, Vec::len);
        if n == 0 || classes == 0 {
            return Err(Error::BadDataset("prediction set must have at least one row and one class"));
        }
        let mut p = Vec::with_capacity(n * classes);
        for (row_idx, row) in rows.into_iter().enumerate() {
            if row.len() != classes {
                return Err(Error::PredictionShapeMismatch {
                    n1: n,
                    c1: classes,
                    n2: row_idx,
                    c2: row.len(),
                });
            }
            let sum: f64 = row.iter().sum();
            if !sum.is_finite()
                || (sum - 1.0).abs() > tol
                || row.iter().any(|&v| !(-tol..=1.0 + tol).contains(&v))
            {
                return Err(Error::BadPredictionRow { row: row_idx, sum });
            }
            p.extend(row);
        }
        Ok(Self { n, classes, p })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.p[i * self.classes..(i + 1) * self.classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.p.chunks(self.classes)
    }
}

/// Softmax-variance surrogate of the parameter–output information:
/// `(1/C) * sum_j (1/n) * sum_i (p_ij - mean_j)^2` with columnwise means.
///
/// Zero when all rows agree; bounded by `1/4` per column for values in `[0, 1]`.
pub fn mi_param_output(preds: &PredictionSet) -> f64 {
    let n = preds.len() as f64;
    let c = preds.classes();
    let mut means = alloc::vec![0.0; c];
    for row in preds.rows() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut acc = 0.0;
    for row in preds.rows() {
        for (m, v) in means.iter().zip(row) {
            let d = v - m;
            acc += d * d;
        }
    }
    acc / (n * c as f64)
}

/// Discrete mutual information of the empirical joint prediction distribution
/// `P = (1/n) * sum_i p_i q_i^T` between two streams, with marginals taken as
/// row/column sums and the `0 * ln(0/x) = 0` convention. `P` is renormalized
/// to sum exactly 1 before evaluation, keeping the `<= ln C` bound exact.
pub fn mi_pairwise(preds_a: &PredictionSet, preds_b: &PredictionSet) -> Result<f64> {
    if preds_a.len() != preds_b.len() || preds_a.classes() != preds_b.classes() {
        return Err(Error::PredictionShapeMismatch {
            n1: preds_a.len(),
            c1: preds_a.classes(),
            n2: preds_b.len(),
            c2: preds_b.classes(),
        });
    }
    let c = preds_a.classes();
    let mut joint = alloc::vec![0.0; c * c];
    for (pa, pb) in preds_a.rows().zip(preds_b.rows()) {
        for (y, &a) in pa.iter().enumerate() {
            for (y2, &b) in pb.iter().enumerate() {
                joint[y * c + y2] += a * b;
            }
        }
    }
    let total: f64 = joint.iter().sum();
    if total > 0.0 {
        let inv = 1.0 / total;
        joint.iter_mut().for_each(|v| *v *= inv);
    }
    let mut row_marginal = alloc::vec![0.0; c];
    let mut col_marginal = alloc::vec![0.0; c];
    for y in 0..c {
        for y2 in 0..c {
            row_marginal[y] += joint[y * c + y2];
            col_marginal[y2] += joint[y * c + y2];
        }
    }
    let mut info = 0.0;
    for y in 0..c {
        for y2 in 0..c {
            let j = joint[y * c + y2];
            if j > 0.0 {
                info += j * (j / (row_marginal[y] * col_marginal[y2])).ln();
            }
        }
    }
    Ok(info)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_hot(c: usize, at: usize) -> Vec<f64> {
        let mut v = vec![0.0; c];
        v[at] = 1.0;
        v
    }

    #[test]
    fn param_output_zero_for_identical_rows() {
        let preds = PredictionSet::new(vec![vec![0.3, 0.7]; 10]).unwrap();
        assert!(mi_param_output(&preds).abs() <= 1e-30);
    }

    #[test]
    fn param_output_hand_value() {
        let preds = PredictionSet::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((mi_param_output(&preds) - 0.25).abs() <= 1e-15);
    }

    #[test]
    fn param_output_bounded_for_two_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let rows: Vec<Vec<f64>> = (0..20)
                .map(|_| {
                    let p = rng.random_range(0.0..1.0);
                    vec![p, 1.0 - p]
                })
                .collect();
            let preds = PredictionSet::new(rows).unwrap();
            let v = mi_param_output(&preds);
            assert!((0.0..=0.25 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn param_output_invariant_under_row_permutation() {
        let rows = vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.5, 0.5]];
        let a = PredictionSet::new(rows.clone()).unwrap();
        let mut reversed = rows;
        reversed.reverse();
        let b = PredictionSet::new(reversed).unwrap();
        assert!((mi_param_output(&a) - mi_param_output(&b)).abs() <= 1e-15);
    }

    #[test]
    fn pairwise_deterministic_uniform_channel_is_ln2() {
        let a = PredictionSet::new(vec![one_hot(2, 0), one_hot(2, 1)]).unwrap();
        let v = mi_pairwise(&a, &a).unwrap();
        assert!((v - core::f64::consts::LN_2).abs() <= 1e-12);
    }

    #[test]
    fn pairwise_independence_is_zero() {
        let a = PredictionSet::new(vec![one_hot(2, 0), one_hot(2, 1)]).unwrap();
        let b = PredictionSet::new(vec![vec![0.5, 0.5]; 2]).unwrap();
        assert!(mi_pairwise(&a, &b).unwrap().abs() <= 1e-9);
    }

    #[test]
    fn pairwise_hand_joint() {
        // Constructed inputs giving P = [[0.4, 0.1], [0.1, 0.4]].
        let a = PredictionSet::new(vec![one_hot(2, 0), one_hot(2, 1)]).unwrap();
        let b = PredictionSet::new(vec![vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap();
        let expect = 2.0 * 0.4 * (0.4f64 / 0.25).ln() + 2.0 * 0.1 * (0.1f64 / 0.25).ln();
        let v = mi_pairwise(&a, &b).unwrap();
        assert!((v - expect).abs() <= 1e-12);
        assert!((v - 0.1927).abs() <= 1e-4);
    }

    #[test]
    fn pairwise_symmetric_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let c = rng.random_range(2..5);
            let n = rng.random_range(1..12);
            let random_set = |rng: &mut ChaCha8Rng| {
                let rows: Vec<Vec<f64>> = (0..n)
                    .map(|_| {
                        let mut row: Vec<f64> = (0..c).map(|_| rng.random_range(0.01..1.0)).collect();
                        let s: f64 = row.iter().sum();
                        row.iter_mut().for_each(|v| *v /= s);
                        row
                    })
                    .collect();
                PredictionSet::new(rows).unwrap()
            };
            let a = random_set(&mut rng);
            let b = random_set(&mut rng);
            let ab = mi_pairwise(&a, &b).unwrap();
            let ba = mi_pairwise(&b, &a).unwrap();
            assert!((ab - ba).abs() <= 1e-12);
            assert!(ab >= -1e-9);
            assert!(ab <= (c as f64).ln() + 1e-9);
        }
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(matches!(
            PredictionSet::new(vec![vec![0.7, 0.7]]),
            Err(Error::BadPredictionRow { row: 0, .. })
        ));
        assert!(matches!(
            PredictionSet::new(vec![vec![0.5, 0.5], vec![0.5]]),
            Err(Error::PredictionShapeMismatch { .. })
        ));
    }
}
