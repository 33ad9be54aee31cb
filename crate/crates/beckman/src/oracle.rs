//! Independent brute-force references used to validate the primal-dual
//! solver: the exact 1-D earth mover distance and a projected-subgradient
//! descent on the slack-eliminated barycenter objective.
//!
//! Nothing here shares code with the solver's update rules; these are the
//! other side of the dual-route checks in the test suites.

use alloc::vec;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float as _;

use crate::grid::{divergence, divergence_adjoint_masked, DensityGrid, FluxField, ScalarField};
use crate::solver::BarycenterProblem;
use crate::{Error, Result};

const EMD_MASS_TOL: f64 = 1e-9;

/// Exact 1-D Wasserstein-1 value between two equal-mass line densities:
/// the sum of absolute cumulative differences.
pub fn emd_1d(mu1: &DensityGrid, mu2: &DensityGrid) -> Result<f64> {
    mu1.field().same_shape(mu2.field())?;
    if mu1.shape().0 != 1 {
        return Err(Error::ShapeMismatch {
            expected_h: 1,
            expected_w: mu1.shape().1,
            got_h: mu1.shape().0,
            got_w: mu1.shape().1,
        });
    }
    let scale = mu1.mass().max(mu2.mass()).max(1.0);
    if (mu1.mass() - mu2.mass()).abs() > EMD_MASS_TOL * scale {
        return Err(Error::MassMismatch { mass1: mu1.mass(), mass2: mu2.mass() });
    }
    let mut cum = 0.0;
    let mut total = 0.0;
    for (a, b) in mu1.values().iter().zip(mu2.values()) {
        cum += a - b;
        total += cum.abs();
    }
    Ok(total)
}

/// Step-size schedule for the subgradient reference: every coefficient `c`
/// is tried with steps `c / sqrt(t)` and the best final objective wins.
#[derive(Debug, Clone)]
pub struct StepSchedule {
    pub coefficients: Vec<f64>,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self { coefficients: vec![0.003, 0.01, 0.03, 0.1, 0.3] }
    }
}

/// Best-objective iterate of the subgradient reference.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub mu: ScalarField,
    pub objective: f64,
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

fn oracle_objective(
    flux: &[FluxField],
    mu: &ScalarField,
    problem: &BarycenterProblem,
) -> f64 {
    let mut value = problem.beta * mu.norm_l1();
    for (i, marginal) in problem.marginals().iter().enumerate() {
        value += flux[i].norm_l21();
        let div = divergence(&flux[i]);
        let mut slack = 0.0;
        for j in 0..div.len() {
            slack += (div.values()[j] + marginal.values()[j] - mu.values()[j]).abs();
        }
        value += problem.alpha * slack;
    }
    value
}

/// Subgradient descent on the unconstrained convex reformulation
/// `min sum_i ||M_i||_{2,1} + alpha * sum_i ||div(M_i) + mu_i - mu||_1 + beta * ||mu||_1`,
/// tracking the best objective seen. Minimal-norm subgradients are used at
/// the kinks (zero flux pixels contribute (0,0), |.| contributes 0 at 0).
///
/// Intended for oracle-scale instances (grids up to 8x8); returns the
/// best-so-far iterate, which is always defined.
pub fn subgradient_barycenter(
    problem: &BarycenterProblem,
    steps: usize,
    schedule: &StepSchedule,
) -> OracleSolution {
    let (h, w) = problem.shape();
    let k = problem.marginals().len();
    let n = h * w;

    let mut best_mu = ScalarField::zeros(h, w);
    let mut best_obj = oracle_objective(
        &(0..k).map(|_| FluxField::zeros(h, w)).collect::<Vec<_>>(),
        &best_mu,
        problem,
    );

    for &c in &schedule.coefficients {
        let mut flux: Vec<FluxField> = (0..k).map(|_| FluxField::zeros(h, w)).collect();
        let mut mu = ScalarField::zeros(h, w);

        for t in 1..=steps {
            let step = c / (t as f64).sqrt();

            // Subgradient of the slack terms, shared by mu and the fluxes.
            let mut g_mu: Vec<f64> = mu.values().iter().map(|v| problem.beta * sign(*v)).collect();
            let mut g_flux: Vec<FluxField> = Vec::with_capacity(k);
            for i in 0..k {
                let div = divergence(&flux[i]);
                let mut s = ScalarField::zeros(h, w);
                for j in 0..n {
                    let r = div.values()[j] + problem.marginals()[i].values()[j] - mu.values()[j];
                    s.values_mut()[j] = sign(r);
                    g_mu[j] -= problem.alpha * s.values()[j];
                }
                let mut g = divergence_adjoint_masked(&s);
                g.mx_mut().iter_mut().for_each(|v| *v *= problem.alpha);
                g.my_mut().iter_mut().for_each(|v| *v *= problem.alpha);
                for j in 0..n {
                    let x = flux[i].mx()[j];
                    let y = flux[i].my()[j];
                    let norm = (x * x + y * y).sqrt();
                    if norm > 0.0 {
                        g.mx_mut()[j] += x / norm;
                        g.my_mut()[j] += y / norm;
                    }
                }
                g_flux.push(g);
            }

            for i in 0..k {
                for j in 0..n {
                    flux[i].mx_mut()[j] -= step * g_flux[i].mx()[j];
                    flux[i].my_mut()[j] -= step * g_flux[i].my()[j];
                }
            }
            for j in 0..n {
                mu.values_mut()[j] -= step * g_mu[j];
            }

            let obj = oracle_objective(&flux, &mu, problem);
            if obj < best_obj {
                best_obj = obj;
                best_mu = mu.clone();
            }
        }
    }

    OracleSolution { mu: best_mu, objective: best_obj }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn line(values: Vec<f64>) -> DensityGrid {
        let w = values.len();
        DensityGrid::new(1, w, values).unwrap()
    }

    #[test]
    fn emd_unit_mass_one_cell() {
        assert_eq!(emd_1d(&line(vec![1.0, 0.0]), &line(vec![0.0, 1.0])).unwrap(), 1.0);
    }

    #[test]
    fn emd_identical_inputs() {
        let a = line(vec![0.25, 0.5, 0.25]);
        assert_eq!(emd_1d(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn emd_delta_to_uniform() {
        let a = line(vec![1.0, 0.0, 0.0, 0.0]);
        let b = line(vec![0.25; 4]);
        assert!((emd_1d(&a, &b).unwrap() - 1.5).abs() <= 1e-12);
    }

    #[test]
    fn emd_rejects_mass_mismatch() {
        let a = line(vec![1.0, 0.0]);
        let b = line(vec![0.0, 0.5]);
        assert!(matches!(emd_1d(&a, &b), Err(Error::MassMismatch { .. })));
    }

    #[test]
    fn oracle_zero_marginals_stay_zero() {
        let z = DensityGrid::new(2, 2, vec![0.0; 4]).unwrap();
        let problem = BarycenterProblem::new(vec![z.clone(), z], 1.0, 1.0, 0.5).unwrap();
        let sol = subgradient_barycenter(&problem, 500, &StepSchedule::default());
        assert_eq!(sol.objective, 0.0);
        assert!(sol.mu.norm_l1() <= 1e-12);
    }

    #[test]
    fn oracle_beats_enumerated_candidates_on_line_deltas() {
        // Deltas at the ends of a 1x3 line, alpha = beta = 1. Hand-enumerated
        // candidates (with their optimal fluxes):
        //   mu = delta_left:  flux 2 (move right delta across two cells) + beta -> 3
        //   mu = delta_mid:   flux 1 + 1 + beta -> 3
        //   mu = delta_right: flux 2 + beta -> 3
        //   mu = 0:           destroy both units -> 2 * alpha = 2
        let m1 = line(vec![1.0, 0.0, 0.0]);
        let m2 = line(vec![0.0, 0.0, 1.0]);
        let problem = BarycenterProblem::new(vec![m1, m2], 1.0, 1.0, 0.5).unwrap();
        let sol = subgradient_barycenter(&problem, 20_000, &StepSchedule::default());
        for candidate in [3.0, 3.0, 3.0, 2.0] {
            assert!(sol.objective <= candidate + 1e-6, "{} vs {candidate}", sol.objective);
        }
        assert!((sol.objective - 2.0).abs() <= 0.01, "{}", sol.objective);
    }

    #[test]
    fn oracle_identical_marginals_recovers_the_marginal() {
        let m = DensityGrid::new(2, 2, vec![0.4, 0.7, 0.2, 0.5]).unwrap();
        let problem = BarycenterProblem::new(vec![m.clone(), m.clone()], 1.0, 1.0, 0.5).unwrap();
        let sol = subgradient_barycenter(&problem, 30_000, &StepSchedule::default());
        assert!(sol.mu.linf_distance(m.field()) <= 1e-2);
    }

    #[test]
    fn oracle_best_objective_nonincreasing_in_steps() {
        let m1 = line(vec![0.8, 0.1, 0.1]);
        let m2 = line(vec![0.1, 0.1, 0.8]);
        let problem = BarycenterProblem::new(vec![m1, m2], 1.0, 1.0, 0.5).unwrap();
        let mut prev = f64::INFINITY;
        for steps in [100, 500, 2000] {
            let sol = subgradient_barycenter(&problem, steps, &StepSchedule::default());
            assert!(sol.objective <= prev + 1e-12);
            prev = sol.objective;
        }
    }
}
