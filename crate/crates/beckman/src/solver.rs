//! First-order primal-dual solver for the minimum-flow transport distance and
//! the unbalanced flux barycenter.
//!
//! One sweep updates every primal block from the previous duals (l21
//! shrinkage for the flux, the closed-form relaxed-marginal prox, l1
//! shrinkage for the slack and the barycenter), then performs the
//! extrapolated dual ascent
//!
//! ```text
//! lambda_i += tau2 * (2 * res_i(t+1) - res_i(t)),
//! res_i = div(M_i) + mu'_i - mu - r_i
//! ```
//!
//! A sufficient convergence condition is `tau1 * tau2 * (lambda_max + 3) < 1`
//! where `lambda_max` is the largest eigenvalue of the discrete Laplacian;
//! [`check_step_sizes`] evaluates it. Running averages of the iterates are
//! maintained so traces can report the averaged-iterate residual, whose decay
//! is the observable form of the O(1/N) gap rate.

use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float as _;

use crate::grid::{divergence, divergence_adjoint_masked, DensityGrid, FluxField, ScalarField};
use crate::prox::{shrink_l21_inplace, soft_threshold};
use crate::{laplacian_max_eig, Error, Result};

/// Problem data for the barycenter: K marginals plus the weights of the
/// slack (`alpha`), barycenter (`beta`), and proximal relaxation (`rho`) terms.
#[derive(Debug, Clone)]
pub struct BarycenterProblem {
    marginals: Vec<DensityGrid>,
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
}

impl BarycenterProblem {
    pub fn new(marginals: Vec<DensityGrid>, alpha: f64, beta: f64, rho: f64) -> Result<Self> {
        if marginals.len() < 2 {
            return Err(Error::TooFewMarginals(marginals.len()));
        }
        let shape = marginals[0].shape();
        for m in &marginals[1..] {
            if m.shape() != shape {
                return Err(Error::ShapeMismatch {
                    expected_h: shape.0,
                    expected_w: shape.1,
                    got_h: m.shape().0,
                    got_w: m.shape().1,
                });
            }
        }
        for (name, value) in [("alpha", alpha), ("beta", beta), ("rho", rho)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositiveParameter { name, value });
            }
        }
        Ok(Self { marginals, alpha, beta, rho })
    }

    pub fn marginals(&self) -> &[DensityGrid] {
        &self.marginals
    }

    pub fn shape(&self) -> (usize, usize) {
        self.marginals[0].shape()
    }
}

/// Algorithm knobs. Defaults are the reference settings: `tau1 = 0.1`,
/// `tau2 = 1`, 200 iterations.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub tau1: f64,
    pub tau2: f64,
    pub iterations: usize,
    /// Record a trace entry every this many iterations; 0 disables tracing.
    pub trace_every: usize,
    /// Fail instead of warn when the step-size condition is violated.
    pub enforce_stepsize: bool,
    /// Return the running-average iterate instead of the last one.
    pub averaged_output: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau1: 0.1,
            tau2: 1.0,
            iterations: 200,
            trace_every: 0,
            enforce_stepsize: false,
            averaged_output: false,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        for (name, value) in [("tau1", self.tau1), ("tau2", self.tau2)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositiveParameter { name, value });
            }
        }
        if self.iterations == 0 {
            return Err(Error::NonPositiveParameter { name: "iterations", value: 0.0 });
        }
        Ok(())
    }
}

/// Outcome of the step-size condition check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizeReport {
    pub lambda_max: f64,
    pub product: f64,
    pub satisfied: bool,
}

/// Evaluates `tau1 * tau2 * (lambda_max + 3) < 1` for the barycenter solve on
/// a `height x width` grid.
///
/// With `enforce_stepsize` unset a violated condition is only reported
/// (`satisfied = false`); with it set, the violation is an error.
pub fn check_step_sizes(config: &SolverConfig, height: usize, width: usize) -> Result<StepSizeReport> {
    config.validate()?;
    let lambda_max = laplacian_max_eig(height, width)?;
    let product = config.tau1 * config.tau2 * (lambda_max + 3.0);
    let report = StepSizeReport { lambda_max, product, satisfied: product < 1.0 };
    if config.enforce_stepsize && !report.satisfied {
        return Err(Error::StepSizeViolation { product });
    }
    Ok(report)
}

/// All primal and dual iterates of a barycenter solve.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub flux: Vec<FluxField>,
    pub mu_prime: Vec<ScalarField>,
    pub slack: Vec<ScalarField>,
    pub mu: ScalarField,
    pub lambda: Vec<ScalarField>,
    residual_prev: Vec<ScalarField>,
}

impl SolverState {
    fn zeros(k: usize, h: usize, w: usize) -> Self {
        Self {
            flux: (0..k).map(|_| FluxField::zeros(h, w)).collect(),
            mu_prime: (0..k).map(|_| ScalarField::zeros(h, w)).collect(),
            slack: (0..k).map(|_| ScalarField::zeros(h, w)).collect(),
            mu: ScalarField::zeros(h, w),
            lambda: (0..k).map(|_| ScalarField::zeros(h, w)).collect(),
            residual_prev: (0..k).map(|_| ScalarField::zeros(h, w)).collect(),
        }
    }
}

/// One recorded trace point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Primal objective with the slack eliminated, evaluated at the current iterate.
    pub objective: f64,
    /// Sum over marginals of the l2 norm of the constraint residual.
    pub residual: f64,
    /// Same residual norm evaluated at the running-average iterate.
    pub averaged_residual: f64,
}

/// Trace of a solve: the step-size report plus the recorded iterates.
#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub step_report: StepSizeReport,
    pub records: Vec<TraceRecord>,
}

/// Result of [`solve_barycenter`].
#[derive(Debug, Clone)]
pub struct BarycenterSolution {
    pub mu: ScalarField,
    pub state: SolverState,
    pub trace: SolverTrace,
}

/// Result of [`solve_distance`].
#[derive(Debug, Clone)]
pub struct DistanceSolution {
    pub value: f64,
    pub flux: FluxField,
    pub trace: SolverTrace,
}

#[inline]
fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn all_finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

/// Primal objective with the slack eliminated via its constraint:
/// `sum_i ||M_i||_{2,1} + alpha * sum_i ||div(M_i) + mu_i - mu||_1 + beta * ||mu||_1`.
///
/// This is a valid primal value at any flux/barycenter pair and is the
/// quantity the subgradient reference minimizes.
pub fn objective_value(state: &SolverState, problem: &BarycenterProblem) -> f64 {
    let mut value = problem.beta * state.mu.norm_l1();
    for (i, marginal) in problem.marginals().iter().enumerate() {
        value += state.flux[i].norm_l21();
        let div = divergence(&state.flux[i]);
        let mut slack_l1 = 0.0;
        for j in 0..div.len() {
            slack_l1 += (div.values()[j] + marginal.values()[j] - state.mu.values()[j]).abs();
        }
        value += problem.alpha * slack_l1;
    }
    value
}

/// Runs the primal-dual iteration for the barycenter problem.
///
/// All iterates start at zero. Returns the final barycenter (or the averaged
/// iterate when `averaged_output` is set) together with the full state and
/// trace. Fails if the step-size condition is violated while
/// `enforce_stepsize` is set, or if an iterate stops being finite.
pub fn solve_barycenter(problem: &BarycenterProblem, config: &SolverConfig) -> Result<BarycenterSolution> {
    let (h, w) = problem.shape();
    let step_report = check_step_sizes(config, h, w)?;

    let k = problem.marginals().len();
    let n = h * w;
    let (tau1, tau2) = (config.tau1, config.tau2);
    let (alpha, beta, rho) = (problem.alpha, problem.beta, problem.rho);

    let mut state = SolverState::zeros(k, h, w);
    let mut lambda_sum = ScalarField::zeros(h, w);
    // Running sums for the averaged iterate and its residual.
    let mut mu_accum = ScalarField::zeros(h, w);
    let mut residual_accum: Vec<ScalarField> = (0..k).map(|_| ScalarField::zeros(h, w)).collect();
    let mut records = Vec::new();

    let mu_prime_denom = 1.0 + rho * tau1;

    for iter in 1..=config.iterations {
        lambda_sum.values_mut().iter_mut().for_each(|v| *v = 0.0);
        for i in 0..k {
            axpy(lambda_sum.values_mut(), 1.0, state.lambda[i].values());
        }

        for i in 0..k {
            // Flux: gradient step against the adjoint, then l21 shrinkage.
            let adj = divergence_adjoint_masked(&state.lambda[i]);
            axpy(state.flux[i].mx_mut(), -tau1, adj.mx());
            axpy(state.flux[i].my_mut(), -tau1, adj.my());
            shrink_l21_inplace(&mut state.flux[i], tau1);

            // Relaxed marginal: closed-form prox with nonnegativity clamp.
            let marginal = problem.marginals()[i].values();
            let lambda = state.lambda[i].values();
            for j in 0..n {
                let num = rho * tau1 * marginal[j] + state.mu_prime[i].values()[j] - tau1 * lambda[j];
                state.mu_prime[i].values_mut()[j] = (num / mu_prime_denom).max(0.0);
            }

            // Slack: l1 shrinkage at alpha * tau1.
            for j in 0..n {
                let v = state.slack[i].values()[j] + tau1 * lambda[j];
                state.slack[i].values_mut()[j] = soft_threshold(v, alpha * tau1);
            }
        }

        // Barycenter: l1 shrinkage at beta * tau1 of mu + tau1 * sum(lambda).
        for j in 0..n {
            let v = state.mu.values()[j] + tau1 * lambda_sum.values()[j];
            state.mu.values_mut()[j] = soft_threshold(v, beta * tau1);
        }

        // Dual ascent with extrapolated residual.
        for i in 0..k {
            let div = divergence(&state.flux[i]);
            for j in 0..n {
                let res = div.values()[j] + state.mu_prime[i].values()[j]
                    - state.mu.values()[j]
                    - state.slack[i].values()[j];
                let kappa = 2.0 * res - state.residual_prev[i].values()[j];
                state.lambda[i].values_mut()[j] += tau2 * kappa;
                state.residual_prev[i].values_mut()[j] = res;
                residual_accum[i].values_mut()[j] += res;
            }
        }
        axpy(mu_accum.values_mut(), 1.0, state.mu.values());

        if !all_finite(state.mu.values()) || state.lambda.iter().any(|l| !all_finite(l.values())) {
            return Err(Error::Diverged { iteration: iter });
        }

        if config.trace_every > 0 && iter % config.trace_every == 0 {
            let residual: f64 = state.residual_prev.iter().map(|r| l2_norm(r.values())).sum();
            let inv = 1.0 / iter as f64;
            let averaged_residual: f64 = residual_accum
                .iter()
                .map(|r| {
                    r.values().iter().map(|v| (v * inv) * (v * inv)).sum::<f64>().sqrt()
                })
                .sum();
            records.push(TraceRecord {
                iteration: iter,
                objective: objective_value(&state, problem),
                residual,
                averaged_residual,
            });
        }
    }

    let mu = if config.averaged_output {
        let inv = 1.0 / config.iterations as f64;
        let mut avg = mu_accum;
        avg.values_mut().iter_mut().for_each(|v| *v *= inv);
        avg
    } else {
        state.mu.clone()
    };

    Ok(BarycenterSolution { mu, state, trace: SolverTrace { step_report, records } })
}

const DISTANCE_MASS_REL_TOL: f64 = 1e-6;

/// Solves the balanced minimum-flow distance
/// `min ||M||_{2,1}  s.t.  div(M) + mu1 - mu2 = 0`
/// with the same primal-dual scheme restricted to the flux and the dual.
///
/// Requires equal shapes and equal masses to 1e-6 relative. The reported
/// value is `||M||_{2,1}` at the final iterate.
pub fn solve_distance(mu1: &DensityGrid, mu2: &DensityGrid, config: &SolverConfig) -> Result<DistanceSolution> {
    config.validate()?;
    mu1.field().same_shape(mu2.field())?;
    let scale = mu1.mass().abs().max(mu2.mass().abs()).max(1e-12);
    if (mu1.mass() - mu2.mass()).abs() > DISTANCE_MASS_REL_TOL * scale {
        return Err(Error::MassMismatch { mass1: mu1.mass(), mass2: mu2.mass() });
    }

    let (h, w) = mu1.shape();
    let n = h * w;
    let (tau1, tau2) = (config.tau1, config.tau2);

    // For the restricted problem the constraint operator is the divergence
    // alone, so the sufficient condition drops the +3 term.
    let lambda_max = laplacian_max_eig(h, w)?;
    let product = tau1 * tau2 * lambda_max;
    let step_report = StepSizeReport { lambda_max, product, satisfied: product < 1.0 };
    if config.enforce_stepsize && !step_report.satisfied {
        return Err(Error::StepSizeViolation { product });
    }

    let mut flux = FluxField::zeros(h, w);
    let mut lambda = ScalarField::zeros(h, w);
    let mut residual_prev = ScalarField::zeros(h, w);
    for j in 0..n {
        residual_prev.values_mut()[j] = mu1.values()[j] - mu2.values()[j];
    }
    let mut residual_accum = ScalarField::zeros(h, w);
    let mut records = Vec::new();

    for iter in 1..=config.iterations {
        let adj = divergence_adjoint_masked(&lambda);
        axpy(flux.mx_mut(), -tau1, adj.mx());
        axpy(flux.my_mut(), -tau1, adj.my());
        shrink_l21_inplace(&mut flux, tau1);

        let div = divergence(&flux);
        let mut residual_norm_sq = 0.0;
        for j in 0..n {
            let res = div.values()[j] + mu1.values()[j] - mu2.values()[j];
            let kappa = 2.0 * res - residual_prev.values()[j];
            lambda.values_mut()[j] += tau2 * kappa;
            residual_prev.values_mut()[j] = res;
            residual_accum.values_mut()[j] += res;
            residual_norm_sq += res * res;
        }

        if !all_finite(lambda.values()) {
            return Err(Error::Diverged { iteration: iter });
        }

        if config.trace_every > 0 && iter % config.trace_every == 0 {
            let inv = 1.0 / iter as f64;
            let averaged_residual =
                residual_accum.values().iter().map(|v| (v * inv) * (v * inv)).sum::<f64>().sqrt();
            records.push(TraceRecord {
                iteration: iter,
                objective: flux.norm_l21(),
                residual: residual_norm_sq.sqrt(),
                averaged_residual,
            });
        }
    }

    Ok(DistanceSolution {
        value: flux.norm_l21(),
        flux,
        trace: SolverTrace { step_report, records },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn delta(len: usize, at: usize) -> DensityGrid {
        let mut v = vec![0.0; len];
        v[at] = 1.0;
        DensityGrid::new(1, len, v).unwrap()
    }

    #[test]
    fn step_size_report_matches_reference_products() {
        let config = SolverConfig::default();
        let report = check_step_sizes(&config, 64, 64).unwrap();
        assert!(!report.satisfied);
        assert!((report.product - 1.0995).abs() < 2e-3, "{}", report.product);

        let tighter = SolverConfig { tau1: 0.09, ..SolverConfig::default() };
        let report = check_step_sizes(&tighter, 64, 64).unwrap();
        assert!(report.satisfied);
        assert!((report.product - 0.9896).abs() < 2e-3, "{}", report.product);

        let scalar = SolverConfig { tau1: 0.2, tau2: 0.2, ..SolverConfig::default() };
        let report = check_step_sizes(&scalar, 1, 1).unwrap();
        assert!((report.product - 0.16).abs() <= 1e-12);
        assert!(report.satisfied);
    }

    #[test]
    fn enforced_step_size_violation_is_an_error() {
        let config = SolverConfig { enforce_stepsize: true, ..SolverConfig::default() };
        let err = check_step_sizes(&config, 64, 64).unwrap_err();
        assert!(matches!(err, Error::StepSizeViolation { .. }));
    }

    #[test]
    fn distance_of_identical_marginals_is_zero() {
        let a = DensityGrid::new(3, 3, vec![0.1; 9]).unwrap();
        let sol = solve_distance(&a, &a, &SolverConfig::default()).unwrap();
        assert!(sol.value.abs() <= 1e-12);
        assert!(sol.flux.norm_l2() <= 1e-12);
    }

    #[test]
    fn distance_mass_mismatch_rejected() {
        let a = DensityGrid::new(1, 4, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = DensityGrid::new(1, 4, vec![0.0, 0.0, 0.0, 2.0]).unwrap();
        assert!(matches!(
            solve_distance(&a, &b, &SolverConfig::default()),
            Err(Error::MassMismatch { .. })
        ));
    }

    #[test]
    fn distance_between_line_deltas_is_cell_distance() {
        let config = SolverConfig { iterations: 2000, ..SolverConfig::default() };
        let sol = solve_distance(&delta(8, 0), &delta(8, 5), &config).unwrap();
        assert!((sol.value - 5.0).abs() <= 1e-2, "{}", sol.value);
    }

    #[test]
    fn identical_marginals_keep_mass_when_beta_small() {
        // beta < 2*alpha: keeping a unit of mass costs beta, destroying it 2*alpha.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..25).map(|_| rng.random_range(0.1..0.9)).collect();
        let marginal = DensityGrid::new(5, 5, values).unwrap();
        let problem =
            BarycenterProblem::new(vec![marginal.clone(), marginal.clone()], 1.0, 1.0, 1e4).unwrap();
        let config = SolverConfig { tau1: 0.09, iterations: 20_000, ..SolverConfig::default() };
        let sol = solve_barycenter(&problem, &config).unwrap();
        let err = sol.mu.linf_distance(marginal.field());
        assert!(err <= 1e-2, "linf {err}");
        let objective = objective_value(&sol.state, &problem);
        assert!((objective - marginal.mass()).abs() <= 1e-2, "objective {objective}");
    }

    #[test]
    fn identical_marginals_destroy_mass_when_beta_large() {
        // beta > 2*alpha: the barycenter collapses to zero.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let values: Vec<f64> = (0..25).map(|_| rng.random_range(0.1..0.9)).collect();
        let marginal = DensityGrid::new(5, 5, values).unwrap();
        let problem =
            BarycenterProblem::new(vec![marginal.clone(), marginal], 1.0, 4.0, 1e4).unwrap();
        let config = SolverConfig { tau1: 0.09, iterations: 20_000, ..SolverConfig::default() };
        let sol = solve_barycenter(&problem, &config).unwrap();
        assert!(sol.mu.norm_l1() <= 1e-2, "{}", sol.mu.norm_l1());
    }

    #[test]
    fn objective_value_zero_state() {
        let zero = DensityGrid::new(2, 2, vec![0.0; 4]).unwrap();
        let problem = BarycenterProblem::new(vec![zero.clone(), zero], 1.0, 1.0, 0.5).unwrap();
        let state = SolverState::zeros(2, 2, 2);
        assert_eq!(objective_value(&state, &problem), 0.0);
    }

    #[test]
    fn objective_value_slack_carries_all_mass() {
        // Zero flux and zero barycenter: each unit-mass marginal pays alpha.
        let m = DensityGrid::new(1, 2, vec![0.5, 0.5]).unwrap();
        let problem = BarycenterProblem::new(vec![m.clone(), m], 1.0, 1.0, 0.5).unwrap();
        let state = SolverState::zeros(2, 1, 2);
        assert!((objective_value(&state, &problem) - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn traces_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DensityGrid::new(4, 4, (0..16).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let b = DensityGrid::new(4, 4, (0..16).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let problem = BarycenterProblem::new(vec![a, b], 1.0, 1.0, 0.5).unwrap();
        let config =
            SolverConfig { tau1: 0.08, iterations: 300, trace_every: 10, ..SolverConfig::default() };
        let run1 = solve_barycenter(&problem, &config).unwrap();
        let run2 = solve_barycenter(&problem, &config).unwrap();
        assert_eq!(run1.trace.records, run2.trace.records);
        assert_eq!(run1.mu, run2.mu);
    }

    #[test]
    fn solver_state_stays_finite_and_shapes_agree() {
        let a = DensityGrid::new(2, 3, vec![0.2; 6]).unwrap();
        let b = DensityGrid::new(2, 3, vec![0.3; 6]).unwrap();
        let problem = BarycenterProblem::new(vec![a, b], 1.0, 1.0, 0.5).unwrap();
        let config = SolverConfig { iterations: 50, ..SolverConfig::default() };
        let sol = solve_barycenter(&problem, &config).unwrap();
        assert_eq!(sol.mu.shape(), (2, 3));
        for i in 0..2 {
            assert_eq!(sol.state.flux[i].shape(), (2, 3));
            assert!(sol.state.lambda[i].values().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn rejects_mismatched_marginals() {
        let a = DensityGrid::new(2, 2, vec![0.1; 4]).unwrap();
        let b = DensityGrid::new(2, 3, vec![0.1; 6]).unwrap();
        assert!(matches!(
            BarycenterProblem::new(vec![a, b], 1.0, 1.0, 0.5),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn rejects_single_marginal() {
        let a = DensityGrid::new(2, 2, vec![0.1; 4]).unwrap();
        assert!(matches!(
            BarycenterProblem::new(vec![a], 1.0, 1.0, 0.5),
            Err(Error::TooFewMarginals(1))
        ));
    }
}
