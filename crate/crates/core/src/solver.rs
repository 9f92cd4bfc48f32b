//! Smooth minimization under inequality constraints.
//!
//! Constraints g_i(theta) >= 0 are folded into an augmented Lagrangian
//! (Powell-Hestenes-Rockafellar form) whose inner minimization runs a
//! limited-memory BFGS with Armijo backtracking. Multipliers update after
//! every inner solve; the penalty grows tenfold whenever the worst violation
//! fails to halve, capped at 1e6. Several independently seeded restarts are
//! solved and the best feasible one wins; if none is feasible the least
//! violating restart is returned and flagged.

use std::collections::VecDeque;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::mix_seed;

/// A point is feasible when no constraint is violated by more than this.
pub const VIOLATION_TOL: f64 = 1e-4;

const PENALTY_INITIAL: f64 = 10.0;
const PENALTY_GROWTH: f64 = 10.0;
const PENALTY_CAP: f64 = 1e6;
const LBFGS_MEMORY: usize = 8;
const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK_SHRINK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 40;
/// Relative gradient norm at which the inner minimizer declares a point
/// stationary.
const GRAD_TOL: f64 = 1e-8;
/// Inner solves stop once a single step improves less than this fraction of
/// the outer tolerance, so the outer loop keeps control of termination.
const INNER_FTOL_FACTOR: f64 = 1e-2;
/// Inner iteration allowance per multiplier update.
const INNER_ROUND_CAP: usize = 100;
/// Consecutive zero-progress outer rounds before giving up.
const MAX_STALLED_ROUNDS: usize = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Inner-iteration budget per restart.
    pub max_iterations: usize,
    /// Outer loop stops when the raw objective changes less than this while
    /// the point is feasible.
    pub ftol: f64,
    /// Step for finite-difference Jacobians.
    pub fd_eps: f64,
    pub restarts: usize,
    /// Starting points after the first (which is the origin) are drawn
    /// uniformly from [-init_scale, init_scale] per coordinate.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            ftol: 1e-3,
            fd_eps: 1e-3,
            restarts: 5,
            init_scale: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    IterationLimit,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub theta: Array1<f64>,
    /// Raw objective at the returned point, penalty excluded.
    pub objective: f64,
    /// Worst constraint violation at the returned point, recomputed from the
    /// constraint callable.
    pub max_violation: f64,
    pub status: SolveStatus,
    /// Inner iterations consumed by the winning restart.
    pub iterations: usize,
    /// Which restart produced the returned point.
    pub restart: usize,
}

/// Unconstrained minimization with the same restart and budget policy.
pub fn minimize<O>(dim: usize, objective: O, config: &SolverConfig) -> Result<SolveResult>
where
    O: Fn(&Array1<f64>) -> (f64, Array1<f64>),
{
    minimize_constrained(
        dim,
        objective,
        None::<fn(&Array1<f64>) -> (Vec<f64>, Vec<Array1<f64>>)>,
        config,
    )
}

pub fn minimize_constrained<O, C>(
    dim: usize,
    objective: O,
    constraints: Option<C>,
    config: &SolverConfig,
) -> Result<SolveResult>
where
    O: Fn(&Array1<f64>) -> (f64, Array1<f64>),
    C: Fn(&Array1<f64>) -> (Vec<f64>, Vec<Array1<f64>>),
{
    if dim == 0 {
        return Err(Error::invalid("dim", "zero-dimensional problem"));
    }
    if config.max_iterations == 0 {
        return Err(Error::invalid("max_iterations", "budget must be positive"));
    }

    let restarts = config.restarts.max(1);
    let mut best: Option<SolveResult> = None;
    for restart in 0..restarts {
        // The first start is the origin, which for classification problems
        // is a neutral point whose group rates are balanced; the rest are
        // random draws to escape its basin when the origin start stalls.
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, restart as u64));
        let start = if restart == 0 {
            Array1::zeros(dim)
        } else {
            Array1::from_shape_fn(dim, |_| {
                rng.random_range(-config.init_scale..config.init_scale)
            })
        };
        let outcome = match &constraints {
            Some(g) => solve_augmented(start, &objective, g, config)?,
            None => solve_unconstrained(start, &objective, config)?,
        };
        let candidate = SolveResult {
            theta: outcome.theta,
            objective: outcome.objective,
            max_violation: outcome.violation,
            status: outcome.status,
            iterations: outcome.iterations,
            restart,
        };
        let better = match &best {
            None => true,
            Some(current) => {
                let candidate_ok = candidate.max_violation < VIOLATION_TOL;
                let current_ok = current.max_violation < VIOLATION_TOL;
                match (candidate_ok, current_ok) {
                    (true, false) => true,
                    (false, true) => false,
                    (true, true) => candidate.objective < current.objective,
                    (false, false) => candidate.max_violation < current.max_violation,
                }
            }
        };
        if better {
            best = Some(candidate);
        }
    }

    let mut result = best.expect("at least one restart ran");
    // Recompute at the returned point so the reported numbers come straight
    // from the callables.
    let (objective_value, _) = objective(&result.theta);
    result.objective = objective_value;
    if let Some(g) = &constraints {
        let (values, _) = g(&result.theta);
        result.max_violation = worst_violation(&values);
        if result.max_violation >= VIOLATION_TOL {
            result.status = SolveStatus::Infeasible;
        }
    } else {
        result.max_violation = 0.0;
    }
    Ok(result)
}

struct RestartOutcome {
    theta: Array1<f64>,
    objective: f64,
    violation: f64,
    status: SolveStatus,
    iterations: usize,
}

fn solve_unconstrained<O>(
    start: Array1<f64>,
    objective: &O,
    config: &SolverConfig,
) -> Result<RestartOutcome>
where
    O: Fn(&Array1<f64>) -> (f64, Array1<f64>),
{
    let ftol_inner = (config.ftol * INNER_FTOL_FACTOR).min(1e-6);
    let run = lbfgs(start, objective, config.max_iterations, ftol_inner)?;
    Ok(RestartOutcome {
        theta: run.theta,
        objective: run.value,
        violation: 0.0,
        status: if run.converged {
            SolveStatus::Converged
        } else {
            SolveStatus::IterationLimit
        },
        iterations: run.iterations,
    })
}

fn solve_augmented<O, C>(
    start: Array1<f64>,
    objective: &O,
    constraints: &C,
    config: &SolverConfig,
) -> Result<RestartOutcome>
where
    O: Fn(&Array1<f64>) -> (f64, Array1<f64>),
    C: Fn(&Array1<f64>) -> (Vec<f64>, Vec<Array1<f64>>),
{
    let mut theta = start;
    let (mut raw_objective, _) = objective(&theta);
    if !raw_objective.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let (values, _) = constraints(&theta);
    let m = values.len();
    if m == 0 {
        return solve_unconstrained(theta, objective, config);
    }
    let mut violation = worst_violation(&values);
    let mut multipliers = vec![0.0f64; m];
    let mut penalty = PENALTY_INITIAL;
    let mut used = 0usize;
    let mut stalled = 0usize;

    loop {
        let augmented = |point: &Array1<f64>| -> (f64, Array1<f64>) {
            let (mut value, mut grad) = objective(point);
            let (g, jacobian) = constraints(point);
            for i in 0..m {
                let t = multipliers[i] - penalty * g[i];
                if t > 0.0 {
                    value += (t * t - multipliers[i] * multipliers[i]) / (2.0 * penalty);
                    grad.scaled_add(-t, &jacobian[i]);
                } else {
                    value -= multipliers[i] * multipliers[i] / (2.0 * penalty);
                }
            }
            (value, grad)
        };
        let round_cap = INNER_ROUND_CAP.min(config.max_iterations - used);
        let run = lbfgs(
            theta,
            &augmented,
            round_cap,
            config.ftol * INNER_FTOL_FACTOR,
        )?;
        theta = run.theta;
        used += run.iterations;
        stalled = if run.iterations == 0 { stalled + 1 } else { 0 };

        let (g, _) = constraints(&theta);
        let new_violation = worst_violation(&g);
        let (new_objective, _) = objective(&theta);
        if !new_objective.is_finite() {
            return Err(Error::NonFiniteObjective);
        }
        for i in 0..m {
            multipliers[i] = (multipliers[i] - penalty * g[i]).max(0.0);
        }

        let objective_settled = (new_objective - raw_objective).abs() < config.ftol;
        let feasible = new_violation < VIOLATION_TOL;
        if objective_settled && feasible {
            return Ok(RestartOutcome {
                theta,
                objective: new_objective,
                violation: new_violation,
                status: SolveStatus::Converged,
                iterations: used,
            });
        }
        if used >= config.max_iterations || stalled >= MAX_STALLED_ROUNDS {
            return Ok(RestartOutcome {
                theta,
                objective: new_objective,
                violation: new_violation,
                status: if feasible {
                    SolveStatus::IterationLimit
                } else {
                    SolveStatus::Infeasible
                },
                iterations: used,
            });
        }
        if new_violation > 0.5 * violation && new_violation >= VIOLATION_TOL {
            penalty = (penalty * PENALTY_GROWTH).min(PENALTY_CAP);
        }
        raw_objective = new_objective;
        violation = new_violation;
    }
}

fn worst_violation(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |acc, &g| acc.max(-g))
}

struct LbfgsRun {
    theta: Array1<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
}

fn lbfgs<F>(
    mut theta: Array1<f64>,
    function: &F,
    max_iterations: usize,
    ftol_abs: f64,
) -> Result<LbfgsRun>
where
    F: Fn(&Array1<f64>) -> (f64, Array1<f64>),
{
    let (mut value, mut grad) = function(&theta);
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteObjective);
    }
    // (step, gradient change, 1/(y.s)) pairs, newest last
    let mut history: VecDeque<(Array1<f64>, Array1<f64>, f64)> = VecDeque::new();
    let mut iterations = 0usize;
    let mut converged = false;

    while iterations < max_iterations {
        let grad_inf = grad.iter().fold(0.0f64, |a, &g| a.max(g.abs()));
        if grad_inf <= GRAD_TOL * value.abs().max(1.0) {
            converged = true;
            break;
        }

        // two-loop recursion for the quasi-Newton direction
        let mut direction = grad.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, inv_sy) in history.iter().rev() {
            let alpha = inv_sy * s.dot(&direction);
            direction.scaled_add(-alpha, y);
            alphas.push(alpha);
        }
        if let Some((s, y, _)) = history.back() {
            let scale = s.dot(y) / y.dot(y);
            direction.mapv_inplace(|v| v * scale);
        }
        for ((s, y, inv_sy), alpha) in history.iter().zip(alphas.iter().rev()) {
            let beta = inv_sy * y.dot(&direction);
            direction.scaled_add(alpha - beta, s);
        }
        direction.mapv_inplace(|v| -v);

        let mut slope = grad.dot(&direction);
        if slope >= 0.0 {
            direction = grad.mapv(|g| -g);
            slope = grad.dot(&direction);
            if slope == 0.0 {
                converged = true;
                break;
            }
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let candidate = &theta + &direction.mapv(|v| v * step);
            let (candidate_value, candidate_grad) = function(&candidate);
            if candidate_value.is_finite() && candidate_value <= value + ARMIJO_C1 * step * slope {
                accepted = Some((candidate, candidate_value, candidate_grad));
                break;
            }
            step *= BACKTRACK_SHRINK;
        }
        let Some((next_theta, next_value, next_grad)) = accepted else {
            // the line search cannot improve on this point
            converged = true;
            break;
        };
        iterations += 1;

        let s = &next_theta - &theta;
        let y = &next_grad - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.dot(&s).sqrt() * y.dot(&y).sqrt() {
            if history.len() == LBFGS_MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let improvement = value - next_value;
        theta = next_theta;
        value = next_value;
        grad = next_grad;
        if improvement.abs() < ftol_abs {
            converged = true;
            break;
        }
    }
    Ok(LbfgsRun {
        theta,
        value,
        iterations,
        converged,
    })
}

/// Wraps a value-only residual function into the (values, gradients) shape
/// the solver consumes, using central differences with the given step. This
/// is the faithfulness path for hard-indicator constraints, which have no
/// analytic gradient.
pub fn finite_difference_constraints<F>(
    values: F,
    eps: f64,
) -> impl Fn(&Array1<f64>) -> (Vec<f64>, Vec<Array1<f64>>)
where
    F: Fn(&Array1<f64>) -> Vec<f64>,
{
    move |theta: &Array1<f64>| {
        let base = values(theta);
        let dim = theta.len();
        let mut gradients = vec![Array1::<f64>::zeros(dim); base.len()];
        for k in 0..dim {
            let mut plus = theta.clone();
            plus[k] += eps;
            let mut minus = theta.clone();
            minus[k] -= eps;
            let up = values(&plus);
            let down = values(&minus);
            for (i, gradient) in gradients.iter_mut().enumerate() {
                gradient[k] = (up[i] - down[i]) / (2.0 * eps);
            }
        }
        (base, gradients)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn quadratic(center: Array1<f64>) -> impl Fn(&Array1<f64>) -> (f64, Array1<f64>) {
        move |theta: &Array1<f64>| {
            let diff = theta - &center;
            (diff.dot(&diff), diff.mapv(|v| 2.0 * v))
        }
    }

    #[test]
    fn unconstrained_quadratic_converges() {
        let config = SolverConfig::default();
        let result = minimize(2, quadratic(array![2.0, 1.0]), &config).unwrap();
        assert_eq!(result.status, SolveStatus::Converged);
        assert!((result.theta[0] - 2.0).abs() < 1e-6);
        assert!((result.theta[1] - 1.0).abs() < 1e-6);
        assert_eq!(result.max_violation, 0.0);
    }

    #[test]
    fn active_constraint_is_respected() {
        // minimize |theta|^2 subject to theta_0 >= 1
        let config = SolverConfig::default();
        let constraints = |theta: &Array1<f64>| (vec![theta[0] - 1.0], vec![array![1.0, 0.0]]);
        let result =
            minimize_constrained(2, quadratic(array![0.0, 0.0]), Some(constraints), &config)
                .unwrap();
        assert_eq!(result.status, SolveStatus::Converged, "{result:?}");
        assert!(result.max_violation < VIOLATION_TOL);
        assert!((result.theta[0] - 1.0).abs() < 1e-2, "{}", result.theta[0]);
        assert!(result.theta[1].abs() < 1e-2);
        assert!((result.objective - 1.0).abs() < 1e-2);
    }

    #[test]
    fn inactive_constraint_changes_nothing() {
        let config = SolverConfig::default();
        let constraints = |theta: &Array1<f64>| (vec![theta[0] + 10.0], vec![array![1.0, 0.0]]);
        let result =
            minimize_constrained(2, quadratic(array![2.0, 1.0]), Some(constraints), &config)
                .unwrap();
        assert_eq!(result.status, SolveStatus::Converged);
        assert!((result.theta[0] - 2.0).abs() < 1e-3);
        assert!((result.theta[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn contradictory_constraints_flagged_infeasible() {
        // theta_0 >= 1 and theta_0 <= 0 cannot both hold
        let config = SolverConfig {
            max_iterations: 300,
            ..SolverConfig::default()
        };
        let constraints = |theta: &Array1<f64>| {
            (
                vec![theta[0] - 1.0, -theta[0]],
                vec![array![1.0], array![-1.0]],
            )
        };
        let result =
            minimize_constrained(1, quadratic(array![0.0]), Some(constraints), &config).unwrap();
        assert_eq!(result.status, SolveStatus::Infeasible);
        assert!(result.max_violation >= 0.4, "{}", result.max_violation);
    }

    #[test]
    fn iteration_budget_is_hard() {
        let config = SolverConfig {
            max_iterations: 3,
            restarts: 1,
            ..SolverConfig::default()
        };
        // Rosenbrock needs far more than three steps
        let rosenbrock = |theta: &Array1<f64>| {
            let (a, b) = (theta[0], theta[1]);
            let value = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let grad = array![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a)
            ];
            (value, grad)
        };
        let result = minimize(2, rosenbrock, &config).unwrap();
        assert!(result.iterations <= 3);
        assert_eq!(result.status, SolveStatus::IterationLimit);
    }

    #[test]
    fn seeds_agree_on_convex_objective() {
        let config_a = SolverConfig {
            seed: 1,
            ..SolverConfig::default()
        };
        let config_b = SolverConfig {
            seed: 2,
            ..SolverConfig::default()
        };
        let objective = |theta: &Array1<f64>| {
            // smooth convex: log-sum-exp plus quadratic
            let value = (theta[0].exp() + (-theta[0]).exp()).ln()
                + 0.5 * theta[1] * theta[1]
                + 0.3 * theta[0];
            let t = theta[0];
            let grad0 = (t.exp() - (-t).exp()) / (t.exp() + (-t).exp()) + 0.3;
            (value, array![grad0, theta[1]])
        };
        let a = minimize(2, objective, &config_a).unwrap();
        let b = minimize(2, objective, &config_b).unwrap();
        assert!(
            (a.objective - b.objective).abs() < 10.0 * config_a.ftol,
            "{} vs {}",
            a.objective,
            b.objective
        );
    }

    #[test]
    fn reported_violation_matches_recomputation() {
        let config = SolverConfig::default();
        let constraints = |theta: &Array1<f64>| (vec![theta[0] - 1.0], vec![array![1.0, 0.0]]);
        let result =
            minimize_constrained(2, quadratic(array![0.0, 0.0]), Some(constraints), &config)
                .unwrap();
        let (values, _) = constraints(&result.theta);
        let independent = values.iter().fold(0.0f64, |a, &g| a.max(-g));
        assert!((result.max_violation - independent).abs() < 1e-9);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let config = SolverConfig {
            restarts: 1,
            ..SolverConfig::default()
        };
        let objective = |_: &Array1<f64>| (f64::NAN, array![0.0]);
        assert!(matches!(
            minimize(1, objective, &config),
            Err(Error::NonFiniteObjective)
        ));
    }

    #[test]
    fn finite_difference_matches_analytic_jacobian() {
        let values =
            |theta: &Array1<f64>| vec![theta[0] * theta[0] + theta[1], (theta[0] * theta[1]).sin()];
        let wrapped = finite_difference_constraints(values, 1e-5);
        let point = array![0.7, -0.3];
        let (_, jacobian) = wrapped(&point);
        let expected = [
            array![2.0 * point[0], 1.0],
            array![
                point[1] * (point[0] * point[1]).cos(),
                point[0] * (point[0] * point[1]).cos()
            ],
        ];
        for (got, want) in jacobian.iter().zip(expected.iter()) {
            for (a, b) in got.iter().zip(want.iter()) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn empty_constraint_set_behaves_unconstrained() {
        let config = SolverConfig::default();
        let constraints = |_: &Array1<f64>| (Vec::new(), Vec::new());
        let result =
            minimize_constrained(2, quadratic(array![1.0, -1.0]), Some(constraints), &config)
                .unwrap();
        assert_eq!(result.status, SolveStatus::Converged);
        assert!((result.theta[0] - 1.0).abs() < 1e-6);
    }
}
