//! Constrained training of linear classifiers.
//!
//! The objective is ridge-regularized logistic loss. The constraints are the
//! denoised fairness residuals of one or more (constraint, noise channel)
//! pairs, stacked in order: for each pair, the p*p ratio residuals row-major,
//! then the p mass-floor residuals. Two constraint treatments are available:
//! a logistic surrogate whose residuals have analytic gradients, and the
//! hard-count residuals differentiated by central differences.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::constraints::{denoised_estimates, residuals, ConstraintConfig};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::metrics::{empirical_rates, soft_indicator, soft_rates, JointOrCondition};
use crate::model::{logistic_loss_grad, sigmoid, LinearClassifier};
use crate::noise::NoiseMatrix;
use crate::solver::{
    finite_difference_constraints, minimize_constrained, SolveResult, SolverConfig,
};

/// How hard prediction counts are made differentiable during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Surrogate {
    /// Replace each hard prediction with sigma(score / temperature).
    Soft { temperature: f64 },
    /// Keep hard predictions and differentiate residuals numerically.
    HardFiniteDiff,
}

impl Default for Surrogate {
    /// Temperature 0.1 keeps the soft rates close to the hard ones while
    /// leaving the constraint gradients usable; at 1.0 a model can satisfy
    /// every soft constraint yet badly violate the hard originals, and much
    /// below 0.1 the near-flat sigmoid tails stall the solver.
    fn default() -> Self {
        Surrogate::Soft { temperature: 0.1 }
    }
}

fn validate_problem(
    dataset: &LabeledDataset,
    constraints: &[(ConstraintConfig, NoiseMatrix)],
    ridge: f64,
    surrogate: Surrogate,
) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::invalid("dataset", "no samples"));
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::invalid(
            "ridge",
            format!("{ridge} must be nonnegative"),
        ));
    }
    if let Surrogate::Soft { temperature } = surrogate {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::invalid(
                "temperature",
                format!("{temperature} must be positive"),
            ));
        }
    }
    for (config, noise) in constraints {
        config.validate()?;
        let groups = dataset.group_count(config.attribute)?;
        if groups != noise.p() {
            return Err(Error::DimensionMismatch {
                expected: groups,
                got: noise.p(),
            });
        }
    }
    Ok(())
}

/// Stacked surrogate residuals and their gradients.
///
/// The derivative of each per-sample mass contribution is the indicator gap
/// times the logistic slope, so du_j and dw_j accumulate
/// gap * p(1-p)/T * x_i / n over the samples of group j. Pushing those
/// through the inverse channel and the clamped quotient mirrors exactly the
/// arithmetic of the residual values.
fn soft_stacked(
    theta: &Array1<f64>,
    dataset: &LabeledDataset,
    constraints: &[(ConstraintConfig, NoiseMatrix)],
    temperature: f64,
) -> (Vec<f64>, Vec<Array1<f64>>) {
    let features = dataset.features();
    let labels = dataset.labels();
    let n = dataset.len();
    let dim = dataset.dim();
    let scale = 1.0 / n as f64;
    let scores = features.dot(theta);
    let probabilities: Vec<f64> = scores.iter().map(|&s| sigmoid(s / temperature)).collect();

    let mut values = Vec::new();
    let mut gradients = Vec::new();
    for (config, noise) in constraints {
        let p = noise.p();
        let groups = dataset
            .protected_values(config.attribute)
            .expect("attribute validated before solving");

        let mut du = vec![Array1::<f64>::zeros(dim); p];
        let mut dw = vec![Array1::<f64>::zeros(dim); p];
        for i in 0..n {
            let prob = probabilities[i];
            let label = labels[i];
            let g = groups[i];
            let slope = prob * (1.0 - prob) / temperature * scale;
            let joint_gap = soft_indicator(config.metric, JointOrCondition::Joint, 1.0, label)
                - soft_indicator(config.metric, JointOrCondition::Joint, 0.0, label);
            let condition_gap =
                soft_indicator(config.metric, JointOrCondition::Condition, 1.0, label)
                    - soft_indicator(config.metric, JointOrCondition::Condition, 0.0, label);
            if joint_gap != 0.0 {
                du[g].scaled_add(joint_gap * slope, &features.row(i));
            }
            if condition_gap != 0.0 {
                dw[g].scaled_add(condition_gap * slope, &features.row(i));
            }
        }

        let rates = soft_rates(&probabilities, dataset, config.attribute, config.metric)
            .expect("lengths validated before solving");
        let estimates = denoised_estimates(&rates, noise, config.denominator_floor)
            .expect("group count validated before solving");
        let block = residuals(&estimates, config);

        let inverse = noise.transpose_inverse();
        let mut dnum = vec![Array1::<f64>::zeros(dim); p];
        let mut dden = vec![Array1::<f64>::zeros(dim); p];
        for i in 0..p {
            for j in 0..p {
                let a = inverse[[i, j]];
                if a != 0.0 {
                    dnum[i].scaled_add(a, &du[j]);
                    dden[i].scaled_add(a, &dw[j]);
                }
            }
        }

        let floor = config.denominator_floor;
        let mut dgamma = Vec::with_capacity(p);
        for i in 0..p {
            let num = estimates.numerators[i];
            let den = estimates.denominators[i];
            if den > floor {
                let mut gradient = Array1::<f64>::zeros(dim);
                gradient.scaled_add(1.0 / den, &dnum[i]);
                gradient.scaled_add(-num / (den * den), &dden[i]);
                dgamma.push(gradient);
            } else {
                // the quotient is clamped at the floor, so only the
                // numerator moves
                dgamma.push(dnum[i].mapv(|v| v / floor));
            }
        }

        let target = config.tau - config.delta;
        for i in 0..p {
            for j in 0..p {
                let mut gradient = dgamma[i].clone();
                gradient.scaled_add(-target, &dgamma[j]);
                gradients.push(gradient);
            }
        }
        let floor_scale = if config.scale_floor_by_m {
            estimates.m_const
        } else {
            1.0
        };
        for d in &dnum {
            gradients.push(d.mapv(|v| v / floor_scale));
        }
        values.extend_from_slice(&block.ratio);
        values.extend_from_slice(&block.floor);
    }
    (values, gradients)
}

fn hard_stacked_values(
    theta: &Array1<f64>,
    dataset: &LabeledDataset,
    constraints: &[(ConstraintConfig, NoiseMatrix)],
) -> Vec<f64> {
    let predictions: Vec<bool> = dataset
        .features()
        .dot(theta)
        .iter()
        .map(|&s| s >= 0.0)
        .collect();
    let mut values = Vec::new();
    for (config, noise) in constraints {
        let rates = empirical_rates(&predictions, dataset, config.attribute, config.metric)
            .expect("lengths validated before solving");
        let estimates = denoised_estimates(&rates, noise, config.denominator_floor)
            .expect("group count validated before solving");
        let block = residuals(&estimates, config);
        values.extend_from_slice(&block.ratio);
        values.extend_from_slice(&block.floor);
    }
    values
}

/// The stacked residual vector the solver sees at a given parameter point.
pub fn constraint_residual_values(
    theta: &Array1<f64>,
    dataset: &LabeledDataset,
    constraints: &[(ConstraintConfig, NoiseMatrix)],
    surrogate: Surrogate,
) -> Result<Vec<f64>> {
    validate_problem(dataset, constraints, 0.0, surrogate)?;
    if theta.len() != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: dataset.dim(),
            got: theta.len(),
        });
    }
    Ok(match surrogate {
        Surrogate::Soft { temperature } => soft_stacked(theta, dataset, constraints, temperature).0,
        Surrogate::HardFiniteDiff => hard_stacked_values(theta, dataset, constraints),
    })
}

/// Fits a linear classifier under the stacked denoised fairness constraints.
///
/// The returned result carries the solver's feasibility verdict; the
/// classifier is returned even when the program was infeasible so callers
/// can inspect or report the least-violating point.
pub fn train_denoised(
    dataset: &LabeledDataset,
    constraints: &[(ConstraintConfig, NoiseMatrix)],
    solver: &SolverConfig,
    ridge: f64,
    surrogate: Surrogate,
) -> Result<(LinearClassifier, SolveResult)> {
    validate_problem(dataset, constraints, ridge, surrogate)?;
    let dim = dataset.dim();
    let features = dataset.features();
    let labels = dataset.labels_f64();
    let objective = |theta: &Array1<f64>| {
        logistic_loss_grad(theta, features, &labels, ridge)
            .expect("dimensions validated before solving")
    };
    let result = match surrogate {
        Surrogate::Soft { temperature } => {
            let g = |theta: &Array1<f64>| soft_stacked(theta, dataset, constraints, temperature);
            minimize_constrained(dim, objective, Some(g), solver)?
        }
        Surrogate::HardFiniteDiff => {
            let plain = |theta: &Array1<f64>| hard_stacked_values(theta, dataset, constraints);
            let g = finite_difference_constraints(plain, solver.fd_eps);
            minimize_constrained(dim, objective, Some(g), solver)?
        }
    };
    let classifier = LinearClassifier::new(result.theta.clone(), ridge);
    Ok((classifier, result))
}
