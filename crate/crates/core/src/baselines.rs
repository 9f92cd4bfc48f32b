//! Reference training procedures the constrained pipeline is compared
//! against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::ConstraintConfig;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::metrics::MetricKind;
use crate::model::{logistic_loss_grad, LinearClassifier};
use crate::noise::NoiseMatrix;
use crate::solver::{minimize, SolveResult, SolverConfig};
use crate::train::{train_denoised, Surrogate};

/// Plain ridge-regularized logistic regression.
pub fn train_unconstrained(
    dataset: &LabeledDataset,
    solver: &SolverConfig,
    ridge: f64,
) -> Result<LinearClassifier> {
    if dataset.is_empty() {
        return Err(Error::invalid("dataset", "no samples"));
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::invalid(
            "ridge",
            format!("{ridge} must be nonnegative"),
        ));
    }
    let labels = dataset.labels_f64();
    let features = dataset.features();
    let result = minimize(
        dataset.dim(),
        |theta| {
            logistic_loss_grad(theta, features, &labels, ridge)
                .expect("dimensions validated before solving")
        },
        solver,
    )?;
    Ok(LinearClassifier::new(result.theta, ridge))
}

/// Fairness-constrained training that pretends the measured attribute is
/// clean: an identity channel, no slack, no mass floor. Under real noise
/// this constrains the wrong quantity, which is exactly what it is here to
/// demonstrate.
pub fn train_naive_fair(
    dataset: &LabeledDataset,
    metric: MetricKind,
    attribute: usize,
    tau: f64,
    solver: &SolverConfig,
    ridge: f64,
    surrogate: Surrogate,
) -> Result<(LinearClassifier, SolveResult)> {
    let groups = dataset.group_count(attribute)?;
    let config = ConstraintConfig::new(metric, attribute, tau, 0.0, 0.0)?;
    let identity = NoiseMatrix::identity(groups)?;
    train_denoised(dataset, &[(config, identity)], solver, ridge, surrogate)
}

/// Label-blind baseline: predict positive with probability 1 - alpha,
/// independently of the features. Trivially fair on every group and metric
/// in expectation, and exactly as inaccurate as alpha dictates.
pub fn randomized_labeling(dataset: &LabeledDataset, alpha: f64, seed: u64) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("alpha", format!("{alpha} outside [0,1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..dataset.len())
        .map(|_| rng.random::<f64>() >= alpha)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::SolveStatus;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn separable_dataset(n: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Array2::<f64>::zeros((n, 2));
        let mut labels = Vec::with_capacity(n);
        let mut groups = Vec::with_capacity(n);
        for i in 0..n {
            let y = rng.random::<f64>() < 0.5;
            features[[i, 0]] = if y { 1.0 } else { -1.0 } + rng.random_range(-0.4..0.4);
            features[[i, 1]] = 1.0;
            labels.push(y);
            groups.push(i % 2);
        }
        LabeledDataset::new(features, labels, vec![groups], vec![2]).unwrap()
    }

    #[test]
    fn unconstrained_fit_beats_chance() {
        let ds = separable_dataset(150, 5);
        let classifier = train_unconstrained(&ds, &SolverConfig::default(), 0.01).unwrap();
        let predictions = classifier.predict(ds.features()).unwrap();
        let hits = predictions
            .iter()
            .zip(ds.labels())
            .filter(|(a, b)| a == b)
            .count();
        assert!(hits as f64 / ds.len() as f64 > 0.9);
    }

    #[test]
    fn naive_fair_is_the_identity_channel_program() {
        let ds = separable_dataset(120, 9);
        let solver = SolverConfig {
            seed: 3,
            ..SolverConfig::default()
        };
        let (_, naive) = train_naive_fair(
            &ds,
            MetricKind::StatisticalRate,
            0,
            0.8,
            &solver,
            0.01,
            Surrogate::default(),
        )
        .unwrap();
        let config = ConstraintConfig::new(MetricKind::StatisticalRate, 0, 0.8, 0.0, 0.0).unwrap();
        let identity = NoiseMatrix::identity(2).unwrap();
        let (_, explicit) = train_denoised(
            &ds,
            &[(config, identity)],
            &solver,
            0.01,
            Surrogate::default(),
        )
        .unwrap();
        // same program, same seeds: identical solve
        assert_eq!(naive.status, explicit.status);
        assert!((naive.objective - explicit.objective).abs() < 1e-12);
        assert_eq!(naive.restart, explicit.restart);
    }

    #[test]
    fn naive_fair_converges_on_toy_data() {
        let ds = separable_dataset(120, 13);
        let (_, result) = train_naive_fair(
            &ds,
            MetricKind::StatisticalRate,
            0,
            0.5,
            &SolverConfig::default(),
            0.01,
            Surrogate::default(),
        )
        .unwrap();
        assert_eq!(result.status, SolveStatus::Converged);
    }

    #[test]
    fn randomized_labels_hit_the_target_rate() {
        let ds = separable_dataset(10_000, 2);
        let labels = randomized_labeling(&ds, 0.3, 77).unwrap();
        let positive = labels.iter().filter(|&&b| b).count() as f64 / labels.len() as f64;
        assert!((positive - 0.7).abs() < 0.02, "{positive}");

        let again = randomized_labeling(&ds, 0.3, 77).unwrap();
        assert_eq!(labels, again);

        assert!(randomized_labeling(&ds, 0.0, 1).unwrap().iter().all(|&b| b));
        assert!(randomized_labeling(&ds, 1.0, 1)
            .unwrap()
            .iter()
            .all(|&b| !b));
        assert!(randomized_labeling(&ds, 1.5, 1).is_err());
    }
}
