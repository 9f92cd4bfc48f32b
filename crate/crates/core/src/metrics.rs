//! Group performance metrics.
//!
//! Every supported metric is a conditional rate q_i = Pr[event | condition,
//! group i], described by two predicates over (prediction, label). Keeping
//! the predicate pair explicit lets one code path count joint and
//! conditioning masses for all eight kinds, and marks which metrics have a
//! prediction-dependent denominator (those become linear-fractional rather
//! than linear in the classifier).

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Pr[f=1 | group]
    StatisticalRate,
    /// Pr[f=1 | y=0, group]
    FalsePositiveRate,
    /// Pr[y=0 | f=1, group]
    FalseDiscoveryRate,
    /// Pr[f=1 | y=1, group]
    TruePositiveRate,
    /// Pr[f=0 | y=1, group]
    FalseNegativeRate,
    /// Pr[f=0 | y=0, group]
    TrueNegativeRate,
    /// Pr[f=y | group]
    AccuracyRate,
    /// Pr[y=1 | f=0, group]
    FalseOmissionRate,
}

impl MetricKind {
    pub const ALL: [MetricKind; 8] = [
        MetricKind::StatisticalRate,
        MetricKind::FalsePositiveRate,
        MetricKind::FalseDiscoveryRate,
        MetricKind::TruePositiveRate,
        MetricKind::FalseNegativeRate,
        MetricKind::TrueNegativeRate,
        MetricKind::AccuracyRate,
        MetricKind::FalseOmissionRate,
    ];

    /// The measured event.
    pub fn event(self, prediction: bool, label: bool) -> bool {
        match self {
            MetricKind::StatisticalRate => prediction,
            MetricKind::FalsePositiveRate => prediction,
            MetricKind::FalseDiscoveryRate => !label,
            MetricKind::TruePositiveRate => prediction,
            MetricKind::FalseNegativeRate => !prediction,
            MetricKind::TrueNegativeRate => !prediction,
            MetricKind::AccuracyRate => prediction == label,
            MetricKind::FalseOmissionRate => label,
        }
    }

    /// The conditioning event.
    pub fn condition(self, prediction: bool, label: bool) -> bool {
        match self {
            MetricKind::StatisticalRate | MetricKind::AccuracyRate => true,
            MetricKind::FalsePositiveRate | MetricKind::TrueNegativeRate => !label,
            MetricKind::TruePositiveRate | MetricKind::FalseNegativeRate => label,
            MetricKind::FalseDiscoveryRate => prediction,
            MetricKind::FalseOmissionRate => !prediction,
        }
    }

    /// True when the conditioning event reads the prediction, which makes
    /// the rate a ratio of two classifier-dependent quantities.
    pub fn is_linear_fractional(self) -> bool {
        [false, true]
            .into_iter()
            .any(|label| self.condition(false, label) != self.condition(true, label))
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::StatisticalRate => "sr",
            MetricKind::FalsePositiveRate => "fpr",
            MetricKind::FalseDiscoveryRate => "fdr",
            MetricKind::TruePositiveRate => "tpr",
            MetricKind::FalseNegativeRate => "fnr",
            MetricKind::TrueNegativeRate => "tnr",
            MetricKind::AccuracyRate => "acc",
            MetricKind::FalseOmissionRate => "for",
        }
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid("metric", format!("unknown metric {s:?}")))
    }
}

/// Per-group joint and conditioning masses, both as fractions of the full
/// sample: u[i] = #(event & condition & group i)/n, w[i] = #(condition &
/// group i)/n.
#[derive(Debug, Clone)]
pub struct RateVectors {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub n: usize,
}

impl RateVectors {
    pub fn groups(&self) -> usize {
        self.u.len()
    }
}

/// Counts hard predictions into per-group rate vectors.
pub fn empirical_rates(
    predictions: &[bool],
    dataset: &LabeledDataset,
    attribute: usize,
    metric: MetricKind,
) -> Result<RateVectors> {
    if predictions.len() != dataset.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: dataset.len(),
        });
    }
    let p = dataset.group_count(attribute)?;
    let groups = dataset.protected_values(attribute)?;
    let labels = dataset.labels();
    let n = dataset.len();
    let mut u = vec![0.0; p];
    let mut w = vec![0.0; p];
    for i in 0..n {
        let (prediction, label, g) = (predictions[i], labels[i], groups[i]);
        if metric.condition(prediction, label) {
            w[g] += 1.0;
            if metric.event(prediction, label) {
                u[g] += 1.0;
            }
        }
    }
    let scale = n.max(1) as f64;
    for v in u.iter_mut().chain(w.iter_mut()) {
        *v /= scale;
    }
    Ok(RateVectors { u, w, n })
}

/// Rate vectors with the prediction indicator replaced by a probability.
/// Each sample contributes the expectation of the hard count under an
/// independent Bernoulli prediction with the given probability. With
/// probabilities in {0,1} this reduces exactly to `empirical_rates`.
pub fn soft_rates(
    probabilities: &[f64],
    dataset: &LabeledDataset,
    attribute: usize,
    metric: MetricKind,
) -> Result<RateVectors> {
    if probabilities.len() != dataset.len() {
        return Err(Error::LengthMismatch {
            left: probabilities.len(),
            right: dataset.len(),
        });
    }
    let p = dataset.group_count(attribute)?;
    let groups = dataset.protected_values(attribute)?;
    let labels = dataset.labels();
    let n = dataset.len();
    let mut u = vec![0.0; p];
    let mut w = vec![0.0; p];
    for i in 0..n {
        let (prob, label, g) = (probabilities[i], labels[i], groups[i]);
        u[g] += soft_indicator(metric, JointOrCondition::Joint, prob, label);
        w[g] += soft_indicator(metric, JointOrCondition::Condition, prob, label);
    }
    let scale = n.max(1) as f64;
    for v in u.iter_mut().chain(w.iter_mut()) {
        *v /= scale;
    }
    Ok(RateVectors { u, w, n })
}

#[derive(Clone, Copy)]
pub(crate) enum JointOrCondition {
    Joint,
    Condition,
}

/// Expected value of the (joint or conditioning) indicator when the
/// prediction is Bernoulli(prob). Linear in prob, so its derivative is the
/// fixed gap between the prediction=1 and prediction=0 evaluations.
pub(crate) fn soft_indicator(
    metric: MetricKind,
    which: JointOrCondition,
    prob: f64,
    label: bool,
) -> f64 {
    let at = |prediction: bool| -> f64 {
        let hit = match which {
            JointOrCondition::Joint => {
                metric.event(prediction, label) && metric.condition(prediction, label)
            }
            JointOrCondition::Condition => metric.condition(prediction, label),
        };
        if hit {
            1.0
        } else {
            0.0
        }
    };
    at(false) + (at(true) - at(false)) * prob
}

/// Per-group rates u_i/w_i; None where the conditioning mass is zero.
pub fn group_rates(rates: &RateVectors) -> Vec<Option<f64>> {
    rates
        .u
        .iter()
        .zip(&rates.w)
        .map(|(&u, &w)| if w > 0.0 { Some(u / w) } else { None })
        .collect()
}

/// Multiplicative fairness: smallest rate over largest, taken over groups
/// with a defined rate. All defined rates zero counts as perfectly fair.
pub fn omega(rates: &[Option<f64>]) -> Result<f64> {
    let defined: Vec<f64> = rates.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::AllUndefined);
    }
    let max = defined.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if max == 0.0 {
        return Ok(1.0);
    }
    let min = defined.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    Ok(min / max)
}

/// Additive disparity: largest rate minus smallest, over defined rates.
pub fn additive_disparity(rates: &[Option<f64>]) -> Result<f64> {
    let defined: Vec<f64> = rates.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::AllUndefined);
    }
    let max = defined.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let min = defined.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    Ok(max - min)
}

/// Fraction of predictions matching the labels.
pub fn accuracy(predictions: &[bool], labels: &[bool]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn dataset(labels: Vec<bool>, groups: Vec<usize>, p: usize) -> LabeledDataset {
        let n = labels.len();
        LabeledDataset::new(Array2::zeros((n, 1)), labels, vec![groups], vec![p]).unwrap()
    }

    #[test]
    fn statistical_rate_worked_example() {
        let predictions = vec![
            true, true, false, false, true, false, true, false, true, false,
        ];
        let ds = dataset(vec![false; 10], vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1], 2);
        let rates = empirical_rates(&predictions, &ds, 0, MetricKind::StatisticalRate).unwrap();
        assert_eq!(rates.u, vec![0.3, 0.2]);
        assert_eq!(rates.w, vec![0.5, 0.5]);
        let q = group_rates(&rates);
        assert_eq!(q, vec![Some(0.6), Some(0.4)]);
        let value = omega(&q).unwrap();
        assert!((value - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn linear_fractional_flags() {
        use MetricKind::*;
        for kind in MetricKind::ALL {
            let expected = matches!(kind, FalseDiscoveryRate | FalseOmissionRate);
            assert_eq!(kind.is_linear_fractional(), expected, "{kind:?}");
        }
    }

    #[test]
    fn metric_names_round_trip() {
        for kind in MetricKind::ALL {
            assert_eq!(kind.name().parse::<MetricKind>().unwrap(), kind);
        }
        assert!("nope".parse::<MetricKind>().is_err());
    }

    #[test]
    fn empty_group_rate_is_undefined() {
        let predictions = vec![true, false];
        let ds = dataset(vec![true, false], vec![0, 0], 2);
        let rates = empirical_rates(&predictions, &ds, 0, MetricKind::StatisticalRate).unwrap();
        let q = group_rates(&rates);
        assert_eq!(q[1], None);
        assert!(omega(&q).is_ok());
    }

    #[test]
    fn omega_handles_all_zero_rates() {
        assert_eq!(omega(&[Some(0.0), Some(0.0)]).unwrap(), 1.0);
    }

    #[test]
    fn omega_errors_when_nothing_defined() {
        assert!(matches!(omega(&[None, None]), Err(Error::AllUndefined)));
        assert!(matches!(
            additive_disparity(&[None]),
            Err(Error::AllUndefined)
        ));
    }

    #[test]
    fn rejects_length_mismatch() {
        let ds = dataset(vec![true, false], vec![0, 1], 2);
        assert!(matches!(
            empirical_rates(&[true], &ds, 0, MetricKind::StatisticalRate),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn hard_soft_agreement_on_indicator_probabilities() {
        let predictions = vec![true, false, true, true, false, false];
        let probabilities: Vec<f64> = predictions
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        let ds = dataset(
            vec![true, true, false, false, true, false],
            vec![0, 1, 0, 1, 0, 1],
            2,
        );
        for kind in MetricKind::ALL {
            let hard = empirical_rates(&predictions, &ds, 0, kind).unwrap();
            let soft = soft_rates(&probabilities, &ds, 0, kind).unwrap();
            assert_eq!(hard.u, soft.u, "{kind:?}");
            assert_eq!(hard.w, soft.w, "{kind:?}");
        }
    }

    /// Straight-line recount of a metric over raw samples, written
    /// independently of the vectorized counting path.
    fn brute_force_rate(
        predictions: &[bool],
        labels: &[bool],
        groups: &[usize],
        group: usize,
        kind: MetricKind,
    ) -> Option<f64> {
        let mut event = 0usize;
        let mut cond = 0usize;
        for i in 0..predictions.len() {
            if groups[i] != group {
                continue;
            }
            let in_condition = match kind {
                MetricKind::StatisticalRate | MetricKind::AccuracyRate => true,
                MetricKind::FalsePositiveRate | MetricKind::TrueNegativeRate => !labels[i],
                MetricKind::TruePositiveRate | MetricKind::FalseNegativeRate => labels[i],
                MetricKind::FalseDiscoveryRate => predictions[i],
                MetricKind::FalseOmissionRate => !predictions[i],
            };
            if !in_condition {
                continue;
            }
            cond += 1;
            let in_event = match kind {
                MetricKind::StatisticalRate
                | MetricKind::FalsePositiveRate
                | MetricKind::TruePositiveRate => predictions[i],
                MetricKind::FalseNegativeRate | MetricKind::TrueNegativeRate => !predictions[i],
                MetricKind::FalseDiscoveryRate => !labels[i],
                MetricKind::FalseOmissionRate => labels[i],
                MetricKind::AccuracyRate => predictions[i] == labels[i],
            };
            if in_event {
                event += 1;
            }
        }
        if cond == 0 {
            None
        } else {
            Some(event as f64 / cond as f64)
        }
    }

    proptest! {
        #[test]
        fn counting_matches_brute_force(
            n in 1usize..50,
            p in 2usize..4,
            seed in 0u64..500,
            kind_idx in 0usize..8,
        ) {
            use rand::{Rng, SeedableRng};
            let kind = MetricKind::ALL[kind_idx];
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let predictions: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.5).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.5).collect();
            let groups: Vec<usize> = (0..n).map(|_| rng.random_range(0..p)).collect();
            let ds = dataset(labels.clone(), groups.clone(), p);
            let rates = empirical_rates(&predictions, &ds, 0, kind).unwrap();
            let q = group_rates(&rates);
            for (g, &measured) in q.iter().enumerate() {
                let expected = brute_force_rate(&predictions, &labels, &groups, g, kind);
                match (measured, expected) {
                    (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                    (None, None) => {}
                    other => prop_assert!(false, "group {g}: {other:?}"),
                }
                // masses are integer multiples of 1/n
                let un = rates.u[g] * n as f64;
                let wn = rates.w[g] * n as f64;
                prop_assert!((un - un.round()).abs() < 1e-9);
                prop_assert!((wn - wn.round()).abs() < 1e-9);
                prop_assert!(rates.u[g] <= rates.w[g] + 1e-12);
            }
            prop_assert!(rates.w.iter().sum::<f64>() <= 1.0 + 1e-12);
        }

        #[test]
        fn omega_in_unit_interval_and_scale_invariant(
            values in proptest::collection::vec(0.0f64..1.0, 1..6),
            scale in 0.01f64..100.0,
        ) {
            let q: Vec<Option<f64>> = values.iter().map(|&v| Some(v)).collect();
            let scaled: Vec<Option<f64>> = values.iter().map(|&v| Some(v * scale)).collect();
            let a = omega(&q).unwrap();
            let b = omega(&scaled).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
            prop_assert!((a - b).abs() < 1e-9);
        }

        /// A multiplicative guarantee bounds the additive gap: omega >= tau
        /// forces max - min <= (1 - tau) * max.
        #[test]
        fn multiplicative_implies_additive(
            values in proptest::collection::vec(0.0f64..1.0, 2..6),
            tau in 0.05f64..1.0,
        ) {
            let q: Vec<Option<f64>> = values.iter().map(|&v| Some(v)).collect();
            let om = omega(&q).unwrap();
            prop_assume!(om >= tau);
            let gap = additive_disparity(&q).unwrap();
            let max = values.iter().fold(0.0f64, |a, &b| a.max(b));
            prop_assert!(gap <= (1.0 - tau) * max + 1e-12);
            prop_assert!(gap <= 1.0 - tau + 1e-12);
        }
    }

    #[test]
    fn accuracy_counts_matches() {
        let value = accuracy(&[true, false, true], &[true, true, true]).unwrap();
        assert!((value - 2.0 / 3.0).abs() < 1e-15);
    }
}
