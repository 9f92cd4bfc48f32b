//! Synthetic benchmark data: a Gaussian mixture whose first feature carries
//! both the strongest share of the label signal and a per-group shift, so an
//! accuracy-only fit picks up a configurable selection-rate disparity while
//! the remaining features leave room for fair alternatives.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

/// Generator parameters. The defaults are the calibrated benchmark used by
/// the experiment configs and the test suite: two equal-mass groups, a lower
/// base rate and a negative feature shift for group 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n: usize,
    /// Gaussian feature count; every one carries a share of the label
    /// signal.
    pub dim: usize,
    /// Group masses, must sum to 1.
    pub proportions: Vec<f64>,
    /// Per-group probability of a positive label.
    pub positive_rates: Vec<f64>,
    /// Euclidean distance between the label-conditional feature means. The
    /// first feature carries twice the per-feature amplitude of the rest, so
    /// a fit can shed it and still keep a weaker share of the signal.
    pub separation: f64,
    /// Per-group additive shift of the first feature only. Because that
    /// feature is also the most informative one, an accuracy-only fit leans
    /// on it and inherits the group disparity, while constrained training
    /// can trade it for the weaker remaining features.
    pub group_shifts: Vec<f64>,
    /// Append a constant-one column after the Gaussian features.
    pub add_intercept: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 4000,
            dim: 2,
            proportions: vec![0.5, 0.5],
            positive_rates: vec![0.45, 0.45],
            separation: 2.5,
            group_shifts: vec![-3.0, 0.0],
            add_intercept: true,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let p = self.proportions.len();
        if p < 2 {
            return Err(Error::BadProportions {
                message: format!("need at least two groups, got {p}"),
            });
        }
        if self.proportions.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::BadProportions {
                message: "every group proportion must be positive".to_owned(),
            });
        }
        let total: f64 = self.proportions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::BadProportions {
                message: format!("proportions sum to {total}, expected 1"),
            });
        }
        if self.positive_rates.len() != p {
            return Err(Error::LengthMismatch {
                left: self.positive_rates.len(),
                right: p,
            });
        }
        if self.positive_rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::invalid(
                "positive_rates",
                "every rate must lie in [0,1]",
            ));
        }
        if self.group_shifts.len() != p {
            return Err(Error::LengthMismatch {
                left: self.group_shifts.len(),
                right: p,
            });
        }
        if self.dim == 0 {
            return Err(Error::invalid("dim", "need at least one feature"));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return Err(Error::invalid(
                "separation",
                format!("{} must be nonnegative", self.separation),
            ));
        }
        Ok(())
    }

    pub fn groups(&self) -> usize {
        self.proportions.len()
    }

    /// Feature count of the generated dataset, intercept included.
    pub fn feature_dim(&self) -> usize {
        self.dim + usize::from(self.add_intercept)
    }
}

/// Per-feature label-mean offsets: direction (2, 1, ..., 1) scaled so the
/// class means sit `separation` apart.
fn signal_amplitudes(dim: usize, separation: f64) -> Vec<f64> {
    let mut amplitudes: Vec<f64> = (0..dim).map(|j| if j == 0 { 2.0 } else { 1.0 }).collect();
    let norm = amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
    for a in &mut amplitudes {
        *a *= separation / (2.0 * norm);
    }
    amplitudes
}

/// Draws the dataset. Per sample: one uniform picks the group by inverse
/// CDF, one uniform picks the label, then `dim` standard normals fill the
/// features; each feature gets its label mean offset and the first also
/// gets the group shift.
pub fn make_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = spec.groups();
    let width = spec.feature_dim();
    let signal = signal_amplitudes(spec.dim, spec.separation);
    let mut features = Array2::<f64>::zeros((spec.n, width));
    let mut labels = Vec::with_capacity(spec.n);
    let mut groups = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let mut pick = rng.random::<f64>();
        let mut group = p - 1;
        for (g, &w) in spec.proportions.iter().enumerate() {
            if pick < w {
                group = g;
                break;
            }
            pick -= w;
        }
        let label = rng.random::<f64>() < spec.positive_rates[group];
        let sign = if label { 1.0 } else { -1.0 };
        for j in 0..spec.dim {
            let noise: f64 = rng.sample(StandardNormal);
            features[[i, j]] = noise
                + sign * signal[j]
                + if j == 0 {
                    spec.group_shifts[group]
                } else {
                    0.0
                };
        }
        if spec.add_intercept {
            features[[i, spec.dim]] = 1.0;
        }
        labels.push(label);
        groups.push(group);
    }
    LabeledDataset::new(features, labels, vec![groups], vec![p])
}
