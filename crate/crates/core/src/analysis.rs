//! Closed-form analyses of a two-group population whose protected attribute
//! passes through a symmetric flipping channel.
//!
//! These are population-level formulas (no samples involved) describing how
//! the selection-rate ratio of a fixed classifier distorts when group
//! membership is read off the flipped attribute. A Monte Carlo replica is
//! included so tests can compare the formulas against finite-sample runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::omega;

/// Two groups with masses (mu0, 1 - mu0); the observed attribute flips with
/// the same probability in both directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryPopulation {
    group0_mass: f64,
    flip_prob: f64,
}

impl BinaryPopulation {
    pub fn new(group0_mass: f64, flip_prob: f64) -> Result<Self> {
        if !(group0_mass > 0.0 && group0_mass < 1.0) {
            return Err(Error::invalid(
                "group0_mass",
                format!("{group0_mass} outside (0,1)"),
            ));
        }
        if !(0.0..0.5).contains(&flip_prob) {
            return Err(Error::invalid(
                "flip_prob",
                format!("{flip_prob} outside [0,0.5)"),
            ));
        }
        Ok(Self {
            group0_mass,
            flip_prob,
        })
    }

    pub fn group0_mass(&self) -> f64 {
        self.group0_mass
    }

    pub fn group1_mass(&self) -> f64 {
        1.0 - self.group0_mass
    }

    pub fn flip_prob(&self) -> f64 {
        self.flip_prob
    }

    /// Mass of samples whose observed attribute reads 0.
    pub fn observed_group0_mass(&self) -> f64 {
        (1.0 - self.flip_prob) * self.group0_mass + self.flip_prob * self.group1_mass()
    }

    /// Mass of samples whose observed attribute reads 1.
    pub fn observed_group1_mass(&self) -> f64 {
        self.flip_prob * self.group0_mass + (1.0 - self.flip_prob) * self.group1_mass()
    }

    /// Coefficients of the ratio map: with per-group selection rates
    /// (g * r, r), the observed group-0 mass of positives is proportional to
    /// a*g + b and the observed group-1 mass to c*g + d.
    fn mixing_coefficients(&self) -> (f64, f64, f64, f64) {
        let mu0 = self.group0_mass;
        let mu1 = self.group1_mass();
        let eta = self.flip_prob;
        ((1.0 - eta) * mu0, eta * mu1, eta * mu0, (1.0 - eta) * mu1)
    }

    /// Selection-rate ratio measured on the flipped attribute, for a
    /// classifier whose per-group rates on the clean attribute have the
    /// given ratio. Flipping mixes the groups, so the measured ratio always
    /// sits at least as close to 1 as the true one. Returned as a
    /// worst-over-best ratio (min of the ratio and its reciprocal).
    pub fn observed_sr_ratio(&self, true_ratio: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&true_ratio) {
            return Err(Error::invalid(
                "true_ratio",
                format!("{true_ratio} outside [0,1]"),
            ));
        }
        let (a, b, c, d) = self.mixing_coefficients();
        let ratio = (self.observed_group1_mass() / self.observed_group0_mass())
            * (a * true_ratio + b)
            / (c * true_ratio + d);
        Ok(if ratio <= 1.0 { ratio } else { 1.0 / ratio })
    }

    /// Inverse of `observed_sr_ratio`: the clean-attribute ratio that
    /// produces the given measured ratio. This is the fairness a constraint
    /// enforced on the flipped attribute actually delivers, which is why it
    /// is always at most the measured value. Clamped to [0,1]; measured
    /// ratios below the image of 0 map to 0.
    pub fn underlying_sr_ratio(&self, observed_ratio: f64) -> Result<f64> {
        if !(observed_ratio > 0.0 && observed_ratio <= 1.0) {
            return Err(Error::invalid(
                "observed_ratio",
                format!("{observed_ratio} outside (0,1]"),
            ));
        }
        let (a, b, c, d) = self.mixing_coefficients();
        let t = observed_ratio * self.observed_group0_mass() / self.observed_group1_mass();
        let denominator = a - t * c;
        if denominator <= 0.0 {
            return Err(Error::NonPositiveDenominator {
                context: "underlying ratio map",
                value: denominator,
            });
        }
        Ok(((t * d - b) / denominator).clamp(0.0, 1.0))
    }
}

/// Finite-sample replica of the population setup: draws n samples, assigns
/// predictions per group at the given rates, flips the attribute, and
/// returns the worst-over-best selection-rate ratio measured on the flipped
/// attribute.
pub fn simulate_observed_ratio(
    population: &BinaryPopulation,
    rate0: f64,
    rate1: f64,
    n: usize,
    seed: u64,
) -> Result<f64> {
    for (name, rate) in [("rate0", rate0), ("rate1", rate1)] {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::invalid(name, format!("{rate} outside [0,1]")));
        }
    }
    if n == 0 {
        return Err(Error::invalid("n", "need at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positives = [0.0f64; 2];
    let mut totals = [0.0f64; 2];
    for _ in 0..n {
        let group = usize::from(rng.random::<f64>() >= population.group0_mass());
        let rate = if group == 0 { rate0 } else { rate1 };
        let predicted = rng.random::<f64>() < rate;
        let flipped = rng.random::<f64>() < population.flip_prob();
        let observed = if flipped { 1 - group } else { group };
        totals[observed] += 1.0;
        if predicted {
            positives[observed] += 1.0;
        }
    }
    let rates: Vec<Option<f64>> = positives
        .iter()
        .zip(&totals)
        .map(|(&u, &w)| if w > 0.0 { Some(u / w) } else { None })
        .collect();
    omega(&rates)
}

/// Upper and lower envelope for how far a clean-attribute ratio can sit
/// above a measured one, given the flip masses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioBound {
    /// The full bound, a function of the measured ratio.
    pub tight: f64,
    /// The measured-ratio-free cap max(alpha0, alpha1) * mu1 / mu0.
    pub loose: f64,
}

/// Bound on the clean-attribute selection-rate ratio of a classifier whose
/// measured ratio is `observed_ratio`. `alpha0` and `alpha1` are the
/// fractions of each observed group's positive mass that flipped in from
/// the other clean group; `mu*` are clean masses and `mu_hat*` observed
/// ones. With both alphas zero the observed positives all carry their true
/// attribute and the bound collapses to zero; with both alphas one it
/// degenerates to the mass ratio, independent of the measurement.
pub fn true_ratio_upper_bound(
    observed_ratio: f64,
    alpha0: f64,
    alpha1: f64,
    mu0: f64,
    mu1: f64,
    mu_hat0: f64,
    mu_hat1: f64,
) -> Result<RatioBound> {
    for (name, alpha) in [("alpha0", alpha0), ("alpha1", alpha1)] {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(name, format!("{alpha} outside [0,1]")));
        }
    }
    for (name, mass) in [("mu0", mu0), ("mu1", mu1)] {
        if !(mass > 0.0) {
            return Err(Error::invalid(name, format!("{mass} must be positive")));
        }
    }
    for (name, mass) in [("mu_hat0", mu_hat0), ("mu_hat1", mu_hat1)] {
        if !(mass >= 0.0) {
            return Err(Error::invalid(name, format!("{mass} must be nonnegative")));
        }
    }
    if !(observed_ratio >= 0.0) {
        return Err(Error::invalid(
            "observed_ratio",
            format!("{observed_ratio} must be nonnegative"),
        ));
    }
    let beta00 = mu_hat0 / mu0;
    let beta01 = mu_hat0 / mu1;
    let beta10 = mu_hat1 / mu0;
    let beta11 = mu_hat1 / mu1;
    let denominator = (1.0 + alpha1) * beta01 * observed_ratio + (1.0 + alpha0) * beta11;
    if denominator <= 0.0 {
        return Err(Error::NonPositiveDenominator {
            context: "ratio bound",
            value: denominator,
        });
    }
    let tight = (alpha0 * (1.0 + alpha1) * beta00 * observed_ratio
        + alpha1 * (1.0 + alpha0) * beta10)
        / denominator;
    let loose = alpha0.max(alpha1) * mu1 / mu0;
    Ok(RatioBound { tight, loose })
}

/// The population where the classifier simply echoes the clean attribute:
/// one third of the mass in group 0 and a one-in-three flip. Measured on the
/// clean attribute the selection-rate ratio is 0; measured on the flipped
/// attribute the group rates become 2/4 and 4/5, whose ratio is exactly
/// 10/16. Returned as (clean ratio, observed ratio), computed in integer
/// cross-products so both values are exact.
pub fn attribute_predictor_example() -> (f64, f64) {
    // Ninths of the joint mass table for mu0 = 1/3, flip = 1/3:
    // observed group 0 holds 2 parts true-group-0 plus 2 parts true-group-1,
    // observed group 1 holds 1 part true-group-0 plus 4 parts true-group-1.
    let positives_in_observed0 = 2.0;
    let mass_observed0 = 4.0;
    let positives_in_observed1 = 4.0;
    let mass_observed1 = 5.0;
    let observed =
        (positives_in_observed0 * mass_observed1) / (mass_observed0 * positives_in_observed1);
    (0.0, observed)
}
