//! Denoised fairness constraints.
//!
//! Group rates measured on a noise-corrupted attribute are biased. Applying
//! the transpose inverse of the noise matrix to the joint and conditioning
//! mass vectors recovers consistent estimates of the clean per-group rates,
//! and the fairness program constrains those recovered estimates instead of
//! the raw ones: every pairwise ratio must clear tau - delta, and each
//! denoised joint mass must clear the floor lambda - M * delta.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::metrics::{soft_rates, MetricKind, RateVectors};
use crate::model::sigmoid;
use crate::noise::NoiseMatrix;

/// Default floor under which a denoised conditioning mass counts as
/// undefined. Treating tiny denominators as infeasible keeps the program
/// away from classifiers whose conditioning event nearly vanishes.
pub const DENOMINATOR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintConfig {
    pub metric: MetricKind,
    /// Which protected attribute the constraint reads.
    pub attribute: usize,
    /// Target ratio between the worst and best group rate.
    pub tau: f64,
    /// Slack subtracted from tau, and scaled into the mass floor.
    pub delta: f64,
    /// Minimum per-group mass of the measured event (0 disables the floor).
    pub lambda: f64,
    #[serde(default = "default_floor")]
    pub denominator_floor: f64,
    /// Divide floor residuals by the amplification constant. Feasibility is
    /// unchanged (the threshold and mass scale together); only the residual
    /// units differ.
    #[serde(default)]
    pub scale_floor_by_m: bool,
}

fn default_floor() -> f64 {
    DENOMINATOR_FLOOR
}

impl ConstraintConfig {
    pub fn new(
        metric: MetricKind,
        attribute: usize,
        tau: f64,
        delta: f64,
        lambda: f64,
    ) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::invalid("tau", format!("{tau} outside (0,1]")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::invalid("delta", format!("{delta} outside [0,1)")));
        }
        if !(0.0..0.5).contains(&lambda) {
            return Err(Error::invalid(
                "lambda",
                format!("{lambda} outside [0,0.5)"),
            ));
        }
        Ok(Self {
            metric,
            attribute,
            tau,
            delta,
            lambda,
            denominator_floor: DENOMINATOR_FLOOR,
            scale_floor_by_m: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let copy = Self::new(
            self.metric,
            self.attribute,
            self.tau,
            self.delta,
            self.lambda,
        )?;
        let _ = copy;
        if !(self.denominator_floor > 0.0) {
            return Err(Error::invalid(
                "denominator_floor",
                format!("{} must be positive", self.denominator_floor),
            ));
        }
        Ok(())
    }

    /// Floor threshold on each denoised joint mass.
    pub fn mass_floor(&self, m_const: f64) -> f64 {
        let threshold = self.lambda - m_const * self.delta;
        if self.scale_floor_by_m {
            threshold / m_const
        } else {
            threshold
        }
    }
}

/// Rate estimates after pushing the measured masses through the inverse
/// channel. `gammas[i]` is None when the denoised conditioning mass sits at
/// or below the floor.
#[derive(Debug, Clone)]
pub struct DenoisedEstimates {
    pub numerators: Vec<f64>,
    pub denominators: Vec<f64>,
    pub gammas: Vec<Option<f64>>,
    pub m_const: f64,
}

pub fn denoised_estimates(
    rates: &RateVectors,
    noise: &NoiseMatrix,
    denominator_floor: f64,
) -> Result<DenoisedEstimates> {
    if rates.groups() != noise.p() {
        return Err(Error::DimensionMismatch {
            expected: noise.p(),
            got: rates.groups(),
        });
    }
    let numerators = noise.denoise(&Array1::from(rates.u.clone()))?.to_vec();
    let denominators = noise.denoise(&Array1::from(rates.w.clone()))?.to_vec();
    let gammas = numerators
        .iter()
        .zip(&denominators)
        .map(|(&num, &den)| {
            if den > denominator_floor {
                Some(num / den)
            } else {
                None
            }
        })
        .collect();
    Ok(DenoisedEstimates {
        numerators,
        denominators,
        gammas,
        m_const: noise.m_const(),
    })
}

/// Signed slack of every constraint; nonnegative entries mean satisfied.
#[derive(Debug, Clone)]
pub struct ConstraintResiduals {
    pub groups: usize,
    /// Row-major p x p matrix of gamma_i - (tau - delta) * gamma_j.
    pub ratio: Vec<f64>,
    /// Per-group denoised joint mass minus the floor threshold.
    pub floor: Vec<f64>,
    /// Groups whose denoised conditioning mass fell at or below the floor.
    /// Their ratio entries are computed with the mass clamped to the floor
    /// so the vector stays total, but the point is infeasible regardless.
    pub undefined_groups: Vec<usize>,
    pub feasible: bool,
}

impl ConstraintResiduals {
    /// Largest constraint violation, zero when feasible.
    pub fn max_violation(&self) -> f64 {
        let worst = self
            .ratio
            .iter()
            .chain(self.floor.iter())
            .fold(0.0f64, |acc, &r| acc.max(-r));
        worst.max(0.0)
    }
}

pub fn residuals(estimates: &DenoisedEstimates, config: &ConstraintConfig) -> ConstraintResiduals {
    let p = estimates.numerators.len();
    let floor_threshold = config.mass_floor(estimates.m_const);
    let undefined_groups: Vec<usize> = estimates
        .gammas
        .iter()
        .enumerate()
        .filter_map(|(i, g)| g.is_none().then_some(i))
        .collect();

    // Clamped rates keep the residual vector total for the solver even when
    // a denominator collapses; feasibility is decided separately.
    let clamped: Vec<f64> = estimates
        .numerators
        .iter()
        .zip(&estimates.denominators)
        .map(|(&num, &den)| num / den.max(config.denominator_floor))
        .collect();

    let target = config.tau - config.delta;
    let mut ratio = Vec::with_capacity(p * p);
    for i in 0..p {
        for j in 0..p {
            ratio.push(clamped[i] - target * clamped[j]);
        }
    }
    let floor_scale = if config.scale_floor_by_m {
        estimates.m_const
    } else {
        1.0
    };
    let floor: Vec<f64> = estimates
        .numerators
        .iter()
        .map(|&num| num / floor_scale - floor_threshold)
        .collect();

    let feasible = undefined_groups.is_empty()
        && ratio.iter().all(|&r| r >= 0.0)
        && floor.iter().all(|&r| r >= 0.0);

    ConstraintResiduals {
        groups: p,
        ratio,
        floor,
        undefined_groups,
        feasible,
    }
}

/// Residuals of the same program with hard predictions replaced by the
/// logistic surrogate sigma(score / temperature). As the temperature goes to
/// zero the surrogate masses converge to the hard-count masses away from the
/// decision boundary.
pub fn smooth_residuals(
    theta: &Array1<f64>,
    dataset: &LabeledDataset,
    noise: &NoiseMatrix,
    config: &ConstraintConfig,
    temperature: f64,
) -> Result<ConstraintResiduals> {
    if !(temperature > 0.0) {
        return Err(Error::invalid(
            "temperature",
            format!("{temperature} must be positive"),
        ));
    }
    config.validate()?;
    if theta.len() != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: dataset.dim(),
            got: theta.len(),
        });
    }
    let probabilities: Vec<f64> = dataset
        .features()
        .dot(theta)
        .iter()
        .map(|&s| sigmoid(s / temperature))
        .collect();
    let rates = soft_rates(&probabilities, dataset, config.attribute, config.metric)?;
    let estimates = denoised_estimates(&rates, noise, config.denominator_floor)?;
    Ok(residuals(&estimates, config))
}
