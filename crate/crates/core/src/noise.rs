//! Flipping-noise model for protected attributes.
//!
//! A noise matrix H is row-stochastic with a strictly dominant diagonal:
//! H[i][j] is the probability that true group i is recorded as group j, and
//! H[i][i] > 0.5 keeps the channel invertible. The transpose inverse and its
//! largest row L1 norm (the error amplification constant) are computed once
//! at construction.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::metrics::{empirical_rates, MetricKind};
use crate::model::LinearClassifier;

/// Row sums may deviate from 1 by at most this much.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct NoiseMatrix {
    p: usize,
    entries: Array2<f64>,
    transpose_inverse: Array2<f64>,
    m_const: f64,
}

impl NoiseMatrix {
    pub fn from_matrix(entries: Array2<f64>) -> Result<Self> {
        let p = entries.nrows();
        if p < 2 || entries.ncols() != p {
            return Err(Error::Shape {
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        for i in 0..p {
            for j in 0..p {
                let v = entries[[i, j]];
                if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                    return Err(Error::EntryRange {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
            let sum: f64 = entries.row(i).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::RowSum { row: i, sum });
            }
            let diagonal = entries[[i, i]];
            if diagonal <= 0.5 {
                return Err(Error::Dominance {
                    row: i,
                    value: diagonal,
                });
            }
        }
        let transpose_inverse = linalg::invert(&entries.t().to_owned())?;
        let m_const = linalg::max_row_l1(&transpose_inverse);
        Ok(Self {
            p,
            entries,
            transpose_inverse,
            m_const,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape { rows: p, cols });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let entries =
            Array2::from_shape_vec((p, cols), flat).map_err(|_| Error::Shape { rows: p, cols })?;
        Self::from_matrix(entries)
    }

    /// The 2x2 channel that flips group 0 with probability `eta0` and group 1
    /// with probability `eta1`.
    pub fn binary_from_etas(eta0: f64, eta1: f64) -> Result<Self> {
        Self::from_rows(&[vec![1.0 - eta0, eta0], vec![eta1, 1.0 - eta1]])
    }

    /// Noiseless channel on `p` groups.
    pub fn identity(p: usize) -> Result<Self> {
        Self::from_matrix(Array2::eye(p))
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[[i, j]]
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn transpose_inverse(&self) -> &Array2<f64> {
        &self.transpose_inverse
    }

    /// Largest row L1 norm of the transpose inverse. Always at least 1; it
    /// scales how much attribute noise can amplify rate estimation error.
    pub fn m_const(&self) -> f64 {
        self.m_const
    }

    /// Applies the transpose inverse to a length-p vector.
    pub fn denoise(&self, v: &Array1<f64>) -> Result<Array1<f64>> {
        if v.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: v.len(),
            });
        }
        Ok(self.transpose_inverse.dot(v))
    }
}

/// Replaces each sample's protected value by a draw from the matching noise
/// matrix row. Draws use inverse-CDF sampling on a ChaCha8 stream, one
/// uniform per sample in row order, so results are reproducible bit for bit.
pub fn inject_noise(
    dataset: &LabeledDataset,
    attribute: usize,
    noise: &NoiseMatrix,
    seed: u64,
) -> Result<LabeledDataset> {
    let p = dataset.group_count(attribute)?;
    if p != noise.p() {
        return Err(Error::DimensionMismatch {
            expected: noise.p(),
            got: p,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = dataset.protected_values(attribute)?;
    let mut noisy = Vec::with_capacity(values.len());
    for &z in values {
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        let mut drawn = p - 1;
        for j in 0..p {
            cumulative += noise.entry(z, j);
            if u < cumulative {
                drawn = j;
                break;
            }
        }
        noisy.push(drawn);
    }
    dataset.with_protected(attribute, noisy)
}

/// How far denoised selection-rate estimates can drift when the assumed
/// channel differs from the true one (binary attributes only).
///
/// `zeta` is the largest entrywise gap between the two matrices; `alpha0`
/// and `alpha1` convert that gap into relative error on the two group rates,
/// so a fairness target of tau - delta degrades to
/// `tau - delta - zeta * max(alpha0, alpha1)`.
#[derive(Debug, Clone, Copy)]
pub struct EstimationErrorBound {
    pub zeta: f64,
    pub alpha0: f64,
    pub alpha1: f64,
}

impl EstimationErrorBound {
    pub fn degraded_tau(&self, tau: f64, delta: f64) -> f64 {
        tau - delta - self.zeta * self.alpha0.max(self.alpha1)
    }
}

pub fn estimation_error_bound(
    h_true: &NoiseMatrix,
    h_assumed: &NoiseMatrix,
    classifier: &LinearClassifier,
    noisy: &LabeledDataset,
    attribute: usize,
) -> Result<EstimationErrorBound> {
    if h_true.p() != 2 {
        return Err(Error::BinaryOnly { groups: h_true.p() });
    }
    if h_assumed.p() != 2 {
        return Err(Error::BinaryOnly {
            groups: h_assumed.p(),
        });
    }
    if noisy.group_count(attribute)? != 2 {
        return Err(Error::BinaryOnly {
            groups: noisy.group_count(attribute)?,
        });
    }

    let predictions = classifier.predict(noisy.features())?;
    let rates = empirical_rates(&predictions, noisy, attribute, MetricKind::StatisticalRate)?;
    let (u0, u1) = (rates.u[0], rates.u[1]);
    let (mu0, mu1) = (rates.w[0], rates.w[1]);
    let positive_mass = u0 + u1;

    let (e0, e1) = (h_true.entry(0, 1), h_true.entry(1, 0));
    let (a0, a1) = (h_assumed.entry(0, 1), h_assumed.entry(1, 0));

    let check = |context: &'static str, value: f64| -> Result<f64> {
        if value <= 0.0 {
            Err(Error::NonPositiveDenominator { context, value })
        } else {
            Ok(value)
        }
    };

    // Denoised rate estimates under the assumed channel.
    let gamma0_den = check("group 0 denoised mass", (1.0 - a1) * mu0 - a1 * mu1)?;
    let gamma1_den = check("group 1 denoised mass", (1.0 - a0) * mu1 - a0 * mu0)?;
    let gamma0 = ((1.0 - a1) * u0 - a1 * u1) / gamma0_den;
    let gamma1 = ((1.0 - a0) * u1 - a0 * u0) / gamma1_den;

    // Sensitivity denominators under the true channel.
    let d1a = check("alpha1 first term", gamma0 * ((1.0 - e0) * mu1 - e0 * mu0))?;
    let d1b = check("alpha1 second term", (1.0 - e1) * u0 - e1 * u1)?;
    let d0a = check("alpha0 first term", gamma1 * ((1.0 - e1) * mu0 - e1 * mu1))?;
    let d0b = check("alpha0 second term", (1.0 - e0) * u1 - e0 * u0)?;

    let alpha1 = positive_mass / d1a + gamma1 / d1b;
    let alpha0 = positive_mass / d0a + gamma0 / d0b;

    let zeta = h_true
        .matrix()
        .iter()
        .zip(h_assumed.matrix().iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);

    Ok(EstimationErrorBound {
        zeta,
        alpha0,
        alpha1,
    })
}
