//! Linear logistic classifier.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped into this range before taking logs so the loss
/// stays finite for saturated predictions.
pub const PROB_CLAMP: f64 = 1e-12;

/// Overflow-safe logistic function.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub struct LinearClassifier {
    theta: Array1<f64>,
    /// Ridge coefficient the model was trained with; kept for reporting and
    /// serialization.
    c: f64,
}

/// Serialized form: {"theta": [...], "c": ...}.
#[derive(Serialize, Deserialize)]
struct ModelRecord {
    theta: Vec<f64>,
    c: f64,
}

impl LinearClassifier {
    pub fn new(theta: Array1<f64>, c: f64) -> Self {
        Self { theta, c }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &Array1<f64> {
        &self.theta
    }

    pub fn ridge(&self) -> f64 {
        self.c
    }

    pub fn scores(&self, features: &Array2<f64>) -> Result<Array1<f64>> {
        if features.ncols() != self.theta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.theta.len(),
                got: features.ncols(),
            });
        }
        Ok(features.dot(&self.theta))
    }

    pub fn predict_proba(&self, features: &Array2<f64>) -> Result<Array1<f64>> {
        Ok(self.scores(features)?.mapv(sigmoid))
    }

    /// Hard predictions; a score of exactly zero predicts the positive
    /// class.
    pub fn predict(&self, features: &Array2<f64>) -> Result<Vec<bool>> {
        Ok(self.scores(features)?.iter().map(|&s| s >= 0.0).collect())
    }

    pub fn to_json(&self) -> String {
        let record = ModelRecord {
            theta: self.theta.to_vec(),
            c: self.c,
        };
        serde_json::to_string_pretty(&record).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: ModelRecord =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("model json: {e}")))?;
        Ok(Self::new(Array1::from(record.theta), record.c))
    }
}

/// Mean logistic loss with optional ridge term, and its gradient.
///
/// loss = -(1/n) sum_i [y_i ln p_i + (1-y_i) ln(1-p_i)] + c * |theta|^2
pub fn logistic_loss_grad(
    theta: &Array1<f64>,
    features: &Array2<f64>,
    labels: &Array1<f64>,
    c: f64,
) -> Result<(f64, Array1<f64>)> {
    let n = features.nrows();
    if theta.len() != features.ncols() {
        return Err(Error::DimensionMismatch {
            expected: features.ncols(),
            got: theta.len(),
        });
    }
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: labels.len(),
        });
    }
    if n == 0 {
        return Ok((0.0, theta.mapv(|t| 2.0 * c * t)));
    }
    let probabilities = features.dot(theta).mapv(sigmoid);
    let mut loss = 0.0;
    for (&p, &y) in probabilities.iter().zip(labels.iter()) {
        let clamped = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        loss -= y * clamped.ln() + (1.0 - y) * (1.0 - clamped).ln();
    }
    loss /= n as f64;
    loss += c * theta.dot(theta);

    let residual = &probabilities - labels;
    let mut grad = features.t().dot(&residual);
    grad.mapv_inplace(|g| g / n as f64);
    grad = grad + theta.mapv(|t| 2.0 * c * t);
    Ok((loss, grad))
}
