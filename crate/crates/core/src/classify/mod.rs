//! Logistic score models.
//!
//! Coefficients are stored in base-10 log-odds units: a binary model scores
//! a feature vector `r` as `10^(b0 + sum_i b_i r_i)`. Training works on the
//! natural-log likelihood and converts at the end.

mod binary;
pub mod optim;
mod powerset;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use binary::{train_binary_logreg, BinaryLogReg, BinaryObjective};
pub use powerset::{train_powerset_logreg, PowersetLogReg, SoftmaxObjective};

/// Clip bounds for denominators of power-set scores.
pub const MIN_DENOMINATOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// L2 penalty per training sample: the objective is the mean negative
    /// log-likelihood plus `lambda / 2 * |w|^2`.
    pub lambda: f64,
    /// Convergence criterion on the Euclidean norm of the objective gradient.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Seed for a random starting point; `None` starts from zero.
    pub seed: Option<u64>,
    /// Standardize features with training-set statistics (used for raw rfu).
    pub standardize: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lambda: 1e-4,
            tolerance: 1e-8,
            max_iterations: 5000,
            seed: None,
            standardize: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::Config(format!(
                "training needs lambda >= 0, tolerance > 0 and max_iterations >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    pub(crate) fn rule(&self) -> optim::StopRule {
        optim::StopRule {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
        }
    }

    pub(crate) fn initial_point(&self, dim: usize) -> Vec<f64> {
        use rand::Rng as _;
        match self.seed {
            None => vec![0.0; dim],
            Some(s) => {
                let mut rng = crate::seed::rng(s);
                (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
            }
        }
    }
}

/// Per-feature affine standardization estimated on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Constant features get unit scale so they map to zero.
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let p = x.first().map_or(0, Vec::len);
        let n = x.len().max(1) as f64;
        let mut mean = vec![0.0; p];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; p];
        for row in x {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let std = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        r.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

pub(crate) fn check_features(x: &[Vec<f64>], n_labels: usize) -> Result<usize> {
    if x.len() != n_labels {
        return Err(Error::Data(format!("{} feature rows but {n_labels} labels", x.len())));
    }
    let p = x
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Data("training data is empty".into()))?;
    if x.iter().any(|r| r.len() != p || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data("feature rows must have equal length and finite values".into()));
    }
    Ok(p)
}

pub(crate) fn check_input(r: &[f64], p: usize) -> Result<()> {
    if r.len() != p {
        return Err(Error::Data(format!("expected {p} features, got {}", r.len())));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("features must be finite".into()));
    }
    Ok(())
}
