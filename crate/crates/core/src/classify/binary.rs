use std::f64::consts::LN_10;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::optim::{self, Objective};
use super::{check_features, check_input, Standardizer, TrainingConfig};
use crate::error::{Error, Result};

/// Binary logistic regression in base-10 log-odds units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryLogReg {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Applied to inputs before the linear predictor, when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<Standardizer>,
}

impl BinaryLogReg {
    pub fn new(intercept: f64, coefficients: Vec<f64>) -> Self {
        BinaryLogReg {
            intercept,
            coefficients,
            scaling: None,
        }
    }

    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    /// The features as the linear predictor sees them.
    pub fn transform(&self, r: &[f64]) -> Result<Vec<f64>> {
        check_input(r, self.n_features())?;
        Ok(match &self.scaling {
            Some(s) => s.apply(r),
            None => r.to_vec(),
        })
    }

    /// Per-feature terms `b_i * r_i` of the linear predictor.
    pub fn contributions(&self, r: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .transform(r)?
            .iter()
            .zip(&self.coefficients)
            .map(|(x, b)| b * x)
            .collect())
    }

    /// `b0 + sum_i b_i r_i`: the log10 posterior odds.
    pub fn log10_score(&self, r: &[f64]) -> Result<f64> {
        Ok(self.intercept + self.contributions(r)?.iter().sum::<f64>())
    }

    pub fn score(&self, r: &[f64]) -> Result<f64> {
        Ok(10f64.powf(self.log10_score(r)?))
    }

    /// Posterior probability of the positive class.
    pub fn probability(&self, r: &[f64]) -> Result<f64> {
        let z = self.log10_score(r)? * LN_10;
        Ok(1.0 / (1.0 + (-z).exp()))
    }
}

/// Mean negative log-likelihood of a logistic model plus an L2 penalty on
/// every parameter, in natural-log units. Parameters are `[w0, w1..wp]`.
#[derive(Debug, Clone)]
pub struct BinaryObjective {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    lambda: f64,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl BinaryObjective {
    pub fn new(x: Vec<Vec<f64>>, y: &[bool], lambda: f64) -> Result<Self> {
        check_features(&x, y.len())?;
        Ok(BinaryObjective {
            x,
            y: y.iter().map(|&b| f64::from(u8::from(b))).collect(),
            lambda,
        })
    }

    fn eta(&self, w: &[f64], row: &[f64]) -> f64 {
        w[0] + row.iter().zip(&w[1..]).map(|(a, b)| a * b).sum::<f64>()
    }
}

impl Objective for BinaryObjective {
    fn dim(&self) -> usize {
        self.x[0].len() + 1
    }

    fn value_gradient(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let n = self.x.len() as f64;
        let mut value = 0.0;
        let mut grad = vec![0.0; w.len()];
        for (row, &y) in self.x.iter().zip(&self.y) {
            let eta = self.eta(w, row);
            value += softplus(eta) - y * eta;
            let resid = sigmoid(eta) - y;
            grad[0] += resid;
            for (g, v) in grad[1..].iter_mut().zip(row) {
                *g += resid * v;
            }
        }
        let penalty: f64 = w.iter().map(|v| v * v).sum();
        let value = value / n + 0.5 * self.lambda * penalty;
        for (g, v) in grad.iter_mut().zip(w) {
            *g = *g / n + self.lambda * v;
        }
        (value, grad)
    }

    fn hessian(&self, w: &[f64]) -> Option<DMatrix<f64>> {
        let d = w.len();
        let n = self.x.len() as f64;
        let mut h = DMatrix::<f64>::zeros(d, d);
        let mut xt = vec![0.0; d];
        for row in &self.x {
            let s = sigmoid(self.eta(w, row));
            let weight = s * (1.0 - s) / n;
            xt[0] = 1.0;
            xt[1..].copy_from_slice(row);
            for i in 0..d {
                let wi = weight * xt[i];
                for j in 0..=i {
                    h[(i, j)] += wi * xt[j];
                }
            }
        }
        for i in 0..d {
            h[(i, i)] += self.lambda;
            for j in 0..i {
                h[(j, i)] = h[(i, j)];
            }
        }
        Some(h)
    }
}

/// Fits an L2-regularized logistic regression of `y` on `x` by damped
/// Newton iterations until the gradient norm is within `cfg.tolerance`.
pub fn train_binary_logreg(x: &[Vec<f64>], y: &[bool], cfg: &TrainingConfig) -> Result<BinaryLogReg> {
    cfg.validate()?;
    let p = check_features(x, y.len())?;
    let positives = y.iter().filter(|b| **b).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::Data("binary training data needs both classes".into()));
    }
    let scaling = cfg.standardize.then(|| Standardizer::fit(x));
    let rows: Vec<Vec<f64>> = match &scaling {
        Some(s) => x.iter().map(|r| s.apply(r)).collect(),
        None => x.to_vec(),
    };
    let objective = BinaryObjective::new(rows, y, cfg.lambda)?;
    let solution = optim::newton(&objective, cfg.initial_point(p + 1), cfg.rule())?;
    let w = solution.w;
    Ok(BinaryLogReg {
        intercept: w[0] / LN_10,
        coefficients: w[1..].iter().map(|v| v / LN_10).collect(),
        scaling,
    })
}
