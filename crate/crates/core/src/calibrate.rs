//! Logistic calibration of scores into likelihood ratios.
//!
//! A calibrator is a logistic regression of the hypothesis label on the
//! log10 score, so it is an affine map in log-odds space:
//! `log10 LR = a0 + a1 * log10(score) - prior_log_odds`. The prior term
//! removes the H1:H2 imbalance of the calibration set, so the output is a
//! likelihood ratio rather than posterior odds.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::classify::optim::{self, StopRule};
use crate::classify::{BinaryLogReg, BinaryObjective};
use crate::error::{Error, Result};

pub const MIN_SCORE: f64 = 1e-10;
pub const MAX_SCORE: f64 = 1e10;

/// Bound on stored log10 LRs so the LR itself stays a positive finite double.
const LOG10_LR_LIMIT: f64 = 300.0;

/// `log10` of a score clipped to `[MIN_SCORE, MAX_SCORE]`.
pub fn log10_clipped(score: f64) -> f64 {
    score.clamp(MIN_SCORE, MAX_SCORE).log10()
}

/// A positive likelihood ratio together with its log10.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LRValue {
    pub lr: f64,
    pub log10_lr: f64,
}

impl LRValue {
    pub fn from_log10(log10_lr: f64) -> Self {
        let l = log10_lr.clamp(-LOG10_LR_LIMIT, LOG10_LR_LIMIT);
        LRValue {
            lr: 10f64.powf(l),
            log10_lr: l,
        }
    }

    pub fn new(lr: f64) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::Data(format!("likelihood ratio must be positive and finite, got {lr}")));
        }
        Ok(Self::from_log10(lr.log10()))
    }
}

impl fmt::Display for LRValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LR {:.3} (log10 {:.2})", self.lr, self.log10_lr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibrator {
    pub a0: f64,
    pub a1: f64,
    pub prior_log_odds: f64,
}

impl Calibrator {
    pub const IDENTITY: Calibrator = Calibrator {
        a0: 0.0,
        a1: 1.0,
        prior_log_odds: 0.0,
    };

    /// Calibrated LR for a score given on log10 scale (clipped like scores).
    pub fn apply_log10(&self, log10_score: f64) -> LRValue {
        let s = log10_score.clamp(MIN_SCORE.log10(), MAX_SCORE.log10());
        LRValue::from_log10(self.a0 + self.a1 * s - self.prior_log_odds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    /// Subtract the calibration set's log10 H1:H2 ratio.
    pub correct_prior: bool,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions { correct_prior: true }
    }
}

const CALIBRATION_RULE: StopRule = StopRule {
    tolerance: 1e-10,
    max_iterations: 200,
};

pub fn fit_calibrator(log_scores: &[f64], h1_flags: &[bool]) -> Result<Calibrator> {
    fit_calibrator_with(log_scores, h1_flags, CalibrationOptions::default())
}

/// Fits an unregularized logistic regression of `h1_flags` on `log_scores`
/// (log10 scores, already clipped).
pub fn fit_calibrator_with(log_scores: &[f64], h1_flags: &[bool], opts: CalibrationOptions) -> Result<Calibrator> {
    if log_scores.len() != h1_flags.len() {
        return Err(Error::Data("calibration scores and labels differ in length".into()));
    }
    let n_h1 = h1_flags.iter().filter(|b| **b).count();
    let n_h2 = h1_flags.len() - n_h1;
    if n_h1 == 0 || n_h2 == 0 {
        return Err(Error::Data("calibration data needs both H1 and H2 samples".into()));
    }
    if log_scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Data("calibration log scores must be finite".into()));
    }
    let x: Vec<Vec<f64>> = log_scores.iter().map(|&s| vec![s]).collect();
    let objective = BinaryObjective::new(x, h1_flags, 0.0)?;
    let solution = optim::newton(&objective, vec![0.0, 0.0], CALIBRATION_RULE).map_err(|e| match e {
        Error::NotConverged { iterations, gradient_norm } => Error::Numeric(format!(
            "calibration did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e}); scores may perfectly separate H1 from H2"
        )),
        other => other,
    })?;
    let ln10 = std::f64::consts::LN_10;
    let (a0, a1) = (solution.w[0] / ln10, solution.w[1] / ln10);
    if !(a1 > 0.0) {
        return Err(Error::Numeric(format!(
            "anti-discriminative scores: calibration slope {a1:.4} is not positive"
        )));
    }
    let prior_log_odds = if opts.correct_prior {
        (n_h1 as f64 / n_h2 as f64).log10()
    } else {
        0.0
    };
    Ok(Calibrator {
        a0,
        a1,
        prior_log_odds,
    })
}

/// Calibrated LR of a positive score.
pub fn apply_calibrator(c: &Calibrator, score: f64) -> Result<LRValue> {
    if !(score > 0.0) {
        return Err(Error::Data(format!("score must be positive, got {score}")));
    }
    Ok(c.apply_log10(log10_clipped(score)))
}

/// Folds a calibrator into a binary model: the result scores
/// `a0 + a1 * b0 - prior + sum_i a1 * b_i r_i`, equal to calibrating the
/// original model's score whenever that score lies inside the clip range.
pub fn fuse_coefficients(c: &Calibrator, m: &BinaryLogReg) -> BinaryLogReg {
    BinaryLogReg {
        intercept: c.a0 + c.a1 * m.intercept - c.prior_log_odds,
        coefficients: m.coefficients.iter().map(|b| c.a1 * b).collect(),
        scaling: m.scaling.clone(),
    }
}

/// One unit-width bin of held-out calibrated log10 LRs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationBin {
    pub center: f64,
    pub n_h1: usize,
    pub n_h2: usize,
    /// log10 of the bin's H1 share over its H2 share, each share taken
    /// relative to that hypothesis' total count.
    pub log10_ratio: f64,
}

impl CalibrationBin {
    pub fn qualifies(&self, min_per_class: usize) -> bool {
        self.n_h1 >= min_per_class && self.n_h2 >= min_per_class
    }

    pub fn deviation(&self) -> f64 {
        (self.log10_ratio - self.center).abs()
    }
}

/// Bins log10 LRs into unit bins centered on integers. For a calibrated
/// system the empirical likelihood ratio within a bin should be close to the
/// bin's center.
pub fn calibration_bins(log10_h1: &[f64], log10_h2: &[f64]) -> Vec<CalibrationBin> {
    use std::collections::BTreeMap;
    let mut bins: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
    for &v in log10_h1 {
        bins.entry(v.round() as i64).or_default().0 += 1;
    }
    for &v in log10_h2 {
        bins.entry(v.round() as i64).or_default().1 += 1;
    }
    let (t1, t2) = (log10_h1.len().max(1) as f64, log10_h2.len().max(1) as f64);
    bins.into_iter()
        .map(|(k, (a, b))| CalibrationBin {
            center: k as f64,
            n_h1: a,
            n_h2: b,
            log10_ratio: ((a as f64 / t1) / (b as f64 / t2)).log10(),
        })
        .collect()
}
