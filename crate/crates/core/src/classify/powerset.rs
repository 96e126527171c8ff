use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::LN_10;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{self, Objective};
use super::{check_features, check_input, Standardizer, TrainingConfig, MIN_DENOMINATOR};
use crate::error::{Error, Result};
use crate::profiles::LabelSet;

/// Multinomial logistic regression over every subset of `fluids`.
///
/// `classes[0]` is the empty set, the reference class whose linear predictor
/// is pinned to zero; `intercepts[j]` and `coefficients[j]` belong to
/// `classes[j + 1]`. Units are base-10 log-odds against the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowersetLogReg {
    pub fluids: LabelSet,
    pub classes: Vec<LabelSet>,
    pub intercepts: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<Standardizer>,
}

impl PowersetLogReg {
    pub fn n_features(&self) -> usize {
        self.coefficients.first().map_or(0, Vec::len)
    }

    /// Class posteriors, in the order of `classes`.
    pub fn posteriors(&self, r: &[f64]) -> Result<Vec<f64>> {
        check_input(r, self.n_features())?;
        let x = match &self.scaling {
            Some(s) => s.apply(r),
            None => r.to_vec(),
        };
        let eta: Vec<f64> = std::iter::once(0.0)
            .chain(self.intercepts.iter().zip(&self.coefficients).map(|(b0, b)| {
                (b0 + b.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>()) * LN_10
            }))
            .collect();
        Ok(softmax(&eta))
    }

    /// Posterior mass of classes meeting at least one fluid of `interest`
    /// over the mass of classes meeting none; the denominator is clipped
    /// below at [`MIN_DENOMINATOR`].
    pub fn score(&self, r: &[f64], interest: LabelSet) -> Result<f64> {
        if interest.is_empty() {
            return Err(Error::Config("the set of fluids of interest is empty".into()));
        }
        if !interest.is_subset(self.fluids) {
            return Err(Error::Config(format!(
                "interest {interest} includes fluids outside the model's {}",
                self.fluids
            )));
        }
        let post = self.posteriors(r)?;
        let (mut num, mut den) = (0.0, 0.0);
        for (c, p) in self.classes.iter().zip(&post) {
            if c.intersects(interest) {
                num += p;
            } else {
                den += p;
            }
        }
        Ok(num / den.max(MIN_DENOMINATOR))
    }
}

fn softmax(eta: &[f64]) -> Vec<f64> {
    let m = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = eta.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Mean multinomial negative log-likelihood with the reference class pinned
/// at zero, plus an L2 penalty on every parameter. Parameters are laid out
/// as one `[w0, w1..wp]` block per non-reference class.
#[derive(Debug, Clone)]
pub struct SoftmaxObjective {
    x: Vec<Vec<f64>>,
    class_of: Vec<usize>,
    n_classes: usize,
    lambda: f64,
}

const CHUNK_ROWS: usize = 128;

impl SoftmaxObjective {
    pub fn new(x: Vec<Vec<f64>>, class_of: Vec<usize>, n_classes: usize, lambda: f64) -> Result<Self> {
        check_features(&x, class_of.len())?;
        if n_classes < 2 || class_of.iter().any(|&c| c >= n_classes) {
            return Err(Error::Data("class indices out of range".into()));
        }
        Ok(SoftmaxObjective {
            x,
            class_of,
            n_classes,
            lambda,
        })
    }

    fn block(&self) -> usize {
        self.x[0].len() + 1
    }

    /// Unnormalized sums over one chunk of rows. Chunks are reduced in a
    /// fixed order so results do not depend on thread scheduling.
    fn chunk_sums(&self, w: &[f64], rows: std::ops::Range<usize>) -> (f64, Vec<f64>) {
        let b = self.block();
        let k = self.n_classes - 1;
        let mut value = 0.0;
        let mut grad = vec![0.0; w.len()];
        let mut eta = vec![0.0; k];
        for i in rows {
            let row = &self.x[i];
            for (c, e) in eta.iter_mut().enumerate() {
                let wc = &w[c * b..(c + 1) * b];
                *e = wc[0] + row.iter().zip(&wc[1..]).map(|(a, v)| a * v).sum::<f64>();
            }
            let m = eta.iter().copied().fold(0.0, f64::max);
            let z = (-m).exp() + eta.iter().map(|e| (e - m).exp()).sum::<f64>();
            let lse = m + z.ln();
            let y = self.class_of[i];
            value += lse - if y == 0 { 0.0 } else { eta[y - 1] };
            for (c, e) in eta.iter().enumerate() {
                let resid = (e - lse).exp() - if y == c + 1 { 1.0 } else { 0.0 };
                if resid == 0.0 {
                    continue;
                }
                let g = &mut grad[c * b..(c + 1) * b];
                g[0] += resid;
                for (gj, v) in g[1..].iter_mut().zip(row) {
                    *gj += resid * v;
                }
            }
        }
        (value, grad)
    }
}

impl Objective for SoftmaxObjective {
    fn dim(&self) -> usize {
        (self.n_classes - 1) * self.block()
    }

    fn value_gradient(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let n = self.x.len();
        let chunks: Vec<(f64, Vec<f64>)> = (0..n.div_ceil(CHUNK_ROWS))
            .into_par_iter()
            .map(|c| self.chunk_sums(w, c * CHUNK_ROWS..((c + 1) * CHUNK_ROWS).min(n)))
            .collect();
        let mut value = 0.0;
        let mut grad = vec![0.0; w.len()];
        for (v, g) in chunks {
            value += v;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        let nf = n as f64;
        let penalty: f64 = w.iter().map(|v| v * v).sum();
        for (g, v) in grad.iter_mut().zip(w) {
            *g = *g / nf + self.lambda * v;
        }
        (value / nf + 0.5 * self.lambda * penalty, grad)
    }
}

/// Fits a multinomial logistic regression whose classes are all subsets of
/// the fluids seen in `labelsets`. Classes never observed are still
/// parameterized and held finite by the L2 penalty.
pub fn train_powerset_logreg(x: &[Vec<f64>], labelsets: &[LabelSet], cfg: &TrainingConfig) -> Result<PowersetLogReg> {
    cfg.validate()?;
    let p = check_features(x, labelsets.len())?;
    let distinct: BTreeSet<LabelSet> = labelsets.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::Data("power-set training needs at least two distinct label sets".into()));
    }
    let fluids = labelsets.iter().fold(LabelSet::empty(), |acc, l| acc.union(*l));
    let classes = fluids.subsets();
    let index: BTreeMap<LabelSet, usize> = classes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let class_of: Vec<usize> = labelsets.iter().map(|l| index[l]).collect();

    let scaling = cfg.standardize.then(|| Standardizer::fit(x));
    let rows: Vec<Vec<f64>> = match &scaling {
        Some(s) => x.iter().map(|r| s.apply(r)).collect(),
        None => x.to_vec(),
    };
    let objective = SoftmaxObjective::new(rows, class_of, classes.len(), cfg.lambda)?;
    let solution = optim::lbfgs(&objective, cfg.initial_point(objective.dim()), cfg.rule())?;

    let b = p + 1;
    let blocks: Vec<&[f64]> = solution.w.chunks(b).collect();
    Ok(PowersetLogReg {
        fluids,
        intercepts: blocks.iter().map(|blk| blk[0] / LN_10).collect(),
        coefficients: blocks.iter().map(|blk| blk[1..].iter().map(|v| v / LN_10).collect()).collect(),
        classes,
        scaling,
    })
}
