//! Performance measures for sets of likelihood ratios: Cllr, ROC AUC,
//! Tippett curves, LR capping and the verbal scale.

use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::calibrate::LRValue;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cllr: f64,
    pub auc: f64,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub n_h1: usize,
    pub n_h2: usize,
}

/// `log2(1 + 10^x)` without overflow.
fn log2_one_plus_pow10(x: f64) -> f64 {
    let z = x * std::f64::consts::LN_10;
    let ln = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    ln / std::f64::consts::LN_2
}

/// Log-likelihood-ratio cost:
/// `(mean_H1 log2(1 + 1/LR) + mean_H2 log2(1 + LR)) / 2`.
pub fn cllr(lrs_h1: &[LRValue], lrs_h2: &[LRValue]) -> Result<f64> {
    if lrs_h1.is_empty() || lrs_h2.is_empty() {
        return Err(Error::Data("Cllr needs LRs under both hypotheses".into()));
    }
    let h1: f64 = lrs_h1.iter().map(|l| log2_one_plus_pow10(-l.log10_lr)).sum::<f64>() / lrs_h1.len() as f64;
    let h2: f64 = lrs_h2.iter().map(|l| log2_one_plus_pow10(l.log10_lr)).sum::<f64>() / lrs_h2.len() as f64;
    Ok(0.5 * (h1 + h2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub auc: f64,
    /// Fraction of H2 items with score above 1.
    pub fp_rate: f64,
    /// Fraction of H1 items with score below 1.
    pub fn_rate: f64,
}

/// Area under the ROC curve from the rank-sum statistic (ties get average
/// ranks), plus error rates at the score = 1 operating point.
pub fn roc_auc(scores: &[f64], h1_flags: &[bool]) -> Result<RocSummary> {
    if scores.len() != h1_flags.len() {
        return Err(Error::Data("scores and labels differ in length".into()));
    }
    let n1 = h1_flags.iter().filter(|b| **b).count();
    let n2 = h1_flags.len() - n1;
    if n1 == 0 || n2 == 0 {
        return Err(Error::Data("ROC needs both H1 and H2 items".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("scores contain NaN".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_h1 = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_h1 += avg_rank * order[i..=j].iter().filter(|&&k| h1_flags[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_h1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let fp = scores.iter().zip(h1_flags).filter(|(s, h)| !**h && **s > 1.0).count();
    let fneg = scores.iter().zip(h1_flags).filter(|(s, h)| **h && **s < 1.0).count();
    Ok(RocSummary {
        auc: u / (n1 as f64 * n2 as f64),
        fp_rate: fp as f64 / n2 as f64,
        fn_rate: fneg as f64 / n1 as f64,
    })
}

/// Cllr, AUC and error rates of calibrated LRs in one report.
pub fn metric_report(lrs: &[LRValue], h1_flags: &[bool]) -> Result<MetricReport> {
    let (h1, h2): (Vec<LRValue>, Vec<LRValue>) = {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (l, &h) in lrs.iter().zip(h1_flags) {
            if h {
                a.push(*l);
            } else {
                b.push(*l);
            }
        }
        (a, b)
    };
    let roc = roc_auc(&lrs.iter().map(|l| l.lr).collect::<Vec<_>>(), h1_flags)?;
    Ok(MetricReport {
        cllr: cllr(&h1, &h2)?,
        auc: roc.auc,
        fp_rate: roc.fp_rate,
        fn_rate: roc.fn_rate,
        n_h1: h1.len(),
        n_h2: h2.len(),
    })
}

/// Empirical inverse CDFs of log10 LRs under each hypothesis.
///
/// `fraction_h1[i]` is the share of H1 LRs whose log10 strictly exceeds
/// `thresholds[i]`. The first threshold lies one unit below every value, so
/// curves start at 1; the last is the largest value, where both reach 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TippettCurve {
    pub thresholds: Vec<f64>,
    pub fraction_h1: Vec<f64>,
    pub fraction_h2: Vec<f64>,
}

fn fraction_above(sorted: &[f64], t: f64) -> f64 {
    let at_or_below = sorted.partition_point(|&v| v <= t);
    (sorted.len() - at_or_below) as f64 / sorted.len() as f64
}

impl TippettCurve {
    /// Fractions (H1, H2) of log10 LRs strictly above `t`.
    pub fn at(&self, t: f64) -> (f64, f64) {
        match self.thresholds.partition_point(|&x| x <= t) {
            0 => (1.0, 1.0),
            k => (self.fraction_h1[k - 1], self.fraction_h2[k - 1]),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fraction_h1,fraction_h2\n");
        for ((t, a), b) in self.thresholds.iter().zip(&self.fraction_h1).zip(&self.fraction_h2) {
            let _ = writeln!(out, "{t},{a},{b}");
        }
        out
    }
}

pub fn tippett(lrs_h1: &[LRValue], lrs_h2: &[LRValue]) -> Result<TippettCurve> {
    if lrs_h1.is_empty() || lrs_h2.is_empty() {
        return Err(Error::Data("Tippett curves need LRs under both hypotheses".into()));
    }
    let sorted = |v: &[LRValue]| {
        let mut s: Vec<f64> = v.iter().map(|l| l.log10_lr).collect();
        s.sort_by(f64::total_cmp);
        s
    };
    let (h1, h2) = (sorted(lrs_h1), sorted(lrs_h2));
    let mut grid: Vec<f64> = h1.iter().chain(&h2).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid.insert(0, grid[0] - 1.0);
    Ok(TippettCurve {
        fraction_h1: grid.iter().map(|&t| fraction_above(&h1, t)).collect(),
        fraction_h2: grid.iter().map(|&t| fraction_above(&h2, t)).collect(),
        thresholds: grid,
    })
}

pub const DEFAULT_CAP: f64 = 1000.0;

/// Clamps an LR into `[1/cap, cap]`.
pub fn cap_lr(lr: LRValue, cap: f64) -> Result<LRValue> {
    if !(cap > 1.0) || !cap.is_finite() {
        return Err(Error::Config(format!("LR cap must be a finite value above 1, got {cap}")));
    }
    let limit = cap.log10();
    if lr.log10_lr > limit {
        Ok(LRValue { lr: cap, log10_lr: limit })
    } else if lr.log10_lr < -limit {
        Ok(LRValue { lr: 1.0 / cap, log10_lr: -limit })
    } else {
        Ok(lr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    None,
    Weak,
    Moderate,
    ModeratelyStrong,
    Strong,
    VeryStrong,
    ExtremelyStrong,
}

impl Strength {
    pub fn label(self) -> &'static str {
        match self {
            Strength::None => "do not support one hypothesis over the other",
            Strength::Weak => "weak support",
            Strength::Moderate => "moderate support",
            Strength::ModeratelyStrong => "moderately strong support",
            Strength::Strong => "strong support",
            Strength::VeryStrong => "very strong support",
            Strength::ExtremelyStrong => "extremely strong support",
        }
    }

    /// Ladder for LRs of at least 1, bins lower-exclusive, upper-inclusive.
    fn for_magnitude(lr: f64) -> Strength {
        match lr {
            x if x <= 2.0 => Strength::None,
            x if x <= 10.0 => Strength::Weak,
            x if x <= 100.0 => Strength::Moderate,
            x if x <= 1_000.0 => Strength::ModeratelyStrong,
            x if x <= 10_000.0 => Strength::Strong,
            x if x <= 1_000_000.0 => Strength::VeryStrong,
            _ => Strength::ExtremelyStrong,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "h1")]
    H1,
    #[serde(rename = "h2")]
    H2,
    #[serde(rename = "neither")]
    Neither,
}

/// A verbal-scale conclusion. LRs below 0.5 use the same ladder applied to
/// `1/LR`, directed at H2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VerbalConclusion {
    pub direction: Direction,
    pub strength: Strength,
}

impl VerbalConclusion {
    pub fn label(&self) -> &'static str {
        self.strength.label()
    }
}

impl fmt::Display for VerbalConclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.direction {
            Direction::Neither => f.write_str(self.label()),
            Direction::H1 => write!(f, "{} for H1", self.label()),
            Direction::H2 => write!(f, "{} for H2", self.label()),
        }
    }
}

pub fn verbal_scale(lr: LRValue) -> VerbalConclusion {
    let v = lr.lr;
    if v < 0.5 {
        VerbalConclusion {
            direction: Direction::H2,
            strength: Strength::for_magnitude(1.0 / v),
        }
    } else if v <= 2.0 {
        VerbalConclusion {
            direction: Direction::Neither,
            strength: Strength::None,
        }
    } else {
        VerbalConclusion {
            direction: Direction::H1,
            strength: Strength::for_magnitude(v),
        }
    }
}
