//! Trained score model plus calibrator: a complete LR system for one
//! hypothesis pair, with JSON persistence.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augmentation::{AugmentCount, AugmentedDataset, BackgroundLevels, FeatureMode, HypothesisPair, DEFAULT_BACKGROUND};
use crate::calibrate::{self, fuse_coefficients, CalibrationOptions, Calibrator, LRValue};
use crate::classify::{train_binary_logreg, train_powerset_logreg, BinaryLogReg, PowersetLogReg, TrainingConfig};
use crate::error::{Error, Result};
use crate::profiles::{BodyFluid, LabelSet, MarkerPanel, Replicate};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    OneVsRest,
    PowerSet,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::OneVsRest, Strategy::PowerSet];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::OneVsRest => "one_vs_rest",
            Strategy::PowerSet => "power_set",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "one_vs_rest" | "ovr" => Ok(Strategy::OneVsRest),
            "power_set" | "powerset" => Ok(Strategy::PowerSet),
            other => Err(Error::Config(format!("unknown strategy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classifier {
    Binary(BinaryLogReg),
    Powerset(PowersetLogReg),
}

impl Classifier {
    pub fn strategy(&self) -> Strategy {
        match self {
            Classifier::Binary(_) => Strategy::OneVsRest,
            Classifier::Powerset(_) => Strategy::PowerSet,
        }
    }

    /// Clipped log10 score for `interest`.
    pub fn log10_score(&self, r: &[f64], interest: LabelSet) -> Result<f64> {
        let s = match self {
            Classifier::Binary(m) => m.log10_score(r)?,
            Classifier::Powerset(m) => m.score(r, interest)?.log10(),
        };
        Ok(s.clamp(calibrate::MIN_SCORE.log10(), calibrate::MAX_SCORE.log10()))
    }
}

/// Everything needed to turn a replicate set into a calibrated LR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSystem {
    pub format_version: u32,
    pub markers: Vec<String>,
    pub housekeeping: Vec<String>,
    pub threshold_rfu: f64,
    pub fluids: Vec<BodyFluid>,
    pub strategy: Strategy,
    pub hypothesis: HypothesisPair,
    /// Background levels the training data was generated under, with the
    /// hypothesis' fixed fluids already applied.
    pub background: BackgroundLevels,
    pub mode: FeatureMode,
    pub classifier: Classifier,
    pub calibrator: Calibrator,
    pub lambda: f64,
    pub seed: u64,
}

impl LrSystem {
    pub fn panel(&self) -> MarkerPanel {
        MarkerPanel {
            markers: self.markers.clone(),
            housekeeping: self.housekeeping.clone(),
            threshold_rfu: self.threshold_rfu,
        }
    }

    pub fn log10_score(&self, features: &[f64]) -> Result<f64> {
        self.classifier.log10_score(features, self.hypothesis.interest)
    }

    pub fn lr(&self, features: &[f64]) -> Result<LRValue> {
        Ok(self.calibrator.apply_log10(self.log10_score(features)?))
    }

    pub fn lr_from_replicates(&self, reps: &[Replicate]) -> Result<LRValue> {
        self.lr(&self.mode.features(reps, self.threshold_rfu)?)
    }

    /// The one-vs-rest model with calibration folded into its coefficients.
    pub fn fused(&self) -> Option<BinaryLogReg> {
        match &self.classifier {
            Classifier::Binary(m) => Some(fuse_coefficients(&self.calibrator, m)),
            Classifier::Powerset(_) => None,
        }
    }

    /// Human-readable key of the variant: interest, backgrounds, features,
    /// strategy.
    pub fn variant_key(&self) -> String {
        variant_key(self.hypothesis.interest, &self.background, self.mode, self.strategy)
    }

    pub fn variant_id(&self) -> String {
        variant_id(&self.variant_key())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let sys: LrSystem = serde_json::from_str(text)?;
        sys.validate()?;
        Ok(sys)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!("unsupported model format version {}", self.format_version)));
        }
        self.panel().validate()?;
        self.hypothesis.validate()?;
        self.background.validate()?;
        let p = self.markers.len();
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let ok = match &self.classifier {
            Classifier::Binary(m) => m.coefficients.len() == p && m.intercept.is_finite() && finite(&m.coefficients),
            Classifier::Powerset(m) => {
                m.classes.len() == m.intercepts.len() + 1
                    && m.coefficients.len() == m.intercepts.len()
                    && m.coefficients.iter().all(|c| c.len() == p && finite(c))
                    && finite(&m.intercepts)
            }
        };
        if !ok {
            return Err(Error::Data("model coefficients do not match the marker panel".into()));
        }
        if self.classifier.strategy() != self.strategy {
            return Err(Error::Data("model strategy tag does not match its classifier".into()));
        }
        if !(self.calibrator.a1 > 0.0) || !self.calibrator.a0.is_finite() || !self.calibrator.prior_log_odds.is_finite() {
            return Err(Error::Data("calibrator must have a finite positive slope".into()));
        }
        Ok(())
    }
}

pub fn variant_key(interest: LabelSet, bg: &BackgroundLevels, mode: FeatureMode, strategy: Strategy) -> String {
    format!("interest={interest};background={};mode={};strategy={strategy}", bg.key(), mode.name())
}

/// Short stable id derived from a variant key.
pub fn variant_id(key: &str) -> String {
    Sha256::digest(key.as_bytes())
        .iter()
        .take(6)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Count that makes an augmented set follow `bg`: every combination `n`
/// times when all uncertain fluids sit at 0.5, otherwise the same total
/// drawn at random.
pub fn count_for(bg: &BackgroundLevels, n: usize) -> AugmentCount {
    let uncertain = bg.uncertain();
    if uncertain.iter().all(|f| bg.get(f) == DEFAULT_BACKGROUND) {
        AugmentCount::PerCombination(n)
    } else {
        AugmentCount::Total((1usize << uncertain.len()) * n)
    }
}

/// Fits the score model for `hp` on an augmented training set. The power
/// set model ignores `hp` and can be shared between interest sets. Raw rfu
/// features are always standardized.
pub fn fit_classifier(train: &AugmentedDataset, hp: &HypothesisPair, strategy: Strategy, cfg: &TrainingConfig) -> Result<Classifier> {
    let cfg = &TrainingConfig {
        standardize: cfg.standardize || !train.mode().is_dichotomized(),
        ..*cfg
    };
    let x = train.features();
    match strategy {
        Strategy::OneVsRest => {
            let y: Vec<bool> = train.samples.iter().map(|s| hp.holds_h1(s.labels)).collect();
            Ok(Classifier::Binary(train_binary_logreg(&x, &y, cfg)?))
        }
        Strategy::PowerSet => Ok(Classifier::Powerset(train_powerset_logreg(&x, &train.labels(), cfg)?)),
    }
}

/// Calibrates `classifier` for `hp` on an augmented calibration set.
pub fn fit_system_calibrator(
    classifier: &Classifier,
    calibration: &AugmentedDataset,
    hp: &HypothesisPair,
    opts: CalibrationOptions,
) -> Result<Calibrator> {
    let mut scores = Vec::with_capacity(calibration.len());
    let mut flags = Vec::with_capacity(calibration.len());
    for s in &calibration.samples {
        scores.push(classifier.log10_score(&s.features, hp.interest)?);
        flags.push(hp.holds_h1(s.labels));
    }
    calibrate::fit_calibrator_with(&scores, &flags, opts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemOptions {
    pub training: TrainingConfig,
    pub calibration: CalibrationOptions,
    pub seed: u64,
}

/// Assembles a system from a fitted classifier.
pub fn assemble_system(
    classifier: Classifier,
    calibration: &AugmentedDataset,
    hp: &HypothesisPair,
    threshold_rfu: f64,
    opts: &SystemOptions,
) -> Result<LrSystem> {
    let calibrator = fit_system_calibrator(&classifier, calibration, hp, opts.calibration)?;
    let sys = LrSystem {
        format_version: FORMAT_VERSION,
        markers: calibration.markers.clone(),
        housekeeping: calibration.housekeeping.clone(),
        threshold_rfu,
        fluids: BodyFluid::ALL.to_vec(),
        strategy: classifier.strategy(),
        hypothesis: *hp,
        background: calibration.metadata.background,
        mode: calibration.metadata.mode,
        classifier,
        calibrator,
        lambda: opts.training.lambda,
        seed: opts.seed,
    };
    Ok(sys)
}

/// Trains and calibrates a system on two augmented sets.
pub fn train_system(
    train: &AugmentedDataset,
    calibration: &AugmentedDataset,
    hp: &HypothesisPair,
    strategy: Strategy,
    threshold_rfu: f64,
    opts: &SystemOptions,
) -> Result<LrSystem> {
    if train.markers != calibration.markers || train.mode() != calibration.mode() {
        return Err(Error::Data("training and calibration sets differ in panel or feature mode".into()));
    }
    let classifier = fit_classifier(train, hp, strategy, &opts.training)?;
    assemble_system(classifier, calibration, hp, threshold_rfu, opts)
}

/// Log10 LRs and H1 flags of a system on an augmented set.
pub fn evaluate_on(sys: &LrSystem, data: &AugmentedDataset) -> Result<(Vec<LRValue>, Vec<bool>)> {
    let mut lrs = Vec::with_capacity(data.len());
    let mut flags = Vec::with_capacity(data.len());
    for s in &data.samples {
        lrs.push(sys.lr(&s.features)?);
        flags.push(sys.hypothesis.holds_h1(s.labels));
    }
    Ok((lrs, flags))
}

/// Raw log10 scores, for checking that calibration preserves ranking.
pub fn log10_scores_on(sys: &LrSystem, data: &AugmentedDataset) -> Result<Vec<f64>> {
    data.samples.iter().map(|s| sys.log10_score(&s.features)).collect()
}
