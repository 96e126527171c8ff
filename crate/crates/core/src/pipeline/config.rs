use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augmentation::{BackgroundLevels, FeatureMode, SplitSpec};
use crate::calibrate::CalibrationOptions;
use crate::classify::TrainingConfig;
use crate::error::{Error, Result};
use crate::fixtures;
use crate::metrics::DEFAULT_CAP;
use crate::profiles::{parse_profile_table, read_rate_table, synthesize_dataset, BodyFluid, Dataset, LabelSet, MarkerPanel};
use crate::seed::{self, streams};
use crate::system::Strategy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSpec {
    /// Rate table CSV; the built-in single-fluid table when absent.
    pub rates: Option<PathBuf>,
    pub samples_per_fluid: usize,
    pub replicates: usize,
}

impl Default for SynthesisSpec {
    fn default() -> Self {
        SynthesisSpec {
            rates: None,
            samples_per_fluid: 30,
            replicates: 4,
        }
    }
}

/// Where single-fluid profiles come from: a CSV file or synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesize: Option<SynthesisSpec>,
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource {
            csv: None,
            synthesize: Some(SynthesisSpec::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationCounts {
    pub train: usize,
    pub calibration: usize,
    pub test: usize,
}

impl Default for AugmentationCounts {
    fn default() -> Self {
        AugmentationCounts {
            train: 10,
            calibration: 10,
            test: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dichotomization {
    On,
    Off,
}

impl Dichotomization {
    pub fn mode(self) -> FeatureMode {
        match self {
            Dichotomization::On => FeatureMode::Dichotomized,
            Dichotomization::Off => FeatureMode::Raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub runs: usize,
    pub data: DataSource,
    pub split: SplitSpec,
    pub augmentation: AugmentationCounts,
    pub background: BackgroundLevels,
    pub strategies: Vec<Strategy>,
    pub dichotomization: Vec<Dichotomization>,
    pub interest_sets: Vec<LabelSet>,
    pub cap: f64,
    pub training: TrainingConfig,
    pub calibration: CalibrationOptions,
    /// Directory relative data paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            runs: 10,
            data: DataSource::default(),
            split: SplitSpec::default(),
            augmentation: AugmentationCounts::default(),
            background: BackgroundLevels::default(),
            strategies: vec![Strategy::OneVsRest],
            dichotomization: vec![Dichotomization::On],
            interest_sets: vec![LabelSet::from_iter([BodyFluid::VaginalMucosa, BodyFluid::MenstrualSecretion])],
            cap: DEFAULT_CAP,
            training: TrainingConfig::default(),
            calibration: CalibrationOptions::default(),
            base_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config; relative paths inside resolve against its
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.strategies.is_empty() || self.dichotomization.is_empty() || self.interest_sets.is_empty() {
            return Err(Error::Config(
                "need at least one strategy, one dichotomization setting and one interest set".into(),
            ));
        }
        if let Some(empty) = self.interest_sets.iter().find(|s| s.is_empty()) {
            return Err(Error::Config(format!("interest set '{empty}' is empty")));
        }
        if !(self.split.test > 0.0) {
            return Err(Error::Config("experiments need a positive test fraction".into()));
        }
        self.split.validate()?;
        self.background.validate()?;
        self.training.validate()?;
        let a = self.augmentation;
        if a.train == 0 || a.calibration == 0 || a.test == 0 {
            return Err(Error::Config("augmentation counts must be positive".into()));
        }
        if !(self.cap > 1.0) || !self.cap.is_finite() {
            return Err(Error::Config(format!("cap must be a finite value above 1, got {}", self.cap)));
        }
        match (&self.data.csv, &self.data.synthesize) {
            (Some(_), None) | (None, Some(_)) => Ok(()),
            _ => Err(Error::Config("data needs exactly one of csv or synthesize".into())),
        }
    }

    /// Feature modes in configuration order, duplicates removed.
    pub fn modes(&self) -> Vec<FeatureMode> {
        let mut out: Vec<FeatureMode> = Vec::new();
        for d in &self.dichotomization {
            if !out.contains(&d.mode()) {
                out.push(d.mode());
            }
        }
        out
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Short hash of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Loads or synthesizes the single-fluid profiles.
    pub fn load_singles(&self) -> Result<Dataset> {
        let panel = MarkerPanel::default();
        if let Some(p) = &self.data.csv {
            let path = self.resolve(p);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            return Ok(parse_profile_table(&text, &panel)?.0);
        }
        let spec = self.data.synthesize.clone().unwrap_or_default();
        let rates = match &spec.rates {
            Some(p) => {
                let path = self.resolve(p);
                read_rate_table(&std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?)?
            }
            None => fixtures::reference_rates(),
        };
        synthesize_dataset(
            &rates,
            &panel,
            spec.samples_per_fluid,
            spec.replicates,
            seed::derive_seed(self.seed, &[streams::SYNTHESIS]),
        )
    }
}
