//! Seeded experiment runner: repeated split, augment, train, calibrate and
//! evaluate cycles over a grid of strategies, feature modes and interest
//! sets, plus the sensitivity and n/2 comparisons.

mod compare;
mod config;
mod experiment;
mod sensitivity;

pub use compare::{compare_with_n_over_2, ContingencyTable};
pub use config::{
    AugmentationCounts, DataSource, Dichotomization, ExperimentConfig, SynthesisSpec,
};
pub use experiment::{
    run_experiment, write_report, CellSummary, CllrSummary, ExperimentReport, ExperimentRow, TippettEntry,
};
pub use sensitivity::{sensitivity_analysis, write_sensitivity, SensitivityReport, SensitivityRow, SensitivitySummary};

use crate::augmentation::{
    build_augmented_dataset, split_dataset, AugmentedDataset, BackgroundLevels, FeatureMode, HypothesisPair, SplitSpec,
};
use crate::calibrate::CalibrationOptions;
use crate::classify::TrainingConfig;
use crate::error::Result;
use crate::profiles::Dataset;
use crate::seed::{self, streams};
use crate::system::{count_for, train_system, LrSystem, Strategy, SystemOptions};

/// Stable per-mode code for seed paths.
pub fn mode_code(mode: FeatureMode) -> u64 {
    match mode {
        FeatureMode::Raw => 0,
        FeatureMode::Dichotomized => 1,
        FeatureMode::DichotomizedAfterMean => 2,
    }
}

/// Options for fitting one system outside an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub strategy: Strategy,
    pub mode: FeatureMode,
    pub background: BackgroundLevels,
    /// Augmented samples per label combination (scaled to a total when the
    /// levels are not all 0.5).
    pub per_combination: usize,
    /// Share of singles used for training; the rest calibrates.
    pub train_fraction: f64,
    pub training: TrainingConfig,
    pub calibration: CalibrationOptions,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            strategy: Strategy::OneVsRest,
            mode: FeatureMode::Dichotomized,
            background: BackgroundLevels::default(),
            per_combination: 10,
            train_fraction: 0.5,
            training: TrainingConfig::default(),
            calibration: CalibrationOptions::default(),
            seed: 0,
        }
    }
}

/// Splits singles into training and calibration parts, augments both under
/// the hypothesis' effective backgrounds and fits a calibrated system.
pub fn train_from_singles(singles: &Dataset, hp: &HypothesisPair, opts: &FitOptions) -> Result<LrSystem> {
    hp.validate()?;
    let spec = SplitSpec::train_calibration(opts.train_fraction);
    let parts = split_dataset(singles, &spec, &mut seed::rng_for(opts.seed, &[0, streams::SPLIT]))?;
    let bg = hp.effective_background(&opts.background);
    let count = count_for(&bg, opts.per_combination);
    let m = mode_code(opts.mode);
    let train = build_augmented_dataset(
        &parts.train,
        &bg,
        count,
        opts.mode,
        seed::derive_seed(opts.seed, &[0, streams::AUGMENT_TRAIN, m]),
    )?;
    let calibration = build_augmented_dataset(
        &parts.calibration,
        &bg,
        count,
        opts.mode,
        seed::derive_seed(opts.seed, &[0, streams::AUGMENT_CALIBRATION, m]),
    )?;
    let sys_opts = SystemOptions {
        training: opts.training,
        calibration: opts.calibration,
        seed: opts.seed,
    };
    train_system(&train, &calibration, hp, opts.strategy, singles.panel.threshold_rfu, &sys_opts)
}

/// The three augmented sets of one run.
pub(crate) struct RunData {
    pub train: AugmentedDataset,
    pub calibration: AugmentedDataset,
    pub test: AugmentedDataset,
}

pub(crate) fn run_data(
    singles: &Dataset,
    cfg: &ExperimentConfig,
    run: u64,
    mode: FeatureMode,
) -> Result<RunData> {
    let parts = split_dataset(singles, &cfg.split, &mut seed::rng_for(cfg.seed, &[run, streams::SPLIT]))?;
    let bg = cfg.background;
    let m = mode_code(mode);
    let a = &cfg.augmentation;
    let build = |ds: &Dataset, n: usize, stream: u64| {
        build_augmented_dataset(ds, &bg, count_for(&bg, n), mode, seed::derive_seed(cfg.seed, &[run, stream, m]))
    };
    Ok(RunData {
        train: build(&parts.train, a.train, streams::AUGMENT_TRAIN)?,
        calibration: build(&parts.calibration, a.calibration, streams::AUGMENT_CALIBRATION)?,
        test: build(&parts.test, a.test, streams::AUGMENT_TEST)?,
    })
}
