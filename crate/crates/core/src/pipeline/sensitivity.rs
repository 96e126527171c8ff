use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{mode_code, run_data, ExperimentConfig};
use crate::augmentation::{build_augmented_dataset, split_dataset, FeatureMode, HypothesisPair};
use crate::error::{Error, Result};
use crate::profiles::{BodyFluid, LabelSet};
use crate::seed::{self, streams};
use crate::system::{count_for, evaluate_on, train_system, Strategy, SystemOptions};

/// LRs of the uniform-background and shifted-background systems on one
/// test sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityRow {
    pub run: usize,
    pub strategy: Strategy,
    pub mode: FeatureMode,
    pub interest: LabelSet,
    pub log10_lr_uniform: f64,
    pub log10_lr_shifted: f64,
    pub is_h1: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivitySummary {
    pub strategy: Strategy,
    pub mode: FeatureMode,
    pub interest: LabelSet,
    pub rows: usize,
    pub median_abs_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub config_hash: String,
    pub fluid: BodyFluid,
    pub level: f64,
    pub rows: Vec<SensitivityRow>,
    pub summaries: Vec<SensitivitySummary>,
    /// Median |log10 LR difference| over all rows.
    pub median_abs_delta: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Trains each configured system twice per run, once under the configured
/// backgrounds and once with `fluid` at `level`, and compares both on the
/// same test set generated under the configured backgrounds.
pub fn sensitivity_analysis(cfg: &ExperimentConfig, fluid: BodyFluid, level: f64) -> Result<SensitivityReport> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::Config(format!("background level must lie in [0, 1], got {level}")));
    }
    if let Some(i) = cfg.interest_sets.iter().find(|i| i.contains(fluid)) {
        return Err(Error::Config(format!("{fluid} is a fluid of interest in {i}; shift another fluid")));
    }
    let shifted_bg = cfg.background.with(fluid, level);
    shifted_bg.validate()?;
    let singles = cfg.load_singles()?;
    let a = cfg.augmentation;

    let per_run: Vec<Vec<SensitivityRow>> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| -> Result<Vec<SensitivityRow>> {
            let mut rows = Vec::new();
            let r = run as u64;
            let opts = SystemOptions {
                training: cfg.training,
                calibration: cfg.calibration,
                seed: seed::derive_seed(cfg.seed, &[r]),
            };
            let parts = split_dataset(&singles, &cfg.split, &mut seed::rng_for(cfg.seed, &[r, streams::SPLIT]))?;
            for mode in cfg.modes() {
                let base = run_data(&singles, cfg, r, mode)?;
                let m = mode_code(mode);
                let shifted_train = build_augmented_dataset(
                    &parts.train,
                    &shifted_bg,
                    count_for(&shifted_bg, a.train),
                    mode,
                    seed::derive_seed(cfg.seed, &[r, streams::SENSITIVITY_TRAIN, m]),
                )?;
                let shifted_calibration = build_augmented_dataset(
                    &parts.calibration,
                    &shifted_bg,
                    count_for(&shifted_bg, a.calibration),
                    mode,
                    seed::derive_seed(cfg.seed, &[r, streams::SENSITIVITY_CALIBRATION, m]),
                )?;
                for &strategy in &cfg.strategies {
                    for &interest in &cfg.interest_sets {
                        let hp = HypothesisPair::new(interest)?;
                        let t = singles.panel.threshold_rfu;
                        let uniform = train_system(&base.train, &base.calibration, &hp, strategy, t, &opts)?;
                        let shifted = train_system(&shifted_train, &shifted_calibration, &hp, strategy, t, &opts)?;
                        let (lu, flags) = evaluate_on(&uniform, &base.test)?;
                        let (ls, _) = evaluate_on(&shifted, &base.test)?;
                        for ((u, s), h) in lu.iter().zip(&ls).zip(flags) {
                            rows.push(SensitivityRow {
                                run,
                                strategy,
                                mode,
                                interest,
                                log10_lr_uniform: u.log10_lr,
                                log10_lr_shifted: s.log10_lr,
                                is_h1: h,
                            });
                        }
                    }
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<SensitivityRow> = per_run.into_iter().flatten().collect();

    let mut summaries = Vec::new();
    for mode in cfg.modes() {
        for &strategy in &cfg.strategies {
            for &interest in &cfg.interest_sets {
                let deltas: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.mode == mode && r.strategy == strategy && r.interest == interest)
                    .map(|r| (r.log10_lr_shifted - r.log10_lr_uniform).abs())
                    .collect();
                summaries.push(SensitivitySummary {
                    strategy,
                    mode,
                    interest,
                    rows: deltas.len(),
                    median_abs_delta: median(deltas),
                });
            }
        }
    }
    let all: Vec<f64> = rows
        .iter()
        .map(|r| (r.log10_lr_shifted - r.log10_lr_uniform).abs())
        .collect();
    Ok(SensitivityReport {
        config_hash: cfg.hash(),
        fluid,
        level,
        median_abs_delta: median(all),
        rows,
        summaries,
    })
}

impl SensitivityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("config_hash,fluid,level,run,strategy,mode,interest,log10_lr_uniform,log10_lr_shifted,is_h1\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                self.config_hash,
                self.fluid,
                self.level,
                r.run,
                r.strategy,
                r.mode.name(),
                r.interest,
                r.log10_lr_uniform,
                r.log10_lr_shifted,
                u8::from(r.is_h1)
            );
        }
        out
    }
}

/// Writes `sensitivity.csv` and `sensitivity.json` into `dir`.
pub fn write_sensitivity(report: &SensitivityReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("sensitivity.csv");
    std::fs::write(&csv_path, report.to_csv()).map_err(|e| Error::io(&csv_path, e))?;
    let json_path = dir.join("sensitivity.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(report)? + "\n").map_err(|e| Error::io(&json_path, e))
}
