use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{run_data, ExperimentConfig};
use crate::augmentation::{FeatureMode, HypothesisPair};
use crate::calibrate::LRValue;
use crate::error::{Error, Result};
use crate::metrics::{cap_lr, cllr, metric_report, roc_auc, tippett, TippettCurve};
use crate::profiles::{Dataset, LabelSet};
use crate::seed;
use crate::system::{assemble_system, evaluate_on, fit_classifier, log10_scores_on, Strategy, SystemOptions};

/// One grid cell of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub config_hash: String,
    pub run: usize,
    pub run_seed: u64,
    pub strategy: Strategy,
    pub mode: FeatureMode,
    pub interest: LabelSet,
    pub cllr: f64,
    pub cllr_capped: f64,
    pub auc: f64,
    /// AUC of the uncalibrated scores.
    pub raw_auc: f64,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub n_h1: usize,
    pub n_h2: usize,
    pub a0: f64,
    pub a1: f64,
    pub prior_log_odds: f64,
    pub n_train: usize,
    pub n_calibration: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TippettEntry {
    pub run: usize,
    pub strategy: Strategy,
    pub mode: FeatureMode,
    pub interest: LabelSet,
    pub curve: TippettCurve,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CllrSummary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub mean: f64,
}

impl CllrSummary {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        CllrSummary {
            min: v[0],
            median,
            max: v[n - 1],
            mean: v.iter().sum::<f64>() / n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub strategy: Strategy,
    pub mode: FeatureMode,
    pub interest: LabelSet,
    pub runs: usize,
    pub cllr: CllrSummary,
    pub mean_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub master_seed: u64,
    pub config: ExperimentConfig,
    pub rows: Vec<ExperimentRow>,
    pub summaries: Vec<CellSummary>,
    pub tippett: Vec<TippettEntry>,
}

fn split_by_flag(lrs: &[LRValue], flags: &[bool]) -> (Vec<LRValue>, Vec<LRValue>) {
    let mut h1 = Vec::new();
    let mut h2 = Vec::new();
    for (l, &f) in lrs.iter().zip(flags) {
        if f {
            h1.push(*l);
        } else {
            h2.push(*l);
        }
    }
    (h1, h2)
}

fn run_one(singles: &Dataset, cfg: &ExperimentConfig, hash: &str, run: usize) -> Result<Vec<(ExperimentRow, TippettEntry)>> {
    let mut out = Vec::new();
    let sys_opts = SystemOptions {
        training: cfg.training,
        calibration: cfg.calibration,
        seed: seed::derive_seed(cfg.seed, &[run as u64]),
    };
    for mode in cfg.modes() {
        let data = run_data(singles, cfg, run as u64, mode)?;
        for &strategy in &cfg.strategies {
            let shared = match strategy {
                Strategy::PowerSet => {
                    let any = HypothesisPair::new(cfg.interest_sets[0])?;
                    Some(fit_classifier(&data.train, &any, strategy, &cfg.training)?)
                }
                Strategy::OneVsRest => None,
            };
            for &interest in &cfg.interest_sets {
                let context = |e: Error| {
                    Error::Data(format!("run {run}, {strategy}, {}, interest {interest}: {e}", mode.name()))
                };
                let hp = HypothesisPair::new(interest)?;
                let classifier = match &shared {
                    Some(c) => c.clone(),
                    None => fit_classifier(&data.train, &hp, strategy, &cfg.training).map_err(context)?,
                };
                let sys = assemble_system(classifier, &data.calibration, &hp, singles.panel.threshold_rfu, &sys_opts)
                    .map_err(context)?;
                let (lrs, flags) = evaluate_on(&sys, &data.test)?;
                let report = metric_report(&lrs, &flags).map_err(context)?;
                let raw = roc_auc(&log10_scores_on(&sys, &data.test)?, &flags)?;
                let capped: Vec<LRValue> = lrs.iter().map(|l| cap_lr(*l, cfg.cap)).collect::<Result<_>>()?;
                let (c1, c2) = split_by_flag(&capped, &flags);
                let (h1, h2) = split_by_flag(&lrs, &flags);
                out.push((
                    ExperimentRow {
                        config_hash: hash.to_string(),
                        run,
                        run_seed: sys_opts.seed,
                        strategy,
                        mode,
                        interest,
                        cllr: report.cllr,
                        cllr_capped: cllr(&c1, &c2)?,
                        auc: report.auc,
                        raw_auc: raw.auc,
                        fp_rate: report.fp_rate,
                        fn_rate: report.fn_rate,
                        n_h1: report.n_h1,
                        n_h2: report.n_h2,
                        a0: sys.calibrator.a0,
                        a1: sys.calibrator.a1,
                        prior_log_odds: sys.calibrator.prior_log_odds,
                        n_train: data.train.len(),
                        n_calibration: data.calibration.len(),
                        n_test: data.test.len(),
                    },
                    TippettEntry {
                        run,
                        strategy,
                        mode,
                        interest,
                        curve: tippett(&h1, &h2)?,
                    },
                ));
            }
        }
    }
    Ok(out)
}

/// Runs every grid cell for every run. Runs execute in parallel; results
/// are assembled in (run, mode, strategy, interest) order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let singles = cfg.load_singles()?;
    let hash = cfg.hash();
    let per_run: Vec<Vec<(ExperimentRow, TippettEntry)>> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| run_one(&singles, cfg, &hash, run))
        .collect::<Result<_>>()?;
    let (rows, tippett): (Vec<_>, Vec<_>) = per_run.into_iter().flatten().unzip();

    let mut cells: BTreeMap<(usize, usize, usize), Vec<&ExperimentRow>> = BTreeMap::new();
    let modes = cfg.modes();
    for r in &rows {
        let key = (
            modes.iter().position(|m| *m == r.mode).unwrap_or(0),
            cfg.strategies.iter().position(|s| *s == r.strategy).unwrap_or(0),
            cfg.interest_sets.iter().position(|i| *i == r.interest).unwrap_or(0),
        );
        cells.entry(key).or_default().push(r);
    }
    let summaries = cells
        .into_values()
        .map(|rs| {
            let c: Vec<f64> = rs.iter().map(|r| r.cllr).collect();
            CellSummary {
                strategy: rs[0].strategy,
                mode: rs[0].mode,
                interest: rs[0].interest,
                runs: rs.len(),
                cllr: CllrSummary::of(&c),
                mean_auc: rs.iter().map(|r| r.auc).sum::<f64>() / rs.len() as f64,
            }
        })
        .collect();
    Ok(ExperimentReport {
        config_hash: hash,
        master_seed: cfg.seed,
        config: cfg.clone(),
        rows,
        summaries,
        tippett,
    })
}

impl ExperimentReport {
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from(
            "config_hash,run,run_seed,strategy,mode,interest,cllr,cllr_capped,auc,raw_auc,fp_rate,fn_rate,n_h1,n_h2,a0,a1,prior_log_odds,n_train,n_calibration,n_test\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.config_hash,
                r.run,
                r.run_seed,
                r.strategy,
                r.mode.name(),
                r.interest,
                r.cllr,
                r.cllr_capped,
                r.auc,
                r.raw_auc,
                r.fp_rate,
                r.fn_rate,
                r.n_h1,
                r.n_h2,
                r.a0,
                r.a1,
                r.prior_log_odds,
                r.n_train,
                r.n_calibration,
                r.n_test
            );
        }
        out
    }

    pub fn tippett_csv(&self) -> String {
        let mut out = String::from("config_hash,run,strategy,mode,interest,threshold,fraction_h1,fraction_h2\n");
        for t in &self.tippett {
            let c = &t.curve;
            for ((x, a), b) in c.thresholds.iter().zip(&c.fraction_h1).zip(&c.fraction_h2) {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{x},{a},{b}",
                    self.config_hash,
                    t.run,
                    t.strategy,
                    t.mode.name(),
                    t.interest
                );
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("config_hash,strategy,mode,interest,runs,cllr_min,cllr_median,cllr_max,cllr_mean,mean_auc\n");
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                self.config_hash,
                s.strategy,
                s.mode.name(),
                s.interest,
                s.runs,
                s.cllr.min,
                s.cllr.median,
                s.cllr.max,
                s.cllr.mean,
                s.mean_auc
            );
        }
        out
    }
}

/// Writes `metrics.csv`, `tippett.csv`, `summary.csv` and `report.json`
/// into `dir`, creating it if needed.
pub fn write_report(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        ("metrics.csv", report.metrics_csv()),
        ("tippett.csv", report.tippett_csv()),
        ("summary.csv", report.summary_csv()),
        ("report.json", serde_json::to_string_pretty(report)? + "\n"),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
