//! The `mixlr` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use mixlr::augmentation::{BackgroundLevels, HypothesisPair};
use mixlr::casework::{evaluate_case, CaseObservation, ModelStore};
use mixlr::classify::TrainingConfig;
use mixlr::fixtures;
use mixlr::pipeline::{
    run_experiment, sensitivity_analysis, train_from_singles, write_report, write_sensitivity, ExperimentConfig,
    FitOptions,
};
use mixlr::profiles::{
    parse_profile_table, read_rate_table, synthesize_dataset, write_profile_table, BodyFluid, Dataset, LabelSet,
    MarkerPanel,
};
use mixlr::system::{LrSystem, Strategy};
use mixlr::{Error, ErrorKind, Result};

use crate::service::{self, AppState};

#[derive(Debug, Parser)]
#[command(name = "mixlr", version, about = "Calibrated likelihood ratios for body-fluid mixtures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate single-fluid profiles from a detection-rate table.
    Synth {
        /// Rate table CSV (`fluid_labels,<markers>`); the built-in table if omitted.
        #[arg(long)]
        rates: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        per_fluid: usize,
        #[arg(long, default_value_t = 4)]
        replicates: usize,
    },
    /// Run a seeded experiment grid and write its report files.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and calibrate one system from single-fluid profiles.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Fluids of interest, comma or '+' separated.
        #[arg(long)]
        interest: String,
        #[arg(long, default_value = "one-vs-rest")]
        strategy: String,
        /// Dichotomize at the detection threshold (otherwise mean rfu).
        #[arg(long)]
        dichotomize: bool,
        /// Background overrides such as `penile=1,blood=0.9`.
        #[arg(long, default_value = "")]
        background: String,
        #[arg(long, default_value = "")]
        fixed_present: String,
        #[arg(long, default_value = "")]
        fixed_absent: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        per_combination: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a case file with a trained one-vs-rest model.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        case: PathBuf,
        /// Print the report as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Compare systems trained under shifted and configured backgrounds.
    Sensitivity {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        fluid: String,
        #[arg(long, default_value_t = 0.9)]
        level: f64,
        /// Directory for sensitivity.csv and sensitivity.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API over a directory of model files.
    Serve {
        #[arg(long, env = "MIXLR_MODEL_DIR")]
        model_dir: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Single-fluid profiles for training missing variants on demand.
        #[arg(long)]
        train_data: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Data(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, body).map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
}

fn load_singles(path: &Path) -> Result<Dataset> {
    Ok(parse_profile_table(&read(path)?, &MarkerPanel::default())?.0)
}

fn fluid_list(s: &str) -> Result<LabelSet> {
    s.parse()
}

/// Runs one command, writing human-readable output to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let say = |out: &mut dyn Write, msg: String| {
        let _ = writeln!(out, "{msg}");
    };
    match cli.command {
        Command::Synth {
            rates,
            out: path,
            seed,
            per_fluid,
            replicates,
        } => {
            let table = match rates {
                Some(p) => read_rate_table(&read(&p)?)?,
                None => fixtures::reference_rates(),
            };
            let ds = synthesize_dataset(&table, &MarkerPanel::default(), per_fluid, replicates, seed)?;
            write(&path, &write_profile_table(&ds))?;
            say(out, format!("wrote {} samples to {}", ds.len(), path.display()));
        }
        Command::Experiment { config, out: dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg)?;
            write_report(&report, &dir)?;
            for s in &report.summaries {
                say(
                    out,
                    format!(
                        "{} {} {}: Cllr median {:.3} [{:.3}, {:.3}] over {} runs",
                        s.strategy,
                        s.mode.name(),
                        s.interest,
                        s.cllr.median,
                        s.cllr.min,
                        s.cllr.max,
                        s.runs
                    ),
                );
            }
            say(out, format!("report {} written to {}", report.config_hash, dir.display()));
        }
        Command::Train {
            data,
            interest,
            strategy,
            dichotomize,
            background,
            fixed_present,
            fixed_absent,
            seed,
            per_combination,
            out: path,
        } => {
            let singles = load_singles(&data)?;
            let hp = HypothesisPair::with_fixed(
                fluid_list(&interest)?,
                fluid_list(&fixed_present)?,
                fluid_list(&fixed_absent)?,
            )?;
            let opts = FitOptions {
                strategy: strategy.parse::<Strategy>()?,
                mode: if dichotomize {
                    mixlr::augmentation::FeatureMode::Dichotomized
                } else {
                    mixlr::augmentation::FeatureMode::Raw
                },
                background: BackgroundLevels::default().apply_overrides(&background)?,
                per_combination,
                seed,
                training: TrainingConfig::default(),
                ..FitOptions::default()
            };
            let sys = train_from_singles(&singles, &hp, &opts)?;
            sys.save(&path)?;
            say(out, format!("wrote model {} ({}) to {}", sys.variant_id(), sys.variant_key(), path.display()));
        }
        Command::Evaluate { model, case, json } => {
            let sys = LrSystem::load(&model)?;
            let obs: CaseObservation = serde_json::from_str(&read(&case)?)?;
            let report = evaluate_case(&sys, &obs, &sys.hypothesis)?;
            if json {
                say(out, report.to_json()?);
            } else {
                let _ = write!(out, "{}", report.to_text());
            }
        }
        Command::Sensitivity {
            config,
            fluid,
            level,
            out: dir,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let fluid: BodyFluid = fluid.parse()?;
            let report = sensitivity_analysis(&cfg, fluid, level)?;
            if let Some(dir) = &dir {
                write_sensitivity(&report, dir)?;
            }
            for s in &report.summaries {
                say(
                    out,
                    format!(
                        "{} {} {}: median |delta log10 LR| {:.3} over {} test samples",
                        s.strategy,
                        s.mode.name(),
                        s.interest,
                        s.median_abs_delta,
                        s.rows
                    ),
                );
            }
            say(out, format!("{fluid} at {level}: overall median |delta log10 LR| {:.3}", report.median_abs_delta));
        }
        Command::Serve {
            model_dir,
            port,
            host,
            train_data,
            seed,
        } => {
            let mut store = ModelStore::load_dir(&model_dir)?;
            if let Some(p) = train_data {
                let singles = Arc::new(load_singles(&p)?);
                store = store.with_trainer(Box::new(move |q| {
                    let hp = HypothesisPair::new(q.interest)?;
                    let opts = FitOptions {
                        strategy: q.strategy,
                        mode: q.mode.unwrap_or(mixlr::augmentation::FeatureMode::Dichotomized),
                        background: q.background,
                        seed,
                        ..FitOptions::default()
                    };
                    train_from_singles(&singles, &hp, &opts)
                }));
            }
            say(out, format!("loaded {} model variants from {}", store.len(), model_dir.display()));
            let state = Arc::new(AppState::new(store));
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Data(e.to_string()))?;
            rt.block_on(service::serve(state, (host, port).into()))
                .map_err(|e| Error::Data(format!("server error: {e}")))?;
        }
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
