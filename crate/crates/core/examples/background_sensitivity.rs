//! Shifts one fluid's background level at training time and reports how
//! far the test log10 LRs move.
//!
//! cargo run --release --example background_sensitivity [fluid] [level]

use mixlr::pipeline::{sensitivity_analysis, ExperimentConfig};
use mixlr::profiles::BodyFluid;

fn main() -> mixlr::Result<()> {
    let mut args = std::env::args().skip(1);
    let fluid: BodyFluid = args.next().as_deref().unwrap_or("blood").parse()?;
    let level = args.next().and_then(|a| a.parse().ok()).unwrap_or(0.9);
    let cfg = ExperimentConfig {
        runs: 3,
        seed: 11,
        ..ExperimentConfig::default()
    };
    let report = sensitivity_analysis(&cfg, fluid, level)?;
    for s in &report.summaries {
        println!(
            "{} {} {}: median |delta log10 LR| {:.3} over {} test mixtures",
            s.strategy,
            s.mode.name(),
            s.interest,
            s.median_abs_delta,
            s.rows
        );
    }
    println!("{fluid} at {level}: overall median {:.3}", report.median_abs_delta);
    Ok(())
}
