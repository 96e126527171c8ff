//! Ten seeded runs of the default grid on synthetic singles, printing the
//! per-run Cllr and the aggregate.
//!
//! cargo run --release --example experiment_grid [runs]

use mixlr::pipeline::{run_experiment, ExperimentConfig};

fn main() -> mixlr::Result<()> {
    let runs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let cfg = ExperimentConfig {
        runs,
        seed: 2024,
        ..ExperimentConfig::default()
    };
    let started = std::time::Instant::now();
    let report = run_experiment(&cfg)?;
    for r in &report.rows {
        println!(
            "run {:2}  {}  {:<14} {:<34} Cllr {:.3}  AUC {:.3}  a1 {:.3}",
            r.run,
            r.strategy,
            r.mode.name(),
            r.interest.to_string(),
            r.cllr,
            r.auc,
            r.a1
        );
    }
    for s in &report.summaries {
        println!(
            "{} {} {}: Cllr median {:.3} (min {:.3}, max {:.3})",
            s.strategy,
            s.mode.name(),
            s.interest,
            s.cllr.median,
            s.cllr.min,
            s.cllr.max
        );
    }
    println!("config {} in {:.1?}", report.config_hash, started.elapsed());
    Ok(())
}
