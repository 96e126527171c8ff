//! Trains one-vs-rest and power-set score models for vaginal mucosa or
//! menstrual secretion, calibrates them and shows the fused per-marker
//! coefficients.

use mixlr::augmentation::{build_augmented_dataset, BackgroundLevels, FeatureMode, HypothesisPair};
use mixlr::fixtures;
use mixlr::metrics::metric_report;
use mixlr::pipeline::ExperimentConfig;
use mixlr::system::{count_for, evaluate_on, train_system, Strategy, SystemOptions};

fn main() -> mixlr::Result<()> {
    let cfg = ExperimentConfig::default();
    let singles = cfg.load_singles()?;
    let hp = HypothesisPair::new(fixtures::reference_interest())?;
    let bg = hp.effective_background(&BackgroundLevels::default());
    let mode = FeatureMode::Dichotomized;
    let set = |n, seed| build_augmented_dataset(&singles, &bg, count_for(&bg, n), mode, seed);
    let (train, calib, test) = (set(4, 1)?, set(4, 2)?, set(2, 3)?);

    for strategy in [Strategy::OneVsRest, Strategy::PowerSet] {
        let opts = SystemOptions {
            training: Default::default(),
            calibration: Default::default(),
            seed: 1,
        };
        let sys = train_system(&train, &calib, &hp, strategy, singles.panel.threshold_rfu, &opts)?;
        let (lrs, flags) = evaluate_on(&sys, &test)?;
        let m = metric_report(&lrs, &flags)?;
        let c = sys.calibrator;
        println!(
            "{strategy}: a0 {:.3} a1 {:.3}  Cllr {:.3} AUC {:.3} on {} test mixtures",
            c.a0,
            c.a1,
            m.cllr,
            m.auc,
            test.len()
        );
        if let Some(fused) = sys.fused() {
            println!("  fused intercept {:+.2}", fused.intercept);
            for (name, w) in sys.markers.iter().zip(&fused.coefficients) {
                println!("  {name:<9} {w:+.2}");
            }
        }
    }
    Ok(())
}
