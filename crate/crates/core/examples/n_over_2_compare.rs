//! Compares the n/2 replicate rule with the model's verbal conclusions on
//! synthetic casework-like observations.

use mixlr::augmentation::{build_augmented_dataset, BackgroundLevels, FeatureMode};
use mixlr::casework::{n_over_2, CaseObservation, CaseOptions, MarkerFluidMap};
use mixlr::fixtures;
use mixlr::pipeline::{compare_with_n_over_2, ExperimentConfig};
use mixlr::system::count_for;

fn main() -> mixlr::Result<()> {
    let sys = fixtures::reference_system();
    let map = MarkerFluidMap::default();
    let panel = sys.panel();

    let case = fixtures::worked_case(1);
    for f in sys.hypothesis.interest.iter() {
        let r = n_over_2(&case, mixlr::profiles::LabelSet::single(f), &map)?;
        println!("case 1, {f}: {}", r.verdict.label());
    }

    let singles = ExperimentConfig::default().load_singles()?;
    let bg = BackgroundLevels::default();
    let mixtures = build_augmented_dataset(&singles, &bg, count_for(&bg, 1), FeatureMode::Raw, 5)?;
    let cases = mixtures
        .samples
        .iter()
        .map(|s| CaseObservation::from_replicates(&panel, &s.replicates))
        .collect::<mixlr::Result<Vec<_>>>()?;
    let table = compare_with_n_over_2(&sys, &cases, &sys.hypothesis, &map, CaseOptions::default())?;
    println!("\n{} mixtures", table.total());
    print!("{}", table.to_csv());
    Ok(())
}
