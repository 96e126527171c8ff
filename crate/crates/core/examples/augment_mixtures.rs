//! Builds in-silico mixtures from synthetic singles under default and
//! shifted background levels and reports how often each fluid appears.

use mixlr::augmentation::{build_augmented_dataset, BackgroundLevels, FeatureMode};
use mixlr::pipeline::ExperimentConfig;
use mixlr::profiles::BodyFluid;
use mixlr::system::count_for;

fn main() -> mixlr::Result<()> {
    let singles = ExperimentConfig::default().load_singles()?;
    for bg in [
        BackgroundLevels::default(),
        BackgroundLevels::default().with(BodyFluid::Blood, 0.9).with(BodyFluid::SkinPenile, 0.0),
    ] {
        let ads = build_augmented_dataset(&singles, &bg, count_for(&bg, 1), FeatureMode::Dichotomized, 3)?;
        println!("backgrounds {}: {} mixtures", bg.key(), ads.len());
        let mut hits = [0usize; BodyFluid::COUNT];
        for s in &ads.samples {
            for f in s.labels.iter() {
                hits[f.index()] += 1;
            }
        }
        for f in BodyFluid::ALL {
            println!("  {f:<20} level {:.2}  observed {:.3}", bg.get(f), hits[f.index()] as f64 / ads.len() as f64);
        }
        let first = ads.samples.iter().find(|s| !s.labels.is_empty()).expect("some mixture has donors");
        println!("  first mixture {} from {:?}: {:?}", first.labels, first.donors, first.features);
    }
    Ok(())
}
