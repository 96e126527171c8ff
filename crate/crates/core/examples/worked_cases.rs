//! Evaluates the three reference case observations with the reference
//! vaginal-mucosa/menstrual model, then asks what changes when penile skin
//! is known to be present.

use mixlr::augmentation::BackgroundLevels;
use mixlr::casework::{evaluate_case, what_if, ModelStore};
use mixlr::fixtures;
use mixlr::profiles::BodyFluid;

fn main() -> mixlr::Result<()> {
    let sys = fixtures::reference_system();
    for n in 1..=3 {
        let report = evaluate_case(&sys, &fixtures::worked_case(n), &sys.hypothesis)?;
        println!("case {n}: log10 LR {:+.2}, {}", report.log10_lr, report.verbal);
    }

    let store = ModelStore::new();
    store.insert(fixtures::reference_system());
    store.insert(fixtures::reference_penile_system());
    let penile = BackgroundLevels::default().with(BodyFluid::SkinPenile, 1.0);
    let report = what_if(&store, &fixtures::worked_case(3), &sys.hypothesis, &penile)?;
    println!("\ncase 3 with penile skin present:");
    print!("{}", report.to_text());
    Ok(())
}
