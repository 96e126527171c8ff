//! Published reference values: single-fluid detection rates, the worked
//! case observations, and the hand-picked coefficient sets used to score
//! them.

use std::collections::BTreeMap;

use crate::augmentation::{BackgroundLevels, FeatureMode, HypothesisPair};
use crate::calibrate::Calibrator;
use crate::casework::CaseObservation;
use crate::classify::BinaryLogReg;
use crate::profiles::{BodyFluid, LabelSet, MarkerPanel, RateTable};
use crate::system::{Classifier, LrSystem, Strategy, FORMAT_VERSION};

/// Detection rates of the standard markers in single-fluid samples, rows in
/// [`BodyFluid::ALL`] order, columns in panel order.
pub const REFERENCE_RATES: [[f64; 15]; 9] = [
    [1.000, 0.960, 0.579, 0.000, 0.000, 0.000, 0.000, 0.000, 0.000, 0.000, 0.000, 0.032, 0.000, 0.000, 0.000],
    [1.000, 0.496, 0.451, 0.000, 0.009, 0.000, 0.566, 0.531, 0.310, 0.319, 0.381, 0.558, 0.000, 0.000, 0.000],
    [0.008, 0.000, 0.440, 0.008, 0.976, 0.504, 0.616, 0.016, 0.016, 0.000, 0.008, 0.024, 0.024, 0.000, 0.000],
    [0.165, 0.010, 0.029, 0.913, 0.903, 0.019, 0.010, 0.019, 0.010, 0.000, 0.010, 0.000, 0.000, 0.000, 0.000],
    [0.011, 0.011, 0.000, 0.000, 0.000, 0.011, 0.011, 0.000, 0.000, 0.000, 0.000, 0.000, 0.832, 0.789, 0.958],
    [0.000, 0.000, 0.000, 0.000, 0.000, 0.000, 0.000, 0.000, 0.000, 0.000, 0.000, 0.036, 0.929, 0.750, 0.000],
    [0.264, 0.014, 0.111, 0.000, 0.083, 0.028, 0.194, 0.056, 0.000, 0.000, 0.028, 0.000, 0.000, 0.000, 0.000],
    [0.146, 0.000, 0.042, 0.000, 0.000, 0.000, 0.333, 0.021, 0.000, 0.021, 0.021, 0.042, 0.000, 0.000, 0.104],
    [0.009, 0.000, 0.157, 0.000, 0.000, 0.000, 0.922, 0.722, 0.557, 0.000, 0.043, 0.009, 0.000, 0.000, 0.000],
];

pub fn reference_rates() -> RateTable {
    RateTable {
        markers: MarkerPanel::default().markers,
        rows: BodyFluid::ALL
            .iter()
            .zip(REFERENCE_RATES)
            .map(|(f, r)| (LabelSet::single(*f), r.to_vec()))
            .collect::<BTreeMap<_, _>>(),
    }
}

/// Detections out of four replicates for the three worked cases.
pub const WORKED_CASE_DETECTED: [[u32; 15]; 3] = [
    [3, 4, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [4, 4, 4, 0, 0, 0, 4, 4, 4, 4, 4, 4, 0, 0, 0],
    [4, 4, 4, 0, 0, 0, 2, 0, 0, 1, 2, 2, 0, 0, 0],
];
pub const WORKED_CASE_TOTAL: u32 = 4;

/// Worked case `n` (1 to 3).
pub fn worked_case(n: usize) -> CaseObservation {
    assert!((1..=3).contains(&n), "worked cases are numbered 1 to 3");
    CaseObservation::from_counts(&MarkerPanel::default().markers, &WORKED_CASE_DETECTED[n - 1], WORKED_CASE_TOTAL)
        .expect("fixture counts are valid")
}

/// Vaginal mucosa and/or menstrual secretion.
pub fn reference_interest() -> LabelSet {
    LabelSet::from_iter([BodyFluid::VaginalMucosa, BodyFluid::MenstrualSecretion])
}

/// Coefficients for {vaginal, menstrual} under default backgrounds. Markers
/// that never enter a worked equation are set to zero.
pub const REFERENCE_DEFAULT: (f64, [f64; 15]) = (
    -1.34,
    [0.79, -0.57, -0.10, 0.0, 0.0, 0.0, 1.45, 1.33, 2.75, 0.56, 1.35, 2.32, 0.0, 0.0, 0.0],
);

/// The same with penile skin always present.
pub const REFERENCE_PENILE: (f64, [f64; 15]) = (
    -1.65,
    [0.51, -0.43, 0.0, 0.0, 0.0, 0.0, 0.81, 0.0, 0.0, 0.82, 1.1, 2.4, 0.0, 0.0, 0.0],
);

fn fixture_system(coefs: (f64, [f64; 15]), background: BackgroundLevels) -> LrSystem {
    let panel = MarkerPanel::default();
    LrSystem {
        format_version: FORMAT_VERSION,
        markers: panel.markers,
        housekeeping: panel.housekeeping,
        threshold_rfu: panel.threshold_rfu,
        fluids: BodyFluid::ALL.to_vec(),
        strategy: Strategy::OneVsRest,
        hypothesis: HypothesisPair::new(reference_interest()).expect("non-empty interest"),
        background,
        mode: FeatureMode::Dichotomized,
        classifier: Classifier::Binary(BinaryLogReg::new(coefs.0, coefs.1.to_vec())),
        calibrator: Calibrator::IDENTITY,
        lambda: 0.0,
        seed: 0,
    }
}

/// Already-calibrated one-vs-rest system with the default coefficient set.
pub fn reference_system() -> LrSystem {
    fixture_system(REFERENCE_DEFAULT, BackgroundLevels::default())
}

/// The penile-skin variant (penile skin background 1).
pub fn reference_penile_system() -> LrSystem {
    fixture_system(REFERENCE_PENILE, BackgroundLevels::default().with(BodyFluid::SkinPenile, 1.0))
}
