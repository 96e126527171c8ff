use rand::Rng as _;

use super::{Dataset, MarkerPanel, RateTable, Replicate, Sample, MAX_REPLICATES, MIN_REPLICATES};
use crate::error::{Error, Result};
use crate::seed;

/// Upper end of the peak-height range for detected markers.
pub const MAX_SYNTHETIC_RFU: f64 = 5000.0;

/// Generates single-fluid (or lab-mixture) samples from a detection-rate
/// table.
///
/// Each marker of each replicate is detected independently with its rate.
/// Detected markers get a log-uniform peak height on
/// `[threshold, MAX_SYNTHETIC_RFU]`, undetected ones a uniform height on
/// `[0, threshold - 1]`. Housekeeping controls always amplify.
pub fn synthesize_dataset(
    rates: &RateTable,
    panel: &MarkerPanel,
    n_per_fluid: usize,
    reps_per_sample: usize,
    seed: u64,
) -> Result<Dataset> {
    rates.validate()?;
    if rates.markers != panel.markers {
        return Err(Error::Data("rate table markers do not match the panel".into()));
    }
    if !(MIN_REPLICATES..=MAX_REPLICATES).contains(&reps_per_sample) {
        return Err(Error::Config(format!(
            "reps_per_sample must be {MIN_REPLICATES} to {MAX_REPLICATES}, got {reps_per_sample}"
        )));
    }
    let threshold = panel.threshold_rfu;
    let (log_lo, log_hi) = (threshold.ln(), MAX_SYNTHETIC_RFU.max(threshold).ln());
    let undetected_hi = (threshold - 1.0).max(0.0);

    let mut rng = seed::rng(seed);
    let mut samples = Vec::with_capacity(rates.rows.len() * n_per_fluid);
    for (labels, row) in &rates.rows {
        for i in 0..n_per_fluid {
            let replicates = (0..reps_per_sample)
                .map(|_| {
                    let rfu = row
                        .iter()
                        .map(|&rate| {
                            if rng.random::<f64>() < rate {
                                rng.random_range(log_lo..=log_hi).exp()
                            } else {
                                rng.random_range(0.0..=undetected_hi)
                            }
                        })
                        .collect();
                    Replicate {
                        rfu,
                        housekeeping_detected: vec![true; panel.housekeeping.len()],
                    }
                })
                .collect();
            let name = if labels.is_empty() { "blank".to_string() } else { labels.to_string() };
            samples.push(Sample {
                id: format!("{name}_{:03}", i + 1),
                labels: *labels,
                replicates,
            });
        }
    }
    Dataset::new(panel.clone(), samples)
}
