use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mix_labels, BackgroundLevels, DEFAULT_BACKGROUND};
use crate::error::{Error, Result};
use crate::profiles::{replicate_fractions, replicate_means, BodyFluid, Dataset, LabelSet, Replicate, Sample, MIN_REPLICATES};
use crate::seed::{self, Rng};

/// How augmented replicates are turned into a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Mean peak height per marker.
    Raw,
    /// Binarize each replicate at the threshold, then average: the fraction
    /// of replicates in which the marker was detected.
    Dichotomized,
    /// Average peak heights first, then binarize the mean.
    DichotomizedAfterMean,
}

impl FeatureMode {
    pub fn is_dichotomized(self) -> bool {
        !matches!(self, FeatureMode::Raw)
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::Raw => "raw",
            FeatureMode::Dichotomized => "dichotomized",
            FeatureMode::DichotomizedAfterMean => "dichotomized_after_mean",
        }
    }

    pub fn features(self, reps: &[Replicate], threshold: f64) -> Result<Vec<f64>> {
        match self {
            FeatureMode::Raw => replicate_means(reps),
            FeatureMode::Dichotomized => replicate_fractions(reps, threshold),
            FeatureMode::DichotomizedAfterMean => Ok(replicate_means(reps)?
                .into_iter()
                .map(|m| if m >= threshold { 1.0 } else { 0.0 })
                .collect()),
        }
    }
}

/// Single-fluid samples grouped by fluid, the donors for in-silico mixing.
#[derive(Debug, Clone)]
pub struct DonorPool<'a> {
    donors: BTreeMap<BodyFluid, Vec<&'a Sample>>,
    n_markers: usize,
    n_housekeeping: usize,
    threshold: f64,
}

impl<'a> DonorPool<'a> {
    pub fn new(singles: &'a Dataset) -> Self {
        DonorPool {
            donors: singles.by_fluid(),
            n_markers: singles.panel.len(),
            n_housekeeping: singles.panel.housekeeping.len(),
            threshold: singles.panel.threshold_rfu,
        }
    }

    pub fn fluids(&self) -> LabelSet {
        self.donors.keys().copied().collect()
    }

    fn require(&self, labels: LabelSet) -> Result<()> {
        match labels.iter().find(|f| !self.donors.contains_key(f)) {
            Some(f) => Err(Error::Data(format!("no single-fluid donor sample for {f}"))),
            None => Ok(()),
        }
    }

    /// Draws one donor per fluid (with replacement), shuffles each donor's
    /// replicates independently and combines them by per-marker maximum.
    pub fn augment(&self, labels: LabelSet, mode: FeatureMode, rng: &mut Rng) -> Result<AugmentedSample> {
        self.require(labels)?;
        let mut shuffled: Vec<Vec<&Replicate>> = Vec::with_capacity(labels.len());
        let mut donors = Vec::with_capacity(labels.len());
        for fluid in labels.iter() {
            let donor = self.donors[&fluid].choose(rng).expect("donor list is non-empty");
            let mut reps: Vec<&Replicate> = donor.replicates.iter().collect();
            reps.shuffle(rng);
            shuffled.push(reps);
            donors.push(donor.id.clone());
        }
        let replicates = if shuffled.is_empty() {
            vec![
                Replicate {
                    rfu: vec![0.0; self.n_markers],
                    housekeeping_detected: vec![true; self.n_housekeeping],
                };
                MIN_REPLICATES
            ]
        } else {
            combine_replicates(&shuffled)
        };
        let features = if labels.is_empty() {
            vec![0.0; self.n_markers]
        } else {
            mode.features(&replicates, self.threshold)?
        };
        Ok(AugmentedSample {
            labels,
            features,
            replicates,
            donors,
        })
    }
}

/// Combines donors' replicates position by position: augmented replicate `j`
/// takes, per marker, the maximum rfu over every donor's `j`-th replicate.
/// The result has as many replicates as the shortest donor list.
pub fn combine_replicates<R: AsRef<[T]>, T: std::borrow::Borrow<Replicate>>(donors: &[R]) -> Vec<Replicate> {
    let m = donors.iter().map(|d| d.as_ref().len()).min().unwrap_or(0);
    (0..m)
        .map(|j| {
            let mut iter = donors.iter().map(|d| d.as_ref()[j].borrow());
            let first = iter.next().expect("at least one donor").clone();
            iter.fold(first, |mut acc, r| {
                for (a, &v) in acc.rfu.iter_mut().zip(&r.rfu) {
                    *a = a.max(v);
                }
                for (a, &h) in acc.housekeeping_detected.iter_mut().zip(&r.housekeeping_detected) {
                    *a |= h;
                }
                acc
            })
        })
        .collect()
}

/// Builds one augmented sample from `singles`; see [`DonorPool::augment`].
pub fn augment_mixture(singles: &Dataset, labels: LabelSet, mode: FeatureMode, rng: &mut Rng) -> Result<AugmentedSample> {
    DonorPool::new(singles).augment(labels, mode, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentedSample {
    pub labels: LabelSet,
    pub features: Vec<f64>,
    /// The combined replicates the features were computed from.
    pub replicates: Vec<Replicate>,
    /// Ids of the donor samples, in fluid order.
    pub donors: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentCount {
    /// Every eligible combination, this many times each.
    PerCombination(usize),
    /// This many label sets drawn from the background levels.
    Total(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentationMetadata {
    pub seed: u64,
    pub background: BackgroundLevels,
    pub mode: FeatureMode,
    pub count: AugmentCount,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDataset {
    pub markers: Vec<String>,
    pub housekeeping: Vec<String>,
    pub samples: Vec<AugmentedSample>,
    pub metadata: AugmentationMetadata,
}

impl AugmentedDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn features(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.features.clone()).collect()
    }

    pub fn labels(&self) -> Vec<LabelSet> {
        self.samples.iter().map(|s| s.labels).collect()
    }

    pub fn mode(&self) -> FeatureMode {
        self.metadata.mode
    }
}

/// Generates an augmented dataset.
///
/// With [`AugmentCount::PerCombination`] every subset of the fluids with a
/// background level strictly between 0 and 1 is enumerated (fluids at level
/// 1 are added to each), which realizes independent presence at 0.5; other
/// levels must use [`AugmentCount::Total`], which draws label sets with
/// [`mix_labels`]. Sample `i` uses its own random stream derived from
/// `seed`, so generation runs in parallel with order-stable output.
pub fn build_augmented_dataset(
    singles: &Dataset,
    bg: &BackgroundLevels,
    count: AugmentCount,
    mode: FeatureMode,
    seed: u64,
) -> Result<AugmentedDataset> {
    bg.validate()?;
    let pool = DonorPool::new(singles);
    pool.require(bg.eligible())?;

    let fixed_labels: Option<Vec<LabelSet>> = match count {
        AugmentCount::PerCombination(n) => {
            if let Some(f) = bg.uncertain().iter().find(|f| bg.get(*f) != DEFAULT_BACKGROUND) {
                return Err(Error::Config(format!(
                    "background level {} for {f} needs total-count sampling, not per-combination counts",
                    bg.get(f)
                )));
            }
            let certain = bg.certain();
            Some(
                bg.uncertain()
                    .subsets()
                    .into_iter()
                    .flat_map(|s| std::iter::repeat_n(s.union(certain), n))
                    .collect(),
            )
        }
        AugmentCount::Total(_) => None,
    };
    let total = match (&fixed_labels, count) {
        (Some(l), _) => l.len(),
        (None, AugmentCount::Total(n)) => n,
        (None, AugmentCount::PerCombination(_)) => unreachable!(),
    };
    if total == 0 {
        return Err(Error::Config("augmentation count must be positive".into()));
    }

    let samples = (0..total)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng_for(seed, &[i as u64]);
            let labels = match &fixed_labels {
                Some(l) => l[i],
                None => mix_labels(bg, None, &mut rng)?,
            };
            pool.augment(labels, mode, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(AugmentedDataset {
        markers: singles.panel.markers.clone(),
        housekeeping: singles.panel.housekeeping.clone(),
        samples,
        metadata: AugmentationMetadata {
            seed,
            background: *bg,
            mode,
            count,
            samples: total,
        },
    })
}

/// Renders an augmented dataset in the profile CSV schema (one row per
/// combined replicate) plus its JSON metadata sidecar.
pub fn write_augmented_table(ads: &AugmentedDataset) -> Result<(String, String)> {
    let mut out = String::from("sample_id,fluid_labels,replicate_id");
    for m in ads.markers.iter().chain(&ads.housekeeping) {
        let _ = write!(out, ",{m}");
    }
    out.push('\n');
    for (i, s) in ads.samples.iter().enumerate() {
        for (j, r) in s.replicates.iter().enumerate() {
            let _ = write!(out, "aug_{:05},{},{}", i + 1, s.labels, j + 1);
            for v in &r.rfu {
                let _ = write!(out, ",{v}");
            }
            for &h in &r.housekeeping_detected {
                let _ = write!(out, ",{}", u8::from(h));
            }
            out.push('\n');
        }
    }
    let meta = serde_json::to_string_pretty(&ads.metadata)?;
    Ok((out, meta))
}
