//! Stratified splitting and in-silico mixture generation.

mod mixture;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::profiles::{BodyFluid, Dataset, LabelSet};
use crate::seed::Rng;

pub use mixture::{
    augment_mixture, build_augmented_dataset, combine_replicates, write_augmented_table, AugmentCount,
    AugmentedDataset, AugmentedSample, AugmentationMetadata, DonorPool, FeatureMode,
};

/// Default presence probability of a fluid in generated mixtures.
pub const DEFAULT_BACKGROUND: f64 = 0.5;

/// Per-fluid probability of being present in a generated sample.
#[derive(Clone, Copy, PartialEq)]
pub struct BackgroundLevels([f64; BodyFluid::COUNT]);

impl Default for BackgroundLevels {
    /// 0.5 for every fluid except penile skin, which is absent.
    fn default() -> Self {
        BackgroundLevels::uniform(DEFAULT_BACKGROUND).with(BodyFluid::SkinPenile, 0.0)
    }
}

impl BackgroundLevels {
    pub fn uniform(level: f64) -> Self {
        BackgroundLevels([level; BodyFluid::COUNT])
    }

    pub fn get(&self, fluid: BodyFluid) -> f64 {
        self.0[fluid.index()]
    }

    pub fn set(&mut self, fluid: BodyFluid, level: f64) {
        self.0[fluid.index()] = level;
    }

    pub fn with(mut self, fluid: BodyFluid, level: f64) -> Self {
        self.set(fluid, level);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for f in BodyFluid::ALL {
            let v = self.get(f);
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("background level for {f} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    /// Fluids that can appear at all.
    pub fn eligible(&self) -> LabelSet {
        BodyFluid::ALL.into_iter().filter(|f| self.get(*f) > 0.0).collect()
    }

    /// Fluids that are always present.
    pub fn certain(&self) -> LabelSet {
        BodyFluid::ALL.into_iter().filter(|f| self.get(*f) >= 1.0).collect()
    }

    /// Fluids with a level strictly between 0 and 1.
    pub fn uncertain(&self) -> LabelSet {
        self.eligible().difference(self.certain())
    }

    pub fn levels(&self) -> impl Iterator<Item = (BodyFluid, f64)> + '_ {
        BodyFluid::ALL.into_iter().map(|f| (f, self.get(f)))
    }

    /// Applies `fluid=level` overrides separated by commas,
    /// e.g. `penile=1,blood=0.9`.
    pub fn apply_overrides(mut self, spec: &str) -> Result<Self> {
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("background override '{part}' is not fluid=level")))?;
            let fluid: BodyFluid = name.parse()?;
            let level: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("background level '{value}' is not a number")))?;
            self.set(fluid, level);
        }
        self.validate()?;
        Ok(self)
    }

    /// Short stable text form listing every level, used in keys and ids.
    pub fn key(&self) -> String {
        self.levels()
            .map(|(f, v)| format!("{}={}", f.name(), v))
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl fmt::Debug for BackgroundLevels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.levels().map(|(k, v)| (k.name(), v))).finish()
    }
}

impl Serialize for BackgroundLevels {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_map(self.levels())
    }
}

impl<'de> Deserialize<'de> for BackgroundLevels {
    /// Missing fluids take their default level.
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let map = BTreeMap::<BodyFluid, f64>::deserialize(deserializer)?;
        let mut bg = BackgroundLevels::default();
        for (f, v) in map {
            bg.set(f, v);
        }
        bg.validate().map_err(serde::de::Error::custom)?;
        Ok(bg)
    }
}

/// Which hypothesis a generated label set must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    H1,
    H2,
}

/// H1: at least one fluid of `interest` is present; H2: none is.
/// Fluids in `fixed_present`/`fixed_absent` are agreed upon by both sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HypothesisPair {
    pub interest: LabelSet,
    #[serde(default)]
    pub fixed_present: LabelSet,
    #[serde(default)]
    pub fixed_absent: LabelSet,
}

impl HypothesisPair {
    pub fn new(interest: LabelSet) -> Result<Self> {
        Self::with_fixed(interest, LabelSet::empty(), LabelSet::empty())
    }

    pub fn with_fixed(interest: LabelSet, fixed_present: LabelSet, fixed_absent: LabelSet) -> Result<Self> {
        let hp = HypothesisPair {
            interest,
            fixed_present,
            fixed_absent,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.interest.is_empty() {
            return Err(Error::Config("the set of fluids of interest is empty".into()));
        }
        if self.interest.intersects(self.fixed_absent) {
            return Err(Error::Config("a fluid of interest cannot be fixed absent".into()));
        }
        if self.fixed_present.intersects(self.fixed_absent) {
            return Err(Error::Config("a fluid cannot be both fixed present and fixed absent".into()));
        }
        Ok(())
    }

    /// Is `labels` an H1 sample?
    pub fn holds_h1(&self, labels: LabelSet) -> bool {
        labels.intersects(self.interest)
    }

    /// Background levels with fixed-present fluids at 1 and fixed-absent at 0.
    pub fn effective_background(&self, bg: &BackgroundLevels) -> BackgroundLevels {
        let mut out = *bg;
        for f in self.fixed_present.iter() {
            out.set(f, 1.0);
        }
        for f in self.fixed_absent.iter() {
            out.set(f, 0.0);
        }
        out
    }
}

/// Draws a label set with each fluid present independently at its background
/// level. With a conditioning branch the fixed sets are imposed and draws are
/// repeated until the branch's hypothesis holds.
pub fn mix_labels(bg: &BackgroundLevels, conditioning: Option<(&HypothesisPair, Branch)>, rng: &mut Rng) -> Result<LabelSet> {
    let levels = match conditioning {
        Some((hp, branch)) => {
            hp.validate()?;
            let eff = hp.effective_background(bg);
            let satisfiable = match branch {
                Branch::H1 => hp.interest.iter().any(|f| eff.get(f) > 0.0),
                Branch::H2 => hp.interest.iter().all(|f| eff.get(f) < 1.0),
            };
            if !satisfiable {
                return Err(Error::Config(format!(
                    "cannot generate {branch:?} samples for interest {} under these background levels",
                    hp.interest
                )));
            }
            eff
        }
        None => *bg,
    };
    loop {
        let labels: LabelSet = BodyFluid::ALL
            .into_iter()
            .filter(|f| {
                let p = levels.get(*f);
                p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p)
            })
            .collect();
        match conditioning {
            Some((hp, Branch::H1)) if !hp.holds_h1(labels) => continue,
            Some((hp, Branch::H2)) if hp.holds_h1(labels) => continue,
            _ => return Ok(labels),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub calibration: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.4,
            calibration: 0.4,
            test: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.calibration, self.test];
        if !(self.train > 0.0 && self.calibration > 0.0 && self.test >= 0.0)
            || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "split fractions must sum to 1 with positive train and calibration parts, got {parts:?}"
            )));
        }
        Ok(())
    }

    /// Two-way split for fitting a system without a held-out test part.
    pub fn train_calibration(train: f64) -> Self {
        SplitSpec {
            train,
            calibration: 1.0 - train,
            test: 0.0,
        }
    }

    /// Integer part sizes for `n` items by largest remainder; every part with
    /// a positive fraction gets at least one item.
    pub fn counts(&self, n: usize) -> [usize; 3] {
        let fractions = [self.train, self.calibration, self.test];
        let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
        let mut counts: [usize; 3] = [0; 3];
        for (c, e) in counts.iter_mut().zip(&exact) {
            *c = (e + 1e-9).floor() as usize;
        }
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - counts[a] as f64;
            let rb = exact[b] - counts[b] as f64;
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        let mut remaining = n - counts.iter().sum::<usize>();
        order.retain(|&i| fractions[i] > 0.0);
        for &i in order.iter().cycle() {
            if remaining == 0 {
                break;
            }
            counts[i] += 1;
            remaining -= 1;
        }
        for i in 0..3 {
            if counts[i] == 0 && fractions[i] > 0.0 {
                let donor = (0..3).max_by_key(|&j| (counts[j], std::cmp::Reverse(j))).unwrap();
                counts[donor] -= 1;
                counts[i] += 1;
            }
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub calibration: Dataset,
    pub test: Dataset,
}

pub const MIN_SAMPLES_PER_FLUID: usize = 3;

/// Splits samples into train/calibration/test, stratified by label set.
/// Within each part the original sample order is kept.
pub fn split_dataset(ds: &Dataset, spec: &SplitSpec, rng: &mut Rng) -> Result<Splits> {
    spec.validate()?;
    let mut groups: BTreeMap<LabelSet, Vec<usize>> = BTreeMap::new();
    for (i, s) in ds.samples.iter().enumerate() {
        groups.entry(s.labels).or_default().push(i);
    }
    let mut assignment = vec![0u8; ds.samples.len()];
    for (labels, mut idx) in groups {
        if idx.len() < MIN_SAMPLES_PER_FLUID {
            return Err(Error::Data(format!(
                "{labels} has {} samples, at least {MIN_SAMPLES_PER_FLUID} are needed to split",
                idx.len()
            )));
        }
        idx.shuffle(rng);
        let [n_train, n_cal, _] = spec.counts(idx.len());
        for (pos, &i) in idx.iter().enumerate() {
            assignment[i] = if pos < n_train {
                0
            } else if pos < n_train + n_cal {
                1
            } else {
                2
            };
        }
    }
    let part = |k: u8| Dataset {
        panel: ds.panel.clone(),
        samples: ds
            .samples
            .iter()
            .zip(&assignment)
            .filter(|(_, a)| **a == k)
            .map(|(s, _)| s.clone())
            .collect(),
    };
    Ok(Splits {
        train: part(0),
        calibration: part(1),
        test: part(2),
    })
}

impl FromStr for HypothesisPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HypothesisPair::new(s.parse()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{MarkerPanel, Replicate, Sample};
    use crate::seed;

    fn dataset(per_fluid: &[(BodyFluid, usize)]) -> Dataset {
        let panel = MarkerPanel::default();
        let mut samples = Vec::new();
        for (f, n) in per_fluid {
            for i in 0..*n {
                samples.push(Sample {
                    id: format!("{f}_{i}"),
                    labels: LabelSet::single(*f),
                    replicates: vec![Replicate::new(vec![0.0; 15], vec![true, true]).unwrap(); 2],
                });
            }
        }
        Dataset::new(panel, samples).unwrap()
    }

    #[test]
    fn split_thirty_gives_twelve_twelve_six() {
        let ds = dataset(&[(BodyFluid::Blood, 30)]);
        let s = split_dataset(&ds, &SplitSpec::default(), &mut seed::rng(1)).unwrap();
        assert_eq!((s.train.len(), s.calibration.len(), s.test.len()), (12, 12, 6));
    }

    #[test]
    fn split_is_deterministic_disjoint_and_exhaustive() {
        let ds = dataset(&[(BodyFluid::Blood, 31), (BodyFluid::Saliva, 7), (BodyFluid::Skin, 3)]);
        let a = split_dataset(&ds, &SplitSpec::default(), &mut seed::rng(9)).unwrap();
        let b = split_dataset(&ds, &SplitSpec::default(), &mut seed::rng(9)).unwrap();
        assert_eq!(a, b);
        let mut ids: Vec<&str> = [&a.train, &a.calibration, &a.test]
            .iter()
            .flat_map(|d| d.samples.iter().map(|s| s.id.as_str()))
            .collect();
        ids.sort();
        let mut all: Vec<&str> = ds.samples.iter().map(|s| s.id.as_str()).collect();
        all.sort();
        assert_eq!(ids, all);
        assert!(a.test.samples.iter().any(|s| s.fluid() == Some(BodyFluid::Skin)));
    }

    #[test]
    fn split_rejects_tiny_groups() {
        let ds = dataset(&[(BodyFluid::Blood, 5), (BodyFluid::SemenSterile, 2)]);
        match split_dataset(&ds, &SplitSpec::default(), &mut seed::rng(0)) {
            Err(Error::Data(msg)) => assert!(msg.contains("semen_sterile"), "{msg}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn split_counts_keep_every_part_non_empty() {
        let spec = SplitSpec::default();
        assert_eq!(spec.counts(3), [1, 1, 1]);
        assert_eq!(SplitSpec::train_calibration(0.5).counts(7), [4, 3, 0]);
        for n in 3..60 {
            let c = spec.counts(n);
            assert_eq!(c.iter().sum::<usize>(), n);
            assert!(c.iter().all(|&x| x >= 1));
        }
    }

    #[test]
    fn penile_skin_never_drawn_by_default() {
        let bg = BackgroundLevels::default();
        let mut rng = seed::rng(5);
        for _ in 0..10_000 {
            assert!(!mix_labels(&bg, None, &mut rng).unwrap().contains(BodyFluid::SkinPenile));
        }
    }

    #[test]
    fn raised_blood_background_matches_frequency() {
        let bg = BackgroundLevels::default().with(BodyFluid::Blood, 0.9);
        let mut rng = seed::rng(6);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| mix_labels(&bg, None, &mut rng).unwrap().contains(BodyFluid::Blood))
            .count();
        let p_hat = hits as f64 / n as f64;
        let se = (0.9_f64 * 0.1 / n as f64).sqrt();
        assert!((p_hat - 0.9).abs() < 3.0 * se, "p_hat = {p_hat}");
    }

    #[test]
    fn full_background_gives_full_set() {
        let bg = BackgroundLevels::uniform(1.0);
        let mut rng = seed::rng(0);
        assert_eq!(mix_labels(&bg, None, &mut rng).unwrap(), LabelSet::all());
    }

    #[test]
    fn conditioning_forces_branch() {
        let bg = BackgroundLevels::default();
        let interest: LabelSet = "vaginal+menstrual".parse().unwrap();
        let hp = HypothesisPair::with_fixed(interest, LabelSet::single(BodyFluid::SkinPenile), LabelSet::single(BodyFluid::Blood)).unwrap();
        let mut rng = seed::rng(2);
        for _ in 0..500 {
            let h1 = mix_labels(&bg, Some((&hp, Branch::H1)), &mut rng).unwrap();
            assert!(h1.intersects(interest));
            assert!(h1.contains(BodyFluid::SkinPenile) && !h1.contains(BodyFluid::Blood));
            let h2 = mix_labels(&bg, Some((&hp, Branch::H2)), &mut rng).unwrap();
            assert!(!h2.intersects(interest));
        }
    }

    #[test]
    fn unsatisfiable_conditioning_is_an_error() {
        let bg = BackgroundLevels::default();
        let hp = HypothesisPair::new(LabelSet::single(BodyFluid::SkinPenile)).unwrap();
        assert!(mix_labels(&bg, Some((&hp, Branch::H1)), &mut seed::rng(0)).is_err());
        let all_present = BackgroundLevels::uniform(1.0);
        let hp = HypothesisPair::new(LabelSet::single(BodyFluid::Blood)).unwrap();
        assert!(mix_labels(&all_present, Some((&hp, Branch::H2)), &mut seed::rng(0)).is_err());
    }

    #[test]
    fn background_overrides_parse() {
        let bg = BackgroundLevels::default().apply_overrides("penile=1, blood=0.9").unwrap();
        assert_eq!(bg.get(BodyFluid::SkinPenile), 1.0);
        assert_eq!(bg.get(BodyFluid::Blood), 0.9);
        assert!(BackgroundLevels::default().apply_overrides("blood=2").is_err());
        assert!(BackgroundLevels::default().apply_overrides("blood").is_err());
    }
}
