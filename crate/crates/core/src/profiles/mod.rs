//! Markers, body fluids, replicate measurements and samples.
//!
//! A sample is measured two to four times ("replicates"); each replicate
//! holds one peak height (rfu) per panel marker plus the amplification
//! status of the housekeeping controls. Models consume per-marker
//! summaries of those replicates, either detection fractions at the rfu
//! threshold or mean peak heights.

mod csv_io;
mod synth;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use csv_io::{parse_profile_table, read_rate_table, write_profile_table, write_rate_table, LoadReport};
pub use synth::synthesize_dataset;

/// Default detection threshold in relative fluorescence units.
pub const DEFAULT_THRESHOLD_RFU: f64 = 150.0;

/// Target markers in canonical panel order.
pub const STANDARD_MARKERS: [&str; 15] = [
    "HBB", "ALAS2", "CD93", "HTN3", "STATH", "BPIFA1", "MUC4", "MYOZ1", "CYP2B7P1", "MMP10",
    "MMP7", "MMP11", "SEMG1", "KLK3", "PRM1",
];

pub const STANDARD_HOUSEKEEPING: [&str; 2] = ["HK1", "HK2"];

pub const MIN_REPLICATES: usize = 2;
pub const MAX_REPLICATES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BodyFluid {
    Blood,
    MenstrualSecretion,
    NasalMucosa,
    Saliva,
    SemenFertile,
    SemenSterile,
    Skin,
    SkinPenile,
    VaginalMucosa,
}

impl BodyFluid {
    pub const COUNT: usize = 9;

    pub const ALL: [BodyFluid; 9] = [
        BodyFluid::Blood,
        BodyFluid::MenstrualSecretion,
        BodyFluid::NasalMucosa,
        BodyFluid::Saliva,
        BodyFluid::SemenFertile,
        BodyFluid::SemenSterile,
        BodyFluid::Skin,
        BodyFluid::SkinPenile,
        BodyFluid::VaginalMucosa,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<BodyFluid> {
        BodyFluid::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            BodyFluid::Blood => "blood",
            BodyFluid::MenstrualSecretion => "menstrual_secretion",
            BodyFluid::NasalMucosa => "nasal_mucosa",
            BodyFluid::Saliva => "saliva",
            BodyFluid::SemenFertile => "semen_fertile",
            BodyFluid::SemenSterile => "semen_sterile",
            BodyFluid::Skin => "skin",
            BodyFluid::SkinPenile => "skin_penile",
            BodyFluid::VaginalMucosa => "vaginal_mucosa",
        }
    }
}

impl fmt::Display for BodyFluid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BodyFluid {
    type Err = Error;

    /// Accepts the canonical snake_case names plus a few short aliases
    /// (`menstrual`, `nasal`, `vaginal`, `penile`).
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let fluid = match key.as_str() {
            "blood" => BodyFluid::Blood,
            "menstrual_secretion" | "menstrual" => BodyFluid::MenstrualSecretion,
            "nasal_mucosa" | "nasal" => BodyFluid::NasalMucosa,
            "saliva" => BodyFluid::Saliva,
            "semen_fertile" => BodyFluid::SemenFertile,
            "semen_sterile" => BodyFluid::SemenSterile,
            "skin" => BodyFluid::Skin,
            "skin_penile" | "penile" | "penile_skin" => BodyFluid::SkinPenile,
            "vaginal_mucosa" | "vaginal" => BodyFluid::VaginalMucosa,
            _ => return Err(Error::UnknownFluid(s.trim().to_string())),
        };
        Ok(fluid)
    }
}

impl Serialize for BodyFluid {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for BodyFluid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A set of body fluids, stored as a bit mask over [`BodyFluid::ALL`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LabelSet(u16);

impl LabelSet {
    pub const fn empty() -> Self {
        LabelSet(0)
    }

    pub fn all() -> Self {
        LabelSet((1 << BodyFluid::COUNT) - 1)
    }

    pub fn single(fluid: BodyFluid) -> Self {
        LabelSet(1 << fluid.index())
    }

    pub fn from_bits(bits: u16) -> Self {
        LabelSet(bits & Self::all().0)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn contains(self, fluid: BodyFluid) -> bool {
        self.0 & (1 << fluid.index()) != 0
    }

    pub fn insert(&mut self, fluid: BodyFluid) {
        self.0 |= 1 << fluid.index();
    }

    pub fn remove(&mut self, fluid: BodyFluid) {
        self.0 &= !(1 << fluid.index());
    }

    pub fn with(mut self, fluid: BodyFluid) -> Self {
        self.insert(fluid);
        self
    }

    pub fn union(self, other: LabelSet) -> Self {
        LabelSet(self.0 | other.0)
    }

    pub fn intersection(self, other: LabelSet) -> Self {
        LabelSet(self.0 & other.0)
    }

    pub fn difference(self, other: LabelSet) -> Self {
        LabelSet(self.0 & !other.0)
    }

    pub fn intersects(self, other: LabelSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_subset(self, other: LabelSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = BodyFluid> {
        BodyFluid::ALL.into_iter().filter(move |f| self.contains(*f))
    }

    /// All subsets of `self`, ordered by their bit pattern (empty set first).
    pub fn subsets(self) -> Vec<LabelSet> {
        let members: Vec<BodyFluid> = self.iter().collect();
        (0..1u32 << members.len())
            .map(|mask| {
                members
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .fold(LabelSet::empty(), |acc, (_, f)| acc.with(*f))
            })
            .collect()
    }
}

impl FromIterator<BodyFluid> for LabelSet {
    fn from_iter<I: IntoIterator<Item = BodyFluid>>(iter: I) -> Self {
        iter.into_iter().fold(LabelSet::empty(), LabelSet::with)
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(BodyFluid::name).collect();
        f.write_str(&names.join("+"))
    }
}

impl fmt::Debug for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{self}}}")
    }
}

impl FromStr for LabelSet {
    type Err = Error;

    /// Parses `'+'`- or `','`-separated fluid names; the empty string is the
    /// empty set.
    fn from_str(s: &str) -> Result<Self> {
        s.split(['+', ','])
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(BodyFluid::from_str)
            .collect()
    }
}

impl Serialize for LabelSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    /// Accepts a list of fluid names or a `'+'`-joined string.
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            List(Vec<BodyFluid>),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::List(fluids) => Ok(fluids.into_iter().collect()),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerPanel {
    pub markers: Vec<String>,
    pub housekeeping: Vec<String>,
    pub threshold_rfu: f64,
}

impl Default for MarkerPanel {
    fn default() -> Self {
        MarkerPanel {
            markers: STANDARD_MARKERS.iter().map(|s| s.to_string()).collect(),
            housekeeping: STANDARD_HOUSEKEEPING.iter().map(|s| s.to_string()).collect(),
            threshold_rfu: DEFAULT_THRESHOLD_RFU,
        }
    }
}

impl MarkerPanel {
    pub fn new(markers: Vec<String>, housekeeping: Vec<String>, threshold_rfu: f64) -> Result<Self> {
        let panel = MarkerPanel {
            markers,
            housekeeping,
            threshold_rfu,
        };
        panel.validate()?;
        Ok(panel)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_rfu > 0.0) {
            return Err(Error::Config(format!(
                "threshold_rfu must be positive, got {}",
                self.threshold_rfu
            )));
        }
        let mut seen = HashSet::new();
        for name in self.markers.iter().chain(&self.housekeeping) {
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("duplicate marker name {name}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.markers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.markers.is_empty()
    }

    pub fn index_of(&self, marker: &str) -> Option<usize> {
        self.markers.iter().position(|m| m == marker)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub rfu: Vec<f64>,
    pub housekeeping_detected: Vec<bool>,
}

impl Replicate {
    pub fn new(rfu: Vec<f64>, housekeeping_detected: Vec<bool>) -> Result<Self> {
        if let Some(bad) = rfu.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Data(format!("rfu values must be finite and non-negative, got {bad}")));
        }
        Ok(Replicate {
            rfu,
            housekeeping_detected,
        })
    }
}

/// Binary detection vector: 1 where the peak height reaches the threshold.
pub fn dichotomize(rep: &Replicate, threshold: f64) -> Vec<u8> {
    rep.rfu.iter().map(|&v| u8::from(v >= threshold)).collect()
}

/// Per-marker fraction of replicates in which the marker was detected.
pub fn replicate_fractions(reps: &[Replicate], threshold: f64) -> Result<Vec<f64>> {
    let first = reps
        .first()
        .ok_or_else(|| Error::Data("replicate_fractions needs at least one replicate".into()))?;
    let mut counts = vec![0usize; first.rfu.len()];
    for rep in reps {
        if rep.rfu.len() != counts.len() {
            return Err(Error::Data("replicates have differing marker counts".into()));
        }
        for (c, &v) in counts.iter_mut().zip(&rep.rfu) {
            *c += usize::from(v >= threshold);
        }
    }
    let n = reps.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Per-marker mean peak height over replicates.
pub fn replicate_means(reps: &[Replicate]) -> Result<Vec<f64>> {
    let first = reps
        .first()
        .ok_or_else(|| Error::Data("replicate_means needs at least one replicate".into()))?;
    let mut sums = vec![0.0; first.rfu.len()];
    for rep in reps {
        for (s, v) in sums.iter_mut().zip(&rep.rfu) {
            *s += v;
        }
    }
    let n = reps.len() as f64;
    Ok(sums.into_iter().map(|s| s / n).collect())
}

/// One measured sample. Single-fluid samples carry exactly one label;
/// lab mixtures carry several.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub labels: LabelSet,
    pub replicates: Vec<Replicate>,
}

impl Sample {
    /// The fluid of a single-fluid sample.
    pub fn fluid(&self) -> Option<BodyFluid> {
        if self.labels.len() == 1 {
            self.labels.iter().next()
        } else {
            None
        }
    }

    /// Sample-level housekeeping check: a control counts as amplified when
    /// any replicate detected it; at least half of the controls must be.
    pub fn passes_housekeeping(&self) -> bool {
        let n_controls = self
            .replicates
            .first()
            .map_or(0, |r| r.housekeeping_detected.len());
        if n_controls == 0 {
            return true;
        }
        let amplified = (0..n_controls)
            .filter(|&i| self.replicates.iter().any(|r| r.housekeeping_detected[i]))
            .count();
        2 * amplified >= n_controls
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub panel: MarkerPanel,
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Validates shape invariants: unique ids, 2 to 4 replicates per sample,
    /// vector lengths matching the panel, every sample passing the
    /// housekeeping filter.
    pub fn new(panel: MarkerPanel, samples: Vec<Sample>) -> Result<Self> {
        panel.validate()?;
        let mut ids = HashSet::new();
        for s in &samples {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Data(format!("duplicate sample id {}", s.id)));
            }
            if !(MIN_REPLICATES..=MAX_REPLICATES).contains(&s.replicates.len()) {
                return Err(Error::Data(format!(
                    "sample {} has {} replicates, expected {MIN_REPLICATES} to {MAX_REPLICATES}",
                    s.id,
                    s.replicates.len()
                )));
            }
            for r in &s.replicates {
                if r.rfu.len() != panel.len() || r.housekeeping_detected.len() != panel.housekeeping.len() {
                    return Err(Error::Data(format!("sample {} does not match the marker panel", s.id)));
                }
            }
            if !s.passes_housekeeping() {
                return Err(Error::Data(format!("sample {} fails the housekeeping filter", s.id)));
            }
        }
        Ok(Dataset { panel, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples grouped by single fluid, in fluid order. Mixture samples are skipped.
    pub fn by_fluid(&self) -> BTreeMap<BodyFluid, Vec<&Sample>> {
        let mut groups: BTreeMap<BodyFluid, Vec<&Sample>> = BTreeMap::new();
        for s in &self.samples {
            if let Some(f) = s.fluid() {
                groups.entry(f).or_default().push(s);
            }
        }
        groups
    }
}

/// Per-label-set, per-marker detection rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub markers: Vec<String>,
    pub rows: BTreeMap<LabelSet, Vec<f64>>,
}

impl RateTable {
    pub fn validate(&self) -> Result<()> {
        for (labels, rates) in &self.rows {
            if rates.len() != self.markers.len() {
                return Err(Error::Data(format!(
                    "rate row {labels} has {} values for {} markers",
                    rates.len(),
                    self.markers.len()
                )));
            }
            if let Some(bad) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
                return Err(Error::Data(format!("rate {bad} for {labels} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn rate(&self, labels: LabelSet, marker: &str) -> Option<f64> {
        let i = self.markers.iter().position(|m| m == marker)?;
        self.rows.get(&labels).map(|r| r[i])
    }
}

/// Fraction of replicates, pooled over all samples with the same label set,
/// in which each marker reaches the panel threshold.
pub fn detection_rates(ds: &Dataset) -> Result<RateTable> {
    if ds.is_empty() {
        return Err(Error::Data("detection_rates needs a non-empty dataset".into()));
    }
    let p = ds.panel.len();
    let mut acc: BTreeMap<LabelSet, (Vec<usize>, usize)> = BTreeMap::new();
    for s in &ds.samples {
        let (counts, total) = acc.entry(s.labels).or_insert_with(|| (vec![0; p], 0));
        for r in &s.replicates {
            *total += 1;
            for (c, &v) in counts.iter_mut().zip(&r.rfu) {
                *c += usize::from(v >= ds.panel.threshold_rfu);
            }
        }
    }
    let rows = acc
        .into_iter()
        .map(|(labels, (counts, total))| {
            (labels, counts.into_iter().map(|c| c as f64 / total as f64).collect())
        })
        .collect();
    Ok(RateTable {
        markers: ds.panel.markers.clone(),
        rows,
    })
}
