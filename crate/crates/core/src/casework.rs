//! Per-case evaluation: calibrated LR with its per-marker breakdown, the
//! legacy n/2 rule, and what-if re-evaluation against a store of model
//! variants.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::augmentation::{BackgroundLevels, FeatureMode, HypothesisPair};
use crate::calibrate::Calibrator;
use crate::error::{Error, Result};
use crate::metrics::{cap_lr, verbal_scale, VerbalConclusion, DEFAULT_CAP};
use crate::calibrate::LRValue;
use crate::profiles::{BodyFluid, LabelSet, MarkerPanel, Replicate, MAX_REPLICATES, MIN_REPLICATES};
use crate::system::{Classifier, LrSystem, Strategy};

/// Replicates in which a marker was detected, out of `total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerCount {
    pub detected: u32,
    pub total: u32,
}

/// Observations for one trace: per-marker detection counts, or raw rfu per
/// replicate (marker name to rfu).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CaseObservation {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub markers: BTreeMap<String, MarkerCount>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replicates: Vec<BTreeMap<String, f64>>,
}

impl CaseObservation {
    /// Counts in panel order, all out of the same `total`.
    pub fn from_counts(markers: &[String], detected: &[u32], total: u32) -> Result<Self> {
        if markers.len() != detected.len() {
            return Err(Error::Data(format!("{} counts for {} markers", detected.len(), markers.len())));
        }
        let obs = CaseObservation {
            markers: markers
                .iter()
                .zip(detected)
                .map(|(m, &d)| (m.clone(), MarkerCount { detected: d, total }))
                .collect(),
            replicates: Vec::new(),
        };
        obs.validate()?;
        Ok(obs)
    }

    pub fn from_replicates(panel: &MarkerPanel, reps: &[Replicate]) -> Result<Self> {
        let obs = CaseObservation {
            markers: BTreeMap::new(),
            replicates: reps
                .iter()
                .map(|r| panel.markers.iter().cloned().zip(r.rfu.iter().copied()).collect())
                .collect(),
        };
        obs.validate()?;
        Ok(obs)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.markers.is_empty(), self.replicates.is_empty()) {
            (true, true) => return Err(Error::Data("observation has neither marker counts nor replicates".into())),
            (false, false) => return Err(Error::Data("observation must give marker counts or replicates, not both".into())),
            _ => {}
        }
        if !self.replicates.is_empty() {
            let n = self.replicates.len();
            if !(MIN_REPLICATES..=MAX_REPLICATES).contains(&n) {
                return Err(Error::Data(format!("{n} replicates; expected {MIN_REPLICATES} to {MAX_REPLICATES}")));
            }
            if let Some((m, v)) = self.replicates.iter().flatten().find(|(_, v)| !v.is_finite() || **v < 0.0) {
                return Err(Error::Data(format!("rfu for {m} must be finite and non-negative, got {v}")));
            }
            return Ok(());
        }
        let mut totals = BTreeSet::new();
        for (m, c) in &self.markers {
            if c.detected > c.total {
                return Err(Error::Data(format!("{m}: detected {} exceeds total {}", c.detected, c.total)));
            }
            totals.insert(c.total);
        }
        if totals.len() != 1 {
            return Err(Error::Data(format!("all markers must share one replicate total, got {totals:?}")));
        }
        let total = *totals.first().expect("non-empty") as usize;
        if !(MIN_REPLICATES..=MAX_REPLICATES).contains(&total) {
            return Err(Error::Data(format!(
                "replicate total {total}; expected {MIN_REPLICATES} to {MAX_REPLICATES}"
            )));
        }
        Ok(())
    }

    fn check_markers<'a>(&self, panel: &MarkerPanel, names: impl Iterator<Item = &'a String>) -> Result<()> {
        let mut seen = BTreeSet::new();
        for m in names {
            if panel.index_of(m).is_none() {
                return Err(Error::UnknownMarker(m.clone()));
            }
            seen.insert(m.as_str());
        }
        if let Some(missing) = panel.markers.iter().find(|m| !seen.contains(m.as_str())) {
            return Err(Error::Data(format!("marker {missing} is missing from the observation")));
        }
        Ok(())
    }

    fn panel_replicates(&self, panel: &MarkerPanel) -> Result<Vec<Replicate>> {
        self.replicates
            .iter()
            .map(|rep| {
                self.check_markers(panel, rep.keys())?;
                let rfu = panel.markers.iter().map(|m| rep[m]).collect();
                Replicate::new(rfu, vec![true; panel.housekeeping.len()])
            })
            .collect()
    }

    /// Detection counts in panel order, dichotomizing replicates if needed.
    pub fn counts(&self, panel: &MarkerPanel) -> Result<Vec<MarkerCount>> {
        self.validate()?;
        if self.replicates.is_empty() {
            self.check_markers(panel, self.markers.keys())?;
            return Ok(panel.markers.iter().map(|m| self.markers[m]).collect());
        }
        let reps = self.panel_replicates(panel)?;
        let total = reps.len() as u32;
        Ok((0..panel.len())
            .map(|i| MarkerCount {
                detected: reps.iter().filter(|r| r.rfu[i] >= panel.threshold_rfu).count() as u32,
                total,
            })
            .collect())
    }

    /// Observation expressed in the counts form.
    pub fn to_counts(&self, panel: &MarkerPanel) -> Result<CaseObservation> {
        let counts = self.counts(panel)?;
        Ok(CaseObservation {
            markers: panel.markers.iter().cloned().zip(counts).collect(),
            replicates: Vec::new(),
        })
    }

    /// Model features in panel order.
    pub fn features(&self, panel: &MarkerPanel, mode: FeatureMode) -> Result<Vec<f64>> {
        self.validate()?;
        if !self.replicates.is_empty() {
            return mode.features(&self.panel_replicates(panel)?, panel.threshold_rfu);
        }
        if mode != FeatureMode::Dichotomized {
            return Err(Error::Data(format!(
                "a {} model needs raw replicate rfu, not detection counts",
                mode.name()
            )));
        }
        Ok(self
            .counts(panel)?
            .iter()
            .map(|c| f64::from(c.detected) / f64::from(c.total))
            .collect())
    }
}

/// Indicative markers per fluid, for the n/2 rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerFluidMap(pub BTreeMap<BodyFluid, Vec<String>>);

impl Default for MarkerFluidMap {
    fn default() -> Self {
        let set = |m: &[&str]| m.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        MarkerFluidMap(BTreeMap::from([
            (BodyFluid::Blood, set(&["HBB", "ALAS2", "CD93"])),
            (BodyFluid::Saliva, set(&["HTN3", "STATH"])),
            (BodyFluid::NasalMucosa, set(&["BPIFA1"])),
            (BodyFluid::VaginalMucosa, set(&["MUC4", "MYOZ1", "CYP2B7P1"])),
            (BodyFluid::MenstrualSecretion, set(&["MMP10", "MMP7", "MMP11"])),
            (BodyFluid::SemenFertile, set(&["SEMG1", "KLK3", "PRM1"])),
            (BodyFluid::SemenSterile, set(&["SEMG1", "KLK3"])),
            (BodyFluid::Skin, Vec::new()),
            (BodyFluid::SkinPenile, Vec::new()),
        ]))
    }
}

impl MarkerFluidMap {
    pub fn markers_for(&self, fluid: BodyFluid) -> &[String] {
        self.0.get(&fluid).map_or(&[], Vec::as_slice)
    }

    pub fn validate(&self, panel: &MarkerPanel) -> Result<()> {
        match self.0.values().flatten().find(|m| panel.index_of(m).is_none()) {
            Some(m) => Err(Error::UnknownMarker(m.clone())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NOver2Verdict {
    Indication,
    NoReliableStatement,
    NoIndication,
}

impl NOver2Verdict {
    pub const ALL: [NOver2Verdict; 3] = [
        NOver2Verdict::Indication,
        NOver2Verdict::NoReliableStatement,
        NOver2Verdict::NoIndication,
    ];

    pub fn label(self) -> &'static str {
        match self {
            NOver2Verdict::Indication => "indication",
            NOver2Verdict::NoReliableStatement => "no reliable statement possible",
            NOver2Verdict::NoIndication => "no indication",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NOver2Result {
    pub fluids: LabelSet,
    pub x: u32,
    pub n: u32,
    pub verdict: NOver2Verdict,
}

/// The n/2 rule over the indicative markers of `fluids` (pooled, each
/// marker counted once).
pub fn n_over_2(obs: &CaseObservation, fluids: LabelSet, map: &MarkerFluidMap) -> Result<NOver2Result> {
    obs.validate()?;
    if fluids.is_empty() {
        return Err(Error::Config("n/2 needs at least one fluid".into()));
    }
    let mut markers = BTreeSet::new();
    for f in fluids.iter() {
        let m = map.markers_for(f);
        if m.is_empty() {
            return Err(Error::Config(format!("n/2 undefined for this fluid: {f} has no indicative markers")));
        }
        markers.extend(m.iter().cloned());
    }
    let counts: Vec<MarkerCount> = if obs.replicates.is_empty() {
        markers
            .iter()
            .map(|m| obs.markers.get(m).copied().ok_or_else(|| Error::Data(format!("marker {m} is missing from the observation"))))
            .collect::<Result<_>>()?
    } else {
        return Err(Error::Data(
            "n/2 works on detection counts; convert replicates with CaseObservation::to_counts".into(),
        ));
    };
    let x: u32 = counts.iter().map(|c| c.detected).sum();
    let n: u32 = counts.iter().map(|c| c.total).sum();
    let verdict = if x == 0 {
        NOver2Verdict::NoIndication
    } else if 2 * x >= n {
        NOver2Verdict::Indication
    } else {
        NOver2Verdict::NoReliableStatement
    };
    Ok(NOver2Result { fluids, x, n, verdict })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub marker: String,
    pub coefficient: f64,
    pub value: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidVerdict {
    pub fluid: BodyFluid,
    /// `None` when the fluid has no indicative markers.
    pub result: Option<NOver2Result>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub hypothesis: HypothesisPair,
    pub log10_lr: f64,
    pub lr: f64,
    pub capped_lr: f64,
    pub cap: f64,
    pub verbal: VerbalConclusion,
    pub verbal_label: String,
    pub intercept: f64,
    pub contributions: Vec<Contribution>,
    pub n_over_2: Vec<FluidVerdict>,
    pub background: BackgroundLevels,
    pub mode: FeatureMode,
    pub variant_id: String,
    pub variant_key: String,
    /// Detection counts as `detected/total` per marker, when known.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub observed: BTreeMap<String, String>,
}

impl CaseReport {
    /// Sum of intercept and contributions.
    pub fn recomposed(&self) -> f64 {
        self.intercept + self.contributions.iter().map(|c| c.contribution).sum::<f64>()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Worked-equation rendering of the report.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "H1: at least one of {{{}}} is present", self.hypothesis.interest);
        let _ = writeln!(out, "H2: none of them is present");
        if !self.hypothesis.fixed_present.is_empty() {
            let _ = writeln!(out, "agreed present: {}", self.hypothesis.fixed_present);
        }
        if !self.hypothesis.fixed_absent.is_empty() {
            let _ = writeln!(out, "agreed absent: {}", self.hypothesis.fixed_absent);
        }
        let _ = writeln!(out, "background: {}", self.background.key());
        let _ = writeln!(out, "model: {} ({})", self.variant_id, self.variant_key);
        let mut eq = format!("log10 LR = {:.2}", self.intercept);
        for c in self.contributions.iter().filter(|c| c.value != 0.0) {
            let v = self.observed.get(&c.marker).cloned().unwrap_or_else(|| format!("{:.3}", c.value));
            let _ = write!(eq, " + {:.2} * {v} [{}]", c.coefficient, c.marker);
        }
        let _ = writeln!(out, "{eq}");
        let _ = writeln!(out, "          = {:.2}", self.log10_lr);
        let _ = writeln!(out, "LR = {:.4} (reported as {:.4}, cap {})", self.lr, self.capped_lr, self.cap);
        let _ = writeln!(out, "verbal: {}", self.verbal);
        for v in &self.n_over_2 {
            match &v.result {
                Some(r) => {
                    let _ = writeln!(out, "n/2 {}: x = {}, n = {}: {}", v.fluid, r.x, r.n, r.verdict.label());
                }
                None => {
                    let _ = writeln!(out, "n/2 {}: undefined (no indicative markers)", v.fluid);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseOptions {
    pub cap: f64,
}

impl Default for CaseOptions {
    fn default() -> Self {
        CaseOptions { cap: DEFAULT_CAP }
    }
}

fn check_hypothesis(sys: &LrSystem, hp: &HypothesisPair) -> Result<()> {
    hp.validate()?;
    if hp.interest != sys.hypothesis.interest {
        return Err(Error::Config(format!(
            "model {} was trained for interest {}, not {}",
            sys.variant_id(),
            sys.hypothesis.interest,
            hp.interest
        )));
    }
    let present_ok = hp.fixed_present.iter().all(|f| sys.background.get(f) >= 1.0);
    let absent_ok = hp.fixed_absent.iter().all(|f| sys.background.get(f) <= 0.0);
    if !present_ok || !absent_ok {
        return Err(Error::Config(format!(
            "model {} backgrounds ({}) do not realize the agreed fluids",
            sys.variant_id(),
            sys.background.key()
        )));
    }
    Ok(())
}

pub fn evaluate_case(sys: &LrSystem, obs: &CaseObservation, hp: &HypothesisPair) -> Result<CaseReport> {
    evaluate_case_with(sys, obs, hp, &MarkerFluidMap::default(), CaseOptions::default())
}

/// Evaluates a case with a one-vs-rest system. The reported log10 LR is the
/// fused linear predictor, so it decomposes exactly into the intercept plus
/// per-marker contributions.
pub fn evaluate_case_with(
    sys: &LrSystem,
    obs: &CaseObservation,
    hp: &HypothesisPair,
    map: &MarkerFluidMap,
    opts: CaseOptions,
) -> Result<CaseReport> {
    check_hypothesis(sys, hp)?;
    let fused = sys
        .fused()
        .ok_or_else(|| Error::Config("case evaluation needs a one-vs-rest model".into()))?;
    let panel = sys.panel();
    let features = obs.features(&panel, sys.mode)?;
    let terms = fused.contributions(&features)?;
    let log10_lr = fused.intercept + terms.iter().sum::<f64>();
    if !log10_lr.is_finite() {
        return Err(Error::Numeric("log10 LR is not finite".into()));
    }
    let lr = LRValue::from_log10(log10_lr);
    let capped = cap_lr(lr, opts.cap)?;
    let verbal = verbal_scale(capped);
    let counts = obs.counts(&panel).ok();
    let n_over_2_rows = match &counts {
        Some(c) => {
            let count_obs = CaseObservation {
                markers: panel.markers.iter().cloned().zip(c.iter().copied()).collect(),
                replicates: Vec::new(),
            };
            hp.interest
                .iter()
                .map(|f| FluidVerdict {
                    fluid: f,
                    result: n_over_2(&count_obs, LabelSet::single(f), map).ok(),
                })
                .collect()
        }
        None => Vec::new(),
    };
    let contributions = panel
        .markers
        .iter()
        .zip(&fused.coefficients)
        .zip(features.iter().zip(&terms))
        .map(|((m, b), (v, t))| Contribution {
            marker: m.clone(),
            coefficient: *b,
            value: *v,
            contribution: *t,
        })
        .collect();
    Ok(CaseReport {
        hypothesis: *hp,
        log10_lr,
        lr: 10f64.powf(log10_lr),
        capped_lr: capped.lr,
        cap: opts.cap,
        verbal,
        verbal_label: verbal.to_string(),
        intercept: fused.intercept,
        contributions,
        n_over_2: n_over_2_rows,
        background: sys.background,
        mode: sys.mode,
        variant_id: sys.variant_id(),
        variant_key: sys.variant_key(),
        observed: counts
            .map(|c| {
                panel
                    .markers
                    .iter()
                    .zip(c)
                    .map(|(m, c)| (m.clone(), format!("{}/{}", c.detected, c.total)))
                    .collect()
            })
            .unwrap_or_default(),
    })
}

/// What a store is asked for: a one-vs-rest variant for an interest set
/// under given (effective) background levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantQuery {
    pub interest: LabelSet,
    pub background: BackgroundLevels,
    pub mode: Option<FeatureMode>,
    pub strategy: Strategy,
}

impl VariantQuery {
    pub fn matches(&self, sys: &LrSystem) -> bool {
        sys.hypothesis.interest == self.interest
            && sys.background == self.background
            && sys.strategy == self.strategy
            && self.mode.is_none_or(|m| m == sys.mode)
    }
}

/// Trains a missing variant on demand.
pub type Trainer = Box<dyn Fn(&VariantQuery) -> Result<LrSystem> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub id: String,
    pub key: String,
    pub interest: LabelSet,
    pub fixed_present: LabelSet,
    pub fixed_absent: LabelSet,
    pub background: BackgroundLevels,
    pub mode: FeatureMode,
    pub strategy: Strategy,
    pub seed: u64,
    pub lambda: f64,
    pub calibrator: Calibrator,
    /// Classifier intercept and per-marker coefficients (one-vs-rest only).
    pub intercept: Option<f64>,
    pub coefficients: Option<BTreeMap<String, f64>>,
    pub n_classes: Option<usize>,
}

impl VariantSummary {
    pub fn of(sys: &LrSystem) -> Self {
        let (intercept, coefficients, n_classes) = match &sys.classifier {
            Classifier::Binary(m) => (
                Some(m.intercept),
                Some(sys.markers.iter().cloned().zip(m.coefficients.iter().copied()).collect()),
                None,
            ),
            Classifier::Powerset(m) => (None, None, Some(m.classes.len())),
        };
        VariantSummary {
            id: sys.variant_id(),
            key: sys.variant_key(),
            interest: sys.hypothesis.interest,
            fixed_present: sys.hypothesis.fixed_present,
            fixed_absent: sys.hypothesis.fixed_absent,
            background: sys.background,
            mode: sys.mode,
            strategy: sys.strategy,
            seed: sys.seed,
            lambda: sys.lambda,
            calibrator: sys.calibrator,
            intercept,
            coefficients,
            n_classes,
        }
    }
}

/// Model variants keyed by id. Reads run concurrently; inserting a variant,
/// including training one on demand, is serialized.
#[derive(Default)]
pub struct ModelStore {
    models: RwLock<BTreeMap<String, Arc<LrSystem>>>,
    trainer: Option<Mutex<Trainer>>,
}

impl std::fmt::Debug for ModelStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelStore")
            .field("variants", &self.ids())
            .field("training", &self.trainer.is_some())
            .finish()
    }
}

impl ModelStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_trainer(mut self, trainer: Trainer) -> Self {
        self.trainer = Some(Mutex::new(trainer));
        self
    }

    pub fn training_enabled(&self) -> bool {
        self.trainer.is_some()
    }

    /// Loads every `*.json` model in `dir`, in file-name order.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let store = Self::new();
        for p in paths {
            store.insert(LrSystem::load(&p)?);
        }
        Ok(store)
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, BTreeMap<String, Arc<LrSystem>>> {
        self.models.read().unwrap_or_else(|e| e.into_inner())
    }

    /// Adds (or replaces) a variant and returns its id.
    pub fn insert(&self, sys: LrSystem) -> String {
        let id = sys.variant_id();
        self.models
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id.clone(), Arc::new(sys));
        id
    }

    pub fn ids(&self) -> Vec<String> {
        self.read().keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.read().is_empty()
    }

    pub fn get(&self, id: &str) -> Result<Arc<LrSystem>> {
        self.read()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownVariant(id.to_string()))
    }

    /// Summaries ordered by variant id.
    pub fn list(&self) -> Vec<VariantSummary> {
        self.read().values().map(|s| VariantSummary::of(s)).collect()
    }

    /// First stored match in id order, preferring dichotomized features
    /// when the query leaves the mode open.
    pub fn find(&self, q: &VariantQuery) -> Option<Arc<LrSystem>> {
        let models = self.read();
        let mut hits = models.values().filter(|s| q.matches(s));
        let first = hits.next()?;
        if first.mode == FeatureMode::Dichotomized {
            return Some(first.clone());
        }
        Some(
            hits.find(|s| s.mode == FeatureMode::Dichotomized)
                .unwrap_or(first)
                .clone(),
        )
    }

    /// A matching variant, trained and inserted on demand when allowed.
    pub fn resolve(&self, q: &VariantQuery) -> Result<Arc<LrSystem>> {
        if let Some(s) = self.find(q) {
            return Ok(s);
        }
        let Some(trainer) = &self.trainer else {
            return Err(Error::NoModel(format!(
                "interest {} with background {} (training disabled; available: [{}])",
                q.interest,
                q.background.key(),
                self.ids().join(", ")
            )));
        };
        let trainer = trainer.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(s) = self.find(q) {
            return Ok(s);
        }
        let sys = trainer(q)?;
        if !q.matches(&sys) {
            return Err(Error::Numeric("on-demand training produced a different variant".into()));
        }
        let id = self.insert(sys);
        self.get(&id)
    }
}

/// Re-evaluates a case under other background levels, using the store's
/// one-vs-rest variant for those levels.
pub fn what_if(store: &ModelStore, obs: &CaseObservation, hp: &HypothesisPair, bg_override: &BackgroundLevels) -> Result<CaseReport> {
    hp.validate()?;
    bg_override.validate()?;
    let q = VariantQuery {
        interest: hp.interest,
        background: hp.effective_background(bg_override),
        mode: None,
        strategy: Strategy::OneVsRest,
    };
    let sys = store.resolve(&q)?;
    evaluate_case(&sys, obs, hp)
}
