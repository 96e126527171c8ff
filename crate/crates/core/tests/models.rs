use rand::Rng as _;
use rand_distr::StandardNormal;

use mixlr::augmentation::{build_augmented_dataset, mix_labels, BackgroundLevels, FeatureMode, HypothesisPair};
use mixlr::calibrate::{apply_calibrator, fit_calibrator};
use mixlr::casework::{evaluate_case, what_if, ModelStore};
use mixlr::classify::{train_binary_logreg, train_powerset_logreg, TrainingConfig};
use mixlr::fixtures;
use mixlr::pipeline::{run_experiment, train_from_singles, ExperimentConfig, FitOptions};
use mixlr::profiles::{detection_rates, synthesize_dataset, BodyFluid, LabelSet, MarkerPanel};
use mixlr::seed;
use mixlr::system::{count_for, log10_scores_on, Strategy};

fn normal(rng: &mut seed::Rng, mu: f64, sd: f64) -> f64 {
    mu + sd * rng.sample::<f64, _>(StandardNormal)
}

#[test]
fn single_fluid_power_set_is_binary_regression() {
    let mut rng = seed::rng(17);
    let f = BodyFluid::Saliva;
    let x: Vec<Vec<f64>> = (0..200).map(|_| (0..4).map(|_| f64::from(rng.random_range(0..=4u8)) / 4.0).collect()).collect();
    let y: Vec<bool> = x.iter().map(|r| r[0] - r[3] + normal(&mut rng, 0.0, 0.4) > 0.0).collect();
    let labels: Vec<LabelSet> = y.iter().map(|&b| if b { LabelSet::single(f) } else { LabelSet::empty() }).collect();
    let cfg = TrainingConfig::default();
    let binary = train_binary_logreg(&x, &y, &cfg).unwrap();
    let power = train_powerset_logreg(&x, &labels, &cfg).unwrap();
    assert_eq!(power.classes.len(), 2);
    for r in &x {
        let b = binary.log10_score(r).unwrap();
        let p = power.score(r, LabelSet::single(f)).unwrap().log10();
        assert!((b - p).abs() <= 1e-6, "{b} vs {p}");
    }
}

#[test]
fn power_set_with_all_fluids_divides_by_the_empty_class() {
    let mut rng = seed::rng(4);
    let fluids = LabelSet::from_iter([BodyFluid::Blood, BodyFluid::SemenFertile, BodyFluid::Skin]);
    let subsets = fluids.subsets();
    let x: Vec<Vec<f64>> = (0..160).map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let labels: Vec<LabelSet> = (0..160).map(|i| subsets[i % subsets.len()]).collect();
    let m = train_powerset_logreg(&x, &labels, &TrainingConfig::default()).unwrap();
    for r in x.iter().take(20) {
        let post = m.posteriors(r).unwrap();
        let want = (1.0 - post[0]) / post[0];
        assert!((m.score(r, fluids).unwrap() - want).abs() <= 1e-12 * want);
    }
}

#[test]
fn scores_a_decade_too_high_are_shifted_down() {
    // Honest binormal log10 LRs: N(+m, 2 m / ln10) under H1, N(-m, 2 m / ln10)
    // under H2. Reporting ten times the honest LR puts s = 1 at LR = 0.1.
    let m = 1.0;
    let sd = (2.0 * m / std::f64::consts::LN_10).sqrt();
    let mut rng = seed::rng(99);
    let n = 5000;
    let mut scores = Vec::with_capacity(2 * n);
    for i in 0..2 * n {
        let honest = normal(&mut rng, if i < n { m } else { -m }, sd);
        scores.push(honest + 1.0);
    }
    let flags: Vec<bool> = (0..2 * n).map(|i| i < n).collect();
    let c = fit_calibrator(&scores, &flags).unwrap();
    let at_one = apply_calibrator(&c, 1.0).unwrap().log10_lr;
    assert!((at_one + 1.0).abs() < 0.1, "log10 LR(s=1) = {at_one}");
    assert!((c.a1 - 1.0).abs() < 0.06, "slope {}", c.a1);

    let honest: Vec<f64> = scores.iter().map(|s| s - 1.0).collect();
    let c = fit_calibrator(&honest, &flags).unwrap();
    assert!((c.a1 - 1.0).abs() < 0.06 && c.a0.abs() < 0.06, "{c:?}");
}

#[test]
fn calibration_signs_mean_lrs_on_its_own_data() {
    let cfg = ExperimentConfig::default();
    let singles = cfg.load_singles().unwrap();
    let hp = HypothesisPair::new(fixtures::reference_interest()).unwrap();
    let sys = train_from_singles(&singles, &hp, &FitOptions { seed: 8, ..FitOptions::default() }).unwrap();
    let bg = BackgroundLevels::default();
    let calib = build_augmented_dataset(&singles, &bg, count_for(&bg, 2), FeatureMode::Dichotomized, 5).unwrap();
    let logs = log10_scores_on(&sys, &calib).unwrap();
    let (mut h1, mut h2) = (Vec::new(), Vec::new());
    for (l, s) in logs.iter().zip(&calib.samples) {
        if hp.holds_h1(s.labels) {
            h1.push(*l);
        } else {
            h2.push(*l);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&h1) >= 0.0 && mean(&h2) <= 0.0);
}

#[test]
fn synthesized_rates_converge_to_the_table() {
    let table = fixtures::reference_rates();
    let panel = MarkerPanel::default();
    // 2500 samples of 4 replicates: 10 000 replicates per fluid.
    let ds = synthesize_dataset(&table, &panel, 2500, 4, 12).unwrap();
    let got = detection_rates(&ds).unwrap();
    for (labels, row) in &table.rows {
        for (m, &p) in panel.markers.iter().zip(row) {
            let se = (p * (1.0 - p) / 10_000.0).sqrt();
            let q = got.rate(*labels, m).unwrap();
            assert!((q - p).abs() <= 3.0 * se + 1e-12, "{labels} {m}: {q} vs {p}");
        }
    }
}

#[test]
fn label_marginals_match_background_levels() {
    let bg = BackgroundLevels::default().with(BodyFluid::Blood, 0.9).with(BodyFluid::Skin, 0.2);
    let mut rng = seed::rng(77);
    let n = 10_000;
    let mut hits = [0usize; BodyFluid::COUNT];
    for _ in 0..n {
        for f in mix_labels(&bg, None, &mut rng).unwrap().iter() {
            hits[f.index()] += 1;
        }
    }
    for f in BodyFluid::ALL {
        let p = bg.get(f);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits[f.index()] as f64 / n as f64 - p).abs() <= 3.0 * se + 1e-12, "{f}");
    }
}

#[test]
fn augmentation_is_reproducible() {
    let singles = ExperimentConfig::default().load_singles().unwrap();
    let bg = BackgroundLevels::default().with(BodyFluid::Blood, 0.9);
    let make = || build_augmented_dataset(&singles, &bg, count_for(&bg, 1), FeatureMode::Raw, 31).unwrap();
    let (a, b) = (make(), make());
    assert_eq!(a, b);
    assert_eq!(mixlr::augmentation::write_augmented_table(&a).unwrap(), mixlr::augmentation::write_augmented_table(&b).unwrap());
}

#[test]
fn penile_skin_lowers_the_muc4_weight() {
    let singles = ExperimentConfig::default().load_singles().unwrap();
    let hp = HypothesisPair::new(fixtures::reference_interest()).unwrap();
    let muc4 = MarkerPanel::default().index_of("MUC4").unwrap();
    for s in 0..4 {
        let singles = singles.clone();
        let store = ModelStore::new().with_trainer(Box::new(move |q| {
            let hp = HypothesisPair::new(q.interest)?;
            train_from_singles(&singles, &hp, &FitOptions { seed: s, background: q.background, ..FitOptions::default() })
        }));
        let obs = fixtures::worked_case(3);
        let base = what_if(&store, &obs, &hp, &BackgroundLevels::default()).unwrap();
        let penile = what_if(&store, &obs, &hp, &BackgroundLevels::default().with(BodyFluid::SkinPenile, 1.0)).unwrap();
        assert_ne!(base.variant_id, penile.variant_id);
        let (b, p) = (base.contributions[muc4].coefficient, penile.contributions[muc4].coefficient);
        assert!(p < b, "seed {s}: MUC4 {b} -> {p}");
        assert_eq!(store.len(), 2);
    }
}

#[test]
fn default_override_matches_direct_evaluation() {
    let store = ModelStore::new();
    store.insert(fixtures::reference_system());
    let sys = fixtures::reference_system();
    let obs = fixtures::worked_case(2);
    let direct = evaluate_case(&sys, &obs, &sys.hypothesis).unwrap();
    assert_eq!(what_if(&store, &obs, &sys.hypothesis, &BackgroundLevels::default()).unwrap(), direct);
    let err = what_if(&store, &obs, &sys.hypothesis, &BackgroundLevels::default().with(BodyFluid::Blood, 0.9)).unwrap_err();
    assert!(err.to_string().contains(&sys.variant_id()));
}

#[test]
fn experiment_grid_is_stable_across_thread_counts() {
    let cfg = ExperimentConfig {
        seed: 21,
        runs: 3,
        strategies: vec![Strategy::OneVsRest, Strategy::PowerSet],
        interest_sets: vec![fixtures::reference_interest(), LabelSet::single(BodyFluid::Blood)],
        augmentation: mixlr::pipeline::AugmentationCounts {
            train: 1,
            calibration: 1,
            test: 1,
        },
        ..ExperimentConfig::default()
    };
    let wide = run_experiment(&cfg).unwrap();
    let narrow = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_experiment(&cfg).unwrap());
    assert_eq!(wide.metrics_csv(), narrow.metrics_csv());
    assert_eq!(wide.tippett_csv(), narrow.tippett_csv());
    assert_eq!(wide.rows.len(), 3 * 2 * 2);
    let hash = cfg.hash();
    for r in &wide.rows {
        assert_eq!(r.config_hash, hash);
        assert!((r.auc - r.raw_auc).abs() <= 1e-12);
    }
    let mut seeds: Vec<u64> = wide.rows.iter().map(|r| r.run_seed).collect();
    seeds.dedup();
    assert_eq!(seeds.len(), 3);
}

#[test]
fn raw_rfu_models_train_on_standardized_features() {
    let singles = ExperimentConfig::default().load_singles().unwrap();
    let hp = HypothesisPair::new(fixtures::reference_interest()).unwrap();
    let bg = BackgroundLevels::default();
    let train = build_augmented_dataset(&singles, &bg, count_for(&bg, 2), FeatureMode::Raw, 41).unwrap();
    for strategy in [Strategy::OneVsRest, Strategy::PowerSet] {
        let c = mixlr::system::fit_classifier(&train, &hp, strategy, &TrainingConfig::default()).unwrap();
        let scaled = match &c {
            mixlr::system::Classifier::Binary(m) => m.scaling.is_some(),
            mixlr::system::Classifier::Powerset(m) => m.scaling.is_some(),
        };
        assert!(scaled, "{strategy}");
        assert!(c.log10_score(&train.samples[0].features, hp.interest).unwrap().is_finite());
    }
}
