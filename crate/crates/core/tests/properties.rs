use proptest::prelude::*;

use mixlr::augmentation::{mix_labels, BackgroundLevels, FeatureMode};
use mixlr::calibrate::{apply_calibrator, fuse_coefficients, Calibrator, LRValue};
use mixlr::casework::{evaluate_case, n_over_2, CaseObservation, MarkerFluidMap};
use mixlr::classify::{train_binary_logreg, BinaryLogReg, TrainingConfig};
use mixlr::fixtures;
use mixlr::metrics::{cap_lr, cllr, roc_auc, verbal_scale, Direction, Strength};
use mixlr::profiles::{dichotomize, replicate_fractions, BodyFluid, LabelSet, MarkerPanel, Replicate};
use mixlr::seed;

fn log10_lrs(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-6.0f64..6.0, 1..max)
}

fn lrs(v: &[f64]) -> Vec<LRValue> {
    v.iter().map(|x| LRValue::from_log10(*x)).collect()
}

fn replicate(p: usize) -> impl Strategy<Value = Replicate> {
    prop::collection::vec(0.0f64..3000.0, p).prop_map(|rfu| Replicate::new(rfu, vec![true, true]).unwrap())
}

proptest! {
    #[test]
    fn cllr_is_order_invariant_and_non_negative(h1 in log10_lrs(40), h2 in log10_lrs(40), k in 0usize..40) {
        let a = cllr(&lrs(&h1), &lrs(&h2)).unwrap();
        let (mut r1, mut r2) = (h1.clone(), h2.clone());
        r1.rotate_left(k % h1.len());
        r2.reverse();
        let b = cllr(&lrs(&r1), &lrs(&r2)).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn cllr_falls_when_evidence_improves(h1 in log10_lrs(20), h2 in log10_lrs(20), i in 0usize..20, d in 0.01f64..3.0) {
        let base = cllr(&lrs(&h1), &lrs(&h2)).unwrap();
        let mut up = h1.clone();
        up[i % h1.len()] += d;
        prop_assert!(cllr(&lrs(&up), &lrs(&h2)).unwrap() < base);
        let mut down = h2.clone();
        down[i % h2.len()] -= d;
        prop_assert!(cllr(&lrs(&h1), &lrs(&down)).unwrap() < base);
    }

    #[test]
    fn auc_ignores_monotone_transforms(scores in prop::collection::vec(-5.0f64..5.0, 2..60), seed in any::<u64>(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
        let mut rng = seed::rng(seed);
        let mut flags: Vec<bool> = scores.iter().map(|_| rand::Rng::random_bool(&mut rng, 0.5)).collect();
        flags[0] = true;
        flags[1] = false;
        let base = roc_auc(&scores, &flags).unwrap().auc;
        let affine: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
        let cubed: Vec<f64> = scores.iter().map(|s| s.powi(3) + s).collect();
        let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        for t in [affine, cubed, exp] {
            prop_assert!((roc_auc(&t, &flags).unwrap().auc - base).abs() <= 1e-12);
        }
    }

    #[test]
    fn cap_is_idempotent_and_limits_verbal_strength(l in -12.0f64..12.0, cap in 2.0f64..1e6) {
        let once = cap_lr(LRValue::from_log10(l), cap).unwrap();
        let twice = cap_lr(once, cap).unwrap();
        prop_assert_eq!(once, twice);
        prop_assert!(once.lr <= cap * (1.0 + 1e-12) && once.lr >= (1.0 / cap) * (1.0 - 1e-12));
        let v = verbal_scale(cap_lr(LRValue::from_log10(l), 1000.0).unwrap());
        prop_assert!(v.strength <= Strength::ModeratelyStrong);
    }

    #[test]
    fn verbal_direction_follows_lr(l in -8.0f64..8.0) {
        let v = verbal_scale(LRValue::from_log10(l));
        let lr = 10f64.powf(l);
        let want = if lr < 0.5 { Direction::H2 } else if lr <= 2.0 { Direction::Neither } else { Direction::H1 };
        prop_assert_eq!(v.direction, want);
    }

    #[test]
    fn calibration_is_strictly_monotone(a0 in -3.0f64..3.0, a1 in 0.01f64..5.0, s in -9.0f64..9.0, d in 0.001f64..1.0) {
        let c = Calibrator { a0, a1, prior_log_odds: 0.0 };
        let lo = apply_calibrator(&c, 10f64.powf(s)).unwrap();
        let hi = apply_calibrator(&c, 10f64.powf((s + d).min(10.0))).unwrap();
        prop_assert!(hi.log10_lr > lo.log10_lr);
    }

    #[test]
    fn fused_model_equals_composition(
        b0 in -3.0f64..3.0,
        b in prop::collection::vec(-3.0f64..3.0, 15),
        r in prop::collection::vec(0.0f64..1.0, 15),
        a0 in -2.0f64..2.0,
        a1 in 0.05f64..3.0,
        prior in -1.0f64..1.0,
    ) {
        let m = BinaryLogReg::new(b0, b);
        let c = Calibrator { a0, a1, prior_log_odds: prior };
        let raw = m.log10_score(&r).unwrap();
        prop_assume!(raw.abs() < 10.0);
        let composed = apply_calibrator(&c, 10f64.powf(raw)).unwrap().log10_lr;
        let fused = fuse_coefficients(&c, &m).log10_score(&r).unwrap();
        prop_assert!((composed - fused).abs() <= 1e-12 * composed.abs().max(1.0));
    }

    #[test]
    fn binary_score_is_log_linear(b0 in -3.0f64..3.0, b in prop::collection::vec(-3.0f64..3.0, 6), r in prop::collection::vec(0.0f64..1.0, 6)) {
        let m = BinaryLogReg::new(b0, b.clone());
        let diff = m.log10_score(&r).unwrap() - m.log10_score(&[0.0; 6]).unwrap();
        let sum: f64 = b.iter().zip(&r).map(|(x, y)| x * y).sum();
        prop_assert!((diff - sum).abs() <= 1e-12);
    }

    #[test]
    fn replicate_fractions_ignore_order(reps in prop::collection::vec(replicate(5), 2..5), k in 0usize..4) {
        let a = replicate_fractions(&reps, 150.0).unwrap();
        let mut shuffled = reps.clone();
        shuffled.rotate_left(k % reps.len());
        shuffled.reverse();
        prop_assert_eq!(a, replicate_fractions(&shuffled, 150.0).unwrap());
    }

    #[test]
    fn dichotomize_is_idempotent(rep in replicate(8)) {
        let once = dichotomize(&rep, 150.0);
        let scaled = Replicate::new(once.iter().map(|&d| f64::from(d) * 150.0).collect(), vec![true, true]).unwrap();
        prop_assert_eq!(dichotomize(&scaled, 150.0), once);
    }

    #[test]
    fn label_sets_round_trip_through_text(bits in 1u16..512) {
        let s = LabelSet::from_bits(bits);
        prop_assert_eq!(s.to_string().parse::<LabelSet>().unwrap(), s);
    }

    #[test]
    fn certain_backgrounds_are_respected(levels in prop::collection::vec(prop::sample::select(vec![0.0, 0.3, 0.5, 1.0]), 9), seed in any::<u64>()) {
        let mut bg = BackgroundLevels::uniform(0.5);
        for (f, l) in BodyFluid::ALL.iter().zip(&levels) {
            bg.set(*f, *l);
        }
        let mut rng = seed::rng(seed);
        for _ in 0..20 {
            let labels = mix_labels(&bg, None, &mut rng).unwrap();
            for f in BodyFluid::ALL {
                if bg.get(f) == 0.0 { prop_assert!(!labels.contains(f)); }
                if bg.get(f) == 1.0 { prop_assert!(labels.contains(f)); }
            }
        }
    }

    #[test]
    fn derived_seeds_are_pure(master in any::<u64>(), path in prop::collection::vec(any::<u64>(), 0..4)) {
        prop_assert_eq!(seed::derive_seed(master, &path), seed::derive_seed(master, &path));
    }
}

fn observation(detected: &[u32], totals: u32) -> CaseObservation {
    CaseObservation::from_counts(&MarkerPanel::default().markers, detected, totals).unwrap()
}

fn counts() -> impl Strategy<Value = (Vec<u32>, u32)> {
    (2u32..=4).prop_flat_map(|t| (prop::collection::vec(0..=t, 15), Just(t)))
}

proptest! {
    #[test]
    fn contributions_sum_to_log10_lr((d, t) in counts()) {
        let sys = fixtures::reference_system();
        let r = evaluate_case(&sys, &observation(&d, t), &sys.hypothesis).unwrap();
        prop_assert!((r.recomposed() - r.log10_lr).abs() <= 1e-9);
        prop_assert_eq!(r.contributions.len(), 15);
    }

    #[test]
    fn more_detections_move_lr_with_coefficient_sign((d, t) in counts(), i in 0usize..15) {
        prop_assume!(d[i] < t);
        let sys = fixtures::reference_system();
        let base = evaluate_case(&sys, &observation(&d, t), &sys.hypothesis).unwrap().log10_lr;
        let mut up = d.clone();
        up[i] += 1;
        let next = evaluate_case(&sys, &observation(&up, t), &sys.hypothesis).unwrap().log10_lr;
        let beta = fixtures::REFERENCE_DEFAULT.1[i];
        if beta > 0.0 { prop_assert!(next > base); }
        if beta < 0.0 { prop_assert!(next < base); }
        if beta == 0.0 { prop_assert_eq!(next, base); }
    }

    #[test]
    fn n_over_2_ignores_marker_and_replicate_order(
        reps in prop::collection::vec(replicate(15), 2..=4),
        interest in 1u16..512,
        k in 0usize..4,
    ) {
        let panel = MarkerPanel::default();
        let interest = LabelSet::from_bits(interest);
        let map = MarkerFluidMap::default();
        prop_assume!(interest.iter().any(|f| !map.markers_for(f).is_empty()));
        let a = CaseObservation::from_replicates(&panel, &reps).unwrap();
        let mut shuffled = reps.clone();
        shuffled.rotate_left(k % reps.len());
        let b = CaseObservation::from_replicates(&panel, &shuffled).unwrap();
        let ra = n_over_2(&a.to_counts(&panel).unwrap(), interest, &map);
        let rb = n_over_2(&b.to_counts(&panel).unwrap(), interest, &map);
        match (ra, rb) {
            (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "verdicts disagree on definedness"),
        }
        // Marker order is irrelevant: build the counts map in reverse.
        let c = a.to_counts(&panel).unwrap();
        let reversed = CaseObservation {
            markers: c.markers.iter().rev().map(|(m, n)| (m.clone(), *n)).collect(),
            replicates: Vec::new(),
        };
        prop_assert_eq!(
            n_over_2(&c, interest, &map).ok(),
            n_over_2(&reversed, interest, &map).ok()
        );
    }

    #[test]
    fn evaluation_is_pure((d, t) in counts()) {
        let sys = fixtures::reference_system();
        let obs = observation(&d, t);
        let a = evaluate_case(&sys, &obs, &sys.hypothesis).unwrap().to_json().unwrap();
        let b = evaluate_case(&sys, &obs, &sys.hypothesis).unwrap().to_json().unwrap();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn training_ignores_row_order(seed in any::<u64>(), k in 1usize..50) {
        let mut rng = seed::rng(seed);
        let x: Vec<Vec<f64>> = (0..60).map(|_| (0..4).map(|_| f64::from(rand::Rng::random_range(&mut rng, 0..=4u8)) / 4.0).collect()).collect();
        let y: Vec<bool> = x.iter().map(|r| r[0] + r[1] + rand::Rng::random_range(&mut rng, -0.8..0.8) > 1.0).collect();
        prop_assume!(y.iter().any(|v| *v) && y.iter().any(|v| !*v));
        let cfg = TrainingConfig { lambda: 1e-2, ..TrainingConfig::default() };
        let a = train_binary_logreg(&x, &y, &cfg).unwrap();
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.rotate_left(k);
        let xs: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
        let ys: Vec<bool> = idx.iter().map(|&i| y[i]).collect();
        let b = train_binary_logreg(&xs, &ys, &cfg).unwrap();
        prop_assert!((a.intercept - b.intercept).abs() <= 1e-6);
        for (p, q) in a.coefficients.iter().zip(&b.coefficients) {
            prop_assert!((p - q).abs() <= 1e-6);
        }
    }

    #[test]
    fn training_is_independent_of_start(seed in any::<u64>(), start in any::<u64>()) {
        let mut rng = seed::rng(seed);
        let x: Vec<Vec<f64>> = (0..50).map(|_| (0..3).map(|_| rand::Rng::random_range(&mut rng, 0.0..1.0)).collect()).collect();
        let y: Vec<bool> = x.iter().map(|r| r[2] + rand::Rng::random_range(&mut rng, -0.5..0.5) > 0.5).collect();
        prop_assume!(y.iter().any(|v| *v) && y.iter().any(|v| !*v));
        let cfg = TrainingConfig { lambda: 1e-2, ..TrainingConfig::default() };
        let a = train_binary_logreg(&x, &y, &cfg).unwrap();
        let b = train_binary_logreg(&x, &y, &TrainingConfig { seed: Some(start), ..cfg }).unwrap();
        let tol = 10.0 * cfg.tolerance;
        prop_assert!((a.intercept - b.intercept).abs() <= tol);
        for (p, q) in a.coefficients.iter().zip(&b.coefficients) {
            prop_assert!((p - q).abs() <= tol);
        }
    }
}

#[test]
fn dichotomized_features_lie_on_replicate_grid() {
    let cfg = mixlr::pipeline::ExperimentConfig::default();
    let singles = cfg.load_singles().unwrap();
    let ds = mixlr::augmentation::build_augmented_dataset(
        &singles,
        &BackgroundLevels::default(),
        mixlr::system::count_for(&BackgroundLevels::default(), 1),
        FeatureMode::Dichotomized,
        3,
    )
    .unwrap();
    for s in &ds.samples {
        let m = s.replicates.len() as f64;
        for v in &s.features {
            assert!((v * m - (v * m).round()).abs() < 1e-12 && (0.0..=1.0).contains(v));
        }
    }
}
