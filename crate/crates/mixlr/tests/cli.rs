use std::path::{Path, PathBuf};

use mixlr::casework::CaseObservation;
use mixlr::fixtures;
use mixlr::system::LrSystem;
use mixlr_app::cli::run;

const SMALL: &str = r#"
seed = 5
runs = 2
interest_sets = ["vaginal_mucosa+menstrual_secretion"]

[data.synthesize]
samples_per_fluid = 10

[augmentation]
train = 1
calibration = 1
test = 1
"#;

fn mixlr(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("mixlr").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn ok(args: &[&str]) -> String {
    let (code, out, err) = mixlr(args);
    assert_eq!(code, 0, "{args:?}: {err}");
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            let bytes = std::fs::read(&path).unwrap();
            (PathBuf::from(path.file_name().unwrap()), bytes)
        })
        .collect();
    v.sort();
    v
}

#[test]
fn synth_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a.csv"), d.path().join("b.csv"));
    ok(&["synth", "--out", p(&a), "--seed", "9", "--per-fluid", "5"]);
    ok(&["synth", "--out", p(&b), "--seed", "9", "--per-fluid", "5"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().filter(|l| l.contains("blood")).count() % 4, 0);
    ok(&["synth", "--out", p(&b), "--seed", "10", "--per-fluid", "5"]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn synth_accepts_rate_file() {
    let d = tempfile::tempdir().unwrap();
    let rates = d.path().join("rates.csv");
    std::fs::write(&rates, include_str!("../../core/data/reference_rates.csv")).unwrap();
    let (a, b) = (d.path().join("a.csv"), d.path().join("b.csv"));
    ok(&["synth", "--rates", p(&rates), "--out", p(&a), "--seed", "3", "--per-fluid", "4"]);
    ok(&["synth", "--out", p(&b), "--seed", "3", "--per-fluid", "4"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn train_and_evaluate_are_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let data = d.path().join("singles.csv");
    ok(&["synth", "--out", p(&data), "--seed", "1", "--per-fluid", "12"]);
    let train = |out: &Path| {
        ok(&[
            "train",
            "--data",
            p(&data),
            "--interest",
            "vaginal_mucosa,menstrual_secretion",
            "--strategy",
            "one-vs-rest",
            "--dichotomize",
            "--background",
            "skin_penile=0",
            "--seed",
            "4",
            "--per-combination",
            "2",
            "--out",
            p(out),
        ])
    };
    let (m1, m2) = (d.path().join("m1.json"), d.path().join("m2.json"));
    train(&m1);
    train(&m2);
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
    let sys = LrSystem::load(&m1).unwrap();
    assert_eq!(sys.hypothesis.interest, fixtures::reference_interest());

    let case = d.path().join("case.json");
    std::fs::write(&case, serde_json::to_string(&fixtures::worked_case(3)).unwrap()).unwrap();
    let t1 = ok(&["evaluate", "--model", p(&m1), "--case", p(&case)]);
    let t2 = ok(&["evaluate", "--model", p(&m1), "--case", p(&case)]);
    assert_eq!(t1, t2);
    assert!(t1.contains("log10 LR ="));
    let j = ok(&["evaluate", "--model", p(&m1), "--case", p(&case), "--json"]);
    let v: serde_json::Value = serde_json::from_str(&j).unwrap();
    assert!(v["log10_lr"].as_f64().unwrap().is_finite());
}

#[test]
fn evaluate_fixture_model_reproduces_worked_case() {
    let d = tempfile::tempdir().unwrap();
    let model = d.path().join("reference.json");
    fixtures::reference_system().save(&model).unwrap();
    let case = d.path().join("case.json");
    std::fs::write(&case, serde_json::to_string(&fixtures::worked_case(3)).unwrap()).unwrap();
    let j = ok(&["evaluate", "--model", p(&model), "--case", p(&case), "--json"]);
    let v: serde_json::Value = serde_json::from_str(&j).unwrap();
    assert!((v["log10_lr"].as_f64().unwrap() - 1.5).abs() <= 0.05);
    let obs: CaseObservation = serde_json::from_str(&std::fs::read_to_string(&case).unwrap()).unwrap();
    assert_eq!(obs, fixtures::worked_case(3));
}

#[test]
fn experiment_reports_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("exp.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let (r1, r2) = (d.path().join("r1"), d.path().join("r2"));
    ok(&["experiment", "--config", p(&cfg), "--out", p(&r1)]);
    ok(&["experiment", "--config", p(&cfg), "--out", p(&r2)]);
    let (f1, f2) = (files(&r1), files(&r2));
    let names: Vec<_> = f1.iter().map(|(n, _)| n.to_str().unwrap().to_string()).collect();
    assert_eq!(names, ["metrics.csv", "report.json", "summary.csv", "tippett.csv"]);
    assert_eq!(f1, f2);
}

#[test]
fn sensitivity_reports_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("exp.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let (r1, r2) = (d.path().join("s1"), d.path().join("s2"));
    let o1 = ok(&["sensitivity", "--config", p(&cfg), "--fluid", "blood", "--level", "0.9", "--out", p(&r1)]);
    let o2 = ok(&["sensitivity", "--config", p(&cfg), "--fluid", "blood", "--level", "0.9", "--out", p(&r2)]);
    assert_eq!(o1, o2);
    assert_eq!(files(&r1), files(&r2));
}

#[test]
fn exit_codes_follow_error_kind() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.toml");
    std::fs::write(&cfg, "runs = 0\n").unwrap();
    assert_eq!(mixlr(&["experiment", "--config", p(&cfg), "--out", p(d.path())]).0, 2);
    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    assert_eq!(mixlr(&["experiment", "--config", p(&cfg), "--out", p(d.path())]).0, 2);

    let missing = d.path().join("missing.csv");
    let out = d.path().join("m.json");
    let (code, _, err) = mixlr(&["train", "--data", p(&missing), "--interest", "blood", "--out", p(&out)]);
    assert_eq!(code, 3, "{err}");

    let data = d.path().join("bad.csv");
    std::fs::write(&data, "not,a,profile\n1,2,3\n").unwrap();
    assert_eq!(mixlr(&["train", "--data", p(&data), "--interest", "blood", "--out", p(&out)]).0, 3);

    let (code, _, err) = mixlr(&["frobnicate"]);
    assert_eq!(code, 2);
    assert!(!err.is_empty());
    assert_eq!(mixlr(&["--help"]).0, 0);
}
