//! The `referkit` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use referkit::referral::retained_indices;
use referkit::UncertaintySpec;
use referkit_cli::config::MeasureName;
use referkit_cli::formats::{load_dataset, load_predictions, load_stack};
use referkit_cli::{analyze, RunConfig};
use serde_json::Value;

fn referkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_referkit")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = referkit(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn error_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&out.stderr)))
}

fn golden(file: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden").join(file).display().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_ordinal(dir: &Path, seed: &str) -> PathBuf {
    let out = dir.join(format!("gen-{seed}"));
    ok(&["gen-data", "--kind", "ordinal", "--n", "1000", "--spread", "0.6", "--seed", seed, "--out-dir", s(&out)]);
    out
}

#[test]
fn gen_data_sizes_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_ordinal(dir.path(), "3");
    let b = dir.path().join("again");
    ok(&["gen-data", "--kind", "ordinal", "--n", "1000", "--spread", "0.6", "--seed", "3", "--out-dir", s(&b)]);

    for file in ["train.csv", "validation.csv", "test.csv", "validation_confusion.csv", "generation.json"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    let sizes: Vec<usize> = ["train.csv", "validation.csv", "test.csv"]
        .iter()
        .map(|f| load_dataset(&a.join(f), Some(5)).unwrap().len())
        .collect();
    assert_eq!(sizes, [700, 100, 200]);
    let confusion = referkit_cli::formats::load_confusion(&a.join("validation_confusion.csv")).unwrap();
    assert_eq!((confusion.n_classes(), confusion.total()), (5, 100));

    let c = gen_ordinal(dir.path(), "4");
    assert_ne!(std::fs::read(a.join("test.csv")).unwrap(), std::fs::read(c.join("test.csv")).unwrap());
}

#[test]
fn map_separates_zero_overlap_blobs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("blobs");
    ok(&["gen-data", "--kind", "blobs", "--n", "1000", "--classes", "2", "--spread", "0.2", "--seed", "5", "--out-dir", s(&data)]);
    let train = data.join("train.csv");
    let (model, stack) = (d.join("model.json"), d.join("stack.csv"));
    ok(&["train-toy", "--data", s(&train), "--method", "map", "--epochs", "30", "--seed", "5", "--output", s(&model)]);
    ok(&["predict-toy", "--model", s(&model), "--data", s(&train), "--samples", "1", "--seed", "6", "--output", s(&stack)]);

    let preds = referkit::aggregate(&load_stack(&stack).unwrap()).unwrap();
    let correct = (0..preds.n_examples()).filter(|&i| preds.argmax(i) == preds.labels()[i]).count();
    assert_eq!(preds.n_examples(), 700);
    assert!(correct as f64 / 700.0 >= 0.99, "train accuracy {correct}/700");
}

#[test]
fn bare_ensemble_flag_trains_three_members() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("blobs");
    ok(&["gen-data", "--kind", "blobs", "--n", "100", "--seed", "1", "--out-dir", s(&data)]);
    let train = data.join("train.csv");
    let members = |extra: &[&str]| {
        let model = d.join("model.json");
        let mut args = vec!["train-toy", "--data", s(&train), "--epochs", "1", "--seed", "2", "--output", s(&model)];
        args.extend_from_slice(extra);
        ok(&args);
        let bundle: Value = serde_json::from_slice(&std::fs::read(&model).unwrap()).unwrap();
        bundle["members"].as_array().unwrap().len()
    };
    assert_eq!(members(&[]), 1);
    assert_eq!(members(&["--ensemble"]), 3);
    assert_eq!(members(&["--ensemble", "5"]), 5);
}

#[test]
fn analyze_writes_report_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let p = golden("predictions.csv");
    let args = ["analyze", "--predictions", &p, "--scheme", "pirc5", "--seed", "9", "--output", s(&report)];
    ok(&args);
    let first = std::fs::read(&report).unwrap();
    ok(&args);
    assert_eq!(first, std::fs::read(&report).unwrap());

    let json: Value = serde_json::from_slice(&first).unwrap();
    let levels = json["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 3);
    assert_eq!(levels.iter().filter(|l| l["marker"].is_string()).count(), 2);
    assert!(levels[0]["marker"].is_null());

    let plot = std::fs::read_to_string(dir.path().join("r.plot.csv")).unwrap();
    let lines: Vec<&str> = plot.lines().collect();
    assert_eq!(lines[0], "level,mean,std");
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[2].split(',').map(|c| c.parse::<f64>().unwrap()).collect::<Vec<_>>(), [
        0.3,
        levels[1]["mean"].as_f64().unwrap(),
        levels[1]["std"].as_f64().unwrap()
    ]);
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "stack = {:?}\nconfusion = {:?}\nscheme = \"pirc5\"\nmeasure = \"qwk_risk\"\nseed = 1\noutput = \"out/report.json\"\n",
            golden("stack.csv"),
            golden("confusion.csv")
        ),
    )
    .unwrap();
    ok(&["analyze", "--config", s(&config), "--bootstrap", "20", "--levels", "0,0.2,0.4,0.6"]);
    let json: Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(json["n_resamples"], 20);
    assert_eq!(json["levels"].as_array().unwrap().len(), 4);
    assert_eq!(json["config"]["output"], "out/report.json");
    assert_eq!(json["measure"], "qwk_risk");
}

#[test]
fn every_report_matches_the_schema() {
    let schema: Value =
        serde_json::from_str(include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/report.schema.json")))
            .unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (p, st, c) = (golden("predictions.csv"), golden("stack.csv"), golden("confusion.csv"));
    let runs: Vec<Vec<&str>> = vec![
        vec!["--predictions", &p, "--scheme", "pirc5", "--measure", "max_prob"],
        vec!["--stack", &st, "--confusion", &c, "--measure", "qwk_risk", "--smoothing", "1"],
        vec!["--predictions", &p, "--scheme", "rdr2", "--metric", "auc", "--measure", "zero_one_risk"],
        // Heavy referral on a small resample budget: AUC can lose a class.
        vec!["--predictions", &p, "--scheme", "rdr2", "--metric", "auc", "--levels", "0,0.9,0.99", "--bootstrap", "5"],
    ];
    for (k, extra) in runs.iter().enumerate() {
        let out = dir.path().join(format!("r{k}.json"));
        let mut args = vec!["analyze", "--seed", "3", "--output", s(&out)];
        args.extend(extra.iter().copied());
        ok(&args);
        let report: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&report).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "run {k}: {errors:?}");
    }
}

#[test]
fn entropy_and_nll_risk_refer_identically() {
    let preds = load_predictions(Path::new(&golden("predictions_shuffled.csv"))).unwrap();
    let h = UncertaintySpec::Entropy.compute(&preds).unwrap();
    let r = UncertaintySpec::GenericRisk(referkit::uncertainty::GenericLoss::NegLogLikelihood).compute(&preds).unwrap();
    for level in [0.0, 0.1, 0.25, 0.3, 0.5, 0.75, 0.9] {
        assert_eq!(retained_indices(h.values(), level).unwrap(), retained_indices(r.values(), level).unwrap());
    }

    let base = RunConfig {
        predictions: Some(golden("predictions_shuffled.csv").into()),
        stack: None,
        confusion: None,
        scheme: None,
        measure: MeasureName::Entropy,
        smoothing: 0.0,
        levels: vec![0.0, 0.3, 0.5],
        metric: referkit_cli::config::MetricName::Qwk,
        bootstrap: 30,
        seed: 4,
        output: "unused.json".into(),
        plot_output: None,
    };
    let nll = RunConfig { measure: MeasureName::NllRisk, ..base.clone() };
    let (a, b) = (analyze(&base, &base).unwrap(), analyze(&nll, &nll).unwrap());
    assert_eq!(a.levels, b.levels);
}

#[test]
fn failures_exit_nonzero_with_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let p = golden("predictions.csv");

    let res = referkit(&["analyze", "--predictions", &p, "--measure", "qwk_risk", "--seed", "1", "--output", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(error_json(&res)["error"]["kind"], "invalid_config");

    let res = referkit(&["analyze", "--predictions", &p, "--scheme", "pirc5", "--metric", "auc", "--seed", "1", "--output", s(&out)]);
    assert_eq!(res.status.code(), Some(2));

    let res = referkit(&["analyze", "--predictions", "/nonexistent/p.csv", "--seed", "1", "--output", s(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(error_json(&res)["error"]["kind"], "io");

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "id,label,p0,p1\na,0,0.5,0.5\nb,1,0.9,0.3\n").unwrap();
    let res = referkit(&["analyze", "--predictions", s(&bad), "--seed", "1", "--output", s(&out)]);
    assert_eq!(res.status.code(), Some(1));
    let err = error_json(&res);
    assert_eq!(err["error"]["kind"], "invalid_probability_row");
    assert!(err["error"]["message"].as_str().unwrap().contains("line 3"), "{err}");

    let res = referkit(&["gen-data", "--kind", "blobs", "--n", "10", "--classes", "1", "--seed", "1", "--out-dir", s(dir.path())]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(error_json(&res)["error"]["kind"], "invalid_spec");

    // No report is left behind by a failed run.
    assert!(!out.exists());
}
