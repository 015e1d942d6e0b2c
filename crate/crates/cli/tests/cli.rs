use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jaca::{load_views, train, Dataset, TrainConfig};
use serde_json::{json, Value};
use tempfile::TempDir;

fn jaca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jaca")).args(args).output().expect("run jaca")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_json(path: &Path, value: &Value) -> PathBuf {
    fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path.to_path_buf()
}

fn sim_config(n_labeled: usize, n_unlabeled: usize, p: usize, extra: &[f64], seed: u64) -> Value {
    json!({
        "n_labeled": n_labeled,
        "n_unlabeled": n_unlabeled,
        "n_test": 200,
        "p": [p, p],
        "n_classes": 2,
        "priors": [0.4, 0.6],
        "s": 5,
        "class_strength": 2.0,
        "extra_corrs": extra,
        "cov_kind": [{"kind": "autoregressive", "phi": 0.8}, {"kind": "autoregressive", "phi": 0.5}],
        "seed": seed
    })
}

fn simulate(dir: &Path, cfg: &Value) -> PathBuf {
    let data = dir.join("data");
    let cfg = write_json(&dir.join("sim.json"), cfg);
    let out = jaca(&["simulate", "--config", s(&cfg), "--output", s(&data)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    data
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run_config(dir: &Path, data: &Path, extra: Value) -> PathBuf {
    let mut cfg = json!({
        "views": [data.join("view1.csv"), data.join("view2.csv")],
        "labels": data.join("labels.csv"),
        "seed": 3
    });
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    write_json(&dir.join("run.json"), &cfg)
}

fn line_count(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn case_one_simulation_writes_every_subject() {
    let dir = TempDir::new().unwrap();
    let mut cfg = serde_json::to_value(jaca::SimulationConfig::two_view_case(1, (100, 100), 5).unwrap()).unwrap();
    cfg["n_test"] = json!(0);
    let data = simulate(dir.path(), &cfg);
    for f in ["view1.csv", "view2.csv", "labels.csv"] {
        assert_eq!(line_count(&data.join(f)), 261, "{f}");
    }
    let header = fs::read_to_string(data.join("view1.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap().split(',').count(), 101);
    let labels = fs::read_to_string(data.join("labels.csv")).unwrap();
    let unlabeled = labels.lines().skip(1).filter(|l| l.ends_with(',')).count();
    assert_eq!(unlabeled, 100);
}

#[test]
fn simulation_is_byte_identical_for_a_repeated_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(&dir.path().join("sim.json"), &sim_config(30, 10, 12, &[], 9));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&jaca(&["simulate", "--config", s(&cfg), "--output", s(&a)])), 0);
    assert_eq!(code(&jaca(&["simulate", "--config", s(&cfg), "--output", s(&b)])), 0);
    for f in ["view1.csv", "view2.csv", "labels.csv", "test_view1.csv", "test_labels.csv", "truth.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    assert_eq!(code(&jaca(&["simulate", "--config", s(&cfg), "--output", s(&c), "--seed", "10"])), 0);
    assert_ne!(fs::read(a.join("view1.csv")).unwrap(), fs::read(c.join("view1.csv")).unwrap());
}

#[test]
fn extra_factors_appear_in_the_truth_file() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), &sim_config(30, 0, 12, &[0.6, 0.6, 0.6], 2));
    let truth: Value = serde_json::from_str(&fs::read_to_string(data.join("truth.json")).unwrap()).unwrap();
    for view in truth["views"].as_array().unwrap() {
        let a = view["shared_loadings"].as_array().unwrap();
        assert_eq!(a.len(), 12);
        assert!(a.iter().all(|row| row.as_array().unwrap().len() == 3));
    }
    assert_eq!(truth["config"]["extra_corrs"], json!([0.6, 0.6, 0.6]));
}

#[test]
fn fit_at_lambda_max_selects_nothing() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), &sim_config(40, 0, 10, &[], 4));
    let cfg = run_config(dir.path(), &data, json!({"rho": 0.5, "epsilon": 1.0}));
    let out_dir = dir.path().join("fit");
    let out = jaca(&["fit", "--config", s(&cfg), "--output", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let model = out_dir.join("model.json");
    let out = jaca(&["evaluate", "--model", s(&model)]);
    let metrics: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics["cardinality"], json!([0, 0]));
    assert_eq!(metrics["total_cardinality"], json!(0));
}

#[test]
fn fit_then_predict_reproduces_the_in_process_model() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), &sim_config(60, 20, 15, &[0.5], 6));
    let cfg = run_config(dir.path(), &data, json!({"rho": 0.5, "epsilon": 0.2, "semi_supervised": true}));
    let out_dir = dir.path().join("fit");
    assert_eq!(code(&jaca(&["fit", "--config", s(&cfg), "--output", s(&out_dir)])), 0);
    let model_path = out_dir.join("model.json");
    let views = format!("{},{}", s(&data.join("view1.csv")), s(&data.join("view2.csv")));
    let pred_dir = dir.path().join("pred");
    let out = jaca(&["predict", "--model", s(&model_path), "--data", &views, "--output", s(&pred_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let ds: Dataset = load_views(&[data.join("view1.csv"), data.join("view2.csv")], Some(&data.join("labels.csv"))).unwrap();
    let model = train(&ds, &TrainConfig::new(0.5, 0.5, 0.2)).unwrap();
    let expected = model.predict(&ds, &[0, 1]).unwrap();

    let mut reader = csv::Reader::from_path(pred_dir.join("predictions.csv")).unwrap();
    let mut errors = 0;
    let mut labeled = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.unwrap();
        assert_eq!(&rec[0], ds.subject_ids()[i]);
        let label: usize = rec[1].parse().unwrap();
        assert_eq!(label, expected.labels[i] + 1);
        for k in 0..2 {
            let got: f64 = rec[2 + k].parse().unwrap();
            let want = expected.discriminants[(i, k)];
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "row {i}: {got} vs {want}");
        }
        if let Some(y) = ds.label(i) {
            labeled += 1;
            errors += usize::from(y != label - 1);
        }
    }
    let majority = ds.labels().iter().flatten().filter(|&&y| y == 1).count().max(labeled / 2);
    assert!(errors < labeled - majority, "{errors} training errors of {labeled}");

    let eval = jaca(&[
        "evaluate",
        "--model",
        s(&model_path),
        "--predictions",
        s(&pred_dir.join("predictions.csv")),
        "--labels",
        s(&data.join("labels.csv")),
    ]);
    assert_eq!(code(&eval), 0, "{}", String::from_utf8_lossy(&eval.stderr));
    let metrics: Value = serde_json::from_slice(&eval.stdout).unwrap();
    assert_eq!(metrics["predictions"]["n"], json!(labeled));
    let rate = metrics["predictions"]["misclassification"].as_f64().unwrap();
    assert!((rate - errors as f64 / labeled as f64).abs() < 1e-15);
    let eval = jaca(&[
        "evaluate",
        "--model",
        s(&model_path),
        "--truth",
        s(&data.join("truth.json")),
        "--labels",
        s(&data.join("test_labels.csv")),
        "--data",
        &format!("{},{}", s(&data.join("test_view1.csv")), s(&data.join("test_view2.csv"))),
        "--output",
        s(&dir.path().join("eval")),
    ]);
    assert_eq!(code(&eval), 0, "{}", String::from_utf8_lossy(&eval.stderr));
    let metrics: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("eval/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["misclassification"].as_array().unwrap().len(), 3);
    assert!(metrics["truth"]["sum_correlation"].as_f64().unwrap() > 0.0);
    assert_eq!(metrics["truth"]["precision"].as_array().unwrap().len(), 2);
}

#[test]
fn predicting_with_a_missing_required_view_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), &sim_config(40, 0, 10, &[], 8));
    let cfg = run_config(dir.path(), &data, json!({"rho": 0.5, "epsilon": 0.3}));
    let out_dir = dir.path().join("fit");
    assert_eq!(code(&jaca(&["fit", "--config", s(&cfg), "--output", s(&out_dir)])), 0);
    let partial = dir.path().join("partial_view2.csv");
    let text = fs::read_to_string(data.join("test_view2.csv")).unwrap();
    let kept: Vec<&str> = text.lines().enumerate().filter(|(i, _)| *i != 3).map(|(_, l)| l).collect();
    fs::write(&partial, kept.join("\n")).unwrap();
    let model = out_dir.join("model.json");
    let views = format!("{},{}", s(&data.join("test_view1.csv")), s(&partial));
    let out = jaca(&["predict", "--model", s(&model), "--data", &views]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t3"));
    let out = jaca(&["predict", "--model", s(&model), "--data", &views, "--views", "1"]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 201);
}

#[test]
fn unconverged_fit_is_recorded_not_fatal() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), &sim_config(40, 0, 10, &[], 12));
    let cfg = run_config(dir.path(), &data, json!({"rho": 0.0, "epsilon": 0.01, "max_iter": 1, "tol": 1e-15}));
    let out_dir = dir.path().join("fit");
    assert_eq!(code(&jaca(&["fit", "--config", s(&cfg), "--output", s(&out_dir)])), 0);
    let out = jaca(&["evaluate", "--model", s(&out_dir.join("model.json"))]);
    let metrics: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics["converged"], json!(false));
}

#[test]
fn cross_validation_writes_a_report() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), &sim_config(40, 10, 8, &[], 14));
    let cfg = run_config(
        dir.path(),
        &data,
        json!({"rho_grid": [0.75, 0.25], "epsilon_grid": [0.1, 1.0, 0.3], "n_folds": 3, "semi_supervised": true}),
    );
    let out_dir = dir.path().join("cv");
    let out = jaca(&["--threads", "1", "cv", "--config", s(&cfg), "--output", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(line_count(&out_dir.join("cv_report.csv")), 1 + 2 * 3 * 3);
    let summary: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("cv_summary.json")).unwrap()).unwrap();
    assert!(summary.is_object());
}

#[test]
fn exit_codes_follow_the_failure_kind() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&jaca(&["frobnicate"])), 1);
    assert_eq!(code(&jaca(&["--help"])), 0);
    assert_eq!(code(&jaca(&["fit", "--config", "/nonexistent/run.json"])), 2);

    let data = simulate(dir.path(), &sim_config(30, 0, 8, &[], 1));
    let cfg = run_config(dir.path(), &data, json!({"rho": 0.5, "epsilon": 0.5, "lambda": 3}));
    assert_eq!(code(&jaca(&["fit", "--config", s(&cfg)])), 1, "unknown key");
    let cfg = run_config(dir.path(), &data, json!({"rho": 0.5, "rho_grid": [0.5]}));
    assert_eq!(code(&jaca(&["fit", "--config", s(&cfg)])), 1, "scalar and grid");

    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "").unwrap();
    let sim = write_json(&dir.path().join("s2.json"), &sim_config(30, 0, 8, &[], 1));
    let out = jaca(&["simulate", "--config", s(&sim), "--output", s(&blocker.join("sub"))]);
    assert_eq!(code(&out), 2);
    assert!(!out.stderr.is_empty());

    let garbled = dir.path().join("garbled.csv");
    fs::write(&garbled, "id,a\ns1,notanumber\n").unwrap();
    let cfg = write_json(
        &dir.path().join("bad_data.json"),
        &json!({"views": [garbled, garbled], "labels": data.join("labels.csv"), "rho": 0.5, "epsilon": 0.5}),
    );
    assert_eq!(code(&jaca(&["fit", "--config", s(&cfg)])), 3);
}
