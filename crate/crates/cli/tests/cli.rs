use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use zsl_core::dataset::load_dataset;

fn zsl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zsl"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn zsl")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_synthetic_fifty_trials() {
    let dir = tempfile::tempdir().unwrap();
    let out = zsl(
        &["run", "--synthetic", "classes=12", "unseen=4", "trials=50", "--mode", "unit", "--output", "r"],
        dir.path(),
    );
    ok(&out);
    let report = read_json(&dir.path().join("r/report.json"));
    assert_eq!(report["trials"].as_array().unwrap().len(), 50);
    assert_eq!(report["config"]["covariance_mode"], "unit");
    assert_eq!(report["version"], env!("CARGO_PKG_VERSION"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for m in ["upper-bound", "inductive", "transductive", "baseline"] {
        assert!(stdout.lines().any(|l| l.starts_with(m)), "{stdout}");
    }
    let boxplot = std::fs::read_to_string(dir.path().join("r/boxplot.csv")).unwrap();
    assert!(boxplot.starts_with("method,mean,median,q25,q75,min,max\n"));
    assert_eq!(boxplot.lines().count(), 5);
}

#[test]
fn run_from_files_with_split_file() {
    let dir = tempfile::tempdir().unwrap();
    ok(&zsl(&["synth", "classes=8", "per_class=40", "--seed", "2", "--output", "d"], dir.path()));
    ok(&zsl(&["splits", "--count", "8", "--unseen", "3", "--trials", "4", "--seed", "1", "--output", "s.json"], dir.path()));
    let out = zsl(
        &[
            "run", "--features", "d/features.csv", "--labels", "d/labels.csv", "--embeddings", "d/embeddings.csv",
            "--splits", "s.json", "--methods", "inductive,transductive", "--output", "r", "--format", "json",
        ],
        dir.path(),
    );
    ok(&out);
    let report = read_json(&dir.path().join("r/report.json"));
    let methods: Vec<&str> = report["methods"].as_array().unwrap().iter().map(|m| m.as_str().unwrap()).collect();
    assert_eq!(methods, ["inductive", "transductive"]);
    assert_eq!(report["trials"].as_array().unwrap().len(), 4);
    assert_eq!(report["data"]["splits"], "s.json");
    assert!(!dir.path().join("r/trials.csv").exists());
}

#[test]
fn missing_embeddings_names_path() {
    let dir = tempfile::tempdir().unwrap();
    ok(&zsl(&["synth", "--output", "d"], dir.path()));
    let out = zsl(
        &[
            "run", "--features", "d/features.csv", "--labels", "d/labels.csv", "--embeddings", "d/missing.csv",
            "--unseen", "3", "--trials", "2", "--output", "r",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("d/missing.csv"), "{stderr}");
    assert!(!stderr.contains("panicked"));
}

#[test]
fn splits_file_shape_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["splits", "--count", "50", "--unseen", "10", "--trials", "300", "--seed", "7", "--output"];
    ok(&zsl(&[&args[..], &["a.json"]].concat(), dir.path()));
    ok(&zsl(&[&args[..], &["b.json"]].concat(), dir.path()));
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.json")).unwrap());
    let spec: Value = serde_json::from_slice(&a).unwrap();
    let trials = spec["trials"].as_array().unwrap();
    assert_eq!(trials.len(), 300);
    assert!(trials.iter().all(|t| t.as_array().unwrap().len() == 10));

    let out = zsl(&["splits", "--count", "50", "--unseen", "10", "--trials", "0", "--output", "c.json"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn splits_from_class_list() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("classes.txt"), "# animals\nzebra\nhorse\n\nlion\ntiger\n").unwrap();
    ok(&zsl(&["splits", "--classes-file", "classes.txt", "--unseen", "2", "--trials", "3", "--output", "s.json"], dir.path()));
    let spec = read_json(&dir.path().join("s.json"));
    for t in spec["trials"].as_array().unwrap() {
        for name in t.as_array().unwrap() {
            assert!(["zebra", "horse", "lion", "tiger"].contains(&name.as_str().unwrap()));
        }
    }
}

#[test]
fn synth_round_trips_and_records_means() {
    let dir = tempfile::tempdir().unwrap();
    ok(&zsl(&["synth", "separation=10", "--seed", "4", "--output", "a"], dir.path()));
    ok(&zsl(&["synth", "separation=10", "--seed", "4", "--output", "b"], dir.path()));
    for f in ["features.csv", "labels.csv", "embeddings.csv", "manifest.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    let a = dir.path().join("a");
    let ds = load_dataset(&a.join("features.csv"), &a.join("labels.csv"), &a.join("embeddings.csv")).unwrap();
    let manifest = read_json(&a.join("manifest.json"));
    let means = manifest["truth"]["means"].as_array().unwrap();
    assert_eq!(means.len(), ds.n_classes());
    assert_eq!(means[0].as_array().unwrap().len(), ds.feature_dim());
    assert_eq!(manifest["truth"]["spec"]["separation"], 10.0);
}

#[test]
fn upper_bound_all_classes_separable() {
    let dir = tempfile::tempdir().unwrap();
    ok(&zsl(&["synth", "separation=10", "--output", "d"], dir.path()));
    let out = zsl(
        &["upper-bound", "--features", "d/features.csv", "--labels", "d/labels.csv", "--embeddings", "d/embeddings.csv", "--output", "u"],
        dir.path(),
    );
    ok(&out);
    let doc = read_json(&dir.path().join("u/upper_bound.json"));
    assert_eq!(doc["accuracy"]["overall"], 1.0);
    assert_eq!(doc["scope"], "all");

    let out = zsl(
        &["upper-bound", "--synthetic", "classes=10", "separation=10", "--scope", "split", "--unseen", "3", "--trials", "5", "--output", "v"],
        dir.path(),
    );
    ok(&out);
    let report = read_json(&dir.path().join("v/report.json"));
    assert_eq!(report["methods"], serde_json::json!(["upper-bound"]));
    assert_eq!(report["aggregates"][0]["overall"]["min"], 1.0);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("exp.cfg"),
        "# experiment\nsynthetic = classes=10 unseen=3 trials=4\nmethods = inductive\nmode = diagonal\nseed = 5\nlasso_lambda = 0.01\n",
    )
    .unwrap();
    ok(&zsl(&["run", "--config", "exp.cfg", "--seed", "6", "--output", "r"], dir.path()));
    let report = read_json(&dir.path().join("r/report.json"));
    assert_eq!(report["config"]["seed"], 6);
    assert_eq!(report["config"]["covariance_mode"], "diagonal");
    assert_eq!(report["config"]["lasso_lambda"], 0.01);
    assert_eq!(report["methods"], serde_json::json!(["inductive"]));

    std::fs::write(dir.path().join("bad.cfg"), "seed = 1\nlamda = 0.3\n").unwrap();
    let out = zsl(&["run", "--config", "bad.cfg", "--synthetic", "--unseen", "2", "--trials", "1", "--output", "x"], dir.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bad.cfg:2") && stderr.contains("lamda"), "{stderr}");
}

/// Re-running with the config echoed in a report reproduces its aggregates.
#[test]
fn embedded_config_reproduces_report() {
    let dir = tempfile::tempdir().unwrap();
    ok(&zsl(
        &["run", "--synthetic", "classes=10", "unseen=3", "trials=6", "--seed", "9", "--pca-dim", "6", "--mode", "diagonal", "--output", "a"],
        dir.path(),
    ));
    let first = read_json(&dir.path().join("a/report.json"));
    let cfg = &first["config"];
    let mut text = String::from("synthetic = classes=10 unseen=3 trials=6\n");
    for (key, value) in cfg.as_object().unwrap() {
        let v = match value {
            Value::Null => continue,
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        text.push_str(&format!("{} = {}\n", if key == "covariance_mode" { "mode" } else { key }, v));
    }
    std::fs::write(dir.path().join("echo.cfg"), text).unwrap();
    ok(&zsl(&["run", "--config", "echo.cfg", "--output", "b"], dir.path()));
    let second = read_json(&dir.path().join("b/report.json"));
    assert_eq!(first["aggregates"], second["aggregates"]);
    assert_eq!(first["config"], second["config"]);
}

#[test]
fn invalid_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["run", "--output", "r"],
        &["run", "--synthetic", "classes=5", "--output", "r"],
        &["run", "--synthetic", "classes=5", "unseen=5", "trials=1", "--output", "r"],
        &["run", "--synthetic", "classes=5", "unseen=1", "trials=1", "--mode", "spherical", "--output", "r"],
    ];
    for args in cases {
        let out = zsl(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
    }
}
