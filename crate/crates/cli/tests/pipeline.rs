use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const STAGES: [&str; 10] =
    ["generate", "featurize", "descriptives", "train", "evaluate", "superlearner", "effects", "placebo", "tree", "report"];

const SMALL: &str = r#"
seed = 11

[generator]
n_firms = 400
seed = 11

[[models]]
kind = "logit"

[[models]]
kind = "tree"

[[models]]
kind = "random_forest"
n_trees = 30
"#;

fn exportshock(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exportshock"))
        .current_dir(dir)
        .env_remove("EXPORTSHOCK_ARTIFACTS")
        .args(args)
        .args(["--log-level", "warn"])
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn run_ok(dir: &Path, args: &[&str]) {
    let out = exportshock(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", stderr(&out));
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

/// Every artifact except the manifests, which carry wall-clock times.
fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().unwrap() != "manifest.json" {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                files.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn manifest_outputs(root: &Path, stage: &str) -> serde_json::Value {
    let text = fs::read_to_string(root.join(stage).join("manifest.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&text).unwrap();
    m["outputs"].clone()
}

#[test]
fn effects_without_train_exits_2_naming_train() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "[generator]\nn_firms = 200\n");
    let out = exportshock(tmp.path(), &["--config", "config.toml", "effects"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`train`"), "{}", stderr(&out));
}

#[test]
fn config_errors_exit_3_with_field_path() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "[generator]\nn_firms = \"many\"\n");
    let out = exportshock(tmp.path(), &["--config", "config.toml", "generate"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("generator.n_firms"), "{}", stderr(&out));

    write_config(tmp.path(), "[protocol]\nfolds = 1\n");
    let out = exportshock(tmp.path(), &["--config", "config.toml", "generate"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("protocol.folds"), "{}", stderr(&out));

    let out = exportshock(tmp.path(), &["generate"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn malformed_transactions_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("tx.csv"), "firm_id,value\nA,1\n").unwrap();
    write_config(tmp.path(), "[data]\ntransactions = \"tx.csv\"\n");
    let out = exportshock(tmp.path(), &["--config", "config.toml", "featurize"]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}

#[test]
fn generate_and_featurize_twice_give_identical_digests() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), SMALL);
    let mut digests = Vec::new();
    for _ in 0..2 {
        for stage in ["generate", "featurize"] {
            run_ok(tmp.path(), &["--config", "config.toml", stage]);
        }
        let root = tmp.path().join("artifacts");
        digests.push((manifest_outputs(&root, "generate"), manifest_outputs(&root, "featurize")));
    }
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn artifacts_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), SMALL);
    for threads in ["1", "8"] {
        let root = format!("run-{threads}");
        for stage in STAGES {
            run_ok(tmp.path(), &["--config", "config.toml", "--artifacts", &root, "--threads", threads, stage]);
        }
    }
    let a = snapshot(&tmp.path().join("run-1"));
    let b = snapshot(&tmp.path().join("run-8"));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (name, bytes) in &a {
        assert!(bytes == &b[name], "{name} differs between 1 and 8 threads");
    }
    for stage in STAGES {
        assert_eq!(
            manifest_outputs(&tmp.path().join("run-1"), stage),
            manifest_outputs(&tmp.path().join("run-8"), stage)
        );
    }
}

#[test]
fn artifact_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "[generator]\nn_firms = 100\n");
    let out = Command::new(env!("CARGO_BIN_EXE_exportshock"))
        .current_dir(tmp.path())
        .env("EXPORTSHOCK_ARTIFACTS", "from-env")
        .args(["--config", "config.toml", "generate"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(tmp.path().join("from-env/generate/manifest.json").is_file());
}

#[test]
fn tampered_artifacts_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "[generator]\nn_firms = 100\n");
    run_ok(tmp.path(), &["--config", "config.toml", "generate"]);
    let tx = tmp.path().join("artifacts/generate/transactions.csv");
    let mut text = fs::read_to_string(&tx).unwrap();
    text.push_str("\n");
    fs::write(&tx, text).unwrap();
    let out = exportshock(tmp.path(), &["--config", "config.toml", "featurize"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("digest"), "{}", stderr(&out));
}

/// The full pipeline on the built-in defaults: 5,000 firms and every model.
#[test]
fn default_config_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "");
    for stage in STAGES {
        run_ok(tmp.path(), &["--config", "config.toml", stage]);
    }
    let report = tmp.path().join("artifacts/report");
    let mut files: Vec<String> = fs::read_dir(&report)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    files.sort();
    assert_eq!(
        files,
        ["destinations.csv", "effect_tree.txt", "metrics.txt", "monthly_effects.svg", "ols.txt", "superlearner.txt"]
    );
    let svg = fs::read_to_string(report.join("monthly_effects.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("Apr"));
    let metrics = fs::read_to_string(report.join("metrics.txt")).unwrap();
    for model in ["Logit", "Logit-LASSO", "Classification Tree", "Random Forest", "SVM", "Gradient Boosting"] {
        assert!(metrics.contains(model), "metrics.txt lacks {model}");
    }
    let placebo = fs::read_to_string(tmp.path().join("artifacts/placebo/placebo.txt")).unwrap();
    assert!(placebo.contains("placebo months within tolerance"));
}
