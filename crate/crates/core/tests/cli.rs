use std::path::Path;
use std::process::{Command, Output};

use meshgrow::features::CHANNEL_NAMES;
use meshgrow::mesh::{load_mesh, validate_manifold};

fn meshgrow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshgrow"))
        .args(args)
        .args(["--log-level", "warn"])
        .env_remove("MESHGROW_SEED")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn error_line(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("error line");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {line}"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_2() {
    let out = meshgrow(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(meshgrow(&["features", "--mesh", "m.obj"]).status.code(), Some(2));
    assert_eq!(meshgrow(&["gradcheck", "--bogus"]).status.code(), Some(2));
    assert_eq!(meshgrow(&["gradcheck", "--threads", "0"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1_with_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = meshgrow(&["features", "--mesh", "/nonexistent.obj", "--out", p(&dir.path().join("f.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    let e = error_line(&out);
    assert_eq!(e["kind"], "io");
    assert!(e["error"].as_str().unwrap().contains("nonexistent"));

    let out = meshgrow(&["train", "--config", "/nonexistent.json", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["kind"], "io");
}

#[test]
fn invalid_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    std::fs::write(&cfg, r#"{"manifest": "m.csv", "learning_rate": 1}"#).unwrap();
    let out = meshgrow(&["train", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["kind"], "config");

    let out = meshgrow(&["synth", "--n", "4", "--growing-frac", "1.5", "--out", p(&dir.path().join("s"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_masks_mesh_and_features() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&meshgrow(&["synth", "--n", "4", "--growing-frac", "0.5", "--seed", "3", "--write-masks", "--out", p(&data)]));
    let manifest = std::fs::read_to_string(data.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 5);
    assert_eq!(manifest.matches(",growing,").count(), 2);
    let run = read_json(&data.join("run.json"));
    assert_eq!(run["seed"], 3);
    assert_eq!(run["command"], "synth");
    assert_eq!(run["version"], env!("CARGO_PKG_VERSION"));

    let mesh_out = dir.path().join("mesh").join("lesion.obj");
    ok(&meshgrow(&[
        "mesh-from-mask",
        "--lesion",
        p(&data.join("masks").join("sample_0000_lesion.mask.json")),
        "--mode",
        "uia",
        "--out",
        p(&mesh_out),
    ]));
    let mesh = load_mesh(&mesh_out).unwrap();
    assert!(validate_manifold(&mesh).is_closed_manifold);
    assert_eq!(mesh.edge_count(), 999);
    let run = read_json(&dir.path().join("mesh").join("run.json"));
    assert_eq!(run["inputs"].as_object().unwrap().len(), 1);
    assert_eq!(run["config"]["mode"], "uia");

    let csv = dir.path().join("f.csv");
    ok(&meshgrow(&["features", "--mesh", p(&mesh_out), "--with-coords", "--out", p(&csv)]));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CHANNEL_NAMES.join(","));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 999);
    assert!(rows
        .iter()
        .all(|r| r.split(',').count() == 10 && r.split(',').all(|v| v.parse::<f64>().unwrap().is_finite())));
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |extra: &[&str], env: Option<&str>, out: &Path| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_meshgrow"));
        c.args(["synth", "--n", "2", "--log-level", "warn", "--out", p(out)]).args(extra);
        match env {
            Some(v) => c.env("MESHGROW_SEED", v),
            None => c.env_remove("MESHGROW_SEED"),
        };
        ok(&c.output().unwrap());
        read_json(&out.join("run.json"))["seed"].as_u64().unwrap()
    };
    assert_eq!(run(&[], None, &dir.path().join("a")), 0);
    assert_eq!(run(&[], Some("42"), &dir.path().join("b")), 42);
    assert_eq!(run(&["--seed", "5"], Some("42"), &dir.path().join("c")), 5);
    assert_eq!(
        std::fs::read(dir.path().join("b/meshes/sample_0000.obj")).unwrap(),
        {
            let d = dir.path().join("d");
            run(&["--seed", "42"], None, &d);
            std::fs::read(d.join("meshes/sample_0000.obj")).unwrap()
        }
    );
}

#[test]
fn train_then_eval_reproduces_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&meshgrow(&["synth", "--n", "12", "--growing-frac", "0.5", "--seed", "1", "--out", p(&data)]));
    let cfg = dir.path().join("exp.json");
    std::fs::write(
        &cfg,
        r#"{
            "manifest": "data/manifest.csv",
            "features": {"with_coords": true},
            "model": {"input_channels": 10, "conv_channels": [4, 4, 8, 8], "pool_targets": [750, 600, 500, 400],
                      "fc_hidden": 8, "input_edges": 1000},
            "batch_size": 8, "max_epochs": 5, "k_folds": 2, "split_mode": "stratified", "seed": 2
        }"#,
    )
    .unwrap();
    let run = dir.path().join("run");
    ok(&meshgrow(&["train", "--config", p(&cfg), "--out", p(&run)]));
    for f in [
        "experiment.json",
        "split.json",
        "run.json",
        "metrics.json",
        "metrics.csv",
        "roc_points.csv",
        "fold_0/best.ckpt",
        "fold_1/history.json",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }
    let rec = read_json(&run.join("run.json"));
    // config, manifest and 12 meshes
    assert_eq!(rec["inputs"].as_object().unwrap().len(), 14);
    assert_eq!(rec["seed"], 2);

    // reusing the split file gives the same result
    let cfg2 = dir.path().join("exp2.json");
    let mut v = read_json(&cfg);
    v["split_file"] = "run/split.json".into();
    std::fs::write(&cfg2, v.to_string()).unwrap();
    let run2 = dir.path().join("run2");
    ok(&meshgrow(&["train", "--config", p(&cfg2), "--out", p(&run2)]));
    assert_eq!(
        std::fs::read(run.join("metrics.json")).unwrap(),
        std::fs::read(run2.join("metrics.json")).unwrap()
    );

    let report = dir.path().join("report");
    ok(&meshgrow(&["eval", "--run", p(&run), "--run", p(&run2), "--out", p(&report)]));
    let csv = std::fs::read_to_string(report.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("uia_model_2,"));
    let trained = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(lines[1], trained.lines().nth(1).unwrap());
    let roc = std::fs::read_to_string(report.join("roc_points.csv")).unwrap();
    assert_eq!(roc.lines().count(), 1 + 2 * 101);
}

#[test]
fn gradcheck_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = meshgrow(&["gradcheck", "--seed", "3", "--out", p(dir.path())]);
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("conv0.kernel"));
    assert!(!stdout.contains("FAIL"));
    assert!(dir.path().join("gradcheck.json").exists());
    assert_eq!(read_json(&dir.path().join("run.json"))["seed"], 3);
}
