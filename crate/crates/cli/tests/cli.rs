use std::fs;
use std::path::Path;
use std::process::Command;

fn binpose(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_binpose")).args(args).arg("--out-dir").arg(dir).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = binpose(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn subcommands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--seed", "4"]);
    ok(d, &["oracle", "--seed", "4"]);
    ok(d, &["cluster"]);
    let csv = d.join("table.csv");
    ok(d, &["eval", "--csv", csv.to_str().unwrap()]);
    for f in ["scene.ply", "scene.json", "predictions.csv", "poses.json", "labels.txt", "report.json"] {
        assert!(d.join(f).is_file(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert!(report["f1_inst"].as_f64().unwrap() > 0.5);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 2);

    let labels = fs::read_to_string(d.join("labels.txt")).unwrap();
    let ply = fs::read_to_string(d.join("scene.ply")).unwrap();
    let n_points: usize = ply.lines().find_map(|l| l.strip_prefix("element vertex ")).unwrap().trim().parse().unwrap();
    assert_eq!(labels.lines().count(), n_points);
}

#[test]
fn pipeline_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        ok(d, &["pipeline", "--seed", "7", "--scenes", "2", "--icp"]);
    }
    for f in ["report.json", "scene_000/labels.txt", "scene_001/poses.json", "scene_001/predictions.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn single_stage_flag_changes_the_result() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["pipeline", "--seed", "1"]);
    ok(b.path(), &["pipeline", "--seed", "1", "--single-stage"]);
    let ra = fs::read(a.path().join("report.json")).unwrap();
    let rb = fs::read(b.path().join("report.json")).unwrap();
    assert_ne!(ra, rb);
}

#[test]
fn gradcheck_prints_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["gradcheck", "--trials", "10"]);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["trials"], 10);
    assert_eq!(v["epsilon"], 1e-5);
    assert!(v["max_rel_err"].as_f64().unwrap() < 1e-4);
    assert!(v["loss"].as_f64().unwrap() > 0.0);
}

#[test]
fn failures_exit_nonzero_with_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = binpose(dir.path(), &["cluster"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("read:"));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[cluster]\nbandwidth_1 = -1.0\n").unwrap();
    let out = binpose(dir.path(), &["pipeline", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("config:"));
}

#[test]
fn config_file_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        "[object]\nshape = \"bracket\"\n\n[oracle]\nsigma_t = 0.0\nsigma_r_deg = 0.0\nsymmetric_ambiguity = false\n",
    )
    .unwrap();
    ok(dir.path(), &["pipeline", "--config", cfg.to_str().unwrap(), "--seed", "2"]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["f1_inst"], 1.0);
    assert_eq!(report["recall"], 1.0);
}
