use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY: &str = r#"
k = 10
raters = ["a", "c"]
[network]
base_channels = 2
depth = 3
[training]
epochs = 1
[prep]
input_size = 16
pre_crop_size = 19
crop_roi = false
[synthetic]
count = 20
network_scale = 32
trunk_radius = [40.0, 60.0]
"#;

fn plexseg(dir: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_plexseg"));
    cmd.current_dir(dir).args(args);
    for (k, _) in std::env::vars() {
        if k.starts_with("PLEXSEG_") {
            cmd.env_remove(k);
        }
    }
    cmd.output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = plexseg(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// A temp dir holding `tiny.toml` and a generated phantom dataset in `data/`.
fn fixture() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), format!("dataset_root = \"data\"\n{TINY}")).unwrap();
    ok(dir.path(), &["--config", "tiny.toml", "--out", "data", "synth-gen"]);
    dir
}

fn tree_hashes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(p) = stack.pop() {
        if p.is_dir() {
            stack.extend(fs::read_dir(&p).unwrap().map(|e| e.unwrap().path()));
        } else {
            out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
        }
    }
    out
}

fn manifest(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = plexseg(dir.path(), &["--bogus", "folds"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(plexseg(dir.path(), &["no-such-command"]).status.code(), Some(2));
    let out = plexseg(dir.path(), &["--set", "training.epochz=3", "folds"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochz"));
    assert_eq!(plexseg(dir.path(), &["--config", "missing.toml", "folds"]).status.code(), Some(2));
    assert_eq!(plexseg(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = plexseg(dir.path(), &["--dataset-root", "nowhere", "folds"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
}

#[test]
fn folds_are_deterministic() {
    let dir = fixture();
    let d = dir.path();
    for out in ["f1", "f2"] {
        ok(d, &["--config", "tiny.toml", "--out", out, "folds", "--k", "10", "--seed", "7"]);
    }
    let a = fs::read(d.join("f1/folds.json")).unwrap();
    assert_eq!(a, fs::read(d.join("f2/folds.json")).unwrap());
    let (m1, m2) = (manifest(&d.join("f1/manifest_folds.json")), manifest(&d.join("f2/manifest_folds.json")));
    assert_eq!(m1["config_sha256"], m2["config_sha256"]);
    assert_eq!(m1["artifacts"], m2["artifacts"]);
    assert_eq!(m1["seeds"]["folds"], 7);
    let plan: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(plan["k"], 10);
    assert_eq!(plan["assignments"].as_object().unwrap().len(), 20);

    ok(d, &["--config", "tiny.toml", "--out", "f3", "folds", "--k", "10", "--seed", "8"]);
    assert_ne!(a, fs::read(d.join("f3/folds.json")).unwrap());
}

#[test]
fn precedence_defaults_file_env_flag() {
    let dir = fixture();
    let d = dir.path();
    let k_of = |out: &str| manifest(&d.join(out).join("manifest_folds.json"))["config"]["k"].clone();
    ok(d, &["--out", "p0", "--dataset-root", "data", "folds"]);
    assert_eq!(k_of("p0"), 10);
    fs::write(d.join("k5.toml"), "dataset_root = \"data\"\nk = 5\n").unwrap();
    ok(d, &["--config", "k5.toml", "--out", "p1", "folds"]);
    assert_eq!(k_of("p1"), 5);

    let run_env = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_plexseg"))
            .current_dir(d)
            .env("PLEXSEG_CONFIG", "k5.toml")
            .env("PLEXSEG_K", "4")
            .args(args)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run_env(&["--out", "p2", "folds"]);
    assert_eq!(k_of("p2"), 4);
    run_env(&["--out", "p3", "folds", "--k", "2"]);
    assert_eq!(k_of("p3"), 2);
    run_env(&["--out", "p4", "folds", "--k", "2", "--set", "k=1"]);
    assert_eq!(k_of("p4"), 1);
}

#[test]
fn pipeline_end_to_end() {
    let dir = fixture();
    let d = dir.path();
    let before = tree_hashes(&d.join("data"));
    let base = ["--config", "tiny.toml"];
    let run = |extra: &[&str]| ok(d, &[&base[..], extra].concat());

    run(&["--out", "cv", "crossval", "--arm", "mixed_optimization"]);
    let csv = fs::read_to_string(d.join("cv/reports/crossval/mixed_optimization.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 12, "{csv}");
    assert!(lines[11].starts_with("average,"));
    assert!(d.join("cv/reports/crossval/mixed_optimization.md").exists());
    assert!(d.join("cv/checkpoints/mixed_optimization/fold10.ckpt").exists());

    // Same invocation into a fresh directory: identical reports.
    run(&["--out", "cv2", "crossval", "--arm", "mixed_optimization"]);
    assert_eq!(tree_hashes(&d.join("cv/reports")), tree_hashes(&d.join("cv2/reports")));
    let (m1, m2) = (manifest(&d.join("cv/manifest_crossval.json")), manifest(&d.join("cv2/manifest_crossval.json")));
    assert_eq!(m1["artifacts"], m2["artifacts"]);
    assert!(m1["artifacts"].as_object().unwrap().contains_key("reports/crossval/mixed_optimization.csv"));

    run(&["--out", "cr", "compare-raters", "--folds", "cv/folds.json", "--system", "cv/reports/crossval/mixed_optimization.csv"]);
    let md = fs::read_to_string(d.join("cr/reports/raters/raters.md")).unwrap();
    assert!(md.starts_with("| Fold | a | c | System |"), "{md}");
    assert_eq!(md.lines().count(), 13);

    run(&["--out", "as", "assist-report", "--folds", "cv/folds.json", "--fold", "2", "--rater", "a"]);
    let contrast = fs::read_to_string(d.join("as/reports/assist/contrast.md")).unwrap();
    assert!(contrast.contains("Percentage of improvement"));
    assert_eq!(contrast.lines().filter(|l| l.starts_with("| MIXED | 2 |")).count(), 1, "{contrast}");

    run(&["--out", "ov", "overlay", "--arm", "mixed_optimization", "--checkpoint", "cv/checkpoints/mixed_optimization/fold1.ckpt", "--limit", "3"]);
    assert_eq!(fs::read_dir(d.join("ov/overlays")).unwrap().count(), 3);

    run(&["--out", "tr", "train", "--fold", "3", "--arm", "enhanced"]);
    assert!(d.join("tr/checkpoints/enhanced/fold3.ckpt").exists());
    assert!(d.join("tr/checkpoints/enhanced/fold3_history.csv").exists());
    assert_eq!(plexseg(d, &[&base[..], &["--out", "tr", "train", "--fold", "11"]].concat()).status.code(), Some(2));

    run(&["--out", "pr", "prepare", "--arm", "enhanced"]);
    assert_eq!(fs::read_dir(d.join("pr/prepared/enhanced/SYNTHETIC")).unwrap().count(), 20);
    run(&["--out", "er", "enhance-report"]);
    for tag in ["SYNTHETIC_original", "SYNTHETIC_enhanced"] {
        assert!(d.join(format!("er/histograms/{tag}.csv")).exists());
    }

    assert_eq!(tree_hashes(&d.join("data")), before, "a subcommand modified its input dataset");
}
