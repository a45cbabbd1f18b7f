use std::fs;
use std::path::Path;
use std::process::Command;

fn aviseg(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_aviseg")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "aviseg {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path) -> String {
    let s = dir.join("data");
    aviseg(&["synth", "--n", "60", "--d", "6", "--signal", "0:2,3:1", "--seed", "4", "--out-dir", s.to_str().unwrap()]);
    s.join("config.toml").to_string_lossy().into_owned()
}

#[test]
fn run_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth(tmp.path());
    let out = tmp.path().join("out");
    aviseg(&["run", "--config", &cfg, "--out-dir", out.to_str().unwrap(), "--ks", "3,6", "--lmnn-mu", "0.9"]);
    for f in ["report_long.csv", "report_boxplot.csv", "report_winloss.csv", "labels.csv", "effective_config.toml"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert!(!out.join(".staging").exists());
    assert!(!out.join(".aviseg.lock").exists());
    let eff = fs::read_to_string(out.join("effective_config.toml")).unwrap();
    assert!(eff.contains("ks = [3, 6]") || eff.contains("ks = [\n    3,\n    6,\n]"), "{eff}");
    assert!(eff.contains("mu = 0.9"));
}

#[test]
fn stages_run_independently() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth(tmp.path());
    let dir = |n: &str| tmp.path().join(n).to_string_lossy().into_owned();
    aviseg(&["encode", "--config", &cfg, "--out-dir", &dir("enc")]);
    assert!(tmp.path().join("enc/encoded.csv").exists());
    aviseg(&["prototypes", "--config", &cfg, "--out-dir", &dir("proto"), "--fraction", "0.5"]);
    let training = fs::read_to_string(tmp.path().join("proto/training.csv")).unwrap();
    assert_eq!(training.lines().filter(|l| l.starts_with("obj")).count(), 30);
    aviseg(&["constraints", "--config", &cfg, "--out-dir", &dir("cons"), "--output", "y"]);
    assert!(fs::read_to_string(tmp.path().join("cons/constraints_y.csv")).unwrap().contains("similar,"));
    aviseg(&["fit", "--config", &cfg, "--out-dir", &dir("fit"), "--method", "itml", "--output", "y"]);
    assert!(tmp.path().join("fit/metric_itml_y.txt").exists());
    aviseg(&["export-distances", "--config", &cfg, "--out-dir", &dir("dist"), "--method", "mmc", "--output", "y"]);
    let d = fs::read_to_string(tmp.path().join("dist/distances_mmc_y.csv")).unwrap();
    assert_eq!(d.lines().filter(|l| l.starts_with("obj")).count(), 60);
}

#[test]
fn segment_then_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth(tmp.path());
    let seg = tmp.path().join("seg");
    aviseg(&["segment", "--config", &cfg, "--out-dir", seg.to_str().unwrap(), "--ks", "4"]);
    let labels = seg.join("labels_euclidean_k4.csv");
    let outputs = tmp.path().join("data/outputs.csv");
    let report = aviseg(&[
        "evaluate",
        "--labels",
        labels.to_str().unwrap(),
        "--outputs",
        outputs.to_str().unwrap(),
        "--output",
        "y",
    ]);
    let row = report.lines().nth(1).unwrap();
    assert!(row.starts_with("y,4,"), "{report}");
}

#[test]
fn bad_input_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth(tmp.path());
    let out = Command::new(env!("CARGO_BIN_EXE_aviseg"))
        .args(["run", "--config", &cfg, "--methods", "euclidean", "--ks", "0"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let missing = Command::new(env!("CARGO_BIN_EXE_aviseg"))
        .args(["encode", "--config", "/nonexistent/config.toml"])
        .output()
        .unwrap();
    assert!(!missing.status.success());
    assert!(!String::from_utf8_lossy(&missing.stderr).is_empty());
}
