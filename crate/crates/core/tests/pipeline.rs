use std::fs;

use aviseg_core::dataset::SyntheticSpec;
use aviseg_core::evaluation::Scope;
use aviseg_core::pipeline::{run_pipeline, write_synthetic, Method, PipelineConfig};

fn config(dir: &std::path::Path) -> PipelineConfig {
    let spec = SyntheticSpec::new(80, 8, vec![(0, 1.0), (1, 1.0)], 0.1, 11).with_intercept(10.0);
    let path = write_synthetic(&spec, dir).unwrap();
    let mut cfg = PipelineConfig::load(path).unwrap();
    cfg.run.ks = vec![4, 8];
    cfg.lmnn.mu = 0.9;
    cfg
}

#[test]
fn report_covers_every_method_scope_and_k() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path());
    let out = run_pipeline(&cfg).unwrap();
    for m in Method::ALL {
        for k in [4, 8] {
            for scope in [Scope::Full, Scope::HeldOut] {
                let cell = out.report.cell(m.name(), "y", k, scope).unwrap();
                assert_eq!(cell.clustering.k, k);
                assert!(cell.mr >= 0.0);
            }
        }
    }
    let n_train = out.prepared.training.len();
    assert_eq!(n_train, 32);
    assert_eq!(out.prepared.held_out().len(), 80 - n_train);
    let long = fs::read_to_string(cfg.paths.out_dir.join("report_long.csv")).unwrap();
    assert!(long.lines().count() > 1);
}

#[test]
fn effective_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path());
    cfg.run.methods = vec![Method::Euclidean, Method::Mmc];
    run_pipeline(&cfg).unwrap();
    let eff = PipelineConfig::load(cfg.paths.out_dir.join("effective_config.toml")).unwrap();
    assert_eq!(eff.run.methods, cfg.run.methods);
    assert_eq!(eff.run.ks, cfg.run.ks);
    let mut again = eff.clone();
    again.paths.out_dir = tmp.path().join("again");
    run_pipeline(&again).unwrap();
    let a = fs::read(cfg.paths.out_dir.join("report_long.csv")).unwrap();
    let b = fs::read(again.paths.out_dir.join("report_long.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn existing_lock_blocks_a_second_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path());
    fs::create_dir_all(&cfg.paths.out_dir).unwrap();
    fs::write(cfg.paths.out_dir.join(".aviseg.lock"), "").unwrap();
    assert!(run_pipeline(&cfg).is_err());
}
