use std::collections::BTreeMap;
use std::path::Path;

use evspace_core::fixture::{self, FIXTURE_SEED};
use evspace_core::pipeline::{Pipeline, PipelineConfig, RunOptions, Stage};
use evspace_core::ErrorKind;

fn setup(dir: &Path) -> PipelineConfig {
    let cfg_path = fixture::write(dir, FIXTURE_SEED).unwrap();
    let mut cfg = PipelineConfig::load(&cfg_path).unwrap();
    cfg.output.dir = dir.join("out");
    cfg
}

fn snapshot(out: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![out.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(out).unwrap().to_string_lossy().into_owned();
                files.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

#[test]
fn full_run_writes_every_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let out = cfg.output.dir.clone();
    let manifest = Pipeline::new(cfg).unwrap().run().unwrap();
    assert_eq!(manifest.stages.len(), Stage::ALL.len());
    for stage in Stage::ALL {
        assert!(out.join("cache").join(format!("{stage}.json")).is_file(), "{stage}");
    }
    for f in [
        "ingest/hs_classes.csv",
        "productspace/industry_edges.csv",
        "centrality/closeness.csv",
        "centrality/chapter_closeness.csv",
        "potential/potential_industry.csv",
        "potential/potential_firm.csv",
        "regress/regression.csv",
        "regress/ev_model.json",
        "forecast/gains.csv",
        "concentration/concentration.csv",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let manifest_text = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(!manifest_text.contains(tmp.path().to_str().unwrap()));
}

#[test]
fn reruns_are_identical_and_reuse_caches() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let out = cfg.output.dir.clone();
    Pipeline::new(cfg.clone()).unwrap().run().unwrap();
    let first = snapshot(&out);
    Pipeline::new(cfg.clone()).unwrap().run().unwrap();
    assert_eq!(first, snapshot(&out));

    let other = tempfile::tempdir().unwrap();
    let mut cfg2 = cfg.clone();
    cfg2.output.dir = other.path().join("out");
    Pipeline::new(cfg2).unwrap().run().unwrap();
    assert_eq!(first, snapshot(&other.path().join("out")));
}

#[test]
fn tampered_output_is_rebuilt() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let out = cfg.output.dir.clone();
    Pipeline::new(cfg.clone()).unwrap().run().unwrap();
    let path = out.join("centrality/closeness.csv");
    let good = std::fs::read(&path).unwrap();
    std::fs::write(&path, b"garbage").unwrap();
    Pipeline::new(cfg).unwrap().run().unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), good);
}

#[test]
fn stage_without_deps_reports_missing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let mut p = Pipeline::new(cfg.clone()).unwrap();
    let err = p
        .run_stage(Stage::Centrality, RunOptions { no_build_deps: true })
        .unwrap_err();
    assert_eq!(err.stage, "centrality");
    let msg = err.to_string();
    for dep in ["ingest", "specialization", "productspace"] {
        assert!(msg.contains(dep), "{msg}");
    }

    let mut p = Pipeline::new(cfg.clone()).unwrap();
    p.run_stage(Stage::Concentration, RunOptions::default()).unwrap();
    let mut p = Pipeline::new(cfg).unwrap();
    p.run_stage(Stage::Concentration, RunOptions { no_build_deps: true })
        .unwrap();
}

#[test]
fn config_change_invalidates_downstream_only_by_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let a = Pipeline::new(cfg.clone()).unwrap();
    let mut cfg2 = cfg.clone();
    cfg2.analysis.seed += 1;
    let b = Pipeline::new(cfg2).unwrap();
    assert_ne!(a.key(Stage::Regress), b.key(Stage::Regress));
    let mut cfg3 = cfg;
    cfg3.output.dir = tmp.path().join("elsewhere");
    let c = Pipeline::new(cfg3).unwrap();
    assert_eq!(a.key(Stage::Regress), c.key(Stage::Regress));
}

#[test]
fn missing_year_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = setup(tmp.path());
    cfg.analysis.reference_year = 2015;
    cfg.analysis.t0 = 2012;
    let err = Pipeline::new(cfg).unwrap().run().unwrap_err();
    assert_eq!(err.stage, "ingest");
    assert_eq!(err.kind(), ErrorKind::Data);
}
