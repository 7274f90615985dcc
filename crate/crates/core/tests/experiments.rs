use std::collections::BTreeSet;
use std::path::Path;

use shiftlab::error::Error;
use shiftlab::experiment::{bundled, bundled_for_criterion, find_bundled, parse_config, run_experiment, schema_json, RunStatus};

const SCHEMA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/schema/experiment.schema.json");

#[test]
fn shipped_schema_is_current() {
    let want = schema_json();
    if std::env::var_os("SHIFTLAB_UPDATE_SCHEMA").is_some() {
        std::fs::write(SCHEMA, &want).unwrap();
    }
    let have = std::fs::read_to_string(SCHEMA).expect("schema file; regenerate with SHIFTLAB_UPDATE_SCHEMA=1");
    assert_eq!(have, want, "stale schema; regenerate with SHIFTLAB_UPDATE_SCHEMA=1");
}

#[test]
fn bundled_configs_validate() {
    let mut names = BTreeSet::new();
    assert_eq!(bundled().len(), 15);
    for b in bundled() {
        let cfg = b.config().unwrap_or_else(|e| panic!("{}: {e}", b.name));
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", b.name));
        assert_eq!(cfg.name, b.name);
        assert!(!cfg.checks.is_empty(), "{} has no checks", b.name);
        assert!(names.insert(b.name));
    }
    let criteria: Vec<u8> = bundled().iter().map(|b| b.criterion).collect();
    assert_eq!(criteria, (1..=15).collect::<Vec<u8>>());
    for b in bundled() {
        assert_eq!(bundled_for_criterion(b.criterion).unwrap().name, b.name);
    }
    assert!(find_bundled("numerics").is_some());
    assert!(find_bundled("nope").is_none());
}

#[test]
fn hash_ignores_output_dir_only() {
    let mut cfg = find_bundled("numerics").unwrap().config().unwrap();
    let h = cfg.hash();
    assert_eq!(h.len(), 64);
    cfg.output_dir = Some("elsewhere".into());
    assert_eq!(cfg.hash(), h);
    cfg.seed += 1;
    assert_ne!(cfg.hash(), h);
}

#[test]
fn config_errors_carry_the_field_path() {
    let text = r#"{"name": "x", "seed": 1, "fits": {"a": {"prior": "p", "method": {"kind": "hmc", "sampler": {"step_size": 0.1, "num_iterations": 5, "seed": 1, "bogus": 2}}}}}"#;
    match parse_config(text) {
        Err(Error::Config { path, .. }) => assert!(path.starts_with("fits.a.method"), "{path}"),
        other => panic!("expected a config error, got {other:?}"),
    }
    let cfg = parse_config(r#"{"name": "x", "seed": 1, "priors": {}, "fits": {"a": {"prior": "missing", "method": {"kind": "map", "optimizer": {"kind": {"kind": "adam"}, "learning_rate": 0.1, "epochs": 1, "seed": 0}}}}}"#).unwrap();
    match cfg.validate() {
        Err(Error::Config { path, .. }) => assert_eq!(path, "fits.a.prior"),
        other => panic!("expected a config error, got {other:?}"),
    }
}

const SMALL: &str = r#"{
  "name": "small",
  "seed": 5,
  "data": {"source": "synthetic", "train": 40, "test": 40,
           "generator": {"shape": {"kind": "flat", "features": 3},
                         "dependences": [{"kind": "dead_feature", "index": 2}],
                         "labels": {"kind": "teacher"}}},
  "model": {"architecture": {"kind": "mlp", "widths": [3, 4, 2]}, "likelihood": {"kind": "categorical"}},
  "priors": {"g": {"default": {"kind": "gaussian", "variance": 1.0}}},
  "fits": {
    "hmc": {"prior": "g", "method": {"kind": "hmc", "sampler": {"step_size": 0.1, "leapfrog_steps": 5, "num_iterations": 60, "seed": 1}}},
    "map": {"prior": "g", "method": {"kind": "map", "optimizer": {"kind": {"kind": "adam"}, "learning_rate": 0.05, "epochs": 50, "seed": 2}}},
    "ens": {"prior": "g", "method": {"kind": "ensemble", "members": 3, "optimizer": {"kind": {"kind": "adam"}, "learning_rate": 0.05, "epochs": 20, "seed": 3}}}
  },
  "analyses": {
    "eval": {"kind": "evaluate", "fits": ["hmc", "map", "ens"]},
    "noise": {"kind": "robustness", "fits": ["hmc", "map"], "magnitudes": [0, 1],
              "corruption": {"kind": "gaussian_noise", "std": 1}},
    "proj": {"kind": "projection", "fit": "map", "probes": [{"kind": "feature", "index": 2}]}
  },
  "checks": [{"name": "accuracy is a probability", "terms": {"eval.map.accuracy": 1}, "op": "<=", "bound": 1}]
}"#;

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["", "chains"] {
        let d = dir.join(sub);
        let mut names: Vec<_> = std::fs::read_dir(&d).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        for p in names.into_iter().filter(|p| p.is_file()) {
            let name = p.file_name().unwrap().to_string_lossy().to_string();
            if name != "timing.txt" {
                out.push((format!("{sub}/{name}"), std::fs::read(&p).unwrap()));
            }
        }
    }
    out
}

#[test]
fn runs_are_reproducible_and_complete() {
    let cfg = parse_config(SMALL).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let a = run_experiment(&cfg, &tmp.path().join("a")).unwrap();
    let b = run_experiment(&cfg, &tmp.path().join("b")).unwrap();
    assert_eq!(a.status, RunStatus::Passed, "{:?}", a.error);
    assert_eq!(a, b);
    let fa = files(&tmp.path().join("a"));
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    for want in ["/metrics.csv", "/projections.csv", "/report.json", "/spectrum.csv", "chains/hmc.bin", "chains/hmc.json"] {
        assert!(names.contains(&want), "missing {want} in {names:?}");
    }
    assert_eq!(fa, files(&tmp.path().join("b")));
    let metrics = String::from_utf8(fa.iter().find(|(n, _)| n == "/metrics.csv").unwrap().1.clone()).unwrap();
    assert!(metrics.starts_with("analysis,fit,magnitude,accuracy,nll,ece,ece_bins\r\n"));
    assert!(a.measurements.contains_key("noise.hmc.final.accuracy"));
    assert!(a.measurements.contains_key("eval.ens.accuracy"));
    assert!(tmp.path().join("a/timing.txt").is_file());
}

#[test]
fn failing_checks_are_reported() {
    let mut cfg = parse_config(SMALL).unwrap();
    cfg.checks[0].bound = -1.0;
    cfg.checks.push(shiftlab::experiment::CheckConfig {
        name: "missing".into(),
        terms: [("eval.nothing".to_string(), 1.0)].into(),
        abs: false,
        op: shiftlab::experiment::CheckOp::Lt,
        bound: 0.0,
    });
    let tmp = tempfile::tempdir().unwrap();
    let r = run_experiment(&cfg, tmp.path()).unwrap();
    assert_eq!(r.status, RunStatus::ChecksFailed);
    assert!(r.checks.iter().all(|c| !c.pass));
    assert_eq!(r.checks[1].value, None);
}

#[test]
fn invalid_configs_write_nothing() {
    let mut cfg = parse_config(SMALL).unwrap();
    cfg.analyses.insert(
        "bad".into(),
        shiftlab::experiment::AnalysisConfig::Evaluate { fits: vec!["ghost".into()] },
    );
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    assert!(matches!(run_experiment(&cfg, &out), Err(Error::Config { .. })));
    assert!(!out.exists());
}
