use std::fs;
use std::path::Path;
use std::process::Command as Process;

use serde_json::Value;
use thermalab::config::{DeltaPolicy, ExperimentConfig, TimeGridSpec};
use thermalab::report::REPORT_SCHEMA;
use thermalab::{run_to_dir, Command, Context, HarnessError};

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default_chain(vec![4]);
    cfg.samples = 4;
    cfg.reference_samples = 2;
    cfg.moment_dims = vec![2];
    cfg.moment_samples = 500;
    cfg.time_grid = TimeGridSpec::Uniform { t_max: 2.0, points: 5 };
    cfg
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Checks the parts of the schema that carry meaning: required keys,
/// no unknown top-level keys, the enums and the hash pattern.
fn check_against_schema(report: &Value) {
    let schema: Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let obj = report.as_object().unwrap();
    let props = schema["properties"].as_object().unwrap();
    for key in schema["required"].as_array().unwrap() {
        assert!(obj.contains_key(key.as_str().unwrap()), "missing {key}");
    }
    for key in obj.keys() {
        assert!(props.contains_key(key), "unexpected key {key}");
    }
    let commands = props["command"]["enum"].as_array().unwrap();
    assert!(commands.contains(&report["command"]));
    let hash = report["config_hash"].as_str().unwrap();
    assert!(hash.len() == 64 && hash.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()));
    let units = schema["definitions"]["unit"]["enum"].as_array().unwrap();
    for m in report["metrics"].as_array().unwrap().iter().chain(report["diagnostics"].as_array().unwrap()) {
        assert!(units.contains(&m["unit"]), "unit {}", m["unit"]);
    }
    for a in report["artifacts"].as_array().unwrap() {
        assert!(a["rows"].as_u64().unwrap() >= 1);
        for c in a["columns"].as_array().unwrap() {
            assert!(units.contains(&c["unit"]));
        }
    }
}

#[test]
fn every_command_writes_a_schema_conforming_report() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    for cmd in Command::ALL {
        let out = dir.path().join(cmd.name());
        let report = run_to_dir(cmd, &cfg, &Context::default(), Some(1), &out).unwrap();
        let json = read_json(&out.join("report.json"));
        check_against_schema(&json);
        assert_eq!(json["command"], cmd.name());
        assert_eq!(json["config_hash"], cfg.hash());
        for a in &report.artifacts {
            let csv = fs::read_to_string(out.join(&a.file)).unwrap();
            let lines: Vec<&str> = csv.lines().collect();
            assert_eq!(lines.len(), a.rows + 1, "{}", a.file);
            let header: Vec<&str> = lines[0].split(',').collect();
            assert_eq!(header, a.columns.iter().map(|c| c.name.as_str()).collect::<Vec<_>>());
        }
    }
}

#[test]
fn config_round_trips_through_json() {
    let mut cfg = small_config();
    cfg.delta = DeltaPolicy::NPower { prefactor: 1.5, alpha: 0.25, kappa: 0.0 };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let back = ExperimentConfig::load(&path).unwrap();
    assert_eq!(back.hash(), cfg.hash());
    assert_ne!(back.clone().with_seed(99).hash(), cfg.hash());
}

#[test]
fn spectrum_cache_hit_skips_eigensolver() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let ctx = Context { cache: Some(dir.path().join("cache")) };
    let first = run_to_dir(Command::Spectrum, &cfg, &ctx, Some(1), &dir.path().join("a")).unwrap();
    let second = run_to_dir(Command::Spectrum, &cfg, &ctx, Some(1), &dir.path().join("b")).unwrap();
    let eig = |r: &thermalab::RunReport| r.timings.iter().find(|t| t.stage.starts_with("eigensolver")).unwrap().seconds;
    assert!(eig(&first) > 0.0);
    assert_eq!(eig(&second), 0.0);
    assert!(second.timings.iter().any(|t| t.stage.starts_with("cache_load")));
    let a = fs::read(dir.path().join("a/spectrum.csv")).unwrap();
    let b = fs::read(dir.path().join("b/spectrum.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn truncated_cache_is_an_error() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let ctx = Context { cache: Some(cache.clone()) };
    run_to_dir(Command::Spectrum, &cfg, &ctx, Some(1), &dir.path().join("a")).unwrap();
    let file = fs::read_dir(&cache).unwrap().map(|e| e.unwrap().path()).find(|p| p.extension().is_some_and(|e| e == "thlb")).unwrap();
    let bytes = fs::read(&file).unwrap();
    fs::write(&file, &bytes[..bytes.len() / 2]).unwrap();
    let err = run_to_dir(Command::Spectrum, &cfg, &ctx, Some(1), &dir.path().join("b")).unwrap_err();
    assert!(matches!(err, HarnessError::CacheCorrupt(_)), "{err}");
}

#[test]
fn cli_runs_with_config_file() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = dir.path().join("out");
    let status = Process::new(env!("CARGO_BIN_EXE_thermalab"))
        .args(["equilibrium", "--threads", "1", "--seed", "5"])
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["master_seed"], 5);
    assert!(String::from_utf8_lossy(&status.stdout).contains("wrote"));

    let bad = Process::new(env!("CARGO_BIN_EXE_thermalab"))
        .args(["spectrum", "--config", "/nonexistent/cfg.json"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
}
