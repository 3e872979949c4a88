//! The `feller-lab` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use feller_lab::output::{read_frames, sha256_hex, RunManifest};
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_feller-lab"));
    c.env_remove("FELLER_LAB_SEED").arg("--threads").arg("1");
    c
}

fn run(c: &mut Command) -> (i32, Value, String) {
    let Output { status, stdout, stderr } = c.output().expect("binary runs");
    let out = String::from_utf8(stdout).unwrap();
    let err = String::from_utf8(stderr).unwrap();
    let json = serde_json::from_str(out.trim()).unwrap_or(Value::Null);
    (status.code().unwrap_or(-1), json, err)
}

fn error_json(stderr: &str) -> Value {
    serde_json::from_str(stderr.trim().lines().last().expect("one error line")).expect("error is JSON")
}

fn manifest(path: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const POISSON: &str = r#"{
  "schema_version": 1,
  "scenario": {
    "label": "file-poisson",
    "dims": {"d": 1, "k": 1},
    "uniqueness": "lipschitz",
    "triplet": {"drift": [0.0], "covariance": [[0.0]], "measure": {"atoms": [{"point": [1.0], "mass": 1.0}]}},
    "sigma": {"kind": "linear", "c": [-1.0]}
  },
  "expected": {"verdict": "EXPECTED"}
}"#;

#[test]
fn classify_exit_code_follows_the_expected_verdict() {
    let dir = tempfile::tempdir().unwrap();
    for (expected, code) in [("not_feller", 0), ("feller", 2)] {
        let file = dir.path().join(format!("{expected}.json"));
        fs::write(&file, POISSON.replace("EXPECTED", expected)).unwrap();
        let (c, json, _) = run(bin().args(["classify", "--scenario"]).arg(&file).arg("--out").arg(dir.path().join(expected)));
        assert_eq!(c, code, "expected {expected}");
        assert_eq!(json["verdict"], "not_feller");
    }
}

#[test]
fn schema_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.json");
    fs::write(&file, POISSON.replace("EXPECTED", "feller").replace("\"c\": [-1.0]", "\"c\": [-1.0], \"gain\": 2")).unwrap();
    let (c, _, err) = run(bin().args(["classify", "--scenario"]).arg(&file).arg("--out").arg(dir.path()));
    assert_eq!(c, 4);
    let e = error_json(&err);
    assert_eq!(e["kind"], "schema");
    assert_eq!(e["exit_code"], 4);
    assert!(e["path"].as_str().unwrap().starts_with("scenario.sigma"), "{e}");
    assert!(e["error"].as_str().unwrap().contains("gain"), "{e}");

    let (c, _, err) = run(bin().args(["classify", "--scenario", "no-such-scenario", "--out"]).arg(dir.path()));
    assert_eq!(c, 4);
    assert_eq!(error_json(&err)["exit_code"], 4);
}

#[test]
fn json_out_path_puts_the_manifest_beside_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gou.json");
    let (c, json, _) = run(bin().args(["classify", "--scenario", "example-4.3-gou", "--out"]).arg(&out));
    assert_eq!(c, 0);
    assert_eq!(json["verdict"], "not_feller");
    let main: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(main["classification"]["verdict"], "not_feller");
    assert_eq!(main["expected_match"], true);
    let m = manifest(&dir.path().join("gou.manifest.json"));
    assert_eq!(m.command, "classify");
    assert_eq!(m.outputs.len(), 1);
    assert_eq!(m.outputs[0].sha256, sha256_hex(&fs::read(&out).unwrap()));
}

#[test]
fn simulate_frames_match_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"simulation": {"n_paths": 5, "horizon": 0.5, "dt": 0.05, "master_seed": 4}}"#).unwrap();
    let out = dir.path().join("sim");
    let (c, _, err) = run(bin()
        .args(["simulate", "--scenario", "compound-poisson-unit", "--x0", "-0.5", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out));
    assert_eq!(c, 0, "{err}");
    let frames = read_frames(fs::File::open(out.join("paths.bin")).unwrap()).unwrap();
    assert_eq!(frames.len(), 5);
    let csv = fs::read_to_string(out.join("paths.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    let flat: Vec<Vec<f64>> = frames
        .iter()
        .enumerate()
        .flat_map(|(i, f)| f.rows.iter().map(move |r| [vec![i as f64], r.clone()].concat()))
        .collect();
    assert_eq!(rows, flat);
    assert!(frames.iter().all(|f| f.dim == 1 && f.rows[0] == vec![0.0, -0.5]));
    let m = manifest(&out.join("manifest.json"));
    assert_eq!(m.master_seed, 4);
    for o in &m.outputs {
        assert_eq!(o.sha256, sha256_hex(&fs::read(&o.path).unwrap()), "{}", o.path);
    }
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"simulation": {"n_paths": 2, "horizon": 0.1, "dt": 0.05, "master_seed": 1}}"#).unwrap();
    let seed_of = |env: Option<&str>, flag: Option<&str>, name: &str| {
        let out = dir.path().join(name);
        let mut c = bin();
        c.args(["simulate", "--scenario", "brownian-unit", "--config"]).arg(&cfg).arg("--out").arg(&out);
        if let Some(e) = env {
            c.env("FELLER_LAB_SEED", e);
        }
        if let Some(s) = flag {
            c.args(["--seed", s]);
        }
        let (code, _, err) = run(&mut c);
        assert_eq!(code, 0, "{err}");
        (manifest(&out.join("manifest.json")).master_seed, fs::read(out.join("paths.bin")).unwrap())
    };
    let (config_seed, a) = seed_of(None, None, "a");
    let (env_seed, b) = seed_of(Some("17"), None, "b");
    let (flag_seed, c) = seed_of(Some("17"), Some("23"), "c");
    let (again, d) = seed_of(None, Some("17"), "d");
    assert_eq!((config_seed, env_seed, flag_seed, again), (1, 17, 23, 17));
    assert_ne!(a, b);
    assert_ne!(b, c);
    assert_eq!(b, d);

    let out = dir.path().join("bad");
    let mut c = bin();
    c.env("FELLER_LAB_SEED", "seventeen").args(["simulate", "--scenario", "brownian-unit", "--out"]).arg(&out);
    let (code, _, err) = run(&mut c);
    assert_eq!(code, 4);
    assert!(err.contains("FELLER_LAB_SEED"), "{err}");
}

#[test]
fn profile_accepts_radii_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let (c, json, err) = run(bin()
        .args(["profile", "--scenario", "example-4.2-stable-beta", "--beta", "1.6667", "--alpha", "1.5", "--r", "0.5,1"])
        .arg("--out")
        .arg(dir.path()));
    assert_eq!(c, 0, "{err}");
    let profiles = json["profiles"].as_array().unwrap();
    assert_eq!(profiles.len(), 2);
    assert!(profiles.iter().all(|p| p["verdict"] == "positive_limit"));
    assert!(dir.path().join("profile_r0p5.csv").exists());
}
