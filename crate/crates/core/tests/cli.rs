use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use wienerpath::pathfile::PathFile;

const MINIMAL: &str = r#"
seed = 3
samples = 100

[manifold]
kind = "circle"
radius = 1.0

[partition]
kind = "uniform"
n = 2

[functional]
name = "constant"
value = 2.5
"#;

const CONVERGE: &str = r#"
seed = 12
samples = 4000
p = 1.0

[manifold]
kind = "sphere2"
radius = 1.0

[partition]
kind = "chain"
counts = [2, 4, 8]

[functional]
name = "sup_distance"
"#;

fn wienerpath(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wienerpath"));
    cmd.args(args).env_remove("WIENERPATH_OUT_DIR");
    if let Some(dir) = env_out {
        cmd.env("WIENERPATH_OUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("wall_time_s");
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

#[test]
fn minimal_estimate() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "min.toml", MINIMAL);
    let out = wienerpath(&["estimate", "--config", &cfg], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["estimate"], 2.5);
    assert_eq!(report["stderr"], 0.0);
    assert_eq!(report["samples"], 100);
    assert_eq!(report["seed"], 3);
}

#[test]
fn reruns_are_identical_and_files_are_written() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "conv.toml", CONVERGE);
    let mut jsons = Vec::new();
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = wienerpath(
            &["converge", "--config", &cfg, "--workers", "2", "--out", out_dir.to_str().unwrap(), "--format", "both", "--plot"],
            None,
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let mut json: Value = serde_json::from_slice(&std::fs::read(out_dir.join("converge.json")).unwrap()).unwrap();
        strip_timing(&mut json);
        jsons.push(json);
        csvs.push(std::fs::read(out_dir.join("converge.csv")).unwrap());
        assert!(std::fs::read_to_string(out_dir.join("converge.svg")).unwrap().contains("<polyline"));
    }
    assert_eq!(jsons[0], jsons[1]);
    assert_eq!(csvs[0], csvs[1]);
    let csv = String::from_utf8(csvs[0].clone()).unwrap();
    for row in csv.lines().skip(1) {
        assert!(row.contains("uniform(") && row.contains(",12,2"), "{row}");
    }
    // a different seed changes the numbers
    let out = wienerpath(&["converge", "--config", &cfg, "--workers", "2", "--seed", "13"], None);
    let mut other: Value = serde_json::from_slice(&out.stdout).unwrap();
    strip_timing(&mut other);
    assert_ne!(other["table"], jsons[0]["table"]);
}

#[test]
fn environment_overrides_config_output_dir() {
    let dir = TempDir::new().unwrap();
    let from_config = dir.path().join("cfg_out");
    let body = format!("{MINIMAL}\n[output]\ndir = \"{}\"\nformat = \"csv\"\n", from_config.display());
    let cfg = write_config(&dir, "min.toml", &body);
    let env_dir = dir.path().join("env_out");
    let out = wienerpath(&["estimate", "--config", &cfg], Some(&env_dir));
    assert!(out.status.success());
    assert!(env_dir.join("estimate.csv").exists());
    assert!(!from_config.exists());
    let flag_dir = dir.path().join("flag_out");
    let out = wienerpath(&["estimate", "--config", &cfg, "--out", flag_dir.to_str().unwrap()], Some(&env_dir));
    assert!(out.status.success());
    assert!(flag_dir.join("estimate.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let unknown = write_config(&dir, "unknown.toml", &format!("colour = 1\n{MINIMAL}"));
    assert_eq!(wienerpath(&["estimate", "--config", &unknown], None).status.code(), Some(2));

    let missing = dir.path().join("nope.toml");
    assert_eq!(wienerpath(&["estimate", "--config", missing.to_str().unwrap()], None).status.code(), Some(4));

    let tiny_t = "[manifold]\nkind = \"sphere2\"\nradius = 1.0\n\n[kernel]\ntimes = [1e-6]\n";
    let cap = write_config(&dir, "cap.toml", tiny_t);
    let out = wienerpath(&["kernel", "--config", &cap], None);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    let ok = write_config(&dir, "min.toml", MINIMAL);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = wienerpath(&["estimate", "--config", &ok, "--out", blocker.join("sub").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(4));

    let no_functional = write_config(&dir, "nf.toml", &MINIMAL.replace("[functional]\nname = \"constant\"\nvalue = 2.5\n", ""));
    assert_eq!(wienerpath(&["estimate", "--config", &no_functional], None).status.code(), Some(2));
}

#[test]
fn develop_round_trip_through_files() {
    let dir = TempDir::new().unwrap();
    let flat = dir.path().join("flat.txt");
    std::fs::write(&flat, "path flat\nmanifold sphere2 1\ntimes 0 0.5 1\n0.3 -0.2\n3.9 0.4\n").unwrap();
    let curved = dir.path().join("curved.txt");
    let back = dir.path().join("back.txt");
    let out = wienerpath(&["develop", "--input", flat.to_str().unwrap(), "--output", curved.to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["direction"], "develop");
    let (e_in, e_out) = (summary["energy_in"].as_f64().unwrap(), summary["energy_out"].as_f64().unwrap());
    assert!((e_in - e_out).abs() < 1e-10 * (1.0 + e_in));
    assert!(std::fs::read_to_string(&curved).unwrap().starts_with("path curved"));
    let out = wienerpath(&["develop", "--input", curved.to_str().unwrap(), "--output", back.to_str().unwrap()], None);
    assert!(out.status.success());
    let vertices = |p: &Path| match PathFile::parse(&std::fs::read_to_string(p).unwrap()).unwrap() {
        PathFile::Flat { path, .. } => path.vertices,
        PathFile::Curved { .. } => panic!("expected a flat path"),
    };
    let (a, b) = (vertices(&flat), vertices(&back));
    assert_eq!(a.len(), b.len());
    for (u, v) in a.iter().zip(&b) {
        for (x, y) in u.iter().zip(v.iter()) {
            assert!((x - y).abs() < 1e-9, "{a:?} vs {b:?}");
        }
    }
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "path flat\nmanifold sphere2 1\ntimes 0 1\n0.3\n").unwrap();
    let out = wienerpath(&["develop", "--input", bad.to_str().unwrap(), "--output", back.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn geometric_both_reports_cross_check() {
    let dir = TempDir::new().unwrap();
    let body = r#"
seed = 4
samples = 3000
scheme = "both"

[manifold]
kind = "circle"
radius = 1.0

[partition]
kind = "chain"
counts = [2, 8]

[functional]
name = "endpoint"
observable = { kind = "legendre", degree = 1 }
"#;
    let cfg = write_config(&dir, "geo.toml", body);
    let out = wienerpath(&["geometric", "--config", &cfg, "--workers", "1"], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = v["cross_check"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    let last = rows.last().unwrap();
    assert!(last["difference"].as_f64().unwrap().abs() < 4.0 * last["joint_stderr"].as_f64().unwrap());
}
