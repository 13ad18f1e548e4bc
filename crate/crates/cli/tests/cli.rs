use std::path::Path;
use std::process::{Command, Output};

use sdto::{Algorithm, HermitianMatrix, RunRecord, RunStatus};
use sdto_cli::{read_csv, write_csv};

fn sdto(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdto"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write_matrix(dir: &Path, name: &str, m: &HermitianMatrix) -> String {
    let path = dir.join(name);
    std::fs::write(&path, m.to_json()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn ghz2_refinement_record() {
    let v = json(&sdto(&["threshold", "--state", "ghz", "--m", "2", "--algo", "ir"]));
    assert_eq!(v["algorithm"], "ir");
    assert!((v["ub_relax"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-2);
    assert!(v["lb_relax"].as_f64().unwrap() <= v["ub_relax"].as_f64().unwrap() + 1e-9);
}

#[test]
fn three_qubit_outer_bounds() {
    let v = json(&sdto(&["threshold", "--state", "ghz", "--m", "3", "--algo", "ddps_plus"]));
    assert!((v["lb_relax"].as_f64().unwrap() - 0.8).abs() < 2e-3);
    assert!(v["ub_relax"].is_null());
    let v = json(&sdto(&["threshold", "--state", "dicke", "--m", "3", "--k", "1", "--algo", "ddps_plus"]));
    assert!((v["lb_relax"].as_f64().unwrap() - 0.7904).abs() < 3e-3);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(sdto(&["threshold", "--state", "ghz"]).status.code(), Some(2));
    assert_eq!(sdto(&["threshold", "--state", "ghz", "--algo", "simplex"]).status.code(), Some(2));
    assert_eq!(sdto(&["threshold", "--state", "nosuch", "--algo", "cp"]).status.code(), Some(2));
    assert_eq!(sdto(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn bss_identity_and_bell() {
    let dir = tempfile::tempdir().unwrap();
    let id = write_matrix(dir.path(), "id.json", &HermitianMatrix::identity(4));
    let v = json(&sdto(&["bss", "--chi", &id, "--dims", "2,2"]));
    assert!((v["lower"].as_f64().unwrap() - 1.0).abs() < 1e-5);
    assert!((v["upper"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    let bell = sdto::ghz_state(2).unwrap().phi.scale(-1.0);
    let path = write_matrix(dir.path(), "bell.json", &bell);
    let v = json(&sdto(&["bss", "--chi", &path, "--dims", "2,2"]));
    let (lo, up) = (v["lower"].as_f64().unwrap(), v["upper"].as_f64().unwrap());
    assert!(lo <= up + 1e-9);
    assert!((up + 0.5).abs() < 1e-3, "{up}");
    assert_eq!(v["ray"]["modes"].as_array().unwrap().len(), 2);
    assert!(v["nodes_explored"].as_u64().unwrap() >= 1);

    let out = sdto(&["bss", "--chi", &path, "--dims", "2,3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_tables() {
    let dir = tempfile::tempdir().unwrap();
    let header = "state,m,k,algo,time_limit,node_limit,rank,seed\n";
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, header).unwrap();
    let out = sdto(&["bench", empty.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(read_csv(&out.stdout[..]).unwrap().is_empty());

    let suite = dir.path().join("suite.csv");
    let mut text = header.to_string();
    for state in ["ghz,3,", "dicke,3,1", "cluster,3,"] {
        for algo in ["ddps_plus", "dps_bipartite"] {
            text.push_str(&format!("{state},{algo},120,,,0\n"));
        }
    }
    text.push_str("nosuch,2,,cp,,,,\n");
    std::fs::write(&suite, text).unwrap();
    let table = dir.path().join("table.csv");
    let out = sdto(&["bench", suite.to_str().unwrap(), "--out", table.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows = read_csv(text.as_bytes()).unwrap();
    assert_eq!(rows.len(), 7);
    assert_eq!(std::fs::read_to_string(&table).unwrap(), text);
    for r in &rows[..6] {
        assert_ne!(r.status, RunStatus::Failed);
        assert!(r.lb_relax.is_some() && r.ub_relax.is_none() && r.ub_heur.is_none());
    }
    assert_eq!(rows[6].status, RunStatus::Failed);
    let first_line = text.lines().nth(1).unwrap();
    assert!(first_line.contains(",-,"), "{first_line}");
}

#[test]
fn csv_append_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs.csv");
    let args = ["threshold", "--state", "ghz", "--m", "2", "--algo", "dps_bipartite", "--out", out.to_str().unwrap()];
    let a: RunRecord = serde_json::from_slice(&sdto(&args).stdout).unwrap();
    let b: RunRecord = serde_json::from_slice(&sdto(&args).stdout).unwrap();
    let rows = read_csv(std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(rows, vec![a.clone(), b]);

    let mut buf = Vec::new();
    write_csv(&mut buf, std::slice::from_ref(&a)).unwrap();
    assert_eq!(read_csv(&buf[..]).unwrap(), vec![a.clone()]);
    assert_eq!(a.algorithm, Algorithm::DpsBipartite);
    assert!((a.lb_relax.unwrap() - 2.0 / 3.0).abs() < 1e-4);
}

#[test]
fn deterministic_runs_match() {
    let args = ["threshold", "--state", "ghz", "--m", "2", "--algo", "cp", "--deterministic", "--seed", "4"];
    let a: RunRecord = serde_json::from_slice(&sdto(&args).stdout).unwrap();
    let b: RunRecord = serde_json::from_slice(&sdto(&args).stdout).unwrap();
    assert_eq!(RunRecord { time_seconds: 0.0, ..a }, RunRecord { time_seconds: 0.0, ..b });
}
