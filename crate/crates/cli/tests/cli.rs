use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn multibump(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multibump"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn summary(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn untoleranced(v: &Value, path: &str, out: &mut Vec<String>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let numeric = x.is_number() || x.as_array().is_some_and(|a| a.iter().any(|e| e.is_number() || e.is_array()));
                if numeric && !k.ends_with("_tol") && !m.contains_key(&format!("{k}_tol")) {
                    out.push(format!("{path}/{k}"));
                }
                untoleranced(x, &format!("{path}/{k}"), out);
            }
        }
        Value::Array(a) => a.iter().for_each(|x| untoleranced(x, path, out)),
        _ => {}
    }
}

#[test]
fn cubic_ground_state_in_one_dimension() {
    let s = summary(&multibump(&["ground-state", "--dim", "1", "--p", "3"]));
    assert!((s["w0"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-5);
    assert!((s["I"].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-3);
    assert_eq!(s["kernel_dim"], 1);
}

#[test]
fn artifacts_land_in_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let s = summary(&multibump(&["ground-state", "--out", out.to_str().unwrap()]));
    assert_eq!(read_json(&out.join("summary.json")), s);
    let profile = std::fs::read_to_string(out.join("tables/profile.csv")).unwrap();
    assert!(profile.starts_with("r,w,dw\n"));
    assert!(std::fs::read_to_string(out.join("run.conf")).unwrap().contains("dim = 1"));
}

#[test]
fn ledger_without_potential_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = multibump(&["ledger", "--delta", "1e-9", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
}

#[test]
fn numerical_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = multibump(&[
        "reduce",
        "--potential",
        "algebraic:1",
        "--half-width",
        "8",
        "--spikes",
        "[-7.5, 7.5]",
        "--rho",
        "10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read_json(&dir.path().join("summary.json"))["error"]["kind"].is_string());
}

#[test]
fn every_number_comes_with_a_tolerance() {
    let runs: [&[&str]; 4] = [
        &["ground-state", "--dim", "2"],
        &["spectrum"],
        &["reduce", "--potential", "algebraic:1", "--delta", "1e-3", "--spikes", "[-6, 6]"],
        &["energy", "--potential", "sub_exponential", "--delta", "1e-3", "--spikes", "[-6, 6]", "--distances", "10"],
    ];
    for args in runs {
        let mut missing = Vec::new();
        untoleranced(&summary(&multibump(args)), "", &mut missing);
        assert!(missing.is_empty(), "{args:?}: {missing:?}");
    }
}

#[test]
fn maximize_is_deterministic_for_a_seed() {
    let args = ["maximize", "--potential", "algebraic:1", "--delta", "1e-6", "--k", "2", "--seed", "11"];
    assert_eq!(multibump(&args).stdout, multibump(&args).stdout);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "potential = algebraic:1\ndelta = 1e-3\nspikes = [-6, 6]\nsuite = all\n").unwrap();
    let conf = conf.to_str().unwrap();
    let base = summary(&multibump(&["energy", "--config", conf]));
    let flagged = summary(&multibump(&["energy", "--config", conf, "--delta", "0"]));
    let m = |v: &Value| v["M"].as_f64().unwrap();
    assert!(m(&base) > m(&flagged));
    assert_eq!(flagged["breakdown"]["potential"], 0.0);
}

#[test]
fn system_reports_synchronized_amplitudes() {
    let s = summary(&multibump(&["system", "--mu1", "1", "--mu2", "1", "--beta", "3"]));
    assert!((s["A"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((s["beta_star_scan"]["beta_star"].as_f64().unwrap() - 3.0 / 7.0).abs() < 1e-3);
}

#[test]
fn coupled_verification_suite_passes() {
    let out = multibump(&["verify", "--suite", "system-1d"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("criterion  9 PASS"));
}
