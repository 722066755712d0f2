use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fptrace-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn fptrace(args: &[&str], config: Option<(&Path, &str)>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fptrace"));
    cmd.args(args).arg("--out").arg(out).env("RUST_LOG", "error");
    if let Some((path, body)) = config {
        fs::write(path, body).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

#[test]
fn gen_attack_decode_round_trip() {
    let dir = scratch("pipeline");
    let cb = dir.join("cb");
    let out = fptrace(
        &["gen", "--seed", "4"],
        Some((&dir.join("gen.json"), r#"{"code": {"kind": "constant_composition", "users": 6}, "n": 200}"#)),
        &cb,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["codebook.header.json", "codebook.jsonl", "codebook.key.json"] {
        assert!(cb.join(f).exists(), "{f}");
    }

    let cb_arg = cb.to_str().unwrap();
    let out = fptrace(
        &["attack", "--codebook", cb_arg, "--coalition", "1,4", "--seed", "2"],
        Some((&dir.join("attack.json"), r#"{"name": "interleave"}"#)),
        &dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let feas = fs::read_to_string(dir.join("feasibility.csv")).unwrap();
    assert!(feas.lines().count() >= 2);

    let pirate = dir.join("pirate.json");
    let out = fptrace(
        &["decode", "--codebook", cb_arg, "--pirate", pirate.to_str().unwrap()],
        Some((&dir.join("decode.json"), r#"{"decoder": "mpmi", "rate": 0.0129, "delta": 0.05, "k_max": 3}"#)),
        &dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let outcome: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("outcome.json")).unwrap()).unwrap();
    let accused: Vec<u64> = outcome["accused"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(accused, vec![1, 4]);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn simulate_writes_csv_and_json() {
    let dir = scratch("simulate");
    let body = r#"{
        "code": {"kind": "tardos", "users": 12},
        "attack": {"name": "majority"},
        "decoder": {"deltas": [0.05]},
        "coalition": {"kind": "fixed", "users": [0, 1, 2]},
        "trials": 20,
        "n_values": [64, 128]
    }"#;
    let out = fptrace(&["simulate"], Some((&dir.join("exp.json"), body)), &dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("estimate.csv")).unwrap();
    assert!(csv.starts_with("N,delta,rate,users,trials,fp_count"));
    assert_eq!(csv.lines().count(), 3);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("estimate.json")).unwrap()).unwrap();
    assert_eq!(json["format"], "fptrace-estimate/1");
    assert_eq!(json["timing"].as_array().unwrap().len(), 2);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn capacity_and_exponent_front_ends() {
    let dir = scratch("games");
    let problem = r#"{"k": 2, "x_alphabet": 2, "y_alphabet": 2, "class": {"kind": "boneh_shaw", "fair": true}, "objective": "detect_one"}"#;
    let out = fptrace(&["capacity"], Some((&dir.join("problem.json"), problem)), &dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let row: Vec<&str> = sweep.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..3], &["2", "1", ""]);
    assert!((row[3].parse::<f64>().unwrap() - 0.25).abs() < 1e-3);

    let req = format!(r#"{{"problem": {problem}, "target": {{"user": 0}}, "rates": [0.1, 0.2, 0.5]}}"#);
    let out = fptrace(&["exponent"], Some((&dir.join("exp.json"), &req)), &dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("exponent.csv")).unwrap();
    let values: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 3);
    assert!(values[0] > values[1] && values[2] == 0.0);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn exit_codes() {
    let dir = scratch("exit");
    let out = fptrace(&["simulate"], Some((&dir.join("bad.json"), r#"{"trials": 0}"#)), &dir);
    assert_eq!(out.status.code(), Some(2));
    let out = fptrace(&["simulate"], None, &dir);
    assert_eq!(out.status.code(), Some(2));
    let bad_decoder = r#"{
        "code": {"kind": "constant_composition", "users": 8},
        "attack": {"name": "interleave"},
        "decoder": {"name": "oracle", "deltas": [0.1]},
        "coalition": {"kind": "random", "size": 2},
        "trials": 1,
        "n_values": [16]
    }"#;
    let out = fptrace(&["simulate"], Some((&dir.join("dec.json"), bad_decoder)), &dir);
    assert_eq!(out.status.code(), Some(2));

    let cb = dir.join("cb");
    let gen = r#"{"code": {"kind": "constant_composition", "users": 30}, "n": 40}"#;
    assert!(fptrace(&["gen"], Some((&dir.join("gen.json"), gen)), &cb).status.success());
    let cb_arg = cb.to_str().unwrap();
    assert!(fptrace(
        &["attack", "--codebook", cb_arg, "--coalition", "0,1"],
        Some((&dir.join("attack.json"), r#"{"name": "interleave"}"#)),
        &dir,
    )
    .status
    .success());
    let out = fptrace(
        &["decode", "--codebook", cb_arg, "--pirate", dir.join("pirate.json").to_str().unwrap()],
        Some((
            &dir.join("decode.json"),
            r#"{"decoder": "mpmi", "rate": 0.1, "k_max": 4, "search_mode": "exhaustive", "budget": 100}"#,
        )),
        &dir,
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let _ = fs::remove_dir_all(&dir);
}
