use std::path::Path;
use std::process::{Command, Output};

fn dqcc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dqcc")).args(args).output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = r#"
episodes = 4
[env]
deadline = 40
"#;

#[test]
fn train_then_eval_and_map() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    let summary =
        json(&dqcc(&["train", "--preset", "desk_small", "--config", &cfg, "--out", out_s, "--seed", "3", "--quiet"]));
    assert_eq!(summary["episodes"], 4);
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("episode,seed,"));
    assert!(out.join("config.toml").exists());

    let model = out.join("model.json");
    let model_s = model.to_str().unwrap();
    let records = dir.path().join("eval.csv");
    let eval = json(&dqcc(&[
        "eval",
        "--model",
        model_s,
        "--config",
        out.join("config.toml").to_str().unwrap(),
        "--episodes",
        "3",
        "--records",
        records.to_str().unwrap(),
    ]));
    assert_eq!(eval["episodes"], 3);
    assert_eq!(std::fs::read_to_string(&records).unwrap().lines().count(), 4);
    let seq = json(&dqcc(&[
        "eval",
        "--model",
        model_s,
        "--config",
        out.join("config.toml").to_str().unwrap(),
        "--episodes",
        "3",
        "--sequential",
    ]));
    assert_eq!(eval, seq);

    let circuit = write(dir.path(), "c.json", r#"{"num_qubits": 3, "gates": [[0, 1], [1, 2]]}"#);
    let map =
        json(&dqcc(&["map", "--circuit", &circuit, "--model", model_s, "--preset", "desk_small", "--config", &cfg]));
    assert_eq!(map["placement"].as_array().unwrap().len(), 3);
}

#[test]
fn oracle_reports_minimum_and_witness() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write(dir.path(), "c.json", r#"{"num_qubits": 2, "gates": [[0, 1]]}"#);
    let placement = write(dir.path(), "p.json", "[0, 2]");
    let v = json(&dqcc(&["oracle", "--topology", "line:3", "--circuit", &circuit, "--placement", &placement]));
    assert_eq!(v["stops"], 3);
    assert_eq!(v["actions"].as_array().unwrap().len(), v["kinds"].as_array().unwrap().len());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let out_s = out.to_str().unwrap();
    // unknown preset is a configuration error
    let o = dqcc(&["train", "--preset", "nope", "--out", out_s, "--seed", "0"]);
    assert_eq!(o.status.code(), Some(2));
    // invalid config value
    let bad = write(dir.path(), "bad.toml", "[env]\np_gen = 1.5\n");
    let o = dqcc(&["train", "--preset", "desk_small", "--config", &bad, "--out", out_s, "--seed", "0"]);
    assert_eq!(o.status.code(), Some(2));
    // missing file
    let o = dqcc(&["eval", "--model", "/nonexistent/model.json", "--preset", "desk_small", "--episodes", "1"]);
    assert_eq!(o.status.code(), Some(3));
    // clap usage errors exit with 2 as well
    let o = dqcc(&["train"]);
    assert_eq!(o.status.code(), Some(2));
}
