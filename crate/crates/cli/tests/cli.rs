use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use detloss::quantum::chsh_model;
use detloss::scenario::chsh_tsirelson;
use serde_json::Value;

fn detloss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_detloss"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

#[test]
fn chsh_attack_is_invisible_and_guesses_targeted_setting() {
    let out = detloss(&["attack", "--behavior", "chsh-tsirelson", "--eta", "0.5", "--targets", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["command"], "attack");
    assert!(r["results"]["deviation"].as_f64().unwrap() <= 1e-12);
    assert_eq!(r["results"]["guessing"][0]["setting"], 1);
    assert_eq!(r["results"]["guessing"][0]["probability"], 1.0);
    assert!(r.get("duration_ms").is_none());
}

#[test]
fn infeasible_profile_exits_2_with_margin() {
    let out = detloss(&["attack", "--eta", "0.6", "--targets", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let margin = report(&out)["results"]["error"]["details"]["margin"].as_f64().unwrap();
    assert!((margin + 0.2).abs() < 1e-12);

    let forced = detloss(&["attack", "--eta", "0.6", "--force"]);
    assert_eq!(forced.status.code(), Some(0));
    assert_eq!(report(&forced)["results"]["feasibility"]["feasible"], false);
}

#[test]
fn reports_are_byte_identical_for_same_seed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let path = path.to_str().unwrap();
    let args = ["attack", "--rounds", "2000", "--seed", "7", "--out", path];
    assert_eq!(detloss(&args).status.code(), Some(0));
    let first = fs::read(path).unwrap();
    assert_eq!(detloss(&args).status.code(), Some(0));
    assert_eq!(first, fs::read(path).unwrap());
}

#[test]
fn timing_is_opt_in() {
    let out = detloss(&["plan", "--length", "100", "--timing"]);
    assert!(report(&out)["duration_ms"].is_number());
}

#[test]
fn behavior_and_quantum_files_load() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("chsh.json");
    fs::write(&table, serde_json::to_vec(&chsh_tsirelson()).unwrap()).unwrap();
    let model = dir.path().join("model.json");
    fs::write(&model, serde_json::to_vec(&chsh_model()).unwrap()).unwrap();

    let from_table = detloss(&["attack", "--behavior", table.to_str().unwrap()]);
    let from_model = detloss(&["attack", "--behavior", model.to_str().unwrap()]);
    assert_eq!(from_table.status.code(), Some(0));
    assert_eq!(from_model.status.code(), Some(0));
    let (a, b) = (report(&from_table), report(&from_model));
    assert_ne!(a["input_digest"], b["input_digest"]);
    let pa = a["results"]["guessing"][1]["probability"].as_f64().unwrap();
    let pb = b["results"]["guessing"][1]["probability"].as_f64().unwrap();
    assert!((pa - pb).abs() < 1e-12);
}

#[test]
fn malformed_input_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, br#"{"m_a": 2, "m_b": 2, "d": 2, "table": [1.0]}"#).unwrap();
    let out = detloss(&["boundrand", "--behavior", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stderr.is_empty());

    let missing = detloss(&["attack", "--behavior", Path::new("/nonexistent/q.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(3));
    assert_eq!(detloss(&["attack", "--targets", "3"]).status.code(), Some(3));
    assert_eq!(detloss(&["attack", "--no-such-flag"]).status.code(), Some(3));
}

#[test]
fn boundrand_chsh_fails_and_rejects_high_efficiency() {
    let out = detloss(&["boundrand", "--behavior", "chsh-tsirelson", "--eta", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["results"]["verdict"], "FAIL");
    assert_eq!(r["results"]["certificate"]["locality"]["verdict"], "local");
    assert_eq!(r["results"]["guess_table"].as_array().unwrap().len(), 4);

    let high = detloss(&["boundrand", "--behavior", "chsh-tsirelson", "--eta", "0.6"]);
    assert_eq!(high.status.code(), Some(2));
}

#[test]
fn plan_examples() {
    let r = report(&detloss(&["plan", "--alpha", "0.2", "--length", "100"]));
    assert_eq!(r["results"]["channel_efficiency"], 0.01);
    assert_eq!(r["results"]["min_bases"], 100);

    let r = report(&detloss(&["plan", "--m-a", "3", "--g-prime", "2"]));
    assert_eq!(r["results"]["improved_threshold"], 0.6);

    let r = report(&detloss(&["plan", "--bases", "1"]));
    assert_eq!(r["results"]["primary_threshold"], 0.5);
    let km = r["results"]["max_distance"]["km"].as_f64().unwrap();
    assert!((km - 15.05).abs() < 0.01);
}

#[test]
fn localtest_reports_verdicts() {
    let out = detloss(&["localtest", "--eta", "1,0.8", "--threshold", "0.01"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["results"]["tests"][0]["verdict"], "nonlocal");
    assert_eq!(r["results"]["tests"][1]["verdict"], "local");
    let eta = r["results"]["threshold"]["eta"].as_f64().unwrap();
    assert!((eta - 2.0 / (1.0 + 2f64.sqrt())).abs() < 0.01);
}

#[test]
fn improved_attack_at_critical_efficiency() {
    let out = detloss(&["improved", "--behavior", "chsh-tsirelson", "--targets", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert!(r["results"]["deviation"].as_f64().unwrap() <= 1e-12);
    assert!((r["results"]["plan"]["eta"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);

    assert_eq!(detloss(&["improved", "--eta", "0.9"]).status.code(), Some(2));
}

#[test]
fn simulate_writes_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.jsonl");
    for attack in ["primary", "improved"] {
        let out = detloss(&[
            "simulate", "--rounds", "50", "--seed", "3", "--attack", attack, "--out", path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 50);
        for (i, rec) in lines.iter().enumerate() {
            assert_eq!(rec["round"], i as u64);
            assert!(rec["eve_branch"].is_string());
            assert!(rec["x"].as_u64().unwrap() >= 1);
        }
    }
}
