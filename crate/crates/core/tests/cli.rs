use cognitraj::scene::read_windows_jsonl;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cognitraj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cognitraj"))
        .args(args)
        .env("COGNITRAJ_LOG", "off")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cognitraj(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = "[model]\nwidth = 8\nheads = 2\nmodes = 2\nnorm_groups = 2\n[train]\nepochs = 2\nbatch_size = 8\n";

#[test]
fn synth_writes_affine_constant_velocity_windows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w.jsonl");
    ok(&["synth", "--kind", "constant-velocity", "--n", "32", "--seed", "5", "--out", s(&out)]);
    let windows = read_windows_jsonl(fs::read(&out).unwrap().as_slice()).unwrap();
    assert_eq!(windows.len(), 32);
    for w in &windows {
        for t in &w.agents {
            for k in t.states.windows(3) {
                assert_eq!(k[1].p - k[0].p, k[2].p - k[1].p);
            }
        }
    }
}

#[test]
fn synth_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    ok(&["synth", "--kind", "lane-change", "--n", "8", "--out", s(&a)]);
    ok(&["synth", "--kind", "lane-change", "--n", "8", "--out", s(&b)]);
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn ingest_of_three_rows_yields_one_track() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    fs::write(&csv, "agent_id,frame,x,y\n1,0,0,0\n1,1,1,0\n1,2,2,0\n").unwrap();
    let out = dir.path().join("w.jsonl");
    let summary: serde_json::Value = serde_json::from_str(ok(&["ingest", s(&csv), "--out", s(&out)]).trim()).unwrap();
    assert_eq!(summary["tracks"], 1);
    assert_eq!(summary["windows"], 0);
}

#[test]
fn unknown_variant_fails_with_a_json_line() {
    let out = cognitraj(&["--variant", "drop4", "synth"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(line["flag"], "--variant");
    assert!(line["message"].as_str().unwrap().contains("drop4"));
}

#[test]
fn bad_config_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "fraction = 2.0\n[model]\nwidth = 10\nheads = 4\n").unwrap();
    let out = cognitraj(&["--config", s(&cfg), "synth"]);
    assert_eq!(out.status.code(), Some(2));
    let line: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(line["error"], "config");
    assert!(line["violations"].as_array().unwrap().len() >= 2);
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    let out = cognitraj(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"error\":\"usage\""));
}

#[test]
fn train_eval_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    fs::write(p("c.toml"), SMALL).unwrap();
    let cfg = p("c.toml");
    let cfg = s(&cfg);
    ok(&["synth", "--config", cfg, "--kind", "lane-change", "--n", "6", "--out", s(&p("w.jsonl"))]);

    let train = |out: &str| {
        ok(&["train", s(&p("w.jsonl")), "--config", cfg, "--threads", "1", "--out", s(&p(out))]);
    };
    train("run_a");
    train("run_b");
    for f in ["model.ckpt", "curve.csv"] {
        assert_eq!(fs::read(p("run_a").join(f)).unwrap(), fs::read(p("run_b").join(f)).unwrap(), "{f} differs");
    }

    let ckpt = p("run_a").join("model.ckpt");
    ok(&["eval", s(&ckpt), s(&p("w.jsonl")), "--config", cfg, "--variant", "drop8", "--out", s(&p("r.csv"))]);
    let report = fs::read_to_string(p("r.csv")).unwrap();
    assert_eq!(report.lines().count(), 6);
    assert!(report.lines().skip(1).all(|l| l.starts_with("drop8,")));

    let summary = ok(&["predict", s(&ckpt), s(&p("w.jsonl")), "--window", "2", "--out", s(&p("plot"))]);
    let summary: serde_json::Value = serde_json::from_str(summary.trim()).unwrap();
    let svg = fs::read_to_string(summary["svg"].as_str().unwrap()).unwrap();
    roxmltree::Document::parse(&svg).unwrap();
    assert!(p("plot").join("window2_modes.csv").exists());

    let out = cognitraj(&["predict", s(&ckpt), s(&p("w.jsonl")), "--window", "99"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--window"));
}
