use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rova_cli::metrics::read_metrics;
use rova_cli::RunConfig;
use rova_core::corruption::{Family, PerturbationSpec};
use rova_core::frame_store::{write_sequence, FrameSequence};

fn rova(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rova"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn rova")
}

fn random_video(path: &Path, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t, h, w) = (6, 24, 32);
    let data: Vec<u8> = (0..t * h * w * 3).map(|_| rng.random()).collect();
    write_sequence(&FrameSequence::new(t, h, w, data).unwrap(), path).unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn corrupt_then_regen_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("clean.rvf");
    let out = dir.path().join("out/corrupt.rvf");
    let regen = dir.path().join("regen.rvf");
    random_video(&input, 1);
    let o = rova(&["corrupt", "--input", s(&input), "--output", s(&out), "--mask", s(&dir.path().join("m.rvf"))], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sidecar = PathBuf::from(format!("{}.spec.json", out.display()));
    assert!(sidecar.exists());
    let o = rova(&["regen", "--spec", s(&sidecar), "--input", s(&input), "--output", s(&regen)], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&regen).unwrap());
}

#[test]
fn forced_weather_weights() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..5 {
        let input = dir.path().join(format!("v{seed}.rvf"));
        let out = dir.path().join(format!("c{seed}.rvf"));
        random_video(&input, 100 + seed);
        let o = rova(&["corrupt", "--input", s(&input), "--output", s(&out), "--style-weights", "1,0,0,0"], &[]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let spec = PerturbationSpec::from_json(&std::fs::read_to_string(format!("{}.spec.json", out.display())).unwrap())
            .unwrap();
        assert_eq!(spec.style.family(), Family::Weather);
    }
}

#[test]
fn missing_input_exits_2_with_path() {
    let o = rova(&["corrupt", "--input", "/nonexistent/clip.rvf", "--output", "/tmp/x.rvf"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/clip.rvf"));
}

fn train(dir: &Path, extra: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut args = vec!["train-toy", "--steps", "30", "--out-dir", s(dir)];
    args.extend_from_slice(extra);
    rova(&args, envs)
}

#[test]
fn train_toy_is_deterministic_and_jsonl_valid() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(train(a.path(), &[], &[]).status.success());
    assert!(train(b.path(), &[], &[]).status.success());
    let ma = std::fs::read(a.path().join("metrics.jsonl")).unwrap();
    assert_eq!(ma, std::fs::read(b.path().join("metrics.jsonl")).unwrap());
    assert_eq!(
        std::fs::read(a.path().join("summary.json")).unwrap(),
        std::fs::read(b.path().join("summary.json")).unwrap()
    );
    let records = read_metrics(&a.path().join("metrics.jsonl")).unwrap();
    let train_steps: Vec<u64> = records.iter().filter(|r| r.kind == "train").map(|r| r.step).collect();
    assert_eq!(train_steps, (1..=30).collect::<Vec<_>>());
    assert!(records.iter().any(|r| r.kind == "eval"));
}

#[test]
fn tau_one_has_no_easy_discards() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train(dir.path(), &["--tau", "1.0"], &[]).status.success());
    for r in read_metrics(&dir.path().join("metrics.jsonl")).unwrap() {
        if r.kind == "train" {
            assert_eq!(r.values["discarded"], 0.0);
            let expected = (r.values["arrivals"] - r.values["deferred"]) / r.values["arrivals"];
            assert_eq!(r.values["rho"], expected);
        }
    }
}

#[test]
fn env_override_reaches_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = rova(&["train-toy", "--out-dir", s(dir.path())], &[("ROVA_GRPO_STEPS", "3")]);
    assert!(o.status.success());
    let n = read_metrics(&dir.path().join("metrics.jsonl")).unwrap().iter().filter(|r| r.kind == "train").count();
    assert_eq!(n, 3);
}

fn read_request(stream: &mut TcpStream) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.trim().eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body).unwrap();
}

/// Answers `good` requests with a verdict valid for every judge kind, then
/// rejects everything with HTTP 400.
fn flaky_judge(good: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let content = r#"{"score": 1.0, "answer": "YES", "confidence": 0.5}"#;
    let ok = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string();
    thread::spawn(move || {
        for (i, stream) in listener.incoming().enumerate() {
            let Ok(mut stream) = stream else { break };
            read_request(&mut stream);
            let (status, body) = if i < good { (200, ok.as_str()) } else { (400, "{\"error\": \"bad\"}") };
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    format!("http://{addr}/v1")
}

#[test]
fn judge_failure_aborts_and_keeps_partial_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let url = flaky_judge(300);
    let envs = [
        ("ROVA_JUDGE_BACKEND", "remote"),
        ("ROVA_JUDGE_BASE_URL", url.as_str()),
        ("ROVA_JUDGE_MAX_RETRIES", "0"),
        ("ROVA_JUDGE_MAX_IN_FLIGHT", "1"),
    ];
    let o = train(dir.path(), &[], &envs);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let records = read_metrics(&dir.path().join("metrics.jsonl")).unwrap();
    let steps = records.iter().filter(|r| r.kind == "train").count();
    assert!(steps >= 1 && steps < 30, "{steps} train records");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "error");
    assert_eq!(summary["mode"], "judge");
}

#[test]
fn malformed_stream_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("s.csv");
    std::fs::write(&stream, "step,label,confidence\n1,easy,0.9\n2,bogus,0.5\n").unwrap();
    let o = rova(&["curriculum-sim", "--stream", s(&stream), "--out-dir", s(dir.path())], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn all_easy_stream_keeps_buffer_empty() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("s.csv");
    let text: String = (1..=100).map(|i| format!("{i},easy,0.95\n")).collect();
    std::fs::write(&stream, text).unwrap();
    let o = rova(&["curriculum-sim", "--stream", s(&stream), "--out-dir", s(dir.path())], &[]);
    assert!(o.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["max_buffer_len"], 0);
    assert_eq!(summary["rho_bar"], 0.0);
    assert!(dir.path().join("windows.csv").exists() && dir.path().join("rho.csv").exists());
}

#[test]
fn cost_command_contract() {
    let o = rova(&["cost", "--check-reference"], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout).matches("PASS").count(), 3);
    let o = rova(&["cost", "--rho", "1.3"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = rova(&["cost", "--json"], &[]);
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = doc["sweep"].as_array().unwrap();
    assert_eq!(rows.len(), 11);
    let crossing = rows.windows(2).find(|w| w[0]["ratio"].as_f64().unwrap() < 1.0 && w[1]["ratio"].as_f64().unwrap() >= 1.0);
    assert!(crossing.is_some());
}

#[test]
fn show_config_round_trips() {
    let o = rova(&["show-config"], &[]);
    assert!(o.status.success());
    let cfg = RunConfig::from_toml(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg, RunConfig::default());
}

#[test]
fn unknown_config_key_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "[grpo]\nlearning_rat = 0.1\n").unwrap();
    let o = rova(&["--config", s(&path), "cost"], &[]);
    assert_eq!(o.status.code(), Some(2));
}
