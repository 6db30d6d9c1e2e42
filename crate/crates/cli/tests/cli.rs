//! Command-line behavior of the `coachlab` binary.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use coachlab_core::session::jsonl::{write_sessions, SessionFilter};
use coachlab_core::synth::{synth_corpus, SynthSpec};
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_coachlab"));
    c.env_remove("COACHLAB_API_KEY").env_remove("OPENAI_API_KEY").env("RUST_LOG", "warn");
    c
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn analyze(extra: &[&str]) -> (Value, String) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let status = bin()
        .args(["analyze", "--offline-stub", "--logs"])
        .arg(fixtures().join("corpus"))
        .arg("--out")
        .arg(&out)
        .args(extra)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    (serde_json::from_str(&text).unwrap(), text)
}

#[test]
fn bundled_corpus_matches_generator() {
    let mut expected = Vec::new();
    write_sessions(&synth_corpus(&SynthSpec::default()), &SessionFilter::default(), &mut expected).unwrap();
    let bundled = std::fs::read(fixtures().join("corpus/sessions.jsonl")).unwrap();
    assert!(bundled == expected, "fixture is stale; regenerate with `coachlab synth --out`");
}

#[test]
fn analyze_is_deterministic() {
    let (report, first) = analyze(&[]);
    let (_, second) = analyze(&[]);
    assert_eq!(first, second);
    assert_eq!(report["participants"]["input"], 105);
    assert_eq!(report["participants"]["retained"], 101);
}

#[test]
fn flags_reach_the_report() {
    let (r, _) = analyze(&["--include-quarter-1", "--no-continuity-correction", "--embed-source", "title", "--per-quarter"]);
    let p = &r["provenance"];
    assert_eq!(p["include_quarter_1"], true);
    assert_eq!(p["continuity_correction"], false);
    assert_eq!(p["embed_source"], "title");
    assert!(r["sections"]["engagement"]["questions"]["per_quarter"].is_object());
}

#[test]
fn injected_summaries_are_evaluated() {
    let (r, _) = analyze(&["--inject-summaries", fixtures().join("reference_summaries.json").to_str().unwrap()]);
    let inj = &r["injected"];
    let g = inj["forced_choice_welch"]["result"]["effect_size"].as_f64().unwrap();
    assert!((g + 0.88).abs() < 0.01);
    let chi = inj["ending_persona_conscientiousness"]["result"]["statistic"].as_f64().unwrap();
    assert!((chi - 6.533).abs() < 0.001);
    let t = inj["forced_choice_control_vs_midpoint"]["result"]["statistic"].as_f64().unwrap();
    assert!((t - 3.55).abs() < 0.05);
}

#[test]
fn empty_logs_give_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let status = bin().args(["analyze", "--offline-stub", "--logs"]).arg(dir.path()).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(r["participants"]["retained"], 0);
}

#[test]
fn schema_errors_name_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.jsonl"), "\n{\"session_id\": 1}\n").unwrap();
    let out = bin()
        .args(["analyze", "--offline-stub", "--logs"])
        .arg(dir.path())
        .arg("--out")
        .arg(dir.path().join("r.json"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.jsonl:2"), "{err}");
}

#[test]
fn serve_without_credentials_names_the_field() {
    let out = bin().arg("serve").output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("provider.api_key"));
}

fn http(port: u16, method: &str, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    s.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    write!(s, "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Length: 0\r\nConnection: close\r\n\r\n").ok()?;
    let mut buf = String::new();
    s.read_to_string(&mut buf).ok()?;
    Some(buf)
}

#[cfg(unix)]
#[test]
fn serve_answers_health_and_stops_on_sigterm() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let data = tempfile::tempdir().unwrap();
    let mut child = bin()
        .args(["serve", "--offline-stub"])
        .env("COACHLAB_PORT", port.to_string())
        .env("COACHLAB_DATA_DIR", data.path())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let started = Instant::now();
    let health = loop {
        if let Some(r) = http(port, "GET", "/healthz") {
            break r;
        }
        assert!(started.elapsed() < Duration::from_secs(20), "server did not come up");
        std::thread::sleep(Duration::from_millis(50));
    };
    assert!(health.starts_with("HTTP/1.1 200"));
    assert!(health.contains("\"ok\""));
    let created = http(port, "POST", "/sessions").unwrap();
    assert!(created.starts_with("HTTP/1.1 201"));

    let status = Command::new("kill").args(["-TERM", &child.id().to_string()]).status().unwrap();
    assert!(status.success());
    let exit = child.wait().unwrap();
    assert!(exit.success());

    let logs: Vec<_> = std::fs::read_dir(data.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(logs.len(), 1);
    let text = std::fs::read_to_string(&logs[0]).unwrap();
    assert!(text.ends_with('\n'));
    for line in text.lines() {
        serde_json::from_str::<Value>(line).unwrap();
    }
}
