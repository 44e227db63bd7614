use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;

fn unwind(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unwind"))
        .args(args)
        .arg("--log-level")
        .arg("warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = unwind(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = unwind(args);
    assert_eq!(out.status.code(), Some(2), "{args:?} should exit 2");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn simulate_small(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--out", s(dir), "--width", "64", "--height", "32", "--fps", "2"];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate_small(&data, &["--pure-rotation", "--duration", "20", "--seed", "3"]);
    let m = json(&data.join("manifest.json"));
    assert_eq!(m["frames"].as_array().unwrap().len(), 41);
    for key in ["width", "height", "fps", "t0", "frames", "imu", "orientations", "ground_truth", "convention"] {
        assert!(m.get(key).is_some(), "manifest lacks {key}");
    }

    ok(&["filter", s(&data)]);
    let m = json(&data.join("manifest.json"));
    assert_eq!(m["orientations"], "orientations.jsonl");

    let unwound = tmp.path().join("unwound");
    ok(&["unwind", s(&data), "--out", s(&unwound)]);
    assert_eq!(json(&unwound.join("manifest.json"))["frames"].as_array().unwrap().len(), 41);
    assert!(unwound.join("frames/frame_000040.png").is_file());

    let views = tmp.path().join("views");
    ok(&["view", s(&data), "--mode", "ur", "--width", "32", "--height", "24", "--yaw", "-30", "--out", s(&views)]);
    assert!(views.join("view_000040.png").is_file());

    let report = tmp.path().join("drift.json");
    ok(&[
        "drift",
        s(&data.join("orientations.jsonl")),
        s(&data.join("ground_truth.jsonl")),
        "--out",
        s(&report),
    ]);
    let r = json(&report);
    for key in ["mean", "max", "final", "series"] {
        assert!(r.get(key).is_some());
    }
    assert!(r["mean"].as_f64().unwrap() < 0.2);
}

#[test]
fn static_dataset_round_trips_through_the_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let stdout = ok(&[
        "simulate", "--out", s(&data), "--static", "--no-noise", "--duration", "10", "--width", "64", "--height", "32",
        "--fps", "2",
    ]);
    assert!(stdout.contains("21 frames"), "{stdout}");
    simulate_small(&tmp.path().join("again"), &["--static", "--duration", "10"]);

    ok(&["filter", s(&data)]);
    let trace = std::fs::read_to_string(data.join("orientations.jsonl")).unwrap();
    for line in trace.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!((v["w"].as_f64().unwrap() - 1.0).abs() < 1e-9, "{line}");
    }

    let unwound = tmp.path().join("unwound");
    ok(&["unwind", s(&data), "--out", s(&unwound)]);
    for k in [0, 7, 20] {
        let name = format!("frames/frame_{k:06}.png");
        assert_eq!(std::fs::read(data.join(&name)).unwrap(), std::fs::read(unwound.join(&name)).unwrap());
    }
}

#[test]
fn failures_exit_with_status_two() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate_small(&data, &["--static", "--duration", "4", "--no-noise"]);

    // output directory already populated
    fails(&["simulate", "--out", s(&data), "--static"]);
    // output below a regular file
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    fails(&["simulate", "--out", s(&blocker.join("sub")), "--static"]);
    // invalid config
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"fps": "fast"}"#).unwrap();
    fails(&["simulate", "--out", s(&tmp.path().join("x")), "--config", s(&bad)]);
    std::fs::write(&bad, r#"{"kp": -2}"#).unwrap();
    fails(&["filter", s(&data), "--config", s(&bad)]);
    // unknown subcommand / flag
    fails(&["explode"]);
    fails(&["filter", s(&data), "--bogus"]);

    // no orientation trace yet
    let err = fails(&["unwind", s(&data), "--out", s(&tmp.path().join("u0"))]);
    assert!(err.contains("orientation"), "{err}");

    // orientation trace ending early
    let short = tmp.path().join("short.jsonl");
    let lines: String = (0..=10)
        .map(|i| format!("{{\"t\":{},\"w\":1,\"x\":0,\"y\":0,\"z\":0}}\n", i as f64 * 0.1))
        .collect();
    std::fs::write(&short, lines).unwrap();
    let err = fails(&["unwind", s(&data), "--orientations", s(&short), "--out", s(&tmp.path().join("u1"))]);
    assert!(err.contains("frame 3"), "{err}");
    assert!(!tmp.path().join("u1").exists());

    // missing IMU file
    std::fs::remove_file(data.join("imu.csv")).unwrap();
    let err = fails(&["filter", s(&data)]);
    assert!(err.contains("imu.csv"), "{err}");
}

#[test]
fn drift_of_constructed_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let write = |name: &str, yaw: f64| {
        let (h, c) = ((yaw / 2.0).sin(), (yaw / 2.0).cos());
        let lines: String = (0..50)
            .map(|i| format!("{{\"t\":{},\"w\":{c},\"x\":0,\"y\":0,\"z\":{h}}}\n", i as f64 * 0.1))
            .collect();
        let p = tmp.path().join(name);
        std::fs::write(&p, lines).unwrap();
        p
    };
    let truth = write("truth.jsonl", 0.0);
    let same = write("same.jsonl", 0.0);
    let off = write("off.jsonl", 0.14);
    let r: Value = serde_json::from_str(&ok(&["drift", s(&same), s(&truth)])).unwrap();
    assert_eq!(r["mean"], 0.0);
    let r: Value = serde_json::from_str(&ok(&["drift", s(&off), s(&truth)])).unwrap();
    assert!((r["mean"].as_f64().unwrap() - 0.14).abs() < 1e-12);
    assert!((r["final"].as_f64().unwrap() - 0.14).abs() < 1e-12);
}

struct Served(Child);

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve(dir: &Path, port: u16) -> (Served, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_unwind"))
        .args(["serve", s(dir), "--port", &port.to_string(), "--log-level", "warn"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line
        .trim()
        .rsplit("http://")
        .next()
        .unwrap()
        .trim_end_matches('/')
        .to_string();
    (Served(child), addr)
}

struct Reply {
    status: u16,
    headers: Vec<(String, String)>,
    body: Vec<u8>,
}

impl Reply {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

fn request(addr: &str, method: &str, path: &str) -> Reply {
    let mut stream = TcpStream::connect(addr).unwrap();
    write!(stream, "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).unwrap();
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").expect("header end");
    let head = String::from_utf8_lossy(&raw[..split]).to_string();
    let mut lines = head.lines();
    let status = lines.next().unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
    let headers = lines
        .filter_map(|l| l.split_once(':'))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect();
    Reply {
        status,
        headers,
        body: raw[split + 4..].to_vec(),
    }
}

#[test]
fn serve_exposes_the_dataset_read_only() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate_small(&data, &["--static", "--duration", "2"]);
    ok(&["filter", s(&data)]);
    std::fs::write(tmp.path().join("secret.txt"), "no").unwrap();
    let (_server, addr) = serve(&data, 0);

    let r = request(&addr, "GET", "/manifest.json");
    assert_eq!(r.status, 200);
    assert_eq!(r.body, std::fs::read(data.join("manifest.json")).unwrap());
    assert_eq!(r.header("Content-Type"), Some("application/json"));
    assert_eq!(r.header("Access-Control-Allow-Origin"), Some("*"));

    let r = request(&addr, "GET", "/frames/frame_000000.png");
    assert_eq!(r.status, 200);
    assert_eq!(r.header("Content-Type"), Some("image/png"));
    assert_eq!(r.body, std::fs::read(data.join("frames/frame_000000.png")).unwrap());

    let r = request(&addr, "GET", "/orientations.jsonl");
    assert_eq!(r.header("Content-Type"), Some("application/x-ndjson"));
    assert_eq!(r.body, std::fs::read(data.join("orientations.jsonl")).unwrap());
    let r = request(&addr, "GET", "/imu.csv");
    assert!(r.header("Content-Type").unwrap().starts_with("text/csv"));

    assert_eq!(request(&addr, "GET", "/nope.png").status, 404);
    assert_eq!(request(&addr, "GET", "/../secret.txt").status, 404);
    assert_eq!(request(&addr, "GET", "/frames/%2e%2e/%2e%2e/secret.txt").status, 404);
    let r = request(&addr, "POST", "/manifest.json");
    assert_eq!(r.status, 405);
    assert_eq!(r.header("Access-Control-Allow-Origin"), Some("*"));
    assert_eq!(request(&addr, "DELETE", "/manifest.json").status, 405);
    assert!(data.join("manifest.json").is_file());
}

#[test]
fn serve_reports_a_busy_port() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate_small(&data, &["--static", "--duration", "1"]);
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let err = fails(&["serve", s(&data), "--port", &port]);
    assert!(err.contains("cannot listen"), "{err}");
}
