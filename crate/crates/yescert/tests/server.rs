use std::io::{BufRead, BufReader};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::Value;
use ureq::Agent;
use yescert::{bind, read_run_log, spawn, RecordSink, RunLogWriter, ServeOptions, Session, SessionConfig};
use yescert_core::{ControlAction, ControlCommand, EpochRecord};

fn agent() -> Agent {
    Agent::config_builder().http_status_as_error(false).build().into()
}

fn get(base: &str, path: &str) -> (u16, String) {
    let mut resp = agent().get(format!("{base}{path}")).call().unwrap();
    (resp.status().as_u16(), resp.body_mut().read_to_string().unwrap())
}

fn get_json(base: &str, path: &str) -> Value {
    let (status, body) = get(base, path);
    assert_eq!(status, 200, "{path}: {body}");
    serde_json::from_str(&body).unwrap()
}

fn post(base: &str, body: &str) -> (u16, Value) {
    let mut resp =
        agent().post(format!("{base}/control")).header("content-type", "application/json").send(body).unwrap();
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
}

fn wait_for(what: &str, mut cond: impl FnMut() -> bool) {
    let start = Instant::now();
    while !cond() {
        assert!(start.elapsed() < Duration::from_secs(60), "timed out waiting for {what}");
        thread::sleep(Duration::from_millis(5));
    }
}

fn config(dir: &std::path::Path, epochs: u64) -> SessionConfig {
    let text = format!(
        r#"{{"task": {{"kind": "phase_retrieval", "n": 20, "d": 1000, "seed": 2}},
            "network": {{"layers": [20, 20, 20, 20]}}, "batch_size": 20, "max_epochs": {epochs},
            "output": {{"dir": {:?}}}}}"#,
        dir.to_str().unwrap()
    );
    SessionConfig::from_json(&text).unwrap()
}

struct Live {
    handle: yescert::MonitorHandle,
    base: String,
    dir: tempfile::TempDir,
}

fn start(epochs: u64, paused: bool, grace: Duration) -> Live {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), epochs);
    let writer =
        RunLogWriter::create(&cfg.output.jsonl_path().unwrap(), &cfg.output.csv_path().unwrap(), &cfg).unwrap();
    let session = Session::new(cfg).unwrap();
    if paused {
        session.controller().submit(ControlCommand::new(ControlAction::Pause)).unwrap();
    }
    let listener = bind("127.0.0.1", 0).unwrap();
    let log: Box<dyn RecordSink + Send> = Box::new(writer);
    let handle =
        spawn(session, Some(log), listener, ServeOptions { shutdown_grace: grace, handle_signals: false }).unwrap();
    let base = format!("http://{}", handle.local_addr());
    Live { handle, base, dir }
}

/// Reads the event stream until the final event; returns the record payloads
/// and the final event's name and payload.
fn read_stream(base: String) -> thread::JoinHandle<(Vec<EpochRecord>, String, Value)> {
    thread::spawn(move || {
        let resp = agent().get(format!("{base}/stream")).call().unwrap();
        assert_eq!(resp.status().as_u16(), 200);
        let reader = BufReader::new(resp.into_body().into_reader());
        let mut records = Vec::new();
        let mut event = None;
        for line in reader.lines() {
            let line = line.unwrap();
            if let Some(name) = line.strip_prefix("event: ") {
                event = Some(name.to_string());
            } else if let Some(data) = line.strip_prefix("data: ") {
                match event.take() {
                    Some(name) => return (records, name, serde_json::from_str(data).unwrap()),
                    None => records.push(serde_json::from_str(data).unwrap()),
                }
            }
        }
        panic!("stream closed without a final event");
    })
}

#[test]
fn live_session_control_round_trip() {
    let live = start(1_000_000, true, Duration::from_secs(3));
    let base = live.base.clone();

    assert_eq!(get(&base, "/healthz"), (200, "ok".to_string()));
    assert_eq!(get(&base, "/records?from=0"), (200, "[]".to_string()));
    let info = get_json(&base, "/session");
    assert_eq!(info["status"], "paused");
    assert_eq!(info["epoch"], 0);
    assert_eq!(info["config"]["batch_size"], 20);

    let stream = read_stream(base.clone());
    wait_for("stream subscription", || get_json(&base, "/session")["stream_clients"] == 1);

    let (status, ack) = post(&base, r#"{"kind": "resume"}"#);
    assert_eq!(status, 200, "{ack}");
    wait_for("three epochs", || !get_json(&base, "/records?from=3").as_array().unwrap().is_empty());

    assert_eq!(post(&base, r#"{"kind": "pause"}"#).0, 200);
    wait_for("pause", || get_json(&base, "/session")["paused"] == true);
    let e = get_json(&base, "/session")["epoch"].as_u64().unwrap();
    assert!(e >= 3);
    let (status, ack) = post(&base, r#"{"kind": "set_learning_rate", "value": 5e-4}"#);
    assert_eq!(status, 200);
    assert_eq!(ack["ack_epoch"], e);
    assert_eq!(ack["applies_at_epoch"], e + 1);

    // malformed commands are rejected with the offending field
    let (status, err) = post(&base, r#"{"kind": "set_learning_rate", "value": -1}"#);
    assert_eq!(status, 400);
    assert_eq!(err["field"], "value");
    let (status, err) = post(&base, r#"{"kind": "set_learning_rate", "value": "fast"}"#);
    assert_eq!(status, 400, "{err}");
    assert_eq!(err["field"], "value", "{err}");
    let (status, err) = post(&base, r#"{"value": 1e-3}"#);
    assert_eq!((status, err["field"].as_str()), (400, Some("kind")));
    let (status, err) = post(&base, r#"{"kind": "warp"}"#);
    assert_eq!(status, 400);
    assert!(err["message"].as_str().unwrap().contains("warp"), "{err}");
    assert_eq!(post(&base, "{").0, 400);

    assert_eq!(post(&base, r#"{"kind": "resume"}"#).0, 200);
    let path = format!("/records?from={}", e + 1);
    wait_for("the next epoch", || !get_json(&base, &path).as_array().unwrap().is_empty());
    let next = &get_json(&base, &path)[0];
    assert_eq!(next["epoch"], e + 1);
    assert_eq!(next["lr"].as_f64(), Some(5e-4));
    let prev = &get_json(&base, &format!("/records?from={e}"))[0];
    assert_ne!(prev["lr"].as_f64(), Some(5e-4));

    assert_eq!(post(&base, r#"{"kind": "stop"}"#).0, 200);
    let (streamed, event, end) = stream.join().unwrap();
    assert_eq!(event, "stopped");
    assert_eq!(end["reason"], "operator");
    let epochs: Vec<u64> = streamed.iter().map(|r| r.epoch).collect();
    assert_eq!(epochs, (1..=epochs.len() as u64).collect::<Vec<_>>());
    assert_eq!(end["last_epoch"], epochs.len() as u64);

    // the served history equals the on-disk log
    let served: Vec<EpochRecord> = serde_json::from_str(&get(&base, "/records?from=0").1).unwrap();
    let disk = read_run_log(&live.dir.path().join("run.jsonl")).unwrap();
    assert_eq!(served, disk.records);
    assert_eq!(served, streamed);
    assert_eq!(disk.end.unwrap().last_epoch, epochs.len() as u64);

    assert_eq!(get_json(&base, "/session")["status"], "finished");
    let (status, _) = post(&base, r#"{"kind": "set_learning_rate", "value": 1e-3}"#);
    assert_eq!(status, 409);

    let summary = live.handle.join().unwrap();
    assert_eq!(summary.epochs, epochs.len() as u64);
    assert!(agent().get(format!("{base}/healthz")).call().is_err());
}

#[test]
fn finished_session_serves_until_stop() {
    let live = start(3, false, Duration::from_millis(50));
    let base = live.base.clone();
    wait_for("the run to finish", || get_json(&base, "/session")["status"] == "finished");
    assert_eq!(get_json(&base, "/records?from=2").as_array().unwrap().len(), 2);

    // a late subscriber gets no history, only the end marker
    let (records, event, end) = read_stream(base.clone()).join().unwrap();
    assert!(records.is_empty());
    assert_eq!(event, "stopped");
    assert_eq!(end["reason"], "max_epochs");

    assert_eq!(post(&base, r#"{"kind": "resume"}"#).0, 409);
    let (status, body) = post(&base, r#"{"kind": "stop"}"#);
    assert_eq!(status, 200);
    assert_eq!(body["shutdown"], true);
    live.handle.join().unwrap();
}

#[test]
fn busy_port_is_an_io_error() {
    let first = bind("127.0.0.1", 0).unwrap();
    let port = first.local_addr().unwrap().port();
    let err = bind("127.0.0.1", port).unwrap_err();
    assert_eq!(err.exit_code(), yescert::exit::IO);
}
