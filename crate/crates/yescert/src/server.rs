//! HTTP monitor for a live session.
//!
//! The training loop runs on its own thread and is the only writer. Handlers
//! read a snapshot of completed records, push commands into the control
//! queue, or subscribe to the event stream. The stream is a bounded
//! broadcast: a client that falls behind is disconnected rather than
//! slowing training down, and can backfill through `/records`.
//!
//! Endpoints:
//! - `GET /healthz`
//! - `GET /session`: effective config, status, last epoch, stream clients
//! - `GET /records?from=E`: JSON array of records with `epoch >= E`
//! - `GET /stream`: `data: <record json>` events for new epochs only, then a
//!   final `event: stopped` carrying the end marker
//! - `POST /control`: a `ControlCommand`; answers with the epoch it applies at

use std::convert::Infallible;
use std::net::{SocketAddr, TcpListener};
use std::sync::{Arc, RwLock};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::{broadcast, watch};
use yescert_core::{ControlAction, ControlCommand, EpochRecord, StopReason};

use crate::config::SessionConfig;
use crate::control::{Controller, SubmitError};
use crate::error::{Result, RunError};
use crate::runlog::{to_json, RunEnd};
use crate::session::{RecordSink, RunSummary, Session};

const STREAM_CAPACITY: usize = 1024;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    /// Delay between the end of the run and closing the listener, so that
    /// clients can read the final state.
    pub shutdown_grace: Duration,
    /// Treat Ctrl-C as an operator Stop.
    pub handle_signals: bool,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self { shutdown_grace: Duration::from_millis(250), handle_signals: false }
    }
}

#[derive(Debug, Clone)]
enum Push {
    Record(Arc<str>),
    End { event: &'static str, data: Arc<str> },
}

struct Shared {
    config: SessionConfig,
    controller: Controller,
    records: RwLock<Vec<EpochRecord>>,
    last: RwLock<Option<Push>>,
    end: RwLock<Option<RunEnd>>,
    tx: broadcast::Sender<Push>,
    stop: watch::Sender<bool>,
    done: watch::Sender<bool>,
}

impl Shared {
    fn end_with(&self, push: Push) {
        *self.last.write().unwrap_or_else(|p| p.into_inner()) = Some(push.clone());
        let _ = self.tx.send(push);
    }
}

struct ServerSink(Arc<Shared>);

impl RecordSink for ServerSink {
    fn record(&mut self, record: &EpochRecord) -> Result<()> {
        let json: Arc<str> = to_json(record).into();
        self.0.records.write().unwrap_or_else(|p| p.into_inner()).push(record.clone());
        let _ = self.0.tx.send(Push::Record(json));
        Ok(())
    }

    fn finish(&mut self, end: &RunEnd) -> Result<()> {
        *self.0.end.write().unwrap_or_else(|p| p.into_inner()) = Some(*end);
        self.0.end_with(Push::End { event: "stopped", data: to_json(end).into() });
        Ok(())
    }
}

/// Binds the listening socket up front so a busy port is reported before
/// any training starts.
pub fn bind(host: &str, port: u16) -> Result<TcpListener> {
    let addr = format!("{host}:{port}");
    TcpListener::bind(&addr).map_err(|e| RunError::io(addr, e))
}

/// A running monitor: one training thread plus one server thread.
pub struct MonitorHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    trainer: JoinHandle<Result<RunSummary>>,
    server: JoinHandle<std::io::Result<()>>,
}

impl MonitorHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn controller(&self) -> Controller {
        self.shared.controller.clone()
    }

    /// Stops the run if it is still going and closes the server.
    pub fn shutdown(&self) {
        if !self.shared.controller.is_closed() {
            let _ = self.shared.controller.submit(ControlCommand::new(ControlAction::Stop));
        }
        self.shared.stop.send_replace(true);
    }

    /// Waits for both threads. Returns once the server has closed.
    pub fn join(self) -> Result<RunSummary> {
        let summary = self.trainer.join().expect("training thread panicked");
        let served = self.server.join().expect("server thread panicked");
        served.map_err(|e| RunError::io(self.addr.to_string(), e))?;
        summary
    }
}

/// Starts training `session` and serving it on `listener`. Records are also
/// handed to `log` when given. The server closes after an operator Stop, or
/// after a Stop posted to an already finished session.
pub fn spawn(
    session: Session,
    log: Option<Box<dyn RecordSink + Send>>,
    listener: TcpListener,
    opts: ServeOptions,
) -> Result<MonitorHandle> {
    let addr = listener.local_addr().map_err(|e| RunError::io("listener", e))?;
    listener.set_nonblocking(true).map_err(|e| RunError::io(addr.to_string(), e))?;
    let (tx, _) = broadcast::channel(STREAM_CAPACITY);
    let shared = Arc::new(Shared {
        config: session.config().clone(),
        controller: session.controller(),
        records: RwLock::new(Vec::new()),
        last: RwLock::new(None),
        end: RwLock::new(None),
        tx,
        stop: watch::channel(false).0,
        done: watch::channel(false).0,
    });

    let trainer = {
        let shared = shared.clone();
        thread::Builder::new()
            .name("yescert-train".into())
            .spawn(move || train(session, log, shared))
            .map_err(|e| RunError::io("training thread", e))?
    };
    let server = {
        let shared = shared.clone();
        thread::Builder::new()
            .name("yescert-http".into())
            .spawn(move || {
                let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
                rt.block_on(serve_on(listener, shared, opts))
            })
            .map_err(|e| RunError::io("server thread", e))?
    };
    Ok(MonitorHandle { addr, shared, trainer, server })
}

fn train(mut session: Session, mut log: Option<Box<dyn RecordSink + Send>>, shared: Arc<Shared>) -> Result<RunSummary> {
    let mut sink = ServerSink(shared.clone());
    let result = match log.as_deref_mut() {
        Some(log) => session.run(&mut [log, &mut sink]),
        None => session.run(&mut [&mut sink]),
    };
    if let Err(e) = &result {
        shared.controller.close();
        shared.end_with(Push::End { event: "failed", data: to_json(&json!({ "error": e.to_string() })).into() });
    }
    if session.end().is_some_and(|e| e.reason == StopReason::Operator) || result.is_err() {
        shared.stop.send_replace(true);
    }
    shared.done.send_replace(true);
    result
}

async fn serve_on(listener: TcpListener, shared: Arc<Shared>, opts: ServeOptions) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::from_std(listener)?;
    let app = Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/session", get(session_info))
        .route("/records", get(records))
        .route("/stream", get(stream))
        .route("/control", post(control))
        .with_state(shared.clone());
    let mut stop = shared.stop.subscribe();
    let mut done = shared.done.subscribe();
    let controller = shared.controller.clone();
    let shutdown = async move {
        let signal = async {
            if opts.handle_signals {
                let _ = tokio::signal::ctrl_c().await;
            } else {
                std::future::pending::<()>().await;
            }
        };
        tokio::select! {
            _ = stop.wait_for(|s| *s) => {}
            _ = signal => {
                let _ = controller.submit(ControlCommand::new(ControlAction::Stop));
            }
        }
        let _ = done.wait_for(|d| *d).await;
        tokio::time::sleep(opts.shutdown_grace).await;
    };
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}

fn status(shared: &Shared) -> &'static str {
    if shared.end.read().unwrap_or_else(|p| p.into_inner()).is_some() {
        "finished"
    } else if shared.controller.is_paused() {
        "paused"
    } else {
        "running"
    }
}

async fn session_info(State(shared): State<Arc<Shared>>) -> Response {
    let epoch = shared.records.read().unwrap_or_else(|p| p.into_inner()).last().map_or(0, |r| r.epoch);
    let end = *shared.end.read().unwrap_or_else(|p| p.into_inner());
    let body = json!({
        "config": shared.config,
        "status": status(&shared),
        "epoch": epoch,
        "paused": shared.controller.is_paused(),
        "end": end,
        "stream_clients": shared.tx.receiver_count(),
    });
    json_text(StatusCode::OK, to_json(&body))
}

#[derive(Debug, Deserialize)]
struct RecordsQuery {
    from: Option<u64>,
}

async fn records(State(shared): State<Arc<Shared>>, Query(q): Query<RecordsQuery>) -> Response {
    let from = q.from.unwrap_or(0);
    let recs = shared.records.read().unwrap_or_else(|p| p.into_inner());
    let start = recs.partition_point(|r| r.epoch < from);
    json_text(StatusCode::OK, to_json(&recs[start..]))
}

fn push_event(push: &Push) -> Event {
    match push {
        Push::Record(data) => Event::default().data(&**data),
        Push::End { event, data } => Event::default().event(*event).data(&**data),
    }
}

async fn stream(State(shared): State<Arc<Shared>>) -> Sse<impl Stream<Item = std::result::Result<Event, Infallible>>> {
    // subscribe before looking at the end marker so nothing falls in between
    let rx = shared.tx.subscribe();
    let ended = shared.last.read().unwrap_or_else(|p| p.into_inner()).clone();
    let events = futures::stream::unfold((rx, ended, false), |(mut rx, ended, done)| async move {
        if done {
            return None;
        }
        if let Some(end) = ended {
            return Some((Ok(push_event(&end)), (rx, None, true)));
        }
        match rx.recv().await {
            Ok(p @ Push::Record(_)) => Some((Ok(push_event(&p)), (rx, None, false))),
            Ok(p @ Push::End { .. }) => Some((Ok(push_event(&p)), (rx, None, true))),
            // lagging clients are dropped; they can backfill from /records
            Err(_) => None,
        }
    });
    Sse::new(events).keep_alive(KeepAlive::default())
}

fn json_text(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn bad_request(field: &str, message: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({ "error": "invalid command", "field": field, "message": message })))
        .into_response()
}

fn stopped() -> Response {
    (StatusCode::CONFLICT, Json(json!({ "error": "session has stopped" }))).into_response()
}

/// Parses a command body, naming the field at fault. The action is a
/// flattened tagged enum, which serde reports without a path, so the field
/// is worked out from the shape of the body.
fn parse_command(body: &[u8]) -> std::result::Result<ControlCommand, (String, String)> {
    let value: serde_json::Value = serde_json::from_slice(body).map_err(|e| ("(body)".to_string(), e.to_string()))?;
    let Some(obj) = value.as_object() else {
        return Err(("(body)".into(), "expected a JSON object".into()));
    };
    if !obj.get("kind").is_some_and(|k| k.is_string()) {
        return Err(("kind".into(), "missing or non-string `kind`".into()));
    }
    serde_json::from_value(value.clone()).map_err(|e| {
        let msg = e.to_string();
        let field = if msg.contains("variant") {
            "kind"
        } else if obj.get("issued_at_ms").is_some_and(|v| !v.is_u64() && !v.is_null()) {
            "issued_at_ms"
        } else {
            "value"
        };
        (field.to_string(), msg)
    })
}

async fn control(State(shared): State<Arc<Shared>>, body: Bytes) -> Response {
    let command = match parse_command(&body) {
        Ok(c) => c,
        Err((field, message)) => return bad_request(&field, message),
    };
    if shared.controller.is_closed() {
        let finished = shared.end.read().unwrap_or_else(|p| p.into_inner()).is_some();
        if finished && command.action == ControlAction::Stop {
            shared.stop.send_replace(true);
            return (StatusCode::OK, Json(json!({ "shutdown": true }))).into_response();
        }
        return stopped();
    }
    match shared.controller.submit(command) {
        Ok(ack) => (StatusCode::OK, Json(ack)).into_response(),
        Err(SubmitError::Invalid(msg)) => {
            let msg = msg.strip_prefix("config error: ").unwrap_or(&msg).to_string();
            bad_request("value", msg)
        }
        Err(SubmitError::Stopped) => stopped(),
    }
}
