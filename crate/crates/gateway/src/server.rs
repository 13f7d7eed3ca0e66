//! Live service: one control-loop task owns the pipeline; socket tasks talk to
//! it only through channels.
//!
//! Each client gets a bounded lossless queue for events, acks and errors (a
//! full queue disconnects that client) and a latest-value slot for
//! `robot_state`, so a slow reader only ever misses state frames.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message as WsFrame, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use glovelink::gesture::MlpModel;
use glovelink::handmodel::GestureLabel;
use glovelink::sessionio::{trace_to_string, Trace, TraceHeader};
use serde::Serialize;
use tokio::sync::{mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tokio::time::MissedTickBehavior;

use crate::config::SessionConfig;
use crate::pipeline::{GestureSource, Pipeline};
use crate::protocol::{codes, decode_hand, Message, Role, WireError};
use crate::trial::report_trace;

/// Per-client bound on queued events, acks and errors.
pub const EVENT_QUEUE: usize = 10_000;
/// Latency samples kept for `/stats`.
const LATENCY_WINDOW: usize = 100_000;

type ClientId = u64;

enum Cmd {
    Connect { id: ClientId, tx: mpsc::Sender<String> },
    Disconnect { id: ClientId },
    Frame { id: ClientId, msg: Message, received: Instant },
    RecordStart { reply: oneshot::Sender<()> },
    RecordStop { reply: oneshot::Sender<Trace<f64>> },
    LastTrace { reply: oneshot::Sender<Option<Trace<f64>>> },
    Stats { reply: oneshot::Sender<Stats> },
}

/// Hand receipt to goal submission, milliseconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, serde::Deserialize)]
pub struct Stats {
    pub hand_inputs: usize,
    pub latency_mean_ms: f64,
    pub latency_p99_ms: f64,
    pub latency_max_ms: f64,
    pub clients: usize,
    pub operator: bool,
    pub recording: bool,
    pub dropped_clients: usize,
}

struct ControlLoop {
    pipeline: Pipeline,
    start: Instant,
    clients: HashMap<ClientId, mpsc::Sender<String>>,
    operator: Option<ClientId>,
    gesture_override: Option<GestureLabel>,
    latencies: Vec<f64>,
    latency_next: usize,
    hand_inputs: usize,
    dropped: usize,
    last_trace: Option<Trace<f64>>,
    state_tx: watch::Sender<Arc<str>>,
}

impl ControlLoop {
    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn drop_client(&mut self, id: ClientId) {
        if self.clients.remove(&id).is_some() {
            self.dropped += 1;
        }
        if self.operator == Some(id) {
            self.operator = None;
            self.gesture_override = None;
        }
    }

    fn send(&mut self, id: ClientId, msg: &Message) {
        let Some(tx) = self.clients.get(&id) else { return };
        if tx.try_send(msg.to_json()).is_err() {
            tracing::warn!(client = id, "event queue full or closed; disconnecting");
            self.drop_client(id);
        }
    }

    fn broadcast(&mut self, msg: &Message) {
        let text = msg.to_json();
        let stale: Vec<ClientId> =
            self.clients.iter().filter(|(_, tx)| tx.try_send(text.clone()).is_err()).map(|(id, _)| *id).collect();
        for id in stale {
            tracing::warn!(client = id, "event queue full or closed; disconnecting");
            self.drop_client(id);
        }
    }

    fn error(&mut self, id: ClientId, code: &'static str, message: impl Into<String>) {
        self.send(id, &WireError::new(code, message).to_message());
    }

    fn advance(&mut self) {
        let t = self.now();
        if let Err(e) = self.pipeline.advance_to(t) {
            tracing::error!("simulator: {e:#}");
        }
    }

    fn robot_state(&self) -> Message {
        let sim = self.pipeline.sim();
        let tele = self.pipeline.teleop();
        Message::RobotState {
            t: sim.time,
            pos: sim.tip.position.to_array(),
            quat: sim.tip.orientation.to_array(),
            jaw: sim.jaw,
            clutch: tele.clutch,
            tracking: tele.tracking,
            haptic: tele.haptic_on,
            energy: tele.energy_on,
            at_goal: sim.at_goal,
            gesture: self.pipeline.gesture(),
        }
    }

    fn publish_state(&mut self) {
        self.advance();
        let text: Arc<str> = self.robot_state().to_json().into();
        self.state_tx.send_replace(text);
    }

    fn ack(&self, of: &str, role: Option<Role>, with_config: bool) -> Message {
        Message::Ack { of: of.to_string(), role, config: with_config.then(|| self.pipeline.config().to_value()) }
    }

    fn record_latency(&mut self, ms: f64) {
        if self.latencies.len() < LATENCY_WINDOW {
            self.latencies.push(ms);
        } else {
            self.latencies[self.latency_next] = ms;
            self.latency_next = (self.latency_next + 1) % LATENCY_WINDOW;
        }
    }

    fn stats(&self) -> Stats {
        let mut v = self.latencies.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Stats {
            hand_inputs: self.hand_inputs,
            latency_mean_ms: if n == 0 { 0.0 } else { v.iter().sum::<f64>() / n as f64 },
            latency_p99_ms: if n == 0 { 0.0 } else { v[((n as f64 * 0.99).ceil() as usize).clamp(1, n) - 1] },
            latency_max_ms: v.last().copied().unwrap_or(0.0),
            clients: self.clients.len(),
            operator: self.operator.is_some(),
            recording: self.pipeline.is_recording(),
            dropped_clients: self.dropped,
        }
    }

    fn take_trace(&mut self) -> Trace<f64> {
        let records = self.pipeline.stop_recording().unwrap_or_default();
        let trace = Trace { header: TraceHeader::new(self.pipeline.config().to_value()), records };
        self.last_trace = Some(trace.clone());
        trace
    }

    fn frame(&mut self, id: ClientId, msg: Message, received: Instant) {
        let is_operator = self.operator == Some(id);
        match msg {
            Message::Hello { role: Role::Operator } => {
                if self.operator.is_none() || is_operator {
                    self.operator = Some(id);
                    let ack = self.ack("hello", Some(Role::Operator), true);
                    self.send(id, &ack);
                } else {
                    self.error(id, codes::OPERATOR_TAKEN, "another client holds the operator role");
                    let ack = self.ack("hello", Some(Role::Observer), true);
                    self.send(id, &ack);
                }
            }
            Message::Hello { role: Role::Observer } => {
                if is_operator {
                    self.operator = None;
                    self.gesture_override = None;
                }
                let ack = self.ack("hello", Some(Role::Observer), true);
                self.send(id, &ack);
            }
            Message::HandInput { t, pos, quat, finger_dist, landmarks } => {
                if !is_operator {
                    return self.error(id, codes::NOT_OPERATOR, "hand_input requires the operator role");
                }
                let hand = match decode_hand(t, pos, quat, finger_dist, landmarks) {
                    Ok(h) => h,
                    Err(e) => return self.send(id, &e.to_message()),
                };
                self.advance();
                let now = self.now().max(self.pipeline.sim().time);
                let source = self.gesture_override.map_or(GestureSource::Classify, GestureSource::Label);
                match self.pipeline.hand(now, &hand.input, hand.landmarks.as_deref(), source) {
                    Ok(out) => {
                        self.hand_inputs += 1;
                        self.record_latency(received.elapsed().as_secs_f64() * 1e3);
                        for name in out.events {
                            self.broadcast(&Message::Event { name, t: now });
                        }
                    }
                    Err(e) => self.error(id, codes::BAD_INPUT, format!("{e:#}")),
                }
            }
            Message::GestureOverride { gesture } => {
                if !is_operator {
                    return self.error(id, codes::NOT_OPERATOR, "gesture_override requires the operator role");
                }
                self.gesture_override = gesture;
                let ack = self.ack("gesture_override", None, false);
                self.send(id, &ack);
            }
            Message::SetConfig { eta, l_h, l_t, latency } => {
                if !is_operator {
                    return self.error(id, codes::NOT_OPERATOR, "set_config requires the operator role");
                }
                let mut cfg = self.pipeline.config().clone();
                if let Some(v) = l_h {
                    cfg.control.l_h = v;
                }
                if let Some(v) = l_t {
                    cfg.control.l_t = v;
                }
                if let Some(v) = latency {
                    cfg.sim.latency = v;
                }
                let applied = match eta {
                    Some(v) => cfg.control.set_eta(v).map_err(anyhow::Error::from),
                    None => Ok(()),
                };
                match applied.and_then(|()| cfg.validate()) {
                    Ok(()) => {
                        *self.pipeline.config_mut() = cfg;
                        let ack = self.ack("set_config", None, true);
                        self.send(id, &ack);
                    }
                    Err(e) => self.error(id, codes::INVALID_CONFIG, format!("{e:#}")),
                }
            }
            other => self.error(id, codes::NOT_CLIENT_MESSAGE, format!("{} is sent by the server only", other.type_name())),
        }
    }

    fn command(&mut self, cmd: Cmd) {
        match cmd {
            Cmd::Connect { id, tx } => {
                self.clients.insert(id, tx);
            }
            Cmd::Disconnect { id } => {
                self.clients.remove(&id);
                if self.operator == Some(id) {
                    self.operator = None;
                    self.gesture_override = None;
                }
            }
            Cmd::Frame { id, msg, received } => {
                if self.clients.contains_key(&id) {
                    self.frame(id, msg, received);
                }
            }
            Cmd::RecordStart { reply } => {
                self.advance();
                self.pipeline.start_recording();
                let _ = reply.send(());
            }
            Cmd::RecordStop { reply } => {
                self.advance();
                let trace = self.take_trace();
                let _ = reply.send(trace);
            }
            Cmd::LastTrace { reply } => {
                let _ = reply.send(self.last_trace.clone());
            }
            Cmd::Stats { reply } => {
                let _ = reply.send(self.stats());
            }
        }
    }

    async fn run(mut self, mut rx: mpsc::Receiver<Cmd>, mut shutdown: oneshot::Receiver<()>) {
        let mut broadcast = tokio::time::interval(Duration::from_secs_f64(1.0 / self.pipeline.config().broadcast_rate));
        broadcast.set_missed_tick_behavior(MissedTickBehavior::Delay);
        loop {
            tokio::select! {
                biased;
                _ = &mut shutdown => break,
                cmd = rx.recv() => match cmd {
                    Some(c) => self.command(c),
                    None => break,
                },
                _ = broadcast.tick() => self.publish_state(),
            }
        }
    }
}

#[derive(Clone)]
struct AppState {
    cmd: mpsc::Sender<Cmd>,
    state_rx: watch::Receiver<Arc<str>>,
    next_id: Arc<AtomicU64>,
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(app): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| client_session(socket, app))
}

async fn client_session(socket: WebSocket, app: AppState) {
    let id = app.next_id.fetch_add(1, Ordering::Relaxed);
    let (out_tx, mut out_rx) = mpsc::channel::<String>(EVENT_QUEUE);
    // The loop owns the only strong sender, so dropping the client there closes the socket.
    let out_weak = out_tx.downgrade();
    if app.cmd.send(Cmd::Connect { id, tx: out_tx }).await.is_err() {
        return;
    }
    let (mut sink, mut stream) = socket.split();
    let mut state_rx = app.state_rx.clone();
    state_rx.mark_unchanged();

    let writer = tokio::spawn(async move {
        loop {
            let text: String = tokio::select! {
                biased;
                m = out_rx.recv() => match m {
                    Some(t) => t,
                    None => break,
                },
                r = state_rx.changed() => match r {
                    Ok(()) => state_rx.borrow_and_update().to_string(),
                    Err(_) => break,
                },
            };
            if sink.send(WsFrame::Text(text.into())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });

    let reply = |e: WireError| match out_weak.upgrade() {
        Some(tx) => tx.try_send(e.to_message().to_json()).is_ok(),
        None => false,
    };
    while let Some(Ok(frame)) = stream.next().await {
        let ok = match frame {
            WsFrame::Text(text) => match Message::parse(text.as_str()) {
                Ok(msg) => app.cmd.send(Cmd::Frame { id, msg, received: Instant::now() }).await.is_ok(),
                Err(e) => reply(e),
            },
            WsFrame::Binary(_) => reply(WireError::new(codes::MALFORMED, "only text frames are accepted")),
            WsFrame::Close(_) => false,
            _ => true,
        };
        if !ok {
            break;
        }
    }
    let _ = app.cmd.send(Cmd::Disconnect { id }).await;
    let _ = writer.await;
}

async fn ask<R>(app: &AppState, make: impl FnOnce(oneshot::Sender<R>) -> Cmd) -> Result<R, StatusCode> {
    let (tx, rx) = oneshot::channel();
    app.cmd.send(make(tx)).await.map_err(|_| StatusCode::SERVICE_UNAVAILABLE)?;
    rx.await.map_err(|_| StatusCode::SERVICE_UNAVAILABLE)
}

async fn record_start(State(app): State<AppState>) -> Result<Json<serde_json::Value>, StatusCode> {
    ask(&app, |reply| Cmd::RecordStart { reply }).await?;
    Ok(Json(serde_json::json!({ "recording": true })))
}

async fn record_stop(State(app): State<AppState>) -> Result<Json<serde_json::Value>, StatusCode> {
    let trace = ask(&app, |reply| Cmd::RecordStop { reply }).await?;
    Ok(Json(serde_json::json!({ "recording": false, "records": trace.records.len() })))
}

async fn record_trace(State(app): State<AppState>) -> Result<Response, StatusCode> {
    let trace = ask(&app, |reply| Cmd::LastTrace { reply }).await?.ok_or(StatusCode::NOT_FOUND)?;
    let body = trace_to_string(trace.header.config, &trace.records);
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn record_report(State(app): State<AppState>) -> Result<Response, StatusCode> {
    let trace = ask(&app, |reply| Cmd::LastTrace { reply }).await?.ok_or(StatusCode::NOT_FOUND)?;
    Ok(match report_trace(&trace) {
        Ok(s) => Json(s).into_response(),
        Err(e) => (StatusCode::UNPROCESSABLE_ENTITY, Json(serde_json::json!({ "error": format!("{e:#}") }))).into_response(),
    })
}

async fn stats(State(app): State<AppState>) -> Result<Json<Stats>, StatusCode> {
    Ok(Json(ask(&app, |reply| Cmd::Stats { reply }).await?))
}

/// A running service.
pub struct Server {
    addr: SocketAddr,
    shutdown: Option<(oneshot::Sender<()>, oneshot::Sender<()>)>,
    http: JoinHandle<std::io::Result<()>>,
    control: JoinHandle<()>,
}

impl Server {
    /// Binds `addr` (port 0 picks a free port) and starts serving.
    pub async fn start(addr: SocketAddr, cfg: SessionConfig, model: Option<Arc<MlpModel<f64>>>) -> anyhow::Result<Self> {
        cfg.validate()?;
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| anyhow::anyhow!("bind {addr}: {e}"))?;
        let addr = listener.local_addr()?;

        let start = Instant::now();
        let pipeline = Pipeline::new(cfg, model, 0.0);
        let (state_tx, state_rx) = watch::channel::<Arc<str>>(Arc::from(""));
        let mut control = ControlLoop {
            pipeline,
            start,
            clients: HashMap::new(),
            operator: None,
            gesture_override: None,
            latencies: Vec::new(),
            latency_next: 0,
            hand_inputs: 0,
            dropped: 0,
            last_trace: None,
            state_tx,
        };
        control.publish_state();
        let (cmd_tx, cmd_rx) = mpsc::channel(4096);
        let (stop_loop, loop_rx) = oneshot::channel();
        let control = tokio::spawn(control.run(cmd_rx, loop_rx));

        let app = AppState { cmd: cmd_tx, state_rx, next_id: Arc::new(AtomicU64::new(1)) };
        let router = Router::new()
            .route("/ws", get(ws_upgrade))
            .route("/record/start", post(record_start))
            .route("/record/stop", post(record_stop))
            .route("/record/trace", get(record_trace))
            .route("/record/report", get(record_report))
            .route("/stats", get(stats))
            .with_state(app);
        let (stop_http, http_rx) = oneshot::channel::<()>();
        let http = tokio::spawn(async move {
            axum::serve(listener, router)
                .with_graceful_shutdown(async move {
                    let _ = http_rx.await;
                })
                .await
        });
        tracing::info!(%addr, "serving");
        Ok(Self { addr, shutdown: Some((stop_loop, stop_http)), http, control })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn ws_url(&self) -> String {
        format!("ws://{}/ws", self.addr)
    }

    /// Runs until the listener fails.
    pub async fn wait(self) -> anyhow::Result<()> {
        self.http.await??;
        Ok(())
    }

    /// Stops the control loop (closing every client) and the listener.
    pub async fn shutdown(mut self) -> anyhow::Result<()> {
        if let Some((stop_loop, stop_http)) = self.shutdown.take() {
            let _ = stop_loop.send(());
            let _ = (&mut self.control).await;
            let _ = stop_http.send(());
        }
        match tokio::time::timeout(Duration::from_secs(2), &mut self.http).await {
            Ok(r) => r??,
            Err(_) => self.http.abort(),
        }
        Ok(())
    }
}
