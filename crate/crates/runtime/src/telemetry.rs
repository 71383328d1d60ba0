//! JSON telemetry frames, control messages and the WebSocket service.
//!
//! The loop task owns the [`ControlLoop`]. Sessions talk to it through an
//! mpsc control inbox and receive frames from a broadcast outbox.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio::task::JoinHandle;

use ssvep_core::classifier::STIMULI;
use ssvep_core::panel::{Menu, Mode};
use ssvep_core::wheelchair::ManualDirection;

use crate::config::LoopConfig;
use crate::engine::{ControlLoop, HopRecord, LoopError};

/// Highest frequency shown in the transported spectrum.
pub const SPECTRUM_MAX_HZ: f64 = 60.0;
pub const SPECTRUM_MAX_BINS: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ElectrodeMags {
    pub O1: Vec<f64>,
    pub Oz: Vec<f64>,
    pub O2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumView {
    pub freqs: Vec<f64>,
    pub mags: ElectrodeMags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelView {
    pub menu: Menu,
    pub mode: Mode,
    pub lcds: [[String; 2]; 6],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChairView {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub omega: f64,
    pub code_a: u8,
    pub code_b: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename = "frame")]
pub struct TelemetryFrame {
    pub t: f64,
    pub window_s: f64,
    pub gaze: Option<usize>,
    pub points: [f64; STIMULI],
    pub thresholds: [f64; STIMULI],
    pub winner: Option<usize>,
    pub command_code: u8,
    pub spectrum: SpectrumView,
    pub panel: PanelView,
    pub chair: ChairView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename = "hello")]
pub struct Hello {
    pub config: LoopConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename = "error")]
pub struct ErrorMessage {
    pub message: String,
}

/// Bins up to [`SPECTRUM_MAX_HZ`], strided down to at most [`SPECTRUM_MAX_BINS`].
fn decimated_spectrum(lp: &ControlLoop) -> SpectrumView {
    let Some(a) = lp.last_analysis() else {
        return SpectrumView {
            freqs: Vec::new(),
            mags: ElectrodeMags { O1: Vec::new(), Oz: Vec::new(), O2: Vec::new() },
        };
    };
    let count = a.spectra[0].freqs.iter().take_while(|&&f| f <= SPECTRUM_MAX_HZ).count();
    let stride = count.div_ceil(SPECTRUM_MAX_BINS).max(1);
    let pick = |v: &[f64]| v[..count].iter().step_by(stride).copied().collect::<Vec<_>>();
    SpectrumView {
        freqs: pick(&a.spectra[0].freqs),
        mags: ElectrodeMags {
            O1: pick(&a.spectra[0].mags),
            Oz: pick(&a.spectra[1].mags),
            O2: pick(&a.spectra[2].mags),
        },
    }
}

impl TelemetryFrame {
    /// Snapshot of the loop right after `record` was produced.
    pub fn capture(lp: &ControlLoop, record: &HopRecord) -> Self {
        let panel = lp.panel();
        let c = record.chair;
        TelemetryFrame {
            t: record.t,
            window_s: lp.config().window_s,
            gaze: record.gaze,
            points: record.points,
            thresholds: *lp.config().thresholds.levels(),
            winner: record.winner,
            command_code: record.command_code,
            spectrum: decimated_spectrum(lp),
            panel: PanelView { menu: panel.menu, mode: panel.mode, lcds: panel.lcds.clone() },
            chair: ChairView {
                x: c.x,
                y: c.y,
                heading: c.heading,
                v: c.v,
                omega: c.omega,
                code_a: record.channels.code_a,
                code_b: record.channels.code_b,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ControlMessage {
    Gaze {
        // Required even though nullable: a bare `{"type":"gaze"}` is rejected.
        #[serde(deserialize_with = "Option::deserialize")]
        target: Option<usize>,
    },
    Threshold { index: usize, value: f64 },
    Window { seconds: f64 },
    Mode { value: Mode },
    Manual { direction: ManualDirection },
}

impl ControlMessage {
    /// Parse and range-check one inbound text message.
    pub fn parse(text: &str) -> Result<Self, String> {
        let msg: ControlMessage = serde_json::from_str(text).map_err(|e| e.to_string())?;
        match msg {
            ControlMessage::Gaze { target: Some(t) } if t >= STIMULI => {
                Err(format!("gaze target {t} outside 0..6"))
            }
            ControlMessage::Threshold { index, .. } if index >= STIMULI => {
                Err(format!("threshold index {index} outside 0..6"))
            }
            ControlMessage::Threshold { value, .. } if !(value > 0.0 && value <= 1.0) => {
                Err(format!("threshold {value} outside (0, 1]"))
            }
            ControlMessage::Window { seconds } if ![1.0, 2.0, 4.0].contains(&seconds) => {
                Err(format!("window {seconds} s is not one of 1, 2, 4"))
            }
            ok => Ok(ok),
        }
    }

    pub fn apply(&self, lp: &mut ControlLoop) -> Result<(), LoopError> {
        match *self {
            ControlMessage::Gaze { target } => lp.set_gaze(target),
            ControlMessage::Threshold { index, value } => lp.set_threshold(index, value),
            ControlMessage::Window { seconds } => lp.set_window(seconds),
            ControlMessage::Mode { value } => {
                lp.set_mode(value);
                Ok(())
            }
            ControlMessage::Manual { direction } => {
                lp.set_manual(direction);
                Ok(())
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("binding {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy)]
pub struct ServeOptions {
    /// Wall time between hops; the hop length for real-time pacing.
    pub hop_interval: Duration,
    /// Stop after this much simulated time.
    pub until: Option<f64>,
}

impl ServeOptions {
    pub fn realtime(config: &LoopConfig) -> Self {
        Self { hop_interval: Duration::from_secs_f64(config.hop_s), until: None }
    }
}

#[derive(Clone)]
struct Shared {
    inbox: mpsc::UnboundedSender<ControlMessage>,
    frames: broadcast::Sender<Arc<str>>,
    config: watch::Receiver<LoopConfig>,
}

/// A running service. Dropping it leaves the service running; call `shutdown`.
pub struct TelemetryHandle {
    pub local_addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    loop_task: JoinHandle<Result<(), LoopError>>,
    server_task: JoinHandle<std::io::Result<()>>,
}

impl TelemetryHandle {
    /// Wait for the loop to finish (only returns on its own when `until` is set).
    pub async fn wait(self) -> Result<(), TelemetryError> {
        let r = self.loop_task.await.map_err(std::io::Error::other)?;
        self.server_task.abort();
        Ok(r?)
    }

    pub async fn shutdown(mut self) -> Result<(), TelemetryError> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        self.wait().await
    }
}

pub async fn serve_telemetry(
    lp: ControlLoop,
    addr: &str,
    options: ServeOptions,
) -> Result<TelemetryHandle, TelemetryError> {
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| TelemetryError::Bind { addr: addr.to_string(), source })?;
    let local_addr = listener.local_addr()?;

    let (inbox_tx, inbox_rx) = mpsc::unbounded_channel();
    let (frames_tx, _) = broadcast::channel(256);
    let (config_tx, config_rx) = watch::channel(lp.config().clone());
    let (stop_tx, stop_rx) = oneshot::channel();

    let shared = Shared { inbox: inbox_tx, frames: frames_tx.clone(), config: config_rx };
    let app = Router::new().route("/ws", get(upgrade)).with_state(shared);
    let server_task = tokio::spawn(async move { axum::serve(listener, app).await });
    let loop_task = tokio::spawn(drive(lp, options, inbox_rx, frames_tx, config_tx, stop_rx));
    log::info!("telemetry on ws://{local_addr}/ws");

    Ok(TelemetryHandle { local_addr, stop: Some(stop_tx), loop_task, server_task })
}

async fn drive(
    mut lp: ControlLoop,
    options: ServeOptions,
    mut inbox: mpsc::UnboundedReceiver<ControlMessage>,
    frames: broadcast::Sender<Arc<str>>,
    config: watch::Sender<LoopConfig>,
    mut stop: oneshot::Receiver<()>,
) -> Result<(), LoopError> {
    let mut ticker = tokio::time::interval(options.hop_interval);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            _ = ticker.tick() => {}
            _ = &mut stop => return Ok(()),
        }
        while let Ok(msg) = inbox.try_recv() {
            match msg.apply(&mut lp) {
                Ok(()) => {
                    config.send_replace(lp.config().clone());
                }
                Err(e) => log::warn!("control message {msg:?} rejected: {e}"),
            }
        }
        let record = lp.hop()?;
        if record.processing > options.hop_interval {
            log::warn!("hop at t={:.1} took {:?}", record.t, record.processing);
        }
        let frame = TelemetryFrame::capture(&lp, &record);
        let json = serde_json::to_string(&frame).expect("frames serialize");
        // No receivers is fine.
        let _ = frames.send(json.into());
        if options.until.is_some_and(|u| record.t >= u - 1e-9) {
            return Ok(());
        }
    }
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Shared>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| session(socket, shared))
}

fn to_text<T: Serialize>(value: &T) -> Message {
    Message::Text(serde_json::to_string(value).expect("messages serialize").into())
}

async fn session(socket: WebSocket, shared: Shared) {
    let (mut sink, mut stream) = socket.split();
    let mut frames = shared.frames.subscribe();
    let hello = Hello { config: shared.config.borrow().clone() };
    if sink.send(to_text(&hello)).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            frame = frames.recv() => match frame {
                Ok(json) => {
                    if sink.send(Message::Text(json.as_ref().into())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => log::debug!("viewer lagged by {n} frames"),
                Err(broadcast::error::RecvError::Closed) => break,
            },
            inbound = stream.next() => match inbound {
                Some(Ok(Message::Text(text))) => match ControlMessage::parse(&text) {
                    Ok(msg) => {
                        if shared.inbox.send(msg).is_err() {
                            break;
                        }
                    }
                    Err(message) => {
                        if sink.send(to_text(&ErrorMessage { message })).await.is_err() {
                            break;
                        }
                    }
                },
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
}
