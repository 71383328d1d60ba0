use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use ssvep_core::synth::SubjectProfile;
use ssvep_runtime::telemetry::TelemetryHandle;
use ssvep_runtime::{serve_telemetry, ControlLoop, LoopConfig, ServeOptions};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn start() -> TelemetryHandle {
    let lp = ControlLoop::with_profile(LoopConfig::default(), SubjectProfile::clean()).unwrap();
    let options = ServeOptions { hop_interval: Duration::from_millis(5), until: None };
    serve_telemetry(lp, "127.0.0.1:0", options).await.unwrap()
}

async fn connect(h: &TelemetryHandle) -> Ws {
    let (ws, _) = connect_async(format!("ws://{}/ws", h.local_addr)).await.unwrap();
    ws
}

async fn next_json(ws: &mut Ws) -> Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("message within 10 s")
            .expect("stream open")
            .unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

/// Read until `pred` holds, giving up after `limit` messages.
async fn wait_for(ws: &mut Ws, limit: usize, pred: impl Fn(&Value) -> bool) -> Value {
    for _ in 0..limit {
        let v = next_json(ws).await;
        if pred(&v) {
            return v;
        }
    }
    panic!("condition not met within {limit} messages");
}

async fn send(ws: &mut Ws, v: Value) {
    ws.send(Message::Text(v.to_string().into())).await.unwrap();
}

#[tokio::test]
async fn hello_carries_the_config() {
    let h = start().await;
    let mut ws = connect(&h).await;
    let hello = next_json(&mut ws).await;
    assert_eq!(hello["type"], "hello");
    assert_eq!(hello["config"]["window_s"], 2.0);
    assert_eq!(hello["config"]["flicker_freqs"], json!([7, 11, 9, 8, 20, 12]));
    assert_eq!(hello["config"]["thresholds"], json!([0.26, 0.26, 0.25, 0.22, 1.0, 1.0]));
    let frame = next_json(&mut ws).await;
    assert_eq!(frame["type"], "frame");
    for key in ["t", "window_s", "gaze", "points", "thresholds", "winner", "command_code", "spectrum", "panel", "chair"] {
        assert!(frame.get(key).is_some(), "missing {key}");
    }
    h.shutdown().await.unwrap();
}

#[tokio::test]
async fn gaze_and_window_take_effect() {
    let h = start().await;
    let mut ws = connect(&h).await;
    next_json(&mut ws).await;
    send(&mut ws, json!({"type": "gaze", "target": 3})).await;
    wait_for(&mut ws, 200, |v| v["gaze"] == 3).await;
    // Sustained gaze on the 8 Hz stimulus drives the chair right.
    wait_for(&mut ws, 400, |v| v["command_code"] == 4 && v["chair"]["code_b"] == 185).await;

    send(&mut ws, json!({"type": "window", "seconds": 1})).await;
    let f = wait_for(&mut ws, 200, |v| v["window_s"] == 1.0).await;
    assert!(f["spectrum"]["freqs"].as_array().unwrap().len() <= 128);

    send(&mut ws, json!({"type": "threshold", "index": 3, "value": 0.5})).await;
    wait_for(&mut ws, 200, |v| v["thresholds"][3] == 0.5).await;

    send(&mut ws, json!({"type": "mode", "value": "manual"})).await;
    send(&mut ws, json!({"type": "manual", "direction": "forward"})).await;
    wait_for(&mut ws, 200, |v| v["panel"]["mode"] == "manual" && v["chair"]["code_a"] == 175).await;
    h.shutdown().await.unwrap();
}

#[tokio::test]
async fn malformed_messages_get_an_error_and_the_session_lives() {
    let h = start().await;
    let mut ws = connect(&h).await;
    next_json(&mut ws).await;
    for bad in [
        "{not json".to_string(),
        json!({"type": "gaze", "target": 9}).to_string(),
        json!({"type": "window", "seconds": 3}).to_string(),
        json!({"type": "teleport"}).to_string(),
    ] {
        ws.send(Message::Text(bad.clone().into())).await.unwrap();
        let err = wait_for(&mut ws, 200, |v| v["type"] == "error").await;
        assert!(!err["message"].as_str().unwrap().is_empty(), "{bad}");
    }
    send(&mut ws, json!({"type": "gaze", "target": 1})).await;
    wait_for(&mut ws, 200, |v| v["gaze"] == 1).await;
    h.shutdown().await.unwrap();
}

#[tokio::test]
async fn viewers_share_one_loop() {
    let h = start().await;
    let mut a = connect(&h).await;
    let mut b = connect(&h).await;
    assert_eq!(next_json(&mut a).await["type"], "hello");
    assert_eq!(next_json(&mut b).await["type"], "hello");

    send(&mut a, json!({"type": "gaze", "target": 2})).await;
    wait_for(&mut b, 200, |v| v["gaze"] == 2).await;
    wait_for(&mut a, 200, |v| v["gaze"] == 2).await;

    // Later messages win: arrival order is preserved.
    send(&mut b, json!({"type": "gaze", "target": 0})).await;
    send(&mut b, json!({"type": "gaze", "target": null})).await;
    let f = wait_for(&mut a, 200, |v| v["gaze"].is_null()).await;
    let t = f["t"].as_f64().unwrap();
    for _ in 0..20 {
        let v = next_json(&mut a).await;
        assert!(v["gaze"].is_null());
        assert!(v["t"].as_f64().unwrap() > t);
    }
    drop(b);
    // The remaining viewer keeps receiving.
    next_json(&mut a).await;
    h.shutdown().await.unwrap();
}

#[tokio::test]
async fn bind_failure_is_reported() {
    let h = start().await;
    let lp = ControlLoop::with_profile(LoopConfig::default(), SubjectProfile::clean()).unwrap();
    let options = ServeOptions { hop_interval: Duration::from_millis(5), until: None };
    assert!(serve_telemetry(lp, &h.local_addr.to_string(), options).await.is_err());
    h.shutdown().await.unwrap();
}

#[tokio::test]
async fn bounded_runs_finish_on_their_own() {
    let lp = ControlLoop::with_profile(LoopConfig::default(), SubjectProfile::clean()).unwrap();
    let options = ServeOptions { hop_interval: Duration::from_millis(1), until: Some(1.0) };
    let h = serve_telemetry(lp, "127.0.0.1:0", options).await.unwrap();
    tokio::time::timeout(Duration::from_secs(10), h.wait()).await.unwrap().unwrap();
}
