//! Helpers shared by the service test targets.
#![allow(dead_code)]

use std::net::SocketAddr;
use std::time::Duration;

use axum::body::Body;
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use borderforge::service::{router, AppState, ServiceConfig};
use borderforge_core::harness::UserAction;
use borderforge_core::interaction::Event;
use futures::StreamExt;
use http_body_util::BodyExt;
use serde_json::Value;
use tokio_tungstenite::tungstenite::Message;
use tower::ServiceExt;

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn parse<T: serde::de::DeserializeOwned>(&self) -> T {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }
}

/// A service with a frozen clock; tests advance it explicitly.
pub fn manual() -> (AppState, Router) {
    let state = AppState::new(ServiceConfig { tick: None });
    let app = router(state.clone());
    (state, app)
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(serde_json::to_vec(&v).unwrap())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

pub async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    call(app, Method::POST, uri, Some(body)).await
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    call(app, Method::GET, uri, None).await
}

pub async fn create(app: &Router, scenario: &str, mode: &str, seed: u64) -> String {
    let r = post(
        app,
        "/sessions",
        serde_json::json!({"scenario": scenario, "mode": mode, "seed": seed}),
    )
    .await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&r.body));
    r.json()["id"].as_str().unwrap().to_string()
}

/// Feeds a scripted user's actions to a service session, one request per action.
pub async fn drive(state: &AppState, app: &Router, id: &str, actions: &[UserAction]) {
    for a in actions {
        match *a {
            UserAction::Command { command } => {
                let name = serde_json::to_value(command).unwrap();
                let r = post(
                    app,
                    &format!("/sessions/{id}/commands"),
                    serde_json::json!({ "command": name }),
                )
                .await;
                assert_eq!(r.status, StatusCode::OK);
            }
            UserAction::Spot { x, y } => {
                let r = post(
                    app,
                    &format!("/sessions/{id}/spots"),
                    serde_json::json!({"x": x, "y": y}),
                )
                .await;
                assert_eq!(r.status, StatusCode::OK);
            }
            UserAction::Tick { dt } => {
                state.advance(id, dt).await.unwrap();
            }
        }
        // let other tasks interleave
        tokio::task::yield_now().await;
    }
}

/// Serves `app` on an ephemeral local port.
pub async fn spawn_server(app: Router) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    addr
}

pub type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

pub async fn subscribe(addr: SocketAddr, id: &str, cursor: u64) -> Ws {
    let url = format!("ws://{addr}/sessions/{id}/events?cursor={cursor}");
    tokio_tungstenite::connect_async(url).await.unwrap().0
}

/// Reads events until one with `seq >= last` arrives, or fails after `wait` of silence.
pub async fn read_until(ws: &mut Ws, last: u64, wait: Duration) -> Vec<Event> {
    let mut out = Vec::new();
    loop {
        if out.last().is_some_and(|e: &Event| e.seq >= last) {
            return out;
        }
        let msg = tokio::time::timeout(wait, ws.next())
            .await
            .unwrap_or_else(|_| panic!("no event after seq {:?}", out.last().map(|e: &Event| e.seq)))
            .expect("stream ended")
            .unwrap();
        if let Message::Text(t) = msg {
            out.push(serde_json::from_str(t.as_str()).unwrap());
        }
    }
}

/// True when the sequence numbers run `first, first+1, ...` with no gap or repeat.
pub fn gapless(events: &[Event], first: u64) -> bool {
    events.iter().enumerate().all(|(i, e)| e.seq == first + i as u64)
}
