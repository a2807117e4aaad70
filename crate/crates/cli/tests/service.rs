//! The session service over HTTP and WebSocket.

mod common;

use std::time::Duration;

use axum::http::{Method, StatusCode};
use borderforge::service::{ApiError, CommandResponse, SpotResponse, StateResponse};
use borderforge_core::gridmap::encode_pgm;
use borderforge_core::harness::{builtin, run_scenario, RunOptions};
use borderforge_core::interaction::{EventBody, Mode, SessionState};
use common::*;
use serde_json::json;

#[tokio::test]
async fn created_sessions_get_distinct_ids() {
    let (state, app) = manual();
    let a = post(&app, "/sessions", json!({"scenario": "builtin:1"})).await;
    assert_eq!(a.status, StatusCode::CREATED);
    let a = a.json();
    assert_eq!(a["state"], "Default");
    assert_eq!(a["mode"], "nrs");
    assert_eq!(a["scenario"], "room-exclusion");
    let b = create(&app, "builtin:2", "robot-only", 4).await;
    assert_ne!(a["id"].as_str().unwrap(), b);
    assert_eq!(state.session_count().await, 2);

    let s: StateResponse = get(&app, &format!("/sessions/{b}/state")).await.parse();
    assert_eq!(s.snapshot.mode, Mode::RobotOnly);
    assert_eq!(s.snapshot.events, 0);
}

#[tokio::test]
async fn malformed_scenarios_name_the_field() {
    let (_, app) = manual();
    let mut sc = serde_json::to_value(builtin("builtin:1").unwrap()).unwrap();
    sc["stroke_speed"] = json!(-1.0);
    let r = post(&app, "/sessions", json!({ "scenario": sc })).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let e: ApiError = r.parse();
    assert_eq!(e.code, "invalid_scenario");
    assert_eq!(e.field.as_deref(), Some("stroke_speed"));

    let r = post(&app, "/sessions", json!({"scenario": "builtin:9"})).await;
    assert_eq!(r.parse::<ApiError>().field.as_deref(), Some("scenario"));

    let r = post(&app, "/sessions", json!({"scenario": "name = [unclosed"})).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);

    let r = post(&app, "/sessions", json!({"mode": "nrs"})).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.parse::<ApiError>().code, "bad_request");
}

#[tokio::test]
async fn commands_drive_the_state_machine() {
    let (_, app) = manual();
    let id = create(&app, "builtin:1", "nrs", 0).await;
    let uri = format!("/sessions/{id}/commands");
    let r: CommandResponse = post(&app, &uri, json!({"command": "define border"})).await.parse();
    assert_eq!(r.state, SessionState::Border);
    let r: CommandResponse = post(&app, &uri, json!({"command": "DefineSeed"})).await.parse();
    assert_eq!(r.state, SessionState::Seed);

    // nothing recorded yet
    let r: CommandResponse = post(&app, &uri, json!({"command": "save"})).await.parse();
    assert_eq!(r.state, SessionState::Seed);
    assert!(r
        .events
        .iter()
        .any(|e| matches!(&e.body, EventBody::Error { code, .. } if code == "nothing_to_save")));

    let r: CommandResponse = post(&app, &uri, json!({"command": "cancel"})).await.parse();
    assert_eq!(r.state, SessionState::Default);

    let r = post(&app, &uri, json!({"command": "dance"})).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let e: ApiError = r.parse();
    assert_eq!(
        (e.code.as_str(), e.field.as_deref()),
        ("unknown_command", Some("command"))
    );
}

#[tokio::test]
async fn spots_are_bounds_checked_and_detected() {
    let (_, app) = manual();
    let id = create(&app, "builtin:1", "nrs", 0).await;
    post(
        &app,
        &format!("/sessions/{id}/commands"),
        json!({"command": "DefineBorder"}),
    )
    .await;
    let uri = format!("/sessions/{id}/spots");
    for (x, y) in [(-0.1, 1.0), (1.0, 5.01), (8.5, 2.0)] {
        let r = post(&app, &uri, json!({"x": x, "y": y})).await;
        assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
        let e: ApiError = r.parse();
        assert_eq!((e.code.as_str(), e.field.as_deref()), ("out_of_bounds", Some("point")));
    }
    let door = builtin("builtin:1").unwrap().strokes[0].points[0];
    let r: SpotResponse = post(&app, &uri, json!({"x": door.x, "y": door.y, "client_time": 12.5}))
        .await
        .parse();
    assert!(r.detections > 0);
    assert!(r.events.iter().any(|e| e.body.kind() == "SpotDetected"));
    let s: StateResponse = get(&app, &format!("/sessions/{id}/state")).await.parse();
    assert_eq!(s.last_client_time, Some(12.5));
    assert_eq!(s.snapshot.border_points, r.detections);
}

#[tokio::test]
async fn deleted_sessions_are_gone() {
    let (state, app) = manual();
    let id = create(&app, "builtin:3", "nrs", 0).await;
    let r = call(&app, Method::DELETE, &format!("/sessions/{id}"), None).await;
    assert_eq!(r.status, StatusCode::NO_CONTENT);
    assert_eq!(state.session_count().await, 0);
    for uri in [format!("/sessions/{id}/state"), format!("/sessions/{id}/maps/prior")] {
        let r = get(&app, &uri).await;
        assert_eq!(r.status, StatusCode::NOT_FOUND);
        assert_eq!(r.parse::<ApiError>().code, "not_found");
    }
    let r = call(&app, Method::DELETE, &format!("/sessions/{id}"), None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn driven_session_saves_the_same_map_as_the_harness() {
    let sc = builtin("builtin:3").unwrap();
    let art = run_scenario(&sc, RunOptions::new(Mode::Nrs, 5)).unwrap();
    assert!(art.report.success);

    let (state, app) = manual();
    let id = create(&app, "builtin:3", "nrs", 5).await;
    let r = get(&app, &format!("/sessions/{id}/maps/posterior")).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.parse::<ApiError>().code, "not_ready");

    let prior = get(&app, &format!("/sessions/{id}/maps/prior")).await;
    assert_eq!(prior.body, encode_pgm(&art.prior));
    assert_eq!(prior.headers["x-map-resolution"], "0.025");
    assert_eq!(prior.headers["x-map-version"], "0");

    drive(&state, &app, &id, &art.actions).await;
    let post = get(&app, &format!("/sessions/{id}/maps/posterior")).await;
    assert_eq!(post.status, StatusCode::OK);
    assert_eq!(post.headers["content-type"], "image/x-portable-graymap");
    assert_eq!(post.headers["x-map-version"], "1");
    assert!(
        post.body == encode_pgm(art.posterior.as_ref().unwrap()),
        "posterior differs from the harness run"
    );

    let s: StateResponse = get(&app, &format!("/sessions/{id}/state")).await.parse();
    assert_eq!(s.snapshot.events, art.events.len() as u64);
    assert_eq!(s.snapshot.timing, art.report.timing);
}

#[tokio::test]
async fn websocket_replays_from_cursor_then_streams_live() {
    let sc = builtin("builtin:2").unwrap();
    let art = run_scenario(&sc, RunOptions::new(Mode::RobotOnly, 1)).unwrap();
    let (state, app) = manual();
    let addr = spawn_server(app.clone()).await;
    let id = create(&app, "builtin:2", "robot-only", 1).await;

    let half = art.actions.len() / 2;
    drive(&state, &app, &id, &art.actions[..half]).await;
    let seen = get(&app, &format!("/sessions/{id}/state"))
        .await
        .parse::<StateResponse>()
        .snapshot
        .events;
    assert!(seen > 4, "the first half should produce events");

    // one subscriber from the start, one from the middle of the backlog
    let mut from_start = subscribe(addr, &id, 0).await;
    let cursor = seen / 2;
    let mut from_middle = subscribe(addr, &id, cursor).await;
    let wait = Duration::from_secs(10);
    let backlog = read_until(&mut from_middle, seen - 1, wait).await;
    assert!(gapless(&backlog, cursor));

    drive(&state, &app, &id, &art.actions[half..]).await;
    let last = art.events.last().unwrap().seq;
    let all = read_until(&mut from_start, last, wait).await;
    assert_eq!(all, art.events);
    let mut rest = backlog;
    rest.extend(read_until(&mut from_middle, last, wait).await);
    assert!(gapless(&rest, cursor));
    assert_eq!(&rest[..], &art.events[cursor as usize..]);
}

#[tokio::test]
async fn unknown_session_stream_is_rejected() {
    let (_, app) = manual();
    let addr = spawn_server(app).await;
    let err = tokio_tungstenite::connect_async(format!("ws://{addr}/sessions/s404/events"))
        .await
        .unwrap_err();
    match err {
        tokio_tungstenite::tungstenite::Error::Http(resp) => assert_eq!(resp.status(), StatusCode::NOT_FOUND),
        other => panic!("unexpected {other}"),
    }
}
