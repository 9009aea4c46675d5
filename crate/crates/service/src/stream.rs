//! The per-observer WebSocket event stream.

use std::time::Duration;

use axum::extract::ws::{close_code, CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::HeaderMap;
use axum::response::Response;
use dlot_core::{Phase, Timestamp};
use serde::Deserialize;
use tokio::sync::broadcast::{self, error::RecvError};

use crate::events::StreamEvent;
use crate::http::{bearer, ApiError, AppState};
use crate::registry::{lock, Slot};

#[derive(Deserialize)]
pub struct StreamQuery {
    token: Option<String>,
}

/// `GET /sessions/{id}/stream`. Browsers cannot set headers on a WebSocket
/// request, so the token may also come as `?token=`.
pub async fn handler(
    ws: WebSocketUpgrade,
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<StreamQuery>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let slot = app.registry.get(&id)?;
    let token = q.token.or_else(|| bearer(&headers));
    // subscribe before the handshake completes so no event falls between
    // the 101 response and the first read
    let setup = tokio::task::spawn_blocking(move || prepare(&slot, token.as_deref()))
        .await
        .ok();
    let heartbeat = app.heartbeat;
    let clock = app.registry.clock().clone();
    let closing = app.registry.closing();
    Ok(ws.on_upgrade(move |socket| run(socket, setup, heartbeat, move || clock.now(), closing)))
}

enum Setup {
    Refused,
    Ended(StreamEvent),
    Live {
        rx: broadcast::Receiver<StreamEvent>,
        first: Option<StreamEvent>,
        prompts_issued: u64,
    },
}

async fn send(socket: &mut WebSocket, event: &StreamEvent) -> bool {
    let text = serde_json::to_string(event).expect("stream events serialize");
    socket.send(Message::Text(text.into())).await.is_ok()
}

async fn close(mut socket: WebSocket, code: u16, reason: &str) {
    let frame = CloseFrame {
        code,
        reason: reason.into(),
    };
    let _ = socket.send(Message::Close(Some(frame))).await;
}

/// Authenticates, then subscribes and snapshots under the same lock.
fn prepare(slot: &Slot, token: Option<&str>) -> Setup {
    let host = lock(slot);
    let Some(observer) = token.and_then(|t| host.observer_for(t)) else {
        return Setup::Refused;
    };
    let state = host.state();
    if state.phase() == Phase::Ended {
        return Setup::Ended(StreamEvent::SessionEnded {
            ended_at: state.ended_at().expect("ended session has an end"),
        });
    }
    Setup::Live {
        rx: host.subscribe(),
        first: host.replay_for(observer),
        prompts_issued: state.prompts_issued(),
    }
}

async fn run(
    mut socket: WebSocket,
    setup: Option<Setup>,
    heartbeat: Duration,
    now: impl Fn() -> Timestamp,
    mut closing: tokio::sync::watch::Receiver<bool>,
) {
    let (mut rx, first, mut prompts_issued) = match setup {
        Some(Setup::Live {
            rx,
            first,
            prompts_issued,
        }) => (rx, first, prompts_issued),
        Some(Setup::Ended(event)) => {
            if send(&mut socket, &event).await {
                close(socket, close_code::NORMAL, "session ended").await;
            }
            return;
        }
        Some(Setup::Refused) => return close(socket, close_code::POLICY, "invalid token").await,
        None => return close(socket, close_code::ERROR, "internal error").await,
    };

    let first = first.unwrap_or(StreamEvent::Heartbeat {
        server_time: now(),
        prompts_issued,
    });
    if !send(&mut socket, &first).await {
        return;
    }

    if *closing.borrow_and_update() {
        return close(socket, close_code::AWAY, "server shutting down").await;
    }
    let mut ticker = tokio::time::interval_at(tokio::time::Instant::now() + heartbeat, heartbeat);
    loop {
        tokio::select! {
            received = rx.recv() => match received {
                Ok(event) => {
                    if let StreamEvent::PromptOpened { prompts_issued: n, .. } = &event {
                        prompts_issued = *n;
                    }
                    if !send(&mut socket, &event).await {
                        return;
                    }
                    if matches!(event, StreamEvent::SessionEnded { .. }) {
                        return close(socket, close_code::NORMAL, "session ended").await;
                    }
                }
                Err(RecvError::Lagged(_)) => {
                    return close(socket, close_code::AGAIN, "fell behind; reconnect to resync").await;
                }
                Err(RecvError::Closed) => return close(socket, close_code::AWAY, "session unloaded").await,
            },
            _ = ticker.tick() => {
                let beat = StreamEvent::Heartbeat { server_time: now(), prompts_issued };
                if !send(&mut socket, &beat).await {
                    return;
                }
            }
            incoming = socket.recv() => match incoming {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return,
                Some(Ok(_)) => {}
            },
            _ = closing.changed() => {
                return close(socket, close_code::AWAY, "server shutting down").await;
            }
        }
    }
}
