use std::path::PathBuf;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc};
use tower_http::services::ServeDir;

use crate::runtime::SessionHandle;
use crate::session::Session;
use crate::wire::{ClientMessage, ServerMessage};

/// `/session`, `/healthz`, and the web UI bundle from `static_dir` if given.
pub fn router(handle: SessionHandle, static_dir: Option<PathBuf>) -> Router {
    let router = Router::new()
        .route("/session", get(session_ws))
        .route("/healthz", get(healthz))
        .with_state(handle);
    match static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    }
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, session: Session, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let handle = SessionHandle::spawn(session);
    axum::serve(listener, router(handle, static_dir)).await
}

async fn healthz() -> impl IntoResponse {
    Json(json!({ "status": "ok" }))
}

async fn session_ws(ws: WebSocketUpgrade, State(handle): State<SessionHandle>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client_loop(socket, handle))
}

async fn client_loop(mut socket: WebSocket, handle: SessionHandle) {
    let mut snapshots = handle.subscribe();
    let (reply_tx, mut replies) = mpsc::unbounded_channel::<ServerMessage>();
    loop {
        tokio::select! {
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(text))) => text,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                match serde_json::from_str::<ClientMessage>(&text) {
                    Ok(msg) => {
                        if !handle.send(msg, reply_tx.clone()) {
                            break;
                        }
                    }
                    Err(e) => {
                        let reply = ServerMessage::Error { code: "bad_request".into(), message: e.to_string() };
                        if socket.send(Message::Text(reply.to_json().into())).await.is_err() {
                            break;
                        }
                    }
                }
            }
            Some(reply) = replies.recv() => {
                if socket.send(Message::Text(reply.to_json().into())).await.is_err() {
                    break;
                }
            }
            snapshot = snapshots.recv() => {
                match snapshot {
                    Ok(text) => {
                        if socket.send(Message::Text(text.as_ref().into())).await.is_err() {
                            break;
                        }
                    }
                    Err(broadcast::error::RecvError::Lagged(n)) => {
                        tracing::warn!(skipped = n, "slow client dropped snapshots");
                    }
                    Err(broadcast::error::RecvError::Closed) => break,
                }
            }
        }
    }
}
