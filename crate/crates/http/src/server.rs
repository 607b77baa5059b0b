//! Axum front-end over `CoordinationServer`.
//!
//! Routes:
//!   POST /status            StatusUpdate        -> Ack
//!   GET  /system-state      ?agent_id=ID        -> SystemState
//!   POST /perception        PerceptionRequest   -> PerceptionResult
//!   POST /latch-command     LatchCommandMsg     -> Ack
//!   GET  /latch-command     ?agent_id=ID        -> [LatchCommandMsg] (drains)
//!   POST /resolve-stop      ResolveStopMsg      -> SystemState
//!   POST /frame             WorldSnapshot       -> Ack
//!   GET  /admin/system-state                    -> SystemState
//!
//! Every request funnels through `CoordinationServer::handle` behind one
//! lock, so concurrent requests linearize in lock-acquisition order.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tokio::sync::oneshot;
use tracing::info;

use platoon_core::comms::messages::{
    LatchCommandMsg, PerceptionRequest, ResolveStopMsg, ServerRequest, ServerResponse,
    StatusUpdate,
};
use platoon_core::comms::server::CoordinationServer;
use platoon_core::world::{AgentId, WorldSnapshot};

use crate::ErrorBody;

type Shared = Arc<Mutex<CoordinationServer>>;

fn respond(resp: ServerResponse) -> Response {
    match resp {
        ServerResponse::Ack(a) => Json(a).into_response(),
        ServerResponse::SystemState(s) => Json(s).into_response(),
        ServerResponse::Perception(r) => Json(*r).into_response(),
        ServerResponse::LatchCommands(c) => Json(c).into_response(),
        ServerResponse::Rejected { reason } => {
            (StatusCode::BAD_REQUEST, Json(ErrorBody { reason })).into_response()
        }
    }
}

fn handle(state: &Shared, req: ServerRequest) -> Response {
    let mut server = state.lock().expect("server lock");
    respond(server.handle(req))
}

#[derive(Deserialize)]
struct AgentQuery {
    agent_id: String,
}

async fn post_status(State(state): State<Shared>, Json(body): Json<StatusUpdate>) -> Response {
    handle(&state, ServerRequest::SubmitStatus(body))
}

async fn get_system_state(State(state): State<Shared>, Query(q): Query<AgentQuery>) -> Response {
    handle(
        &state,
        ServerRequest::PollSystemState {
            agent_id: AgentId::new(q.agent_id),
        },
    )
}

async fn post_perception(
    State(state): State<Shared>,
    Json(body): Json<PerceptionRequest>,
) -> Response {
    handle(&state, ServerRequest::RequestPerception(body))
}

async fn post_latch_command(
    State(state): State<Shared>,
    Json(body): Json<LatchCommandMsg>,
) -> Response {
    handle(&state, ServerRequest::SubmitLatchCommand(body))
}

async fn get_latch_commands(State(state): State<Shared>, Query(q): Query<AgentQuery>) -> Response {
    handle(
        &state,
        ServerRequest::PollLatchCommands {
            agent_id: AgentId::new(q.agent_id),
        },
    )
}

async fn post_resolve_stop(
    State(state): State<Shared>,
    Json(body): Json<ResolveStopMsg>,
) -> Response {
    handle(&state, ServerRequest::ResolveStop(body))
}

async fn post_frame(State(state): State<Shared>, Json(body): Json<WorldSnapshot>) -> Response {
    handle(&state, ServerRequest::PublishFrame(body))
}

async fn get_admin_system_state(State(state): State<Shared>) -> Response {
    let server = state.lock().expect("server lock");
    Json(server.system_state()).into_response()
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/status", post(post_status))
        .route("/system-state", get(get_system_state))
        .route("/perception", post(post_perception))
        .route("/latch-command", post(post_latch_command).get(get_latch_commands))
        .route("/resolve-stop", post(post_resolve_stop))
        .route("/frame", post(post_frame))
        .route("/admin/system-state", get(get_admin_system_state))
        .with_state(state)
}

/// A running service; shuts down (and joins) on drop.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Serve a coordination server on `listener` from a background thread with
/// its own runtime. Bind to port 0 for an ephemeral port.
pub fn serve(server: CoordinationServer, listener: std::net::TcpListener) -> ServerHandle {
    let addr = listener.local_addr().expect("listener addr");
    let state: Shared = Arc::new(Mutex::new(server));
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .expect("tokio runtime");
        rt.block_on(async move {
            listener.set_nonblocking(true).expect("nonblocking");
            let listener = tokio::net::TcpListener::from_std(listener).expect("tokio listener");
            info!(%addr, "coordination service listening");
            axum::serve(listener, router(state))
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
                .expect("serve");
        });
    });
    ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    }
}
