use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use rulediff_core::sim::{Message, ServiceResponse, Simulator};
use tokio::sync::oneshot;

pub const VALIDATION_PATH: &str = "/api/messages/validation";
pub const HEALTH_PATH: &str = "/health";

async fn validate(State(sim): State<Arc<Simulator>>, body: Bytes) -> Response {
    let message: Message = match serde_json::from_slice(&body) {
        Ok(m) => m,
        Err(e) => return (StatusCode::BAD_REQUEST, format!("message must be a JSON object: {e}")).into_response(),
    };
    match sim.validate_message(&message) {
        ServiceResponse::Results(results) => {
            let body = serde_json::to_vec(&results).expect("results serialise");
            (StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], body).into_response()
        }
        ServiceResponse::EmptyResponse => StatusCode::OK.into_response(),
        ServiceResponse::Http500 => StatusCode::INTERNAL_SERVER_ERROR.into_response(),
    }
}

pub fn router(sim: Arc<Simulator>) -> Router {
    Router::new()
        .route(VALIDATION_PATH, post(validate))
        .route(HEALTH_PATH, get(|| async { "ok" }))
        .with_state(sim)
}

/// Serves until the process is stopped.
pub fn serve(addr: SocketAddr, sim: Simulator) -> std::io::Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(Arc::new(sim))).await
    })
}

/// An in-process server on an ephemeral localhost port, stopped on drop.
pub struct EmbeddedServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl EmbeddedServer {
    pub fn start(sim: Simulator) -> std::io::Result<Self> {
        Self::start_router(router(Arc::new(sim)))
    }

    /// Starts any router; handy for fakes in tests.
    pub fn start_router(app: Router) -> std::io::Result<Self> {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build()?;
        let listener = rt.block_on(tokio::net::TcpListener::bind(("127.0.0.1", 0)))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
            })
        });
        Ok(EmbeddedServer { addr, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for EmbeddedServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            match t.join() {
                Ok(Err(e)) => log::warn!("embedded server stopped with an error: {e}"),
                Err(_) => log::warn!("embedded server thread panicked"),
                Ok(Ok(())) => {}
            }
        }
    }
}
