//! Listener lifecycle: bind, serve, drain, persist.

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use passgate::storage::Store;
use tokio::net::TcpListener;

use crate::app::{router, AppState};

/// Serves `state` on `listener` until `shutdown` resolves, then waits for
/// in-flight requests.
pub async fn run(
    listener: TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(state).into_make_service_with_connect_info::<SocketAddr>();
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
}

/// Resolves on SIGTERM or Ctrl-C.
pub async fn termination() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

/// Writes the final snapshot, if the store has one.
pub fn persist(
    store: &Store,
    path: Option<&PathBuf>,
) -> Result<(), passgate::storage::SnapshotError> {
    match path {
        Some(p) => store.persist_snapshot(p),
        None => Ok(()),
    }
}

/// A server running on a background task, for tests and examples.
pub struct Running {
    pub addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl Running {
    pub fn base_url(&self) -> String {
        format!("http://localhost:{}", self.addr.port())
    }

    /// Stops accepting, drains, and returns once the server task ends.
    pub async fn shutdown(mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        self.task.await.map_err(std::io::Error::other)?
    }
}

/// Spawns `state` on an already-bound listener.
pub fn spawn(listener: TcpListener, state: Arc<AppState>) -> Running {
    let addr = listener
        .local_addr()
        .expect("bound listener has an address");
    let (tx, rx) = tokio::sync::oneshot::channel();
    let task = tokio::spawn(run(listener, state, async {
        let _ = rx.await;
    }));
    Running {
        addr,
        stop: Some(tx),
        task,
    }
}
