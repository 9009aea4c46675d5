//! Network host for live observation sessions.
//!
//! Each session lives in a [`SessionHost`] behind its own lock, so all of
//! its state changes form one total order and land in its journal in that
//! order. A background ticker drives every session's prompts from the
//! server [`Clock`]; observers receive prompts over a WebSocket and submit
//! answers over HTTP with a bearer token.

pub mod clock;
pub mod events;
pub mod host;
pub mod http;
pub mod registry;
pub mod stream;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use clock::{Clock, ManualClock, SystemClock};
pub use events::StreamEvent;
pub use host::{Ack, Credential, Footprint, HostError, SessionHost, SubmitError, SubmitRequest, Submitted};
pub use registry::{Recovered, Registry, RegistryError};

/// Environment variable holding the bind address.
pub const ADDR_ENV: &str = "DLOT_ADDR";
pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Where session journals live.
    pub data_dir: PathBuf,
    /// Built observer interface assets, served at `/`.
    pub ui_dir: Option<PathBuf>,
    /// Gap between heartbeats on idle streams.
    pub heartbeat: Duration,
    /// How often the scheduler ticker runs.
    pub tick: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            data_dir: PathBuf::from("dlot-data"),
            ui_dir: None,
            heartbeat: Duration::from_millis(2500),
            tick: Duration::from_millis(50),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("binding {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
}

/// A server running in the background.
pub struct RunningService {
    pub addr: SocketAddr,
    pub registry: Arc<Registry>,
    pub recovered: Vec<Recovered>,
    stop: Option<oneshot::Sender<()>>,
    server: JoinHandle<std::io::Result<()>>,
    ticker: JoinHandle<()>,
}

impl RunningService {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting requests, closes streams and waits for the server to
    /// wind down.
    pub async fn shutdown(mut self) -> std::io::Result<()> {
        self.registry.close();
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        let result = self.server.await.unwrap_or_else(|e| Err(std::io::Error::other(e)));
        let _ = self.ticker.await;
        result
    }

    /// Waits until the server stops on its own (it does not, short of an error).
    pub async fn wait(self) -> std::io::Result<()> {
        self.server.await.unwrap_or_else(|e| Err(std::io::Error::other(e)))
    }
}

/// Opens the data directory, recovers existing sessions and starts serving
/// on `addr`. Port 0 picks a free port.
pub async fn start(addr: &str, config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<RunningService, ServiceError> {
    let (registry, recovered) = Registry::open(&config.data_dir, clock)?;
    let registry = Arc::new(registry);
    // catch up on prompts that came due while the server was down
    registry.tick_all();

    let listener = TcpListener::bind(addr).await.map_err(|source| ServiceError::Bind {
        addr: addr.to_string(),
        source,
    })?;
    let local = listener.local_addr().map_err(|source| ServiceError::Bind {
        addr: addr.to_string(),
        source,
    })?;
    let app = http::AppState {
        registry: registry.clone(),
        heartbeat: config.heartbeat,
    };
    let router = http::router(app, config.ui_dir.clone());
    let (stop, stopped) = oneshot::channel::<()>();
    let server = tokio::spawn(async move {
        axum::serve(listener, router)
            .with_graceful_shutdown(async move {
                let _ = stopped.await;
            })
            .await
    });
    let ticker = registry::spawn_ticker(registry.clone(), config.tick);
    Ok(RunningService {
        addr: local,
        registry,
        recovered,
        stop: Some(stop),
        server,
        ticker,
    })
}
