//! JSON-over-HTTP facade for the packing pipeline.
//!
//! Filter rows are owned by clients and sent with every query; the server
//! keeps no per-client state beyond the experiment store.

mod error;
mod routes;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::AtomicUsize;
use std::sync::{Arc, Mutex, RwLock};

use axum::Router;
use packlab_core::par::Parallelism;
use packlab_core::store::Store;
use packlab_core::xfilter::Table;

pub use error::ApiError;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    store: Store,
    parallelism: Parallelism,
    static_dir: Option<PathBuf>,
    /// Progress counters of experiments running in this process.
    running: Mutex<HashMap<String, Arc<AtomicUsize>>>,
    /// Loaded metric tables of finished experiments.
    tables: RwLock<HashMap<String, Arc<Table>>>,
}

impl AppState {
    pub fn new(store: Store, parallelism: Parallelism) -> Self {
        AppState {
            inner: Arc::new(Inner {
                store,
                parallelism,
                static_dir: None,
                running: Mutex::new(HashMap::new()),
                tables: RwLock::new(HashMap::new()),
            }),
        }
    }

    /// Serve files under `dir` for every non-API path.
    pub fn with_static_dir(self, dir: impl Into<PathBuf>) -> Self {
        let mut inner = Arc::try_unwrap(self.inner).unwrap_or_else(|_| panic!("configure before sharing"));
        inner.static_dir = Some(dir.into());
        AppState { inner: Arc::new(inner) }
    }

    pub fn store(&self) -> &Store {
        &self.inner.store
    }

    /// True while a run started by this process has not finished.
    pub fn is_running(&self, id: &str) -> bool {
        self.inner.running.lock().expect("lock").contains_key(id)
    }
}

pub fn router(state: AppState) -> Router {
    routes::build(state)
}

pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
