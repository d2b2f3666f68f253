//! HTTP/JSON service for interactive segmentation sessions.
//!
//! A session holds a frame pair, the backbone features of the current frame
//! (extracted once per frame) and the click set. Proposals are a pure
//! function of those, so the same clicks give the same masks whatever order
//! they arrived in.

pub mod api;
pub mod error;
pub mod session;
pub mod store;
pub mod wire;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use hyperseg_core::trainer::Model;
use hyperseg_core::{Error, Result};

pub use api::{router, AppContext, AppState};
pub use error::ApiError;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub store: PathBuf,
    /// Checkpoint directories; each is served under its directory name.
    pub checkpoints: Vec<PathBuf>,
    /// Resident bytes of loaded sessions before LRU unloading.
    pub memory_budget: usize,
    pub rank_by_clicks: bool,
}

pub fn build_state(config: &ServiceConfig) -> Result<AppState> {
    let mut models = BTreeMap::new();
    for dir in &config.checkpoints {
        let id = dir
            .canonicalize()
            .ok()
            .and_then(|d| d.file_name().map(|n| n.to_string_lossy().into_owned()))
            .ok_or_else(|| Error::Argument(format!("checkpoint {} has no directory name", dir.display())))?;
        let (model, _) = Model::load(dir)?;
        if models.insert(id.clone(), Arc::new(model)).is_some() {
            return Err(Error::Argument(format!("two checkpoints are named {id}")));
        }
    }
    Ok(Arc::new(AppContext {
        store: store::SessionStore::open(&config.store, config.memory_budget)?,
        models,
        rank_by_clicks: config.rank_by_clicks,
    }))
}

/// Binds `addr` and serves until `shutdown` resolves. Returns the bound
/// address through `on_bound` before serving.
pub async fn serve(
    state: AppState,
    addr: SocketAddr,
    on_bound: impl FnOnce(SocketAddr),
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
