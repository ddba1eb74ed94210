//! JSON-over-HTTP job service for the solver.
//!
//! | method | path | answer |
//! |---|---|---|
//! | `POST` | `/instances` | `201 {id}` for an instance or `{"generate": {n, seed, params?}}` |
//! | `GET` | `/instances/{id}` | stored instance record |
//! | `POST` | `/solve` | `202 {job_id}` for `{instance_id, method?, t_max?, alpha?, replicas?, seed?}` |
//! | `GET` | `/jobs/{id}` | job status, plus solution, schedules and costs once done |
//! | `POST` | `/whatif` | `202 {job_id}` for `{base_job_id, overrides}` |
//!
//! Unknown ids answer 404, invalid bodies or overrides 422, and a what-if on
//! a job that is not done 409. Every document carries `schema_version`.

pub mod api;
pub mod engine;
pub mod model;
pub mod store;

pub use api::router;
pub use engine::{Engine, EngineConfig};
pub use store::Store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Store(#[from] store::StoreError),
    #[error("server: {0}")]
    Io(#[from] std::io::Error),
}

/// Opens the store, starts the workers and serves until the process ends.
pub async fn serve(addr: SocketAddr, data_dir: PathBuf, config: EngineConfig) -> Result<(), ServeError> {
    let store = Arc::new(Store::open(data_dir)?);
    let engine = Engine::start(store, config);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(engine)).await?;
    Ok(())
}
