//! Labeling service: annotators edit generated commit messages while every editor change is
//! logged, so each submitted edit can be replayed from the generated message.
//!
//! Routes:
//!
//! | method | path                     | body                                  |
//! |--------|--------------------------|---------------------------------------|
//! | POST   | `/sessions`              | `{annotator_id, seed?}`               |
//! | GET    | `/sessions/{id}/task`    |                                       |
//! | POST   | `/sessions/{id}/events`  | `{message_id, events: [EditEvent]}`   |
//! | POST   | `/sessions/{id}/submit`  | `{message_id, final_text}`            |
//! | POST   | `/sessions/{id}/skip`    | `{message_id}`                        |
//! | GET    | `/export`                |                                       |

pub mod api;
pub mod events;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

pub use api::router;
pub use events::{apply_event, first_divergence, replay, EditEvent};
pub use store::{Ack, Export, SessionInfo, Store, StoreError, Submission, TaskView};

/// Serves until Ctrl-C.
pub async fn serve(store: Arc<Store>, bind: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// [`serve`] on a fresh multi-threaded runtime.
pub fn serve_blocking(store: Arc<Store>, bind: SocketAddr) -> std::io::Result<()> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve(store, bind))
}
