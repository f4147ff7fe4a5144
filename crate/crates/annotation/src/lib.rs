//! Backend of the annotation tool: a file-backed store of per-annotator
//! label tracks with optimistic versioning, and the HTTP routes over it.

mod routes;
mod store;

pub use routes::router;
pub use store::{Store, StoreError, TrackEntry, VideoListing};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
