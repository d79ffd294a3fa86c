//! Trace repository: bearer-token auth with upload/read scopes, multipart
//! uploads stored by content hash, metadata in sqlite.

pub mod auth;
pub mod blob;
pub mod client;
pub mod error;
pub mod meta;
pub mod server;

pub use auth::{ClientEntry, Scope};
pub use client::{CloudClient, CloudError};
pub use error::ApiError;
pub use meta::{ListFilter, TraceMetadata};
pub use server::{spawn, CloudConfig, Repository, RunningServer, UploadReceipt};
