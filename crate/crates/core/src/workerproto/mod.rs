//! Worker protocol v1: HTTP/1.1 POST with JSON bodies on `/v1/apply`,
//! `/v1/score`, `/v1/health` and `/v1/agent`. Images travel as base64 PNG.

mod client;
pub mod testing;
mod types;

pub use client::{ProtoError, WorkerClient, DEFAULT_TIMEOUT};
pub use types::*;
