//! Service mode: the coordination server exposed over HTTP, and the
//! blocking client transport the tick loop uses to drive it. Endpoints and
//! body schemas mirror the in-process operations one-to-one, so a run over
//! HTTP produces the same event sequences as a zero-latency simulated link.

pub mod server;
pub mod transport;

pub use server::{serve, ServerHandle};
pub use transport::HttpTransport;

use serde::{Deserialize, Serialize};

/// Body returned with every 4xx rejection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub reason: String,
}
