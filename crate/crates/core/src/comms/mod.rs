//! Cooperative sensing and communication: protocol message schemas, the
//! coordination server (fleet status board + centralized perception), and
//! the transports: a deterministic in-process virtual network for
//! simulation, with the same operations exposed over HTTP in service mode.

pub mod messages;
pub mod server;
pub mod sim_net;
pub mod transport;

pub use messages::{
    Ack, DepthReading, FleetState, LatchCommandMsg, PerceptionRequest, PerceptionResult,
    ResolveStopMsg, ServerRequest, ServerResponse, StatusUpdate, StopCause, SystemState, TrackView,
    OPERATOR_SENDER,
};
pub use server::{AgentRegistration, CoordinationServer, ServerConfig};
pub use sim_net::{LinkConfig, SimTransport};
pub use transport::Transport;
