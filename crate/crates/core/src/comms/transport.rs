//! Transport abstraction shared by the tick loop and the agents. Agents
//! issue operations and later drain whatever responses have arrived; with
//! zero-latency links (or over HTTP) the response is available on the same
//! tick, which is what makes both transports produce identical event
//! sequences.

use crate::comms::messages::{ServerRequest, ServerResponse, SystemState};
use crate::world::{AgentId, Tick};

pub trait Transport {
    /// Issue an operation on behalf of `from` at `tick`. Any response is
    /// delivered to that agent's inbox subject to the transport's latency
    /// and drop model.
    fn send(&mut self, from: &AgentId, req: ServerRequest, tick: Tick);

    /// Take every response that has arrived for `agent` by `tick`.
    fn drain(&mut self, agent: &AgentId, tick: Tick) -> Vec<ServerResponse>;

    /// Deliver in-flight messages due at `tick` (no-op over HTTP).
    fn advance(&mut self, tick: Tick);

    /// Out-of-band read of the fleet status, used by the harness for
    /// logging and for halting the scripted leader; not link-modeled.
    fn admin_system_state(&mut self) -> SystemState;

    /// Out-of-band operator submission (frame publication and scripted
    /// latch commands); synchronous, not link-modeled.
    fn admin_submit(&mut self, req: ServerRequest) -> ServerResponse;
}
