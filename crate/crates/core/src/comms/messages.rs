//! Wire message schemas. Bodies serialize to canonical JSON with fields in
//! declaration order, so serialize -> deserialize is the identity and equal
//! messages serialize to identical bytes.

use serde::{Deserialize, Serialize};

use crate::latch::{CommandOrigin, CommandVerb, LatchMode};
use crate::perception::{ClassLabel, Detection};
use crate::planner::PlanKind;
use crate::tracker::{Track, TrackEvent};
use crate::world::{AgentId, Pose2D, Tick, WorldSnapshot};

/// Sender id carried by operator-originated messages (console / harness).
pub const OPERATOR_SENDER: &str = "operator";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FleetState {
    Run,
    Stop,
}

impl std::fmt::Display for FleetState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FleetState::Run => "RUN",
            FleetState::Stop => "STOP",
        })
    }
}

/// Per-agent heartbeat stored on the leader's status board.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusUpdate {
    pub agent_id: AgentId,
    pub tick: Tick,
    pub pose: Pose2D,
    pub latch_mode: LatchMode,
    pub plan_kind: PlanKind,
    pub obstacle_seen: bool,
}

/// The obstacle report that put the fleet into STOP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopCause {
    pub agent_id: AgentId,
    pub tick: Tick,
}

/// Shared fleet status distributed to every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub fleet_state: FleetState,
    pub cause: Option<StopCause>,
    /// Monotone counter, bumped on every change.
    pub version: u64,
}

impl SystemState {
    pub fn initial() -> Self {
        SystemState {
            fleet_state: FleetState::Run,
            cause: None,
            version: 0,
        }
    }
}

/// Ask the main server to run the perception stack on a registered frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionRequest {
    pub agent_id: AgentId,
    /// Frame handle; in simulation the snapshot id equals the tick.
    pub tick: Tick,
}

/// Serializable view of a server-side track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackView {
    pub track_id: u64,
    pub class_label: ClassLabel,
    pub x_c: f64,
    pub y_c: f64,
    pub s: f64,
    pub a: f64,
    pub frames_since_update: u64,
    pub hits: u64,
}

impl From<&Track> for TrackView {
    fn from(t: &Track) -> Self {
        TrackView {
            track_id: t.track_id,
            class_label: t.class_label,
            x_c: t.kf.mean[0],
            y_c: t.kf.mean[1],
            s: t.kf.mean[2],
            a: t.kf.mean[3],
            frames_since_update: t.frames_since_update,
            hits: t.hits,
        }
    }
}

/// Calibrated range for one track; `None` when the centroid fell outside
/// the interpolable depth map area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthReading {
    pub track_id: u64,
    pub range_m: Option<f64>,
}

/// Everything the perception stack produced for one agent at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionResult {
    pub agent_id: AgentId,
    pub tick: Tick,
    pub detections: Vec<Detection>,
    pub tracks: Vec<TrackView>,
    pub events: Vec<TrackEvent>,
    pub readings: Vec<DepthReading>,
}

/// Engage/disengage request addressed to a follower's latch. The origin is
/// authenticated against the sender id by the server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatchCommandMsg {
    pub sender: AgentId,
    pub target: AgentId,
    pub verb: CommandVerb,
    pub origin: CommandOrigin,
    pub tick: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolveStopMsg {
    pub agent_id: AgentId,
    pub tick: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub ok: bool,
    /// Set when a status update carried a tick older than the stored one.
    pub stale: bool,
}

impl Ack {
    pub fn ok() -> Self {
        Ack {
            ok: true,
            stale: false,
        }
    }

    pub fn stale() -> Self {
        Ack {
            ok: true,
            stale: true,
        }
    }
}

/// Union of every operation the server accepts, in both transports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ServerRequest {
    SubmitStatus(StatusUpdate),
    PollSystemState { agent_id: AgentId },
    RequestPerception(PerceptionRequest),
    SubmitLatchCommand(LatchCommandMsg),
    PollLatchCommands { agent_id: AgentId },
    ResolveStop(ResolveStopMsg),
    PublishFrame(WorldSnapshot),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "body", rename_all = "snake_case")]
pub enum ServerResponse {
    Ack(Ack),
    SystemState(SystemState),
    Perception(Box<PerceptionResult>),
    LatchCommands(Vec<LatchCommandMsg>),
    Rejected { reason: String },
}
