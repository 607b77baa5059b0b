//! The coordination server: the leader's status board (fleet state, stop
//! causes, latch command queues) colocated with the main perception server
//! (per-agent tracker state and depth pipeline), matching a deployment
//! where the heavy models run on one host computer.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use crate::comms::messages::{
    Ack, DepthReading, FleetState, LatchCommandMsg, PerceptionRequest, PerceptionResult,
    ResolveStopMsg, ServerRequest, ServerResponse, StatusUpdate, StopCause, SystemState, TrackView,
    OPERATOR_SENDER,
};
use crate::depth::{depth_at_track, CalibrationAnchor};
use crate::latch::CommandOrigin;
use crate::perception::{render_depth, render_detections, CameraModel, PerceptionConfig};
use crate::tracker::{Tracker, TrackerConfig};
use crate::world::{AgentId, Role, Tick, WorldSnapshot};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentRegistration {
    pub id: AgentId,
    pub role: Role,
    /// The agent this one follows (its perception labels that entity
    /// `LeaderMarker`); `None` for the leader and for obstacles.
    pub target: Option<AgentId>,
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub camera: CameraModel,
    pub perception: PerceptionConfig,
    pub tracker: TrackerConfig,
    pub agents: Vec<AgentRegistration>,
    pub seed: u64,
    /// Frames kept in the snapshot store.
    pub snapshot_retention: u64,
}

struct PerceptionLane {
    agent_id: AgentId,
    target: Option<AgentId>,
    tracker: Tracker,
    det_rng: ChaCha8Rng,
    depth_rng: ChaCha8Rng,
    /// Idempotence cache: replaying the request for the last processed tick
    /// returns the identical result without re-advancing the tracker.
    last: Option<(Tick, PerceptionResult)>,
}

pub struct CoordinationServer {
    camera: CameraModel,
    perception_cfg: PerceptionConfig,
    snapshot_retention: u64,
    registered: Vec<AgentRegistration>,
    status: Vec<StatusUpdate>,
    system: SystemState,
    unresolved: Vec<StopCause>,
    command_queues: Vec<(AgentId, Vec<LatchCommandMsg>)>,
    snapshots: BTreeMap<Tick, WorldSnapshot>,
    lanes: Vec<PerceptionLane>,
}

impl CoordinationServer {
    pub fn new(cfg: ServerConfig) -> Self {
        let lanes = cfg
            .agents
            .iter()
            .map(|a| PerceptionLane {
                agent_id: a.id.clone(),
                target: a.target.clone(),
                tracker: Tracker::new(cfg.tracker.clone()),
                det_rng: crate::rng::stream(cfg.seed, &["perception", a.id.as_str(), "detections"]),
                depth_rng: crate::rng::stream(cfg.seed, &["perception", a.id.as_str(), "depth"]),
                last: None,
            })
            .collect();
        let command_queues = cfg
            .agents
            .iter()
            .map(|a| (a.id.clone(), Vec::new()))
            .collect();
        CoordinationServer {
            camera: cfg.camera,
            perception_cfg: cfg.perception,
            snapshot_retention: cfg.snapshot_retention,
            registered: cfg.agents,
            status: Vec::new(),
            system: SystemState::initial(),
            unresolved: Vec::new(),
            command_queues,
            snapshots: BTreeMap::new(),
            lanes,
        }
    }

    fn is_registered(&self, id: &AgentId) -> bool {
        self.registered.iter().any(|a| &a.id == id)
    }

    fn leader_id(&self) -> Option<&AgentId> {
        self.registered
            .iter()
            .find(|a| a.role == Role::Leader)
            .map(|a| &a.id)
    }

    /// Current fleet status (admin read; no registration required).
    pub fn system_state(&self) -> SystemState {
        self.system.clone()
    }

    /// Count of unresolved obstacle reports (for the harness log).
    pub fn unresolved_reports(&self) -> usize {
        self.unresolved.len()
    }

    /// Latest status stored for an agent, if any.
    pub fn status_of(&self, id: &AgentId) -> Option<&StatusUpdate> {
        self.status.iter().find(|s| &s.agent_id == id)
    }

    /// Single entry point for every operation; both transports call this,
    /// so concurrent service-mode requests behave as if executed in their
    /// lock-acquisition order.
    pub fn handle(&mut self, req: ServerRequest) -> ServerResponse {
        match req {
            ServerRequest::SubmitStatus(update) => self.submit_status(update),
            ServerRequest::PollSystemState { agent_id } => {
                if !self.is_registered(&agent_id) {
                    return reject(format!("unknown agent {agent_id}"));
                }
                ServerResponse::SystemState(self.system.clone())
            }
            ServerRequest::RequestPerception(req) => self.request_perception(req),
            ServerRequest::SubmitLatchCommand(msg) => self.submit_latch_command(msg),
            ServerRequest::PollLatchCommands { agent_id } => {
                if !self.is_registered(&agent_id) {
                    return reject(format!("unknown agent {agent_id}"));
                }
                let queue = self
                    .command_queues
                    .iter_mut()
                    .find(|(id, _)| id == &agent_id)
                    .map(|(_, q)| std::mem::take(q))
                    .unwrap_or_default();
                ServerResponse::LatchCommands(queue)
            }
            ServerRequest::ResolveStop(msg) => self.resolve_stop(msg),
            ServerRequest::PublishFrame(snapshot) => {
                let tick = snapshot.tick;
                self.snapshots.insert(tick, snapshot);
                let keep_from = tick.saturating_sub(self.snapshot_retention);
                self.snapshots = self.snapshots.split_off(&keep_from);
                ServerResponse::Ack(Ack::ok())
            }
        }
    }

    fn submit_status(&mut self, update: StatusUpdate) -> ServerResponse {
        if !self.is_registered(&update.agent_id) {
            return reject(format!("unknown agent {}", update.agent_id));
        }
        if let Some(existing) = self
            .status
            .iter_mut()
            .find(|s| s.agent_id == update.agent_id)
        {
            if update.tick < existing.tick {
                return ServerResponse::Ack(Ack::stale());
            }
            *existing = update.clone();
        } else {
            self.status.push(update.clone());
        }

        if update.obstacle_seen
            && !self
                .unresolved
                .iter()
                .any(|c| c.agent_id == update.agent_id)
        {
            info!(agent = %update.agent_id, tick = update.tick, "obstacle report: fleet STOP");
            self.unresolved.push(StopCause {
                agent_id: update.agent_id.clone(),
                tick: update.tick,
            });
            self.bump();
        }
        ServerResponse::Ack(Ack::ok())
    }

    fn resolve_stop(&mut self, msg: ResolveStopMsg) -> ServerResponse {
        if !self.is_registered(&msg.agent_id) {
            return reject(format!("unknown agent {}", msg.agent_id));
        }
        let before = self.unresolved.len();
        self.unresolved.retain(|c| c.agent_id != msg.agent_id);
        if self.unresolved.len() == before {
            return reject(format!("no unresolved report from {}", msg.agent_id));
        }
        info!(agent = %msg.agent_id, tick = msg.tick, remaining = self.unresolved.len(), "stop resolved");
        self.bump();
        ServerResponse::SystemState(self.system.clone())
    }

    fn bump(&mut self) {
        self.system.version += 1;
        self.system.fleet_state = if self.unresolved.is_empty() {
            FleetState::Run
        } else {
            FleetState::Stop
        };
        self.system.cause = self.unresolved.first().cloned();
    }

    fn submit_latch_command(&mut self, msg: LatchCommandMsg) -> ServerResponse {
        let authentic = match msg.origin {
            CommandOrigin::Operator => msg.sender.as_str() == OPERATOR_SENDER,
            CommandOrigin::Leader => Some(&msg.sender) == self.leader_id(),
        };
        if !authentic {
            return reject(format!(
                "origin {:?} not authenticated for sender {}",
                msg.origin, msg.sender
            ));
        }
        let Some((_, queue)) = self
            .command_queues
            .iter_mut()
            .find(|(id, _)| id == &msg.target)
        else {
            return reject(format!("unknown target {}", msg.target));
        };
        queue.push(msg);
        ServerResponse::Ack(Ack::ok())
    }

    fn request_perception(&mut self, req: PerceptionRequest) -> ServerResponse {
        let Some(lane_idx) = self.lanes.iter().position(|l| l.agent_id == req.agent_id) else {
            return reject(format!("unknown agent {}", req.agent_id));
        };
        if let Some((tick, cached)) = &self.lanes[lane_idx].last {
            if *tick == req.tick {
                return ServerResponse::Perception(Box::new(cached.clone()));
            }
            if req.tick < *tick {
                return reject(format!("stale perception request for tick {}", req.tick));
            }
        }
        let Some(snapshot) = self.snapshots.get(&req.tick).cloned() else {
            return reject(format!("unknown snapshot {}", req.tick));
        };

        let lane = &mut self.lanes[lane_idx];
        let detections = render_detections(
            &snapshot,
            &lane.agent_id,
            lane.target.as_ref(),
            &self.camera,
            &self.perception_cfg,
            &mut lane.det_rng,
        );
        let events = lane.tracker.step(&detections);
        let (lo, hi) = self.perception_cfg.scale_range;
        let k = lane.depth_rng.random_range(lo..hi);
        let map = render_depth(&snapshot, &lane.agent_id, &self.camera, &self.perception_cfg, k);
        let readings = match CalibrationAnchor::from_map(&map) {
            Ok(anchor) => lane
                .tracker
                .tracks()
                .iter()
                .map(|t| DepthReading {
                    track_id: t.track_id,
                    range_m: depth_at_track(&map, &anchor, t, &self.camera),
                })
                .collect(),
            Err(e) => {
                debug!("calibration anchor unusable: {e}");
                lane.tracker
                    .tracks()
                    .iter()
                    .map(|t| DepthReading {
                        track_id: t.track_id,
                        range_m: None,
                    })
                    .collect()
            }
        };

        let result = PerceptionResult {
            agent_id: req.agent_id.clone(),
            tick: req.tick,
            detections,
            tracks: lane.tracker.tracks().iter().map(TrackView::from).collect(),
            events,
            readings,
        };
        lane.last = Some((req.tick, result.clone()));
        ServerResponse::Perception(Box::new(result))
    }
}

fn reject(reason: String) -> ServerResponse {
    debug!("request rejected: {reason}");
    ServerResponse::Rejected { reason }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latch::{CommandVerb, LatchMode};
    use crate::planner::PlanKind;
    use crate::world::{AgentState, Pose2D};

    fn server() -> CoordinationServer {
        CoordinationServer::new(ServerConfig {
            camera: CameraModel::default(),
            perception: PerceptionConfig {
                embedding_sigma: 0.0,
                pixel_sigma: 0.0,
                ..PerceptionConfig::default()
            },
            tracker: TrackerConfig::default(),
            agents: vec![
                AgentRegistration {
                    id: AgentId::from("leader"),
                    role: Role::Leader,
                    target: None,
                },
                AgentRegistration {
                    id: AgentId::from("f1"),
                    role: Role::Follower,
                    target: Some(AgentId::from("leader")),
                },
            ],
            seed: 11,
            snapshot_retention: 64,
        })
    }

    fn status(agent: &str, tick: Tick, obstacle_seen: bool) -> StatusUpdate {
        StatusUpdate {
            agent_id: AgentId::from(agent),
            tick,
            pose: Pose2D::new(0.0, 0.0, 0.0),
            latch_mode: LatchMode::Engaged,
            plan_kind: PlanKind::Follow,
            obstacle_seen,
        }
    }

    fn snapshot(tick: Tick) -> WorldSnapshot {
        WorldSnapshot {
            tick,
            entities: vec![
                AgentState::new(
                    AgentId::from("f1"),
                    Role::Follower,
                    Pose2D::new(0.0, 0.0, 0.0),
                    vec![1.0, 0.0],
                ),
                AgentState::new(
                    AgentId::from("leader"),
                    Role::Leader,
                    Pose2D::new(1.0, 0.0, 0.0),
                    vec![0.0, 1.0],
                ),
            ],
        }
    }

    #[test]
    fn status_stored_and_stale_flagged() {
        let mut s = server();
        assert_eq!(
            s.handle(ServerRequest::SubmitStatus(status("f1", 5, false))),
            ServerResponse::Ack(Ack::ok())
        );
        assert_eq!(
            s.handle(ServerRequest::SubmitStatus(status("f1", 3, false))),
            ServerResponse::Ack(Ack::stale())
        );
        assert_eq!(s.status_of(&AgentId::from("f1")).unwrap().tick, 5);
    }

    #[test]
    fn unknown_agent_rejected() {
        let mut s = server();
        assert!(matches!(
            s.handle(ServerRequest::SubmitStatus(status("ghost", 0, false))),
            ServerResponse::Rejected { .. }
        ));
        assert!(matches!(
            s.handle(ServerRequest::PollSystemState {
                agent_id: AgentId::from("ghost")
            }),
            ServerResponse::Rejected { .. }
        ));
    }

    #[test]
    fn obstacle_report_flips_to_stop_and_resolve_restores_run() {
        let mut s = server();
        assert_eq!(s.system_state().version, 0);
        assert_eq!(s.system_state().fleet_state, FleetState::Run);

        s.handle(ServerRequest::SubmitStatus(status("f1", 7, true)));
        let st = s.system_state();
        assert_eq!(st.fleet_state, FleetState::Stop);
        assert_eq!(st.version, 1);
        assert_eq!(st.cause.as_ref().unwrap().agent_id, AgentId::from("f1"));

        // Repeat reports from the same agent do not double-count.
        s.handle(ServerRequest::SubmitStatus(status("f1", 8, true)));
        assert_eq!(s.system_state().version, 1);

        let resp = s.handle(ServerRequest::ResolveStop(ResolveStopMsg {
            agent_id: AgentId::from("f1"),
            tick: 9,
        }));
        match resp {
            ServerResponse::SystemState(st) => {
                assert_eq!(st.fleet_state, FleetState::Run);
                assert_eq!(st.version, 2);
            }
            other => panic!("unexpected response {other:?}"),
        }
    }

    #[test]
    fn stop_holds_while_any_report_unresolved() {
        let mut s = server();
        s.handle(ServerRequest::SubmitStatus(status("f1", 1, true)));
        s.handle(ServerRequest::SubmitStatus(status("leader", 1, true)));
        s.handle(ServerRequest::ResolveStop(ResolveStopMsg {
            agent_id: AgentId::from("f1"),
            tick: 2,
        }));
        assert_eq!(s.system_state().fleet_state, FleetState::Stop);
        s.handle(ServerRequest::ResolveStop(ResolveStopMsg {
            agent_id: AgentId::from("leader"),
            tick: 3,
        }));
        assert_eq!(s.system_state().fleet_state, FleetState::Run);
    }

    #[test]
    fn resolve_without_report_rejected() {
        let mut s = server();
        assert!(matches!(
            s.handle(ServerRequest::ResolveStop(ResolveStopMsg {
                agent_id: AgentId::from("f1"),
                tick: 0,
            })),
            ServerResponse::Rejected { .. }
        ));
    }

    #[test]
    fn resolve_then_new_report_stops_again_with_new_cause() {
        let mut s = server();
        s.handle(ServerRequest::SubmitStatus(status("f1", 1, true)));
        s.handle(ServerRequest::ResolveStop(ResolveStopMsg {
            agent_id: AgentId::from("f1"),
            tick: 2,
        }));
        s.handle(ServerRequest::SubmitStatus(status("leader", 3, true)));
        let st = s.system_state();
        assert_eq!(st.fleet_state, FleetState::Stop);
        assert_eq!(st.cause.unwrap().agent_id, AgentId::from("leader"));
        assert_eq!(st.version, 3);
    }

    #[test]
    fn latch_command_origin_authentication() {
        let mut s = server();
        let ok = LatchCommandMsg {
            sender: AgentId::from(OPERATOR_SENDER),
            target: AgentId::from("f1"),
            verb: CommandVerb::Engage,
            origin: CommandOrigin::Operator,
            tick: 0,
        };
        assert_eq!(
            s.handle(ServerRequest::SubmitLatchCommand(ok.clone())),
            ServerResponse::Ack(Ack::ok())
        );
        // Leader origin must come from the registered leader.
        let spoofed = LatchCommandMsg {
            sender: AgentId::from("f1"),
            origin: CommandOrigin::Leader,
            ..ok
        };
        assert!(matches!(
            s.handle(ServerRequest::SubmitLatchCommand(spoofed)),
            ServerResponse::Rejected { .. }
        ));

        match s.handle(ServerRequest::PollLatchCommands {
            agent_id: AgentId::from("f1"),
        }) {
            ServerResponse::LatchCommands(cmds) => assert_eq!(cmds.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
        // Queue drained.
        match s.handle(ServerRequest::PollLatchCommands {
            agent_id: AgentId::from("f1"),
        }) {
            ServerResponse::LatchCommands(cmds) => assert!(cmds.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn perception_runs_and_replays_idempotently() {
        let mut s = server();
        s.handle(ServerRequest::PublishFrame(snapshot(0)));
        let req = PerceptionRequest {
            agent_id: AgentId::from("f1"),
            tick: 0,
        };
        let first = s.handle(ServerRequest::RequestPerception(req.clone()));
        let second = s.handle(ServerRequest::RequestPerception(req));
        assert_eq!(first, second);
        match first {
            ServerResponse::Perception(r) => {
                assert_eq!(r.tracks.len(), 1);
                assert_eq!(r.tracks[0].class_label, crate::perception::ClassLabel::LeaderMarker);
                assert!(r.readings[0].range_m.is_some());
                let range = r.readings[0].range_m.unwrap();
                assert!((range - 1.0).abs() < 0.05, "range {range} should be ~1.0");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn perception_unknown_snapshot_rejected() {
        let mut s = server();
        assert!(matches!(
            s.handle(ServerRequest::RequestPerception(PerceptionRequest {
                agent_id: AgentId::from("f1"),
                tick: 99,
            })),
            ServerResponse::Rejected { .. }
        ));
    }
}
