//! The follower agent: owns its latch, planner, controller, and the
//! client-side comms caches (fleet state view, latest perception result,
//! condition evidence timestamps). One `step` per tick, transport-agnostic.

use std::collections::VecDeque;

use crate::comms::messages::{
    FleetState, PerceptionRequest, PerceptionResult, ResolveStopMsg, ServerRequest,
    ServerResponse, StatusUpdate, SystemState,
};
use crate::comms::transport::Transport;
use crate::controller::{Controller, ControllerGains};
use crate::latch::{Latch, LatchCommand, LatchConfig, LatchEvent, LatchMode, TriggerConditions};
use crate::perception::{CameraModel, ClassLabel};
use crate::planner::{ObservedTrack, Plan, PlanTransition, Planner, PlannerConfig};
use crate::tracker::TrackEvent;
use crate::world::{ActuatorLimits, AgentId, Pose2D, Tick, VelocityCommand};

/// Everything one follower decided and observed during one tick, for the
/// CSV log.
#[derive(Debug, Clone)]
pub struct AgentTickLog {
    pub latch_mode: LatchMode,
    pub plan: Plan,
    pub command: VelocityCommand,
    pub conditions: TriggerConditions,
    pub observed_state: Option<(FleetState, u64)>,
    pub obstacle_seen: bool,
    pub range: Option<f64>,
    pub latch_cmd: Option<LatchCommand>,
    pub latch_events: Vec<LatchEvent>,
    pub plan_transition: Option<PlanTransition>,
    pub track_events: Vec<TrackEvent>,
}

pub struct FollowerAgent {
    pub id: AgentId,
    latch: Latch,
    planner: Planner,
    controller: Controller,
    camera: CameraModel,
    poll_period: u64,
    // Client-side comms caches.
    fleet: Option<SystemState>,
    perception: Option<PerceptionResult>,
    last_leader_fresh: Option<Tick>,
    last_depth_ok: Option<Tick>,
    last_state_obs: Option<Tick>,
    pending_cmds: VecDeque<LatchCommand>,
    reported_obstacle: bool,
}

impl FollowerAgent {
    pub fn new(
        id: AgentId,
        camera: CameraModel,
        latch_cfg: LatchConfig,
        planner_cfg: PlannerConfig,
        gains: ControllerGains,
        poll_period: u64,
    ) -> Self {
        FollowerAgent {
            id,
            latch: Latch::new(latch_cfg),
            planner: Planner::new(planner_cfg),
            controller: Controller::new(gains),
            camera,
            poll_period: poll_period.max(1),
            fleet: None,
            perception: None,
            last_leader_fresh: None,
            last_depth_ok: None,
            last_state_obs: None,
            pending_cmds: VecDeque::new(),
            reported_obstacle: false,
        }
    }

    pub fn latch_mode(&self) -> LatchMode {
        self.latch.mode()
    }

    fn within(last: Option<Tick>, tick: Tick, window: u64) -> bool {
        last.is_some_and(|t| tick.saturating_sub(t) <= window)
    }

    /// One tick: issue requests, ingest arrivals, gate through the latch,
    /// plan, and command. Issue order (perception, state poll, command
    /// poll) is fixed so both transports drive the server identically.
    pub fn step(
        &mut self,
        transport: &mut dyn Transport,
        tick: Tick,
        own_pose: Pose2D,
        limits: &ActuatorLimits,
        dt: f64,
    ) -> AgentTickLog {
        transport.send(
            &self.id,
            ServerRequest::RequestPerception(PerceptionRequest {
                agent_id: self.id.clone(),
                tick,
            }),
            tick,
        );
        if tick.is_multiple_of(self.poll_period) {
            transport.send(
                &self.id,
                ServerRequest::PollSystemState {
                    agent_id: self.id.clone(),
                },
                tick,
            );
        }
        transport.send(
            &self.id,
            ServerRequest::PollLatchCommands {
                agent_id: self.id.clone(),
            },
            tick,
        );

        let mut track_events = Vec::new();
        for response in transport.drain(&self.id, tick) {
            match response {
                ServerResponse::Perception(result) => {
                    let newer = self
                        .perception
                        .as_ref()
                        .is_none_or(|cur| result.tick > cur.tick);
                    if !newer {
                        continue;
                    }
                    let fresh_leader = result
                        .tracks
                        .iter()
                        .any(|t| t.class_label == ClassLabel::LeaderMarker && t.frames_since_update == 0);
                    if fresh_leader {
                        self.last_leader_fresh = Some(result.tick);
                    }
                    let leader_range_ok = result.tracks.iter().any(|t| {
                        t.class_label == ClassLabel::LeaderMarker
                            && result
                                .readings
                                .iter()
                                .any(|r| r.track_id == t.track_id && r.range_m.is_some())
                    });
                    if leader_range_ok {
                        self.last_depth_ok = Some(result.tick);
                    }
                    track_events.extend(result.events.iter().cloned());
                    self.perception = Some(*result);
                }
                ServerResponse::SystemState(state) => {
                    // Staleness guard: applied versions are non-decreasing.
                    let newer = self.fleet.as_ref().is_none_or(|cur| state.version >= cur.version);
                    if newer {
                        self.fleet = Some(state);
                    }
                    self.last_state_obs = Some(tick);
                }
                ServerResponse::LatchCommands(cmds) => {
                    for c in cmds {
                        self.pending_cmds.push_back(LatchCommand {
                            verb: c.verb,
                            origin: c.origin,
                            tick: c.tick,
                        });
                    }
                }
                ServerResponse::Ack(_) | ServerResponse::Rejected { .. } => {}
            }
        }

        let latch_cfg = *self.latch.config();
        let conditions = TriggerConditions {
            leader_recognized: Self::within(self.last_leader_fresh, tick, latch_cfg.t_recog),
            comms_healthy: Self::within(self.last_state_obs, tick, latch_cfg.t_comms),
            depth_valid: Self::within(self.last_depth_ok, tick, latch_cfg.t_depth),
        };

        // One command per tick; extras stay queued for later ticks.
        let latch_cmd = self.pending_cmds.pop_front();
        let latch_events = self.latch.step(latch_cmd.as_ref(), conditions, tick);

        let fleet_stop = self
            .fleet
            .as_ref()
            .is_some_and(|s| s.fleet_state == FleetState::Stop);
        let (tracks, ranges): (Vec<ObservedTrack>, Vec<(u64, Option<f64>)>) = match &self.perception
        {
            Some(result) => (
                result
                    .tracks
                    .iter()
                    .map(|t| ObservedTrack {
                        track_id: t.track_id,
                        class_label: t.class_label,
                        x_c: t.x_c,
                        y_c: t.y_c,
                        in_frame: t.frames_since_update == 0,
                    })
                    .collect(),
                result
                    .readings
                    .iter()
                    .map(|r| (r.track_id, r.range_m))
                    .collect(),
            ),
            None => (Vec::new(), Vec::new()),
        };

        let planner_out = self.planner.step(
            &tracks,
            &ranges,
            fleet_stop,
            self.latch.mode(),
            &self.camera,
            tick,
        );
        let command = self.controller.step(
            &planner_out.setpoint,
            &planner_out.deviations,
            self.latch.mode(),
            limits,
            dt,
            tick,
        );

        let obstacle_seen = tracks
            .iter()
            .any(|t| t.class_label == ClassLabel::Obstacle && t.in_frame);

        transport.send(
            &self.id,
            ServerRequest::SubmitStatus(StatusUpdate {
                agent_id: self.id.clone(),
                tick,
                pose: own_pose,
                latch_mode: self.latch.mode(),
                plan_kind: planner_out.plan.kind,
                obstacle_seen,
            }),
            tick,
        );
        if obstacle_seen {
            self.reported_obstacle = true;
        } else if self.reported_obstacle {
            transport.send(
                &self.id,
                ServerRequest::ResolveStop(ResolveStopMsg {
                    agent_id: self.id.clone(),
                    tick,
                }),
                tick,
            );
            self.reported_obstacle = false;
        }

        let range = planner_out
            .plan
            .target_track_id
            .and_then(|id| ranges.iter().find(|(t, _)| *t == id).and_then(|(_, r)| *r));

        AgentTickLog {
            latch_mode: self.latch.mode(),
            plan: planner_out.plan,
            command,
            conditions,
            observed_state: self.fleet.as_ref().map(|s| (s.fleet_state, s.version)),
            obstacle_seen,
            range,
            latch_cmd,
            latch_events,
            plan_transition: planner_out.transition,
            track_events,
        }
    }
}
