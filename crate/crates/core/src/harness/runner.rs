//! The tick loop: scenario events, frame publication, message delivery,
//! the scripted leader, the follower agents, world integration, and the
//! CSV/meta/summary artifacts.

use std::path::{Path, PathBuf};

use thiserror::Error;
use tracing::info;

use crate::comms::messages::{
    LatchCommandMsg, ServerRequest, StatusUpdate, SystemState, OPERATOR_SENDER,
};
use crate::comms::server::{AgentRegistration, CoordinationServer, ServerConfig};
use crate::comms::sim_net::SimTransport;
use crate::comms::transport::Transport;
use crate::comms::FleetState;
use crate::harness::agent::{AgentTickLog, FollowerAgent};
use crate::harness::log::{
    csv_header, fmt_bool, fmt_f64, fmt_latch_events, fmt_latch_mode, fmt_track_events, LogError,
    LogTable, MetaAgent, RunMeta,
};
use crate::harness::metrics::{compute_metrics, RunMetrics};
use crate::latch::{CommandOrigin, LatchMode};
use crate::planner::PlanKind;
use crate::scenario::{LeaderScript, Scenario};
use crate::world::{
    random_unit_embedding, ActuatorLimits, AgentId, AgentState, Pose2D, Role, Tick,
    VelocityCommand, World,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("log error: {0}")]
    Log(#[from] LogError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("scenario has no leader")]
    NoLeader,
}

/// Paths produced by a run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub csv_path: PathBuf,
    pub meta_path: PathBuf,
    pub summary_path: PathBuf,
    pub metrics: RunMetrics,
}

struct LeaderDriver {
    script: LeaderScript,
    next_waypoint: usize,
}

impl LeaderDriver {
    fn new(script: LeaderScript) -> Self {
        LeaderDriver {
            script,
            next_waypoint: 0,
        }
    }

    fn command(&mut self, pose: &Pose2D, halted: bool, limits: &ActuatorLimits, tick: Tick) -> VelocityCommand {
        if halted {
            return VelocityCommand::zero(tick);
        }
        while self.next_waypoint < self.script.waypoints.len() {
            let wp = self.script.waypoints[self.next_waypoint];
            let dist = (wp[0] - pose.x).hypot(wp[1] - pose.y);
            if dist <= self.script.reach_tolerance {
                self.next_waypoint += 1;
            } else {
                break;
            }
        }
        let Some(wp) = self.script.waypoints.get(self.next_waypoint) else {
            return VelocityCommand::zero(tick);
        };
        let target = Pose2D::new(wp[0], wp[1], 0.0);
        let bearing = pose.bearing_to(&target);
        VelocityCommand {
            linear: self.script.speed.clamp(-limits.v_max, limits.v_max),
            angular: (self.script.heading_gain * bearing).clamp(-limits.omega_max, limits.omega_max),
            tick,
        }
    }
}

/// Build the coordination server for a scenario (also used by service mode).
pub fn build_server(scenario: &Scenario) -> CoordinationServer {
    let registrations: Vec<AgentRegistration> = scenario
        .agents
        .iter()
        .map(|a| AgentRegistration {
            id: AgentId::new(a.id.clone()),
            role: a.role,
            target: a.target.clone().map(AgentId::new),
        })
        .collect();
    CoordinationServer::new(ServerConfig {
        camera: scenario.camera.camera_model(),
        perception: scenario.perception_config(),
        tracker: scenario.tracker.apply(scenario.dt),
        agents: registrations,
        seed: scenario.seed,
        snapshot_retention: 64,
    })
}

/// Build the in-process transport for a scenario.
pub fn build_sim_transport(scenario: &Scenario) -> SimTransport {
    let agents: Vec<AgentId> = scenario
        .agents
        .iter()
        .map(|a| AgentId::new(a.id.clone()))
        .collect();
    SimTransport::new(
        build_server(scenario),
        &agents,
        scenario.network.link_config(),
        scenario.seed,
    )
}

fn marker(scenario: &Scenario, id: &str) -> Vec<f64> {
    let mut rng = crate::rng::stream(scenario.seed, &["marker", id]);
    random_unit_embedding(scenario.noise.embedding_dim, &mut rng)
}

fn meta_agents(scenario: &Scenario) -> Vec<MetaAgent> {
    let mut agents: Vec<MetaAgent> = scenario
        .agents
        .iter()
        .map(|a| MetaAgent {
            id: a.id.clone(),
            role: a.role,
            target: a.target.clone(),
        })
        .collect();
    agents.extend(scenario.obstacles.iter().map(|o| MetaAgent {
        id: o.id.clone(),
        role: Role::Obstacle,
        target: None,
    }));
    agents
}

/// Execute a scenario over the given transport and write `log.csv`,
/// `meta.json`, and `summary.json` into `out_dir`. The metrics are computed
/// by re-reading the written CSV, so `replay-check` recomputes exactly the
/// same numbers.
pub fn run(
    scenario: &Scenario,
    transport: &mut dyn Transport,
    transport_name: &str,
    out_dir: &Path,
) -> Result<RunArtifacts, HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("log.csv");
    let meta_path = out_dir.join("meta.json");
    let summary_path = out_dir.join("summary.json");

    let limits = scenario.limits;
    let mut world = World::new(scenario.dt, limits, scenario.noise.imu_sigma, scenario.seed);
    for spec in &scenario.agents {
        let mut state = AgentState::new(
            AgentId::new(spec.id.clone()),
            spec.role,
            Pose2D::new(spec.pose[0], spec.pose[1], spec.pose[2]),
            marker(scenario, &spec.id),
        );
        state.half_width = spec.half_width;
        state.half_height = spec.half_height;
        world.add_agent(state);
    }

    let leader_spec = scenario
        .agents
        .iter()
        .find(|a| a.role == Role::Leader)
        .ok_or(HarnessError::NoLeader)?;
    let leader_id = AgentId::new(leader_spec.id.clone());
    let mut driver = LeaderDriver::new(scenario.leader_script.clone());

    let camera = scenario.camera.camera_model();
    let mut followers: Vec<FollowerAgent> = scenario
        .agents
        .iter()
        .filter(|a| a.role == Role::Follower)
        .map(|a| {
            FollowerAgent::new(
                AgentId::new(a.id.clone()),
                camera,
                scenario.latch,
                scenario.planner.apply(),
                scenario.controller.apply(),
                scenario.network.poll_period,
            )
        })
        .collect();

    let agents_meta = meta_agents(scenario);
    let columns = csv_header(&agents_meta);
    let meta = RunMeta {
        scenario_name: scenario.name.clone(),
        seed: scenario.seed,
        transport: transport_name.to_owned(),
        dt: scenario.dt,
        duration: scenario.duration,
        desired_range: scenario.planner.apply().desired_range,
        band: scenario.planner.apply().linear_threshold,
        convergence_hold: 200,
        latency: scenario.network.latency,
        jitter: scenario.network.jitter,
        poll_period: scenario.network.poll_period,
        max_age: scenario.tracker.apply(scenario.dt).max_age,
        latch: scenario.latch,
        agents: agents_meta.clone(),
        columns: columns.clone(),
    };
    meta.write(&meta_path)?;

    let mut writer = csv::Writer::from_path(&csv_path)?;
    writer.write_record(&columns)?;

    // The leader halts on the fleet state it saw at the end of the previous
    // tick (it hosts the status board, so this is its own read).
    let mut last_server_state = SystemState::initial();

    for tick in 0..scenario.duration {
        for o in &scenario.obstacles {
            if o.spawn_tick == tick {
                let mut state = AgentState::new(
                    AgentId::new(o.id.clone()),
                    Role::Obstacle,
                    Pose2D::new(o.pose[0], o.pose[1], o.pose[2]),
                    marker(scenario, &o.id),
                );
                state.half_width = o.half_width;
                state.half_height = o.half_height;
                world.add_agent(state);
                info!(tick, id = %o.id, "obstacle spawned");
            }
            if o.remove_tick == Some(tick) {
                world.remove_agent(&AgentId::new(o.id.clone()));
                info!(tick, id = %o.id, "obstacle removed");
            }
        }

        let snapshot = world.snapshot();
        transport.admin_submit(ServerRequest::PublishFrame(snapshot.clone()));

        for entry in scenario.latch_schedule.iter().filter(|e| e.tick == tick) {
            let sender = match entry.origin {
                CommandOrigin::Operator => AgentId::from(OPERATOR_SENDER),
                CommandOrigin::Leader => leader_id.clone(),
            };
            transport.admin_submit(ServerRequest::SubmitLatchCommand(LatchCommandMsg {
                sender,
                target: AgentId::new(entry.target.clone()),
                verb: entry.verb,
                origin: entry.origin,
                tick,
            }));
        }

        transport.advance(tick);

        let leader_pose = snapshot
            .entity(&leader_id)
            .map(|e| e.pose)
            .expect("leader exists");
        let leader_halted = last_server_state.fleet_state == FleetState::Stop;
        let leader_cmd = driver.command(&leader_pose, leader_halted, &limits, tick);
        transport.send(
            &leader_id,
            ServerRequest::SubmitStatus(StatusUpdate {
                agent_id: leader_id.clone(),
                tick,
                pose: leader_pose,
                latch_mode: LatchMode::Disengaged,
                plan_kind: PlanKind::Idle,
                obstacle_seen: false,
            }),
            tick,
        );

        let mut commands: Vec<(AgentId, VelocityCommand)> = vec![(leader_id.clone(), leader_cmd)];
        let mut follower_logs: Vec<(AgentId, AgentTickLog)> = Vec::new();
        for follower in &mut followers {
            let own_pose = snapshot
                .entity(&follower.id)
                .map(|e| e.pose)
                .expect("follower exists");
            let log = follower.step(transport, tick, own_pose, &limits, scenario.dt);
            commands.push((follower.id.clone(), log.command));
            follower_logs.push((follower.id.clone(), log));
        }

        // Post-agent server state: this row reflects everything that
        // reached the server during this tick.
        let server_state = transport.admin_system_state();

        let mut row: Vec<String> = vec![
            tick.to_string(),
            server_state.fleet_state.to_string(),
            server_state.version.to_string(),
            server_state
                .cause
                .as_ref()
                .map(|c| c.agent_id.to_string())
                .unwrap_or_default(),
        ];
        for agent in &agents_meta {
            let id = AgentId::new(agent.id.clone());
            let entity = snapshot.entity(&id);
            match entity {
                Some(e) => {
                    row.push(fmt_f64(e.pose.x));
                    row.push(fmt_f64(e.pose.y));
                    row.push(fmt_f64(e.pose.theta));
                }
                None => {
                    row.extend([String::new(), String::new(), String::new()]);
                }
            }
            let cmd = commands.iter().find(|(cid, _)| cid == &id).map(|(_, c)| c);
            match (entity.is_some(), cmd) {
                (true, Some(c)) => {
                    row.push(fmt_f64(c.linear));
                    row.push(fmt_f64(c.angular));
                }
                (true, None) => {
                    // Present but uncommanded (obstacles hold position).
                    row.push(fmt_f64(0.0));
                    row.push(fmt_f64(0.0));
                }
                (false, _) => row.extend([String::new(), String::new()]),
            }
            if agent.role == Role::Follower {
                let log = follower_logs
                    .iter()
                    .find(|(fid, _)| fid == &id)
                    .map(|(_, l)| l)
                    .expect("follower log exists");
                row.push(fmt_latch_mode(log.latch_mode).to_owned());
                row.push(log.plan.kind.to_string());
                row.push(
                    log.plan
                        .target_track_id
                        .map(|t| t.to_string())
                        .unwrap_or_default(),
                );
                row.push(log.range.map(fmt_f64).unwrap_or_default());
                row.push(fmt_bool(log.obstacle_seen).to_owned());
                match &log.observed_state {
                    Some((state, version)) => {
                        row.push(state.to_string());
                        row.push(version.to_string());
                    }
                    None => row.extend([String::new(), String::new()]),
                }
                row.push(fmt_bool(log.conditions.leader_recognized).to_owned());
                row.push(fmt_bool(log.conditions.comms_healthy).to_owned());
                row.push(fmt_bool(log.conditions.depth_valid).to_owned());
                row.push(
                    log.latch_cmd
                        .map(|c| format!("{:?}:{:?}", c.verb, c.origin).to_lowercase())
                        .unwrap_or_default(),
                );
                row.push(fmt_latch_events(&log.latch_events));
                row.push(fmt_track_events(&log.track_events));
            }
        }
        writer.write_record(&row)?;

        last_server_state = server_state;
        world.step(&commands);
    }
    writer.flush()?;
    drop(writer);

    let table = LogTable::read(&csv_path)?;
    let metrics = compute_metrics(&table, &meta)?;
    let summary = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    std::fs::write(&summary_path, summary)?;
    info!(scenario = %scenario.name, transport = transport_name, "run complete");

    Ok(RunArtifacts {
        csv_path,
        meta_path,
        summary_path,
        metrics,
    })
}
