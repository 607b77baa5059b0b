//! Scenario files: agents and initial poses, the leader's waypoint script,
//! the obstacle injection schedule, scripted latch commands, network
//! parameters, and noise seeds. A scenario plus a seed fully determines a
//! run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::sim_net::LinkConfig;
use crate::controller::ControllerGains;
use crate::latch::{CommandOrigin, CommandVerb, LatchConfig};
use crate::perception::{CameraModel, PerceptionConfig};
use crate::planner::PlannerConfig;
use crate::tracker::TrackerConfig;
use crate::world::{ActuatorLimits, Role, Tick};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: String,
    pub role: Role,
    /// [x, y, theta]
    pub pose: [f64; 3],
    /// Agent this one follows; required for followers.
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_half_height")]
    pub half_height: f64,
}

fn default_half_width() -> f64 {
    0.10
}

fn default_half_height() -> f64 {
    0.075
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub id: String,
    pub spawn_tick: Tick,
    /// Absent means the obstacle stays until the end of the run.
    #[serde(default)]
    pub remove_tick: Option<Tick>,
    pub pose: [f64; 3],
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_half_width")]
    pub half_height: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatchScheduleEntry {
    pub tick: Tick,
    pub target: String,
    pub verb: CommandVerb,
    #[serde(default = "default_origin")]
    pub origin: CommandOrigin,
}

fn default_origin() -> CommandOrigin {
    CommandOrigin::Operator
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeaderScript {
    /// Constant cruise speed, m/s.
    pub speed: f64,
    /// Waypoints visited in order; the leader holds position after the last.
    pub waypoints: Vec<[f64; 2]>,
    /// Heading gain used to steer toward the active waypoint.
    #[serde(default = "default_heading_gain")]
    pub heading_gain: f64,
    /// A waypoint closer than this is considered reached.
    #[serde(default = "default_reach_tolerance")]
    pub reach_tolerance: f64,
}

fn default_heading_gain() -> f64 {
    2.0
}

fn default_reach_tolerance() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkSpec {
    #[serde(default)]
    pub latency: u64,
    #[serde(default)]
    pub jitter: u64,
    #[serde(default)]
    pub drop_prob: f64,
    #[serde(default = "default_poll_period")]
    pub poll_period: u64,
    #[serde(default = "default_true")]
    pub fifo: bool,
}

fn default_poll_period() -> u64 {
    2
}

fn default_true() -> bool {
    true
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            latency: 0,
            jitter: 0,
            drop_prob: 0.0,
            poll_period: default_poll_period(),
            fifo: true,
        }
    }
}

impl NetworkSpec {
    pub fn link_config(&self) -> LinkConfig {
        LinkConfig {
            latency: self.latency,
            jitter: self.jitter,
            drop_prob: self.drop_prob,
            fifo: self.fifo,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default = "default_embedding_sigma")]
    pub embedding_sigma: f64,
    #[serde(default = "default_pixel_sigma")]
    pub pixel_sigma: f64,
    #[serde(default = "default_imu_sigma")]
    pub imu_sigma: f64,
    /// Embedding dimension for synthetic markers.
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
}

fn default_embedding_sigma() -> f64 {
    0.05
}

fn default_pixel_sigma() -> f64 {
    0.5
}

fn default_imu_sigma() -> f64 {
    0.01
}

fn default_embedding_dim() -> usize {
    16
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            embedding_sigma: default_embedding_sigma(),
            pixel_sigma: default_pixel_sigma(),
            imu_sigma: default_imu_sigma(),
            embedding_dim: default_embedding_dim(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraSpec {
    #[serde(default = "default_image_width")]
    pub image_width: u32,
    #[serde(default = "default_image_height")]
    pub image_height: u32,
    #[serde(default = "default_hfov_deg")]
    pub hfov_deg: f64,
    #[serde(default = "default_mount_height")]
    pub mount_height: f64,
}

fn default_image_width() -> u32 {
    320
}

fn default_image_height() -> u32 {
    240
}

fn default_hfov_deg() -> f64 {
    90.0
}

fn default_mount_height() -> f64 {
    0.12
}

impl Default for CameraSpec {
    fn default() -> Self {
        CameraSpec {
            image_width: default_image_width(),
            image_height: default_image_height(),
            hfov_deg: default_hfov_deg(),
            mount_height: default_mount_height(),
        }
    }
}

impl CameraSpec {
    pub fn camera_model(&self) -> CameraModel {
        CameraModel {
            image_width: self.image_width,
            image_height: self.image_height,
            hfov: self.hfov_deg.to_radians(),
            mount_height: self.mount_height,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub duration: Tick,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub seed: u64,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub latch_schedule: Vec<LatchScheduleEntry>,
    pub leader_script: LeaderScript,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub camera: CameraSpec,
    #[serde(default)]
    pub limits: ActuatorLimits,
    #[serde(default)]
    pub tracker: TrackerOverrides,
    #[serde(default)]
    pub controller: ControllerOverrides,
    #[serde(default)]
    pub latch: LatchConfig,
    #[serde(default)]
    pub planner: PlannerOverrides,
    #[serde(default)]
    pub depth: DepthOverrides,
}

fn default_dt() -> f64 {
    0.05
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrackerOverrides {
    pub match_threshold: Option<f64>,
    pub max_age: Option<u64>,
}

impl TrackerOverrides {
    pub fn apply(&self, dt: f64) -> TrackerConfig {
        let mut cfg = TrackerConfig {
            dt,
            ..TrackerConfig::default()
        };
        if let Some(v) = self.match_threshold {
            cfg.match_threshold = v;
        }
        if let Some(v) = self.max_age {
            cfg.max_age = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ControllerOverrides {
    pub k_lin: Option<f64>,
    pub k_ang: Option<f64>,
    pub deadband_lin: Option<f64>,
    pub deadband_ang: Option<f64>,
    pub slew_limit: Option<f64>,
}

impl ControllerOverrides {
    pub fn apply(&self) -> ControllerGains {
        let mut g = ControllerGains::default();
        if let Some(v) = self.k_lin {
            g.k_lin = v;
        }
        if let Some(v) = self.k_ang {
            g.k_ang = v;
        }
        if let Some(v) = self.deadband_lin {
            g.deadband_lin = v;
        }
        if let Some(v) = self.deadband_ang {
            g.deadband_ang = v;
        }
        if let Some(v) = self.slew_limit {
            g.slew_limit = v;
        }
        g
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PlannerOverrides {
    pub desired_range: Option<f64>,
    pub linear_threshold: Option<f64>,
    pub angular_threshold: Option<f64>,
    pub t_depth_hold: Option<u64>,
}

impl PlannerOverrides {
    pub fn apply(&self) -> PlannerConfig {
        let mut cfg = PlannerConfig::default();
        if let Some(v) = self.desired_range {
            cfg.desired_range = v;
        }
        if let Some(v) = self.linear_threshold {
            cfg.linear_threshold = v;
        }
        if let Some(v) = self.angular_threshold {
            cfg.angular_threshold = v;
        }
        if let Some(v) = self.t_depth_hold {
            cfg.t_depth_hold = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DepthOverrides {
    pub depth_width: Option<usize>,
    pub depth_height: Option<usize>,
    pub scale_min: Option<f64>,
    pub scale_max: Option<f64>,
    /// Stress mode: additive shift that breaks the ratio calibration.
    pub shift: Option<f64>,
    pub anchor_depth: Option<f64>,
    pub background_depth: Option<f64>,
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn perception_config(&self) -> PerceptionConfig {
        let mut cfg = PerceptionConfig {
            embedding_sigma: self.noise.embedding_sigma,
            pixel_sigma: self.noise.pixel_sigma,
            ..PerceptionConfig::default()
        };
        if let Some(v) = self.depth.depth_width {
            cfg.depth_width = v;
        }
        if let Some(v) = self.depth.depth_height {
            cfg.depth_height = v;
        }
        if let Some(v) = self.depth.scale_min {
            cfg.scale_range.0 = v;
        }
        if let Some(v) = self.depth.scale_max {
            cfg.scale_range.1 = v;
        }
        if let Some(v) = self.depth.shift {
            cfg.depth_shift = v;
        }
        if let Some(v) = self.depth.anchor_depth {
            cfg.anchor_depth = v;
        }
        if let Some(v) = self.depth.background_depth {
            cfg.background_depth = v;
        }
        cfg
    }

    /// Validate cross-field constraints, collecting every offending field.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut errors = Vec::new();
        if self.duration == 0 {
            errors.push("duration: must be > 0".to_owned());
        }
        if self.dt <= 0.0 || self.dt.is_nan() {
            errors.push(format!("dt: must be > 0, got {}", self.dt));
        }
        let leaders = self
            .agents
            .iter()
            .filter(|a| a.role == Role::Leader)
            .count();
        if leaders != 1 {
            errors.push(format!("agents: exactly one leader required, found {leaders}"));
        }
        let mut ids: Vec<&str> = self.agents.iter().map(|a| a.id.as_str()).collect();
        ids.extend(self.obstacles.iter().map(|o| o.id.as_str()));
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        for pair in sorted.windows(2) {
            if pair[0] == pair[1] {
                errors.push(format!("agents/obstacles: duplicate id {}", pair[0]));
            }
        }
        for agent in &self.agents {
            match agent.role {
                Role::Follower => match &agent.target {
                    None => errors.push(format!("agents.{}: follower needs a target", agent.id)),
                    Some(t) => {
                        if !self.agents.iter().any(|a| &a.id == t) {
                            errors.push(format!(
                                "agents.{}: target {t} is not a declared agent",
                                agent.id
                            ));
                        }
                    }
                },
                Role::Obstacle => errors.push(format!(
                    "agents.{}: scripted obstacles belong in [[obstacles]]",
                    agent.id
                )),
                Role::Leader => {}
            }
        }
        for o in &self.obstacles {
            if o.spawn_tick >= self.duration {
                errors.push(format!(
                    "obstacles.{}: spawn_tick {} >= duration {}",
                    o.id, o.spawn_tick, self.duration
                ));
            }
            if let Some(r) = o.remove_tick {
                if r <= o.spawn_tick {
                    errors.push(format!(
                        "obstacles.{}: remove_tick {} <= spawn_tick {}",
                        o.id, r, o.spawn_tick
                    ));
                }
                if r >= self.duration {
                    errors.push(format!(
                        "obstacles.{}: remove_tick {r} >= duration {}",
                        o.id, self.duration
                    ));
                }
            }
        }
        for (i, entry) in self.latch_schedule.iter().enumerate() {
            if entry.tick >= self.duration {
                errors.push(format!(
                    "latch_schedule[{i}]: tick {} >= duration {}",
                    entry.tick, self.duration
                ));
            }
            if !self.agents.iter().any(|a| a.id == entry.target) {
                errors.push(format!(
                    "latch_schedule[{i}]: target {} is not a declared agent",
                    entry.target
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.network.drop_prob) {
            errors.push(format!(
                "network.drop_prob: must be in [0, 1], got {}",
                self.network.drop_prob
            ));
        }
        if self.network.poll_period == 0 {
            errors.push("network.poll_period: must be >= 1".to_owned());
        }
        if !(self.camera.hfov_deg > 0.0 && self.camera.hfov_deg < 180.0) {
            errors.push(format!(
                "camera.hfov_deg: must be in (0, 180), got {}",
                self.camera.hfov_deg
            ));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(errors))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "mini"
duration = 100
seed = 7

[[agents]]
id = "leader"
role = "leader"
pose = [1.0, 0.0, 0.0]

[[agents]]
id = "f1"
role = "follower"
pose = [0.0, 0.0, 0.0]
target = "leader"

[leader_script]
speed = 0.2
waypoints = [[50.0, 0.0]]
"#;

    #[test]
    fn minimal_scenario_parses_with_defaults() {
        let s = Scenario::from_toml(MINIMAL).unwrap();
        assert_eq!(s.dt, 0.05);
        assert_eq!(s.network.poll_period, 2);
        assert_eq!(s.noise.embedding_dim, 16);
        assert_eq!(s.planner.apply().desired_range, 0.30);
        assert_eq!(s.latch.t_recog, 5);
    }

    #[test]
    fn validation_collects_all_offences() {
        let bad = r#"
name = "bad"
duration = 10
seed = 1

[[agents]]
id = "leader"
role = "leader"
pose = [0.0, 0.0, 0.0]

[[agents]]
id = "f1"
role = "follower"
pose = [0.0, 0.0, 0.0]

[[obstacles]]
id = "box"
spawn_tick = 50
pose = [1.0, 0.0, 0.0]

[[latch_schedule]]
tick = 99
target = "nobody"
verb = "engage"

[leader_script]
speed = 0.2
waypoints = []
"#;
        let err = Scenario::from_toml(bad).unwrap_err();
        match err {
            ScenarioError::Invalid(fields) => {
                assert!(fields.iter().any(|f| f.contains("f1")), "{fields:?}");
                assert!(fields.iter().any(|f| f.contains("spawn_tick")), "{fields:?}");
                assert!(fields.iter().any(|f| f.contains("latch_schedule[0]")), "{fields:?}");
                assert!(fields.len() >= 4, "{fields:?}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dup = MINIMAL.replace("id = \"f1\"", "id = \"leader\"");
        assert!(Scenario::from_toml(&dup).is_err());
    }
}
