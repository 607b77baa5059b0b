//! Ground-truth 2D world: differential-drive kinematics, the entity
//! registry (leader, followers, obstacles), and the simulation clock.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use tracing::debug;

pub type Tick = u64;

/// Identifies an agent (robot or obstacle) across the whole stack.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub String);

impl AgentId {
    pub fn new(id: impl Into<String>) -> Self {
        AgentId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        AgentId(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Leader,
    Follower,
    Obstacle,
}

/// Planar pose; `theta` is always normalized to `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2D {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    /// Euclidean distance between pose origins.
    pub fn distance_to(&self, other: &Pose2D) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }

    /// Bearing of `other` relative to this pose's heading, in `(-pi, pi]`.
    pub fn bearing_to(&self, other: &Pose2D) -> f64 {
        let world = (other.y - self.y).atan2(other.x - self.x);
        normalize_angle(world - self.theta)
    }
}

/// Normalize an angle into `(-pi, pi]`. Periodic and idempotent.
///
/// Non-finite input is a caller bug and is rejected by panic.
pub fn normalize_angle(theta: f64) -> f64 {
    assert!(theta.is_finite(), "angle must be finite, got {theta}");
    let r = theta.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Actuation request for one agent at one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand {
    /// m/s, positive forward.
    pub linear: f64,
    /// rad/s, positive counter-clockwise.
    pub angular: f64,
    pub tick: Tick,
}

impl VelocityCommand {
    pub fn zero(tick: Tick) -> Self {
        VelocityCommand {
            linear: 0.0,
            angular: 0.0,
            tick,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.linear == 0.0 && self.angular == 0.0
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ActuatorLimits {
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    #[serde(default = "default_omega_max")]
    pub omega_max: f64,
}

fn default_v_max() -> f64 {
    0.5
}

fn default_omega_max() -> f64 {
    2.0
}

impl Default for ActuatorLimits {
    fn default() -> Self {
        ActuatorLimits {
            v_max: default_v_max(),
            omega_max: default_omega_max(),
        }
    }
}

/// Ground-truth kinematic state of one simulated entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub role: Role,
    pub pose: Pose2D,
    pub linear_vel: f64,
    pub angular_vel: f64,
    /// Unit vector: the entity's ground-truth appearance identity.
    pub marker_embedding: Vec<f64>,
    /// Heading as reported by the (noisy) IMU.
    pub imu_heading: f64,
    /// Physical half-extent of the rear marker, meters.
    pub half_width: f64,
    pub half_height: f64,
}

impl AgentState {
    pub fn new(id: AgentId, role: Role, pose: Pose2D, marker_embedding: Vec<f64>) -> Self {
        let imu_heading = pose.theta;
        AgentState {
            id,
            role,
            pose,
            linear_vel: 0.0,
            angular_vel: 0.0,
            marker_embedding,
            imu_heading,
            half_width: 0.10,
            half_height: 0.075,
        }
    }
}

/// Fixed-step simulation clock. `dt` is constant for the whole run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimClock {
    pub tick: Tick,
    pub dt: f64,
}

impl SimClock {
    pub fn new(dt: f64) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        SimClock { tick: 0, dt }
    }

    pub fn advance(&mut self) {
        self.tick += 1;
    }
}

/// Euler step of the unicycle model. Commands outside the actuator limits
/// are clamped (and logged), never rejected.
pub fn step_kinematics(
    state: &AgentState,
    cmd: &VelocityCommand,
    limits: &ActuatorLimits,
    dt: f64,
) -> AgentState {
    assert!(dt > 0.0, "dt must be positive");
    let v = cmd.linear.clamp(-limits.v_max, limits.v_max);
    let w = cmd.angular.clamp(-limits.omega_max, limits.omega_max);
    if v != cmd.linear || w != cmd.angular {
        debug!(
            agent = %state.id,
            linear = cmd.linear,
            angular = cmd.angular,
            "command clamped to actuator limits"
        );
    }
    let mut next = state.clone();
    next.pose = Pose2D {
        x: state.pose.x + v * state.pose.theta.cos() * dt,
        y: state.pose.y + v * state.pose.theta.sin() * dt,
        theta: normalize_angle(state.pose.theta + w * dt),
    };
    next.linear_vel = v;
    next.angular_vel = w;
    next
}

/// Immutable value snapshot of the world at one tick; this is what the
/// perception stack (and, in service mode, the wire) consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSnapshot {
    pub tick: Tick,
    pub entities: Vec<AgentState>,
}

impl WorldSnapshot {
    pub fn entity(&self, id: &AgentId) -> Option<&AgentState> {
        self.entities.iter().find(|e| &e.id == id)
    }
}

/// The world owns all entity state; only the tick loop mutates it.
pub struct World {
    pub clock: SimClock,
    pub limits: ActuatorLimits,
    imu_sigma: f64,
    seed: u64,
    entries: Vec<Entry>,
}

struct Entry {
    state: AgentState,
    imu_rng: ChaCha8Rng,
}

impl World {
    pub fn new(dt: f64, limits: ActuatorLimits, imu_sigma: f64, seed: u64) -> Self {
        World {
            clock: SimClock::new(dt),
            limits,
            imu_sigma,
            seed,
            entries: Vec::new(),
        }
    }

    pub fn add_agent(&mut self, state: AgentState) {
        assert!(
            self.agent(&state.id).is_none(),
            "duplicate agent id {}",
            state.id
        );
        let imu_rng = crate::rng::stream(self.seed, &["imu", state.id.as_str()]);
        self.entries.push(Entry { state, imu_rng });
    }

    pub fn remove_agent(&mut self, id: &AgentId) -> bool {
        let before = self.entries.len();
        self.entries.retain(|e| &e.state.id != id);
        self.entries.len() != before
    }

    pub fn agent(&self, id: &AgentId) -> Option<&AgentState> {
        self.entries.iter().map(|e| &e.state).find(|s| &s.id == id)
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentState> {
        self.entries.iter().map(|e| &e.state)
    }

    pub fn snapshot(&self) -> WorldSnapshot {
        WorldSnapshot {
            tick: self.clock.tick,
            entities: self.entries.iter().map(|e| e.state.clone()).collect(),
        }
    }

    /// Advance every agent one tick. Agents without a command hold position.
    /// IMU headings are resampled from per-agent noise streams.
    pub fn step(&mut self, commands: &[(AgentId, VelocityCommand)]) {
        let dt = self.clock.dt;
        let limits = self.limits;
        let sigma = self.imu_sigma;
        for entry in &mut self.entries {
            let cmd = commands
                .iter()
                .find(|(id, _)| id == &entry.state.id)
                .map(|(_, c)| *c)
                .unwrap_or_else(|| VelocityCommand::zero(self.clock.tick));
            entry.state = step_kinematics(&entry.state, &cmd, &limits, dt);
            entry.state.imu_heading = if sigma > 0.0 {
                let noise = Normal::new(0.0, sigma).expect("valid sigma");
                normalize_angle(entry.state.pose.theta + noise.sample(&mut entry.imu_rng))
            } else {
                entry.state.pose.theta
            };
        }
        self.clock.advance();
    }
}

/// Random unit vector of dimension `dim` (a synthetic marker identity).
pub fn random_unit_embedding(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    assert!(dim > 0);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(pose: Pose2D) -> AgentState {
        AgentState::new(AgentId::from("a"), Role::Follower, pose, vec![1.0])
    }

    fn cmd(v: f64, w: f64) -> VelocityCommand {
        VelocityCommand {
            linear: v,
            angular: w,
            tick: 0,
        }
    }

    // Generous limits so the worked examples are not clamped.
    fn wide() -> ActuatorLimits {
        ActuatorLimits {
            v_max: 10.0,
            omega_max: 10.0,
        }
    }

    #[test]
    fn straight_line_step() {
        let s = step_kinematics(&agent(Pose2D::new(0.0, 0.0, 0.0)), &cmd(1.0, 0.0), &wide(), 1.0);
        assert_eq!(s.pose, Pose2D::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn axis_aligned_motion() {
        let s = step_kinematics(
            &agent(Pose2D::new(0.0, 0.0, PI / 2.0)),
            &cmd(2.0, 0.0),
            &wide(),
            0.5,
        );
        assert!((s.pose.x - 0.0).abs() < 1e-12);
        assert!((s.pose.y - 1.0).abs() < 1e-12);
        assert!((s.pose.theta - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn euler_step_with_turn() {
        // Hand evaluation: position uses the pre-update heading, then
        // theta' = normalize(0 + pi) = pi.
        let s = step_kinematics(&agent(Pose2D::new(0.0, 0.0, 0.0)), &cmd(1.0, PI), &wide(), 1.0);
        assert!((s.pose.x - 1.0).abs() < 1e-12);
        assert!((s.pose.y - 0.0).abs() < 1e-12);
        assert!((s.pose.theta - PI).abs() < 1e-12);
    }

    #[test]
    fn zero_command_is_identity_on_pose() {
        let start = Pose2D::new(3.0, -2.0, 1.25);
        let s = step_kinematics(&agent(start), &cmd(0.0, 0.0), &wide(), 0.05);
        assert_eq!(s.pose, start);
    }

    #[test]
    fn commands_are_clamped() {
        let lim = ActuatorLimits::default();
        let s = step_kinematics(&agent(Pose2D::new(0.0, 0.0, 0.0)), &cmd(99.0, -99.0), &lim, 1.0);
        assert_eq!(s.linear_vel, lim.v_max);
        assert_eq!(s.angular_vel, -lim.omega_max);
    }

    #[test]
    fn normalize_angle_examples() {
        assert_eq!(normalize_angle(0.0), 0.0);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-1.5 * PI) - PI / 2.0).abs() < 1e-12);
        // pi stays pi, -pi maps to pi: range is (-pi, pi].
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "finite")]
    fn normalize_angle_rejects_non_finite() {
        normalize_angle(f64::NAN);
    }

    #[test]
    fn world_step_is_deterministic() {
        let run = || {
            let mut w = World::new(0.05, ActuatorLimits::default(), 0.01, 42);
            w.add_agent(agent(Pose2D::new(0.0, 0.0, 0.0)));
            for tick in 0..50 {
                let c = vec![(
                    AgentId::from("a"),
                    VelocityCommand {
                        linear: 0.3,
                        angular: 0.1,
                        tick,
                    },
                )];
                w.step(&c);
            }
            let s = w.agent(&AgentId::from("a")).unwrap().clone();
            (s.pose, s.imu_heading)
        };
        assert_eq!(run(), run());
    }

    #[cfg(test)]
    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalize_is_idempotent(theta in -1e6f64..1e6) {
                let once = normalize_angle(theta);
                let twice = normalize_angle(once);
                prop_assert!((once - twice).abs() < 1e-12);
                prop_assert!(once > -PI && once <= PI);
            }

            #[test]
            fn normalize_preserves_angle_mod_2pi(theta in -1e3f64..1e3) {
                let n = normalize_angle(theta);
                let diff = (theta - n).rem_euclid(2.0 * PI);
                prop_assert!(diff.abs() < 1e-9 || (diff - 2.0 * PI).abs() < 1e-9);
            }
        }
    }
}
