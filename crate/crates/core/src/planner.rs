//! Dynamic planner: classify the tracked target, pick a plan (Follow /
//! Stop-and-Proceed / Idle), and emit the range/bearing setpoint for the
//! low-level controller, honoring the latch mode and the fleet stop state.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::info;

use crate::latch::LatchMode;
use crate::perception::{CameraModel, ClassLabel};
use crate::tracker::Track;
use crate::world::Tick;

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("centroid column {0} outside image of width {1}")]
    CentroidOutOfImage(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    Idle,
    Follow,
    StopAndProceed,
}

impl std::fmt::Display for PlanKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PlanKind::Idle => "idle",
            PlanKind::Follow => "follow",
            PlanKind::StopAndProceed => "stop_and_proceed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub kind: PlanKind,
    pub target_track_id: Option<u64>,
    pub desired_range: f64,
    pub created_tick: Tick,
}

impl Plan {
    pub fn idle(desired_range: f64, tick: Tick) -> Self {
        Plan {
            kind: PlanKind::Idle,
            target_track_id: None,
            desired_range,
            created_tick: tick,
        }
    }
}

/// Error pair the controller regulates to zero. `None` marks an unknown
/// deviation (no valid depth, or target centroid unusable).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Deviations {
    /// measured range - desired range, meters.
    pub linear: Option<f64>,
    /// Bearing of the target centroid from image center, radians;
    /// positive when the target sits right of center.
    pub angular: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setpoint {
    /// Zero-velocity setpoint (Idle and Stop-and-Proceed).
    Hold,
    /// Track the target at `desired_range` with the bearing regulated to zero.
    Track { desired_range: f64 },
}

/// What the planner sees of one server-side track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedTrack {
    pub track_id: u64,
    pub class_label: ClassLabel,
    pub x_c: f64,
    pub y_c: f64,
    /// Detected this frame (false while coasting on the motion model).
    pub in_frame: bool,
}

impl From<&Track> for ObservedTrack {
    fn from(t: &Track) -> Self {
        let (x_c, y_c) = t.centroid_px();
        ObservedTrack {
            track_id: t.track_id,
            class_label: t.class_label,
            x_c,
            y_c,
            in_frame: t.in_frame(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetClass {
    Leader,
    Obstacle,
}

/// The planner's two-way target classification.
pub fn classify_target(track: &ObservedTrack) -> TargetClass {
    match track.class_label {
        ClassLabel::LeaderMarker => TargetClass::Leader,
        ClassLabel::Obstacle => TargetClass::Obstacle,
    }
}

/// Bearing of a bbox centroid column from the optical axis.
/// `angle = atan((x_c - width/2) / focal_px)`; right of center is positive.
pub fn bearing_from_centroid(x_c: f64, camera: &CameraModel) -> Result<f64, PlannerError> {
    let width = f64::from(camera.image_width);
    if !(0.0..=width).contains(&x_c) {
        return Err(PlannerError::CentroidOutOfImage(x_c, width));
    }
    Ok(((x_c - width / 2.0) / camera.focal_px()).atan())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Standoff the follower keeps behind its target, meters.
    pub desired_range: f64,
    /// Convergence reporting thresholds (not command freezes).
    pub linear_threshold: f64,
    pub angular_threshold: f64,
    /// Ticks a stale range may be held before deviations go unknown.
    pub t_depth_hold: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            desired_range: 0.30,
            linear_threshold: 0.05,
            angular_threshold: 0.05,
            t_depth_hold: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTransition {
    pub tick: Tick,
    pub from: PlanKind,
    pub to: PlanKind,
    pub target_track_id: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct PlannerOutput {
    pub plan: Plan,
    pub deviations: Deviations,
    pub setpoint: Setpoint,
    pub transition: Option<PlanTransition>,
    /// Deviations are inside the configured convergence thresholds.
    pub converged: bool,
}

/// One planner per follower; remembers the previous plan (target retention
/// across Stop-and-Proceed) and the last valid range reading.
#[derive(Debug, Clone)]
pub struct Planner {
    cfg: PlannerConfig,
    prev: Plan,
    last_range: Option<(f64, Tick)>,
}

impl Planner {
    pub fn new(cfg: PlannerConfig) -> Self {
        Planner {
            prev: Plan::idle(cfg.desired_range, 0),
            cfg,
            last_range: None,
        }
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.cfg
    }

    pub fn plan(&self) -> &Plan {
        &self.prev
    }

    /// Decide the plan for this tick.
    ///
    /// Priority: latch disengaged -> Idle; obstacle in frame or fleet stop
    /// -> Stop-and-Proceed; live leader track -> Follow; otherwise Idle.
    /// The Follow target id survives Stop-and-Proceed as long as its track
    /// stays alive, so the platoon resumes on the same identity.
    pub fn step(
        &mut self,
        tracks: &[ObservedTrack],
        ranges: &[(u64, Option<f64>)],
        fleet_stop: bool,
        latch_mode: LatchMode,
        camera: &CameraModel,
        tick: Tick,
    ) -> PlannerOutput {
        let alive = |id: u64| tracks.iter().any(|t| t.track_id == id);
        let prev_target = self.prev.target_track_id.filter(|id| alive(*id));

        let obstacle_in_frame = tracks
            .iter()
            .any(|t| classify_target(t) == TargetClass::Obstacle && t.in_frame);
        let leader_track = prev_target
            .and_then(|id| tracks.iter().find(|t| t.track_id == id))
            .filter(|t| classify_target(t) == TargetClass::Leader)
            .or_else(|| {
                tracks
                    .iter()
                    .filter(|t| classify_target(t) == TargetClass::Leader)
                    .min_by_key(|t| t.track_id)
            });

        let (kind, target) = if latch_mode != LatchMode::Engaged {
            (PlanKind::Idle, None)
        } else if obstacle_in_frame || fleet_stop {
            // Retain the previous target through the stop so Follow resumes
            // on the same identity once the obstacle leaves the frame.
            (PlanKind::StopAndProceed, prev_target)
        } else if let Some(t) = leader_track {
            (PlanKind::Follow, Some(t.track_id))
        } else {
            (PlanKind::Idle, None)
        };

        let mut deviations = Deviations::default();
        if kind == PlanKind::Follow {
            let target_track = target.and_then(|id| tracks.iter().find(|t| t.track_id == id));
            if let Some(t) = target_track {
                let measured = ranges
                    .iter()
                    .find(|(id, _)| Some(*id) == target)
                    .and_then(|(_, r)| *r);
                deviations.linear = match measured {
                    Some(r) => {
                        self.last_range = Some((r, tick));
                        Some(r - self.cfg.desired_range)
                    }
                    None => self
                        .last_range
                        .filter(|(_, at)| tick.saturating_sub(*at) <= self.cfg.t_depth_hold)
                        .map(|(r, _)| r - self.cfg.desired_range),
                };
                deviations.angular = bearing_from_centroid(t.x_c, camera).ok();
            }
        }

        let setpoint = match kind {
            PlanKind::Follow => Setpoint::Track {
                desired_range: self.cfg.desired_range,
            },
            _ => Setpoint::Hold,
        };

        let transition = if kind != self.prev.kind {
            info!(tick, from = %self.prev.kind, to = %kind, ?target, "plan transition");
            Some(PlanTransition {
                tick,
                from: self.prev.kind,
                to: kind,
                target_track_id: target,
            })
        } else {
            None
        };

        let created_tick = if kind == self.prev.kind {
            self.prev.created_tick
        } else {
            tick
        };
        let plan = Plan {
            kind,
            target_track_id: target,
            desired_range: self.cfg.desired_range,
            created_tick,
        };
        self.prev = plan;

        let converged = matches!(deviations.linear, Some(l) if l.abs() <= self.cfg.linear_threshold)
            && matches!(deviations.angular, Some(a) if a.abs() <= self.cfg.angular_threshold);

        PlannerOutput {
            plan,
            deviations,
            setpoint,
            transition,
            converged,
        }
    }
}
