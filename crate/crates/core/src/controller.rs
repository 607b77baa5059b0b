//! Close-range low-level controller: proportional control on the planner's
//! linear and angular deviations, with deadbands, actuator clamping, and a
//! slew limit on angular command changes (the IMU-rate feedback path).

use serde::{Deserialize, Serialize};

use crate::latch::LatchMode;
use crate::planner::{Deviations, Setpoint};
use crate::world::{ActuatorLimits, Tick, VelocityCommand};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ControllerGains {
    /// 1/s on the range error.
    pub k_lin: f64,
    /// 1/s on the bearing error.
    pub k_ang: f64,
    /// Deviations inside the deadband command zero on that axis.
    pub deadband_lin: f64,
    pub deadband_ang: f64,
    /// Max angular command change, rad/s^2.
    pub slew_limit: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        ControllerGains {
            k_lin: 1.0,
            k_ang: 2.0,
            deadband_lin: 0.02,
            deadband_ang: 0.02,
            slew_limit: 4.0,
        }
    }
}

/// Per-follower controller; the only state is the previous angular command
/// used for slew limiting.
#[derive(Debug, Clone)]
pub struct Controller {
    gains: ControllerGains,
    prev_angular: f64,
}

impl Controller {
    pub fn new(gains: ControllerGains) -> Self {
        Controller {
            gains,
            prev_angular: 0.0,
        }
    }

    pub fn gains(&self) -> &ControllerGains {
        &self.gains
    }

    /// Compute the velocity command for one tick.
    ///
    /// Disengaged latch or a Hold setpoint commands an immediate stop
    /// (safety stops bypass the slew limit). Unknown deviations command
    /// zero on their axis. Positive bearing (target right of center) maps
    /// to negative angular velocity, turning the robot toward the target.
    pub fn step(
        &mut self,
        setpoint: &Setpoint,
        dev: &Deviations,
        latch_mode: LatchMode,
        limits: &ActuatorLimits,
        dt: f64,
        tick: Tick,
    ) -> VelocityCommand {
        if latch_mode != LatchMode::Engaged || matches!(setpoint, Setpoint::Hold) {
            self.prev_angular = 0.0;
            return VelocityCommand::zero(tick);
        }

        let linear = match dev.linear {
            Some(d) if d.abs() > self.gains.deadband_lin => {
                (self.gains.k_lin * d).clamp(-limits.v_max, limits.v_max)
            }
            _ => 0.0,
        };

        let raw_angular = match dev.angular {
            Some(b) if b.abs() > self.gains.deadband_ang => {
                (self.gains.k_ang * -b).clamp(-limits.omega_max, limits.omega_max)
            }
            _ => 0.0,
        };
        let max_delta = self.gains.slew_limit * dt;
        let angular = self.prev_angular + (raw_angular - self.prev_angular).clamp(-max_delta, max_delta);
        self.prev_angular = angular;

        VelocityCommand {
            linear,
            angular,
            tick,
        }
    }
}
