//! Software latch: the mode-transition state machine that gates the
//! follower's autonomous behavior. Engagement requires an intentional
//! command plus verified trigger conditions; sustained faults force a
//! fail-safe disengagement that hands control back to the operator.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use crate::world::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatchMode {
    Disengaged,
    Engaged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    TrackLost,
    CommsLost,
    DepthInvalid,
}

impl std::fmt::Display for FaultKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FaultKind::TrackLost => "track_lost",
            FaultKind::CommsLost => "comms_lost",
            FaultKind::DepthInvalid => "depth_invalid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatchReason {
    Startup,
    OperatorCommand,
    LeaderCommand,
    FailSafe(FaultKind),
}

impl std::fmt::Display for LatchReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LatchReason::Startup => f.write_str("startup"),
            LatchReason::OperatorCommand => f.write_str("operator_command"),
            LatchReason::LeaderCommand => f.write_str("leader_command"),
            LatchReason::FailSafe(k) => write!(f, "failsafe:{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandVerb {
    Engage,
    Disengage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandOrigin {
    Operator,
    Leader,
}

/// An engage/disengage request delivered through the comms inbox.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatchCommand {
    pub verb: CommandVerb,
    pub origin: CommandOrigin,
    pub tick: Tick,
}

/// The three engagement gates, each computed from timestamped evidence by
/// the agent's comms/perception caches, never assumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TriggerConditions {
    /// A fresh leader-class track existed within the last `t_recog` ticks.
    pub leader_recognized: bool,
    /// A system-state observation arrived within the last `t_comms` ticks.
    pub comms_healthy: bool,
    /// A depth measurement succeeded within the last `t_depth` ticks.
    pub depth_valid: bool,
}

impl TriggerConditions {
    pub fn all(&self) -> bool {
        self.leader_recognized && self.comms_healthy && self.depth_valid
    }

    pub fn failed(&self) -> Vec<ConditionId> {
        let mut out = Vec::new();
        if !self.leader_recognized {
            out.push(ConditionId::LeaderRecognized);
        }
        if !self.comms_healthy {
            out.push(ConditionId::CommsHealthy);
        }
        if !self.depth_valid {
            out.push(ConditionId::DepthValid);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionId {
    LeaderRecognized,
    CommsHealthy,
    DepthValid,
}

impl std::fmt::Display for ConditionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConditionId::LeaderRecognized => "leader_recognized",
            ConditionId::CommsHealthy => "comms_healthy",
            ConditionId::DepthValid => "depth_valid",
        })
    }
}

/// Freshness windows for the condition flags and fault windows over their
/// history, in ticks. The fault window for each condition equals the
/// threshold named for it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LatchConfig {
    #[serde(default = "default_t_recog")]
    pub t_recog: u64,
    #[serde(default = "default_t_comms")]
    pub t_comms: u64,
    #[serde(default = "default_t_track")]
    pub t_track: u64,
    #[serde(default = "default_t_depth")]
    pub t_depth: u64,
}

fn default_t_recog() -> u64 {
    5
}

fn default_t_comms() -> u64 {
    20
}

fn default_t_track() -> u64 {
    15
}

fn default_t_depth() -> u64 {
    10
}

impl Default for LatchConfig {
    fn default() -> Self {
        LatchConfig {
            t_recog: default_t_recog(),
            t_comms: default_t_comms(),
            t_track: default_t_track(),
            t_depth: default_t_depth(),
        }
    }
}

impl LatchConfig {
    fn max_window(&self) -> u64 {
        self.t_track.max(self.t_comms).max(self.t_depth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatchState {
    pub mode: LatchMode,
    pub last_transition_tick: Tick,
    pub reason: LatchReason,
}

impl LatchState {
    pub fn startup() -> Self {
        LatchState {
            mode: LatchMode::Disengaged,
            last_transition_tick: 0,
            reason: LatchReason::Startup,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatchEvent {
    Transitioned {
        tick: Tick,
        from: LatchMode,
        to: LatchMode,
        reason: LatchReason,
    },
    EngageRejected {
        tick: Tick,
        failed: Vec<ConditionId>,
    },
}

/// First fault by fixed priority (TrackLost > CommsLost > DepthInvalid),
/// from the trailing run of false condition samples. A fault fires when a
/// condition has been false for strictly more than its window.
pub fn evaluate_faults(history: &[TriggerConditions], cfg: &LatchConfig) -> Option<FaultKind> {
    let tail_run = |get: fn(&TriggerConditions) -> bool| -> u64 {
        history.iter().rev().take_while(|c| !get(c)).count() as u64
    };
    if tail_run(|c| c.leader_recognized) > cfg.t_track {
        return Some(FaultKind::TrackLost);
    }
    if tail_run(|c| c.comms_healthy) > cfg.t_comms {
        return Some(FaultKind::CommsLost);
    }
    if tail_run(|c| c.depth_valid) > cfg.t_depth {
        return Some(FaultKind::DepthInvalid);
    }
    None
}

/// One latch per follower, advanced only by that follower's tick loop.
#[derive(Debug, Clone)]
pub struct Latch {
    cfg: LatchConfig,
    state: LatchState,
    history: VecDeque<TriggerConditions>,
}

impl Latch {
    pub fn new(cfg: LatchConfig) -> Self {
        let cap = cfg.max_window() as usize + 2;
        Latch {
            cfg,
            state: LatchState::startup(),
            history: VecDeque::with_capacity(cap),
        }
    }

    pub fn state(&self) -> &LatchState {
        &self.state
    }

    pub fn mode(&self) -> LatchMode {
        self.state.mode
    }

    pub fn config(&self) -> &LatchConfig {
        &self.cfg
    }

    /// Advance one tick: apply at most one command, then evaluate faults.
    ///
    /// Disengaged -> Engaged only on an Engage command with every trigger
    /// condition currently true; an Engage with failed conditions is
    /// rejected (state unchanged) and the rejection lists what failed.
    /// Engaged -> Disengaged on any Disengage command or on a fault.
    pub fn step(
        &mut self,
        cmd: Option<&LatchCommand>,
        cond: TriggerConditions,
        tick: Tick,
    ) -> Vec<LatchEvent> {
        self.history.push_back(cond);
        while self.history.len() > self.cfg.max_window() as usize + 2 {
            self.history.pop_front();
        }

        let mut events = Vec::new();
        if let Some(c) = cmd {
            match (self.state.mode, c.verb) {
                (LatchMode::Disengaged, CommandVerb::Engage) => {
                    if cond.all() {
                        let reason = origin_reason(c.origin);
                        events.push(self.transition(LatchMode::Engaged, reason, tick));
                    } else {
                        let failed = cond.failed();
                        info!(tick, ?failed, "engage rejected");
                        events.push(LatchEvent::EngageRejected { tick, failed });
                    }
                }
                (LatchMode::Engaged, CommandVerb::Disengage) => {
                    let reason = origin_reason(c.origin);
                    events.push(self.transition(LatchMode::Disengaged, reason, tick));
                }
                (mode, verb) => {
                    debug!(tick, ?mode, ?verb, "latch command has no effect");
                }
            }
        }

        if self.state.mode == LatchMode::Engaged {
            let slices = self.history.make_contiguous();
            if let Some(fault) = evaluate_faults(slices, &self.cfg) {
                events.push(self.transition(
                    LatchMode::Disengaged,
                    LatchReason::FailSafe(fault),
                    tick,
                ));
            }
        }
        events
    }

    fn transition(&mut self, to: LatchMode, reason: LatchReason, tick: Tick) -> LatchEvent {
        let from = self.state.mode;
        info!(tick, ?from, ?to, %reason, "latch transition");
        self.state = LatchState {
            mode: to,
            last_transition_tick: tick,
            reason,
        };
        LatchEvent::Transitioned {
            tick,
            from,
            to,
            reason,
        }
    }
}

fn origin_reason(origin: CommandOrigin) -> LatchReason {
    match origin {
        CommandOrigin::Operator => LatchReason::OperatorCommand,
        CommandOrigin::Leader => LatchReason::LeaderCommand,
    }
}
