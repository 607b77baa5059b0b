//! Run metrics, computed solely from the emitted per-tick log so that
//! `replay-check` can recompute and cross-check them offline.

use serde::{Deserialize, Serialize};

use crate::harness::log::{LogError, LogTable, RunMeta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub ticks: u64,
    pub per_follower: Vec<FollowerMetrics>,
    pub stop_events: Vec<StopEventMetrics>,
    pub latch_events: Vec<LoggedLatchEvent>,
    pub plan_transitions: Vec<LoggedPlanTransition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerMetrics {
    pub agent_id: String,
    /// Rows spent in the Follow plan.
    pub follow_ticks: u64,
    /// Mean / max of |measured range - desired| over Follow rows with a
    /// range reading.
    pub mean_abs_range_dev: Option<f64>,
    pub max_abs_range_dev: Option<f64>,
    /// Minimum true center-to-center distance to the followed agent.
    pub min_true_range: Option<f64>,
    /// First tick from which the measured range stays inside the band for
    /// `convergence_hold` consecutive Follow rows.
    pub convergence_tick: Option<u64>,
    /// Changes of the Follow target track id across Follow rows.
    pub id_switches: u64,
    pub leader_track_removals: u64,
    pub leader_track_creations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopEventMetrics {
    /// First row at which the server reported STOP.
    pub server_stop_tick: u64,
    /// Row at which the server returned to RUN, if it did.
    pub resume_tick: Option<u64>,
    /// Per follower: ticks from `server_stop_tick` until the follower's
    /// observed state showed STOP (None if never during the event).
    pub observe_latency: Vec<(String, Option<u64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedLatchEvent {
    pub tick: u64,
    pub agent_id: String,
    pub event: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedPlanTransition {
    pub tick: u64,
    pub agent_id: String,
    pub from: String,
    pub to: String,
    pub target: Option<u64>,
}

/// Count leader-class creations/removals in a `trk_events` cell.
fn count_track_events(cell: &str) -> (u64, u64) {
    let mut created = 0;
    let mut removed = 0;
    for part in cell.split('|').filter(|p| !p.is_empty()) {
        if part.ends_with(":leader_marker") {
            if part.starts_with('c') {
                created += 1;
            } else if part.starts_with('r') {
                removed += 1;
            }
        }
    }
    (created, removed)
}

pub fn compute_metrics(table: &LogTable, meta: &RunMeta) -> Result<RunMetrics, LogError> {
    let n = table.rows.len();
    let tick_col = table.col("tick")?;
    let state_col = table.col("server_state")?;

    let mut per_follower = Vec::new();
    let mut latch_events = Vec::new();
    let mut plan_transitions = Vec::new();

    for follower in meta.followers() {
        let id = &follower.id;
        let plan_col = table.col(&format!("{id}_plan"))?;
        let range_col = table.col(&format!("{id}_range"))?;
        let target_col = table.col(&format!("{id}_target"))?;
        let event_col = table.col(&format!("{id}_latch_event"))?;
        let trk_col = table.col(&format!("{id}_trk_events"))?;
        let x_col = table.col(&format!("{id}_x"))?;
        let y_col = table.col(&format!("{id}_y"))?;

        let target_agent = follower.target.as_deref();
        let (tx_col, ty_col) = match target_agent {
            Some(t) => (
                Some(table.col(&format!("{t}_x"))?),
                Some(table.col(&format!("{t}_y"))?),
            ),
            None => (None, None),
        };

        let mut follow_ticks = 0u64;
        let mut devs: Vec<f64> = Vec::new();
        let mut min_true_range: Option<f64> = None;
        let mut id_switches = 0u64;
        let mut last_target: Option<u64> = None;
        let mut creations = 0u64;
        let mut removals = 0u64;
        // Per-row flag: inside the convergence band while following.
        let mut in_band = vec![false; n];

        #[allow(clippy::needless_range_loop)] // row indexes several parallel columns
        for row in 0..n {
            let plan = table.value(row, plan_col);
            let is_follow = plan == "follow";
            if is_follow {
                follow_ticks += 1;
                if let Some(range) = table.f64_at(row, range_col) {
                    let dev = (range - meta.desired_range).abs();
                    devs.push(dev);
                    in_band[row] = dev <= meta.band;
                }
                if let Some(target) = table.u64_at(row, target_col) {
                    if let Some(prev) = last_target {
                        if prev != target {
                            id_switches += 1;
                        }
                    }
                    last_target = Some(target);
                }
            }
            if let (Some(txc), Some(tyc)) = (tx_col, ty_col) {
                if let (Some(x), Some(y), Some(tx), Some(ty)) = (
                    table.f64_at(row, x_col),
                    table.f64_at(row, y_col),
                    table.f64_at(row, txc),
                    table.f64_at(row, tyc),
                ) {
                    let d = (tx - x).hypot(ty - y);
                    min_true_range = Some(min_true_range.map_or(d, |m: f64| m.min(d)));
                }
            }
            let (c, r) = count_track_events(table.value(row, trk_col));
            creations += c;
            removals += r;

            let event_cell = table.value(row, event_col);
            if !event_cell.is_empty() {
                let tick = table.u64_at(row, tick_col).unwrap_or(row as u64);
                for part in event_cell.split('|') {
                    latch_events.push(LoggedLatchEvent {
                        tick,
                        agent_id: id.clone(),
                        event: part.to_owned(),
                    });
                }
            }
        }

        // Plan transitions from consecutive plan cells.
        for row in 0..n {
            let current = table.value(row, plan_col);
            let prev = if row == 0 {
                "idle"
            } else {
                table.value(row - 1, plan_col)
            };
            if current != prev && !current.is_empty() {
                plan_transitions.push(LoggedPlanTransition {
                    tick: table.u64_at(row, tick_col).unwrap_or(row as u64),
                    agent_id: id.clone(),
                    from: prev.to_owned(),
                    to: current.to_owned(),
                    target: table.u64_at(row, target_col),
                });
            }
        }

        let hold = meta.convergence_hold as usize;
        let mut convergence_tick = None;
        if n >= hold && hold > 0 {
            for start in 0..=(n - hold) {
                if in_band[start..start + hold].iter().all(|b| *b) {
                    convergence_tick = table.u64_at(start, tick_col);
                    break;
                }
            }
        }

        per_follower.push(FollowerMetrics {
            agent_id: id.clone(),
            follow_ticks,
            mean_abs_range_dev: if devs.is_empty() {
                None
            } else {
                Some(devs.iter().sum::<f64>() / devs.len() as f64)
            },
            max_abs_range_dev: devs.iter().cloned().fold(None, |acc: Option<f64>, d| {
                Some(acc.map_or(d, |m| m.max(d)))
            }),
            min_true_range,
            convergence_tick,
            id_switches,
            leader_track_removals: removals,
            leader_track_creations: creations,
        });
    }

    // Stop events from server state transitions.
    let mut stop_events = Vec::new();
    let mut row = 0usize;
    while row < n {
        let stop_here = table.value(row, state_col) == "STOP"
            && (row == 0 || table.value(row - 1, state_col) == "RUN");
        if stop_here {
            let stop_tick = table.u64_at(row, tick_col).unwrap_or(row as u64);
            let mut resume_row = None;
            for r in row + 1..n {
                if table.value(r, state_col) == "RUN" {
                    resume_row = Some(r);
                    break;
                }
            }
            let resume_tick = resume_row.and_then(|r| table.u64_at(r, tick_col));
            let end = resume_row.unwrap_or(n);

            let mut observe_latency = Vec::new();
            for follower in meta.followers() {
                let obs_col = table.col(&format!("{}_observed_state", follower.id))?;
                let mut latency = None;
                for r in row..end {
                    if table.value(r, obs_col) == "STOP" {
                        let t = table.u64_at(r, tick_col).unwrap_or(r as u64);
                        latency = Some(t - stop_tick);
                        break;
                    }
                }
                observe_latency.push((follower.id.clone(), latency));
            }
            stop_events.push(StopEventMetrics {
                server_stop_tick: stop_tick,
                resume_tick,
                observe_latency,
            });
            row = end;
        } else {
            row += 1;
        }
    }

    Ok(RunMetrics {
        ticks: n as u64,
        per_follower,
        stop_events,
        latch_events,
        plan_transitions,
    })
}
