//! Offline re-validation: parse a run's CSV log, re-check every
//! cross-module invariant, recompute the metrics, and compare them with the
//! emitted summary.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::harness::log::{LogError, LogTable, RunMeta};
use crate::harness::metrics::{compute_metrics, RunMetrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub tick: u64,
    pub invariant: String,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub violations: Vec<Violation>,
    pub rows: u64,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-validate a log. `meta.json` (and `summary.json`, when present) are
/// read from the CSV's directory.
pub fn replay_check(csv_path: &Path) -> Result<Verdict, LogError> {
    let dir = csv_path.parent().unwrap_or(Path::new("."));
    let meta = RunMeta::read(&dir.join("meta.json"))?;
    let table = LogTable::read(csv_path)?;
    let summary_path = dir.join("summary.json");
    let summary: Option<RunMetrics> = if summary_path.exists() {
        let text = std::fs::read_to_string(&summary_path)?;
        Some(serde_json::from_str(&text).map_err(|e| LogError::Malformed(e.to_string()))?)
    } else {
        None
    };
    check_table(&table, &meta, summary.as_ref())
}

pub fn check_table(
    table: &LogTable,
    meta: &RunMeta,
    summary: Option<&RunMetrics>,
) -> Result<Verdict, LogError> {
    let mut violations = Vec::new();
    let n = table.rows.len();
    let tick_col = table.col("tick")?;
    let state_col = table.col("server_state")?;
    let cause_col = table.col("server_cause")?;
    let tick_at = |row: usize| table.u64_at(row, tick_col).unwrap_or(row as u64);

    // Stop-state safety: STOP exactly when an unresolved cause exists.
    for row in 0..n {
        let stop = table.value(row, state_col) == "STOP";
        let cause = !table.value(row, cause_col).is_empty();
        if stop != cause {
            violations.push(Violation {
                tick: tick_at(row),
                invariant: "stop_state_safety".into(),
                detail: format!("server_state STOP={stop} but cause present={cause}"),
            });
        }
    }

    for follower in meta.followers() {
        let id = &follower.id;
        let latch_col = table.col(&format!("{id}_latch"))?;
        let plan_col = table.col(&format!("{id}_plan"))?;
        let obstacle_col = table.col(&format!("{id}_obstacle_seen"))?;
        let v_col = table.col(&format!("{id}_v_cmd"))?;
        let w_col = table.col(&format!("{id}_w_cmd"))?;
        let cmd_col = table.col(&format!("{id}_latch_cmd"))?;
        let event_col = table.col(&format!("{id}_latch_event"))?;
        let lr_col = table.col(&format!("{id}_leader_recognized"))?;
        let ch_col = table.col(&format!("{id}_comms_healthy"))?;
        let dv_col = table.col(&format!("{id}_depth_valid"))?;
        let ver_col = table.col(&format!("{id}_observed_version"))?;

        let mut last_version: Option<u64> = None;
        for row in 0..n {
            let engaged = table.value(row, latch_col) == "engaged";
            let was_engaged = row > 0 && table.value(row - 1, latch_col) == "engaged";

            // Latch safety: every Engaged row is either a continuation or
            // carries a same-tick engage event backed by a command and a
            // fully-true trigger set.
            if engaged && !was_engaged {
                let event = table.value(row, event_col);
                let has_engage_event = event.split('|').any(|e| e.starts_with("engaged:"));
                let has_cmd = table.value(row, cmd_col).starts_with("engage");
                let conds_true = table.bool_at(row, lr_col) == Some(true)
                    && table.bool_at(row, ch_col) == Some(true)
                    && table.bool_at(row, dv_col) == Some(true);
                if !(has_engage_event && has_cmd && conds_true) {
                    violations.push(Violation {
                        tick: tick_at(row),
                        invariant: "latch_safety".into(),
                        detail: format!(
                            "{id} engaged without valid same-tick engage (event={event:?}, cmd={:?}, conds={conds_true})",
                            table.value(row, cmd_col)
                        ),
                    });
                }
            }

            // While disengaged, the autonomy stack commands only zeros.
            if !engaged {
                let v = table.f64_at(row, v_col).unwrap_or(0.0);
                let w = table.f64_at(row, w_col).unwrap_or(0.0);
                if v != 0.0 || w != 0.0 {
                    violations.push(Violation {
                        tick: tick_at(row),
                        invariant: "disengaged_zero_command".into(),
                        detail: format!("{id} disengaged but commanded v={v} w={w}"),
                    });
                }
            }

            // Stop dominance: an obstacle in frame forbids Follow and any
            // nonzero command.
            if table.bool_at(row, obstacle_col) == Some(true) {
                let plan = table.value(row, plan_col);
                let v = table.f64_at(row, v_col).unwrap_or(0.0);
                let w = table.f64_at(row, w_col).unwrap_or(0.0);
                if plan == "follow" || v != 0.0 || w != 0.0 {
                    violations.push(Violation {
                        tick: tick_at(row),
                        invariant: "stop_dominance".into(),
                        detail: format!("{id} obstacle in frame but plan={plan} v={v} w={w}"),
                    });
                }
            }

            // Observed fleet-state versions never decrease.
            if let Some(version) = table.u64_at(row, ver_col) {
                if let Some(prev) = last_version {
                    if version < prev {
                        violations.push(Violation {
                            tick: tick_at(row),
                            invariant: "version_monotonic".into(),
                            detail: format!("{id} observed version {version} after {prev}"),
                        });
                    }
                }
                last_version = Some(version);
            }
        }
    }

    // Propagation bound: when the server's STOP persisted at least the
    // bound, every follower must have observed it within the bound.
    let bound = meta.propagation_bound();
    let mut row = 0usize;
    while row < n {
        let stop_here = table.value(row, state_col) == "STOP"
            && (row == 0 || table.value(row - 1, state_col) == "RUN");
        if !stop_here {
            row += 1;
            continue;
        }
        let stop_tick = tick_at(row);
        let mut end = n;
        for r in row + 1..n {
            if table.value(r, state_col) == "RUN" {
                end = r;
                break;
            }
        }
        let persisted = tick_at(end.saturating_sub(1)).saturating_sub(stop_tick);
        if persisted >= bound {
            for follower in meta.followers() {
                let obs_col = table.col(&format!("{}_observed_state", follower.id))?;
                let observed_at = (row..end)
                    .find(|r| table.value(*r, obs_col) == "STOP")
                    .map(tick_at);
                match observed_at {
                    Some(t) if t - stop_tick <= bound => {}
                    got => violations.push(Violation {
                        tick: stop_tick,
                        invariant: "stop_propagation".into(),
                        detail: format!(
                            "{} observed STOP at {got:?}, bound {bound} ticks after {stop_tick}",
                            follower.id
                        ),
                    }),
                }
            }
        }
        row = end;
    }

    // Metrics recomputed from the log must equal the emitted summary.
    if let Some(summary) = summary {
        let recomputed = compute_metrics(table, meta)?;
        if &recomputed != summary {
            violations.push(Violation {
                tick: 0,
                invariant: "metrics_match".into(),
                detail: "recomputed metrics differ from summary.json".into(),
            });
        }
    }

    Ok(Verdict {
        violations,
        rows: n as u64,
    })
}
