//! The per-tick CSV log: fixed column order derived from the scenario's
//! agent list, full-precision float cells (values parse back exactly), and
//! the sidecar `meta.json` that records everything replay needs.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latch::{LatchConfig, LatchEvent, LatchMode};
use crate::perception::ClassLabel;
use crate::tracker::TrackEvent;
use crate::world::Role;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed log: {0}")]
    Malformed(String),
}

/// One registered entity as recorded in `meta.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaAgent {
    pub id: String,
    pub role: Role,
    pub target: Option<String>,
}

/// Run parameters replay-check needs, written next to the CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub scenario_name: String,
    pub seed: u64,
    pub transport: String,
    pub dt: f64,
    pub duration: u64,
    pub desired_range: f64,
    /// Convergence band around the desired range, meters.
    pub band: f64,
    /// Ticks the range must stay inside the band to count as converged.
    pub convergence_hold: u64,
    pub latency: u64,
    pub jitter: u64,
    pub poll_period: u64,
    pub max_age: u64,
    pub latch: LatchConfig,
    pub agents: Vec<MetaAgent>,
    pub columns: Vec<String>,
}

impl RunMeta {
    pub fn followers(&self) -> impl Iterator<Item = &MetaAgent> {
        self.agents.iter().filter(|a| a.role == Role::Follower)
    }

    /// Worst-case stop propagation bound: max one-way latency plus the poll
    /// period.
    pub fn propagation_bound(&self) -> u64 {
        self.latency + self.jitter + self.poll_period
    }

    pub fn write(&self, path: &Path) -> Result<(), LogError> {
        let mut f = std::fs::File::create(path)?;
        let text = serde_json::to_string_pretty(self).expect("meta serializes");
        f.write_all(text.as_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, LogError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| LogError::Malformed(e.to_string()))
    }
}

/// Column names, fixed order: globals first, then one group per agent in
/// scenario order (followers carry the autonomy columns).
pub fn csv_header(agents: &[MetaAgent]) -> Vec<String> {
    let mut cols = vec![
        "tick".to_owned(),
        "server_state".to_owned(),
        "server_version".to_owned(),
        "server_cause".to_owned(),
    ];
    for a in agents {
        for suffix in ["x", "y", "theta", "v_cmd", "w_cmd"] {
            cols.push(format!("{}_{suffix}", a.id));
        }
        if a.role == Role::Follower {
            for suffix in [
                "latch",
                "plan",
                "target",
                "range",
                "obstacle_seen",
                "observed_state",
                "observed_version",
                "leader_recognized",
                "comms_healthy",
                "depth_valid",
                "latch_cmd",
                "latch_event",
                "trk_events",
            ] {
                cols.push(format!("{}_{suffix}", a.id));
            }
        }
    }
    cols
}

pub fn fmt_f64(v: f64) -> String {
    // Shortest round-trip representation: parses back to the same bits.
    format!("{v}")
}

pub fn fmt_bool(v: bool) -> &'static str {
    if v {
        "true"
    } else {
        "false"
    }
}

pub fn fmt_latch_mode(mode: LatchMode) -> &'static str {
    match mode {
        LatchMode::Engaged => "engaged",
        LatchMode::Disengaged => "disengaged",
    }
}

fn fmt_class(label: ClassLabel) -> &'static str {
    match label {
        ClassLabel::LeaderMarker => "leader_marker",
        ClassLabel::Obstacle => "obstacle",
    }
}

/// Compact latch event cell: `engaged:<reason>`, `disengaged:<reason>` or
/// `rejected:<cond>+<cond>`; multiple events joined by `|`.
pub fn fmt_latch_events(events: &[LatchEvent]) -> String {
    events
        .iter()
        .map(|e| match e {
            LatchEvent::Transitioned { to, reason, .. } => match to {
                LatchMode::Engaged => format!("engaged:{reason}"),
                LatchMode::Disengaged => format!("disengaged:{reason}"),
            },
            LatchEvent::EngageRejected { failed, .. } => {
                let names: Vec<String> = failed.iter().map(|c| c.to_string()).collect();
                format!("rejected:{}", names.join("+"))
            }
        })
        .collect::<Vec<_>>()
        .join("|")
}

/// Compact tracker event cell: `c<id>:<class>`, `u<id>`, `r<id>:<class>`,
/// joined by `|`.
pub fn fmt_track_events(events: &[TrackEvent]) -> String {
    events
        .iter()
        .map(|e| match e {
            TrackEvent::TrackCreated {
                track_id,
                class_label,
            } => format!("c{track_id}:{}", fmt_class(*class_label)),
            TrackEvent::TrackUpdated { track_id } => format!("u{track_id}"),
            TrackEvent::TrackRemoved {
                track_id,
                class_label,
            } => format!("r{track_id}:{}", fmt_class(*class_label)),
        })
        .collect::<Vec<_>>()
        .join("|")
}

/// Parsed log with column lookup by name.
#[derive(Debug, Clone)]
pub struct LogTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl LogTable {
    pub fn read(path: &Path) -> Result<Self, LogError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)?;
        let header: Vec<String> = reader
            .headers()?
            .iter()
            .map(|s| s.to_owned())
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            rows.push(record.iter().map(|s| s.to_owned()).collect());
        }
        Ok(LogTable { header, rows })
    }

    pub fn col(&self, name: &str) -> Result<usize, LogError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LogError::Malformed(format!("missing column {name}")))
    }

    pub fn value(&self, row: usize, col: usize) -> &str {
        &self.rows[row][col]
    }

    pub fn f64_at(&self, row: usize, col: usize) -> Option<f64> {
        let raw = self.value(row, col);
        if raw.is_empty() {
            None
        } else {
            raw.parse().ok()
        }
    }

    pub fn u64_at(&self, row: usize, col: usize) -> Option<u64> {
        let raw = self.value(row, col);
        if raw.is_empty() {
            None
        } else {
            raw.parse().ok()
        }
    }

    pub fn bool_at(&self, row: usize, col: usize) -> Option<bool> {
        match self.value(row, col) {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        }
    }
}
