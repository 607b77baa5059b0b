//! Scenario runner and metrics: wires every module into the tick loop,
//! executes scripted scenarios, and emits a per-tick CSV log plus a summary
//! report. All cross-module invariants are re-checkable offline from the
//! log alone (`replay`).

pub mod agent;
pub mod log;
pub mod metrics;
pub mod replay;
pub mod runner;

pub use log::{LogTable, RunMeta};
pub use metrics::RunMetrics;
pub use replay::{replay_check, Verdict, Violation};
pub use runner::{run, RunArtifacts};
