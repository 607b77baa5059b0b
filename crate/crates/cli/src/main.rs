//! `platoon`: run scenarios, validate scenario files, re-check run logs,
//! and serve the coordination server over HTTP.
//!
//! Exit code 0 means the requested operation succeeded and, for `run`, that
//! every cross-module invariant held when the emitted log was re-checked.

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tracing::info;

use platoon_core::harness::replay::replay_check;
use platoon_core::harness::runner::{build_server, build_sim_transport, run, RunArtifacts};
use platoon_core::scenario::Scenario;
use platoon_http::{serve, HttpTransport};

#[derive(Parser)]
#[command(name = "platoon", about = "Deterministic leader-follower platoon simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TransportKind {
    /// In-process virtual network with configurable latency/jitter/drops.
    Sim,
    /// Real HTTP against a coordination service.
    Http,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario and write log.csv, meta.json and summary.json.
    Run {
        scenario: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for the run artifacts.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = TransportKind::Sim)]
        transport: TransportKind,
        /// With --transport http: connect to an already-running service
        /// instead of spawning one in-process.
        #[arg(long)]
        url: Option<String>,
    },
    /// Parse and validate a scenario file.
    Validate { scenario: PathBuf },
    /// Re-check all cross-module invariants from a run's CSV log.
    ReplayCheck { csv: PathBuf },
    /// Serve the coordination server over HTTP until interrupted.
    Serve {
        scenario: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8700")]
        addr: String,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    match dispatch() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run {
            scenario,
            seed,
            out,
            transport,
            url,
        } => {
            let mut sc = Scenario::from_path(&scenario)
                .with_context(|| format!("loading {}", scenario.display()))?;
            if let Some(seed) = seed {
                sc.seed = seed;
            }
            let artifacts = execute(&sc, transport, url, &out)?;
            report(&artifacts);

            let verdict = replay_check(&artifacts.csv_path)?;
            if verdict.passed() {
                println!("invariants: all checks passed over {} rows", verdict.rows);
                Ok(ExitCode::SUCCESS)
            } else {
                for v in &verdict.violations {
                    println!("invariant violation @tick {}: {}: {}", v.tick, v.invariant, v.detail);
                }
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Validate { scenario } => {
            match Scenario::from_path(&scenario) {
                Ok(sc) => {
                    println!(
                        "ok: {} ({} agents, {} obstacles, {} ticks)",
                        sc.name,
                        sc.agents.len(),
                        sc.obstacles.len(),
                        sc.duration
                    );
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    println!("invalid: {e}");
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Command::ReplayCheck { csv } => {
            let verdict = replay_check(&csv)?;
            if verdict.passed() {
                println!("ok: all invariants hold over {} rows", verdict.rows);
                Ok(ExitCode::SUCCESS)
            } else {
                for v in &verdict.violations {
                    println!("violation @tick {}: {}: {}", v.tick, v.invariant, v.detail);
                }
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Serve { scenario, addr } => {
            let sc = Scenario::from_path(&scenario)?;
            let listener = TcpListener::bind(&addr).with_context(|| format!("binding {addr}"))?;
            let handle = serve(build_server(&sc), listener);
            println!("serving {} at {}", sc.name, handle.base_url());
            loop {
                std::thread::park();
            }
        }
    }
}

fn execute(
    sc: &Scenario,
    transport: TransportKind,
    url: Option<String>,
    out: &Path,
) -> Result<RunArtifacts> {
    match transport {
        TransportKind::Sim => {
            if url.is_some() {
                bail!("--url only applies to --transport http");
            }
            let mut t = build_sim_transport(sc);
            Ok(run(sc, &mut t, "sim", out)?)
        }
        TransportKind::Http => match url {
            Some(url) => {
                let mut t = HttpTransport::new(url);
                Ok(run(sc, &mut t, "http", out)?)
            }
            None => {
                let listener = TcpListener::bind("127.0.0.1:0").context("binding service")?;
                let handle = serve(build_server(sc), listener);
                info!(url = %handle.base_url(), "spawned in-process service");
                let mut t = HttpTransport::new(handle.base_url());
                let artifacts = run(sc, &mut t, "http", out)?;
                handle.shutdown();
                Ok(artifacts)
            }
        },
    }
}

fn report(artifacts: &RunArtifacts) {
    let m = &artifacts.metrics;
    println!("run: {} ticks, log at {}", m.ticks, artifacts.csv_path.display());
    for f in &m.per_follower {
        println!(
            "  {}: follow_ticks={} mean|range-dev|={} max|range-dev|={} min_range={} converged_at={} id_switches={}",
            f.agent_id,
            f.follow_ticks,
            f.mean_abs_range_dev.map_or("-".into(), |v| format!("{v:.4}")),
            f.max_abs_range_dev.map_or("-".into(), |v| format!("{v:.4}")),
            f.min_true_range.map_or("-".into(), |v| format!("{v:.4}")),
            f.convergence_tick.map_or("-".into(), |v| v.to_string()),
            f.id_switches,
        );
    }
    for s in &m.stop_events {
        println!(
            "  stop @tick {} resumed {:?}; observed: {:?}",
            s.server_stop_tick, s.resume_tick, s.observe_latency
        );
    }
}
