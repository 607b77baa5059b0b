//! Deterministic leader-follower platoon simulator and coordination service.
//!
//! The stack mirrors a small autonomous convoy: a ground-truth 2D world,
//! a synthetic perception front-end standing in for the camera + detector +
//! depth network, an appearance-based multi-object tracker with a Kalman
//! filter per track, relative-to-metric depth calibration, a software latch
//! gating the follower's autonomous mode, a dynamic planner, a low-level
//! velocity controller, and an HTTP-style coordination protocol that runs
//! over an in-process virtual network in simulation and over real HTTP in
//! service mode.

pub mod comms;
pub mod controller;
pub mod depth;
pub mod harness;
pub mod latch;
pub mod perception;
pub mod planner;
pub mod rng;
pub mod scenario;
pub mod tracker;
pub mod world;
