//! Discrete-event simulation of wireless sensor networks.
//!
//! The [`kernel`] orders events; [`topology`] places nodes; [`radio`]
//! decides which transmissions are received; [`energy`] drains batteries;
//! [`process`] runs per-node protocol state machines; [`routing`] computes
//! source routes on demand; [`telemetry`] writes traces and statistics;
//! [`federation`] splits a run across worker threads; [`harness`] parses
//! scenario files and drives everything.

pub mod energy;
pub mod federation;
pub mod harness;
pub mod kernel;
pub mod process;
pub mod radio;
pub mod rng;
pub mod routing;
pub mod sim;
pub mod telemetry;
pub mod topology;
