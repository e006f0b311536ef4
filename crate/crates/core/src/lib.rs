//! Congestion-control research simulator.
//!
//! The crate has two engines over the same control laws: a fluid model of
//! aggregate window and queue dynamics, and a deterministic packet-level
//! discrete-event simulator with in-band telemetry. Scenarios package the
//! experiments and [`checks`] turns them into pass/fail criteria.

pub mod cc;
pub mod checks;
pub mod fluid;
pub mod model;
pub mod scenarios;
pub mod sim;
pub mod telemetry;
pub mod units;

pub use model::{CcParams, EquilibriumPoint, LawKind, LinkState, PowerSample};
pub use units::{bdp, Bandwidth, Duration, SimTime};
