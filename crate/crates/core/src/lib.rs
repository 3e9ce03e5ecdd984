//! Fluid model of the max-min fair Rate Control Protocol (RCP) in the
//! small-buffer regime.
//!
//! * [`network`]: topology, per-hop delays and controller parameters.
//! * [`queue`]: mean queue length as a function of arrival rate.
//! * [`equilibrium`]: effective capacities and the max-min rate vector.
//! * [`stability`]: local stability conditions, gain recommendations and
//!   Hopf predictions.
//! * [`sim`]: fixed-step integration of the delayed dynamics.
//! * [`bifurcation`]: limit cycle measurement and gain sweeps.
//! * [`scenario`]: the JSON scenario format.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bifurcation;
pub mod equilibrium;
pub mod error;
pub mod exec;
pub mod network;
pub mod queue;
pub mod random;
pub mod scenario;
pub mod signal;
pub mod sim;
pub mod stability;

pub use equilibrium::{check_single_bottleneck, effective_capacity, solve, water_fill, Equilibrium};
pub use error::{Error, Result};
pub use exec::Exec;
pub use network::{Link, Network, Route, ValidationReport, Violation};
pub use queue::QueueFunction;
pub use scenario::Scenario;
pub use sim::{SimConfig, SimMode, SimTrace};
pub use stability::{hopf_prediction, stability_report, HopfPrediction, StabilityReport};
