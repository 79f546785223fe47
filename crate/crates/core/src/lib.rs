//! Performance regulation of stochastic event-driven systems.
//!
//! An integral controller whose gain is the reciprocal of an infinitesimal
//! perturbation analysis (IPA) derivative estimate turns the closed loop into
//! an error-tolerant Newton-Raphson iteration. This crate holds the iteration
//! itself ([`newton`]), the control loop ([`control`]), the simulation kernel
//! ([`sim`]) and four simulated plants:
//!
//! * [`queue::delay`]: M/D/1 queue, mean sojourn time vs. service time.
//! * [`queue::loss`]: M/D/1/k queue, loss rate vs. service time.
//! * [`petri`]: continuous Petri-net production/inventory system, mean
//!   inventory vs. backorder threshold.
//! * [`ooo`]: out-of-order core, instruction throughput vs. clock frequency.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! scenario handling live in the `ipareg` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod control;
pub mod newton;
pub mod ooo;
pub mod petri;
pub mod plant;
pub mod queue;
pub mod sim;

pub use control::{
    control_update, error_signal, gain, run_regulation, ControlError, ControllerConfig, Gain,
    GainMode, RegulationState, RunRow, RunTrace, SetpointSchedule,
};
pub use newton::{Interval, NrError};
pub use plant::{Plant, PlantCycleResult, PlantError};
pub use sim::{mean_over, CycleStats, RngStream, SimError};
