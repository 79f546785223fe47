//! The contract between the control loop and a simulated plant.

use core::fmt;

use crate::sim::SimError;

/// Output of one control cycle: the measured output and its IPA derivative
/// with respect to the control held during the cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantCycleResult {
    pub y: f64,
    pub deriv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlantError {
    Sim(SimError),
    InvalidControl(f64),
    InvalidConfig(&'static str),
    /// Event times stopped advancing in a hybrid simulation.
    EventStall { time: f64 },
    InconsistentTiming,
}

impl fmt::Display for PlantError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlantError::Sim(e) => write!(f, "random draw failed: {e}"),
            PlantError::InvalidControl(u) => write!(f, "control value {u} outside plant domain"),
            PlantError::InvalidConfig(what) => write!(f, "invalid plant configuration: {what}"),
            PlantError::EventStall { time } => write!(f, "event times stalled at t = {time}"),
            PlantError::InconsistentTiming => {
                f.write_str("timing result does not match the trace (missing stall flags)")
            }
        }
    }
}

impl core::error::Error for PlantError {}

impl From<SimError> for PlantError {
    fn from(e: SimError) -> Self {
        PlantError::Sim(e)
    }
}

/// Anything that can run one control cycle at a given control value.
pub trait Plant {
    fn run_cycle(&mut self, u: f64) -> Result<PlantCycleResult, PlantError>;
}

impl<P: Plant + ?Sized> Plant for &mut P {
    fn run_cycle(&mut self, u: f64) -> Result<PlantCycleResult, PlantError> {
        (**self).run_cycle(u)
    }
}

/// Deterministic memoryless plant `y = J(u)` given by a closure returning
/// `(J(u), J'(u))`.
pub struct FnPlant<F>(pub F);

impl<F: FnMut(f64) -> (f64, f64)> Plant for FnPlant<F> {
    fn run_cycle(&mut self, u: f64) -> Result<PlantCycleResult, PlantError> {
        let (y, deriv) = (self.0)(u);
        Ok(PlantCycleResult { y, deriv })
    }
}
