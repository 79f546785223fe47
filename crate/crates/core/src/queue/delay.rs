//! M/D/1/inf delay plant: mean sojourn time over a cycle of `M` jobs and its
//! busy-period IPA derivative.
//!
//! Along a fixed arrival sequence the departure of job `m` is
//! `u * (m - k_m + 1) + a_{k_m}`, where `k_m` starts `m`'s busy period, so the
//! sojourn derivative is the job's position in its busy period.

use alloc::vec::Vec;

use crate::plant::{Plant, PlantCycleResult, PlantError};
use crate::sim::RngStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Md1DelayConfig {
    pub lambda: f64,
    pub jobs_per_cycle: usize,
    /// Start every cycle with an empty queue at time zero.
    pub reset_each_cycle: bool,
}

impl Md1DelayConfig {
    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(PlantError::InvalidConfig("lambda must be positive"));
        }
        if self.jobs_per_cycle == 0 {
            return Err(PlantError::InvalidConfig("jobs_per_cycle must be >= 1"));
        }
        Ok(())
    }
}

/// Job `job_index` belongs to the busy period started by `period_start_index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusyPeriodPosition {
    pub job_index: usize,
    pub period_start_index: usize,
}

impl BusyPeriodPosition {
    pub fn position(&self) -> usize {
        self.job_index - self.period_start_index + 1
    }
}

/// Mean busy-period position: the IPA derivative of the mean sojourn time.
/// `None` for an empty list.
pub fn ipa_delay_derivative(positions: &[BusyPeriodPosition]) -> Option<f64> {
    if positions.is_empty() {
        return None;
    }
    let sum: usize = positions.iter().map(BusyPeriodPosition::position).sum();
    Some(sum as f64 / positions.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayPath {
    pub sojourns: Vec<f64>,
    pub positions: Vec<BusyPeriodPosition>,
}

impl DelayPath {
    pub fn mean_sojourn(&self) -> f64 {
        self.sojourns.iter().sum::<f64>() / self.sojourns.len() as f64
    }
}

/// Sample path of an initially empty queue for the given arrival instants.
/// A job arriving exactly as the server frees up joins the running busy
/// period.
pub fn delay_path(u: f64, arrivals: &[f64]) -> DelayPath {
    let mut sojourns = Vec::with_capacity(arrivals.len());
    let mut positions = Vec::with_capacity(arrivals.len());
    let mut last_departure = f64::NEG_INFINITY;
    let mut start_index = 1;
    for (i, &a) in arrivals.iter().enumerate() {
        let m = i + 1;
        if a > last_departure {
            start_index = m;
        }
        let departure = a.max(last_departure) + u;
        sojourns.push(departure - a);
        positions.push(BusyPeriodPosition {
            job_index: m,
            period_start_index: start_index,
        });
        last_departure = departure;
    }
    DelayPath { sojourns, positions }
}

/// One reset-mode cycle: `M` Poisson arrivals into an empty queue, returning
/// the mean sojourn and its IPA derivative.
pub fn simulate_md1_delay_cycle(
    u: f64,
    cfg: &Md1DelayConfig,
    stream: &mut RngStream,
) -> Result<PlantCycleResult, PlantError> {
    cfg.validate()?;
    QueueState::empty().run_jobs(u, cfg, stream)
}

#[derive(Debug, Clone, Copy)]
struct QueueState {
    clock: f64,
    last_departure: f64,
    position: usize,
}

impl QueueState {
    fn empty() -> Self {
        Self {
            clock: 0.0,
            last_departure: f64::NEG_INFINITY,
            position: 0,
        }
    }

    fn run_jobs(
        &mut self,
        u: f64,
        cfg: &Md1DelayConfig,
        stream: &mut RngStream,
    ) -> Result<PlantCycleResult, PlantError> {
        if !(u > 0.0 && u.is_finite()) {
            return Err(PlantError::InvalidControl(u));
        }
        let m = cfg.jobs_per_cycle;
        let mut sojourn_sum = 0.0;
        let mut position_sum = 0u64;
        for _ in 0..m {
            self.clock += stream.exponential(cfg.lambda)?;
            let a = self.clock;
            if a > self.last_departure {
                self.position = 1;
            } else {
                self.position += 1;
            }
            let departure = a.max(self.last_departure) + u;
            sojourn_sum += departure - a;
            position_sum += self.position as u64;
            self.last_departure = departure;
        }
        Ok(PlantCycleResult {
            y: sojourn_sum / m as f64,
            deriv: position_sum as f64 / m as f64,
        })
    }
}

/// Delay plant with its own random stream. With `reset_each_cycle = false`
/// the queue and the current busy period carry over between cycles, and
/// busy-period positions count jobs from earlier cycles.
#[derive(Debug)]
pub struct Md1DelayPlant {
    cfg: Md1DelayConfig,
    stream: RngStream,
    state: QueueState,
}

impl Md1DelayPlant {
    pub fn new(cfg: Md1DelayConfig, seed: u64) -> Result<Self, PlantError> {
        Self::with_stream(cfg, RngStream::new(seed, 1))
    }

    pub fn with_stream(cfg: Md1DelayConfig, stream: RngStream) -> Result<Self, PlantError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            stream,
            state: QueueState::empty(),
        })
    }
}

impl Plant for Md1DelayPlant {
    fn run_cycle(&mut self, u: f64) -> Result<PlantCycleResult, PlantError> {
        if self.cfg.reset_each_cycle {
            self.state = QueueState::empty();
        }
        self.state.run_jobs(u, &self.cfg, &mut self.stream)
    }
}
