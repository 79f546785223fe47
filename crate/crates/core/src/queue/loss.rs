//! M/D/1/k loss plant: loss rate over a cycle of fixed duration, with the
//! derivative taken from the stochastic fluid model of the same queue and
//! evaluated on the discrete sample path.
//!
//! The sample-path derivative of the discrete loss count is zero almost
//! everywhere, so the fluid-model formula `(u^2 / t_f) * sum (v_q - u_q)` over
//! the lossy busy periods stands in for it. On the discrete path `u_q` is the
//! arrival instant of the first discarded job of the busy period and `v_q` is
//! the instant the system next empties (clipped to the cycle end).

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::plant::{Plant, PlantCycleResult, PlantError};
use crate::sim::RngStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Md1kLossConfig {
    pub lambda: f64,
    /// Capacity including the job in service.
    pub buffer_k: usize,
    /// Cycle duration.
    pub t_f: f64,
    /// Keep queue contents and the pending arrival across cycles.
    pub carry_state: bool,
    /// Power of `u` in the derivative formula. The u-squared form uses 2;
    /// the chain rule from service rate to service time would give -2.
    pub sfm_exponent: i32,
}

impl Md1kLossConfig {
    pub fn new(lambda: f64, buffer_k: usize, t_f: f64) -> Self {
        Self {
            lambda,
            buffer_k,
            t_f,
            carry_state: true,
            sfm_exponent: 2,
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(PlantError::InvalidConfig("lambda must be positive"));
        }
        if self.buffer_k == 0 {
            return Err(PlantError::InvalidConfig("buffer_k must be >= 1"));
        }
        if !(self.t_f > 0.0 && self.t_f.is_finite()) {
            return Err(PlantError::InvalidConfig("t_f must be positive"));
        }
        Ok(())
    }
}

/// A lossy busy period: first loss at `loss_onset`, empty again at
/// `period_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossyPeriod {
    pub loss_onset: f64,
    pub period_end: f64,
}

/// `(u^2 / t_f) * sum (v_q - u_q)`.
pub fn sfm_loss_derivative(periods: &[LossyPeriod], u: f64, t_f: f64) -> f64 {
    sfm_loss_derivative_pow(periods, u, t_f, 2)
}

/// `(u^exponent / t_f) * sum (v_q - u_q)`.
pub fn sfm_loss_derivative_pow(periods: &[LossyPeriod], u: f64, t_f: f64, exponent: i32) -> f64 {
    let total: f64 = periods.iter().map(|p| p.period_end - p.loss_onset).sum();
    libm::pow(u, f64::from(exponent)) * total / t_f
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossPath {
    pub lost: usize,
    pub periods: Vec<LossyPeriod>,
}

/// Sample path over `[0, t_f)` for an initially empty queue and the given
/// arrival instants. Arrivals at or after `t_f` are ignored.
pub fn loss_path(u: f64, buffer_k: usize, t_f: f64, arrivals: &[f64]) -> LossPath {
    let mut q = LossQueue::default();
    let mut periods = Vec::new();
    let mut lost = 0;
    for &t in arrivals.iter().take_while(|&&t| t < t_f) {
        if q.arrive(t, u, buffer_k, &mut periods) {
            lost += 1;
        }
    }
    q.close_cycle(t_f, &mut periods);
    LossPath { lost, periods }
}

#[derive(Debug, Clone, Default)]
struct LossQueue {
    /// Departure instants of the jobs in the system, FIFO.
    departures: VecDeque<f64>,
    last_departure: f64,
    onset: Option<f64>,
}

impl LossQueue {
    fn drain_until(&mut self, t: f64, periods: &mut Vec<LossyPeriod>) {
        while let Some(&d) = self.departures.front() {
            if d > t {
                break;
            }
            self.departures.pop_front();
            self.last_departure = d;
        }
        if self.departures.is_empty() {
            if let Some(onset) = self.onset.take() {
                periods.push(LossyPeriod {
                    loss_onset: onset,
                    period_end: self.last_departure,
                });
            }
        }
    }

    /// Returns `true` when the arrival is discarded.
    fn arrive(&mut self, t: f64, u: f64, k: usize, periods: &mut Vec<LossyPeriod>) -> bool {
        self.drain_until(t, periods);
        if self.departures.len() >= k {
            self.onset.get_or_insert(t);
            return true;
        }
        let start = self.departures.back().map_or(t, |&d| d.max(t));
        self.departures.push_back(start + u);
        false
    }

    fn close_cycle(&mut self, t_f: f64, periods: &mut Vec<LossyPeriod>) {
        self.drain_until(t_f, periods);
        if let Some(onset) = self.onset.take() {
            periods.push(LossyPeriod {
                loss_onset: onset,
                period_end: t_f,
            });
        }
    }

    /// Move the time origin to `t_f` and re-time waiting jobs with the new
    /// service time; the job in service keeps its departure.
    fn rebase(&mut self, t_f: f64, u: f64) {
        let mut prev: Option<f64> = None;
        for d in self.departures.iter_mut() {
            *d = match prev {
                None => *d - t_f,
                Some(p) => p + u,
            };
            prev = Some(*d);
        }
        self.last_departure -= t_f;
    }
}

/// One cycle from an empty queue.
pub fn simulate_md1k_loss_cycle(
    u: f64,
    cfg: &Md1kLossConfig,
    stream: &mut RngStream,
) -> Result<PlantCycleResult, PlantError> {
    cfg.validate()?;
    let mut state = LossState::default();
    state.run(u, cfg, stream)
}

#[derive(Debug, Clone, Default)]
struct LossState {
    queue: LossQueue,
    pending_arrival: Option<f64>,
    started: bool,
    periods: Vec<LossyPeriod>,
}

impl LossState {
    fn run(
        &mut self,
        u: f64,
        cfg: &Md1kLossConfig,
        stream: &mut RngStream,
    ) -> Result<PlantCycleResult, PlantError> {
        if !(u > 0.0 && u.is_finite()) {
            return Err(PlantError::InvalidControl(u));
        }
        if cfg.carry_state && self.started {
            self.queue.rebase(cfg.t_f, u);
        } else {
            self.queue = LossQueue::default();
            self.pending_arrival = None;
        }
        self.started = true;
        self.periods.clear();
        let mut lost = 0usize;
        let mut t = match self.pending_arrival.take() {
            Some(t) => t,
            None => stream.exponential(cfg.lambda)?,
        };
        while t < cfg.t_f {
            if self.queue.arrive(t, u, cfg.buffer_k, &mut self.periods) {
                lost += 1;
            }
            t += stream.exponential(cfg.lambda)?;
        }
        self.pending_arrival = Some(t - cfg.t_f);
        self.queue.close_cycle(cfg.t_f, &mut self.periods);
        Ok(PlantCycleResult {
            y: lost as f64 / cfg.t_f,
            deriv: sfm_loss_derivative_pow(&self.periods, u, cfg.t_f, cfg.sfm_exponent),
        })
    }
}

#[derive(Debug)]
pub struct Md1kLossPlant {
    cfg: Md1kLossConfig,
    stream: RngStream,
    state: LossState,
}

impl Md1kLossPlant {
    pub fn new(cfg: Md1kLossConfig, seed: u64) -> Result<Self, PlantError> {
        Self::with_stream(cfg, RngStream::new(seed, 2))
    }

    pub fn with_stream(cfg: Md1kLossConfig, stream: RngStream) -> Result<Self, PlantError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            stream,
            state: LossState::default(),
        })
    }

    /// Lossy periods of the most recent cycle.
    pub fn last_periods(&self) -> &[LossyPeriod] {
        &self.state.periods
    }
}

impl Plant for Md1kLossPlant {
    fn run_cycle(&mut self, u: f64) -> Result<PlantCycleResult, PlantError> {
        self.state.run(u, &self.cfg, &mut self.stream)
    }
}
