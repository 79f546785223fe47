//! Continuous Petri-net production/inventory plant.
//!
//! Three transitions and two places: product orders (T1) arrive as batches
//! into the backorder place p1, parts (T2) flow into the inventory place p2,
//! and the machine (T3) consumes one unit from each. Part supply switches
//! between a slow and a fast rate when the backorder level crosses the
//! threshold `u`. The output is the time-average inventory over a cycle.
//!
//! Rates are piecewise constant, so the markings are piecewise linear and
//! every event time is solved in closed form. The threshold derivative is
//! obtained by propagating perturbations through the event sequence: an
//! endogenous event whose guard `h(x, u) = 0` is hit at time `s` moves by
//! `s' = -(dh/dx . x' + dh/du) / (dh/dx . f-)`, and the state derivative
//! jumps by `(f- - f+) s'` where `f-`/`f+` are the flow vectors before and
//! after the event. Batch arrivals happen at fixed times and move nothing.

use alloc::vec::Vec;

use crate::plant::{Plant, PlantCycleResult, PlantError};
use crate::sim::RngStream;

/// How the plant reports its derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PetriEstimator {
    /// Perturbation propagation along the realized event sequence.
    Ipa,
    /// Central difference with common random numbers, half-width `delta`.
    Crn { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PetriConfig {
    /// Machine maximum rate.
    pub v3: f64,
    /// Part rate while backorders are at or below the threshold.
    pub v21: f64,
    /// Part rate while backorders exceed the threshold.
    pub v22: f64,
    /// Spacing of order batches.
    pub order_period: f64,
    /// Time of the first batch within a cycle. Defaults to one order period,
    /// so a cycle sees batches at `50, 100, ..., 950`.
    pub first_order_at: f64,
    pub order_lo: f64,
    pub order_hi: f64,
    pub t_f: f64,
    pub m1_0: f64,
    pub m2_0: f64,
    /// Restart every cycle from `(m1_0, m2_0)` and a fresh order schedule.
    pub reset_each_cycle: bool,
    pub estimator: PetriEstimator,
}

impl Default for PetriConfig {
    fn default() -> Self {
        Self {
            v3: 6.0,
            v21: 2.15,
            v22: 6.0,
            order_period: 50.0,
            first_order_at: 50.0,
            order_lo: 30.0,
            order_hi: 70.0,
            t_f: 1000.0,
            m1_0: 0.0,
            m2_0: 0.0,
            reset_each_cycle: true,
            estimator: PetriEstimator::Ipa,
        }
    }
}

impl PetriConfig {
    pub fn validate(&self) -> Result<(), PlantError> {
        let finite = [
            self.v3,
            self.v21,
            self.v22,
            self.order_period,
            self.first_order_at,
            self.order_lo,
            self.order_hi,
            self.t_f,
            self.m1_0,
            self.m2_0,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(PlantError::InvalidConfig("parameters must be finite"));
        }
        if !(0.0 <= self.v21 && self.v21 <= self.v3 && self.v3 <= self.v22 && self.v3 > 0.0) {
            return Err(PlantError::InvalidConfig("need 0 <= v21 <= v3 <= v22, v3 > 0"));
        }
        if !(self.t_f > 0.0 && self.order_period > 0.0 && self.first_order_at >= 0.0) {
            return Err(PlantError::InvalidConfig("t_f and order_period must be positive"));
        }
        if !(0.0 <= self.order_lo && self.order_lo < self.order_hi) {
            return Err(PlantError::InvalidConfig("need 0 <= order_lo < order_hi"));
        }
        if self.m1_0 < 0.0 || self.m2_0 < 0.0 {
            return Err(PlantError::InvalidConfig("initial markings must be >= 0"));
        }
        if let PetriEstimator::Crn { delta } = self.estimator {
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(PlantError::InvalidConfig("CRN delta must be positive"));
            }
        }
        Ok(())
    }
}

/// Markings and current flow rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidNetState {
    pub t: f64,
    pub m1: f64,
    pub m2: f64,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Place {
    Backorders,
    Inventory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HybridEventKind {
    BatchArrival,
    ThresholdCross,
    PlaceEmpty(Place),
    CycleEnd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridEvent {
    pub kind: HybridEventKind,
    pub time: f64,
}

/// Flow rates `(v1, v2, v3)` between batch impulses.
///
/// `v2` follows the threshold rule; `v3` runs at the machine rate when both
/// places hold fluid and otherwise at the smallest inflow among the empty
/// places, never above the machine rate.
pub fn rate_resolve(m1: f64, m2: f64, u: f64, cfg: &PetriConfig) -> (f64, f64, f64) {
    let v1 = 0.0;
    let v2 = if m1 <= u { cfg.v21 } else { cfg.v22 };
    let mut v3 = cfg.v3;
    if m1 <= 0.0 {
        v3 = v3.min(v1);
    }
    if m2 <= 0.0 {
        v3 = v3.min(v2);
    }
    (v1, v2, v3)
}

/// Result of one simulated cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct PetriPath {
    /// Time-average inventory.
    pub y: f64,
    /// Derivative of `y` with respect to the threshold.
    pub dy: f64,
    pub events: Vec<HybridEvent>,
    pub final_state: FluidNetState,
}

impl PetriPath {
    pub fn event_kinds(&self) -> impl Iterator<Item = HybridEventKind> + '_ {
        self.events.iter().map(|e| e.kind)
    }
}

/// An order batch: arrival time within the cycle and quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Batch {
    pub time: f64,
    pub amount: f64,
}

const MAX_ZERO_LENGTH_EVENTS: usize = 64;

/// Simulate `[0, t_f]` from markings `(m1_0, m2_0)` for the given batches
/// (sorted by time; batches at or after `t_f` are ignored).
pub fn petri_path(
    u: f64,
    cfg: &PetriConfig,
    m1_0: f64,
    m2_0: f64,
    batches: &[Batch],
) -> Result<PetriPath, PlantError> {
    if !(u > 0.0 && u.is_finite()) {
        return Err(PlantError::InvalidControl(u));
    }
    let t_f = cfg.t_f;
    let (mut t, mut m1, mut m2) = (0.0f64, m1_0, m2_0);
    let (mut dm1, mut dm2) = (0.0f64, 0.0f64);
    let (mut area, mut darea) = (0.0f64, 0.0f64);
    let mut events = Vec::new();
    let mut next_batch = batches.iter().peekable();
    let mut stalled = 0usize;

    loop {
        let (_, v2, v3) = rate_resolve(m1, m2, u, cfg);
        let r1 = -v3;
        let r2 = v2 - v3;

        // earliest endogenous event
        let mut endo: Option<(f64, HybridEventKind)> = None;
        let mut consider = |time: f64, kind| {
            if endo.is_none_or(|(best, _)| time < best) {
                endo = Some((time, kind));
            }
        };
        if r1 < 0.0 {
            if m1 > u {
                consider(t + (m1 - u) / -r1, HybridEventKind::ThresholdCross);
            } else if m1 > 0.0 {
                consider(t + m1 / -r1, HybridEventKind::PlaceEmpty(Place::Backorders));
            }
        }
        if r2 < 0.0 && m2 > 0.0 {
            consider(t + m2 / -r2, HybridEventKind::PlaceEmpty(Place::Inventory));
        }
        let batch_time = next_batch
            .peek()
            .map(|b| b.time)
            .filter(|&bt| bt < t_f)
            .unwrap_or(f64::INFINITY);

        // batches win ties
        let (te, kind) = match endo {
            Some((te, kind)) if te < batch_time && te < t_f => (te, kind),
            _ if batch_time <= t_f && batch_time.is_finite() => {
                (batch_time, HybridEventKind::BatchArrival)
            }
            _ => (t_f, HybridEventKind::CycleEnd),
        };
        let te = te.max(t);
        let dt = te - t;
        if dt > 0.0 {
            stalled = 0;
        } else {
            stalled += 1;
            if stalled > MAX_ZERO_LENGTH_EVENTS {
                return Err(PlantError::EventStall { time: t });
            }
        }
        area += m2 * dt + 0.5 * r2 * dt * dt;
        darea += dm2 * dt;
        m1 += r1 * dt;
        m2 += r2 * dt;
        t = te;
        events.push(HybridEvent { kind, time: t });

        match kind {
            HybridEventKind::CycleEnd => break,
            HybridEventKind::BatchArrival => {
                let b = next_batch.next().expect("peeked batch");
                m1 = m1.max(0.0) + b.amount;
                m2 = m2.max(0.0);
            }
            HybridEventKind::ThresholdCross => {
                m1 = u;
                let shift = -(dm1 - 1.0) / r1;
                let (_, v2p, v3p) = rate_resolve(m1, m2, u, cfg);
                dm1 += (r1 - (-v3p)) * shift;
                dm2 += (r2 - (v2p - v3p)) * shift;
            }
            HybridEventKind::PlaceEmpty(place) => {
                let shift = match place {
                    Place::Backorders => {
                        m1 = 0.0;
                        -dm1 / r1
                    }
                    Place::Inventory => {
                        m2 = 0.0;
                        -dm2 / r2
                    }
                };
                let (_, v2p, v3p) = rate_resolve(m1, m2, u, cfg);
                dm1 += (r1 - (-v3p)) * shift;
                dm2 += (r2 - (v2p - v3p)) * shift;
            }
        }
    }

    let (v1, v2, v3) = rate_resolve(m1, m2, u, cfg);
    Ok(PetriPath {
        y: area / t_f,
        dy: darea / t_f,
        events,
        final_state: FluidNetState {
            t,
            m1,
            m2,
            v1,
            v2,
            v3,
        },
    })
}

/// Batch schedule of one cycle: equally spaced arrivals starting at `first`,
/// amounts uniform on `[order_lo, order_hi)`.
pub fn draw_batches(
    cfg: &PetriConfig,
    first: f64,
    stream: &mut RngStream,
) -> Result<Vec<Batch>, PlantError> {
    let mut out = Vec::new();
    let mut time = first;
    while time < cfg.t_f {
        out.push(Batch {
            time,
            amount: stream.uniform(cfg.order_lo, cfg.order_hi)?,
        });
        time += cfg.order_period;
    }
    Ok(out)
}

/// Central difference under common random numbers, plus whether the event
/// sequence is the same at `u - delta`, `u` and `u + delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrnDerivative {
    pub value: f64,
    pub order_stable: bool,
}

pub fn crn_derivative_for_batches(
    u: f64,
    delta: f64,
    cfg: &PetriConfig,
    batches: &[Batch],
) -> Result<CrnDerivative, PlantError> {
    let lo = petri_path(u - delta, cfg, cfg.m1_0, cfg.m2_0, batches)?;
    let mid = petri_path(u, cfg, cfg.m1_0, cfg.m2_0, batches)?;
    let hi = petri_path(u + delta, cfg, cfg.m1_0, cfg.m2_0, batches)?;
    let order_stable = lo.event_kinds().eq(mid.event_kinds()) && hi.event_kinds().eq(mid.event_kinds());
    Ok(CrnDerivative {
        value: (hi.y - lo.y) / (2.0 * delta),
        order_stable,
    })
}

/// `(L(u + delta) - L(u - delta)) / (2 delta)` for one reset-mode cycle whose
/// batches are drawn from `seed`.
pub fn crn_threshold_derivative(
    u: f64,
    delta: f64,
    cfg: &PetriConfig,
    seed: u64,
) -> Result<f64, PlantError> {
    cfg.validate()?;
    let mut stream = RngStream::new(seed, 3);
    let batches = draw_batches(cfg, cfg.first_order_at, &mut stream)?;
    Ok(crn_derivative_for_batches(u, delta, cfg, &batches)?.value)
}

/// One reset-mode cycle drawing batches from `stream`.
pub fn simulate_petri_cycle(
    u: f64,
    cfg: &PetriConfig,
    stream: &mut RngStream,
) -> Result<PlantCycleResult, PlantError> {
    cfg.validate()?;
    let batches = draw_batches(cfg, cfg.first_order_at, stream)?;
    cycle_result(u, cfg, cfg.m1_0, cfg.m2_0, &batches).map(|(r, _)| r)
}

fn cycle_result(
    u: f64,
    cfg: &PetriConfig,
    m1_0: f64,
    m2_0: f64,
    batches: &[Batch],
) -> Result<(PlantCycleResult, FluidNetState), PlantError> {
    let path = petri_path(u, cfg, m1_0, m2_0, batches)?;
    let deriv = match cfg.estimator {
        PetriEstimator::Ipa => path.dy,
        PetriEstimator::Crn { delta } => {
            let hi = petri_path(u + delta, cfg, m1_0, m2_0, batches)?;
            let lo = petri_path((u - delta).max(f64::MIN_POSITIVE), cfg, m1_0, m2_0, batches)?;
            (hi.y - lo.y) / (u + delta - (u - delta).max(f64::MIN_POSITIVE))
        }
    };
    Ok((PlantCycleResult { y: path.y, deriv }, path.final_state))
}

/// Petri-net plant with its own random stream. Without reset the markings
/// and the order phase carry over between cycles.
#[derive(Debug)]
pub struct PetriPlant {
    cfg: PetriConfig,
    stream: RngStream,
    m1: f64,
    m2: f64,
    next_order: f64,
}

impl PetriPlant {
    pub fn new(cfg: PetriConfig, seed: u64) -> Result<Self, PlantError> {
        Self::with_stream(cfg, RngStream::new(seed, 3))
    }

    pub fn with_stream(cfg: PetriConfig, stream: RngStream) -> Result<Self, PlantError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            stream,
            m1: cfg.m1_0,
            m2: cfg.m2_0,
            next_order: cfg.first_order_at,
        })
    }
}

impl Plant for PetriPlant {
    fn run_cycle(&mut self, u: f64) -> Result<PlantCycleResult, PlantError> {
        if self.cfg.reset_each_cycle {
            self.m1 = self.cfg.m1_0;
            self.m2 = self.cfg.m2_0;
            self.next_order = self.cfg.first_order_at;
        }
        let batches = draw_batches(&self.cfg, self.next_order, &mut self.stream)?;
        let (out, end) = cycle_result(u, &self.cfg, self.m1, self.m2, &batches)?;
        self.m1 = end.m1;
        self.m2 = end.m2;
        let last = batches.last().map_or(self.next_order - self.cfg.order_period, |b| b.time);
        self.next_order = last + self.cfg.order_period - self.cfg.t_f;
        Ok(out)
    }
}
