//! The regulation loop: an integrator whose gain is the reciprocal of the
//! plant's derivative estimate.
//!
//! Timing per cycle `n`: `u_n` is applied at the start of the cycle, the plant
//! returns `y_n` and a derivative estimate, `e_n = r_n - y_n` is formed at the
//! end and the gain for cycle `n + 1` is computed from cycle `n` data only.
//! Cycle 1 runs open loop at `u_1`.

use alloc::vec::Vec;
use core::fmt;

use crate::newton::{project, Interval, DEFAULT_DIVISOR_FLOOR};
use crate::plant::{Plant, PlantError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlError {
    InvalidConfig(&'static str),
    InvalidSchedule(&'static str),
    StartOutsideInterval(f64),
    DivisorTooSmall { cycle: usize, deriv: f64 },
    Plant { cycle: usize, source: PlantError },
}

impl fmt::Display for ControlError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlError::InvalidConfig(what) => write!(f, "invalid controller config: {what}"),
            ControlError::InvalidSchedule(what) => write!(f, "invalid setpoint schedule: {what}"),
            ControlError::StartOutsideInterval(u) => {
                write!(f, "initial control {u} outside the control interval")
            }
            ControlError::DivisorTooSmall { cycle, deriv } => write!(
                f,
                "derivative estimate {deriv:e} from cycle {cycle} too close to zero for an adaptive gain"
            ),
            ControlError::Plant { cycle, source } => write!(f, "plant failed in cycle {cycle}: {source}"),
        }
    }
}

impl core::error::Error for ControlError {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainMode {
    Adaptive,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    k_scale: f64,
    interval: Interval,
    gain_mode: GainMode,
    divisor_floor: f64,
}

impl ControllerConfig {
    pub fn new(
        k_scale: f64,
        interval: Interval,
        gain_mode: GainMode,
        divisor_floor: f64,
    ) -> Result<Self, ControlError> {
        if !(k_scale > 0.0 && k_scale <= 1.0) {
            return Err(ControlError::InvalidConfig("k_scale must lie in (0, 1]"));
        }
        if let GainMode::Fixed(a) = gain_mode {
            if !(a > 0.0 && a.is_finite()) {
                return Err(ControlError::InvalidConfig("fixed gain must be positive"));
            }
        }
        if !(divisor_floor >= 0.0 && divisor_floor.is_finite()) {
            return Err(ControlError::InvalidConfig("divisor_floor must be >= 0"));
        }
        Ok(Self {
            k_scale,
            interval,
            gain_mode,
            divisor_floor,
        })
    }

    /// Adaptive gain, `k = 1`, default divisor floor.
    pub fn adaptive(interval: Interval) -> Self {
        Self {
            k_scale: 1.0,
            interval,
            gain_mode: GainMode::Adaptive,
            divisor_floor: DEFAULT_DIVISOR_FLOOR,
        }
    }

    pub fn with_k_scale(self, k_scale: f64) -> Result<Self, ControlError> {
        Self::new(k_scale, self.interval, self.gain_mode, self.divisor_floor)
    }

    pub fn with_gain_mode(self, gain_mode: GainMode) -> Result<Self, ControlError> {
        Self::new(self.k_scale, self.interval, gain_mode, self.divisor_floor)
    }

    pub fn k_scale(&self) -> f64 {
        self.k_scale
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn gain_mode(&self) -> GainMode {
        self.gain_mode
    }

    pub fn divisor_floor(&self) -> f64 {
        self.divisor_floor
    }
}

/// The integrator gain for one update.
///
/// The adaptive gain keeps the derivative rather than its reciprocal so the
/// update divides by it, which makes the loop bit-identical to the
/// Newton-Raphson step on `g = r - J`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gain {
    Reciprocal(f64),
    Fixed(f64),
}

impl Gain {
    pub fn value(&self) -> f64 {
        match *self {
            Gain::Reciprocal(d) => 1.0 / d,
            Gain::Fixed(a) => a,
        }
    }

    /// `A * e`.
    pub fn apply(&self, e: f64) -> f64 {
        match *self {
            Gain::Reciprocal(d) => e / d,
            Gain::Fixed(a) => a * e,
        }
    }
}

/// Gain from a derivative estimate. The sign is kept: plants with a
/// decreasing output need a negative gain.
pub fn gain(deriv: f64, cfg: &ControllerConfig) -> Result<Gain, ControlError> {
    match cfg.gain_mode {
        GainMode::Fixed(a) => Ok(Gain::Fixed(a)),
        GainMode::Adaptive => {
            if deriv.abs() > cfg.divisor_floor {
                Ok(Gain::Reciprocal(deriv))
            } else {
                Err(ControlError::DivisorTooSmall { cycle: 0, deriv })
            }
        }
    }
}

/// `P_I(u_prev + k A e_prev)`.
pub fn control_update(u_prev: f64, e_prev: f64, gain: Gain, cfg: &ControllerConfig) -> f64 {
    let step = gain.apply(e_prev);
    let next = if cfg.k_scale == 1.0 {
        u_prev + step
    } else {
        u_prev + cfg.k_scale * step
    };
    project(next, cfg.interval)
}

pub fn error_signal(r: f64, y: f64) -> f64 {
    r - y
}

/// Piecewise-constant setpoint: `(start_cycle, r)` pairs, strictly increasing
/// starts, the first at cycle 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SetpointSchedule {
    segments: Vec<(usize, f64)>,
}

impl SetpointSchedule {
    pub fn new(segments: Vec<(usize, f64)>) -> Result<Self, ControlError> {
        match segments.first() {
            None => return Err(ControlError::InvalidSchedule("no segments")),
            Some(&(start, _)) if start != 1 => {
                return Err(ControlError::InvalidSchedule("first segment must start at cycle 1"))
            }
            _ => {}
        }
        if segments.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(ControlError::InvalidSchedule("segment starts must strictly increase"));
        }
        if segments.iter().any(|&(_, r)| !r.is_finite()) {
            return Err(ControlError::InvalidSchedule("setpoints must be finite"));
        }
        Ok(Self { segments })
    }

    pub fn constant(r: f64) -> Self {
        Self {
            segments: alloc::vec![(1, r)],
        }
    }

    pub fn segments(&self) -> &[(usize, f64)] {
        &self.segments
    }

    /// Setpoint in force during cycle `n` (1-based).
    pub fn at(&self, n: usize) -> f64 {
        self.segments
            .iter()
            .take_while(|&&(start, _)| start <= n)
            .last()
            .map_or(self.segments[0].1, |&(_, r)| r)
    }

    /// 1-based inclusive cycle ranges of each segment, clipped to `n_cycles`.
    pub fn ranges(&self, n_cycles: usize) -> Vec<(usize, usize, f64)> {
        self.segments
            .iter()
            .enumerate()
            .filter(|(_, &(start, _))| start <= n_cycles)
            .map(|(i, &(start, r))| {
                let end = self
                    .segments
                    .get(i + 1)
                    .map_or(n_cycles, |&(next, _)| (next - 1).min(n_cycles));
                (start, end, r)
            })
            .collect()
    }
}

/// Controller state after cycle `n` completes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegulationState {
    pub n: usize,
    pub u: f64,
    pub y: f64,
    pub e: f64,
    /// Gain used to form `u_n`; `None` for the open-loop first cycle.
    pub a: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRow {
    pub n: usize,
    pub u: f64,
    pub y: f64,
    pub e: f64,
    pub a: Option<f64>,
    pub deriv: f64,
    pub r: f64,
}

impl RunRow {
    pub fn state(&self) -> RegulationState {
        RegulationState {
            n: self.n,
            u: self.u,
            y: self.y,
            e: self.e,
            a: self.a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub rows: Vec<RunRow>,
}

impl RunTrace {
    pub fn ys(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.y).collect()
    }

    pub fn us(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.u).collect()
    }

    pub fn last(&self) -> Option<&RunRow> {
        self.rows.last()
    }
}

/// Run `n_cycles` control cycles against `plant`.
pub fn run_regulation<P: Plant + ?Sized>(
    plant: &mut P,
    schedule: &SetpointSchedule,
    cfg: &ControllerConfig,
    u1: f64,
    n_cycles: usize,
) -> Result<RunTrace, ControlError> {
    if !cfg.interval.contains(u1) {
        return Err(ControlError::StartOutsideInterval(u1));
    }
    let mut rows: Vec<RunRow> = Vec::with_capacity(n_cycles);
    for n in 1..=n_cycles {
        let r = schedule.at(n);
        let (u, a) = match rows.last() {
            None => (u1, None),
            Some(prev) => {
                let g = gain(prev.deriv, cfg).map_err(|_| ControlError::DivisorTooSmall {
                    cycle: prev.n,
                    deriv: prev.deriv,
                })?;
                // the update sees the setpoint of the cycle it starts
                let e_prev = error_signal(r, prev.y);
                (control_update(prev.u, e_prev, g, cfg), Some(g.value()))
            }
        };
        let out = plant
            .run_cycle(u)
            .map_err(|source| ControlError::Plant { cycle: n, source })?;
        rows.push(RunRow {
            n,
            u,
            y: out.y,
            e: error_signal(r, out.y),
            a,
            deriv: out.deriv,
            r,
        });
    }
    Ok(RunTrace { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newton::{solve_with_errors, NrOptions};
    use crate::plant::FnPlant;
    use alloc::vec;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn gain_examples() {
        let cfg = ControllerConfig::adaptive(iv(0.0, 2.0));
        assert_eq!(gain(2.0, &cfg).unwrap().value(), 0.5);
        assert!(matches!(gain(0.0, &cfg), Err(ControlError::DivisorTooSmall { .. })));
        // negative derivative keeps its sign
        assert_eq!(gain(-4.0, &cfg).unwrap().value(), -0.25);
        let fixed = cfg.with_gain_mode(GainMode::Fixed(0.198)).unwrap();
        assert_eq!(gain(123.0, &fixed).unwrap().value(), 0.198);
        assert_eq!(gain(0.0, &fixed).unwrap().value(), 0.198);
    }

    #[test]
    fn update_examples() {
        let cfg = ControllerConfig::adaptive(iv(0.0, 2.0));
        let a = Gain::Fixed(0.2);
        assert!((control_update(1.0, 0.5, a, &cfg) - 1.1).abs() < 1e-15);
        let k02 = cfg.with_k_scale(0.2).unwrap();
        assert!((control_update(1.0, 0.5, a, &k02) - 1.02).abs() < 1e-15);
        assert_eq!(control_update(1.9, 1.0, Gain::Fixed(0.5), &cfg), 2.0);
    }

    #[test]
    fn error_signal_examples() {
        assert!((error_signal(3.0, 3.031) + 0.031).abs() < 1e-12);
        assert_eq!(error_signal(3.0, 3.0), 0.0);
        assert!((error_signal(0.1, 0.139) + 0.039).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let i = iv(0.0, 1.0);
        assert!(ControllerConfig::new(0.0, i, GainMode::Adaptive, 1e-12).is_err());
        assert!(ControllerConfig::new(1.5, i, GainMode::Adaptive, 1e-12).is_err());
        assert!(ControllerConfig::new(1.0, i, GainMode::Fixed(0.0), 1e-12).is_err());
        assert!(ControllerConfig::new(1.0, i, GainMode::Fixed(-1.0), 1e-12).is_err());
        assert!(ControllerConfig::new(0.2, i, GainMode::Fixed(0.03), 1e-12).is_ok());
    }

    #[test]
    fn schedule_lookup_and_validation() {
        let s = SetpointSchedule::new(vec![(1, 3.0), (41, 4.5), (81, 1.5)]).unwrap();
        assert_eq!(s.at(1), 3.0);
        assert_eq!(s.at(40), 3.0);
        assert_eq!(s.at(41), 4.5);
        assert_eq!(s.at(120), 1.5);
        assert_eq!(s.ranges(120), vec![(1, 40, 3.0), (41, 80, 4.5), (81, 120, 1.5)]);
        assert_eq!(s.ranges(60), vec![(1, 40, 3.0), (41, 60, 4.5)]);
        assert!(SetpointSchedule::new(vec![]).is_err());
        assert!(SetpointSchedule::new(vec![(2, 1.0)]).is_err());
        assert!(SetpointSchedule::new(vec![(1, 1.0), (1, 2.0)]).is_err());
    }

    #[test]
    fn newton_on_square_plant() {
        let cfg = ControllerConfig::adaptive(iv(0.0, 10.0));
        let mut plant = FnPlant(|u: f64| (u * u, 2.0 * u));
        let trace =
            run_regulation(&mut plant, &SetpointSchedule::constant(4.0), &cfg, 1.0, 8).unwrap();
        assert_eq!(trace.rows.len(), 8);
        assert!((trace.rows[7].y - 4.0).abs() < 1e-6);
        assert_eq!(trace.rows[0].a, None);
        assert_eq!(trace.rows[1].a, Some(0.5));
        assert!(trace.rows.iter().enumerate().all(|(i, r)| r.n == i + 1));
    }

    #[test]
    fn large_fixed_gain_hits_the_bound() {
        // u <- u + 10 (4 - u^2) from 1 gives 31, clamped to 10
        let cfg = ControllerConfig::adaptive(iv(0.0, 10.0))
            .with_gain_mode(GainMode::Fixed(10.0))
            .unwrap();
        let mut plant = FnPlant(|u: f64| (u * u, 2.0 * u));
        let trace =
            run_regulation(&mut plant, &SetpointSchedule::constant(4.0), &cfg, 1.0, 6).unwrap();
        assert_eq!(trace.rows[1].u, 10.0);
        assert!(trace.rows.iter().all(|r| (0.0..=10.0).contains(&r.u)));
        assert!(trace.rows.iter().skip(1).all(|r| (r.y - 4.0).abs() > 1.0));
    }

    #[test]
    fn matches_newton_iterates_bitwise() {
        let i = iv(0.0, 10.0);
        let cfg = ControllerConfig::adaptive(i);
        let j = |u: f64| (u * u * u + u, 3.0 * u * u + 1.0);
        let r = 5.0;
        let trace = run_regulation(&mut FnPlant(j), &SetpointSchedule::constant(r), &cfg, 0.3, 9)
            .unwrap();
        let traj = solve_with_errors(
            |u| {
                let (y, d) = j(u);
                (r - y, -d)
            },
            |_| (0.0, 0.0),
            i,
            0.3,
            8,
            NrOptions::default(),
        )
        .unwrap();
        for (row, it) in trace.rows.iter().zip(&traj.iterates) {
            assert_eq!(row.u.to_bits(), it.u.to_bits());
        }
    }

    #[test]
    fn setpoint_change_uses_new_reference() {
        let cfg = ControllerConfig::adaptive(iv(0.0, 10.0));
        let s = SetpointSchedule::new(vec![(1, 1.0), (3, 2.0)]).unwrap();
        let trace = run_regulation(&mut FnPlant(|u: f64| (u, 1.0)), &s, &cfg, 1.0, 4).unwrap();
        assert_eq!(trace.rows[1].u, 1.0);
        assert_eq!(trace.rows[2].u, 2.0);
        assert_eq!(trace.rows[2].r, 2.0);
        assert_eq!(trace.rows[1].e, 0.0);
    }

    #[test]
    fn flat_derivative_aborts_with_cycle() {
        let cfg = ControllerConfig::adaptive(iv(0.0, 10.0));
        let err = run_regulation(
            &mut FnPlant(|_| (0.0, 0.0)),
            &SetpointSchedule::constant(1.0),
            &cfg,
            1.0,
            3,
        )
        .unwrap_err();
        assert_eq!(err, ControlError::DivisorTooSmall { cycle: 1, deriv: 0.0 });
    }

    #[test]
    fn start_must_be_inside_interval() {
        let cfg = ControllerConfig::adaptive(iv(0.0, 1.0));
        let r = run_regulation(
            &mut FnPlant(|u| (u, 1.0)),
            &SetpointSchedule::constant(1.0),
            &cfg,
            2.0,
            3,
        );
        assert_eq!(r, Err(ControlError::StartOutsideInterval(2.0)));
    }
}
