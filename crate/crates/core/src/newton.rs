//! Newton-Raphson with additive errors in both the function value and the
//! derivative, optionally projected onto a closed interval.
//!
//! One step is
//!
//! ```text
//! u_n = P_I( u_{n-1} - (g(u_{n-1}) + psi) / (g'(u_{n-1}) + phi) )
//! ```
//!
//! The same iteration is what the control loop runs when the plant function
//! is `g(u) = r - J(u)` and the derivative comes from IPA. The
//! [`ContractionCase`] taxonomy and [`contraction_factor`] give the one-step
//! bounds on `|g(u_j)| / |g(u_{j-1})|` for convex `g` under relative errors
//! at most `alpha` (derivative) and `beta` (function value).

use alloc::vec::Vec;
use core::fmt;

/// Default guard on `|g' + phi|`.
pub const DEFAULT_DIVISOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NrError {
    InvalidInterval { lo: f64, hi: f64 },
    /// `|g' + phi|` fell to or below the floor at the given iteration.
    DivisorTooSmall { iteration: usize, divisor: f64 },
    InvalidParams,
    WindowTooLarge { window: usize, len: usize },
    StartOutsideInterval(f64),
}

impl fmt::Display for NrError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NrError::InvalidInterval { lo, hi } => {
                write!(f, "invalid interval [{lo}, {hi}]: need finite lo < hi")
            }
            NrError::DivisorTooSmall { iteration, divisor } => write!(
                f,
                "derivative estimate {divisor:e} too close to zero at iteration {iteration}"
            ),
            NrError::InvalidParams => f.write_str(
                "contraction factor needs M_ratio > 1, alpha in [0,1), beta in [0,1)",
            ),
            NrError::WindowTooLarge { window, len } => {
                write!(f, "window {window} exceeds trajectory length {len}")
            }
            NrError::StartOutsideInterval(u) => write!(f, "start point {u} outside interval"),
        }
    }
}

impl core::error::Error for NrError {}

/// Closed interval `[lo, hi]` with finite `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, NrError> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(Self { lo, hi })
        } else {
            Err(NrError::InvalidInterval { lo, hi })
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, u: f64) -> bool {
        self.lo <= u && u <= self.hi
    }
}

/// Projection onto `interval`. NaN maps to the lower bound.
pub fn project(u: f64, interval: Interval) -> f64 {
    if u > interval.hi {
        interval.hi
    } else if u >= interval.lo {
        u
    } else {
        interval.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NrStepInput {
    pub u_prev: f64,
    pub g_val: f64,
    pub g_deriv: f64,
    /// Additive derivative error.
    pub phi: f64,
    /// Additive function-value error.
    pub psi: f64,
}

/// One unprojected step. Fails with `DivisorTooSmall` (iteration 0) when
/// `|g' + phi| <= divisor_floor`.
pub fn nr_step(input: NrStepInput, divisor_floor: f64) -> Result<f64, NrError> {
    let divisor = input.g_deriv + input.phi;
    // a NaN divisor fails the comparison and is rejected too
    let usable = divisor.abs() > divisor_floor;
    if !usable {
        return Err(NrError::DivisorTooSmall {
            iteration: 0,
            divisor,
        });
    }
    Ok(input.u_prev - (input.g_val + input.psi) / divisor)
}

/// Relative errors of one evaluation: `|psi|/|g|` and `|phi|/|g'|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeErrors {
    /// `None` when `g = 0`, where the ratio is undefined.
    pub err_g: Option<f64>,
    pub err_d: Option<f64>,
}

impl RelativeErrors {
    pub fn of(g_val: f64, g_deriv: f64, phi: f64, psi: f64) -> Self {
        Self {
            err_g: (g_val != 0.0).then(|| psi.abs() / g_val.abs()),
            err_d: (g_deriv != 0.0).then(|| phi.abs() / g_deriv.abs()),
        }
    }
}

/// Sign pattern of one step `(g(u_{j-1}), g(u_j))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContractionCase {
    /// `(<= 0, <= 0)`
    I,
    /// `(<= 0, >= 0)`: the step overshoots to the positive side.
    II,
    /// `(>= 0, <= 0)`
    III,
    /// `(>= 0, >= 0)`
    IV,
}

/// Classify a step. A zero belongs to both signs: `(0, x)` follows `x`,
/// `(x, 0)` follows `x`, and `(0, 0)` is case I.
pub fn classify_step(g_prev: f64, g_next: f64) -> ContractionCase {
    let prev_neg = if g_prev == 0.0 { g_next <= 0.0 } else { g_prev < 0.0 };
    let next_neg = if g_next == 0.0 { prev_neg } else { g_next < 0.0 };
    match (prev_neg, next_neg) {
        (true, true) => ContractionCase::I,
        (true, false) => ContractionCase::II,
        (false, true) => ContractionCase::III,
        (false, false) => ContractionCase::IV,
    }
}

/// Upper bound on `|g(u_j)| / |g(u_{j-1})|` for a convex monotone `g` whose
/// derivative magnitude varies by at most `m_ratio` over the interval, with
/// relative derivative error `< alpha` and relative value error `< beta`.
///
/// Case II can exceed 1; it is always followed by a case III step that pulls
/// the product back below 1 when `m_ratio * beta < 1` and `alpha` is small.
pub fn contraction_factor(
    case: ContractionCase,
    m_ratio: f64,
    alpha: f64,
    beta: f64,
) -> Result<f64, NrError> {
    let ok = m_ratio > 1.0
        && m_ratio.is_finite()
        && (0.0..1.0).contains(&alpha)
        && (0.0..1.0).contains(&beta);
    if !ok {
        return Err(NrError::InvalidParams);
    }
    let shrink = (1.0 - beta) / (1.0 + alpha);
    let grow = (1.0 + beta) / (1.0 - alpha);
    Ok(match case {
        ContractionCase::I => 1.0 - shrink,
        ContractionCase::II => m_ratio * grow - 1.0,
        ContractionCase::III => grow - 1.0,
        ContractionCase::IV => 1.0 - shrink / m_ratio,
    })
}

/// Bound on `|g(u_{m_n})| / |g(u_n)|` across an overshoot: a case II step
/// followed by case IV steps and a closing case III step.
pub fn two_step_factor(m_ratio: f64, alpha: f64, beta: f64) -> Result<f64, NrError> {
    Ok(contraction_factor(ContractionCase::II, m_ratio, alpha, beta)?
        * contraction_factor(ContractionCase::III, m_ratio, alpha, beta)?)
}

/// What an error injector sees before producing `(phi, psi)` for a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectionContext {
    /// 0-based index of the iterate the step starts from.
    pub iteration: usize,
    pub u: f64,
    pub g_val: f64,
    pub g_deriv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Iterate {
    pub u: f64,
    pub g_val: f64,
    /// `g + psi` as used by the step taken from this iterate; equal to
    /// `g_val` for the final iterate, from which no step is taken.
    pub g_with_psi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NrTrajectory {
    pub iterates: Vec<Iterate>,
    /// First index with `|g| <= tol`, if any.
    pub converged_index: Option<usize>,
}

impl NrTrajectory {
    pub fn len(&self) -> usize {
        self.iterates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }

    pub fn g_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.iterates.iter().map(|it| it.g_val)
    }

    /// Smallest `m > n` with `g(u_m) g(u_n) >= 0`.
    pub fn next_same_sign(&self, n: usize) -> Option<usize> {
        let g_n = self.iterates.get(n)?.g_val;
        self.iterates
            .iter()
            .enumerate()
            .skip(n + 1)
            .find(|(_, it)| it.g_val * g_n >= 0.0)
            .map(|(m, _)| m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NrOptions {
    pub divisor_floor: f64,
    pub convergence_tol: f64,
}

impl Default for NrOptions {
    fn default() -> Self {
        Self {
            divisor_floor: DEFAULT_DIVISOR_FLOOR,
            convergence_tol: 1e-12,
        }
    }
}

/// Run `n_iters` projected steps from `u0`.
///
/// `oracle` returns the exact `(g(u), g'(u))`; `injector` adds `(phi, psi)`
/// on top, so relative errors can be measured afterwards.
pub fn solve_with_errors<G, E>(
    mut oracle: G,
    mut injector: E,
    interval: Interval,
    u0: f64,
    n_iters: usize,
    opts: NrOptions,
) -> Result<NrTrajectory, NrError>
where
    G: FnMut(f64) -> (f64, f64),
    E: FnMut(InjectionContext) -> (f64, f64),
{
    if !interval.contains(u0) {
        return Err(NrError::StartOutsideInterval(u0));
    }
    let mut iterates = Vec::with_capacity(n_iters + 1);
    let mut u = u0;
    for iteration in 0..n_iters {
        let (g_val, g_deriv) = oracle(u);
        let (phi, psi) = injector(InjectionContext {
            iteration,
            u,
            g_val,
            g_deriv,
        });
        iterates.push(Iterate {
            u,
            g_val,
            g_with_psi: g_val + psi,
        });
        let step = NrStepInput {
            u_prev: u,
            g_val,
            g_deriv,
            phi,
            psi,
        };
        u = match nr_step(step, opts.divisor_floor) {
            Ok(next) => project(next, interval),
            Err(NrError::DivisorTooSmall { divisor, .. }) => {
                return Err(NrError::DivisorTooSmall { iteration, divisor })
            }
            Err(e) => return Err(e),
        };
    }
    let (g_val, _) = oracle(u);
    iterates.push(Iterate {
        u,
        g_val,
        g_with_psi: g_val,
    });
    let converged_index = iterates
        .iter()
        .position(|it| it.g_val.abs() <= opts.convergence_tol);
    Ok(NrTrajectory {
        iterates,
        converged_index,
    })
}

/// Max of `|g|` over the last `window` iterates: a finite-horizon stand-in
/// for `limsup |g(u_n)|`.
pub fn tail_sup(traj: &NrTrajectory, window: usize) -> Result<f64, NrError> {
    tail_sup_by(traj, window, |it| it.g_val)
}

/// Same as [`tail_sup`] on the observed values `g + psi`.
pub fn tail_sup_observed(traj: &NrTrajectory, window: usize) -> Result<f64, NrError> {
    tail_sup_by(traj, window, |it| it.g_with_psi)
}

fn tail_sup_by(
    traj: &NrTrajectory,
    window: usize,
    f: impl Fn(&Iterate) -> f64,
) -> Result<f64, NrError> {
    let len = traj.iterates.len();
    if window > len {
        return Err(NrError::WindowTooLarge { window, len });
    }
    Ok(traj.iterates[len - window..]
        .iter()
        .map(|it| f(it).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn sqrt2_oracle(u: f64) -> (f64, f64) {
        (2.0 - u * u, -2.0 * u)
    }

    #[test]
    fn step_examples() {
        let s = |u_prev, g_val, g_deriv, phi, psi| {
            nr_step(
                NrStepInput { u_prev, g_val, g_deriv, phi, psi },
                DEFAULT_DIVISOR_FLOOR,
            )
            .unwrap()
        };
        assert_eq!(s(1.0, 1.0, -2.0, 0.0, 0.0), 1.5);
        assert!(close(s(1.5, -0.25, -3.0, 0.0, 0.0), 1.416_666_666_666_666_7, 1e-12));
        assert!(close(s(1.0, 1.0, -2.0, 0.2, 0.05), 1.0 + 1.05 / 1.8, 1e-12));
        assert!(close(s(1.0, 1.0, -2.0, 0.2, 0.05), 1.583_333, 1e-6));
    }

    #[test]
    fn flat_derivative_is_an_error() {
        let r = nr_step(
            NrStepInput { u_prev: 1.0, g_val: 1.0, g_deriv: 0.1, phi: -0.1, psi: 0.0 },
            DEFAULT_DIVISOR_FLOOR,
        );
        assert!(matches!(r, Err(NrError::DivisorTooSmall { .. })));
    }

    #[test]
    fn projection_examples() {
        let i = Interval::new(0.1, 1.0).unwrap();
        assert_eq!(project(0.5, i), 0.5);
        assert_eq!(project(0.05, i), 0.1);
        assert_eq!(project(2.0, i), 1.0);
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn classify_examples_and_ties() {
        use ContractionCase::*;
        assert_eq!(classify_step(-1.0, -0.5), I);
        assert_eq!(classify_step(-1.0, 0.3), II);
        assert_eq!(classify_step(0.4, -0.2), III);
        assert_eq!(classify_step(0.4, 0.2), IV);
        assert_eq!(classify_step(0.0, 0.0), I);
        assert_eq!(classify_step(0.0, 0.7), IV);
        assert_eq!(classify_step(0.0, -0.7), I);
        assert_eq!(classify_step(-0.7, 0.0), I);
        assert_eq!(classify_step(0.7, 0.0), IV);
    }

    #[test]
    fn contraction_examples() {
        use ContractionCase::*;
        assert!(close(contraction_factor(I, 2.0, 0.0, 0.1).unwrap(), 0.1, 1e-15));
        assert!(close(contraction_factor(IV, 2.0, 0.0, 0.1).unwrap(), 0.55, 1e-15));
        assert!(close(contraction_factor(II, 2.0, 0.0, 0.1).unwrap(), 1.2, 1e-15));
        assert!(close(contraction_factor(III, 2.0, 0.0, 0.1).unwrap(), 0.1, 1e-15));
        assert_eq!(contraction_factor(I, 1.0, 0.0, 0.1), Err(NrError::InvalidParams));
        assert_eq!(contraction_factor(I, 2.0, 1.0, 0.1), Err(NrError::InvalidParams));
        assert_eq!(contraction_factor(I, 2.0, 0.0, -0.1), Err(NrError::InvalidParams));
    }

    #[test]
    fn exact_newton_on_sqrt2() {
        let i = Interval::new(0.0, 3.0).unwrap();
        let traj = solve_with_errors(sqrt2_oracle, |_| (0.0, 0.0), i, 1.0, 6, NrOptions::default())
            .unwrap();
        assert_eq!(traj.len(), 7);
        assert!(close(traj.iterates[6].u, core::f64::consts::SQRT_2, 1e-9));
        assert!(traj.converged_index.is_some());
    }

    #[test]
    fn iterates_stay_in_interval() {
        // From the lower edge the first step jumps to 1.5 > hi.
        let i = Interval::new(1.0, 1.2).unwrap();
        let traj =
            solve_with_errors(sqrt2_oracle, |_| (0.0, 0.0), i, 1.0, 10, NrOptions::default())
                .unwrap();
        assert_eq!(traj.iterates[1].u, 1.2);
        assert!(traj.iterates.iter().all(|it| i.contains(it.u)));
    }

    #[test]
    fn divisor_error_carries_iteration() {
        let i = Interval::new(-1.0, 1.0).unwrap();
        // g' vanishes at 0, reached after one step from 0.5 on g = u^2 - ... use a flat oracle
        let r = solve_with_errors(
            |u| (u - 0.25, if u < 0.4 { 0.0 } else { 1.0 }),
            |_| (0.0, 0.0),
            i,
            0.5,
            5,
            NrOptions::default(),
        );
        assert!(matches!(r, Err(NrError::DivisorTooSmall { iteration: 1, .. })));
    }

    #[test]
    fn tail_sup_examples() {
        let traj = NrTrajectory {
            iterates: [5.0, 1.0, 0.1, 0.05]
                .iter()
                .map(|&g| Iterate { u: 0.0, g_val: g, g_with_psi: g })
                .collect(),
            converged_index: None,
        };
        assert_eq!(tail_sup(&traj, 2), Ok(0.1));
        assert_eq!(tail_sup(&traj, 4), Ok(5.0));
        assert!(matches!(tail_sup(&traj, 5), Err(NrError::WindowTooLarge { .. })));
        let zeros = NrTrajectory {
            iterates: vec![Iterate { u: 0.0, g_val: 0.0, g_with_psi: 0.0 }; 3],
            converged_index: Some(0),
        };
        assert_eq!(tail_sup(&zeros, 3), Ok(0.0));
    }

    #[test]
    fn next_same_sign_skips_overshoot() {
        let traj = NrTrajectory {
            iterates: [-1.0, 0.5, 0.2, -0.01, -0.001]
                .iter()
                .map(|&g| Iterate { u: 0.0, g_val: g, g_with_psi: g })
                .collect(),
            converged_index: None,
        };
        assert_eq!(traj.next_same_sign(0), Some(3));
        assert_eq!(traj.next_same_sign(1), Some(2));
        assert_eq!(traj.next_same_sign(4), None);
    }

    #[test]
    fn relative_errors() {
        let e = RelativeErrors::of(2.0, -4.0, 0.4, -0.1);
        assert_eq!(e.err_g, Some(0.05));
        assert_eq!(e.err_d, Some(0.1));
        assert_eq!(RelativeErrors::of(0.0, 1.0, 0.0, 0.1).err_g, None);
    }
}
