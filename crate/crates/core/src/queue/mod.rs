//! Single-server queues with deterministic service, controlled by the
//! service time.

pub mod delay;
pub mod loss;

pub use delay::{
    delay_path, ipa_delay_derivative, simulate_md1_delay_cycle, BusyPeriodPosition, DelayPath,
    Md1DelayConfig, Md1DelayPlant,
};
pub use loss::{
    loss_path, sfm_loss_derivative, sfm_loss_derivative_pow, simulate_md1k_loss_cycle, LossPath,
    LossyPeriod, Md1kLossConfig, Md1kLossPlant,
};

use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnstableQueue {
    pub traffic_intensity: f64,
}

impl fmt::Display for UnstableQueue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "traffic intensity {} is not below 1", self.traffic_intensity)
    }
}

impl core::error::Error for UnstableQueue {}

/// Stationary mean sojourn time of M/D/1 (Pollaczek-Khinchine):
/// `u + lambda u^2 / (2 (1 - lambda u))`.
pub fn pk_sojourn(u: f64, lambda: f64) -> Result<f64, UnstableQueue> {
    let rho = stable_rho(u, lambda)?;
    Ok(u + lambda * u * u / (2.0 * (1.0 - rho)))
}

/// `d/du` of [`pk_sojourn`]: `1 + lambda u (2 - lambda u) / (2 (1 - lambda u)^2)`.
pub fn pk_sojourn_derivative(u: f64, lambda: f64) -> Result<f64, UnstableQueue> {
    let rho = stable_rho(u, lambda)?;
    Ok(1.0 + rho * (2.0 - rho) / (2.0 * (1.0 - rho) * (1.0 - rho)))
}

/// Service time at which the stationary mean sojourn equals `target`
/// (positive root of `lambda u^2 - 2(1 + lambda T) u + 2T = 0`).
pub fn pk_service_for_sojourn(target: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return target;
    }
    let b = 1.0 + lambda * target;
    (b - libm::sqrt(b * b - 2.0 * lambda * target)) / lambda
}

fn stable_rho(u: f64, lambda: f64) -> Result<f64, UnstableQueue> {
    let rho = lambda * u;
    if (0.0..1.0).contains(&rho) {
        Ok(rho)
    } else {
        Err(UnstableQueue {
            traffic_intensity: rho,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pk_limits() {
        assert!((pk_sojourn(1e-9, 0.9).unwrap() - 1e-9).abs() < 1e-15);
        assert_eq!(pk_sojourn(1.0, 0.0).unwrap(), 1.0);
        assert!(pk_sojourn(1.2, 0.9).is_err());
        assert!(pk_sojourn_derivative(1.0 / 0.9, 0.9).is_err());
    }

    #[test]
    fn pk_root_for_three() {
        // 0.9 u^2 - 7.4 u + 6 = 0
        let root = (7.4 - libm::sqrt(7.4 * 7.4 - 4.0 * 0.9 * 6.0)) / (2.0 * 0.9);
        assert!((root - 0.911_960).abs() < 1e-6);
        assert!((pk_service_for_sojourn(3.0, 0.9) - root).abs() < 1e-12);
        assert!((pk_sojourn(root, 0.9).unwrap() - 3.0).abs() < 1e-12);
        // the rounded operating point 0.913 sits within 1% of the target
        assert!((pk_sojourn(0.913, 0.9).unwrap() - 3.0).abs() < 0.03);
    }

    #[test]
    fn pk_derivative_matches_central_difference() {
        for &u in &[0.1, 0.5, 0.9132, 1.05] {
            let h = 1e-6;
            let fd = (pk_sojourn(u + h, 0.9).unwrap() - pk_sojourn(u - h, 0.9).unwrap()) / (2.0 * h);
            let an = pk_sojourn_derivative(u, 0.9).unwrap();
            assert!((fd - an).abs() / an < 1e-6, "u={u}: {fd} vs {an}");
        }
        // 1/J' at the r = 3 operating point
        let d = pk_sojourn_derivative(0.9132, 0.9).unwrap();
        assert!((d - 16.26).abs() < 0.05, "{d}");
    }
}
