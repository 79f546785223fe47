//! Seeded randomness and running statistics shared by every plant.
//!
//! The generator is PCG-XSH-RR 64/32 (O'Neill 2014) as implemented by
//! `rand_pcg::Pcg32`: a 64-bit LCG with multiplier `6364136223846793005`,
//! increment `2 * stream_id + 1`, and the state initialised as
//! `state = (seed + inc) * mult + inc`. A 64-bit draw is two 32-bit outputs,
//! low word first. Uniform reals take the top 53 bits of a 64-bit draw.
//!
//! Reference vector, seed 42 / stream 0, first four `next_u64` outputs:
//!
//! ```text
//! 0xc15e_f750_21b7_56ee
//! 0x35db_428d_9548_a9bd
//! 0xa243_807f_f007_1649
//! 0x103c_a9d2_b4c5_bdd2
//! ```
//!
//! Ports in other languages reproduce every trace bit-exactly as long as they
//! consume draws in the same order.

use core::fmt;

use rand_core::Rng;
use rand_pcg::Pcg32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimError {
    InvalidRate(f64),
    InvalidRange { lo: f64, hi: f64 },
    EmptyRange { from: usize, to: usize, len: usize },
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::InvalidRate(r) => write!(f, "rate must be positive and finite, got {r}"),
            SimError::InvalidRange { lo, hi } => {
                write!(f, "invalid range [{lo}, {hi}): need finite lo < hi")
            }
            SimError::EmptyRange { from, to, len } => {
                write!(f, "index range {from}..={to} is empty or outside 1..={len}")
            }
        }
    }
}

impl core::error::Error for SimError {}

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Deliberately not `Clone`: replaying a stream (common random numbers) means
/// constructing it again from the same pair.
#[derive(Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    pcg: Pcg32,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self {
            seed,
            stream_id,
            pcg: Pcg32::new(seed, stream_id),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn next_u32(&mut self) -> u32 {
        self.pcg.next_u32()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.pcg.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_M53
    }

    /// Uniform on the open interval `(0, 1)`.
    fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * TWO_POW_M53
    }

    /// Exponential sample by inversion; strictly positive.
    pub fn exponential(&mut self, rate: f64) -> Result<f64, SimError> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(SimError::InvalidRate(rate));
        }
        let p = self.next_open01();
        Ok(exponential_quantile(p, rate))
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64, SimError> {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(SimError::InvalidRange { lo, hi });
        }
        let x = lo + (hi - lo) * self.next_f64();
        // rounding can land exactly on hi for wide ranges
        Ok(if x < hi { x } else { lo })
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Uniform integer on the inclusive range `[lo, hi]` (multiply-shift, one draw).
    pub fn int_inclusive(&mut self, lo: u32, hi: u32) -> u32 {
        debug_assert!(lo <= hi);
        let span = u64::from(hi - lo) + 1;
        lo + ((u64::from(self.next_u32()) * span) >> 32) as u32
    }
}

/// Inverse CDF of the exponential distribution.
pub fn exponential_quantile(p: f64, rate: f64) -> f64 {
    -libm::log1p(-p) / rate
}

/// Running count / sum / sum of squares / extrema.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleStats {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for CycleStats {
    fn default() -> Self {
        Self {
            count: 0,
            sum: 0.0,
            sum_sq: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl CycleStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> Option<f64> {
        if self.count < 2 {
            return None;
        }
        let n = self.count as f64;
        let m = self.sum / n;
        Some(((self.sum_sq - n * m * m) / (n - 1.0)).max(0.0))
    }

    pub fn range(&self) -> Option<f64> {
        (self.count > 0).then_some(self.max - self.min)
    }
}

impl FromIterator<f64> for CycleStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}

/// Arithmetic mean of `rows[from..=to]` with 1-based inclusive indices, the
/// same numbering as control cycles.
pub fn mean_over(rows: &[f64], from: usize, to: usize) -> Result<f64, SimError> {
    if from == 0 || from > to || to > rows.len() {
        return Err(SimError::EmptyRange {
            from,
            to,
            len: rows.len(),
        });
    }
    let slice = &rows[from - 1..to];
    Ok(slice.iter().sum::<f64>() / slice.len() as f64)
}
