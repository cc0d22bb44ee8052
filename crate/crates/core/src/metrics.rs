//! Detection, error counting and the statistics used to report them.

use alloc::vec::Vec;

use crate::modem::{gray, ModScheme};
use crate::{Error, Result};

/// Nearest grid point of an (equalized) symbol vector.
///
/// Per-dimension rounding to `{0, .., M-1}` with clamping; an exact `.5`
/// rounds up. On an axis-aligned uniform grid this is minimum Euclidean
/// distance detection.
pub fn slice(vector: &[f64], scheme: &ModScheme) -> Result<usize> {
    if vector.len() != scheme.n_dim {
        return Err(Error::shape("vector dimension differs from N"));
    }
    let top = (scheme.m_levels - 1) as f64;
    let mut index = 0;
    for &x in vector.iter().rev() {
        if !x.is_finite() {
            return Err(Error::config("cannot slice a non-finite value"));
        }
        let level = if x <= 0.0 {
            0.0
        } else if x >= top {
            top
        } else {
            let f = libm::floor(x);
            if x - f >= 0.5 {
                f + 1.0
            } else {
                f
            }
        };
        index = index * scheme.m_levels + level as usize;
    }
    Ok(index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub decided_indices: Vec<usize>,
    pub symbol_errors: usize,
    /// Present iff M is a power of two.
    pub bit_errors: Option<usize>,
    pub n_data: usize,
    pub ser: f64,
    pub ber: Option<f64>,
}

/// Bit errors between two symbols under the per-dimension Gray map.
pub fn bit_errors_between(a: usize, b: usize, scheme: &ModScheme) -> Option<u32> {
    scheme.bits_per_dim()?;
    let m = scheme.m_levels;
    let (mut a, mut b) = (a, b);
    let mut bits = 0;
    for _ in 0..scheme.n_dim {
        bits += (gray(a % m) ^ gray(b % m)).count_ones();
        a /= m;
        b /= m;
    }
    Some(bits)
}

pub fn error_rates(decided: &[usize], truth: &[usize], scheme: &ModScheme) -> Result<DetectionResult> {
    if decided.len() != truth.len() {
        return Err(Error::shape("decided and true symbol counts differ"));
    }
    let n = truth.len();
    let symbol_errors = decided.iter().zip(truth).filter(|(a, b)| a != b).count();
    let bit_errors = scheme.bits_per_dim().map(|_| {
        decided
            .iter()
            .zip(truth)
            .map(|(&a, &b)| bit_errors_between(a, b, scheme).unwrap_or(0) as usize)
            .sum::<usize>()
    });
    let denom = n.max(1) as f64;
    let ber = bit_errors
        .zip(scheme.bits_per_symbol())
        .map(|(e, bps)| e as f64 / (denom * bps as f64));
    Ok(DetectionResult {
        decided_indices: decided.to_vec(),
        symbol_errors,
        bit_errors,
        n_data: n,
        ser: symbol_errors as f64 / denom,
        ber,
    })
}

/// Two-sided 95 % normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `n` trials.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * libm::sqrt(p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)) / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// One-sided sign-test p-value: probability of at least `wins` successes in
/// `wins + losses` fair coin flips. Ties are dropped by the caller.
pub fn sign_test_p(wins: u64, losses: u64) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    // log C(n, k) built incrementally
    let ln_half_n = n as f64 * libm::log(0.5);
    let mut ln_c = 0.0;
    let mut tail = 0.0;
    for k in 0..=n {
        if k > 0 {
            ln_c += libm::log((n - k + 1) as f64) - libm::log(k as f64);
        }
        if k >= wins {
            tail += libm::exp(ln_c + ln_half_n);
        }
    }
    tail.min(1.0)
}

/// Fraction of ratios at or above `eta`.
pub fn structured_fraction(ratios: &[f64], eta: f64) -> f64 {
    if ratios.is_empty() {
        return 0.0;
    }
    ratios.iter().filter(|&&r| r >= eta).count() as f64 / ratios.len() as f64
}

/// Outward scan for the largest transverse offset whose structured
/// probability still reaches `1 - delta`; stops at the first failure.
///
/// `y_grid` must be ascending and start at 0.
pub fn critical_distance_from(y_grid: &[f64], probabilities: &[f64], delta: f64) -> Result<f64> {
    if y_grid.is_empty() {
        return Err(Error::config("empty y grid"));
    }
    if y_grid.len() != probabilities.len() {
        return Err(Error::shape("one probability per grid point is required"));
    }
    validate_grid(y_grid)?;
    let target = 1.0 - delta;
    let mut y_c = 0.0;
    for (&y, &p) in y_grid.iter().zip(probabilities) {
        if p >= target {
            y_c = y.abs();
        } else {
            break;
        }
    }
    Ok(y_c)
}

pub fn validate_grid(y_grid: &[f64]) -> Result<()> {
    if y_grid.is_empty() {
        return Err(Error::config("empty y grid"));
    }
    if y_grid[0] != 0.0 {
        return Err(Error::config("y grid must start at 0"));
    }
    if y_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config("y grid must be strictly ascending"));
    }
    Ok(())
}
