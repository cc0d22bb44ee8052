#![no_std]

//! Link-level building blocks for pulse-based particle communication over a
//! time-varying, advection-dominated diffusion channel observed by several
//! transverse-offset receivers.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs and an explicit RNG stream; orchestration, file
//! formats and the command line live in `flowdiv-sim`.
//!
//! Signal path of one frame transmission ([`link::run_trial`]):
//!
//! 1. [`modem`] builds a pilot + data frame and its per-tick emission schedule.
//! 2. [`channel`] draws one velocity trace, superposes the advected Green's
//!    function at each receiver and adds calibrated Gaussian noise.
//! 3. [`frontend`] decimates to the receiver rate, matched-filters each
//!    symbol into an N-vector and accumulates pilot energy.
//! 4. [`combining`] weights the receiver branches (SC, EGC, DGC, PGC).
//! 5. [`dsp`] applies pilot-trained gain control and affine MMSE equalization.
//! 6. [`metrics`] slices to the constellation grid and counts errors.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod channel;
pub mod combining;
pub mod dsp;
mod error;
pub mod frontend;
pub mod link;
pub mod metrics;
pub mod modem;
pub mod seed;

pub use error::{Error, ErrorKind, Result};

/// Number of ticks spanned by `duration` seconds at `rate` Hz.
///
/// Products within 1e-9 of an integer are taken as that integer so that
/// e.g. `2.0 * 1000.0` never becomes 2001 ticks through rounding noise.
pub fn ticks_for(duration: f64, rate: f64) -> usize {
    let x = duration * rate;
    let r = libm::round(x);
    if libm::fabs(x - r) < 1e-9 {
        r as usize
    } else {
        libm::ceil(x) as usize
    }
}

/// Returns `Some(n)` when `duration * rate` is an integer `n` (to 1e-9).
pub(crate) fn exact_ticks(duration: f64, rate: f64) -> Option<usize> {
    let x = duration * rate;
    let r = libm::round(x);
    (libm::fabs(x - r) < 1e-9 && r >= 0.0).then_some(r as usize)
}
