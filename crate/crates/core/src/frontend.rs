//! Per-receiver front end: decimation, symbol-synchronous matched filtering
//! and pilot energy.

use alloc::vec::Vec;

use crate::channel::ConcentrationTrace;
use crate::modem::{pulse_of_tick, ModScheme};
use crate::{exact_ticks, Error, Result};

/// Matched-filter output of one receiver for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverObservation {
    pub rx_index: usize,
    /// `w_{j,k}`: one N-vector per transmitted symbol, pilots first.
    pub symbol_vectors: Vec<Vec<f64>>,
    /// Sum of squared norms over the pilot vectors.
    pub pilot_energy: f64,
    pub sync_offset: f64,
}

/// Keeps every `(rate / f_rx)`-th sample starting at index 0. No anti-alias filter.
pub fn downsample(trace: &ConcentrationTrace, f_rx: f64) -> Result<ConcentrationTrace> {
    let ratio = match exact_ticks(trace.rate, 1.0 / f_rx) {
        Some(r) if r >= 1 && f_rx.is_finite() && f_rx > 0.0 => r,
        _ => return Err(Error::config("trace rate must be an integer multiple of f_rx")),
    };
    Ok(ConcentrationTrace {
        rate: f_rx,
        values: trace.values.iter().step_by(ratio).copied().collect(),
    })
}

/// Windowed mean of each pulse subinterval of each of `n_symbols` symbols,
/// starting `sync_offset` seconds into the trace.
pub fn matched_filter(
    trace: &ConcentrationTrace,
    scheme: &ModScheme,
    sync_offset: f64,
    n_symbols: usize,
) -> Result<Vec<Vec<f64>>> {
    let start = exact_ticks(sync_offset, trace.rate)
        .ok_or_else(|| Error::config("sync offset is not on the receiver sample grid"))?;
    let per_symbol = scheme.ticks_per_symbol(trace.rate)?;
    let end = start + n_symbols * per_symbol;
    if end > trace.len() {
        return Err(Error::bounds(alloc::format!(
            "symbol windows end at sample {end} but the trace has {}",
            trace.len()
        )));
    }
    let n = scheme.n_dim;
    let mut counts = alloc::vec![0usize; n];
    for m in 0..per_symbol {
        counts[pulse_of_tick(m, per_symbol, n)] += 1;
    }
    Ok(trace.values[start..end]
        .chunks_exact(per_symbol)
        .map(|window| {
            let mut w = alloc::vec![0.0; n];
            for (m, &v) in window.iter().enumerate() {
                w[pulse_of_tick(m, per_symbol, n)] += v;
            }
            for (x, &c) in w.iter_mut().zip(&counts) {
                *x /= c as f64;
            }
            w
        })
        .collect())
}

pub fn pilot_energy(symbol_vectors: &[Vec<f64>], n_pilot: usize) -> Result<f64> {
    if n_pilot > symbol_vectors.len() {
        return Err(Error::bounds("more pilots requested than symbol vectors available"));
    }
    Ok(symbol_vectors[..n_pilot]
        .iter()
        .map(|w| w.iter().map(|x| x * x).sum::<f64>())
        .sum())
}

/// `E_j / E_main`.
pub fn pilot_energy_ratio(e_j: f64, e_main: f64) -> Result<f64> {
    if !(e_main > 0.0) {
        return Err(Error::degenerate("main receiver pilot energy is zero; ratio undefined"));
    }
    Ok(e_j / e_main)
}

/// Runs the matched filter on a receiver-rate trace and records pilot energy.
pub fn observe(
    rx_index: usize,
    trace: &ConcentrationTrace,
    scheme: &ModScheme,
    sync_offset: f64,
    n_symbols: usize,
    n_pilot: usize,
) -> Result<ReceiverObservation> {
    let symbol_vectors = matched_filter(trace, scheme, sync_offset, n_symbols)?;
    let pilot_energy = pilot_energy(&symbol_vectors, n_pilot)?;
    Ok(ReceiverObservation {
        rx_index,
        symbol_vectors,
        pilot_energy,
        sync_offset,
    })
}
