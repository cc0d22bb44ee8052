//! Orthogonal rectangular pulses and the M^N amplitude constellation.
//!
//! A symbol of duration `t_sym` is split into `n_dim` disjoint subintervals,
//! one rectangular pulse each. Every pulse carries one of `m_levels`
//! nonnegative integer amplitudes, so a symbol is a point of the grid
//! `{0, .., M-1}^N`. Points are indexed lexicographically with dimension 0
//! varying fastest: `index = sum_i level_i * M^i`.
//!
//! On a discrete tick grid with `L` ticks per symbol, tick `k` of a symbol
//! belongs to pulse `floor(k * N / L)`. This is exactly the continuous
//! interval rule sampled at the tick instants and also covers `L` not
//! divisible by `N`.

use alloc::vec::Vec;
use rand::Rng;

use crate::seed::{self, Purpose};
use crate::{exact_ticks, Error, Result};

/// Default upper bound on the constellation size.
pub const DEFAULT_CONSTELLATION_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModScheme {
    /// Pulses per symbol (N).
    pub n_dim: usize,
    /// Amplitude levels per pulse (M).
    pub m_levels: usize,
    /// Symbol duration in seconds.
    pub t_sym: f64,
}

impl ModScheme {
    pub fn new(n_dim: usize, m_levels: usize, t_sym: f64) -> Result<Self> {
        let s = Self {
            n_dim,
            m_levels,
            t_sym,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_dim == 0 {
            return Err(Error::config("n_dim must be at least 1"));
        }
        if self.m_levels == 0 {
            return Err(Error::config("m_levels must be at least 1"));
        }
        if !(self.t_sym.is_finite() && self.t_sym > 0.0) {
            return Err(Error::config("t_sym must be positive and finite"));
        }
        Ok(())
    }

    /// Constellation size M^N, or `None` on overflow.
    pub fn order(&self) -> Option<usize> {
        let mut n: usize = 1;
        for _ in 0..self.n_dim {
            n = n.checked_mul(self.m_levels)?;
        }
        Some(n)
    }

    /// Bits per pulse under the Gray map; `None` unless M is a power of two.
    pub fn bits_per_dim(&self) -> Option<u32> {
        (self.m_levels.is_power_of_two() && self.m_levels >= 2)
            .then(|| self.m_levels.trailing_zeros())
    }

    pub fn bits_per_symbol(&self) -> Option<u32> {
        self.bits_per_dim().map(|b| b * self.n_dim as u32)
    }

    /// Ticks per symbol at `rate`; the symbol must span a whole number of ticks.
    pub fn ticks_per_symbol(&self, rate: f64) -> Result<usize> {
        match exact_ticks(self.t_sym, rate) {
            Some(l) if l >= self.n_dim => Ok(l),
            Some(_) => Err(Error::config(alloc::format!(
                "symbol has fewer ticks at {rate} Hz than pulses ({})",
                self.n_dim
            ))),
            None => Err(Error::config(alloc::format!(
                "t_sym = {} s is not a whole number of ticks at {rate} Hz",
                self.t_sym
            ))),
        }
    }

    /// Writes the levels of constellation point `index` into `out`.
    pub fn levels_into(&self, mut index: usize, out: &mut [usize]) {
        for slot in out.iter_mut().take(self.n_dim) {
            *slot = index % self.m_levels;
            index /= self.m_levels;
        }
    }

    pub fn levels(&self, index: usize) -> Vec<usize> {
        let mut v = alloc::vec![0; self.n_dim];
        self.levels_into(index, &mut v);
        v
    }

    pub fn index_of(&self, levels: &[usize]) -> usize {
        levels
            .iter()
            .rev()
            .fold(0, |acc, &l| acc * self.m_levels + l)
    }

    /// Amplitude vector (levels as reals) of point `index`.
    pub fn amplitudes(&self, index: usize) -> Vec<f64> {
        self.levels(index).into_iter().map(|l| l as f64).collect()
    }
}

/// Pulse owning tick `k` of a symbol with `ticks` ticks and `n_dim` pulses.
#[inline]
pub fn pulse_of_tick(k: usize, ticks: usize, n_dim: usize) -> usize {
    k * n_dim / ticks
}

/// Value (0 or 1) of rectangular pulse `i` at time `t` within the symbol.
pub fn pulse_value(i: usize, t: f64, scheme: &ModScheme) -> Result<u8> {
    if i >= scheme.n_dim {
        return Err(Error::bounds(alloc::format!(
            "pulse {i} out of range for N = {}",
            scheme.n_dim
        )));
    }
    if !(0.0..scheme.t_sym).contains(&t) {
        return Err(Error::bounds("t outside [0, t_sym)"));
    }
    let n = scheme.n_dim as f64;
    let lo = i as f64 * scheme.t_sym / n;
    let hi = (i + 1) as f64 * scheme.t_sym / n;
    Ok(u8::from(t >= lo && t < hi))
}

/// Full lexicographic grid `{0..M-1}^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    n_dim: usize,
    m_levels: usize,
    /// Row-major, `n_dim` entries per point.
    levels: Vec<usize>,
}

impl Constellation {
    pub fn len(&self) -> usize {
        self.levels.len() / self.n_dim
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn n_dim(&self) -> usize {
        self.n_dim
    }

    pub fn m_levels(&self) -> usize {
        self.m_levels
    }

    pub fn point(&self, index: usize) -> &[usize] {
        &self.levels[index * self.n_dim..(index + 1) * self.n_dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[usize]> {
        self.levels.chunks_exact(self.n_dim)
    }
}

pub fn build_constellation(n_dim: usize, m_levels: usize) -> Result<Constellation> {
    build_constellation_capped(n_dim, m_levels, DEFAULT_CONSTELLATION_CAP)
}

pub fn build_constellation_capped(n_dim: usize, m_levels: usize, cap: usize) -> Result<Constellation> {
    if n_dim == 0 || m_levels == 0 {
        return Err(Error::config("constellation needs n_dim >= 1 and m_levels >= 1"));
    }
    let scheme = ModScheme {
        n_dim,
        m_levels,
        t_sym: 1.0,
    };
    let order = scheme
        .order()
        .filter(|&o| o <= cap)
        .ok_or_else(|| Error::config(alloc::format!("M^N exceeds the constellation cap {cap}")))?;
    let mut levels = alloc::vec![0; order * n_dim];
    for (idx, row) in levels.chunks_exact_mut(n_dim).enumerate() {
        scheme.levels_into(idx, row);
    }
    Ok(Constellation {
        n_dim,
        m_levels,
        levels,
    })
}

/// Binary-reflected Gray code of an amplitude level.
#[inline]
pub fn gray(level: usize) -> usize {
    level ^ (level >> 1)
}

/// One transmitted frame: pilots followed by data, as constellation indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub scheme: ModScheme,
    pub pilot_symbols: Vec<usize>,
    pub data_symbols: Vec<usize>,
    pub pilot_seed: u64,
}

impl Frame {
    pub fn n_pilot(&self) -> usize {
        self.pilot_symbols.len()
    }

    pub fn n_data(&self) -> usize {
        self.data_symbols.len()
    }

    pub fn n_symbols(&self) -> usize {
        self.pilot_symbols.len() + self.data_symbols.len()
    }

    pub fn symbols(&self) -> impl Iterator<Item = usize> + '_ {
        self.pilot_symbols.iter().chain(&self.data_symbols).copied()
    }

    pub fn duration(&self) -> f64 {
        self.n_symbols() as f64 * self.scheme.t_sym
    }

    /// True amplitude vectors of the pilot symbols.
    pub fn pilot_amplitudes(&self) -> Vec<Vec<f64>> {
        self.pilot_symbols
            .iter()
            .map(|&s| self.scheme.amplitudes(s))
            .collect()
    }
}

/// The deterministic pilot sequence for `pilot_seed`.
pub fn pilot_sequence(scheme: &ModScheme, n_pilot: usize, pilot_seed: u64) -> Result<Vec<usize>> {
    let order = checked_order(scheme)?;
    let mut rng = seed::fixed_stream(pilot_seed, Purpose::Pilot);
    Ok((0..n_pilot).map(|_| rng.random_range(0..order)).collect())
}

fn checked_order(scheme: &ModScheme) -> Result<usize> {
    scheme
        .order()
        .filter(|&o| o <= DEFAULT_CONSTELLATION_CAP)
        .ok_or_else(|| Error::config("M^N exceeds the constellation cap"))
}

pub fn generate_frame<R: Rng + ?Sized>(
    scheme: &ModScheme,
    n_pilot: usize,
    n_data: usize,
    pilot_seed: u64,
    data_rng: &mut R,
) -> Result<Frame> {
    scheme.validate()?;
    let order = checked_order(scheme)?;
    let pilot_symbols = pilot_sequence(scheme, n_pilot, pilot_seed)?;
    let data_symbols = (0..n_data).map(|_| data_rng.random_range(0..order)).collect();
    Ok(Frame {
        scheme: *scheme,
        pilot_symbols,
        data_symbols,
        pilot_seed,
    })
}

/// Per-tick emission amplitudes on the channel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionSchedule {
    pub amplitudes: Vec<f64>,
    pub f_sim: f64,
    pub frame_duration: f64,
}

impl EmissionSchedule {
    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// Single impulse of `amount` (amplitude units) at tick `at`, zero elsewhere.
    pub fn impulse(len: usize, at: usize, amount: f64, f_sim: f64) -> Self {
        let mut amplitudes = alloc::vec![0.0; len];
        amplitudes[at] = amount;
        Self {
            amplitudes,
            f_sim,
            frame_duration: len as f64 / f_sim,
        }
    }
}

pub fn frame_to_emission(frame: &Frame, f_sim: f64, emission_scale: f64) -> Result<EmissionSchedule> {
    if !(emission_scale.is_finite() && emission_scale >= 0.0) {
        return Err(Error::config("emission_scale must be finite and nonnegative"));
    }
    let scheme = &frame.scheme;
    let ticks = scheme.ticks_per_symbol(f_sim)?;
    let mut amplitudes = Vec::with_capacity(frame.n_symbols() * ticks);
    let mut levels = alloc::vec![0usize; scheme.n_dim];
    for sym in frame.symbols() {
        scheme.levels_into(sym, &mut levels);
        amplitudes.extend(
            (0..ticks).map(|k| levels[pulse_of_tick(k, ticks, scheme.n_dim)] as f64 * emission_scale),
        );
    }
    Ok(EmissionSchedule {
        amplitudes,
        f_sim,
        frame_duration: frame.duration(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SimRng;
    use rand::SeedableRng;

    fn s24() -> ModScheme {
        ModScheme::new(2, 4, 2.0).unwrap()
    }

    #[test]
    fn constellation_2_4_ordering() {
        let c = build_constellation(2, 4).unwrap();
        assert_eq!(c.len(), 16);
        assert_eq!(c.point(0), &[0, 0]);
        assert_eq!(c.point(1), &[1, 0]);
        assert_eq!(c.point(2), &[2, 0]);
        assert_eq!(c.point(4), &[0, 1]);
    }

    #[test]
    fn constellation_degenerate_and_sum() {
        let c = build_constellation(1, 1).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.point(0), &[0]);

        let c = build_constellation(3, 3).unwrap();
        assert_eq!(c.len(), 27);
        // brute-force enumeration of the grid
        let mut brute = 0;
        for a in 0..3 {
            for b in 0..3 {
                for d in 0..3 {
                    brute += a + b + d;
                }
            }
        }
        let total: usize = c.points().flatten().sum();
        assert_eq!(total, brute);
        assert_eq!(total, 81);
    }

    #[test]
    fn constellation_has_no_duplicates() {
        let c = build_constellation(3, 4).unwrap();
        let mut seen = alloc::collections::BTreeSet::new();
        for p in c.points() {
            assert!(seen.insert(p.to_vec()));
        }
    }

    #[test]
    fn constellation_cap() {
        let err = build_constellation(13, 2).unwrap_err();
        assert_eq!(err.kind(), crate::ErrorKind::Config);
        assert!(build_constellation_capped(13, 2, 8192).is_ok());
    }

    #[test]
    fn index_round_trip() {
        let s = ModScheme::new(3, 4, 2.0).unwrap();
        for idx in 0..64 {
            assert_eq!(s.index_of(&s.levels(idx)), idx);
        }
    }

    #[test]
    fn pulse_values() {
        let s = s24();
        assert_eq!(pulse_value(0, 0.5, &s).unwrap(), 1);
        assert_eq!(pulse_value(1, 0.5, &s).unwrap(), 0);
        assert_eq!(pulse_value(1, 1.0, &s).unwrap(), 1);
        assert!(pulse_value(2, 0.5, &s).is_err());
        assert!(pulse_value(0, 2.0, &s).is_err());
    }

    #[test]
    fn pulses_orthogonal_and_partition_on_tick_grid() {
        for &(n, t_sym, rate) in &[(2usize, 2.0, 1000.0), (3, 2.0, 1000.0), (4, 2.0, 100.0), (3, 2.0, 100.0)] {
            let s = ModScheme::new(n, 2, t_sym).unwrap();
            let ticks = s.ticks_per_symbol(rate).unwrap();
            let pulse = |i: usize| -> Vec<u32> {
                (0..ticks)
                    .map(|k| u32::from(pulse_of_tick(k, ticks, n) == i))
                    .collect()
            };
            for i in 0..n {
                for j in 0..n {
                    let ip: u32 = pulse(i).iter().zip(pulse(j)).map(|(a, b)| a * b).sum();
                    if i != j {
                        assert_eq!(ip, 0);
                    } else if ticks % n == 0 {
                        assert_eq!(ip as usize, ticks / n);
                    }
                }
            }
            for k in 0..ticks {
                let t = k as f64 / rate;
                let sum: u32 = (0..n).map(|i| pulse_value(i, t, &s).unwrap() as u32).sum();
                assert_eq!(sum, 1);
                // integer rule agrees with the continuous one at tick instants
                assert_eq!(pulse_value(pulse_of_tick(k, ticks, n), t, &s).unwrap(), 1);
            }
        }
    }

    #[test]
    fn empty_frame() {
        let mut rng = SimRng::seed_from_u64(1);
        let f = generate_frame(&s24(), 0, 0, 5, &mut rng).unwrap();
        assert_eq!(f.n_symbols(), 0);
        let e = frame_to_emission(&f, 1000.0, 1.0).unwrap();
        assert!(e.is_empty());
    }

    #[test]
    fn pilots_deterministic() {
        let mut r1 = SimRng::seed_from_u64(1);
        let mut r2 = SimRng::seed_from_u64(2);
        let a = generate_frame(&s24(), 32, 10, 99, &mut r1).unwrap();
        let b = generate_frame(&s24(), 32, 10, 99, &mut r2).unwrap();
        assert_eq!(a.pilot_symbols, b.pilot_symbols);
        assert_ne!(a.data_symbols, b.data_symbols);
    }

    #[test]
    fn data_uniform() {
        let mut rng = SimRng::seed_from_u64(11);
        let f = generate_frame(&s24(), 0, 100_000, 0, &mut rng).unwrap();
        let mut counts = [0usize; 16];
        for &s in &f.data_symbols {
            counts[s] += 1;
        }
        for c in counts {
            let freq = c as f64 / 100_000.0;
            assert!((freq - 1.0 / 16.0).abs() < 0.005, "{freq}");
        }
    }

    #[test]
    fn emission_of_single_symbol() {
        let s = s24();
        let f = Frame {
            scheme: s,
            pilot_symbols: alloc::vec![],
            data_symbols: alloc::vec![s.index_of(&[3, 1])],
            pilot_seed: 0,
        };
        let e = frame_to_emission(&f, 1000.0, 2.5).unwrap();
        assert_eq!(e.len(), 2000);
        assert!(e.amplitudes[..1000].iter().all(|&a| a == 7.5));
        assert!(e.amplitudes[1000..].iter().all(|&a| a == 2.5));
    }

    #[test]
    fn all_zero_symbols_give_zero_schedule() {
        let f = Frame {
            scheme: s24(),
            pilot_symbols: alloc::vec![0; 3],
            data_symbols: alloc::vec![0; 4],
            pilot_seed: 0,
        };
        let e = frame_to_emission(&f, 1000.0, 1.0).unwrap();
        assert_eq!(e.len(), 7 * 2000);
        assert!(e.amplitudes.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn full_frame_schedule_length() {
        let mut rng = SimRng::seed_from_u64(3);
        let f = generate_frame(&s24(), 32, 1000, 1, &mut rng).unwrap();
        let e = frame_to_emission(&f, 1000.0, 1.0).unwrap();
        assert_eq!(e.len(), 2_064_000);
        assert!(e.amplitudes.iter().all(|&a| a >= 0.0));
        assert_eq!(e.frame_duration, 2064.0);
    }

    #[test]
    fn non_integer_symbol_ticks_rejected() {
        let s = ModScheme::new(2, 4, 0.0015).unwrap();
        assert!(s.ticks_per_symbol(1000.0).is_err());
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        for l in 0..15usize {
            assert_eq!((gray(l) ^ gray(l + 1)).count_ones(), 1);
        }
        assert_eq!(s24().bits_per_symbol(), Some(4));
        assert_eq!(ModScheme::new(3, 3, 2.0).unwrap().bits_per_symbol(), None);
    }
}
