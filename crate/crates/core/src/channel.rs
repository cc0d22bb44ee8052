//! Time-varying advection-diffusion channel.
//!
//! Under a spatially uniform flow the free-space Green's function is the
//! diffusion kernel shifted by the displacement the flow has accumulated
//! since release:
//!
//! ```text
//! c(t) = Q (4 pi D tau)^(-3/2) exp(-|r_rx - r_tx - s(tau)|^2 / (4 D tau)),  tau = t - t_release
//! ```
//!
//! The flow velocity is redrawn every channel tick (`1/f_sim`): `v_x`, `v_y`
//! are independent Gaussians and `v_z = 0`. One velocity realization is
//! shared by all receivers of a frame.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::modem::EmissionSchedule;
use crate::{exact_ticks, ticks_for, Error, Result};

pub type Vec3 = [f64; 3];

/// Along-flow/vertical kernel exponent beyond which a release is ignored in
/// frame superposition; `exp(-50)` is about 2e-22 of the kernel's peak.
/// The transverse factor is never truncated, so far-off receivers keep
/// their (tiny) signal with the same relative accuracy.
pub const KERNEL_TAIL_CUTOFF: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// m^2/s
    pub diffusion_coeff: f64,
    /// m/s
    pub mean_vel: Vec3,
    /// m/s
    pub std_vel: Vec3,
    /// Channel sampling rate, Hz.
    pub f_sim: f64,
    /// Receiver processing rate, Hz.
    pub f_rx: f64,
    /// Channel memory, s.
    pub t_mem: f64,
    /// Molecules released per unit amplitude per second.
    pub emission_scale: f64,
}

impl Default for ChannelParams {
    /// Parameters of the reference airborne scenario.
    fn default() -> Self {
        Self {
            diffusion_coeff: 6.7698e-6,
            mean_vel: [0.5, 0.0, 0.0],
            std_vel: [1e-3, 0.1, 0.0],
            f_sim: 1000.0,
            f_rx: 100.0,
            t_mem: 30.0,
            emission_scale: 1.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &Vec3| v.iter().all(|x| x.is_finite());
        if !(self.diffusion_coeff.is_finite() && self.diffusion_coeff > 0.0) {
            return Err(Error::config("diffusion_coeff must be positive and finite"));
        }
        if !finite(&self.mean_vel) || !finite(&self.std_vel) {
            return Err(Error::config("velocity statistics must be finite"));
        }
        if self.std_vel.iter().any(|&s| s < 0.0) {
            return Err(Error::config("velocity standard deviations must be nonnegative"));
        }
        if self.mean_vel[2] != 0.0 || self.std_vel[2] != 0.0 {
            return Err(Error::config("the z velocity component must be zero"));
        }
        if !(self.f_sim.is_finite() && self.f_sim > 0.0 && self.f_rx.is_finite() && self.f_rx > 0.0) {
            return Err(Error::config("f_sim and f_rx must be positive and finite"));
        }
        self.decimation()?;
        if !(self.t_mem.is_finite() && self.t_mem > 0.0) {
            return Err(Error::config("t_mem must be positive and finite"));
        }
        if !(self.emission_scale.is_finite() && self.emission_scale >= 0.0) {
            return Err(Error::config("emission_scale must be finite and nonnegative"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.f_sim
    }

    /// Integer ratio `f_sim / f_rx`.
    pub fn decimation(&self) -> Result<usize> {
        match exact_ticks(self.f_sim, 1.0 / self.f_rx) {
            Some(d) if d >= 1 => Ok(d),
            _ => Err(Error::config("f_sim must be an integer multiple of f_rx")),
        }
    }

    /// Channel memory in ticks.
    pub fn memory_ticks(&self) -> usize {
        ticks_for(self.t_mem, self.f_sim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub tx_pos: Vec3,
    /// Index 0 is the main receiver.
    pub rx_pos: Vec<Vec3>,
}

impl Geometry {
    /// Receivers on the line `x = main_x, z = main_z` at the given `y` offsets.
    pub fn transverse_array(tx_pos: Vec3, main: Vec3, ys: &[f64]) -> Self {
        Self {
            tx_pos,
            rx_pos: ys.iter().map(|&y| [main[0], y, main[2]]).collect(),
        }
    }

    /// `n_rx` receivers at `y = 0, +d, -d, +2d, -2d, ...` relative to the main one.
    pub fn symmetric_array(tx_pos: Vec3, main: Vec3, n_rx: usize, delta_y: f64) -> Self {
        let ys: Vec<f64> = (0..n_rx).map(|j| main[1] + symmetric_offset(j) as f64 * delta_y).collect();
        Self::transverse_array(tx_pos, main, &ys)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rx_pos.is_empty() {
            return Err(Error::config("at least one receiver is required"));
        }
        let finite = |v: &Vec3| v.iter().all(|x| x.is_finite());
        if !finite(&self.tx_pos) || !self.rx_pos.iter().all(finite) {
            return Err(Error::config("positions must be finite"));
        }
        Ok(())
    }

    pub fn main_rx(&self) -> Vec3 {
        self.rx_pos[0]
    }

    pub fn truncated(&self, n_rx: usize) -> Self {
        Self {
            tx_pos: self.tx_pos,
            rx_pos: self.rx_pos[..n_rx.min(self.rx_pos.len())].to_vec(),
        }
    }
}

/// Offset multiplier of receiver `j` in a symmetric array: 0, 1, -1, 2, -2, ...
pub fn symmetric_offset(j: usize) -> i64 {
    let k = j.div_ceil(2) as i64;
    if j % 2 == 1 {
        k
    } else {
        -k
    }
}

/// Per-tick flow velocity and its running integral.
///
/// `samples[k]` acts on `[k dt, (k+1) dt)` and `cum_displacement[k]` is the
/// position reached at `(k+1) dt`, so `cum_displacement[0] = samples[0] * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityTrace {
    pub dt: f64,
    pub samples: Vec<Vec3>,
    pub cum_displacement: Vec<Vec3>,
}

impl VelocityTrace {
    pub fn from_samples(dt: f64, samples: Vec<Vec3>) -> Self {
        let mut acc = [0.0; 3];
        let cum_displacement = samples
            .iter()
            .map(|v| {
                for c in 0..3 {
                    acc[c] += v[c] * dt;
                }
                acc
            })
            .collect();
        Self {
            dt,
            samples,
            cum_displacement,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time span covered by the trace.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    /// Flow displacement since time 0 at tick boundary `k` (`k <= len`).
    #[inline]
    pub fn position_at_tick(&self, k: usize) -> Vec3 {
        if k == 0 {
            [0.0; 3]
        } else {
            self.cum_displacement[k - 1]
        }
    }

    /// Displacement since time 0 at time `t`, linear within a tick.
    pub fn position_at(&self, t: f64) -> Result<Vec3> {
        let n = self.len();
        if !(t >= 0.0 && t <= self.duration() * (1.0 + 1e-12)) {
            return Err(Error::bounds("time outside the velocity trace"));
        }
        let u = t / self.dt;
        let k = (libm::floor(u) as usize).min(n);
        let p = self.position_at_tick(k);
        if k == n {
            return Ok(p);
        }
        let frac = u - k as f64;
        let v = self.samples[k];
        Ok([
            p[0] + v[0] * frac * self.dt,
            p[1] + v[1] * frac * self.dt,
            p[2] + v[2] * frac * self.dt,
        ])
    }
}

pub fn sample_velocity_trace<R: Rng + ?Sized>(
    params: &ChannelParams,
    duration: f64,
    rng: &mut R,
) -> Result<VelocityTrace> {
    params.validate()?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::config("duration must be positive and finite"));
    }
    Ok(sample_velocity_ticks(params, ticks_for(duration, params.f_sim), rng))
}

/// Draws exactly `n` velocity ticks. A shorter draw is a prefix of a longer
/// one from the same stream.
pub fn sample_velocity_ticks<R: Rng + ?Sized>(params: &ChannelParams, n: usize, rng: &mut R) -> VelocityTrace {
    let [mx, my, _] = params.mean_vel;
    let [sx, sy, _] = params.std_vel;
    let samples = (0..n)
        .map(|_| {
            let zx: f64 = rng.sample(StandardNormal);
            let zy: f64 = rng.sample(StandardNormal);
            [mx + sx * zx, my + sy * zy, 0.0]
        })
        .collect();
    VelocityTrace::from_samples(params.dt(), samples)
}

/// Free-space diffusion kernel for quantity `q` after `tau` seconds at offset `delta`.
#[inline]
pub fn green(diffusion_coeff: f64, q: f64, tau: f64, delta: Vec3) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let four_dt = 4.0 * diffusion_coeff * tau;
    let r2 = delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2];
    q * libm::pow(PI * four_dt, -1.5) * libm::exp(-r2 / four_dt)
}

/// Concentration at `rx_pos` due to `quantity` released at `release_time`.
///
/// Returns 0 for `tau <= 0` and `tau > t_mem`.
pub fn impulse_concentration(
    params: &ChannelParams,
    tx_pos: Vec3,
    rx_pos: Vec3,
    release_time: f64,
    quantity: f64,
    trace: &VelocityTrace,
    eval_times: &[f64],
) -> Result<Vec<f64>> {
    let start = trace.position_at(release_time)?;
    eval_times
        .iter()
        .map(|&t| {
            let tau = t - release_time;
            if tau <= 0.0 || tau > params.t_mem {
                return Ok(0.0);
            }
            let p = trace.position_at(t)?;
            let delta = [
                rx_pos[0] - tx_pos[0] - (p[0] - start[0]),
                rx_pos[1] - tx_pos[1] - (p[1] - start[1]),
                rx_pos[2] - tx_pos[2] - (p[2] - start[2]),
            ];
            Ok(green(params.diffusion_coeff, quantity, tau, delta))
        })
        .collect()
}

/// Channel output at one receiver, sampled at `rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationTrace {
    pub rate: f64,
    pub values: Vec<f64>,
}

impl ConcentrationTrace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Number of channel ticks simulated for a frame: `ceil(frame_duration + t_mem) * f_sim`.
pub fn trace_ticks(frame_duration: f64, params: &ChannelParams) -> usize {
    let secs = libm::ceil(frame_duration + params.t_mem - 1e-9);
    ticks_for(secs, params.f_sim)
}

const FINE_BLOCK: usize = 32;
const COARSE_BLOCK: usize = 1024;

#[derive(Clone, Copy)]
struct BlockBounds {
    min_x: f64,
    max_x: f64,
    min_z: f64,
    max_z: f64,
    active: bool,
}

/// Superposes the kernel of every emission tick at a set of receivers.
///
/// Releases are grouped into blocks; a block is skipped when a lower bound
/// of its along-flow/vertical exponent exceeds the cutoff for every
/// receiver, so the result equals the unpruned per-release loop.
pub struct Superposer<'a> {
    amplitudes: &'a [f64],
    offsets: Vec<Vec3>,
    pos_x: Vec<f64>,
    pos_y: Vec<f64>,
    pos_z: Vec<f64>,
    /// `1 / (4 D k dt)` for lag `k` ticks.
    inv_four_dt: Vec<f64>,
    /// `scale * dt * (4 pi D k dt)^-1.5` for lag `k`.
    prefactor: Vec<f64>,
    memory: usize,
    cutoff: f64,
    fine: Vec<BlockBounds>,
    coarse: Vec<BlockBounds>,
}

impl<'a> Superposer<'a> {
    pub fn new(
        schedule: &'a EmissionSchedule,
        geometry: &Geometry,
        params: &ChannelParams,
        trace: &VelocityTrace,
    ) -> Result<Self> {
        params.validate()?;
        geometry.validate()?;
        let dt = params.dt();
        let memory = params.memory_ticks();
        let n = trace.len();
        let mut pos_x = Vec::with_capacity(n + 1);
        let mut pos_y = Vec::with_capacity(n + 1);
        let mut pos_z = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let p = trace.position_at_tick(k);
            pos_x.push(p[0]);
            pos_y.push(p[1]);
            pos_z.push(p[2]);
        }
        let d = params.diffusion_coeff;
        let mut inv_four_dt = alloc::vec![0.0; memory + 1];
        let mut prefactor = alloc::vec![0.0; memory + 1];
        for k in 1..=memory {
            let tau = k as f64 * dt;
            inv_four_dt[k] = 1.0 / (4.0 * d * tau);
            prefactor[k] = params.emission_scale * dt * libm::pow(4.0 * PI * d * tau, -1.5);
        }
        let offsets = geometry
            .rx_pos
            .iter()
            .map(|r| {
                [
                    r[0] - geometry.tx_pos[0],
                    r[1] - geometry.tx_pos[1],
                    r[2] - geometry.tx_pos[2],
                ]
            })
            .collect();
        let amplitudes = &schedule.amplitudes[..];
        let releases = amplitudes.len().min(n + 1);
        let bounds = |size: usize| -> Vec<BlockBounds> {
            (0..releases.div_ceil(size))
                .map(|b| {
                    let r = b * size..((b + 1) * size).min(releases);
                    let mut bb = BlockBounds {
                        min_x: f64::INFINITY,
                        max_x: f64::NEG_INFINITY,
                        min_z: f64::INFINITY,
                        max_z: f64::NEG_INFINITY,
                        active: false,
                    };
                    for i in r {
                        bb.min_x = bb.min_x.min(pos_x[i]);
                        bb.max_x = bb.max_x.max(pos_x[i]);
                        bb.min_z = bb.min_z.min(pos_z[i]);
                        bb.max_z = bb.max_z.max(pos_z[i]);
                        bb.active |= amplitudes[i] != 0.0;
                    }
                    bb
                })
                .collect()
        };
        let fine = bounds(FINE_BLOCK);
        let coarse = bounds(COARSE_BLOCK);
        Ok(Self {
            amplitudes: &amplitudes[..releases],
            offsets,
            pos_x,
            pos_y,
            pos_z,
            inv_four_dt,
            prefactor,
            memory,
            cutoff: KERNEL_TAIL_CUTOFF,
            fine,
            coarse,
        })
    }

    /// Overrides the tail cutoff; `f64::INFINITY` disables pruning.
    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn n_receivers(&self) -> usize {
        self.offsets.len()
    }

    /// Last tick that can be evaluated with the velocity trace supplied.
    pub fn max_tick(&self) -> usize {
        self.pos_x.len() - 1
    }

    fn block_excluded(&self, bb: &BlockBounds, base: &[Vec3], inv_min: f64) -> bool {
        if !bb.active {
            return true;
        }
        if !self.cutoff.is_finite() {
            return false;
        }
        let dist = |lo: f64, hi: f64| {
            if lo > 0.0 {
                lo
            } else if hi < 0.0 {
                -hi
            } else {
                0.0
            }
        };
        base.iter().all(|b| {
            let dx = dist(b[0] + bb.min_x, b[0] + bb.max_x);
            let dz = dist(b[2] + bb.min_z, b[2] + bb.max_z);
            (dx * dx + dz * dz) * inv_min > self.cutoff
        })
    }

    /// Concentrations at tick `e`, written into `out` (one per receiver).
    pub fn eval(&self, e: usize, out: &mut [f64], base: &mut Vec<Vec3>) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if e == 0 || self.amplitudes.is_empty() {
            return;
        }
        let lo = e.saturating_sub(self.memory);
        let hi = (e - 1).min(self.amplitudes.len() - 1);
        if lo > hi {
            return;
        }
        base.clear();
        base.extend(self.offsets.iter().map(|o| {
            [
                o[0] - self.pos_x[e],
                o[1] - self.pos_y[e],
                o[2] - self.pos_z[e],
            ]
        }));
        let per_coarse = COARSE_BLOCK / FINE_BLOCK;
        for cb in lo / COARSE_BLOCK..=hi / COARSE_BLOCK {
            let c_lo = (cb * COARSE_BLOCK).max(lo);
            if self.block_excluded(&self.coarse[cb], base, self.inv_four_dt[e - c_lo]) {
                continue;
            }
            let c_hi = ((cb + 1) * COARSE_BLOCK - 1).min(hi);
            for fb in (c_lo / FINE_BLOCK)..=(c_hi / FINE_BLOCK).min((cb + 1) * per_coarse - 1) {
                let f_lo = (fb * FINE_BLOCK).max(c_lo);
                if self.block_excluded(&self.fine[fb], base, self.inv_four_dt[e - f_lo]) {
                    continue;
                }
                let f_hi = ((fb + 1) * FINE_BLOCK - 1).min(c_hi);
                for r in f_lo..=f_hi {
                    let amp = self.amplitudes[r];
                    if amp == 0.0 {
                        continue;
                    }
                    let lag = e - r;
                    let inv = self.inv_four_dt[lag];
                    let pref = self.prefactor[lag] * amp;
                    let (px, py, pz) = (self.pos_x[r], self.pos_y[r], self.pos_z[r]);
                    for (acc, b) in out.iter_mut().zip(base.iter()) {
                        let rx = b[0] + px;
                        let rz = b[2] + pz;
                        let axial = (rx * rx + rz * rz) * inv;
                        if axial > self.cutoff {
                            continue;
                        }
                        let ry = b[1] + py;
                        *acc += pref * libm::exp(-(axial + ry * ry * inv));
                    }
                }
            }
        }
    }

    /// Evaluates ticks `start, start + stride, ...` below `end`; one vector per receiver.
    pub fn eval_strided(&self, start: usize, end: usize, stride: usize) -> Result<Vec<Vec<f64>>> {
        if end > self.max_tick() + 1 {
            return Err(Error::bounds("velocity trace too short for the requested ticks"));
        }
        let count = if end > start { (end - start).div_ceil(stride) } else { 0 };
        let mut traces = alloc::vec![Vec::with_capacity(count); self.n_receivers()];
        let mut out = alloc::vec![0.0; self.n_receivers()];
        let mut base = Vec::with_capacity(self.n_receivers());
        for e in (start..end).step_by(stride) {
            self.eval(e, &mut out, &mut base);
            for (t, &v) in traces.iter_mut().zip(&out) {
                t.push(v);
            }
        }
        Ok(traces)
    }
}

/// Noiseless per-receiver traces at `f_sim` for a whole frame, over one
/// velocity realization drawn from `rng`.
pub fn propagate_frame<R: Rng + ?Sized>(
    schedule: &EmissionSchedule,
    geometry: &Geometry,
    params: &ChannelParams,
    rng: &mut R,
) -> Result<Vec<ConcentrationTrace>> {
    params.validate()?;
    let n = trace_ticks(schedule.frame_duration, params);
    let velocity = sample_velocity_ticks(params, n, rng);
    propagate_with(schedule, geometry, params, &velocity, n, 1)
}

/// Noiseless traces on a given velocity realization, keeping every
/// `stride`-th tick of the first `n_ticks`. `stride = decimation()` gives
/// the receiver-rate samples without evaluating the discarded ticks.
pub fn propagate_with(
    schedule: &EmissionSchedule,
    geometry: &Geometry,
    params: &ChannelParams,
    velocity: &VelocityTrace,
    n_ticks: usize,
    stride: usize,
) -> Result<Vec<ConcentrationTrace>> {
    if stride == 0 {
        return Err(Error::config("stride must be positive"));
    }
    let sp = Superposer::new(schedule, geometry, params, velocity)?;
    let rate = params.f_sim / stride as f64;
    Ok(sp
        .eval_strided(0, n_ticks, stride)?
        .into_iter()
        .map(|values| ConcentrationTrace { rate, values })
        .collect())
}

/// Noise standard deviation giving `snr_db` relative to the mean power of `signal`.
pub fn calibrate_noise_std(signal: &[f64], snr_db: f64) -> Result<f64> {
    if snr_db.is_nan() {
        return Err(Error::config("SNR is NaN"));
    }
    let power = signal.iter().map(|v| v * v).sum::<f64>() / signal.len().max(1) as f64;
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::degenerate("reference trace has zero power; SNR undefined"));
    }
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(libm::sqrt(power / libm::pow(10.0, snr_db / 10.0)))
}

pub fn add_noise<R: Rng + ?Sized>(trace: &ConcentrationTrace, noise_std: f64, rng: &mut R) -> Result<ConcentrationTrace> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::config("noise_std must be finite and nonnegative"));
    }
    let values = trace
        .values
        .iter()
        .map(|&v| {
            let z: f64 = rng.sample(StandardNormal);
            v + noise_std * z
        })
        .collect();
    Ok(ConcentrationTrace {
        rate: trace.rate,
        values,
    })
}

/// The standard normals `add_noise` would draw at ticks `0, stride, 2 stride, ...`
/// (`count` of them), skipping the ones decimation would discard.
pub fn decimated_normals<R: Rng + ?Sized>(rng: &mut R, count: usize, stride: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        if i > 0 {
            for _ in 1..stride {
                let _: f64 = rng.sample(StandardNormal);
            }
        }
        out.push(rng.sample(StandardNormal));
    }
    out
}
