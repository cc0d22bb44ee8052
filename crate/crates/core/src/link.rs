//! End-to-end trial pipeline.
//!
//! A trial is one frame transmission. [`realize`] produces everything that
//! does not depend on the SNR or on which receivers are used: the frame, the
//! noiseless receiver-rate traces of every receiver and the unit-variance
//! noise each receiver would see. [`Realization::detect`] then applies noise
//! at a given SNR to a prefix of the receiver array and runs front end,
//! combining, gain control, equalization and slicing for every requested
//! combiner. All combiners of a trial therefore see the same channel and
//! noise realization, and sweeps over SNR or receiver count reuse the
//! expensive propagation step.
//!
//! Noise is drawn at the channel rate and decimated, so the result equals
//! `add_noise` on the full `f_sim` trace followed by `downsample`; only the
//! kept samples are ever propagated.

use alloc::vec::Vec;

use crate::channel::{
    self, calibrate_noise_std, decimated_normals, trace_ticks, ChannelParams, Geometry, Superposer,
};
use crate::combining::{combine, compute_weights, CombinerKind, Weights};
use crate::dsp::{agc, apply_equalizer, default_ridge, train_mmse};
use crate::frontend::{observe, ReceiverObservation};
use crate::metrics::{error_rates, slice, DetectionResult};
use crate::modem::{frame_to_emission, generate_frame, Frame, ModScheme};
use crate::seed::{self, Purpose};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EqualizerMode {
    None,
    AffineMmse,
}

/// Where gain control and equalization sit relative to the combiner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EqualizerStage {
    /// One AGC + equalizer on the combiner output.
    PostCombine,
    /// AGC + equalizer on every receiver branch, then combining.
    PerReceiver,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub channel: ChannelParams,
    pub geometry: Geometry,
    pub scheme: ModScheme,
    pub n_pilot: usize,
    pub n_data: usize,
    /// `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub combiners: Vec<CombinerKind>,
    pub equalizer: EqualizerMode,
    pub equalizer_stage: EqualizerStage,
    /// `None` selects [`default_ridge`].
    pub ridge: Option<f64>,
    /// DGC density std in metres; `None` derives it from the flow.
    pub dgc_std: Option<f64>,
    /// Seconds; `None` uses the nominal advection delay.
    pub sync_offset: Option<f64>,
    pub pilot_seed: u64,
    pub master_seed: u64,
    pub n_trials: usize,
}

/// Transverse offsets of the default five-receiver array.
pub const DEFAULT_RX_OFFSETS: [f64; 5] = [0.0, 0.001, -0.001, 0.002, -0.002];

impl Default for SimConfig {
    /// The reference scenario: (N, M) = (2, 4), 2 s symbols, 32 pilots,
    /// 1000 data symbols, five receivers at y = 0, +-1 mm, +-2 mm, -5 dB.
    fn default() -> Self {
        Self {
            channel: ChannelParams::default(),
            geometry: Geometry::transverse_array([0.0, 0.0, 1.0], [1.0, 0.0, 1.0], &DEFAULT_RX_OFFSETS),
            scheme: ModScheme {
                n_dim: 2,
                m_levels: 4,
                t_sym: 2.0,
            },
            n_pilot: 32,
            n_data: 1000,
            snr_db: -5.0,
            combiners: CombinerKind::ALL.to_vec(),
            equalizer: EqualizerMode::AffineMmse,
            equalizer_stage: EqualizerStage::PostCombine,
            ridge: None,
            dgc_std: None,
            sync_offset: None,
            pilot_seed: 7,
            master_seed: 1,
            n_trials: 20,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.geometry.validate()?;
        self.scheme.validate()?;
        if self
            .scheme
            .order()
            .is_none_or(|o| o > crate::modem::DEFAULT_CONSTELLATION_CAP)
        {
            return Err(Error::config("M^N exceeds the constellation cap"));
        }
        if self.scheme.m_levels < 2 {
            return Err(Error::config("data-bearing schemes need m_levels >= 2"));
        }
        self.scheme.ticks_per_symbol(self.channel.f_sim)?;
        self.scheme.ticks_per_symbol(self.channel.f_rx)?;
        if self.n_pilot == 0 {
            return Err(Error::config("at least one pilot symbol is required"));
        }
        if self.equalizer == EqualizerMode::AffineMmse && self.n_pilot < self.scheme.n_dim + 1 {
            return Err(Error::config("MMSE training needs n_pilot >= N + 1"));
        }
        if self.n_trials == 0 {
            return Err(Error::config("n_trials must be at least 1"));
        }
        if self.combiners.is_empty() {
            return Err(Error::config("no combiners requested"));
        }
        for (i, k) in self.combiners.iter().enumerate() {
            if self.combiners[..i].contains(k) {
                return Err(Error::config(alloc::format!("combiner {k} listed twice")));
            }
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::config("snr_db must be a number or +inf"));
        }
        if let Some(r) = self.ridge {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::config("ridge must be finite and nonnegative"));
            }
        }
        if let Some(s) = self.dgc_std {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config("dgc_std must be positive"));
            }
        }
        self.sync_samples()?;
        Ok(())
    }

    /// Nominal flight time from the transmitter to the main receiver plane.
    pub fn flight_time(&self) -> Result<f64> {
        let dx = self.geometry.main_rx()[0] - self.geometry.tx_pos[0];
        let v = self.channel.mean_vel[0];
        if !(v > 0.0) || !(dx >= 0.0) {
            return Err(Error::config(
                "nominal delay needs a positive mean x velocity and a downstream main receiver; set sync_offset",
            ));
        }
        Ok(dx / v)
    }

    /// Receiver sync offset in seconds, on the receiver sample grid.
    pub fn sync_offset(&self) -> Result<f64> {
        Ok(self.sync_samples()? as f64 / self.channel.f_rx)
    }

    pub fn sync_samples(&self) -> Result<usize> {
        let secs = match self.sync_offset {
            Some(s) => s,
            None => self.flight_time()?,
        };
        if !(secs >= 0.0 && secs.is_finite()) {
            return Err(Error::config("sync offset must be finite and nonnegative"));
        }
        Ok(libm::round(secs * self.channel.f_rx) as usize)
    }

    /// Std of the flow-induced transverse displacement over the flight time,
    /// `sigma_vy * sqrt(T_flight / f_sim)`, unless overridden.
    pub fn transverse_std(&self) -> Result<f64> {
        if let Some(s) = self.dgc_std {
            return Ok(s);
        }
        let t = self.flight_time()?;
        Ok(self.channel.std_vel[1] * libm::sqrt(t / self.channel.f_sim))
    }

    /// Channel ticks simulated for one frame.
    pub fn frame_ticks(&self) -> usize {
        let duration = (self.n_pilot + self.n_data) as f64 * self.scheme.t_sym;
        trace_ticks(duration, &self.channel)
    }

    fn data_rng(&self, trial: u64) -> seed::SimRng {
        seed::stream(self.master_seed, trial, Purpose::Data, 0)
    }

    fn velocity_rng(&self, trial: u64) -> seed::SimRng {
        seed::stream(self.master_seed, trial, Purpose::Velocity, 0)
    }

    pub fn noise_rng(&self, trial: u64, rx: usize) -> seed::SimRng {
        seed::stream(self.master_seed, trial, Purpose::Noise, rx as u64)
    }

    pub fn frame(&self, trial: u64) -> Result<Frame> {
        generate_frame(&self.scheme, self.n_pilot, self.n_data, self.pilot_seed, &mut self.data_rng(trial))
    }
}

/// SNR-independent part of one trial.
#[derive(Debug, Clone)]
pub struct Realization {
    pub trial: u64,
    pub frame: Frame,
    /// Noiseless receiver-rate samples, one vector per receiver.
    pub noiseless: Vec<Vec<f64>>,
    /// Standard normals added (times the noise std) to each receiver.
    pub unit_noise: Vec<Vec<f64>>,
    pub sync_samples: usize,
}

pub fn realize(config: &SimConfig, trial: u64) -> Result<Realization> {
    realize_inner(config, trial).map_err(|e| e.context(alloc::format!("trial {trial}")))
}

fn realize_inner(config: &SimConfig, trial: u64) -> Result<Realization> {
    config.validate()?;
    let frame = config.frame(trial)?;
    let schedule = frame_to_emission(&frame, config.channel.f_sim, config.channel.emission_scale)?;
    let n = config.frame_ticks();
    let velocity = channel::sample_velocity_ticks(&config.channel, n, &mut config.velocity_rng(trial));
    let stride = config.channel.decimation()?;
    let sp = Superposer::new(&schedule, &config.geometry, &config.channel, &velocity)?;
    let noiseless = sp.eval_strided(0, n, stride)?;
    let count = noiseless[0].len();
    let unit_noise = (0..config.geometry.rx_pos.len())
        .map(|j| decimated_normals(&mut config.noise_rng(trial, j), count, stride))
        .collect();
    Ok(Realization {
        trial,
        frame,
        noiseless,
        unit_noise,
        sync_samples: config.sync_samples()?,
    })
}

/// Output of one combiner in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinerOutcome {
    pub kind: CombinerKind,
    pub weights: Weights,
    /// AGC gain on the combined stream (mean branch gain for per-receiver stage).
    pub gain: f64,
    pub training_mse: Option<f64>,
    pub detection: DetectionResult,
    /// Equalized data-symbol vectors, when requested.
    pub equalized: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: u64,
    pub snr_db: f64,
    pub n_rx: usize,
    pub noise_std: f64,
    pub pilot_energies: Vec<f64>,
    pub outcomes: Vec<CombinerOutcome>,
    pub truth: Vec<usize>,
}

impl TrialResult {
    pub fn outcome(&self, kind: CombinerKind) -> Option<&CombinerOutcome> {
        self.outcomes.iter().find(|o| o.kind == kind)
    }
}

struct Estimated {
    vectors: Vec<Vec<f64>>,
    gain: f64,
    training_mse: Option<f64>,
}

fn estimate(config: &SimConfig, vectors: &[Vec<f64>], pilot_truth: &[Vec<f64>]) -> Result<Estimated> {
    let n_pilot = pilot_truth.len();
    let (scaled, gain) = agc(vectors, pilot_truth, n_pilot)?;
    match config.equalizer {
        EqualizerMode::None => Ok(Estimated {
            vectors: scaled,
            gain,
            training_mse: None,
        }),
        EqualizerMode::AffineMmse => {
            let pilots = &scaled[..n_pilot];
            let ridge = config.ridge.unwrap_or_else(|| default_ridge(pilots));
            let eq = train_mmse(pilots, pilot_truth, ridge)?;
            Ok(Estimated {
                vectors: apply_equalizer(&eq, &scaled)?,
                gain,
                training_mse: Some(eq.training_mse),
            })
        }
    }
}

impl Realization {
    pub fn n_receivers(&self) -> usize {
        self.noiseless.len()
    }

    /// Mean power of the main receiver's noiseless samples over the received pilot span.
    pub fn pilot_span<'a>(&'a self, config: &SimConfig, samples: &'a [f64]) -> Result<&'a [f64]> {
        let per_symbol = config.scheme.ticks_per_symbol(config.channel.f_rx)?;
        let end = self.sync_samples + self.frame.n_pilot() * per_symbol;
        samples
            .get(self.sync_samples..end)
            .ok_or_else(|| Error::bounds("pilot span exceeds the received trace"))
    }

    pub fn noise_std(&self, config: &SimConfig, snr_db: f64) -> Result<f64> {
        calibrate_noise_std(self.pilot_span(config, &self.noiseless[0])?, snr_db)
    }

    /// Noisy receiver-rate trace of receiver `j`.
    pub fn noisy(&self, j: usize, noise_std: f64) -> Vec<f64> {
        self.noiseless[j]
            .iter()
            .zip(&self.unit_noise[j])
            .map(|(&s, &z)| s + noise_std * z)
            .collect()
    }

    pub fn observations(&self, config: &SimConfig, snr_db: f64, n_rx: usize) -> Result<(f64, Vec<ReceiverObservation>)> {
        let sigma = self.noise_std(config, snr_db)?;
        let sync = config.sync_offset()?;
        let obs = (0..n_rx)
            .map(|j| {
                let trace = channel::ConcentrationTrace {
                    rate: config.channel.f_rx,
                    values: self.noisy(j, sigma),
                };
                observe(j, &trace, &config.scheme, sync, self.frame.n_symbols(), self.frame.n_pilot())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((sigma, obs))
    }

    /// Runs detection at `snr_db` using receivers `0..n_rx`.
    pub fn detect(&self, config: &SimConfig, snr_db: f64, n_rx: usize, keep_constellation: bool) -> Result<TrialResult> {
        self.detect_inner(config, snr_db, n_rx, keep_constellation)
            .map_err(|e| e.context(alloc::format!("trial {}", self.trial)))
    }

    fn detect_inner(&self, config: &SimConfig, snr_db: f64, n_rx: usize, keep: bool) -> Result<TrialResult> {
        if n_rx == 0 || n_rx > self.n_receivers() {
            return Err(Error::config("receiver count outside the realized array"));
        }
        let geometry = config.geometry.truncated(n_rx);
        let (noise_std, obs) = self.observations(config, snr_db, n_rx)?;
        let energies: Vec<f64> = obs.iter().map(|o| o.pilot_energy).collect();
        let pilot_truth = self.frame.pilot_amplitudes();
        let n_pilot = self.frame.n_pilot();
        let transverse_std = if config.combiners.contains(&CombinerKind::Dgc) {
            config.transverse_std()?
        } else {
            0.0
        };

        // per-receiver estimation happens once, shared by all combiners
        let per_rx = match config.equalizer_stage {
            EqualizerStage::PerReceiver => Some(
                obs.iter()
                    .map(|o| estimate(config, &o.symbol_vectors, &pilot_truth))
                    .collect::<Result<Vec<_>>>()?,
            ),
            EqualizerStage::PostCombine => None,
        };

        let mut outcomes = Vec::with_capacity(config.combiners.len());
        for &kind in &config.combiners {
            let weights = compute_weights(kind, &geometry, &energies, transverse_std)?;
            let est = match &per_rx {
                None => {
                    let branches: Vec<&[Vec<f64>]> = obs.iter().map(|o| o.symbol_vectors.as_slice()).collect();
                    let combined = combine(&branches, &weights)?;
                    estimate(config, &combined, &pilot_truth)?
                }
                Some(est) => {
                    let branches: Vec<&[Vec<f64>]> = est.iter().map(|e| e.vectors.as_slice()).collect();
                    let gain = est.iter().zip(weights.values()).map(|(e, w)| w * e.gain).sum();
                    let mse = est
                        .iter()
                        .zip(weights.values())
                        .map(|(e, w)| e.training_mse.map(|m| w * m))
                        .sum::<Option<f64>>();
                    Estimated {
                        vectors: combine(&branches, &weights)?,
                        gain,
                        training_mse: mse,
                    }
                }
            };
            let data = &est.vectors[n_pilot..];
            let decided = data
                .iter()
                .map(|v| slice(v, &config.scheme))
                .collect::<Result<Vec<_>>>()?;
            let detection = error_rates(&decided, &self.frame.data_symbols, &config.scheme)?;
            outcomes.push(CombinerOutcome {
                kind,
                weights,
                gain: est.gain,
                training_mse: est.training_mse,
                detection,
                equalized: keep.then(|| data.to_vec()),
            });
        }
        Ok(TrialResult {
            trial: self.trial,
            snr_db,
            n_rx,
            noise_std,
            pilot_energies: energies,
            outcomes,
            truth: self.frame.data_symbols.clone(),
        })
    }
}

/// Noisy channel-rate traces of every receiver for one trial, computed at
/// the full `f_sim` rate. Every `decimation`-th sample equals what
/// [`Realization::noisy`] returns at the configured SNR.
pub fn full_rate_traces(config: &SimConfig, trial: u64) -> Result<Vec<channel::ConcentrationTrace>> {
    let inner = || -> Result<Vec<channel::ConcentrationTrace>> {
        config.validate()?;
        let frame = config.frame(trial)?;
        let schedule = frame_to_emission(&frame, config.channel.f_sim, config.channel.emission_scale)?;
        let clean = channel::propagate_frame(&schedule, &config.geometry, &config.channel, &mut config.velocity_rng(trial))?;
        let main = crate::frontend::downsample(&clean[0], config.channel.f_rx)?;
        let per_symbol = config.scheme.ticks_per_symbol(config.channel.f_rx)?;
        let sync = config.sync_samples()?;
        let span = main
            .values
            .get(sync..sync + config.n_pilot * per_symbol)
            .ok_or_else(|| Error::bounds("pilot span exceeds the received trace"))?;
        let sigma = calibrate_noise_std(span, config.snr_db)?;
        clean
            .iter()
            .enumerate()
            .map(|(j, tr)| channel::add_noise(tr, sigma, &mut config.noise_rng(trial, j)))
            .collect()
    };
    inner().map_err(|e| e.context(alloc::format!("trial {trial}")))
}

/// One full frame transmission at the configured SNR with every receiver.
pub fn run_trial(config: &SimConfig, trial: u64) -> Result<TrialResult> {
    run_trial_with(config, trial, false)
}

pub fn run_trial_with(config: &SimConfig, trial: u64, keep_constellation: bool) -> Result<TrialResult> {
    let r = realize(config, trial)?;
    r.detect(config, config.snr_db, config.geometry.rx_pos.len(), keep_constellation)
}

/// Pilot energy ratios `E_probe / E_main` of probe receivers at transverse
/// positions `ys` (on the main receiver's x and z) for one trial.
///
/// Only the pilot span is propagated. The main receiver uses the same noise
/// stream as receiver 0 of the array; each probe's noise stream is keyed by
/// its position, so the ratio for a given `y` does not depend on which other
/// probes are evaluated. A probe at the main receiver's position is that
/// receiver, so its ratio is exactly 1.
pub fn probe_ratios(config: &SimConfig, trial: u64, ys: &[f64]) -> Result<Vec<f64>> {
    probe_ratios_inner(config, trial, ys).map_err(|e| e.context(alloc::format!("trial {trial}")))
}

fn probe_ratios_inner(config: &SimConfig, trial: u64, ys: &[f64]) -> Result<Vec<f64>> {
    config.validate()?;
    let main = config.geometry.main_rx();
    let frame = config.frame(trial)?;
    let schedule = frame_to_emission(&frame, config.channel.f_sim, config.channel.emission_scale)?;
    let stride = config.channel.decimation()?;
    let per_symbol = config.scheme.ticks_per_symbol(config.channel.f_rx)?;
    let sync = config.sync_samples()?;
    let end_sample = sync + config.n_pilot * per_symbol;
    let start_tick = sync * stride;
    let end_tick = (end_sample - 1) * stride + 1;
    if end_tick > config.frame_ticks() {
        return Err(Error::bounds("pilot span exceeds the simulated trace"));
    }
    // prefix of the full-frame velocity draw
    let velocity = channel::sample_velocity_ticks(&config.channel, end_tick, &mut config.velocity_rng(trial));

    let probes: Vec<f64> = ys.iter().copied().filter(|&y| y != main[1]).collect();
    let mut rx_pos = alloc::vec![main];
    rx_pos.extend(probes.iter().map(|&y| [main[0], y, main[2]]));
    let geometry = Geometry {
        tx_pos: config.geometry.tx_pos,
        rx_pos,
    };
    let sp = Superposer::new(&schedule, &geometry, &config.channel, &velocity)?;
    let noiseless = sp.eval_strided(start_tick, end_tick, stride)?;
    let sigma = calibrate_noise_std(&noiseless[0], config.snr_db)?;

    let pilot_scheme = config.scheme;
    let energy = |samples: &[f64], rng: &mut seed::SimRng| -> Result<f64> {
        let z = decimated_normals(rng, end_sample, stride);
        let values = samples.iter().zip(&z[sync..]).map(|(&s, &n)| s + sigma * n).collect();
        let trace = channel::ConcentrationTrace {
            rate: config.channel.f_rx,
            values,
        };
        Ok(observe(0, &trace, &pilot_scheme, 0.0, config.n_pilot, config.n_pilot)?.pilot_energy)
    };
    let e_main = energy(&noiseless[0], &mut config.noise_rng(trial, 0))?;
    let mut probe_energy = probes.iter().zip(&noiseless[1..]).map(|(&y, samples)| {
        energy(samples, &mut seed::stream(config.master_seed, trial, Purpose::ProbeNoise, y.to_bits()))
    });
    ys.iter()
        .map(|&y| {
            if y == main[1] {
                Ok(1.0)
            } else {
                let e = probe_energy.next().expect("one energy per probe")?;
                crate::frontend::pilot_energy_ratio(e, e_main)
            }
        })
        .collect()
}

/// Fraction of `n_mc` trials in which a probe at transverse position `y`
/// reaches `rho >= eta`.
pub fn structured_probability(config: &SimConfig, y: f64, eta: f64, n_mc: usize) -> Result<f64> {
    if n_mc == 0 {
        return Err(Error::config("n_mc must be at least 1"));
    }
    let hits = (0..n_mc as u64)
        .map(|t| probe_ratios(config, t, &[y]).map(|r| r[0] >= eta))
        .collect::<Result<Vec<bool>>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / n_mc as f64)
}

/// Critical transverse distance over `y_grid` (ascending, from 0).
pub fn critical_distance(config: &SimConfig, eta: f64, delta: f64, y_grid: &[f64], n_mc: usize) -> Result<f64> {
    crate::metrics::validate_grid(y_grid)?;
    if n_mc == 0 {
        return Err(Error::config("n_mc must be at least 1"));
    }
    let mut hits = alloc::vec![0usize; y_grid.len()];
    for t in 0..n_mc as u64 {
        for (h, r) in hits.iter_mut().zip(probe_ratios(config, t, y_grid)?) {
            *h += usize::from(r >= eta);
        }
    }
    let probs: Vec<f64> = hits.iter().map(|&h| h as f64 / n_mc as f64).collect();
    crate::metrics::critical_distance_from(y_grid, &probs, delta)
}
