//! Monte Carlo experiments over independent trials.
//!
//! Trials run in parallel on the rayon pool. Each trial is a pure function
//! of `(config, trial index)`, results are collected in trial order and
//! aggregated by summing counts, so thread count and scheduling never
//! change an output.

use flowdiv_core::channel::Geometry;
use flowdiv_core::combining::CombinerKind;
use flowdiv_core::link::{probe_ratios, realize, SimConfig, TrialResult};
use flowdiv_core::metrics::{critical_distance_from, sign_test_p, validate_grid, wilson_interval, Z95};
use rayon::prelude::*;

use crate::{Result, SimError};

/// Default SNR grid of the sweeps, dB.
pub const DEFAULT_SNR_GRID: [f64; 9] = [-20.0, -15.0, -10.0, -8.0, -5.0, -3.0, 0.0, 5.0, 10.0];
/// Default transverse grid of the structured-signal scan, m.
pub const DEFAULT_Y_GRID: [f64; 7] = [0.0, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05];
pub const DEFAULT_SCAN_TRIALS: usize = 500;

/// One operating point evaluated on every trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub snr_db: f64,
    /// Receivers `0..n_rx` of the configured array.
    pub n_rx: usize,
}

/// Trial results for several operating points sharing realizations.
#[derive(Debug, Clone)]
pub struct GridRun {
    pub config: SimConfig,
    pub points: Vec<Point>,
    /// `results[p][t]`: point `p`, trial `t`.
    pub results: Vec<Vec<TrialResult>>,
    /// Receiver spacing when the array was built by [`sweep_nrx`].
    pub delta_y: Option<f64>,
}

/// Runs trials `0..config.n_trials`, propagating each once and detecting at
/// every point.
pub fn run_grid(config: &SimConfig, points: &[Point], keep_constellation: bool) -> Result<GridRun> {
    config.validate()?;
    if points.is_empty() {
        return Err(SimError::Config("no operating points".into()));
    }
    let per_trial: Vec<Vec<TrialResult>> = (0..config.n_trials as u64)
        .into_par_iter()
        .map(|t| {
            let r = realize(config, t)?;
            points
                .iter()
                .map(|p| r.detect(config, p.snr_db, p.n_rx, keep_constellation))
                .collect::<flowdiv_core::Result<Vec<_>>>()
        })
        .collect::<flowdiv_core::Result<_>>()?;
    let mut results: Vec<Vec<TrialResult>> = points.iter().map(|_| Vec::with_capacity(per_trial.len())).collect();
    for trial in per_trial {
        for (slot, r) in results.iter_mut().zip(trial) {
            slot.push(r);
        }
    }
    Ok(GridRun {
        config: config.clone(),
        points: points.to_vec(),
        results,
        delta_y: None,
    })
}

/// Pooled error statistics of one combiner at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRow {
    pub combiner: CombinerKind,
    pub n_dim: usize,
    pub m_levels: usize,
    pub snr_db: f64,
    pub n_rx: usize,
    pub delta_y: Option<f64>,
    /// Data symbols per frame.
    pub n_data: usize,
    pub n_trials: usize,
    pub symbol_errors: u64,
    pub bit_errors: Option<u64>,
    pub ser: f64,
    pub ber: Option<f64>,
    pub ser_ci: (f64, f64),
    pub ber_ci: Option<(f64, f64)>,
}

pub fn aggregate(config: &SimConfig, point: Point, results: &[TrialResult], kind: CombinerKind) -> DetectionRow {
    let outcomes: Vec<_> = results
        .iter()
        .map(|r| &r.outcome(kind).expect("combiner was requested").detection)
        .collect();
    let symbols: u64 = outcomes.iter().map(|d| d.n_data as u64).sum();
    let symbol_errors: u64 = outcomes.iter().map(|d| d.symbol_errors as u64).sum();
    let bit_errors: Option<u64> = outcomes.iter().map(|d| d.bit_errors.map(|b| b as u64)).sum();
    let bits = config.scheme.bits_per_symbol().map(|b| b as u64 * symbols);
    let rate = |e: u64, n: u64| if n == 0 { 0.0 } else { e as f64 / n as f64 };
    let (ber, ber_ci) = match (bit_errors, bits) {
        (Some(e), Some(n)) => (Some(rate(e, n)), Some(wilson_interval(e, n, Z95))),
        _ => (None, None),
    };
    DetectionRow {
        combiner: kind,
        n_dim: config.scheme.n_dim,
        m_levels: config.scheme.m_levels,
        snr_db: point.snr_db,
        n_rx: point.n_rx,
        delta_y: None,
        n_data: config.n_data,
        n_trials: results.len(),
        symbol_errors,
        bit_errors,
        ser: rate(symbol_errors, symbols),
        ber,
        ser_ci: wilson_interval(symbol_errors, symbols, Z95),
        ber_ci,
    }
}

/// Per-frame comparison of two combiners on the same realizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTest {
    /// Frames where the candidate made strictly fewer errors.
    pub wins: u64,
    pub losses: u64,
    pub ties: u64,
    /// One-sided sign-test p-value for "candidate is better".
    pub p_value: f64,
}

/// Compares bit errors (symbol errors when BER is undefined) frame by frame.
pub fn paired_test(results: &[TrialResult], candidate: CombinerKind, reference: CombinerKind) -> PairedTest {
    let errors = |r: &TrialResult, k| {
        let d = &r.outcome(k).expect("combiner was requested").detection;
        d.bit_errors.unwrap_or(d.symbol_errors)
    };
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for r in results {
        let (a, b) = (errors(r, candidate), errors(r, reference));
        match a.cmp(&b) {
            std::cmp::Ordering::Less => wins += 1,
            std::cmp::Ordering::Greater => losses += 1,
            std::cmp::Ordering::Equal => ties += 1,
        }
    }
    PairedTest {
        wins,
        losses,
        ties,
        p_value: sign_test_p(wins, losses),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedRow {
    pub n_dim: usize,
    pub m_levels: usize,
    pub point: Point,
    pub combiner: CombinerKind,
    pub reference: CombinerKind,
    pub test: PairedTest,
}

impl GridRun {
    pub fn at(&self, point: usize) -> &[TrialResult] {
        &self.results[point]
    }

    pub fn index_of(&self, snr_db: f64, n_rx: usize) -> Option<usize> {
        self.points.iter().position(|p| p.snr_db == snr_db && p.n_rx == n_rx)
    }

    pub fn row(&self, point: usize, kind: CombinerKind) -> DetectionRow {
        let mut row = aggregate(&self.config, self.points[point], &self.results[point], kind);
        row.delta_y = self.delta_y;
        row
    }

    /// Point-major, combiners in configured order.
    pub fn rows(&self) -> Vec<DetectionRow> {
        (0..self.points.len())
            .flat_map(|p| self.config.combiners.iter().map(move |&k| self.row(p, k)))
            .collect()
    }

    /// Every non-reference combiner against `reference` at every point.
    pub fn paired_tests(&self, reference: CombinerKind) -> Vec<PairedRow> {
        let mut out = Vec::new();
        if !self.config.combiners.contains(&reference) {
            return out;
        }
        for (p, res) in self.points.iter().zip(&self.results) {
            for &k in self.config.combiners.iter().filter(|&&k| k != reference) {
                out.push(PairedRow {
                    n_dim: self.config.scheme.n_dim,
                    m_levels: self.config.scheme.m_levels,
                    point: *p,
                    combiner: k,
                    reference,
                    test: paired_test(res, k, reference),
                });
            }
        }
        out
    }
}

/// All configured receivers at the configured SNR.
pub fn single_run(config: &SimConfig, keep_constellation: bool) -> Result<GridRun> {
    let point = Point {
        snr_db: config.snr_db,
        n_rx: config.geometry.rx_pos.len(),
    };
    run_grid(config, &[point], keep_constellation)
}

pub fn sweep_snr(config: &SimConfig, snrs: &[f64]) -> Result<GridRun> {
    let n_rx = config.geometry.rx_pos.len();
    let points: Vec<Point> = snrs.iter().map(|&snr_db| Point { snr_db, n_rx }).collect();
    run_grid(config, &points, false)
}

/// Receivers at `y = 0, +d, -d, +2d, ...` around the main receiver; every
/// count in `nrx_list` uses a prefix of the largest array.
pub fn sweep_nrx(config: &SimConfig, nrx_list: &[usize], delta_y: f64) -> Result<GridRun> {
    if nrx_list.is_empty() {
        return Err(SimError::Config("empty receiver-count list".into()));
    }
    if let Some(n) = nrx_list.iter().find(|&&n| n == 0 || n % 2 == 0) {
        return Err(SimError::Config(format!("receiver counts must be odd and positive, got {n}")));
    }
    if !(delta_y > 0.0 && delta_y.is_finite()) {
        return Err(SimError::Config("delta_y must be positive".into()));
    }
    let max = *nrx_list.iter().max().expect("nonempty");
    let mut c = config.clone();
    c.geometry = Geometry::symmetric_array(config.geometry.tx_pos, config.geometry.main_rx(), max, delta_y);
    let points: Vec<Point> = nrx_list
        .iter()
        .map(|&n_rx| Point {
            snr_db: config.snr_db,
            n_rx,
        })
        .collect();
    let mut run = run_grid(&c, &points, false)?;
    run.delta_y = Some(delta_y);
    Ok(run)
}

/// Pilot energy ratio of a probe at each grid position, per trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRatios {
    pub y_grid: Vec<f64>,
    /// `ratios[t][i]`: trial `t`, grid position `i`.
    pub ratios: Vec<Vec<f64>>,
}

pub fn scan_ratios(config: &SimConfig, y_grid: &[f64], n_mc: usize) -> Result<ScanRatios> {
    config.validate()?;
    if y_grid.is_empty() || y_grid.iter().any(|y| !y.is_finite()) {
        return Err(SimError::Config("y grid must be nonempty and finite".into()));
    }
    if n_mc == 0 {
        return Err(SimError::Config("n_mc must be at least 1".into()));
    }
    let ratios = (0..n_mc as u64)
        .into_par_iter()
        .map(|t| probe_ratios(config, t, y_grid))
        .collect::<flowdiv_core::Result<Vec<_>>>()?;
    Ok(ScanRatios {
        y_grid: y_grid.to_vec(),
        ratios,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub y: f64,
    pub hits: u64,
    pub p_hat: f64,
    pub ci: (f64, f64),
    pub n_mc: usize,
    pub eta: f64,
    /// The `1 - delta` level.
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub rows: Vec<ScanRow>,
    /// Critical transverse distance; `None` unless the grid starts at 0 and ascends.
    pub y_c: Option<f64>,
    pub eta: f64,
    pub delta: f64,
}

impl ScanRatios {
    pub fn evaluate(&self, eta: f64, delta: f64) -> Result<ScanResult> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(SimError::Config("delta must lie in [0, 1]".into()));
        }
        let n_mc = self.ratios.len();
        let rows: Vec<ScanRow> = self
            .y_grid
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let hits = self.ratios.iter().filter(|r| r[i] >= eta).count() as u64;
                ScanRow {
                    y,
                    hits,
                    p_hat: hits as f64 / n_mc as f64,
                    ci: wilson_interval(hits, n_mc as u64, Z95),
                    n_mc,
                    eta,
                    target: 1.0 - delta,
                }
            })
            .collect();
        let y_c = match validate_grid(&self.y_grid) {
            Ok(()) => {
                let probs: Vec<f64> = rows.iter().map(|r| r.p_hat).collect();
                Some(critical_distance_from(&self.y_grid, &probs, delta)?)
            }
            Err(_) => None,
        };
        Ok(ScanResult { rows, y_c, eta, delta })
    }
}

pub fn structured_scan(config: &SimConfig, y_grid: &[f64], eta: f64, delta: f64, n_mc: usize) -> Result<ScanResult> {
    scan_ratios(config, y_grid, n_mc)?.evaluate(eta, delta)
}

/// Equalized data vectors of one combiner in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationDump {
    pub combiner: CombinerKind,
    pub trial: u64,
    pub vectors: Vec<Vec<f64>>,
    pub decided: Vec<usize>,
    pub truth: Vec<usize>,
}

pub fn constellation(config: &SimConfig, combiner: CombinerKind, trial: u64) -> Result<ConstellationDump> {
    let mut c = config.clone();
    c.combiners = vec![combiner];
    let r = flowdiv_core::link::run_trial_with(&c, trial, true)?;
    let o = r.outcome(combiner).expect("single combiner requested");
    Ok(ConstellationDump {
        combiner,
        trial,
        vectors: o.equalized.clone().expect("constellation was kept"),
        decided: o.detection.decided_indices.clone(),
        truth: r.truth.clone(),
    })
}

impl ConstellationDump {
    /// Mean distance of points to their cluster centroid and mean distance
    /// between centroids of grid-adjacent clusters (true-symbol clusters).
    pub fn cluster_spread(&self, scheme: &flowdiv_core::modem::ModScheme) -> (f64, f64) {
        let order = scheme.order().expect("validated scheme");
        let n = scheme.n_dim;
        let mut sums = vec![vec![0.0; n]; order];
        let mut counts = vec![0usize; order];
        for (v, &t) in self.vectors.iter().zip(&self.truth) {
            counts[t] += 1;
            for (s, x) in sums[t].iter_mut().zip(v) {
                *s += x;
            }
        }
        let centroids: Vec<Option<Vec<f64>>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &c)| (c > 0).then(|| s.into_iter().map(|x| x / c as f64).collect()))
            .collect();
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let within = self
            .vectors
            .iter()
            .zip(&self.truth)
            .map(|(v, &t)| dist(v, centroids[t].as_ref().expect("observed")))
            .sum::<f64>()
            / self.vectors.len().max(1) as f64;
        let (mut between, mut pairs) = (0.0, 0usize);
        for a in 0..order {
            let la = scheme.levels(a);
            for d in 0..n {
                if la[d] + 1 >= scheme.m_levels {
                    continue;
                }
                let mut lb = la.clone();
                lb[d] += 1;
                let b = scheme.index_of(&lb);
                if let (Some(ca), Some(cb)) = (&centroids[a], &centroids[b]) {
                    between += dist(ca, cb);
                    pairs += 1;
                }
            }
        }
        (within, between / pairs.max(1) as f64)
    }
}
