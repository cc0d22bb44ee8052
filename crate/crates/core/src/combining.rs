//! Diversity combining of receiver branches.
//!
//! All four schemes form a convex combination of the per-receiver symbol
//! vectors; they differ only in how the weights are chosen.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::channel::Geometry;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CombinerKind {
    /// Selection: the main receiver only.
    Sc,
    /// Equal gain.
    Egc,
    /// Gaussian transverse-distribution gain.
    Dgc,
    /// Pilot-energy gain.
    Pgc,
}

impl CombinerKind {
    pub const ALL: [CombinerKind; 4] = [CombinerKind::Sc, CombinerKind::Egc, CombinerKind::Dgc, CombinerKind::Pgc];

    pub fn as_str(self) -> &'static str {
        match self {
            CombinerKind::Sc => "sc",
            CombinerKind::Egc => "egc",
            CombinerKind::Dgc => "dgc",
            CombinerKind::Pgc => "pgc",
        }
    }
}

impl fmt::Display for CombinerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CombinerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sc" => Ok(CombinerKind::Sc),
            "egc" => Ok(CombinerKind::Egc),
            "dgc" => Ok(CombinerKind::Dgc),
            "pgc" => Ok(CombinerKind::Pgc),
            other => Err(Error::config(alloc::format!("unknown combiner `{other}`"))),
        }
    }
}

/// Normalized, nonnegative per-receiver weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(Vec<f64>);

impl Weights {
    fn normalized(raw: Vec<f64>, what: &str) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::degenerate(alloc::format!("{what} weights sum to zero")));
        }
        Ok(Self(raw.into_iter().map(|w| w / total).collect()))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Gaussian density at each receiver's transverse offset from the main
/// receiver, normalized.
pub fn dgc_weights(ys: &[f64], transverse_std: f64) -> Result<Weights> {
    if !(transverse_std > 0.0) || !transverse_std.is_finite() {
        return Err(Error::config("DGC needs a positive transverse standard deviation"));
    }
    let two_var = 2.0 * transverse_std * transverse_std;
    Weights::normalized(ys.iter().map(|y| libm::exp(-y * y / two_var)).collect(), "DGC")
}

pub fn compute_weights(
    kind: CombinerKind,
    geometry: &Geometry,
    pilot_energies: &[f64],
    transverse_std: f64,
) -> Result<Weights> {
    let n = geometry.rx_pos.len();
    if n == 0 {
        return Err(Error::config("no receivers to combine"));
    }
    match kind {
        CombinerKind::Sc => {
            let mut w = alloc::vec![0.0; n];
            w[0] = 1.0;
            Ok(Weights(w))
        }
        CombinerKind::Egc => Ok(Weights(alloc::vec![1.0 / n as f64; n])),
        CombinerKind::Dgc => {
            let main_y = geometry.rx_pos[0][1];
            let ys: Vec<f64> = geometry.rx_pos.iter().map(|r| r[1] - main_y).collect();
            dgc_weights(&ys, transverse_std)
        }
        CombinerKind::Pgc => {
            if pilot_energies.len() != n {
                return Err(Error::shape("one pilot energy per receiver is required"));
            }
            if pilot_energies.iter().any(|&e| !(e >= 0.0)) {
                return Err(Error::config("pilot energies must be nonnegative"));
            }
            Weights::normalized(pilot_energies.to_vec(), "PGC")
        }
    }
}

/// Per-symbol weighted sum of the receivers' vectors.
pub fn combine(per_receiver: &[&[Vec<f64>]], weights: &Weights) -> Result<Vec<Vec<f64>>> {
    if per_receiver.len() != weights.len() || per_receiver.is_empty() {
        return Err(Error::shape("one weight per receiver branch is required"));
    }
    let n_sym = per_receiver[0].len();
    let dim = per_receiver[0].first().map_or(0, |w| w.len());
    for branch in per_receiver {
        if branch.len() != n_sym || branch.iter().any(|w| w.len() != dim) {
            return Err(Error::shape("receiver branches differ in symbol count or dimension"));
        }
    }
    let mut out = alloc::vec![alloc::vec![0.0; dim]; n_sym];
    for (branch, &wt) in per_receiver.iter().zip(weights.values()) {
        if wt == 0.0 {
            continue;
        }
        for (acc, w) in out.iter_mut().zip(branch.iter()) {
            for (a, x) in acc.iter_mut().zip(w) {
                *a += wt * x;
            }
        }
    }
    Ok(out)
}
