//! Pilot-trained gain control and affine MMSE equalization.

use alloc::vec::Vec;

use crate::{Error, ErrorKind, Result};

/// Affine map `w -> A w + b` on N-vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Equalizer {
    n: usize,
    /// Row-major N x N.
    matrix: Vec<f64>,
    bias: Vec<f64>,
    pub training_mse: f64,
}

impl Equalizer {
    pub fn identity(n: usize) -> Self {
        let mut matrix = alloc::vec![0.0; n * n];
        for i in 0..n {
            matrix[i * n + i] = 1.0;
        }
        Self {
            n,
            matrix,
            bias: alloc::vec![0.0; n],
            training_mse: 0.0,
        }
    }

    pub fn from_parts(n: usize, matrix: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if matrix.len() != n * n || bias.len() != n {
            return Err(Error::shape("equalizer matrix must be N x N and bias length N"));
        }
        if !matrix.iter().chain(&bias).all(|x| x.is_finite()) {
            return Err(Error::config("equalizer entries must be finite"));
        }
        Ok(Self {
            n,
            matrix,
            bias,
            training_mse: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.matrix[row * self.n + col]
    }

    pub fn apply_one(&self, w: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                self.matrix[r * self.n..(r + 1) * self.n]
                    .iter()
                    .zip(w)
                    .map(|(a, x)| a * x)
                    .sum::<f64>()
                    + self.bias[r]
            })
            .collect()
    }

    /// `outer` after `inner`: `A_o A_i w + A_o b_i + b_o`.
    pub fn compose(outer: &Equalizer, inner: &Equalizer) -> Result<Equalizer> {
        if outer.n != inner.n {
            return Err(Error::shape("cannot compose equalizers of different dimension"));
        }
        let n = outer.n;
        let mut matrix = alloc::vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                matrix[r * n + c] = (0..n).map(|k| outer.entry(r, k) * inner.entry(k, c)).sum();
            }
        }
        let bias = outer
            .apply_one(&inner.bias)
            .into_iter()
            .collect();
        Equalizer::from_parts(n, matrix, bias)
    }
}

/// Scales every vector by `g = sum |a_k|^2 / sum <w_k, a_k>` over the pilots.
pub fn agc(symbol_vectors: &[Vec<f64>], pilot_truth: &[Vec<f64>], n_pilot: usize) -> Result<(Vec<Vec<f64>>, f64)> {
    if n_pilot > symbol_vectors.len() || n_pilot > pilot_truth.len() {
        return Err(Error::bounds("not enough pilot vectors for AGC"));
    }
    let mut truth_energy = 0.0;
    let mut cross = 0.0;
    for (w, a) in symbol_vectors.iter().zip(pilot_truth).take(n_pilot) {
        if w.len() != a.len() {
            return Err(Error::shape("pilot vector and truth dimensions differ"));
        }
        truth_energy += a.iter().map(|x| x * x).sum::<f64>();
        cross += w.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
    }
    if truth_energy == 0.0 {
        return Err(Error::degenerate("pilot amplitudes carry no energy; AGC undefined"));
    }
    if cross == 0.0 || !cross.is_finite() {
        return Err(Error::degenerate("received pilots are orthogonal to the truth; AGC gain undefined"));
    }
    let g = truth_energy / cross;
    let out = symbol_vectors
        .iter()
        .map(|w| w.iter().map(|x| g * x).collect())
        .collect();
    Ok((out, g))
}

/// Default ridge: `1e-6 * trace(normal matrix) / N` for augmented pilot vectors.
pub fn default_ridge(pilot_vectors: &[Vec<f64>]) -> f64 {
    let n = pilot_vectors.first().map_or(1, |w| w.len()).max(1);
    let tr: f64 = pilot_vectors
        .iter()
        .map(|w| 1.0 + w.iter().map(|x| x * x).sum::<f64>())
        .sum();
    1e-6 * tr / n as f64
}

/// Regularized affine least squares:
/// `min_{A,b} sum_k |A w_k + b - a_k|^2 + ridge |A|_F^2`.
pub fn train_mmse(pilot_vectors: &[Vec<f64>], pilot_truth: &[Vec<f64>], ridge: f64) -> Result<Equalizer> {
    let k = pilot_vectors.len();
    if k != pilot_truth.len() {
        return Err(Error::shape("pilot vectors and truths differ in count"));
    }
    let n = pilot_truth.first().map_or(0, |a| a.len());
    if n == 0 {
        return Err(Error::shape("empty pilot vectors"));
    }
    if k < n + 1 {
        return Err(Error::config(alloc::format!("MMSE training needs at least N + 1 = {} pilots", n + 1)));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::config("ridge must be finite and nonnegative"));
    }
    let m = n + 1;
    // normal matrix G = sum x x^T and right-hand side C = sum x a^T, x = [w; 1]
    let mut g = alloc::vec![0.0; m * m];
    let mut c = alloc::vec![0.0; m * n];
    let mut x = alloc::vec![0.0; m];
    for (w, a) in pilot_vectors.iter().zip(pilot_truth) {
        if w.len() != n || a.len() != n {
            return Err(Error::shape("inconsistent pilot dimensions"));
        }
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::config("non-finite pilot observation"));
        }
        x[..n].copy_from_slice(w);
        x[n] = 1.0;
        for r in 0..m {
            for s in 0..m {
                g[r * m + s] += x[r] * x[s];
            }
            for o in 0..n {
                c[r * n + o] += x[r] * a[o];
            }
        }
    }
    for i in 0..n {
        g[i * m + i] += ridge;
    }
    let theta = solve(&mut g, &mut c, m, n).map_err(|e| {
        if ridge == 0.0 {
            Error::new(ErrorKind::Singular, "pilot normal matrix is singular; use a nonzero ridge")
        } else {
            e
        }
    })?;
    let mut matrix = alloc::vec![0.0; n * n];
    let mut bias = alloc::vec![0.0; n];
    for o in 0..n {
        for i in 0..n {
            matrix[o * n + i] = theta[i * n + o];
        }
        bias[o] = theta[n * n + o];
    }
    let mut eq = Equalizer::from_parts(n, matrix, bias)?;
    let sse: f64 = pilot_vectors
        .iter()
        .zip(pilot_truth)
        .map(|(w, a)| {
            eq.apply_one(w)
                .iter()
                .zip(a)
                .map(|(y, t)| (y - t) * (y - t))
                .sum::<f64>()
        })
        .sum();
    eq.training_mse = sse / k as f64;
    Ok(eq)
}

pub fn apply_equalizer(eq: &Equalizer, symbol_vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    symbol_vectors
        .iter()
        .map(|w| {
            if w.len() != eq.n {
                Err(Error::shape("symbol vector dimension differs from the equalizer"))
            } else {
                Ok(eq.apply_one(w))
            }
        })
        .collect()
}

/// Solves `G X = C` (G is m x m, C is m x cols, both row-major) by Gaussian
/// elimination with partial pivoting. Returns X row-major.
fn solve(g: &mut [f64], c: &mut [f64], m: usize, cols: usize) -> Result<Vec<f64>> {
    let scale = (0..m).map(|i| g[i * m + i].abs()).fold(0.0, f64::max);
    let tol = 1e-11 * scale.max(f64::MIN_POSITIVE);
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&a, &b| g[a * m + col].abs().total_cmp(&g[b * m + col].abs()))
            .unwrap_or(col);
        if !(g[piv * m + col].abs() > tol) {
            return Err(Error::new(ErrorKind::Singular, "normal matrix is singular"));
        }
        if piv != col {
            for s in 0..m {
                g.swap(col * m + s, piv * m + s);
            }
            for s in 0..cols {
                c.swap(col * cols + s, piv * cols + s);
            }
        }
        let d = g[col * m + col];
        for r in col + 1..m {
            let f = g[r * m + col] / d;
            if f == 0.0 {
                continue;
            }
            for s in col..m {
                g[r * m + s] -= f * g[col * m + s];
            }
            for s in 0..cols {
                c[r * cols + s] -= f * c[col * cols + s];
            }
        }
    }
    let mut x = alloc::vec![0.0; m * cols];
    for r in (0..m).rev() {
        for s in 0..cols {
            let mut acc = c[r * cols + s];
            for k in r + 1..m {
                acc -= g[r * m + k] * x[k * cols + s];
            }
            x[r * cols + s] = acc / g[r * m + r];
        }
    }
    Ok(x)
}
