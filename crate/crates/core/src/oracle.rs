//! Brute-force references for checking the fast paths.
//!
//! These are deliberately naive: an exhaustive lattice search over the
//! simplex, central finite differences, and a compensated re-implementation
//! of the trust-weight update that sums in a different order.

use crate::aggregation::TrustWeights;
use crate::error::{Error, Result};
use crate::linalg::ParamVector;
use crate::trial::TrialSet;

/// A lattice over the simplex with spacing `resolution`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub resolution: f64,
}

impl GridSpec {
    pub fn new(dim: usize, resolution: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyInput("simplex"));
        }
        if dim > 4 {
            return Err(Error::SimplexTooLarge(dim));
        }
        if resolution != 0.01 && resolution != 0.05 {
            return Err(Error::invalid("resolution", "must be 0.01 or 0.05"));
        }
        Ok(Self { dim, resolution })
    }

    fn steps(&self) -> usize {
        (1.0 / self.resolution).round() as usize
    }

    /// Every lattice point, in lexicographically increasing order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let m = self.steps();
        let mut out = Vec::new();
        let mut counts = vec![0usize; self.dim];
        fn rec(k: usize, left: usize, m: usize, counts: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
            let n = counts.len();
            if k == n - 1 {
                counts[k] = left;
                out.push(counts.iter().map(|c| *c as f64 / m as f64).collect());
                return;
            }
            for c in 0..=left {
                counts[k] = c;
                rec(k + 1, left - c, m, counts, out);
            }
        }
        rec(0, m, m, &mut counts, &mut out);
        out
    }
}

fn naive_candidate(x: &[f64], grads: &[ParamVector], w: &[f64], gamma: f64, precond: Option<&[f64]>) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut s = 0.0;
            for (g, wi) in grads.iter().zip(w) {
                s += wi * g[j];
            }
            let p = precond.map_or(1.0, |p| p[j]);
            x[j] - gamma * s / p
        })
        .collect()
}

/// Exact minimum of `f_hat(x - gamma P_hat^{-1} sum_i w_i g_i)` over the
/// lattice. Ties go to the lexicographically smallest weights.
pub fn grid_min_simplex(
    ts: &TrialSet,
    x: &[f64],
    grads: &[ParamVector],
    gamma: f64,
    grid: GridSpec,
    precond: Option<&[f64]>,
) -> Result<(Vec<f64>, f64)> {
    if grads.len() != grid.dim {
        return Err(Error::DimensionMismatch {
            expected: grid.dim,
            got: grads.len(),
        });
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for w in grid.points() {
        let v = ts.loss(&naive_candidate(x, grads, &w, gamma, precond))?;
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((w, v));
        }
    }
    Ok(best.expect("lattice is nonempty"))
}

/// Central differences `(f(x + h e_j) - f(x - h e_j)) / 2h`.
pub fn finite_diff_grad<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Result<ParamVector> {
    if !(h > 0.0) {
        return Err(Error::invalid("h", "must be positive"));
    }
    let mut y = x.to_vec();
    Ok((0..x.len())
        .map(|j| {
            y[j] = x[j] + h;
            let up = f(&y);
            y[j] = x[j] - h;
            let down = f(&y);
            y[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect())
}

/// A double-double accumulator (Knuth two-sum).
#[derive(Debug, Clone, Copy, Default)]
struct Wide {
    hi: f64,
    lo: f64,
}

impl Wide {
    fn add(self, v: f64) -> Self {
        let s = self.hi + v;
        let bp = s - self.hi;
        let err = (self.hi - (s - bp)) + (v - bp);
        let lo = self.lo + err;
        let hi = s + lo;
        Self {
            hi,
            lo: lo - (hi - s),
        }
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// Independent trust-weight update: same contract as
/// [`crate::aggregation::bant_weights`], summed in reverse order with a
/// double-double accumulator.
pub fn reference_bant_weights(prev: &TrustWeights, theta: &[f64], beta: f64) -> Result<TrustWeights> {
    if prev.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: prev.len(),
            got: theta.len(),
        });
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid("momentum", "must lie in (0, 1]"));
    }
    let mut total = Wide::default();
    for t in theta.iter().rev() {
        if *t > 0.0 {
            total = total.add(*t);
        }
    }
    let total = total.value();
    let n = theta.len() as f64;
    let weights = prev
        .as_slice()
        .iter()
        .zip(theta)
        .map(|(p, t)| {
            let fresh = if total > 0.0 { t.max(0.0) / total } else { 1.0 / n };
            Wide::default().add((1.0 - beta) * p).add(beta * fresh).value()
        })
        .collect();
    TrustWeights::new(weights, prev.active().to_vec())
}
