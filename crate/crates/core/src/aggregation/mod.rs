//! Aggregation rules.
//!
//! Trust-score rules score candidate updates against the server's trial
//! function: [`bant`] weights workers by their trial-loss decrease,
//! [`autobant`] minimizes the trial loss over the simplex of weights, and
//! [`simbant`] weights workers by how closely their candidate model's outputs
//! match the server's. [`baselines`] holds mean, coordinate median, Zeno and
//! centered clipping.
//!
//! Every rule accepts an optional diagonal preconditioner `P_hat`; when
//! present the candidate step of a gradient `g` is `gamma * P_hat^{-1} g`.

pub mod autobant;
pub mod bant;
pub mod baselines;
pub mod simbant;

pub use autobant::{autobant_solve, autobant_step, solve_simplex, MirrorOptions, SimplexSolution};
pub use bant::{bant_step, bant_weights, contribution_coeffs, ContributionCoeffs};
pub use baselines::{
    baseline_coordinate_median, baseline_mean, centered_clip, zeno_aggregate, zeno_scores, zeno_select,
};
pub use simbant::{simbant_weights, similarity, SimilarityKind};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ParamVector};

/// Simplex weights over the active workers of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustWeights {
    weights: Vec<f64>,
    /// 0-based worker index of each weight.
    active: Vec<usize>,
}

impl TrustWeights {
    pub fn uniform(active: Vec<usize>) -> Self {
        let n = active.len();
        Self {
            weights: vec![1.0 / n as f64; n],
            active,
        }
    }

    /// Uniform weights over workers `0..n`.
    pub fn uniform_over(n: usize) -> Self {
        Self::uniform((0..n).collect())
    }

    pub fn new(weights: Vec<f64>, active: Vec<usize>) -> Result<Self> {
        if weights.len() != active.len() {
            return Err(Error::DimensionMismatch {
                expected: active.len(),
                got: weights.len(),
            });
        }
        if weights.is_empty() {
            return Err(Error::EmptyInput("trust weights"));
        }
        Ok(Self { weights, active })
    }

    /// Weights over workers `0..weights.len()`.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let active = (0..weights.len()).collect();
        Self::new(weights, active)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Nonnegative and summing to one within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        self.weights.iter().all(|w| *w >= 0.0 && w.is_finite()) && (self.sum() - 1.0).abs() <= tol
    }

    /// The weight of worker `idx`, or 0 when inactive.
    pub fn weight_of(&self, idx: usize) -> f64 {
        self.active
            .iter()
            .position(|a| *a == idx)
            .map_or(0.0, |k| self.weights[k])
    }

    /// Dense weights over `n` workers (inactive workers get 0).
    pub fn dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (w, a) in self.weights.iter().zip(&self.active) {
            if *a < n {
                out[*a] = *w;
            }
        }
        out
    }

    /// Restricts carried-over weights to a new active set. Workers absent
    /// from `self` start at the uniform share, then the result is
    /// renormalized.
    pub fn restrict_to(&self, active: &[usize]) -> Self {
        let share = 1.0 / active.len() as f64;
        let raw: Vec<f64> = active
            .iter()
            .map(|a| match self.active.iter().position(|b| b == a) {
                Some(k) => self.weights[k],
                None => share,
            })
            .collect();
        let total: f64 = raw.iter().sum();
        let weights = if total > 0.0 {
            raw.into_iter().map(|w| w / total).collect()
        } else {
            vec![share; active.len()]
        };
        Self {
            weights,
            active: active.to_vec(),
        }
    }
}

/// The candidate step `gamma * P_hat^{-1} g`.
pub fn scaled_step(gamma: f64, g: &[f64], precond: Option<&[f64]>) -> ParamVector {
    match precond {
        Some(p) => g.iter().zip(p).map(|(gi, pi)| gamma * gi / pi).collect(),
        None => g.iter().map(|gi| gamma * gi).collect(),
    }
}

/// `x - gamma * P_hat^{-1} sum_i c_i g_i`.
pub(crate) fn weighted_step(
    x: &[f64],
    grads: &[ParamVector],
    coefs: &[f64],
    gamma: f64,
    precond: Option<&[f64]>,
) -> ParamVector {
    let mut dir = vec![0.0; x.len()];
    for (g, c) in grads.iter().zip(coefs) {
        if *c != 0.0 {
            linalg::axpy(*c, g, &mut dir);
        }
    }
    let step = scaled_step(gamma, &dir, precond);
    x.iter().zip(&step).map(|(xi, si)| xi - si).collect()
}

pub(crate) fn check_inputs(x: &[f64], grads: &[ParamVector], precond: Option<&[f64]>) -> Result<()> {
    if grads.is_empty() {
        return Err(Error::EmptyInput("gradients"));
    }
    linalg::check_all_dims(x.len(), grads)?;
    if let Some(p) = precond {
        linalg::check_dim(x.len(), p)?;
    }
    Ok(())
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("step", "must be positive and finite"))
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("momentum", format!("{beta} is outside (0, 1]")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_valid() {
        let w = TrustWeights::uniform_over(7);
        assert!(w.is_valid(1e-12));
        assert_eq!(w.dense(9)[8], 0.0);
    }

    #[test]
    fn restrict_renormalizes() {
        let w = TrustWeights::new(vec![0.5, 0.25, 0.25], vec![0, 2, 5]).unwrap();
        let r = w.restrict_to(&[0, 5]);
        assert_eq!(r.as_slice(), &[0.5 / 0.75, 0.25 / 0.75]);
        let fresh = w.restrict_to(&[0, 1]);
        assert!(fresh.is_valid(1e-12));
        assert_eq!(fresh.weight_of(1), fresh.as_slice()[1]);
    }

    #[test]
    fn scaled_step_identity_matches_plain() {
        let g = [1.0, -2.0, 0.5];
        assert_eq!(scaled_step(0.1, &g, None), vec![0.1, -0.2, 0.05]);
        assert_eq!(scaled_step(0.1, &g, Some(&[2.0, 4.0, 0.5])), vec![0.05, -0.05, 0.1]);
    }
}
