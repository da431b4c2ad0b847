//! Trust weights as the minimizer of the trial loss over the simplex.
//!
//! The subproblem `min_{w in simplex} f_hat(base + sum_i w_i d_i)` is solved
//! with exponentiated-gradient (KL mirror descent) iterations started from
//! uniform weights. The partial derivative in `w_i` is
//! `<grad f_hat(y), d_i>`. For gradient candidates `d_i = -gamma P_hat^{-1} g_i`;
//! for local rounds `d_i = p_i - x` with `p_i` a reported point.
//!
//! The first step is `eta / spread` with `spread` the range of the partial
//! derivatives, which makes the iteration invariant to the scale of `f_hat`.
//! Later steps double after each accepted move and halve until the
//! sufficient-decrease bound `f(w') <= f(w) + <p, w' - w> + KL(w', w) / eta`
//! holds. The returned weights are the best point seen among the
//! iterates and the simplex vertices, so the result never scores worse than
//! uniform weights.

use serde::{Deserialize, Serialize};

use super::{check_gamma, check_inputs, scaled_step, weighted_step, TrustWeights};
use crate::error::{Error, Result};
use crate::linalg::{self, ParamVector};
use crate::trial::TrialSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorOptions {
    /// Base inner step `eta`.
    pub step: f64,
    pub iters: usize,
}

impl Default for MirrorOptions {
    fn default() -> Self {
        Self {
            step: 1.0,
            iters: 60,
        }
    }
}

impl MirrorOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid("mirror_step", "must be positive"));
        }
        if self.iters == 0 {
            return Err(Error::invalid("mirror_iters", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexSolution {
    pub weights: Vec<f64>,
    pub objective: f64,
    /// Objective at uniform weights.
    pub uniform_objective: f64,
}

/// Relative margin a candidate must beat the incumbent by. Keeps rounding
/// noise from displacing uniform weights in symmetric cases.
const IMPROVEMENT_MARGIN: f64 = 1e-13;
/// Step halvings allowed per iteration before the solver stops.
const MAX_BACKTRACK: usize = 40;

fn improves(candidate: f64, best: f64) -> bool {
    candidate < best - IMPROVEMENT_MARGIN * (1.0 + best.abs())
}

/// Multiplicative update `w_i exp(-eta (p_i - lo))`, renormalized.
fn eg_update(w: &[f64], partial: &[f64], lo: f64, eta: f64) -> Vec<f64> {
    // Exponents are shifted by their max before exp to avoid overflow.
    let expo: Vec<f64> = w
        .iter()
        .zip(partial)
        .map(|(wi, p)| if *wi > 0.0 { wi.ln() - eta * (p - lo) } else { f64::NEG_INFINITY })
        .collect();
    let m = expo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = expo.iter().map(|e| (e - m).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / total).collect()
}

fn point(base: &[f64], dirs: &[ParamVector], w: &[f64]) -> ParamVector {
    let mut y = base.to_vec();
    for (d, wi) in dirs.iter().zip(w) {
        if *wi != 0.0 {
            linalg::axpy(*wi, d, &mut y);
        }
    }
    y
}

/// Minimizes `f_hat(base + sum_i w_i dirs_i)` over the simplex.
pub fn solve_simplex(
    ts: &TrialSet,
    base: &[f64],
    dirs: &[ParamVector],
    opts: MirrorOptions,
) -> Result<SimplexSolution> {
    opts.validate()?;
    if dirs.is_empty() {
        return Err(Error::EmptyInput("simplex directions"));
    }
    linalg::check_all_dims(base.len(), dirs)?;
    let n = dirs.len();
    let mut w = vec![1.0 / n as f64; n];
    let uniform_objective = ts.loss(&point(base, dirs, &w))?;
    if n == 1 {
        return Ok(SimplexSolution {
            weights: w,
            objective: uniform_objective,
            uniform_objective,
        });
    }
    let mut best_w = w.clone();
    let mut best = uniform_objective;
    let mut current = uniform_objective;
    let mut eta = 0.0;

    for k in 0..opts.iters {
        let gy = ts.gradient(&point(base, dirs, &w))?;
        let partial: Vec<f64> = dirs.iter().map(|d| linalg::dot(&gy, d)).collect();
        let hi = partial.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = partial.iter().cloned().fold(f64::INFINITY, f64::min);
        let spread = hi - lo;
        if !(spread > 0.0) || !spread.is_finite() {
            break;
        }
        if k == 0 {
            eta = opts.step / spread;
        }
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let next = eg_update(&w, &partial, lo, eta);
            let obj = ts.loss(&point(base, dirs, &next))?;
            let mut bound = current;
            for ((a, b), p) in next.iter().zip(&w).zip(&partial) {
                bound += p * (a - b);
                if *a > 0.0 && *b > 0.0 {
                    bound += a * (a / b).ln() / eta;
                }
            }
            if obj <= bound + IMPROVEMENT_MARGIN * (1.0 + current.abs()) {
                accepted = Some((next, obj));
                break;
            }
            eta *= 0.5;
        }
        let Some((next, obj)) = accepted else { break };
        w = next;
        current = obj;
        eta *= 2.0;
        if improves(obj, best) {
            best = obj;
            best_w = w.clone();
        }
    }

    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let obj = ts.loss(&point(base, dirs, &e))?;
        if improves(obj, best) {
            best = obj;
            best_w = e;
        }
    }

    Ok(SimplexSolution {
        weights: best_w,
        objective: best,
        uniform_objective,
    })
}

/// Approximately minimizes `f_hat(x - gamma P_hat^{-1} sum_i w_i g_i)` over
/// the simplex.
pub fn autobant_solve(
    ts: &TrialSet,
    x: &[f64],
    grads: &[ParamVector],
    gamma: f64,
    opts: MirrorOptions,
    precond: Option<&[f64]>,
) -> Result<SimplexSolution> {
    check_gamma(gamma)?;
    check_inputs(x, grads, precond)?;
    let dirs: Vec<ParamVector> = grads
        .iter()
        .map(|g| scaled_step(-gamma, g, precond))
        .collect();
    solve_simplex(ts, x, &dirs, opts)
}

/// `x - gamma P_hat^{-1} sum_i w_i g_i`.
pub fn autobant_step(
    x: &[f64],
    grads: &[ParamVector],
    weights: &TrustWeights,
    gamma: f64,
    precond: Option<&[f64]>,
) -> Result<ParamVector> {
    check_inputs(x, grads, precond)?;
    if weights.len() != grads.len() {
        return Err(Error::DimensionMismatch {
            expected: grads.len(),
            got: weights.len(),
        });
    }
    Ok(weighted_step(x, grads, weights.as_slice(), gamma, precond))
}
