//! Trust weights from trial-loss decrease.
//!
//! Worker `i`'s contribution coefficient is the decrease of the trial loss
//! along its candidate step, `theta_i = f_hat(x) - f_hat(x - gamma g_i)`.
//! Weights are a momentum blend of the previous weights and the normalized
//! positive parts of `theta`; the step only uses workers with `theta_i > 0`.

use super::{check_beta, check_gamma, check_inputs, scaled_step, weighted_step, TrustWeights};
use crate::error::{Error, Result};
use crate::linalg::ParamVector;
use crate::trial::TrialSet;

#[derive(Debug, Clone, PartialEq)]
pub struct ContributionCoeffs {
    pub theta: Vec<f64>,
}

impl ContributionCoeffs {
    pub fn new(theta: Vec<f64>) -> Self {
        Self { theta }
    }

    /// `[theta_i]_0 = max(theta_i, 0)`.
    pub fn clipped(&self) -> Vec<f64> {
        self.theta.iter().map(|t| t.max(0.0)).collect()
    }

    pub fn all_nonpositive(&self) -> bool {
        self.theta.iter().all(|t| !(*t > 0.0))
    }

    /// The step indicator `1[theta_i > 0]`.
    pub fn positive(&self, i: usize) -> bool {
        self.theta[i] > 0.0
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

pub fn contribution_coeffs(
    ts: &TrialSet,
    x: &[f64],
    grads: &[ParamVector],
    gamma: f64,
    precond: Option<&[f64]>,
) -> Result<ContributionCoeffs> {
    check_gamma(gamma)?;
    check_inputs(x, grads, precond)?;
    let base = ts.loss(x)?;
    let theta = grads
        .iter()
        .map(|g| {
            let s = scaled_step(gamma, g, precond);
            let y: Vec<f64> = x.iter().zip(&s).map(|(xi, si)| xi - si).collect();
            Ok(base - ts.loss(&y)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ContributionCoeffs { theta })
}

/// Momentum update of the trust weights. Falls back to a uniform fresh term
/// when no coefficient is positive.
pub fn bant_weights(
    prev: &TrustWeights,
    coeffs: &ContributionCoeffs,
    beta: f64,
) -> Result<TrustWeights> {
    check_beta(beta)?;
    if prev.len() != coeffs.len() {
        return Err(Error::DimensionMismatch {
            expected: prev.len(),
            got: coeffs.len(),
        });
    }
    let n = coeffs.len() as f64;
    let clipped = coeffs.clipped();
    let total: f64 = clipped.iter().sum();
    let weights = if total > 0.0 {
        prev.as_slice()
            .iter()
            .zip(&clipped)
            .map(|(p, c)| (1.0 - beta) * p + beta * c / total)
            .collect()
    } else {
        prev.as_slice()
            .iter()
            .map(|p| (1.0 - beta) * p + beta / n)
            .collect()
    };
    TrustWeights::new(weights, prev.active().to_vec())
}

/// `x - gamma P_hat^{-1} sum_i 1[theta_i > 0] w_i g_i`.
pub fn bant_step(
    x: &[f64],
    grads: &[ParamVector],
    weights: &TrustWeights,
    coeffs: &ContributionCoeffs,
    gamma: f64,
    precond: Option<&[f64]>,
) -> Result<ParamVector> {
    check_inputs(x, grads, precond)?;
    if weights.len() != grads.len() || coeffs.len() != grads.len() {
        return Err(Error::DimensionMismatch {
            expected: grads.len(),
            got: weights.len().min(coeffs.len()),
        });
    }
    let coefs: Vec<f64> = weights
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, w)| if coeffs.positive(i) { *w } else { 0.0 })
        .collect();
    Ok(weighted_step(x, grads, &coefs, gamma, precond))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Problem, ProblemFamily};

    fn trial() -> TrialSet {
        let fam = ProblemFamily::quadratic(3, 4.0, 1.0, 0.0);
        let p = Problem::build(&fam, 2, 1).unwrap();
        TrialSet::draw(p.server_shard(), 5, 0).unwrap()
    }

    #[test]
    fn hand_evaluated_weights() {
        let prev = TrustWeights::uniform_over(3);
        let w = bant_weights(&prev, &ContributionCoeffs::new(vec![2.0, 1.0, 0.0]), 1.0).unwrap();
        assert_eq!(w.as_slice(), &[2.0 / 3.0, 1.0 / 3.0, 0.0]);

        let prev = TrustWeights::from_weights(vec![0.8, 0.2]).unwrap();
        let w = bant_weights(&prev, &ContributionCoeffs::new(vec![0.0, 5.0]), 0.5).unwrap();
        assert_eq!(w.as_slice(), &[0.4, 0.6]);
    }

    #[test]
    fn fallback_keeps_uniform() {
        for beta in [0.1, 0.5, 1.0] {
            let prev = TrustWeights::uniform_over(4);
            let c = ContributionCoeffs::new(vec![-1.0, 0.0, -3.0, -0.5]);
            let w = bant_weights(&prev, &c, beta).unwrap();
            for v in w.as_slice() {
                assert!((v - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_bad_momentum() {
        let prev = TrustWeights::uniform_over(2);
        let c = ContributionCoeffs::new(vec![1.0, 1.0]);
        assert!(bant_weights(&prev, &c, 1.5).is_err());
        assert!(bant_weights(&prev, &c, 0.0).is_err());
    }

    #[test]
    fn coefficient_signs() {
        let ts = trial();
        let x = [1.0, -2.0, 0.5];
        let g = ts.gradient(&x).unwrap();
        let flipped: Vec<f64> = g.iter().map(|v| -v).collect();
        let c = contribution_coeffs(&ts, &x, &[vec![0.0; 3], g, flipped], 0.25, None).unwrap();
        assert_eq!(c.theta[0], 0.0);
        assert!(c.theta[1] > 0.0);
        assert!(c.theta[2] < 0.0);
        assert_eq!(c.clipped()[2], 0.0);
    }

    #[test]
    fn stalled_round_keeps_x() {
        let x = [1.0, 2.0];
        let grads = vec![vec![1.0, 1.0], vec![-1.0, 3.0]];
        let w = TrustWeights::uniform_over(2);
        let c = ContributionCoeffs::new(vec![-0.1, 0.0]);
        assert_eq!(bant_step(&x, &grads, &w, &c, 0.1, None).unwrap(), x.to_vec());
    }

    #[test]
    fn single_worker_is_sgd() {
        let x = [1.0, 2.0];
        let g = vec![vec![0.5, -1.0]];
        let w = TrustWeights::uniform_over(1);
        let c = ContributionCoeffs::new(vec![1.0]);
        assert_eq!(
            bant_step(&x, &g, &w, &c, 0.2, None).unwrap(),
            vec![1.0 - 0.2 * 0.5, 2.0 + 0.2]
        );
    }
}
