//! Diagonal adaptive preconditioner.
//!
//! The accumulator follows `P_t^2 = beta_t P_{t-1}^2 + (1 - beta_t) g_t^2`
//! and the applied diagonal is floored, `P_hat = max(e, |P_t|)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreconditionerKind {
    Identity,
    /// Bias-corrected second-moment average: `beta_t = beta (1 - beta^{t-1}) / (1 - beta^t)`,
    /// so the accumulator equals the bias-corrected average of `g^2`.
    AdamLike,
    /// Constant decay `beta_t = beta`.
    RmspropLike,
}

impl PreconditionerKind {
    pub fn name(self) -> &'static str {
        match self {
            PreconditionerKind::Identity => "identity",
            PreconditionerKind::AdamLike => "adam-like",
            PreconditionerKind::RmspropLike => "rmsprop-like",
        }
    }

    pub fn default_beta(self) -> f64 {
        match self {
            PreconditionerKind::AdamLike => 0.999,
            _ => 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreconditionerState {
    pub kind: PreconditionerKind,
    pub beta: f64,
    pub floor: f64,
    accum: Vec<f64>,
    diag: Vec<f64>,
    updates: u64,
}

impl PreconditionerState {
    pub fn new(kind: PreconditionerKind, dim: usize, beta: f64, floor: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::invalid("precond_beta", "must lie in [0, 1)"));
        }
        if !(floor > 0.0) {
            return Err(Error::invalid("precond_floor", "must be positive"));
        }
        let diag = match kind {
            PreconditionerKind::Identity => vec![1.0; dim],
            _ => vec![floor; dim],
        };
        Ok(Self {
            kind,
            beta,
            floor,
            accum: vec![0.0; dim],
            diag,
            updates: 0,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(PreconditionerKind::Identity, dim, 0.0, 1.0).expect("valid identity")
    }

    /// The decay used by the next update.
    pub fn next_decay(&self) -> f64 {
        let t = (self.updates + 1) as i32;
        match self.kind {
            PreconditionerKind::Identity => 0.0,
            PreconditionerKind::RmspropLike => self.beta,
            PreconditionerKind::AdamLike => {
                self.beta * (1.0 - self.beta.powi(t - 1)) / (1.0 - self.beta.powi(t))
            }
        }
    }

    /// Floored diagonal `P_hat`, or `None` for the identity kind.
    pub fn diagonal(&self) -> Option<&[f64]> {
        match self.kind {
            PreconditionerKind::Identity => None,
            _ => Some(&self.diag),
        }
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.accum
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn update(&mut self, g: &[f64]) -> Result<()> {
        let decay = self.next_decay();
        self.update_with_decay(g, decay)
    }

    /// Update with an explicit `beta_t`.
    pub fn update_with_decay(&mut self, g: &[f64], decay: f64) -> Result<()> {
        linalg::check_dim(self.accum.len(), g)?;
        self.updates += 1;
        if self.kind == PreconditionerKind::Identity {
            return Ok(());
        }
        for ((a, d), gi) in self.accum.iter_mut().zip(self.diag.iter_mut()).zip(g) {
            *a = decay * *a + (1.0 - decay) * gi * gi;
            *d = a.sqrt().max(self.floor);
        }
        Ok(())
    }
}

/// Functional form of [`PreconditionerState::update`].
pub fn update_preconditioner(ps: &PreconditionerState, g: &[f64]) -> Result<PreconditionerState> {
    let mut next = ps.clone();
    next.update(g)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_never_scales() {
        let mut p = PreconditionerState::identity(3);
        p.update(&[5.0, 1.0, -2.0]).unwrap();
        assert!(p.diagonal().is_none());
    }

    #[test]
    fn zero_decay_takes_gradient_magnitude() {
        let mut p = PreconditionerState::new(PreconditionerKind::RmspropLike, 2, 0.5, 1e-8).unwrap();
        p.update_with_decay(&[3.0, -3.0], 0.0).unwrap();
        assert_eq!(p.diagonal().unwrap(), &[3.0, 3.0]);
    }

    #[test]
    fn decays_to_floor() {
        let mut p = PreconditionerState::new(PreconditionerKind::RmspropLike, 1, 0.999, 1e-8).unwrap();
        p.update(&[1.0]).unwrap();
        let mut last = p.diagonal().unwrap()[0];
        for _ in 0..50_000 {
            p.update(&[0.0]).unwrap();
            let d = p.diagonal().unwrap()[0];
            assert!(d <= last && d >= 1e-8);
            last = d;
        }
        assert_eq!(last, 1e-8);
    }

    #[test]
    fn adam_first_update_is_unbiased() {
        let mut p = PreconditionerState::new(PreconditionerKind::AdamLike, 2, 0.999, 1e-8).unwrap();
        assert_eq!(p.next_decay(), 0.0);
        p.update(&[2.0, -0.5]).unwrap();
        assert_eq!(p.diagonal().unwrap(), &[2.0, 0.5]);
        // A constant gradient keeps the bias-corrected average constant.
        for _ in 0..100 {
            p.update(&[2.0, -0.5]).unwrap();
        }
        let d = p.diagonal().unwrap();
        assert!((d[0] - 2.0).abs() < 1e-12 && (d[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(PreconditionerState::new(PreconditionerKind::AdamLike, 2, 1.0, 1e-8).is_err());
        assert!(PreconditionerState::new(PreconditionerKind::AdamLike, 2, 0.9, 0.0).is_err());
    }
}
