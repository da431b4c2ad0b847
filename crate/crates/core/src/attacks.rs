//! Byzantine behaviors and the per-round Byzantine schedule.
//!
//! Attackers are omniscient: the engine materializes every honest gradient of
//! the round before any attack runs, and passes that snapshot in.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ParamVector};
use crate::problems::WorkerShard;
use crate::rng::{gaussian_vector, Purpose, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    LabelFlip,
    SignFlip,
    RandomGradient,
    Ipm,
    Alie,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::LabelFlip => "label-flip",
            AttackKind::SignFlip => "sign-flip",
            AttackKind::RandomGradient => "random-gradient",
            AttackKind::Ipm => "ipm",
            AttackKind::Alie => "alie",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// IPM factor.
    pub kappa: f64,
    /// Per-coordinate standard deviation of random gradients.
    pub scale: f64,
    /// ALIE spread multiplier.
    pub z: f64,
}

impl AttackSpec {
    pub fn new(kind: AttackKind) -> Self {
        Self {
            kind,
            kappa: 0.5,
            scale: 1.0,
            z: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            AttackKind::Ipm if !(self.kappa > 0.0) => Err(Error::invalid("kappa", "must be positive")),
            AttackKind::RandomGradient if !(self.scale > 0.0) => {
                Err(Error::invalid("scale", "must be positive"))
            }
            AttackKind::Alie if !self.z.is_finite() => Err(Error::invalid("z", "must be finite")),
            _ => Ok(()),
        }
    }
}

/// The vector a Byzantine worker sends.
///
/// `honest` is the round's snapshot of honest gradients, `own` the gradient
/// the worker would have sent honestly, and `key` the worker's stream for
/// any randomness.
pub fn apply_attack(
    spec: &AttackSpec,
    honest: &[ParamVector],
    own: &[f64],
    shard: &WorkerShard,
    x: &[f64],
    key: StreamKey,
) -> Result<ParamVector> {
    let d = own.len();
    match spec.kind {
        AttackKind::SignFlip => Ok(own.iter().map(|v| -v).collect()),
        AttackKind::Ipm => {
            if honest.is_empty() {
                return Err(Error::NoHonestWorkers("ipm"));
            }
            let m = linalg::mean(honest)?;
            Ok(m.iter().map(|v| -spec.kappa * v).collect())
        }
        AttackKind::RandomGradient => {
            let mut rng = key.rng();
            Ok(gaussian_vector(&mut rng, d, spec.scale))
        }
        AttackKind::Alie => alie(honest, spec.z),
        AttackKind::LabelFlip => shard.flipped_stochastic_gradient(x, key),
    }
}

/// Coordinate-wise `mu_j - z s_j` with population standard deviation.
/// Values are sorted per coordinate before summation, so the result does not
/// depend on the order of `honest`.
pub fn alie(honest: &[ParamVector], z: f64) -> Result<ParamVector> {
    let first = honest.first().ok_or(Error::NoHonestWorkers("alie"))?;
    let d = first.len();
    linalg::check_all_dims(d, honest)?;
    let n = honest.len() as f64;
    let mut col = vec![0.0; honest.len()];
    Ok((0..d)
        .map(|j| {
            for (c, g) in col.iter_mut().zip(honest) {
                *c = g[j];
            }
            col.sort_by(f64::total_cmp);
            let mu = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            mu - z * var.sqrt()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulePolicy {
    Static,
    ResamplePerRound,
}

/// Which workers are Byzantine in each round. Worker 1 (index 0) is never
/// Byzantine.
#[derive(Debug, Clone)]
pub struct ByzantineSchedule {
    n: usize,
    count: usize,
    policy: SchedulePolicy,
    seed: u64,
    fixed: Vec<bool>,
}

impl ByzantineSchedule {
    /// `fraction_percent` of `n`, rounded to the nearest count.
    pub fn new(n: usize, fraction_percent: f64, policy: SchedulePolicy, seed: u64) -> Result<Self> {
        if !(0.0..=100.0).contains(&fraction_percent) {
            return Err(Error::invalid("fraction", "must lie in [0, 100]"));
        }
        let count = (n as f64 * fraction_percent / 100.0).round() as usize;
        if count >= n {
            return Err(Error::invalid(
                "fraction",
                format!("{fraction_percent}% of {n} workers leaves no honest worker"),
            ));
        }
        let mut s = Self {
            n,
            count,
            policy,
            seed,
            fixed: Vec::new(),
        };
        s.fixed = s.draw(0);
        Ok(s)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    fn draw(&self, round: u64) -> Vec<bool> {
        let mut mask = vec![false; self.n];
        if self.count == 0 {
            return mask;
        }
        let mut rng = StreamKey::new(self.seed, Purpose::ByzantineSchedule, 0, round).rng();
        for k in index::sample(&mut rng, self.n - 1, self.count).into_iter() {
            mask[k + 1] = true;
        }
        mask
    }

    /// Byzantine membership mask for round `t`.
    pub fn at(&self, t: u64) -> Vec<bool> {
        match self.policy {
            SchedulePolicy::Static => self.fixed.clone(),
            SchedulePolicy::ResamplePerRound => self.draw(t),
        }
    }
}
