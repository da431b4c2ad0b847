//! The server's trusted trial set.
//!
//! The trial set is `N` samples drawn from worker 1's distribution. Its
//! empirical loss `f_hat(x) = (1/N) sum_j f_1(x, xi_j)` reduces to
//! `f_1(x) + <xi_bar, x>` under the linear sample model, so the mean sample is
//! cached and loss and gradient evaluations cost one local evaluation.
//!
//! The set also carries probe directions. Projecting a candidate update onto
//! them gives the model readouts used by similarity-based trust.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ParamVector};
use crate::problems::WorkerShard;
use crate::rng::{gaussian_vector, Purpose, StreamKey};

pub const DEFAULT_PROBES: usize = 64;

#[derive(Debug, Clone)]
pub struct TrialSet {
    shard: WorkerShard,
    samples: Vec<ParamVector>,
    mean_sample: ParamVector,
    probes: Vec<ParamVector>,
}

impl TrialSet {
    /// Draws `size` samples from the server shard. Pure in `(shard, size, seed)`.
    pub fn draw(shard: &WorkerShard, size: usize, seed: u64) -> Result<Self> {
        Self::draw_with_probes(shard, size, DEFAULT_PROBES, seed)
    }

    pub fn draw_with_probes(
        shard: &WorkerShard,
        size: usize,
        probes: usize,
        seed: u64,
    ) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("trial_size", "must be at least 1"));
        }
        let mut rng = StreamKey::new(seed, Purpose::TrialSamples, shard.id, 0).rng();
        let samples: Vec<ParamVector> = (0..size).map(|_| shard.draw_sample(&mut rng)).collect();
        let mean_sample = linalg::mean(&samples)?;
        let mut prng = StreamKey::new(seed, Purpose::TrialProbes, shard.id, 0).rng();
        let d = shard.dim;
        let probes = (0..probes)
            .map(|_| gaussian_vector(&mut prng, d, 1.0 / (d as f64).sqrt()))
            .collect();
        Ok(Self {
            shard: shard.clone(),
            samples,
            mean_sample,
            probes,
        })
    }

    pub fn size(&self) -> usize {
        self.samples.len()
    }

    pub fn dim(&self) -> usize {
        self.shard.dim
    }

    pub fn samples(&self) -> &[ParamVector] {
        &self.samples
    }

    pub fn mean_sample(&self) -> &[f64] {
        &self.mean_sample
    }

    pub fn probes(&self) -> &[ParamVector] {
        &self.probes
    }

    pub fn shard(&self) -> &WorkerShard {
        &self.shard
    }

    /// Empirical trial loss `f_hat(x)`.
    pub fn loss(&self, x: &[f64]) -> Result<f64> {
        Ok(self.shard.loss(x)? + linalg::dot(&self.mean_sample, x))
    }

    /// Gradient of the empirical trial loss.
    pub fn gradient(&self, x: &[f64]) -> Result<ParamVector> {
        let mut g = self.shard.gradient(x)?;
        linalg::axpy(1.0, &self.mean_sample, &mut g);
        Ok(g)
    }

    /// Squared distance between the trial gradient and the true server gradient.
    pub fn gradient_discrepancy(&self, x: &[f64]) -> Result<f64> {
        Ok(linalg::dist_sq(&self.gradient(x)?, &self.shard.gradient(x)?))
    }

    /// Readouts of the update `from -> to` on each probe, divided by `scale`.
    pub fn probe_readouts(&self, from: &[f64], to: &[f64], scale: f64) -> Result<Vec<f64>> {
        linalg::check_dim(self.dim(), from)?;
        linalg::check_dim(self.dim(), to)?;
        let delta = linalg::sub(from, to);
        Ok(self
            .probes
            .iter()
            .map(|a| linalg::dot(a, &delta) / scale)
            .collect())
    }
}

/// One point of a `zeta(N)` curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaPoint {
    pub trial_size: usize,
    pub discrepancy: f64,
}

/// Estimates `zeta(N) = sup_x E||grad f_1(x) - grad f_hat(x)||^2` for each
/// trial size: the expectation is a mean over `reps` independent trial sets,
/// the supremum a max over `probes`.
pub fn zeta_curve(
    shard: &WorkerShard,
    probes: &[ParamVector],
    sizes: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<ZetaPoint>> {
    if reps == 0 {
        return Err(Error::invalid("reps", "must be at least 1"));
    }
    if probes.is_empty() {
        return Err(Error::EmptyInput("zeta probes"));
    }
    sizes
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let mut acc = vec![0.0; probes.len()];
            for r in 0..reps {
                let key = StreamKey::new(seed, Purpose::Zeta, k, r as u64);
                let ts = TrialSet::draw_with_probes(shard, n, 0, key.rng_seed())?;
                for (a, p) in acc.iter_mut().zip(probes) {
                    *a += ts.gradient_discrepancy(p)?;
                }
            }
            let discrepancy = acc
                .into_iter()
                .map(|a| a / reps as f64)
                .fold(0.0_f64, f64::max);
            Ok(ZetaPoint {
                trial_size: n,
                discrepancy,
            })
        })
        .collect()
}

/// Least-squares slope of `log(discrepancy)` against `log(N)`.
pub fn fit_loglog_slope(points: &[ZetaPoint]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.discrepancy > 0.0)
        .map(|p| ((p.trial_size as f64).ln(), p.discrepancy.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::invalid("points", "need two positive points to fit a slope"));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("points", "trial sizes must differ"));
    }
    Ok(sxy / sxx)
}
