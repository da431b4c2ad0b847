//! Assumption audits on a configured problem, backing the `audit` command.

use rand::Rng;
use serde::Serialize;

use crate::aggregation::{autobant_solve, bant_weights, ContributionCoeffs, MirrorOptions, TrustWeights};
use crate::engine::ExperimentConfig;
use crate::error::Result;
use crate::linalg::{self, ParamVector};
use crate::oracle::{finite_diff_grad, grid_min_simplex, reference_bant_weights, GridSpec};
use crate::problems::{audit_heterogeneity, Problem};
use crate::rng::{gaussian_vector, Purpose, StreamKey};
use crate::trial::TrialSet;

#[derive(Debug, Clone, Serialize)]
pub struct NoiseAudit {
    pub draws: usize,
    pub points: usize,
    /// Largest per-coordinate gap between the mean gradient and the exact one.
    pub max_mean_deviation: f64,
    /// `5 sigma / sqrt(draws)`.
    pub mean_bound: f64,
    /// Largest mean squared noise norm over the points.
    pub max_noise_sq: f64,
    pub sigma_sq: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HeterogeneityAudit {
    pub points: usize,
    pub delta1_target: f64,
    pub delta2_target: f64,
    pub delta1_measured: f64,
    pub delta2_measured: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub noise: NoiseAudit,
    pub heterogeneity: HeterogeneityAudit,
    /// Largest relative error of shard gradients against central differences.
    pub finite_diff_max_rel_error: f64,
    /// Largest `||grad f_hat(x) - grad f_hat(y)|| / ||x - y||` over random pairs.
    pub trial_lipschitz_ratio: f64,
    pub smoothness: f64,
    pub bant_reference_max_diff: f64,
    /// Largest `autobant - lattice` objective gap over 3-worker scenarios.
    pub simplex_max_gap: f64,
}

fn random_points(seed: u64, count: usize, d: usize, scale: f64) -> Vec<ParamVector> {
    let mut rng = StreamKey::new(seed, Purpose::Audit, 0, 0).rng();
    (0..count).map(|_| gaussian_vector(&mut rng, d, scale)).collect()
}

pub fn run_audit(cfg: &ExperimentConfig, draws: usize) -> Result<AuditReport> {
    let problem = Problem::build(&cfg.problem, cfg.workers, cfg.seed)?;
    let d = problem.dim();
    let shard = problem.server_shard();
    let points = random_points(cfg.seed, 3, d, 1.0);

    let mut max_dev: f64 = 0.0;
    let mut max_sq: f64 = 0.0;
    for (k, x) in points.iter().enumerate() {
        let exact = shard.gradient(x)?;
        let mut mean = vec![0.0; d];
        let mut sq = 0.0;
        for r in 0..draws {
            let key = StreamKey::new(cfg.seed, Purpose::Audit, k + 1, r as u64);
            let g = shard.honest_gradient(x, key)?;
            sq += linalg::dist_sq(&g, &exact);
            linalg::axpy(1.0, &g, &mut mean);
        }
        for (m, e) in mean.iter().zip(&exact) {
            max_dev = max_dev.max((m / draws as f64 - e).abs());
        }
        max_sq = max_sq.max(sq / draws as f64);
    }
    let sigma = cfg.problem.noise;

    let het_points = random_points(cfg.seed ^ 0x5eed, 20, d, 2.0);
    let (d1, d2) = audit_heterogeneity(problem.shards(), &het_points)?;

    let mut fd_err: f64 = 0.0;
    for x in random_points(cfg.seed ^ 0xfd, 5, d, 1.0) {
        for s in problem.shards() {
            let exact = s.gradient(&x)?;
            let fd = finite_diff_grad(|y| s.loss(y).expect("dimension checked"), &x, 1e-5)?;
            let rel = linalg::dist_sq(&exact, &fd).sqrt() / linalg::norm(&exact).max(1e-8);
            fd_err = fd_err.max(rel);
        }
    }

    let ts = TrialSet::draw(shard, cfg.trial_size, cfg.seed)?;
    let mut ratio: f64 = 0.0;
    let pairs = random_points(cfg.seed ^ 0x11, 200, d, 2.0);
    for pair in pairs.chunks(2) {
        let num = linalg::dist_sq(&ts.gradient(&pair[0])?, &ts.gradient(&pair[1])?).sqrt();
        let den = linalg::dist_sq(&pair[0], &pair[1]).sqrt();
        if den > 0.0 {
            ratio = ratio.max(num / den);
        }
    }

    let mut rng = StreamKey::new(cfg.seed, Purpose::Audit, 0, 1).rng();
    let mut bant_diff: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..12usize);
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let prev = TrustWeights::from_weights(raw.iter().map(|v| v / total).collect())?;
        let theta: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let beta = rng.random_range(0.01..=1.0);
        let a = bant_weights(&prev, &ContributionCoeffs::new(theta.clone()), beta)?;
        let b = reference_bant_weights(&prev, &theta, beta)?;
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            bant_diff = bant_diff.max((x - y).abs());
        }
    }

    let grid = GridSpec::new(3, 0.05)?;
    let mut gap: f64 = 0.0;
    for x in random_points(cfg.seed ^ 0x33, 10, d, 1.0) {
        let g = ts.gradient(&x)?;
        let grads = vec![
            g.clone(),
            linalg::scale(-1.0, &g),
            gaussian_vector(&mut rng, d, linalg::norm(&g) / (d as f64).sqrt()),
        ];
        let sol = autobant_solve(&ts, &x, &grads, cfg.step, MirrorOptions::default(), None)?;
        let (_, best) = grid_min_simplex(&ts, &x, &grads, cfg.step, grid, None)?;
        gap = gap.max(sol.objective - best);
    }

    Ok(AuditReport {
        noise: NoiseAudit {
            draws,
            points: points.len(),
            max_mean_deviation: max_dev,
            mean_bound: 5.0 * sigma / (draws as f64).sqrt(),
            max_noise_sq: max_sq,
            sigma_sq: sigma * sigma,
        },
        heterogeneity: HeterogeneityAudit {
            points: het_points.len(),
            delta1_target: cfg.problem.delta1,
            delta2_target: cfg.problem.delta2,
            delta1_measured: d1,
            delta2_measured: d2,
        },
        finite_diff_max_rel_error: fd_err,
        trial_lipschitz_ratio: ratio,
        smoothness: cfg.problem.smoothness,
        bant_reference_max_diff: bant_diff,
        simplex_max_gap: gap,
    })
}
