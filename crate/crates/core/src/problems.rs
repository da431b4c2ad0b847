//! Synthetic distributed optimization problems.
//!
//! Each worker `i` owns a local objective `f_i` and draws stochastic samples
//! `f_i(x, xi) = f_i(x) + <xi, x>` with `xi ~ N(0, sigma^2/d I)`, so honest
//! stochastic gradients are unbiased with `E||g - grad f_i||^2 = sigma^2`.
//!
//! Two objective shapes are supported:
//!
//! * separable: `f_i(x) = sum_j s_i h_j (x_j - c_ij)^2 / 2 + a sum_j (1 - cos(x_j - x*_j))`.
//!   With `a = 0` this is the quadratic family (Hessian `s_i diag(h)`); with
//!   `a = L/2` it is the non-convex quadratic-plus-sine family.
//! * logistic: regularized logistic loss over a fixed local data set with
//!   explicit `+-1` labels.
//!
//! Heterogeneity is synthesized by translating per-worker optima (controls
//! `delta1`) and scaling per-worker curvature by `1 +- sqrt(delta2)` (controls
//! `delta2`). Offsets are balanced so that the global optimum stays at the
//! shared anchor `x*`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ParamVector};
use crate::rng::{gaussian_vector, Purpose, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Quadratic,
    Logistic,
    NonconvexSine,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Quadratic => "quadratic",
            ProblemKind::Logistic => "logistic",
            ProblemKind::NonconvexSine => "nonconvex-sine",
        }
    }
}

/// Parameters of a synthetic problem family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFamily {
    pub kind: ProblemKind,
    pub dim: usize,
    /// Smoothness constant `L`.
    pub smoothness: f64,
    /// Strong-convexity modulus `mu` (0 for merely convex).
    pub strong_convexity: f64,
    /// Stochastic gradient noise level `sigma`.
    pub noise: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// Local data set size (logistic only; nominal for the separable kinds).
    pub samples_per_worker: usize,
    /// Standard deviation of the global optimum's coordinates around 0.
    pub optimum_scale: f64,
}

impl ProblemFamily {
    pub fn quadratic(dim: usize, smoothness: f64, strong_convexity: f64, noise: f64) -> Self {
        Self {
            kind: ProblemKind::Quadratic,
            dim,
            smoothness,
            strong_convexity,
            noise,
            delta1: 0.0,
            delta2: 0.0,
            samples_per_worker: 1,
            optimum_scale: 1.0,
        }
    }

    pub fn with_heterogeneity(mut self, delta1: f64, delta2: f64) -> Self {
        self.delta1 = delta1;
        self.delta2 = delta2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if !(self.smoothness.is_finite() && self.smoothness > 0.0) {
            return Err(Error::invalid("smoothness", "must be positive"));
        }
        if !(self.strong_convexity >= 0.0) {
            return Err(Error::invalid("strong_convexity", "must be nonnegative"));
        }
        if self.strong_convexity > self.smoothness {
            return Err(Error::invalid(
                "strong_convexity",
                format!("mu = {} exceeds L = {}", self.strong_convexity, self.smoothness),
            ));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::invalid("noise", "must be nonnegative"));
        }
        if !(self.delta1 >= 0.0) {
            return Err(Error::invalid("delta1", "must be nonnegative"));
        }
        if !(self.delta2 >= 0.0) {
            return Err(Error::invalid("delta2", "must be nonnegative"));
        }
        if self.delta2 >= 1.0 / 12.0 {
            return Err(Error::HeterogeneityBeyondGuarantee { delta2: self.delta2 });
        }
        if self.samples_per_worker == 0 {
            return Err(Error::invalid("samples_per_worker", "must be positive"));
        }
        if !(self.optimum_scale >= 0.0) {
            return Err(Error::invalid("optimum_scale", "must be nonnegative"));
        }
        Ok(())
    }
}

/// A worker's local objective.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalObjective {
    Separable {
        /// Per-coordinate curvature `s_i h_j`.
        curvature: Vec<f64>,
        center: Vec<f64>,
        /// Shared anchor of the cosine ripple.
        anchor: Vec<f64>,
        ripple: f64,
    },
    Logistic {
        features: Vec<Vec<f64>>,
        /// Labels in `{-1, +1}`.
        labels: Vec<f64>,
        regularization: f64,
    },
}

/// One worker's data and objective. Ids are 1-based; worker 1 is the server.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerShard {
    pub id: usize,
    pub dim: usize,
    pub noise: f64,
    pub sample_count: usize,
    pub objective: LocalObjective,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl WorkerShard {
    pub fn separable(id: usize, curvature: Vec<f64>, center: Vec<f64>, noise: f64) -> Self {
        let dim = curvature.len();
        Self {
            id,
            dim,
            noise,
            sample_count: 1,
            objective: LocalObjective::Separable {
                curvature,
                anchor: vec![0.0; dim],
                center,
                ripple: 0.0,
            },
        }
    }

    pub fn logistic(
        id: usize,
        features: Vec<Vec<f64>>,
        labels: Vec<f64>,
        regularization: f64,
        noise: f64,
    ) -> Result<Self> {
        let first = features.first().ok_or(Error::EmptyInput("logistic features"))?;
        let dim = first.len();
        linalg::check_all_dims(dim, &features)?;
        if labels.len() != features.len() {
            return Err(Error::invalid("labels", "one label per feature vector required"));
        }
        Ok(Self {
            id,
            dim,
            noise,
            sample_count: features.len(),
            objective: LocalObjective::Logistic {
                features,
                labels,
                regularization,
            },
        })
    }

    /// Deterministic local loss `f_i(x)`.
    pub fn loss(&self, x: &[f64]) -> Result<f64> {
        linalg::check_dim(self.dim, x)?;
        Ok(self.loss_signed(x, 1.0))
    }

    /// Local loss with every label flipped (logistic) or every residual
    /// negated (separable).
    pub fn flipped_loss(&self, x: &[f64]) -> Result<f64> {
        linalg::check_dim(self.dim, x)?;
        Ok(self.loss_signed(x, -1.0))
    }

    fn loss_signed(&self, x: &[f64], sign: f64) -> f64 {
        match &self.objective {
            LocalObjective::Separable {
                curvature,
                center,
                anchor,
                ripple,
            } => {
                let mut acc = 0.0;
                for j in 0..self.dim {
                    let r = x[j] - center[j];
                    let q = x[j] - anchor[j];
                    acc += 0.5 * curvature[j] * r * r + ripple * (1.0 - q.cos());
                }
                // Negating the residual turns descent into ascent on the same bowl.
                sign * acc
            }
            LocalObjective::Logistic {
                features,
                labels,
                regularization,
            } => {
                let m = features.len() as f64;
                let data: f64 = features
                    .iter()
                    .zip(labels)
                    .map(|(a, y)| softplus(-sign * y * linalg::dot(a, x)))
                    .sum();
                data / m + 0.5 * regularization * linalg::norm_sq(x)
            }
        }
    }

    /// Exact local gradient `grad f_i(x)`.
    pub fn gradient(&self, x: &[f64]) -> Result<ParamVector> {
        linalg::check_dim(self.dim, x)?;
        Ok(self.gradient_signed(x, 1.0))
    }

    /// Gradient of [`WorkerShard::flipped_loss`].
    pub fn flipped_gradient(&self, x: &[f64]) -> Result<ParamVector> {
        linalg::check_dim(self.dim, x)?;
        Ok(self.gradient_signed(x, -1.0))
    }

    fn gradient_signed(&self, x: &[f64], sign: f64) -> ParamVector {
        match &self.objective {
            LocalObjective::Separable {
                curvature,
                center,
                anchor,
                ripple,
            } => (0..self.dim)
                .map(|j| {
                    sign * (curvature[j] * (x[j] - center[j]) + ripple * (x[j] - anchor[j]).sin())
                })
                .collect(),
            LocalObjective::Logistic {
                features,
                labels,
                regularization,
            } => {
                let m = features.len() as f64;
                let mut g = linalg::scale(*regularization, x);
                for (a, y) in features.iter().zip(labels) {
                    let sy = sign * y;
                    // d/dx log(1 + exp(-sy a.x)) = -sy * sigmoid(-sy a.x) * a
                    let w = -sy * sigmoid(-sy * linalg::dot(a, x)) / m;
                    linalg::axpy(w, a, &mut g);
                }
                g
            }
        }
    }

    /// Stochastic sample loss `f_i(x, xi) = f_i(x) + <xi, x>`.
    pub fn sample_loss(&self, x: &[f64], sample: &[f64]) -> Result<f64> {
        linalg::check_dim(self.dim, sample)?;
        Ok(self.loss(x)? + linalg::dot(sample, x))
    }

    /// Draws one noise sample `xi` from this worker's sampling distribution.
    pub fn draw_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        gaussian_vector(rng, self.dim, self.noise_std_per_coordinate())
    }

    pub fn noise_std_per_coordinate(&self) -> f64 {
        self.noise / (self.dim as f64).sqrt()
    }

    /// Honest stochastic gradient `g_i(x, xi)` drawn from the stream `key`.
    pub fn honest_gradient(&self, x: &[f64], key: StreamKey) -> Result<ParamVector> {
        let mut g = self.gradient(x)?;
        self.add_noise(&mut g, key);
        Ok(g)
    }

    /// Stochastic gradient of the label-flipped loss.
    pub fn flipped_stochastic_gradient(&self, x: &[f64], key: StreamKey) -> Result<ParamVector> {
        let mut g = self.flipped_gradient(x)?;
        self.add_noise(&mut g, key);
        Ok(g)
    }

    fn add_noise(&self, g: &mut [f64], key: StreamKey) {
        if self.noise > 0.0 {
            let mut rng = key.rng();
            let noise = self.draw_sample(&mut rng);
            linalg::axpy(1.0, &noise, g);
        }
    }
}

/// A built problem: the shards plus the global objective `f = (1/n) sum f_i`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub family: ProblemFamily,
    shards: Vec<WorkerShard>,
    optimum: Option<ParamVector>,
    optimal_value: Option<f64>,
}

impl Problem {
    /// Builds `n` shards. A pure function of `(family, n, seed)`.
    pub fn build(family: &ProblemFamily, n: usize, seed: u64) -> Result<Self> {
        family.validate()?;
        if n < 2 {
            return Err(Error::invalid("workers", "at least 2 workers are required"));
        }
        match family.kind {
            ProblemKind::Quadratic | ProblemKind::NonconvexSine => build_separable(family, n, seed),
            ProblemKind::Logistic => build_logistic(family, n, seed),
        }
    }

    /// Wraps explicit shards. The optimum is located numerically when the
    /// objective is strongly convex.
    pub fn from_shards(family: ProblemFamily, shards: Vec<WorkerShard>) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::EmptyInput("shards"));
        }
        let dim = shards[0].dim;
        if shards.iter().any(|s| s.dim != dim) {
            return Err(Error::invalid("shards", "all shards must share a dimension"));
        }
        let mut p = Self {
            family,
            shards,
            optimum: None,
            optimal_value: None,
        };
        p.locate_optimum();
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.shards[0].dim
    }

    pub fn workers(&self) -> usize {
        self.shards.len()
    }

    pub fn shards(&self) -> &[WorkerShard] {
        &self.shards
    }

    /// Worker 1's shard, held by the trusted server.
    pub fn server_shard(&self) -> &WorkerShard {
        &self.shards[0]
    }

    pub fn optimum(&self) -> Option<&[f64]> {
        self.optimum.as_deref()
    }

    pub fn optimal_value(&self) -> Option<f64> {
        self.optimal_value
    }

    pub fn exact_gradient(&self, x: &[f64]) -> Result<ParamVector> {
        let d = self.dim();
        linalg::check_dim(d, x)?;
        let mut acc = vec![0.0; d];
        for s in &self.shards {
            linalg::axpy(1.0, &s.gradient(x)?, &mut acc);
        }
        let n = self.shards.len() as f64;
        acc.iter_mut().for_each(|v| *v /= n);
        Ok(acc)
    }

    pub fn exact_loss(&self, x: &[f64]) -> Result<f64> {
        linalg::check_dim(self.dim(), x)?;
        let mut acc = 0.0;
        for s in &self.shards {
            acc += s.loss(x)?;
        }
        Ok(acc / self.shards.len() as f64)
    }

    pub fn suboptimality(&self, x: &[f64]) -> Result<Option<f64>> {
        match self.optimal_value {
            Some(fstar) => Ok(Some(self.exact_loss(x)? - fstar)),
            None => Ok(None),
        }
    }

    /// Average Hessian diagonal for the separable kinds without ripple.
    pub fn average_curvature(&self) -> Option<Vec<f64>> {
        let d = self.dim();
        let mut acc = vec![0.0; d];
        for s in &self.shards {
            match &s.objective {
                LocalObjective::Separable {
                    curvature, ripple, ..
                } if *ripple == 0.0 => linalg::axpy(1.0, curvature, &mut acc),
                _ => return None,
            }
        }
        let n = self.shards.len() as f64;
        Some(acc.into_iter().map(|v| v / n).collect())
    }

    fn locate_optimum(&mut self) {
        // Gradient descent with step 1/L; only trusted when it actually converges.
        if !(self.family.strong_convexity > 0.0) {
            return;
        }
        let l = self.family.smoothness.max(1e-12);
        let mut x = vec![0.0; self.dim()];
        for _ in 0..200_000 {
            let g = match self.exact_gradient(&x) {
                Ok(g) => g,
                Err(_) => return,
            };
            if linalg::norm(&g) < 1e-12 {
                break;
            }
            linalg::axpy(-1.0 / l, &g, &mut x);
        }
        if let Ok(g) = self.exact_gradient(&x) {
            if linalg::norm(&g) < 1e-9 {
                self.optimal_value = self.exact_loss(&x).ok();
                self.optimum = Some(x);
            }
        }
    }
}

fn curvature_spectrum(family: &ProblemFamily) -> (Vec<f64>, f64) {
    let d = family.dim;
    let (lo, hi, ripple) = match family.kind {
        ProblemKind::NonconvexSine => {
            let ripple = 0.5 * family.smoothness;
            let hi = family.smoothness - ripple;
            (family.strong_convexity.min(hi), hi, ripple)
        }
        _ => (family.strong_convexity, family.smoothness, 0.0),
    };
    let h = if d == 1 {
        vec![hi]
    } else {
        (0..d)
            .map(|j| lo + (hi - lo) * j as f64 / (d - 1) as f64)
            .collect()
    };
    (h, ripple)
}

/// Zero-sum offsets of equal norm `radius`, restricted to the coordinates in
/// `support`.
fn balanced_offsets<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    dim: usize,
    support: &[bool],
    radius: f64,
) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; dim]; n];
    let usable = support.iter().filter(|s| **s).count();
    if radius == 0.0 || usable == 0 {
        return out;
    }
    let unit = |rng: &mut R| -> Vec<f64> {
        loop {
            let mut v = gaussian_vector(rng, dim, 1.0);
            for (vj, s) in v.iter_mut().zip(support) {
                if !s {
                    *vj = 0.0;
                }
            }
            let nv = linalg::norm(&v);
            if nv > 1e-8 {
                return linalg::scale(1.0 / nv, &v);
            }
        }
    };
    // Odd counts end with a 3-way star (needs two free directions).
    let star = n % 2 == 1 && usable >= 2;
    let pairs_end = if star { n - 3 } else { n - n % 2 };
    let mut i = 0;
    while i < pairs_end {
        let v = unit(rng);
        out[i] = linalg::scale(radius, &v);
        out[i + 1] = linalg::scale(-radius, &v);
        i += 2;
    }
    if star {
        let a = unit(rng);
        let mut b = unit(rng);
        // Gram-Schmidt against `a`.
        loop {
            let p = linalg::dot(&a, &b);
            let mut c = b.clone();
            linalg::axpy(-p, &a, &mut c);
            let nc = linalg::norm(&c);
            if nc > 1e-6 {
                b = linalg::scale(1.0 / nc, &c);
                break;
            }
            b = unit(rng);
        }
        for k in 0..3 {
            let ang = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
            let mut v = linalg::scale(radius * ang.cos(), &a);
            linalg::axpy(radius * ang.sin(), &b, &mut v);
            out[pairs_end + k] = v;
        }
    }
    out
}

fn curvature_scales(n: usize, delta2: f64) -> Vec<f64> {
    let eps = delta2.sqrt();
    (0..n)
        .map(|i| {
            if n % 2 == 1 && i == n - 1 {
                1.0
            } else if i % 2 == 0 {
                1.0 + eps
            } else {
                1.0 - eps
            }
        })
        .collect()
}

fn build_separable(family: &ProblemFamily, n: usize, seed: u64) -> Result<Problem> {
    let d = family.dim;
    let mut rng = StreamKey::new(seed, Purpose::ProblemBuild, 0, 0).rng();
    let (h, ripple) = curvature_spectrum(family);
    let anchor = gaussian_vector(&mut rng, d, family.optimum_scale);
    let support: Vec<bool> = h.iter().map(|v| *v > 0.0).collect();
    let offsets = balanced_offsets(&mut rng, n, d, &support, family.delta1.sqrt());
    let scales = curvature_scales(n, family.delta2);

    let shards = (0..n)
        .map(|i| {
            let curvature: Vec<f64> = h.iter().map(|hj| scales[i] * hj).collect();
            // s_i h_j (x*_j - c_ij) = u_ij
            let center: Vec<f64> = (0..d)
                .map(|j| {
                    if curvature[j] > 0.0 {
                        anchor[j] - offsets[i][j] / curvature[j]
                    } else {
                        anchor[j]
                    }
                })
                .collect();
            WorkerShard {
                id: i + 1,
                dim: d,
                noise: family.noise,
                sample_count: family.samples_per_worker,
                objective: LocalObjective::Separable {
                    curvature,
                    center,
                    anchor: anchor.clone(),
                    ripple,
                },
            }
        })
        .collect();

    let mut problem = Problem {
        family: family.clone(),
        shards,
        optimum: None,
        optimal_value: None,
    };
    // The offsets balance out, so the anchor is the global minimizer.
    problem.optimal_value = Some(problem.exact_loss(&anchor)?);
    problem.optimum = Some(anchor);
    Ok(problem)
}

fn build_logistic(family: &ProblemFamily, n: usize, seed: u64) -> Result<Problem> {
    let d = family.dim;
    let m = family.samples_per_worker;
    let mut rng = StreamKey::new(seed, Purpose::ProblemBuild, 0, 0).rng();
    let truth = gaussian_vector(&mut rng, d, 1.0);
    let support = vec![true; d];
    let shifts = balanced_offsets(&mut rng, n, d, &support, family.delta1.sqrt());

    let mut raw: Vec<(Vec<Vec<f64>>, Vec<f64>)> = Vec::with_capacity(n);
    for shift in &shifts {
        let mut feats = Vec::with_capacity(m);
        let mut labels = Vec::with_capacity(m);
        for _ in 0..m {
            let mut a = gaussian_vector(&mut rng, d, 1.0);
            linalg::axpy(1.0, shift, &mut a);
            let margin = linalg::dot(&truth, &a) + 0.5 * crate::rng::standard_normal(&mut rng);
            labels.push(if margin >= 0.0 { 1.0 } else { -1.0 });
            feats.push(a);
        }
        raw.push((feats, labels));
    }
    // Scale features so that ||a||^2 <= 4 (L - mu), which bounds the Hessian by L.
    let max_sq = raw
        .iter()
        .flat_map(|(f, _)| f.iter().map(|a| linalg::norm_sq(a)))
        .fold(0.0_f64, f64::max);
    let budget = 4.0 * (family.smoothness - family.strong_convexity);
    let factor = if max_sq > 0.0 && budget > 0.0 {
        (budget / max_sq).sqrt()
    } else {
        0.0
    };
    let shards = raw
        .into_iter()
        .enumerate()
        .map(|(i, (feats, labels))| {
            let feats = feats.into_iter().map(|a| linalg::scale(factor, &a)).collect();
            WorkerShard::logistic(i + 1, feats, labels, family.strong_convexity, family.noise)
        })
        .collect::<Result<Vec<_>>>()?;
    Problem::from_shards(family.clone(), shards)
}

/// `max_i ||grad f_i(x) - grad f(x)||^2` over the given shards, with `f`
/// their average.
pub fn heterogeneity_at(shards: &[WorkerShard], x: &[f64]) -> Result<(f64, f64)> {
    let grads = shards
        .iter()
        .map(|s| s.gradient(x))
        .collect::<Result<Vec<_>>>()?;
    let avg = linalg::mean(&grads)?;
    let worst = grads
        .iter()
        .map(|g| linalg::dist_sq(g, &avg))
        .fold(0.0_f64, f64::max);
    Ok((worst, linalg::norm_sq(&avg)))
}

/// Fits the envelope `||grad f_i - grad f||^2 <= delta1 + delta2 ||grad f||^2`
/// over audit points: least-squares slope (clamped at 0), then the smallest
/// intercept that puts every point under the line.
pub fn audit_heterogeneity(shards: &[WorkerShard], points: &[ParamVector]) -> Result<(f64, f64)> {
    if points.len() < 10 {
        return Err(Error::invalid("points", "at least 10 audit points are required"));
    }
    let obs = points
        .iter()
        .map(|p| heterogeneity_at(shards, p))
        .collect::<Result<Vec<_>>>()?;
    let k = obs.len() as f64;
    let mu = obs.iter().map(|(_, u)| u).sum::<f64>() / k;
    let my = obs.iter().map(|(y, _)| y).sum::<f64>() / k;
    let var = obs.iter().map(|(_, u)| (u - mu) * (u - mu)).sum::<f64>();
    let cov = obs.iter().map(|(y, u)| (u - mu) * (y - my)).sum::<f64>();
    let slope = if var > 1e-300 { (cov / var).max(0.0) } else { 0.0 };
    let intercept = obs
        .iter()
        .map(|(y, u)| y - slope * u)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    Ok((intercept, slope))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(d: usize, l: f64, mu: f64, sigma: f64) -> ProblemFamily {
        ProblemFamily::quadratic(d, l, mu, sigma)
    }

    #[test]
    fn homogeneous_quadratic_has_identical_shards() {
        let p = Problem::build(&quad(2, 1.0, 1.0, 0.0), 3, 7).unwrap();
        let s = p.shards();
        assert_eq!(s[0].objective, s[1].objective);
        assert_eq!(s[1].objective, s[2].objective);
        let xstar = p.optimum().unwrap().to_vec();
        assert!(p.exact_gradient(&xstar).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn build_is_deterministic() {
        let fam = quad(10, 10.0, 1.0, 0.5).with_heterogeneity(4.0, 0.01);
        let a = Problem::build(&fam, 5, 99).unwrap();
        let b = Problem::build(&fam, 5, 99).unwrap();
        assert_eq!(a.shards(), b.shards());
        let c = Problem::build(&fam, 5, 100).unwrap();
        assert_ne!(a.shards(), c.shards());
    }

    #[test]
    fn spectrum_spans_mu_to_l() {
        let p = Problem::build(&quad(6, 10.0, 1.0, 0.0), 2, 1).unwrap();
        let h = p.average_curvature().unwrap();
        assert_eq!(h[0], 1.0);
        assert_eq!(h[5], 10.0);
        assert!(h.iter().all(|v| (1.0..=10.0).contains(v)));
    }

    #[test]
    fn rejects_mu_above_l() {
        assert!(matches!(
            Problem::build(&quad(3, 1.0, 2.0, 0.0), 3, 0),
            Err(Error::InvalidParameter { name: "strong_convexity", .. })
        ));
    }

    #[test]
    fn rejects_delta2_beyond_guarantee() {
        let fam = quad(3, 1.0, 0.5, 0.0).with_heterogeneity(0.0, 1.0 / 12.0);
        assert!(matches!(
            Problem::build(&fam, 3, 0),
            Err(Error::HeterogeneityBeyondGuarantee { .. })
        ));
    }

    #[test]
    fn rejects_single_worker() {
        assert!(Problem::build(&quad(3, 1.0, 0.5, 0.0), 1, 0).is_err());
    }

    #[test]
    fn delta1_target_met_at_optimum() {
        for n in [2usize, 3, 5, 8] {
            let fam = quad(10, 10.0, 1.0, 0.0).with_heterogeneity(4.0, 0.0);
            let p = Problem::build(&fam, n, 3).unwrap();
            let xstar = p.optimum().unwrap().to_vec();
            let (d1, gnorm) = heterogeneity_at(p.shards(), &xstar).unwrap();
            assert!((3.6..=4.4).contains(&d1), "n={n}: {d1}");
            assert!(gnorm < 1e-20, "global gradient at optimum: {gnorm}");
        }
    }

    #[test]
    fn zero_noise_gradient_is_exact() {
        let p = Problem::build(&quad(4, 5.0, 1.0, 0.0), 3, 11).unwrap();
        let s = &p.shards()[1];
        let x = vec![0.3, -1.0, 2.0, 0.0];
        let key = StreamKey::new(1, Purpose::GradientNoise, 1, 0);
        assert_eq!(s.honest_gradient(&x, key).unwrap(), s.gradient(&x).unwrap());
        if let LocalObjective::Separable {
            curvature, center, ..
        } = &s.objective
        {
            for j in 0..4 {
                assert_eq!(s.gradient(&x).unwrap()[j], curvature[j] * (x[j] - center[j]));
            }
        }
    }

    #[test]
    fn honest_gradient_deterministic_per_key() {
        let p = Problem::build(&quad(5, 5.0, 1.0, 1.0), 3, 11).unwrap();
        let s = &p.shards()[2];
        let x = vec![0.1; 5];
        let key = StreamKey::new(4, Purpose::GradientNoise, 3, 12);
        assert_eq!(
            s.honest_gradient(&x, key).unwrap(),
            s.honest_gradient(&x, key).unwrap()
        );
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = Problem::build(&quad(3, 1.0, 0.5, 0.0), 2, 0).unwrap();
        let key = StreamKey::new(0, Purpose::GradientNoise, 0, 0);
        assert!(p.shards()[0].honest_gradient(&[1.0], key).is_err());
        assert!(p.exact_loss(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn quadratic_suboptimality_matches_average_hessian_form() {
        let fam = quad(6, 8.0, 0.5, 0.0).with_heterogeneity(1.0, 0.04);
        let p = Problem::build(&fam, 5, 21).unwrap();
        let xstar = p.optimum().unwrap().to_vec();
        let h = p.average_curvature().unwrap();
        let x: Vec<f64> = xstar.iter().enumerate().map(|(j, v)| v + 0.3 * j as f64 - 0.7).collect();
        let expected: f64 = (0..6).map(|j| 0.5 * h[j] * (x[j] - xstar[j]).powi(2)).sum();
        let got = p.suboptimality(&x).unwrap().unwrap();
        assert!((got - expected).abs() <= 1e-10 * expected.max(1.0), "{got} vs {expected}");
    }

    #[test]
    fn homogeneous_audit_is_zero() {
        let p = Problem::build(&quad(4, 3.0, 1.0, 0.2), 4, 5).unwrap();
        let pts: Vec<ParamVector> = (0..10).map(|k| vec![k as f64 * 0.1 - 0.3; 4]).collect();
        let (d1, d2) = audit_heterogeneity(p.shards(), &pts).unwrap();
        assert!(d1.abs() <= 1e-12 && d2.abs() <= 1e-12);
    }

    #[test]
    fn translated_quadratics_audit_matches_closed_form() {
        let fam = quad(5, 4.0, 1.0, 0.0).with_heterogeneity(2.5, 0.0);
        let p = Problem::build(&fam, 4, 8).unwrap();
        // Closed form: grad f_i - grad f = A (c - c_i), constant in x.
        let d = 5;
        let mut cbar = vec![0.0; d];
        let mut exact: f64 = 0.0;
        let centers: Vec<Vec<f64>> = p
            .shards()
            .iter()
            .map(|s| match &s.objective {
                LocalObjective::Separable { center, .. } => center.clone(),
                _ => unreachable!(),
            })
            .collect();
        for c in &centers {
            linalg::axpy(0.25, c, &mut cbar);
        }
        let h = p.average_curvature().unwrap();
        for c in &centers {
            let v: f64 = (0..d).map(|j| (h[j] * (cbar[j] - c[j])).powi(2)).sum();
            exact = exact.max(v);
        }
        let pts: Vec<ParamVector> = (0..12).map(|k| vec![(k as f64).sin() * 2.0; d]).collect();
        let (d1, d2) = audit_heterogeneity(p.shards(), &pts).unwrap();
        assert!(d2 < 1e-10, "{d2}");
        assert!((d1 - exact).abs() < 1e-9 * exact.max(1.0), "{d1} vs {exact}");
    }

    #[test]
    fn scaled_hessians_same_center_vanish_at_optimum() {
        let fam = quad(4, 4.0, 1.0, 0.0).with_heterogeneity(0.0, 0.05);
        let p = Problem::build(&fam, 4, 2).unwrap();
        let xstar = p.optimum().unwrap().to_vec();
        let pts = vec![xstar; 10];
        let (d1, d2) = audit_heterogeneity(p.shards(), &pts).unwrap();
        assert!(d1 < 1e-20 && d2 == 0.0);
        // Away from the optimum the fitted slope recovers delta2.
        let pts: Vec<ParamVector> = (0..10).map(|k| vec![k as f64 - 4.5; 4]).collect();
        let (_, d2) = audit_heterogeneity(p.shards(), &pts).unwrap();
        assert!((d2 - 0.05).abs() < 1e-9, "{d2}");
    }

    #[test]
    fn audit_needs_ten_points() {
        let p = Problem::build(&quad(2, 1.0, 1.0, 0.0), 2, 0).unwrap();
        assert!(audit_heterogeneity(p.shards(), &vec![vec![0.0; 2]; 9]).is_err());
    }

    #[test]
    fn flipped_logistic_negates_labels() {
        let s = WorkerShard::logistic(
            1,
            vec![vec![1.0, 0.5], vec![-0.3, 2.0]],
            vec![1.0, -1.0],
            0.1,
            0.0,
        )
        .unwrap();
        let t = WorkerShard::logistic(
            1,
            vec![vec![1.0, 0.5], vec![-0.3, 2.0]],
            vec![-1.0, 1.0],
            0.1,
            0.0,
        )
        .unwrap();
        let x = [0.4, -0.2];
        assert_eq!(s.flipped_loss(&x).unwrap(), t.loss(&x).unwrap());
        assert_eq!(s.flipped_gradient(&x).unwrap(), t.gradient(&x).unwrap());
    }

    #[test]
    fn logistic_optimum_located_when_strongly_convex() {
        let mut fam = quad(3, 2.0, 0.1, 0.0);
        fam.kind = ProblemKind::Logistic;
        fam.samples_per_worker = 20;
        let p = Problem::build(&fam, 3, 4).unwrap();
        let xstar = p.optimum().expect("optimum").to_vec();
        assert!(linalg::norm(&p.exact_gradient(&xstar).unwrap()) < 1e-9);
        assert!(p.suboptimality(&[0.0; 3]).unwrap().unwrap() > 0.0);
    }
}
