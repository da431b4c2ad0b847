//! The federation loop.
//!
//! Each aggregation event broadcasts `x`, collects honest gradients from the
//! active workers (in parallel, collected in worker order), lets Byzantine
//! workers replace theirs after seeing the full honest snapshot, updates the
//! preconditioner from the server's own gradient, and applies the configured
//! aggregator. With local rounds (`local_steps >= 2`) workers take plain SGD
//! steps between aggregations and report the point they reach.

pub mod participation;
pub mod precond;

pub use participation::sample_participation;
pub use precond::{update_preconditioner, PreconditionerKind, PreconditionerState};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{
    autobant_solve, autobant_step, bant_step, bant_weights, baseline_coordinate_median,
    baseline_mean, centered_clip, contribution_coeffs, scaled_step, simbant_weights, solve_simplex,
    zeno_select, MirrorOptions, SimilarityKind, TrustWeights,
};
use crate::attacks::{apply_attack, AttackKind, AttackSpec, ByzantineSchedule, SchedulePolicy};
use crate::error::{Error, Result};
use crate::linalg::{self, ParamVector};
use crate::problems::{Problem, ProblemFamily};
use crate::rng::{Purpose, StreamKey};
use crate::trial::TrialSet;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;
/// Number of trailing aggregation events averaged in the summary.
pub const TAIL_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AggregatorSpec {
    Mean,
    Median,
    Bant {
        momentum: f64,
    },
    #[serde(rename = "autobant")]
    AutoBant {
        mirror: MirrorOptions,
    },
    #[serde(rename = "simbant")]
    SimBant {
        momentum: f64,
        similarity: SimilarityKind,
        temperature: f64,
    },
    Zeno {
        rho: f64,
        trim: usize,
    },
    CenteredClip {
        radius: f64,
        iters: usize,
    },
}

impl AggregatorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AggregatorSpec::Mean => "mean",
            AggregatorSpec::Median => "median",
            AggregatorSpec::Bant { .. } => "bant",
            AggregatorSpec::AutoBant { .. } => "autobant",
            AggregatorSpec::SimBant { .. } => "simbant",
            AggregatorSpec::Zeno { .. } => "zeno",
            AggregatorSpec::CenteredClip { .. } => "centered-clip",
        }
    }

    pub fn bant() -> Self {
        AggregatorSpec::Bant { momentum: 0.5 }
    }

    pub fn autobant() -> Self {
        AggregatorSpec::AutoBant {
            mirror: MirrorOptions::default(),
        }
    }

    pub fn simbant(similarity: SimilarityKind) -> Self {
        AggregatorSpec::SimBant {
            momentum: 0.5,
            similarity,
            temperature: 0.05,
        }
    }

    fn uses_trust_scores(&self) -> bool {
        matches!(
            self,
            AggregatorSpec::Bant { .. } | AggregatorSpec::AutoBant { .. } | AggregatorSpec::SimBant { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub spec: Option<AttackSpec>,
    /// Byzantine share of the workers, in percent.
    pub fraction: f64,
    pub policy: SchedulePolicy,
}

impl AttackConfig {
    pub fn none() -> Self {
        Self {
            spec: None,
            fraction: 0.0,
            policy: SchedulePolicy::Static,
        }
    }

    pub fn new(spec: AttackSpec, fraction: f64) -> Self {
        Self {
            spec: Some(spec),
            fraction,
            policy: SchedulePolicy::Static,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreconditionerConfig {
    pub kind: PreconditionerKind,
    pub beta: f64,
    pub floor: f64,
}

impl Default for PreconditionerConfig {
    fn default() -> Self {
        Self {
            kind: PreconditionerKind::Identity,
            beta: 0.99,
            floor: 1e-8,
        }
    }
}

impl PreconditionerConfig {
    pub fn of_kind(kind: PreconditionerKind) -> Self {
        Self {
            kind,
            beta: kind.default_beta(),
            floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ProblemFamily,
    pub workers: usize,
    pub attack: AttackConfig,
    pub aggregator: AggregatorSpec,
    /// Step size `gamma`.
    pub step: f64,
    pub trial_size: usize,
    pub rounds: u64,
    /// Local round length `l`; 1 disables local rounds.
    pub local_steps: u64,
    pub participation: f64,
    pub preconditioner: PreconditionerConfig,
    pub seed: u64,
    /// Worker threads for gradient evaluation; 0 uses the global pool.
    pub threads: usize,
    pub record_wall_time: bool,
    pub verbose: bool,
}

impl ExperimentConfig {
    /// A configuration with default engine settings and `gamma = 1/(13 L)`.
    pub fn new(problem: ProblemFamily, workers: usize, aggregator: AggregatorSpec) -> Self {
        let step = 1.0 / (13.0 * problem.smoothness);
        Self {
            problem,
            workers,
            attack: AttackConfig::none(),
            aggregator,
            step,
            trial_size: 500,
            rounds: 1000,
            local_steps: 1,
            participation: 1.0,
            preconditioner: PreconditionerConfig::default(),
            seed: 0,
            threads: 0,
            record_wall_time: false,
            verbose: false,
        }
    }

    /// Checks the configuration; returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.problem.validate()?;
        if self.workers < 2 {
            return Err(Error::invalid("workers", "at least 2 workers are required"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid("step", "must be positive and finite"));
        }
        if self.trial_size == 0 {
            return Err(Error::invalid("trial_size", "must be at least 1"));
        }
        if self.local_steps == 0 {
            return Err(Error::invalid("local_steps", "must be at least 1"));
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(Error::invalid("participation", "must lie in (0, 1]"));
        }
        if self.local_steps > 1 && self.preconditioner.kind != PreconditionerKind::Identity {
            return Err(Error::invalid(
                "local_steps",
                "local rounds cannot be combined with a preconditioner",
            ));
        }
        PreconditionerState::new(
            self.preconditioner.kind,
            1,
            self.preconditioner.beta,
            self.preconditioner.floor,
        )?;
        match (&self.attack.spec, self.attack.fraction > 0.0) {
            (Some(spec), _) => spec.validate()?,
            (None, true) => {
                return Err(Error::invalid("fraction", "a Byzantine fraction needs an attack kind"))
            }
            (None, false) => {}
        }
        ByzantineSchedule::new(self.workers, self.attack.fraction, self.attack.policy, self.seed)?;
        let min_active = ((self.participation * self.workers as f64).ceil() as usize).clamp(1, self.workers);
        match self.aggregator {
            AggregatorSpec::Bant { momentum } => check_momentum(momentum)?,
            AggregatorSpec::AutoBant { mirror } => mirror.validate()?,
            AggregatorSpec::SimBant {
                momentum,
                temperature,
                ..
            } => {
                check_momentum(momentum)?;
                if !(temperature > 0.0) {
                    return Err(Error::invalid("temperature", "must be positive"));
                }
            }
            AggregatorSpec::Zeno { rho, trim } => {
                if !(rho >= 0.0) {
                    return Err(Error::invalid("rho", "must be nonnegative"));
                }
                if trim >= min_active {
                    return Err(Error::invalid(
                        "trim",
                        format!("b = {trim} must be below the active worker count ({min_active})"),
                    ));
                }
            }
            AggregatorSpec::CenteredClip { radius, iters } => {
                if !(radius > 0.0) {
                    return Err(Error::invalid("clip_radius", "must be positive"));
                }
                if iters == 0 {
                    return Err(Error::invalid("clip_iters", "must be at least 1"));
                }
            }
            AggregatorSpec::Mean | AggregatorSpec::Median => {}
        }

        let mut warnings = Vec::new();
        let l = self.problem.smoothness;
        let scaled = self.preconditioner.kind != PreconditionerKind::Identity;
        if self.aggregator.uses_trust_scores() && !scaled && self.step > 1.0 / (13.0 * l) {
            warnings.push(format!(
                "step {} exceeds 1/(13 L) = {:.6e}; convergence guarantees assume the smaller step",
                self.step,
                1.0 / (13.0 * l)
            ));
        }
        if self.aggregator.uses_trust_scores() && scaled {
            let bound = self.preconditioner.floor / (12.0 * l);
            if self.step > bound {
                warnings.push(format!(
                    "step {} exceeds alpha/(12 L) = {:.6e} with alpha the preconditioner floor",
                    self.step, bound
                ));
            }
        }
        if self.local_steps > 1 {
            let bound = 1.0 / (25.0 * (self.local_steps - 1) as f64 * l);
            if self.step > bound {
                warnings.push(format!(
                    "step {} exceeds 1/(25 (l-1) L) = {:.6e} for local rounds",
                    self.step, bound
                ));
            }
        }
        Ok(warnings)
    }
}

fn check_momentum(beta: f64) -> Result<()> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("momentum", format!("{beta} is outside (0, 1]")))
    }
}

/// Metrics for one aggregation event, measured at the broadcast point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    /// Iteration index at which aggregation happened.
    pub round: u64,
    pub trial_loss: f64,
    pub global_loss: f64,
    pub grad_norm_sq: f64,
    pub suboptimality: Option<f64>,
    /// Weights over all `n` workers; inactive workers get 0.
    pub weights: Vec<f64>,
    pub byzantine: Vec<bool>,
    pub wall_micros: u64,
}

/// One worker's local loss after a local step (verbose runs only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTrace {
    pub iteration: u64,
    pub worker: usize,
    pub local_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub trial_loss: f64,
    pub global_loss: f64,
    pub grad_norm_sq: f64,
    pub suboptimality: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RoundState {
    /// Next iteration index.
    pub t: u64,
    pub x: ParamVector,
    pub weights: TrustWeights,
    pub precond: PreconditionerState,
    pub active: Vec<usize>,
    pub byzantine: Vec<bool>,
    /// The server's most recent honest gradient (or pseudo-gradient).
    pub server_grad: ParamVector,
    pub clip_center: ParamVector,
    pub trace: Vec<LocalTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub rounds: u64,
    pub events: usize,
    pub initial: PointMetrics,
    #[serde(rename = "final")]
    pub final_metrics: PointMetrics,
    /// Mean of `||grad f(x^t)||^2` over all events.
    pub avg_grad_norm_sq: f64,
    /// Mean over the last `tail_window` events.
    pub tail_avg_grad_norm_sq: f64,
    pub tail_window: usize,
    pub mean_weights: Vec<f64>,
    pub wall_seconds: f64,
    pub warnings: Vec<String>,
    pub build: String,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub reports: Vec<RoundReport>,
    pub summary: RunSummary,
    pub trace: Vec<LocalTrace>,
}

pub fn build_version() -> &'static str {
    option_env!("BYZANT_BUILD").unwrap_or(env!("CARGO_PKG_VERSION"))
}

pub struct Simulation {
    cfg: ExperimentConfig,
    problem: Problem,
    trial: TrialSet,
    schedule: ByzantineSchedule,
    state: RoundState,
    warnings: Vec<String>,
}

impl Simulation {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let warnings = cfg.validate()?;
        let problem = Problem::build(&cfg.problem, cfg.workers, cfg.seed)?;
        let trial = TrialSet::draw(problem.server_shard(), cfg.trial_size, cfg.seed)?;
        let schedule = ByzantineSchedule::new(cfg.workers, cfg.attack.fraction, cfg.attack.policy, cfg.seed)?;
        let d = problem.dim();
        let precond = PreconditionerState::new(
            cfg.preconditioner.kind,
            d,
            cfg.preconditioner.beta,
            cfg.preconditioner.floor,
        )?;
        let state = RoundState {
            t: 0,
            x: vec![0.0; d],
            weights: TrustWeights::uniform_over(cfg.workers),
            precond,
            active: (0..cfg.workers).collect(),
            byzantine: vec![false; cfg.workers],
            server_grad: vec![0.0; d],
            clip_center: vec![0.0; d],
            trace: Vec::new(),
        };
        Ok(Self {
            cfg: cfg.clone(),
            problem,
            trial,
            schedule,
            state,
            warnings,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn trial(&self) -> &TrialSet {
        &self.trial
    }

    pub fn state(&self) -> &RoundState {
        &self.state
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn is_finished(&self) -> bool {
        self.state.t >= self.cfg.rounds
    }

    pub fn metrics_at(&self, x: &[f64]) -> Result<PointMetrics> {
        let g = self.problem.exact_gradient(x)?;
        Ok(PointMetrics {
            trial_loss: self.trial.loss(x)?,
            global_loss: self.problem.exact_loss(x)?,
            grad_norm_sq: linalg::norm_sq(&g),
            suboptimality: self.problem.suboptimality(x)?,
        })
    }

    /// Runs the next aggregation event.
    pub fn step(&mut self) -> Result<RoundReport> {
        if self.cfg.local_steps <= 1 || self.state.t.is_multiple_of(self.cfg.local_steps) {
            self.run_round()
        } else {
            self.run_local_round()
        }
    }

    fn round_sets(&self, t: u64) -> Result<(Vec<usize>, Vec<bool>)> {
        let active = if self.cfg.participation < 1.0 {
            sample_participation(self.cfg.workers, self.cfg.participation, self.cfg.seed, t)?
        } else {
            (0..self.cfg.workers).collect()
        };
        Ok((active, self.schedule.at(t)))
    }

    fn honest_grads(&self, active: &[usize], points: &[&[f64]], t: u64) -> Result<Vec<ParamVector>> {
        let shards = self.problem.shards();
        let seed = self.cfg.seed;
        active
            .par_iter()
            .zip(points.par_iter())
            .map(|(&w, p)| shards[w].honest_gradient(p, StreamKey::new(seed, Purpose::GradientNoise, w, t)))
            .collect()
    }

    /// Replaces Byzantine workers' vectors after the honest snapshot is complete.
    fn corrupt(
        &self,
        active: &[usize],
        byzantine: &[bool],
        own: &[ParamVector],
        x: &[f64],
        t: u64,
    ) -> Result<Vec<ParamVector>> {
        let spec = match &self.cfg.attack.spec {
            Some(s) if active.iter().any(|w| byzantine[*w]) => s,
            _ => return Ok(own.to_vec()),
        };
        let honest: Vec<ParamVector> = active
            .iter()
            .zip(own)
            .filter(|(w, _)| !byzantine[**w])
            .map(|(_, g)| g.clone())
            .collect();
        let shards = self.problem.shards();
        active
            .iter()
            .zip(own)
            .map(|(&w, g)| {
                if !byzantine[w] {
                    return Ok(g.clone());
                }
                let purpose = if spec.kind == AttackKind::LabelFlip {
                    Purpose::LabelFlipNoise
                } else {
                    Purpose::Attack
                };
                apply_attack(spec, &honest, g, &shards[w], x, StreamKey::new(self.cfg.seed, purpose, w, t))
            })
            .collect()
    }

    /// One aggregation over gradient-form candidates `x - gamma P_hat^{-1} g_i`.
    fn aggregate(&mut self, x: &[f64], grads: &[ParamVector], active: &[usize]) -> Result<(ParamVector, TrustWeights)> {
        let gamma = self.cfg.step;
        let precond = self.state.precond.diagonal().map(|p| p.to_vec());
        let pd = precond.as_deref();
        let step_with = |dir: &[f64]| -> ParamVector {
            let s = scaled_step(gamma, dir, pd);
            x.iter().zip(&s).map(|(a, b)| a - b).collect()
        };
        let prev = self.state.weights.restrict_to(active);
        match self.cfg.aggregator {
            AggregatorSpec::Mean => Ok((step_with(&baseline_mean(grads)?), TrustWeights::uniform(active.to_vec()))),
            AggregatorSpec::Median => Ok((
                step_with(&baseline_coordinate_median(grads)?),
                TrustWeights::uniform(active.to_vec()),
            )),
            AggregatorSpec::Bant { momentum } => {
                let coeffs = contribution_coeffs(&self.trial, x, grads, gamma, pd)?;
                let w = bant_weights(&prev, &coeffs, momentum)?;
                Ok((bant_step(x, grads, &w, &coeffs, gamma, pd)?, w))
            }
            AggregatorSpec::AutoBant { mirror } => {
                let sol = autobant_solve(&self.trial, x, grads, gamma, mirror, pd)?;
                let w = TrustWeights::new(sol.weights, active.to_vec())?;
                Ok((autobant_step(x, grads, &w, gamma, pd)?, w))
            }
            AggregatorSpec::SimBant {
                momentum,
                similarity,
                temperature,
            } => {
                let outputs = grads
                    .iter()
                    .map(|g| {
                        let y = step_with(g);
                        let z = self.trial.probe_readouts(x, &y, gamma)?;
                        Ok(match similarity {
                            SimilarityKind::AbsDiff => z.iter().map(|v| sigmoid(v / temperature)).collect(),
                            SimilarityKind::Cosine => z,
                        })
                    })
                    .collect::<Result<Vec<Vec<f64>>>>()?;
                // Worker 1 is always active and first.
                let server = outputs[0].clone();
                let w = simbant_weights(&prev, &outputs, &server, similarity, temperature, momentum)?;
                Ok((autobant_step(x, grads, &w, gamma, pd)?, w))
            }
            AggregatorSpec::Zeno { rho, trim } => {
                let keep = zeno_select(&self.trial, x, grads, gamma, rho, trim)?;
                let kept: Vec<ParamVector> = keep.iter().map(|k| grads[*k].clone()).collect();
                let share = 1.0 / keep.len() as f64;
                let mut weights = vec![0.0; active.len()];
                for k in &keep {
                    weights[*k] = share;
                }
                Ok((step_with(&linalg::mean(&kept)?), TrustWeights::new(weights, active.to_vec())?))
            }
            AggregatorSpec::CenteredClip { radius, iters } => {
                let v = centered_clip(grads, &self.state.clip_center, radius, iters)?;
                self.state.clip_center = v.clone();
                Ok((step_with(&v), TrustWeights::uniform(active.to_vec())))
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish_event(
        &mut self,
        round: u64,
        metrics: PointMetrics,
        next_x: ParamVector,
        weights: TrustWeights,
        active: Vec<usize>,
        byzantine: Vec<bool>,
        started: Option<Instant>,
    ) -> RoundReport {
        let report = RoundReport {
            round,
            trial_loss: metrics.trial_loss,
            global_loss: metrics.global_loss,
            grad_norm_sq: metrics.grad_norm_sq,
            suboptimality: metrics.suboptimality,
            weights: weights.dense(self.cfg.workers),
            byzantine: byzantine.clone(),
            wall_micros: started.map_or(0, |s| s.elapsed().as_micros() as u64),
        };
        self.state.x = next_x;
        self.state.weights = weights;
        self.state.active = active;
        self.state.byzantine = byzantine;
        self.state.t = round + 1;
        report
    }

    /// One iteration with aggregation at the current index.
    pub fn run_round(&mut self) -> Result<RoundReport> {
        let started = self.cfg.record_wall_time.then(Instant::now);
        let t = self.state.t;
        let x = self.state.x.clone();
        let metrics = self.metrics_at(&x)?;
        let (active, byzantine) = self.round_sets(t)?;
        let points: Vec<&[f64]> = vec![&x; active.len()];
        let own = self.honest_grads(&active, &points, t)?;
        let grads = self.corrupt(&active, &byzantine, &own, &x, t)?;
        self.state.server_grad = own[0].clone();
        if self.state.precond.kind != PreconditionerKind::Identity {
            self.state.precond.update(&own[0])?;
        }
        let (next, weights) = self.aggregate(&x, &grads, &active)?;
        Ok(self.finish_event(t, metrics, next, weights, active, byzantine, started))
    }

    /// Local SGD steps up to the next aggregation index, then aggregation
    /// over the reported points.
    pub fn run_local_round(&mut self) -> Result<RoundReport> {
        let l = self.cfg.local_steps;
        if l < 2 {
            return Err(Error::invalid("local_steps", "local rounds need l >= 2"));
        }
        let started = self.cfg.record_wall_time.then(Instant::now);
        let t0 = self.state.t;
        let last = self.cfg.rounds.saturating_sub(1);
        let agg = if t0.is_multiple_of(l) { t0 } else { ((t0 / l + 1) * l).min(last) };
        let gamma = self.cfg.step;
        let x = self.state.x.clone();
        let metrics = self.metrics_at(&x)?;
        let (active, byzantine) = self.round_sets(agg)?;
        let shards = self.problem.shards();

        let mut local: Vec<ParamVector> = vec![x.clone(); active.len()];
        for s in t0..=agg {
            let points: Vec<&[f64]> = local.iter().map(|p| p.as_slice()).collect();
            let grads = self.honest_grads(&active, &points, s)?;
            for (p, g) in local.iter_mut().zip(&grads) {
                linalg::axpy(-gamma, g, p);
            }
            if self.cfg.verbose {
                for (w, p) in active.iter().zip(&local) {
                    self.state.trace.push(LocalTrace {
                        iteration: s,
                        worker: w + 1,
                        local_loss: shards[*w].loss(p)?,
                    });
                }
            }
        }

        // Reported points as pseudo-gradients (x - p_i) / gamma, so attacks
        // see the same kind of vector honest workers send.
        let pseudo: Vec<ParamVector> = local
            .iter()
            .map(|p| x.iter().zip(p).map(|(a, b)| (a - b) / gamma).collect())
            .collect();
        let sent = self.corrupt(&active, &byzantine, &pseudo, &x, agg)?;
        self.state.server_grad = pseudo[0].clone();

        let (next, weights) = match self.cfg.aggregator {
            AggregatorSpec::AutoBant { mirror } => {
                let points: Vec<ParamVector> = active
                    .iter()
                    .zip(&sent)
                    .zip(&local)
                    .map(|((w, g), p)| {
                        if byzantine[*w] {
                            x.iter().zip(g).map(|(a, gi)| a - gamma * gi).collect()
                        } else {
                            p.clone()
                        }
                    })
                    .collect();
                let dirs: Vec<ParamVector> = points.iter().map(|p| linalg::sub(p, &x)).collect();
                let sol = solve_simplex(&self.trial, &x, &dirs, mirror)?;
                let mut next = x.clone();
                for (d, w) in dirs.iter().zip(&sol.weights) {
                    if *w != 0.0 {
                        linalg::axpy(*w, d, &mut next);
                    }
                }
                (next, TrustWeights::new(sol.weights, active.clone())?)
            }
            _ => self.aggregate(&x, &sent, &active)?,
        };
        Ok(self.finish_event(agg, metrics, next, weights, active, byzantine, started))
    }

    /// Runs every remaining event, calling `observe` after each.
    pub fn run_with<F>(mut self, mut observe: F) -> Result<ExperimentOutput>
    where
        F: FnMut(&RoundState, &RoundReport),
    {
        let wall = Instant::now();
        let initial = self.metrics_at(&self.state.x.clone())?;
        let mut reports = Vec::new();
        while !self.is_finished() {
            let r = self.step()?;
            observe(&self.state, &r);
            reports.push(r);
        }
        let final_metrics = self.metrics_at(&self.state.x.clone())?;
        let summary = summarize(
            &self.cfg,
            &reports,
            initial,
            final_metrics,
            wall.elapsed().as_secs_f64(),
            self.warnings.clone(),
        );
        Ok(ExperimentOutput {
            reports,
            summary,
            trace: std::mem::take(&mut self.state.trace),
        })
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn summarize(
    cfg: &ExperimentConfig,
    reports: &[RoundReport],
    initial: PointMetrics,
    final_metrics: PointMetrics,
    wall_seconds: f64,
    warnings: Vec<String>,
) -> RunSummary {
    let n = cfg.workers;
    let (avg, tail, mean_weights) = if reports.is_empty() {
        (initial.grad_norm_sq, initial.grad_norm_sq, vec![1.0 / n as f64; n])
    } else {
        let k = reports.len() as f64;
        let avg = reports.iter().map(|r| r.grad_norm_sq).sum::<f64>() / k;
        let window = reports.len().min(TAIL_WINDOW);
        let tail = reports[reports.len() - window..]
            .iter()
            .map(|r| r.grad_norm_sq)
            .sum::<f64>()
            / window as f64;
        let mut mw = vec![0.0; n];
        for r in reports {
            linalg::axpy(1.0 / k, &r.weights, &mut mw);
        }
        (avg, tail, mw)
    };
    RunSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        rounds: cfg.rounds,
        events: reports.len(),
        initial,
        final_metrics,
        avg_grad_norm_sq: avg,
        tail_avg_grad_norm_sq: tail,
        tail_window: reports.len().min(TAIL_WINDOW),
        mean_weights,
        wall_seconds,
        warnings,
        build: build_version().to_string(),
        config: cfg.clone(),
    }
}

/// Runs a full experiment, calling `observe` after every aggregation event.
pub fn run_experiment_with<F>(cfg: &ExperimentConfig, observe: F) -> Result<ExperimentOutput>
where
    F: FnMut(&RoundState, &RoundReport) + Send,
{
    let sim = Simulation::new(cfg)?;
    if cfg.threads == 0 {
        return sim.run_with(observe);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))?;
    pool.install(|| sim.run_with(observe))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_experiment_with(cfg, |_, _| {})
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::AttackSpec;

    fn quad_cfg(agg: AggregatorSpec) -> ExperimentConfig {
        let fam = ProblemFamily::quadratic(5, 4.0, 1.0, 0.0);
        let mut cfg = ExperimentConfig::new(fam, 4, agg);
        cfg.rounds = 30;
        cfg.trial_size = 50;
        cfg
    }

    #[test]
    fn zero_rounds_echo_initial_point() {
        let mut cfg = quad_cfg(AggregatorSpec::Mean);
        cfg.rounds = 0;
        let out = run_experiment(&cfg).unwrap();
        assert!(out.reports.is_empty());
        assert_eq!(out.summary.initial, out.summary.final_metrics);
        assert_eq!(out.summary.avg_grad_norm_sq, out.summary.initial.grad_norm_sq);
    }

    #[test]
    fn mean_without_noise_is_gradient_descent() {
        let cfg = quad_cfg(AggregatorSpec::Mean);
        let mut sim = Simulation::new(&cfg).unwrap();
        for _ in 0..5 {
            let x = sim.state().x.clone();
            let g = sim.problem().exact_gradient(&x).unwrap();
            sim.run_round().unwrap();
            let expected: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - cfg.step * b).collect();
            for (a, b) in sim.state().x.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn weights_sum_to_one_every_round() {
        for agg in [
            AggregatorSpec::bant(),
            AggregatorSpec::autobant(),
            AggregatorSpec::simbant(SimilarityKind::AbsDiff),
            AggregatorSpec::Zeno { rho: 0.0005, trim: 1 },
        ] {
            let mut cfg = quad_cfg(agg);
            cfg.problem.noise = 0.5;
            cfg.attack = AttackConfig::new(AttackSpec::new(AttackKind::SignFlip), 50.0);
            let out = run_experiment(&cfg).unwrap();
            for r in &out.reports {
                let s: f64 = r.weights.iter().sum();
                assert!((s - 1.0).abs() < 1e-9, "{}: {s}", agg.name());
            }
        }
    }

    #[test]
    fn rejects_all_byzantine() {
        let mut cfg = quad_cfg(AggregatorSpec::Mean);
        cfg.attack = AttackConfig::new(AttackSpec::new(AttackKind::SignFlip), 100.0);
        assert!(Simulation::new(&cfg).is_err());
    }

    #[test]
    fn warns_on_large_step() {
        let mut cfg = quad_cfg(AggregatorSpec::bant());
        cfg.step = 1.0 / cfg.problem.smoothness;
        assert_eq!(cfg.validate().unwrap().len(), 1);
        cfg.step = 1.0 / (13.0 * cfg.problem.smoothness);
        assert!(cfg.validate().unwrap().is_empty());
    }

    #[test]
    fn scaled_step_bound_uses_floor() {
        let mut cfg = quad_cfg(AggregatorSpec::bant());
        cfg.preconditioner = PreconditionerConfig::of_kind(PreconditionerKind::AdamLike);
        let floor = cfg.preconditioner.floor;
        cfg.step = floor / (12.0 * cfg.problem.smoothness);
        assert!(cfg.validate().unwrap().is_empty());
        cfg.step *= 2.0;
        assert_eq!(cfg.validate().unwrap().len(), 1);
    }

    #[test]
    fn local_rounds_report_once_per_aggregation() {
        let mut cfg = quad_cfg(AggregatorSpec::autobant());
        cfg.local_steps = 5;
        cfg.rounds = 23;
        let out = run_experiment(&cfg).unwrap();
        let rounds: Vec<u64> = out.reports.iter().map(|r| r.round).collect();
        assert_eq!(rounds, vec![0, 5, 10, 15, 20, 22]);
    }
}
