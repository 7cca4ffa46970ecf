//! Noisy gradient descent and mixed public/private training.
//!
//! [`noisy_gd`] is full-batch projected gradient descent on a
//! [`RegularizedObjective`] with optional per-example clipping and isotropic
//! Gaussian noise added to the summed gradient. [`adamix_theoretical`] and
//! [`adamix_practical`] build on it: the former pretrains a reference point
//! with one pass of SGD over the public set and then runs NoisyGD toward it;
//! the latter adapts the clipping threshold and a gradient subspace to the
//! public data at every step.

use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::accountant::{
    calibrate_steps, compose_gaussian, DpPoint, GdpParam, MechanismStep, ZcdpParam,
};
use crate::error::{invalid, Error, Result};
use crate::numerics::{
    self, axpy, gaussian_sample, norm, quantile_nearest_rank, thin_svd, Matrix, RngStream,
};
use crate::problems::{project_in_place, ClipSpec, GlmProblem, ParamVector, RegularizedObjective};

/// Learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Schedule {
    /// Constant η ≤ 1/M for an M-smooth objective.
    ConstantSmooth { eta: f64, smoothness: f64 },
    /// Constant η, Lipschitz objective.
    ConstantLipschitz { eta: f64 },
    /// η_t = 2/(μ(t+1)) with weighted averaging.
    StronglyConvex { mu: f64 },
}

/// How iterates are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingKind {
    Uniform,
    /// Weights 2t/(T(T+1)).
    Weighted,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Schedule::ConstantSmooth { eta, smoothness } => {
                if !(eta > 0.0) || !(smoothness > 0.0) {
                    return Err(invalid("constant_smooth needs eta > 0 and M > 0"));
                }
                if eta > 1.0 / smoothness * (1.0 + 1e-12) {
                    return Err(invalid(format!(
                        "eta {eta} exceeds 1/M = {}",
                        1.0 / smoothness
                    )));
                }
            }
            Schedule::ConstantLipschitz { eta } => {
                if !(eta > 0.0) || !eta.is_finite() {
                    return Err(invalid("constant learning rate must be > 0"));
                }
            }
            Schedule::StronglyConvex { mu } => {
                if !(mu > 0.0) || !mu.is_finite() {
                    return Err(invalid("strongly convex schedule needs mu > 0"));
                }
            }
        }
        Ok(())
    }

    pub fn averaging(&self) -> AveragingKind {
        match self {
            Schedule::StronglyConvex { .. } => AveragingKind::Weighted,
            _ => AveragingKind::Uniform,
        }
    }
}

/// η_t for t ≥ 1.
pub fn learning_rate(schedule: &Schedule, t: usize) -> Result<f64> {
    if t == 0 {
        return Err(invalid("iterations are numbered from 1"));
    }
    Ok(match *schedule {
        Schedule::ConstantSmooth { eta, .. } | Schedule::ConstantLipschitz { eta } => eta,
        Schedule::StronglyConvex { mu } => 2.0 / (mu * (t as f64 + 1.0)),
    })
}

/// Unnormalized averaging weight of iterate t.
fn raw_weight(kind: AveragingKind, t: usize) -> f64 {
    match kind {
        AveragingKind::Uniform => 1.0,
        AveragingKind::Weighted => t as f64,
    }
}

fn raw_weight_total(kind: AveragingKind, t: usize) -> f64 {
    let t = t as f64;
    match kind {
        AveragingKind::Uniform => t,
        AveragingKind::Weighted => t * (t + 1.0) / 2.0,
    }
}

/// Averaging weights of iterates 1..=T; they sum to one.
pub fn averaging_weights(kind: AveragingKind, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(invalid("averaging needs T >= 1"));
    }
    let total = raw_weight_total(kind, steps);
    Ok((1..=steps).map(|t| raw_weight(kind, t) / total).collect())
}

/// Incremental weighted average of w_1, w_2, ...
#[derive(Debug, Clone)]
struct RunningAverage {
    kind: AveragingKind,
    sum: Vec<f64>,
    count: usize,
}

impl RunningAverage {
    fn new(kind: AveragingKind, dim: usize) -> Self {
        Self {
            kind,
            sum: vec![0.0; dim],
            count: 0,
        }
    }

    fn push(&mut self, w: &[f64]) {
        self.count += 1;
        axpy(raw_weight(self.kind, self.count), w, &mut self.sum);
    }

    fn current(&self) -> ParamVector {
        let total = raw_weight_total(self.kind, self.count.max(1));
        ParamVector(self.sum.iter().map(|v| v / total).collect())
    }
}

/// Snapshot written every `record_every` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// J(w_t).
    pub objective: f64,
    /// J(w̄_t) for the running average of w_1..w_t.
    pub averaged_objective: f64,
    pub grad_norm_median: f64,
    pub grad_norm_q90: f64,
    pub grad_norm_max: f64,
    /// Clipping threshold in force at this step (∞ when unclipped).
    pub tau: f64,
}

/// Everything an optimization run reports.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OptTrace {
    pub steps: usize,
    /// Subsampled iterates `(t, w_t)`.
    pub iterates: Vec<(usize, ParamVector)>,
    /// Weighted (or uniform) average of w_1..w_T.
    pub averaged: ParamVector,
    /// w_{T+1}.
    pub last: ParamVector,
    /// J(w_t) for t = 1..T.
    pub objective_values: Vec<f64>,
    pub records: Vec<StepRecord>,
    /// Per step, per tracked private example: its privacy contribution
    /// (sensitivity-normalized, divided by the noise std).
    pub contributions: Vec<Vec<f64>>,
    /// Per-step worst-case contribution, i.e. the mechanism's Δ/σ.
    pub worst_case: Vec<f64>,
    /// Per-step Gaussian mechanisms (empty for noiseless runs).
    pub mechanisms: Vec<MechanismStep>,
}

impl OptTrace {
    /// Composed μ of all recorded mechanisms.
    pub fn privacy(&self) -> GdpParam {
        compose_gaussian(&self.mechanisms)
    }
}

/// Configuration of one NoisyGD run.
#[derive(Debug, Clone)]
pub struct NoisyGdConfig {
    pub objective: RegularizedObjective,
    pub schedule: Schedule,
    pub steps: usize,
    /// Absolute noise std per coordinate.
    pub noise_std: f64,
    pub clip: Option<ClipSpec>,
    pub radius: f64,
    pub init: ParamVector,
    pub rng: RngStream,
    /// Leading examples of the objective's dataset that are private; only
    /// these are tracked for per-instance accounting. `None` means all.
    pub private_count: Option<usize>,
    /// Keep an iterate and a [`StepRecord`] every this many steps (and at T).
    pub record_every: usize,
    pub track_contributions: bool,
}

impl NoisyGdConfig {
    pub fn new(
        objective: RegularizedObjective,
        schedule: Schedule,
        steps: usize,
        noise_std: f64,
        radius: f64,
    ) -> Self {
        let dim = objective.dim();
        Self {
            objective,
            schedule,
            steps,
            noise_std,
            clip: None,
            radius,
            init: ParamVector::zeros(dim),
            rng: RngStream::new(0, 0),
            private_count: None,
            record_every: 0,
            track_contributions: false,
        }
    }

    fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(invalid("noise std must be finite and >= 0"));
        }
        if !(self.radius > 0.0) {
            return Err(invalid("domain radius must be > 0"));
        }
        if self.init.len() != self.objective.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.objective.dim(),
                actual: self.init.len(),
            });
        }
        if self.init.norm() > self.radius * (1.0 + 1e-12) {
            return Err(invalid(format!(
                "initial point has norm {} outside the radius-{} ball",
                self.init.norm(),
                self.radius
            )));
        }
        if let Some(k) = self.private_count {
            if k > self.objective.base.n() {
                return Err(invalid("private_count exceeds the number of examples"));
            }
        }
        Ok(())
    }

    /// Per-step sensitivity: τ when clipping, otherwise the Lipschitz bound.
    pub fn sensitivity(&self) -> f64 {
        match self.clip {
            Some(c) if c.tau().is_finite() => c.tau().min(self.objective.base.lipschitz()),
            _ => self.objective.base.lipschitz(),
        }
    }
}

fn grad_norm_stats(norms: &[f64]) -> (f64, f64, f64) {
    if norms.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let q = |p| quantile_nearest_rank(norms, p).unwrap_or(0.0);
    (q(0.5), q(0.9), norms.iter().copied().fold(0.0, f64::max))
}

fn should_record(every: usize, t: usize, steps: usize) -> bool {
    every > 0 && (t.is_multiple_of(every) || t == steps)
}

/// Projected NoisyGD:
/// `w ← Π_B(w − η_t(Σᵢ clip_τ(∇ℓᵢ(w)) + n_t + λ(w − w_ref)))`, n_t ~ N(0, σ²I).
pub fn noisy_gd(config: &NoisyGdConfig) -> Result<OptTrace> {
    config.validate()?;
    let obj = &config.objective;
    let base = obj.base.as_ref();
    let dim = obj.dim();
    let tracked = config.private_count.unwrap_or(base.n());
    let track = config.track_contributions && config.noise_std > 0.0;
    let sensitivity = config.sensitivity();
    let worst = if config.noise_std > 0.0 {
        sensitivity / config.noise_std
    } else {
        f64::INFINITY
    };

    let mut trace = OptTrace {
        steps: config.steps,
        ..Default::default()
    };
    let mut avg = RunningAverage::new(config.schedule.averaging(), dim);
    let mut w = config.init.0.clone();
    let mut grad = vec![0.0; dim];
    let mut norms = Vec::with_capacity(base.n());

    for t in 1..=config.steps {
        let eta = learning_rate(&config.schedule, t)?;
        grad.iter_mut().for_each(|g| *g = 0.0);
        norms.clear();
        let mut loss = 0.0;
        let mut contrib = if track {
            Vec::with_capacity(tracked)
        } else {
            Vec::new()
        };
        for i in 0..base.n() {
            let (l, r) = base.loss_and_residual(&w, i);
            loss += l;
            let gn = base.row_norm(i) * norm(&r);
            let f = config.clip.map_or(1.0, |c| c.factor(gn));
            base.add_outer(i, &r, f, &mut grad);
            norms.push(gn);
            if track && i < tracked {
                contrib.push(gn.min(sensitivity) / config.noise_std);
            }
        }
        let value = loss + obj.regularizer_value(&w);
        if !value.is_finite() {
            return Err(Error::Diverged {
                step: t,
                what: "objective",
            });
        }
        trace.objective_values.push(value);
        avg.push(&w);

        if should_record(config.record_every, t, config.steps) {
            let w_bar = avg.current();
            let (q50, q90, max) = grad_norm_stats(&norms);
            trace.records.push(StepRecord {
                step: t,
                objective: value,
                averaged_objective: obj.value(&w_bar)?,
                grad_norm_median: q50,
                grad_norm_q90: q90,
                grad_norm_max: max,
                tau: config.clip.map_or(f64::INFINITY, |c| c.tau()),
            });
            trace.iterates.push((t, ParamVector(w.clone())));
        }

        if config.noise_std > 0.0 {
            let noise = gaussian_sample(&config.rng.substream(t as u64), dim, config.noise_std)?;
            axpy(1.0, &noise, &mut grad);
            trace
                .mechanisms
                .push(MechanismStep::new(sensitivity, config.noise_std)?);
            if track {
                trace.contributions.push(contrib);
                trace.worst_case.push(worst);
            }
        }
        obj.add_regularizer_gradient(&w, &mut grad);
        axpy(-eta, &grad, &mut w);
        if !numerics::all_finite(&w) {
            return Err(Error::Diverged {
                step: t,
                what: "iterate",
            });
        }
        project_in_place(&mut w, config.radius);
    }

    trace.averaged = if config.steps == 0 {
        config.init.clone()
    } else {
        avg.current()
    };
    trace.last = ParamVector(w);
    Ok(trace)
}

/// One shuffled pass of projected SGD from 0 with η_t = 2/(c(t+1)).
/// Returns the last iterate.
pub fn one_pass_sgd(
    public: &GlmProblem,
    c: f64,
    radius: f64,
    rng: &RngStream,
) -> Result<ParamVector> {
    if public.n() == 0 {
        return Err(Error::Empty("public dataset"));
    }
    if !(c > 0.0) {
        return Err(invalid("population strong convexity c must be > 0"));
    }
    if !(radius > 0.0) {
        return Err(invalid("domain radius must be > 0"));
    }
    let mut order: Vec<usize> = (0..public.n()).collect();
    order.shuffle(&mut rng.rng());
    let mut w = vec![0.0; public.dim()];
    for (k, &i) in order.iter().enumerate() {
        let t = (k + 1) as f64;
        let eta = 2.0 / (c * (t + 1.0));
        let (_, r) = public.loss_and_residual(&w, i);
        public.add_outer(i, &r, -eta, &mut w);
        project_in_place(&mut w, radius);
    }
    if !numerics::all_finite(&w) {
        return Err(Error::Diverged {
            step: public.n(),
            what: "one-pass SGD iterate",
        });
    }
    Ok(ParamVector(w))
}

/// λ = √(ρ / (2·‖w* − w_ref‖·d·L²)).
pub fn choose_lambda(
    rho: ZcdpParam,
    dist_estimate: f64,
    dim: usize,
    lipschitz: f64,
) -> Result<f64> {
    if !(dist_estimate > 0.0) {
        return Err(invalid(
            "distance estimate must be > 0; fall back to a configured lambda",
        ));
    }
    if dim == 0 || !(lipschitz > 0.0) || !(rho.rho() > 0.0) {
        return Err(invalid(
            "rho, dimension and Lipschitz constant must be positive",
        ));
    }
    Ok((rho.rho() / (2.0 * dist_estimate * dim as f64 * lipschitz * lipschitz)).sqrt())
}

/// High-precision minimizer of J over the radius-B ball.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub w: ParamVector,
    pub value: f64,
    /// Norm of the projected-gradient mapping at the returned point.
    pub mapping_norm: f64,
    pub iterations: usize,
}

/// Accelerated projected gradient descent (step 1/M, adaptive restart) run
/// until the projected-gradient mapping norm is at most `tol`.
pub fn solve_reference(
    objective: &RegularizedObjective,
    radius: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ReferenceSolution> {
    let m = objective.smoothness_bound().max(1e-12);
    let step = 1.0 / m;
    let dim = objective.dim();
    let mut x = vec![0.0; dim];
    let mut y = x.clone();
    let mut theta = 1.0_f64;
    let mut last_map = f64::INFINITY;
    for k in 1..=max_iter {
        let g = objective.gradient(&ParamVector(y.clone()))?;
        let mut x_new = y.clone();
        axpy(-step, &g, &mut x_new);
        project_in_place(&mut x_new, radius);
        let mapping: f64 = norm(&numerics::sub(&y, &x_new)) * m;
        if !mapping.is_finite() {
            return Err(Error::Diverged {
                step: k,
                what: "reference solver",
            });
        }
        last_map = mapping;
        if mapping <= tol {
            let w = ParamVector(x_new);
            return Ok(ReferenceSolution {
                value: objective.value(&w)?,
                w,
                mapping_norm: mapping,
                iterations: k,
            });
        }
        let theta_new = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let delta = numerics::sub(&x_new, &x);
        let restart = numerics::dot(&numerics::sub(&y, &x_new), &delta) > 0.0;
        if restart {
            theta = 1.0;
            y = x_new.clone();
        } else {
            let beta = (theta - 1.0) / theta_new;
            y = x_new
                .iter()
                .zip(&delta)
                .map(|(a, d)| a + beta * d)
                .collect();
            theta = theta_new;
        }
        x = x_new;
    }
    tracing::warn!(
        mapping = last_map,
        tol,
        "reference solver hit the iteration cap"
    );
    let w = ParamVector(x);
    Ok(ReferenceSolution {
        value: objective.value(&w)?,
        w,
        mapping_norm: last_map,
        iterations: max_iter,
    })
}

/// Subspace used to project private gradients in [`adamix_practical`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Projection {
    /// Top-`rank` left singular vectors of the D × C public gradient.
    Adaptive { rank: usize },
    /// No projection (full parameter space).
    Identity,
}

/// How the practical variant initializes from public data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pretrain {
    /// Regularized public objective solved to convergence.
    Converged,
    /// One shuffled SGD pass, as in the theoretical variant.
    OnePassSgd,
    /// Start from zero.
    None,
}

/// Configuration shared by both AdaMix variants.
#[derive(Debug, Clone)]
pub struct AdaMixConfig {
    pub public: Arc<GlmProblem>,
    pub private: Arc<GlmProblem>,
    pub target: DpPoint,
    /// Noise multiplier: noise std is σ times the per-step sensitivity.
    pub sigma_rel: f64,
    pub quantile: f64,
    pub projection: Projection,
    pub lambda: f64,
    /// Population-level strong convexity c used by one-pass SGD.
    pub pop_strong_convexity: f64,
    pub radius: f64,
    pub rng: RngStream,
    /// Learning rate of the practical variant.
    pub practical_schedule: Schedule,
    pub pretrain: Pretrain,
    pub record_every: usize,
    pub track_contributions: bool,
}

impl AdaMixConfig {
    /// Defaults: q = 0.9, rank-1 adaptive projection, λ = 1e-2, c = 1,
    /// constant learning rate 1/M of the combined data, converged pretraining.
    pub fn new(
        public: Arc<GlmProblem>,
        private: Arc<GlmProblem>,
        target: DpPoint,
        sigma_rel: f64,
        seed: u64,
    ) -> Self {
        let n = (public.n() + private.n()) as f64;
        let beta = public.smooth_beta().max(private.smooth_beta());
        let radius = public.radius();
        let lambda = 1e-2;
        let m = (n * beta + lambda).max(1e-12);
        Self {
            public,
            private,
            target,
            sigma_rel,
            quantile: 0.9,
            projection: Projection::Adaptive { rank: 1 },
            lambda,
            pop_strong_convexity: 1.0,
            radius,
            rng: RngStream::new(seed, 0),
            practical_schedule: Schedule::ConstantLipschitz { eta: 1.0 / m },
            pretrain: Pretrain::Converged,
            record_every: 0,
            track_contributions: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.public.dim() != self.private.dim() && self.public.n() > 0 && self.private.n() > 0 {
            return Err(Error::DimensionMismatch {
                expected: self.private.dim(),
                actual: self.public.dim(),
            });
        }
        if self.public.link() != self.private.link() {
            return Err(invalid("public and private data must share a link"));
        }
        if !(self.sigma_rel > 0.0) || !self.sigma_rel.is_finite() {
            return Err(invalid("sigma must be finite and > 0"));
        }
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return Err(invalid("quantile must lie in (0, 1]"));
        }
        if !(self.radius > 0.0) {
            return Err(invalid("domain radius must be > 0"));
        }
        if !(self.lambda >= 0.0) {
            return Err(invalid("lambda must be >= 0"));
        }
        if let Projection::Adaptive { rank } = self.projection {
            if rank == 0 {
                return Err(invalid("projection rank must be >= 1"));
            }
        }
        Ok(())
    }

    fn dim(&self) -> usize {
        self.private.dim().max(self.public.dim())
    }
}

/// Result of an AdaMix run.
#[derive(Debug, Clone)]
pub struct AdaMixRun {
    pub trace: OptTrace,
    /// Pretrained reference point (or initialization).
    pub w_ref: ParamVector,
    /// The returned model: the weighted average (theoretical) or the last
    /// iterate (practical).
    pub output: ParamVector,
    pub steps: u64,
    pub mu: GdpParam,
}

/// Theoretical AdaMix: one-pass SGD on public data gives w_ref, then NoisyGD
/// on `L_pri + L_pub + (λ/2)‖w − w_ref‖²` from w_ref with η_t = 2/(λ(t+1)).
pub fn adamix_theoretical(config: &AdaMixConfig) -> Result<AdaMixRun> {
    config.validate()?;
    let w_ref = if config.public.n() > 0 {
        one_pass_sgd(
            &config.public,
            config.pop_strong_convexity,
            config.radius,
            &config.rng.substream(0),
        )?
    } else {
        ParamVector::zeros(config.dim())
    };
    mix_training(config, w_ref)
}

/// The NoisyGD phase of [`adamix_theoretical`] with an explicit reference
/// point (zero reproduces plain regularized NoisyGD on the union).
pub fn mix_training(config: &AdaMixConfig, w_ref: ParamVector) -> Result<AdaMixRun> {
    config.validate()?;
    if !(config.lambda > 0.0) {
        return Err(invalid("the strongly convex schedule needs lambda > 0"));
    }
    let lipschitz = if config.private.n() > 0 {
        config.private.lipschitz()
    } else {
        config.public.lipschitz()
    };
    let noise_std = config.sigma_rel * lipschitz;
    let steps = calibrate_steps(config.target, lipschitz, noise_std)?;
    if steps == 0 {
        return Err(Error::BudgetTooSmall);
    }
    let combined = config.private.concat(&config.public)?;
    let objective = RegularizedObjective::new(Arc::new(combined), config.lambda, w_ref.clone())?;
    let mut ngd = NoisyGdConfig::new(
        objective,
        Schedule::StronglyConvex { mu: config.lambda },
        steps as usize,
        noise_std,
        config.radius,
    );
    let mut init = w_ref.clone();
    project_in_place(&mut init, config.radius);
    ngd.init = init;
    ngd.rng = config.rng.substream(1);
    ngd.private_count = Some(config.private.n());
    ngd.record_every = config.record_every;
    ngd.track_contributions = config.track_contributions;
    let trace = noisy_gd(&ngd)?;
    Ok(AdaMixRun {
        mu: trace.privacy(),
        output: trace.averaged.clone(),
        trace,
        w_ref,
        steps,
    })
}

/// Clipping threshold: the q-quantile of public per-example gradient norms.
pub fn adaptive_threshold(public: &GlmProblem, w: &ParamVector, q: f64) -> Result<ClipSpec> {
    if public.n() == 0 {
        return Err(Error::Empty("public dataset"));
    }
    let norms: Vec<f64> = (0..public.n())
        .map(|i| {
            let (_, r) = public.loss_and_residual(w, i);
            public.row_norm(i) * norm(&r)
        })
        .collect();
    threshold_from_norms(&norms, q, public.lipschitz())
}

fn threshold_from_norms(norms: &[f64], q: f64, scale: f64) -> Result<ClipSpec> {
    let tau = quantile_nearest_rank(norms, q)?;
    if tau > 0.0 {
        ClipSpec::new(tau)
    } else {
        let floor = f64::EPSILON * scale.max(1.0);
        tracing::warn!(
            floor,
            "public gradients vanish; using a machine-epsilon clipping floor"
        );
        ClipSpec::new(floor)
    }
}

/// Top-`rank` left singular vectors of the total public gradient reshaped to
/// D × C.
pub fn adaptive_projection_basis(
    public: &GlmProblem,
    w: &ParamVector,
    rank: usize,
) -> Result<Matrix> {
    if rank == 0 {
        return Err(invalid("projection rank must be >= 1"));
    }
    let g = public.total_gradient(w)?;
    basis_from_gradient(g, public.features(), public.outputs(), rank)
}

fn basis_from_gradient(g: Vec<f64>, d: usize, c: usize, rank: usize) -> Result<Matrix> {
    let gm = Matrix::new(d, c, g)?;
    let k = d.min(c).min(rank);
    if gm.frobenius_norm() == 0.0 {
        tracing::warn!("public gradient is zero; using a coordinate basis for projection");
        return Ok(Matrix::from_fn(d, k, |i, j| if i == j { 1.0 } else { 0.0 }));
    }
    let svd = thin_svd(&gm);
    Ok(Matrix::from_fn(d, k, |i, j| svd.u.get(i, j)))
}

/// Pretraining of the practical variant.
pub fn pretrain(config: &AdaMixConfig) -> Result<ParamVector> {
    match config.pretrain {
        Pretrain::None => Ok(ParamVector::zeros(config.dim())),
        Pretrain::OnePassSgd => one_pass_sgd(
            &config.public,
            config.pop_strong_convexity,
            config.radius,
            &config.rng.substream(0),
        ),
        Pretrain::Converged => {
            let obj = RegularizedObjective::new(
                config.public.clone(),
                config.lambda,
                ParamVector::zeros(config.dim()),
            )?;
            Ok(solve_reference(&obj, config.radius, 1e-8, 20_000)?.w)
        }
    }
}

/// Practical AdaMix: calibrate T, pretrain on public data, then run
/// [`adamix_practical_steps`] with the configured noise multiplier.
pub fn adamix_practical(config: &AdaMixConfig) -> Result<AdaMixRun> {
    config.validate()?;
    if config.public.n() == 0 {
        return Err(Error::Empty(
            "public dataset (adaptive clipping needs public gradients)",
        ));
    }
    // Each step clips at τ_t and adds N(0, σ²τ_t²): ratio 1/σ regardless of τ_t.
    let steps = calibrate_steps(config.target, 1.0, config.sigma_rel)?;
    if steps == 0 {
        return Err(Error::BudgetTooSmall);
    }
    let w0 = pretrain(config)?;
    let trace = adamix_practical_steps(config, w0.clone(), steps as usize, config.sigma_rel)?;
    Ok(AdaMixRun {
        mu: trace.privacy(),
        output: trace.last.clone(),
        trace,
        w_ref: w0,
        steps,
    })
}

/// The practical update loop for a fixed number of steps.
///
/// Per step: τ_t from [`adaptive_threshold`], U from
/// [`adaptive_projection_basis`] (or the identity), private gradients clipped
/// to τ_t and projected as Uᵀg̃ᵢ, noise N(0, (σ·τ_t)²) on each of the P·C
/// projected coordinates, then
/// `w ← Π_B(w − η_t(G_pub + U·Ĝ_pri + λw))`.
/// A `noise_multiplier` of 0 gives the deterministic clipped projected method.
pub fn adamix_practical_steps(
    config: &AdaMixConfig,
    init: ParamVector,
    steps: usize,
    noise_multiplier: f64,
) -> Result<OptTrace> {
    config.validate()?;
    config.practical_schedule.validate()?;
    if !(noise_multiplier >= 0.0) {
        return Err(invalid("noise multiplier must be >= 0"));
    }
    let public = config.public.as_ref();
    let private = config.private.as_ref();
    if public.n() == 0 {
        return Err(Error::Empty("public dataset"));
    }
    let (d, c) = (public.features(), public.outputs());
    let dim = d * c;
    if init.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: init.len(),
        });
    }
    let noisy = noise_multiplier > 0.0;
    let track = config.track_contributions && noisy;
    let schedule = config.practical_schedule;

    let mut trace = OptTrace {
        steps,
        ..Default::default()
    };
    let mut avg = RunningAverage::new(schedule.averaging(), dim);
    let mut w = init.0;
    project_in_place(&mut w, config.radius);
    let mut pub_norms = Vec::with_capacity(public.n());
    let mut pri_norms = Vec::with_capacity(private.n());

    let objective_at = |w: &[f64]| -> f64 {
        let l: f64 = (0..public.n())
            .map(|j| public.loss_and_residual(w, j).0)
            .sum::<f64>()
            + (0..private.n())
                .map(|i| private.loss_and_residual(w, i).0)
                .sum::<f64>();
        l + 0.5 * config.lambda * numerics::dot(w, w)
    };

    for t in 1..=steps {
        let eta = learning_rate(&schedule, t)?;

        let mut g_pub = vec![0.0; dim];
        let mut loss = 0.0;
        pub_norms.clear();
        for j in 0..public.n() {
            let (l, r) = public.loss_and_residual(&w, j);
            loss += l;
            pub_norms.push(public.row_norm(j) * norm(&r));
            public.add_outer(j, &r, 1.0, &mut g_pub);
        }
        let clip = threshold_from_norms(&pub_norms, config.quantile, public.lipschitz())?;
        let tau = clip.tau();
        let basis = match config.projection {
            Projection::Adaptive { rank } => Some(basis_from_gradient(g_pub.clone(), d, c, rank)?),
            Projection::Identity => None,
        };
        let p = basis.as_ref().map_or(d, Matrix::cols);

        // Σᵢ Uᵀg̃ᵢ as a P × C matrix; g̃ᵢ = fᵢ·xᵢ ⊗ rᵢ so Uᵀg̃ᵢ = fᵢ·(Uᵀxᵢ) ⊗ rᵢ.
        let mut g_hat = vec![0.0; p * c];
        pri_norms.clear();
        let mut contrib = if track {
            Vec::with_capacity(private.n())
        } else {
            Vec::new()
        };
        for i in 0..private.n() {
            let (l, r) = private.loss_and_residual(&w, i);
            loss += l;
            let xi = private.x().row(i);
            let r_norm = norm(&r);
            let gn = norm(xi) * r_norm;
            pri_norms.push(gn);
            let f = clip.factor(gn);
            let ux = match &basis {
                Some(u) => u.t_matvec(xi),
                None => xi.to_vec(),
            };
            for (k, &uk) in ux.iter().enumerate() {
                let a = f * uk;
                if a != 0.0 {
                    axpy(a, &r, &mut g_hat[k * c..(k + 1) * c]);
                }
            }
            if track {
                contrib.push(f * norm(&ux) * r_norm / (tau * noise_multiplier));
            }
        }
        let value = loss + 0.5 * config.lambda * numerics::dot(&w, &w);
        if !value.is_finite() {
            return Err(Error::Diverged {
                step: t,
                what: "objective",
            });
        }
        trace.objective_values.push(value);
        avg.push(&w);
        if should_record(config.record_every, t, steps) {
            let (q50, q90, max) = grad_norm_stats(&pri_norms);
            trace.records.push(StepRecord {
                step: t,
                objective: value,
                averaged_objective: objective_at(&avg.current()),
                grad_norm_median: q50,
                grad_norm_q90: q90,
                grad_norm_max: max,
                tau,
            });
            trace.iterates.push((t, ParamVector(w.clone())));
        }

        if noisy {
            let noise_std = noise_multiplier * tau;
            let noise = gaussian_sample(
                &config.rng.substream(1).substream(t as u64),
                p * c,
                noise_std,
            )?;
            axpy(1.0, &noise, &mut g_hat);
            trace.mechanisms.push(MechanismStep::new(tau, noise_std)?);
            if track {
                trace.contributions.push(contrib);
                trace.worst_case.push(1.0 / noise_multiplier);
            }
        }

        // direction = G_pub + U·Ĝ + λw
        let mut dir = g_pub;
        match &basis {
            Some(u) => {
                for row in 0..d {
                    let out = &mut dir[row * c..(row + 1) * c];
                    for k in 0..p {
                        let a = u.get(row, k);
                        if a != 0.0 {
                            axpy(a, &g_hat[k * c..(k + 1) * c], out);
                        }
                    }
                }
            }
            None => axpy(1.0, &g_hat, &mut dir),
        }
        axpy(config.lambda, &w, &mut dir);
        axpy(-eta, &dir, &mut w);
        if !numerics::all_finite(&w) {
            return Err(Error::Diverged {
                step: t,
                what: "iterate",
            });
        }
        project_in_place(&mut w, config.radius);
    }
    trace.averaged = if steps == 0 {
        ParamVector(w.clone())
    } else {
        avg.current()
    };
    trace.last = ParamVector(w);
    Ok(trace)
}
