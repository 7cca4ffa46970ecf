//! Multi-seed execution of one experiment config and the files it writes.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use mixdp_core::accountant::{calibrate_steps, epsilon_of_mu, DpPoint, GdpParam, ZcdpParam};
use mixdp_core::numerics::RngStream;
use mixdp_core::optimizer::{
    adamix_practical, adamix_theoretical, choose_lambda, noisy_gd, one_pass_sgd, solve_reference,
    AdaMixConfig, NoisyGdConfig, OptTrace, Schedule,
};
use mixdp_core::pdp_ledger::{PdpLedger, PdpSummary};
use mixdp_core::problems::{GlmProblem, ParamVector, RegularizedObjective};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, ExperimentConfig, LambdaChoice, Privacy, FALLBACK_LAMBDA};
use crate::data::Datasets;
use crate::error::{validation, HarnessError, Result};

pub const REPORT_VERSION: u32 = 1;
pub const TRACE_VERSION: u32 = 1;
pub const LEDGER_VERSION: u32 = 1;

/// Tolerance of the non-private baseline solve (projected-gradient mapping norm).
pub const BASELINE_TOL: f64 = 1e-10;
const BASELINE_MAX_ITER: usize = 200_000;

/// Minimizer of the unregularized empirical loss over the B-ball.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Baseline {
    pub j_star: f64,
    pub mapping_norm: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub w_star: ParamVector,
}

pub fn solve_baseline(p: &Arc<GlmProblem>, radius: f64) -> Result<Baseline> {
    let obj = RegularizedObjective::plain(p.clone());
    let sol = solve_reference(&obj, radius, BASELINE_TOL, BASELINE_MAX_ITER)?;
    Ok(Baseline {
        j_star: sol.value,
        mapping_norm: sol.mapping_norm,
        iterations: sol.iterations,
        w_star: sol.w,
    })
}

/// Raw result of one algorithm run, before evaluation.
struct Executed {
    w: ParamVector,
    trace: Option<OptTrace>,
    mu: f64,
    steps: u64,
    lambda: f64,
    bound: Option<BoundCheck>,
}

/// Data and shared quantities for all seeds of one config.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub data: Datasets,
    pub train: Arc<GlmProblem>,
    pub baseline: Baseline,
    pub config_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedStatus {
    Ok,
    Diverged,
    Failed,
}

/// Bound of the strongly convex NoisyGD theorem on the excess empirical risk
/// (per example) of the run's own training objective.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundCheck {
    pub excess: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub status: SeedStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub steps: u64,
    pub lambda: f64,
    /// Mean training loss over public ∪ private.
    pub empirical_risk: f64,
    pub excess_empirical_risk: f64,
    pub test_error: Option<f64>,
    pub test_loss: Option<f64>,
    /// Mean test loss minus that of the planted parameter.
    pub excess_test_risk: Option<f64>,
    pub mu: f64,
    pub epsilon: f64,
    pub rho: f64,
    pub bound: Option<BoundCheck>,
    /// Kept out of `report.json` so reruns stay byte-identical; see `timing.json`.
    #[serde(skip)]
    pub wall_time_ms: u64,
}

/// One seed's outcome plus the artifacts that go to disk.
pub struct SeedRun {
    pub outcome: SeedOutcome,
    pub trace: Option<OptTrace>,
    pub ledger: Option<PdpLedger>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std,
            count: n,
        }
    }

    pub fn standard_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.std / (self.count as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub ok_seeds: usize,
    pub diverged_seeds: usize,
    pub failed_seeds: usize,
    pub excess_empirical_risk: Stat,
    pub test_error: Option<Stat>,
    pub excess_test_risk: Option<Stat>,
    pub mu: Stat,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    pub baseline: Baseline,
    pub per_seed: Vec<SeedOutcome>,
    pub aggregate: Aggregate,
}

/// Ledger file written per seed and read back by `pdp-report`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LedgerFile {
    pub schema_version: u32,
    pub seed: u64,
    pub delta: f64,
    pub ledger: PdpLedger,
    pub summary: PdpSummary,
}

#[derive(Serialize)]
struct TraceHeader<'a> {
    schema: &'static str,
    version: u32,
    config_hash: &'a str,
    algorithm: Algorithm,
    seed: u64,
}

fn mean_loss(p: &GlmProblem, w: &ParamVector) -> Result<f64> {
    if p.n() == 0 {
        return Ok(0.0);
    }
    Ok(p.loss(w)? / p.n() as f64)
}

fn epsilon_at(mu: f64, delta: f64) -> Result<f64> {
    if mu == 0.0 {
        return Ok(0.0);
    }
    match epsilon_of_mu(GdpParam::new(mu)?, delta) {
        Ok(e) => Ok(e),
        Err(mixdp_core::Error::EpsilonZeroSuffices { .. }) => Ok(0.0),
        Err(e) => Err(e.into()),
    }
}

impl Experiment {
    pub fn prepare(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let data = Datasets::build(&cfg)?;
        let train = Arc::new(data.union()?);
        if train.n() == 0 {
            return Err(validation("no training data"));
        }
        let baseline = solve_baseline(&train, cfg.radius)?;
        let exp = Self {
            config_hash: cfg.hash(),
            cfg,
            data,
            train,
            baseline,
        };
        if exp.cfg.algorithm.is_private() && exp.steps()? == 0 {
            return Err(mixdp_core::Error::BudgetTooSmall.into());
        }
        Ok(exp)
    }

    /// The (ε, δ) target all private algorithms calibrate against. A ρ budget
    /// maps to ε = ε_δ(√(2ρ)).
    pub fn target(&self) -> Result<DpPoint> {
        match self.cfg.privacy {
            Privacy::Dp { epsilon, delta } => Ok(DpPoint::new(epsilon, delta)?),
            Privacy::Rho { rho, delta } => {
                let mu = (2.0 * rho).sqrt();
                let eps = epsilon_of_mu(GdpParam::new(mu)?, delta)
                    .map_err(|e| validation(format!("rho {rho} at delta {delta}: {e}")))?;
                Ok(DpPoint::new(eps, delta)?)
            }
        }
    }

    /// Calibrated T; every private algorithm has per-step Δ/σ_noise = 1/σ.
    pub fn steps(&self) -> Result<u64> {
        Ok(calibrate_steps(self.target()?, 1.0, self.cfg.sigma)?)
    }

    pub fn pop_strong_convexity(&self) -> f64 {
        self.cfg.pop_strong_convexity.unwrap_or(
            1.0 / self
                .data
                .private
                .features()
                .max(self.data.public.features())
                .max(1) as f64,
        )
    }

    /// λ for a run whose reference point is `w_ref`.
    pub fn lambda(&self, w_ref: &ParamVector, lipschitz: f64) -> Result<f64> {
        match self.cfg.lambda {
            LambdaChoice::Value(l) => Ok(l),
            LambdaChoice::Auto(_) => {
                if !self.cfg.algorithm.is_private() {
                    return Ok(FALLBACK_LAMBDA);
                }
                let dist = match (self.cfg.dist_estimate, &self.data.planted) {
                    (Some(d), _) => d,
                    (None, Some(w)) => w.distance(w_ref),
                    (None, None) => return Err(validation(
                        "lambda \"auto\" needs dist_estimate when no planted parameter is known",
                    )),
                };
                let t = self.steps()? as f64;
                let rho = ZcdpParam::new(t / (2.0 * self.cfg.sigma * self.cfg.sigma))?;
                match choose_lambda(rho, dist, self.dim(), lipschitz) {
                    Ok(l) => Ok(l),
                    Err(_) => {
                        tracing::warn!(dist, "reference already at the planted optimum; falling back to lambda = {FALLBACK_LAMBDA}");
                        Ok(FALLBACK_LAMBDA)
                    }
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    fn adamix_config(&self, seed: u64, lambda: f64) -> Result<AdaMixConfig> {
        let mut cfg = AdaMixConfig::new(
            self.data.public.clone(),
            self.data.private.clone(),
            self.target()?,
            self.cfg.sigma,
            seed,
        );
        cfg.quantile = self.cfg.quantile;
        cfg.projection = self.cfg.projection;
        cfg.lambda = lambda;
        cfg.pop_strong_convexity = self.pop_strong_convexity();
        cfg.radius = self.cfg.radius;
        cfg.pretrain = self.cfg.pretrain;
        cfg.record_every = self.cfg.record_every;
        cfg.track_contributions = true;
        let m = (self.train.n() as f64 * self.train.smooth_beta() + lambda).max(1e-12);
        cfg.practical_schedule = self
            .cfg
            .schedule
            .unwrap_or(Schedule::ConstantLipschitz { eta: 1.0 / m });
        Ok(cfg)
    }

    fn noisy_gd_run(&self, p: &Arc<GlmProblem>, seed: u64) -> Result<(OptTrace, f64, u64)> {
        let zero = ParamVector::zeros(self.dim());
        let lambda = self.lambda(&zero, p.lipschitz())?;
        let steps = self.steps()?;
        let obj = RegularizedObjective::new(p.clone(), lambda, zero)?;
        let mut ngd = NoisyGdConfig::new(
            obj,
            Schedule::StronglyConvex { mu: lambda },
            steps as usize,
            self.cfg.sigma * p.lipschitz(),
            self.cfg.radius,
        );
        ngd.rng = RngStream::new(seed, 1);
        ngd.record_every = self.cfg.record_every;
        ngd.track_contributions = true;
        ngd.private_count = Some(self.data.private.n().min(p.n()));
        Ok((noisy_gd(&ngd)?, lambda, steps))
    }

    /// Excess-risk bound for NoisyGD with the strongly convex schedule on the
    /// objective `p` regularized toward `w_ref`, per example.
    fn noisy_bound(
        &self,
        p: &Arc<GlmProblem>,
        lambda: f64,
        steps: u64,
        w_ref: &ParamVector,
        output: &ParamVector,
    ) -> Result<BoundCheck> {
        let base = if Arc::ptr_eq(p, &self.train) {
            self.baseline.clone()
        } else {
            solve_baseline(p, self.cfg.radius)?
        };
        let n = p.n() as f64;
        let l = p.lipschitz();
        let g = n * l + lambda * self.cfg.radius;
        let t = steps as f64;
        let rho = t / (2.0 * self.cfg.sigma * self.cfg.sigma);
        let dist_sq = base.w_star.distance(w_ref).powi(2);
        let bound = (2.0 * g * g / (lambda * t)
            + self.dim() as f64 * l * l / (lambda * rho)
            + 0.5 * lambda * dist_sq)
            / n;
        Ok(BoundCheck {
            excess: (p.loss(output)? - base.j_star) / n,
            bound,
        })
    }

    fn execute(&self, seed: u64) -> Result<Executed> {
        let radius = self.cfg.radius;
        let zero = ParamVector::zeros(self.dim());
        match self.cfg.algorithm {
            Algorithm::NoisyGd => {
                let (trace, lambda, steps) = self.noisy_gd_run(&self.data.private, seed)?;
                let bound =
                    self.noisy_bound(&self.data.private, lambda, steps, &zero, &trace.averaged)?;
                Ok(Executed {
                    w: trace.averaged.clone(),
                    trace: Some(trace.clone()),
                    mu: trace.privacy().mu(),
                    steps,
                    lambda,
                    bound: Some(bound),
                })
            }
            Algorithm::FullyPrivate => {
                let (trace, lambda, steps) = self.noisy_gd_run(&self.train, seed)?;
                let bound = self.noisy_bound(&self.train, lambda, steps, &zero, &trace.averaged)?;
                Ok(Executed {
                    w: trace.averaged.clone(),
                    trace: Some(trace.clone()),
                    mu: trace.privacy().mu(),
                    steps,
                    lambda,
                    bound: Some(bound),
                })
            }
            Algorithm::AdamixTheoretical => {
                let w_ref = if self.data.public.n() > 0 {
                    one_pass_sgd(
                        &self.data.public,
                        self.pop_strong_convexity(),
                        radius,
                        &RngStream::new(seed, 0).substream(0),
                    )?
                } else {
                    zero.clone()
                };
                let l = if self.data.private.n() > 0 {
                    self.data.private.lipschitz()
                } else {
                    self.data.public.lipschitz()
                };
                let lambda = self.lambda(&w_ref, l)?;
                let run = adamix_theoretical(&self.adamix_config(seed, lambda)?)?;
                let bound =
                    self.noisy_bound(&self.train, lambda, run.steps, &run.w_ref, &run.output)?;
                Ok(Executed {
                    w: run.output,
                    trace: Some(run.trace),
                    mu: run.mu.mu(),
                    steps: run.steps,
                    lambda,
                    bound: Some(bound),
                })
            }
            Algorithm::AdamixPractical => {
                let lambda = self.lambda(&zero, 1.0)?;
                let run = adamix_practical(&self.adamix_config(seed, lambda)?)?;
                Ok(Executed {
                    w: run.output,
                    trace: Some(run.trace),
                    mu: run.mu.mu(),
                    steps: run.steps,
                    lambda,
                    bound: None,
                })
            }
            Algorithm::OnePassOnly => {
                let w = one_pass_sgd(
                    &self.data.public,
                    self.pop_strong_convexity(),
                    radius,
                    &RngStream::new(seed, 0),
                )?;
                Ok(Executed {
                    w,
                    trace: None,
                    mu: 0.0,
                    steps: self.data.public.n() as u64,
                    lambda: 0.0,
                    bound: None,
                })
            }
            Algorithm::OnlyPublic | Algorithm::NonPrivate => {
                let p = if self.cfg.algorithm == Algorithm::OnlyPublic {
                    self.data.public.clone()
                } else {
                    self.train.clone()
                };
                let lambda = self.lambda(&zero, p.lipschitz())?;
                let obj = RegularizedObjective::new(p, lambda, zero)?;
                let sol = solve_reference(&obj, radius, BASELINE_TOL, BASELINE_MAX_ITER)?;
                Ok(Executed {
                    w: sol.w,
                    trace: None,
                    mu: 0.0,
                    steps: sol.iterations as u64,
                    lambda,
                    bound: None,
                })
            }
        }
    }

    pub fn run_seed(&self, seed: u64) -> SeedRun {
        let start = Instant::now();
        let delta = self.cfg.privacy.delta();
        let result = self.execute(seed).and_then(
            |Executed {
                 w,
                 trace,
                 mu,
                 steps,
                 lambda,
                 bound,
             }| {
                let ledger = match &trace {
                    Some(t) if !t.contributions.is_empty() => {
                        Some(PdpLedger::from_trace(self.data.private.n(), t)?)
                    }
                    _ => None,
                };
                let risk = mean_loss(&self.train, &w)?;
                let n = self.train.n() as f64;
                let (test_error, test_loss, excess_test) = match &self.data.test {
                    Some(test) if test.n() > 0 => {
                        let loss = mean_loss(test, &w)?;
                        let excess = match &self.data.planted {
                            Some(pw) => Some(loss - mean_loss(test, pw)?),
                            None => None,
                        };
                        (Some(test.error_rate(&w)?), Some(loss), excess)
                    }
                    _ => (None, None, None),
                };
                let outcome = SeedOutcome {
                    seed,
                    status: SeedStatus::Ok,
                    message: None,
                    steps,
                    lambda,
                    empirical_risk: risk,
                    excess_empirical_risk: risk - self.baseline.j_star / n,
                    test_error,
                    test_loss,
                    excess_test_risk: excess_test,
                    mu,
                    epsilon: epsilon_at(mu, delta)?,
                    rho: mu * mu / 2.0,
                    bound,
                    wall_time_ms: 0,
                };
                Ok((outcome, trace, ledger))
            },
        );
        let elapsed = start.elapsed().as_millis() as u64;
        match result {
            Ok((mut outcome, trace, ledger)) => {
                outcome.wall_time_ms = elapsed;
                SeedRun {
                    outcome,
                    trace,
                    ledger,
                }
            }
            Err(e) => {
                let status = match &e {
                    HarnessError::Core(mixdp_core::Error::Diverged { .. }) => SeedStatus::Diverged,
                    _ => SeedStatus::Failed,
                };
                tracing::warn!(seed, error = %e, "seed did not complete");
                SeedRun {
                    outcome: SeedOutcome {
                        seed,
                        status,
                        message: Some(e.to_string()),
                        steps: 0,
                        lambda: f64::NAN,
                        empirical_risk: f64::NAN,
                        excess_empirical_risk: f64::NAN,
                        test_error: None,
                        test_loss: None,
                        excess_test_risk: None,
                        mu: f64::NAN,
                        epsilon: f64::NAN,
                        rho: f64::NAN,
                        bound: None,
                        wall_time_ms: elapsed,
                    },
                    trace: None,
                    ledger: None,
                }
            }
        }
    }

    /// Runs seeds in parallel; results come back in seed-list order.
    pub fn run_seeds(&self, seeds: &[u64]) -> Vec<SeedRun> {
        seeds.par_iter().map(|&s| self.run_seed(s)).collect()
    }

    pub fn report(&self, seeds: &[u64], runs: &[SeedRun]) -> RunReport {
        let ok: Vec<&SeedOutcome> = runs
            .iter()
            .map(|r| &r.outcome)
            .filter(|o| o.status == SeedStatus::Ok)
            .collect();
        let collect = |f: &dyn Fn(&SeedOutcome) -> Option<f64>| -> Option<Stat> {
            let v: Vec<f64> = ok.iter().filter_map(|o| f(o)).collect();
            (!v.is_empty()).then(|| Stat::of(&v))
        };
        let count = |s: SeedStatus| runs.iter().filter(|r| r.outcome.status == s).count();
        RunReport {
            schema_version: REPORT_VERSION,
            config_hash: self.config_hash.clone(),
            algorithm: self.cfg.algorithm,
            seeds: seeds.to_vec(),
            baseline: self.baseline.clone(),
            per_seed: runs.iter().map(|r| r.outcome.clone()).collect(),
            aggregate: Aggregate {
                ok_seeds: ok.len(),
                diverged_seeds: count(SeedStatus::Diverged),
                failed_seeds: count(SeedStatus::Failed),
                excess_empirical_risk: collect(&|o| Some(o.excess_empirical_risk))
                    .unwrap_or_default(),
                test_error: collect(&|o| o.test_error),
                excess_test_risk: collect(&|o| o.excess_test_risk),
                mu: collect(&|o| Some(o.mu)).unwrap_or_default(),
            },
        }
    }

    /// Writes `seed-<s>/trace.jsonl`, `seed-<s>/pdp.csv`,
    /// `seed-<s>/pdp_ledger.json` and `report.json` under `out`.
    pub fn write_outputs(&self, out: &Path, report: &RunReport, runs: &[SeedRun]) -> Result<()> {
        fs::create_dir_all(out)?;
        let delta = self.cfg.privacy.delta();
        for run in runs {
            let seed = run.outcome.seed;
            let dir = out.join(format!("seed-{seed}"));
            fs::create_dir_all(&dir)?;
            if let Some(trace) = &run.trace {
                let mut w = BufWriter::new(fs::File::create(dir.join("trace.jsonl"))?);
                let header = TraceHeader {
                    schema: "mixdp-trace",
                    version: TRACE_VERSION,
                    config_hash: &self.config_hash,
                    algorithm: self.cfg.algorithm,
                    seed,
                };
                writeln!(w, "{}", serde_json::to_string(&header)?)?;
                for rec in &trace.records {
                    writeln!(w, "{}", serde_json::to_string(rec)?)?;
                }
                w.flush()?;
            }
            if let Some(ledger) = &run.ledger {
                ledger.write_csv(fs::File::create(dir.join("pdp.csv"))?, delta)?;
                let file = LedgerFile {
                    schema_version: LEDGER_VERSION,
                    seed,
                    delta,
                    ledger: ledger.clone(),
                    summary: ledger.summary(delta)?,
                };
                fs::write(
                    dir.join("pdp_ledger.json"),
                    serde_json::to_string_pretty(&file)?,
                )?;
            }
        }
        fs::write(
            out.join("report.json"),
            serde_json::to_string_pretty(report)?,
        )?;
        let timing: Vec<serde_json::Value> = runs
            .iter()
            .map(|r| serde_json::json!({"seed": r.outcome.seed, "wall_time_ms": r.outcome.wall_time_ms}))
            .collect();
        fs::write(
            out.join("timing.json"),
            serde_json::to_string_pretty(&timing)?,
        )?;
        Ok(())
    }
}

/// `run`: execute all seeds, write outputs, and fail with
/// [`HarnessError::AllDiverged`] when no seed survived divergence.
pub fn cmd_run(cfg: ExperimentConfig, out: Option<&Path>) -> Result<RunReport> {
    let seeds = cfg.seeds.clone();
    let exp = Experiment::prepare(cfg)?;
    let runs = exp.run_seeds(&seeds);
    let report = exp.report(&seeds, &runs);
    if let Some(out) = out {
        exp.write_outputs(out, &report, &runs)?;
    }
    if report.aggregate.diverged_seeds == runs.len() {
        return Err(HarnessError::AllDiverged);
    }
    Ok(report)
}
