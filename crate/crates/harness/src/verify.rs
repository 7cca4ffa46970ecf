//! `verify-bounds`: empirical checks of the convergence theorems against their
//! closed-form right-hand sides.
//!
//! A row passes iff `mean + 2·SE ≤ RHS`, with the mean over seeds. Deterministic
//! rows have SE = 0. Right-hand sides use only problem constants.

use std::sync::Arc;

use mixdp_core::numerics::RngStream;
use mixdp_core::optimizer::{noisy_gd, one_pass_sgd, solve_reference, NoisyGdConfig, Schedule};
use mixdp_core::problems::{
    make_synthetic, GlmProblem, Link, ParamVector, RegularizedObjective, SyntheticSpec,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, LambdaChoice, ProblemSpec, FALLBACK_LAMBDA};
use crate::data::Datasets;
use crate::error::Result;
use crate::experiment::Stat;

const SOLVE_TOL: f64 = 1e-10;
const SOLVE_MAX_ITER: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RowStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundRow {
    pub check: String,
    pub seeds: usize,
    pub lhs_mean: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    /// `rhs − (mean + 2·SE)`; negative on failure.
    pub margin: f64,
    pub status: RowStatus,
    pub detail: String,
}

impl BoundRow {
    fn judge(check: &str, lhs: &[f64], rhs: f64, detail: String) -> Self {
        let s = Stat::of(lhs);
        let se = s.standard_error();
        let margin = rhs - (s.mean + 2.0 * se);
        Self {
            check: check.into(),
            seeds: lhs.len(),
            lhs_mean: s.mean,
            lhs_se: se,
            rhs,
            margin,
            status: if margin >= 0.0 {
                RowStatus::Pass
            } else {
                RowStatus::Fail
            },
            detail,
        }
    }

    fn skipped(check: &str, why: impl Into<String>) -> Self {
        Self {
            check: check.into(),
            seeds: 0,
            lhs_mean: f64::NAN,
            lhs_se: f64::NAN,
            rhs: f64::NAN,
            margin: f64::NAN,
            status: RowStatus::Skipped,
            detail: why.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<BoundRow>,
}

impl BoundReport {
    pub fn failures(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.status == RowStatus::Fail)
            .count()
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<22} {:>5} {:>13} {:>11} {:>13} {:>13}  {}\n",
            "check", "seeds", "lhs_mean", "lhs_se", "rhs", "margin", "status"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<22} {:>5} {:>13.5e} {:>11.3e} {:>13.5e} {:>13.5e}  {:?}  {}\n",
                r.check, r.seeds, r.lhs_mean, r.lhs_se, r.rhs, r.margin, r.status, r.detail
            ));
        }
        s
    }
}

fn lambda_of(cfg: &ExperimentConfig) -> f64 {
    match cfg.lambda {
        LambdaChoice::Value(l) if l > 0.0 => l,
        _ => FALLBACK_LAMBDA,
    }
}

/// Averaged NoisyGD (strongly convex schedule) regularized toward zero;
/// returns the objective gap of the averaged iterate.
fn averaged_gap(
    obj: &RegularizedObjective,
    f_star: f64,
    steps: usize,
    noise_std: f64,
    radius: f64,
    seed: u64,
) -> Result<f64> {
    let mut c = NoisyGdConfig::new(
        obj.clone(),
        Schedule::StronglyConvex { mu: obj.lambda() },
        steps,
        noise_std,
        radius,
    );
    c.rng = RngStream::new(seed, 1);
    let trace = noisy_gd(&c)?;
    Ok(obj.value(&trace.averaged)? - f_star)
}

fn strongly_convex_rows(
    cfg: &ExperimentConfig,
    train: &Arc<GlmProblem>,
    rows: &mut Vec<BoundRow>,
) -> Result<()> {
    let v = &cfg.verify;
    let lambda = lambda_of(cfg);
    let b = cfg.radius;
    let zero = ParamVector::zeros(train.dim());
    let obj = RegularizedObjective::new(train.clone(), lambda, zero)?;
    let f_star = solve_reference(&obj, b, SOLVE_TOL, SOLVE_MAX_ITER)?.value;
    let n = train.n() as f64;
    let l = train.lipschitz();
    let g = n * l + lambda * b;
    let t = v.steps as f64;

    if v.strongly_convex {
        let gap = averaged_gap(&obj, f_star, v.steps, 0.0, b, 0)?;
        let rhs = 2.0 * g * g / (lambda * (t + 1.0));
        rows.push(BoundRow::judge(
            "strongly_convex",
            &[gap],
            rhs,
            format!("sigma 0, T {}, lambda {lambda}", v.steps),
        ));
    }
    if v.noisy {
        let sigma = (t * l * l / (2.0 * v.rho)).sqrt();
        let gaps = cfg
            .seeds
            .par_iter()
            .map(|&s| averaged_gap(&obj, f_star, v.steps, sigma, b, s))
            .collect::<Result<Vec<_>>>()?;
        let rhs =
            2.0 * g * g / (lambda * t) + 2.0 * train.dim() as f64 * sigma * sigma / (lambda * t);
        rows.push(BoundRow::judge(
            "strongly_convex_noisy",
            &gaps,
            rhs,
            format!("rho {}, noise std {sigma:.4}, T {}", v.rho, v.steps),
        ));
    }
    Ok(())
}

fn one_pass_row(cfg: &ExperimentConfig) -> Result<BoundRow> {
    const NAME: &str = "one_pass_sgd";
    let ProblemSpec::Synthetic(s) = &cfg.problem else {
        return Ok(BoundRow::skipped(
            NAME,
            "needs a synthetic problem with a planted optimum",
        ));
    };
    if s.n_public == 0 {
        return Ok(BoundRow::skipped(NAME, "no public examples"));
    }
    let c = match (cfg.pop_strong_convexity, s.link) {
        (Some(c), _) => c,
        (None, Link::Squared) => 1.0 / s.d as f64,
        (None, _) => {
            return Ok(BoundRow::skipped(
                NAME,
                "population strong convexity unknown for this link; set pop_strong_convexity",
            ))
        }
    };
    // Each seed draws a fresh public sample; the bound is an expectation over data too.
    let draws = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let (p, w_star) = make_synthetic(&SyntheticSpec {
                n: s.n_public,
                d: s.d,
                link: s.link,
                margin: s.margin,
                noise: s.noise,
                radius: cfg.radius,
                seed: s.data_seed.wrapping_add(1).wrapping_add(seed),
            })?;
            let w = one_pass_sgd(&p, c, cfg.radius, &RngStream::new(seed, 0))?;
            Ok((w.distance(&w_star).powi(2), p.lipschitz()))
        })
        .collect::<Result<Vec<_>>>()?;
    let l = draws.iter().map(|d| d.1).fold(0.0, f64::max);
    let sq: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let rhs = 4.0 * l * l / (c * c * s.n_public as f64);
    Ok(BoundRow::judge(
        NAME,
        &sq,
        rhs,
        format!("c {c:.4}, N_pub {}", s.n_public),
    ))
}

/// With no data the objective is `λ/2‖w − w_ref‖²`, so the averaged iterate
/// should sit inside the ball predicted by the noise term of the bound.
fn noise_only_row(cfg: &ExperimentConfig, template: &GlmProblem) -> Result<BoundRow> {
    let v = &cfg.verify;
    let lambda = lambda_of(cfg);
    let b = cfg.radius;
    let empty = Arc::new(template.empty_like());
    let obj = RegularizedObjective::new(empty, lambda, ParamVector::zeros(template.dim()))?;
    let t = v.steps as f64;
    let sigma = cfg.sigma;
    let gaps = cfg
        .seeds
        .par_iter()
        .map(|&s| averaged_gap(&obj, 0.0, v.steps, sigma, b, s))
        .collect::<Result<Vec<_>>>()?;
    let rhs = 2.0 * lambda * b * b / t + 2.0 * template.dim() as f64 * sigma * sigma / (lambda * t);
    Ok(BoundRow::judge(
        "noise_only",
        &gaps,
        rhs,
        format!("no data, noise std {sigma}, lambda {lambda}, T {}", v.steps),
    ))
}

pub fn cmd_verify_bounds(cfg: &ExperimentConfig) -> Result<BoundReport> {
    cfg.validate()?;
    if cfg.seeds.len() < 20 {
        tracing::warn!(
            seeds = cfg.seeds.len(),
            "fewer than 20 seeds; standard errors will be rough"
        );
    }
    let data = Datasets::build(cfg)?;
    let train = Arc::new(data.union()?);
    let mut rows = Vec::new();
    if cfg.verify.strongly_convex || cfg.verify.noisy {
        strongly_convex_rows(cfg, &train, &mut rows)?;
    }
    if cfg.verify.one_pass {
        rows.push(one_pass_row(cfg)?);
    }
    if cfg.verify.noise_only {
        rows.push(noise_only_row(cfg, &train)?);
    }
    Ok(BoundReport {
        schema_version: 1,
        config_hash: cfg.hash(),
        seeds: cfg.seeds.clone(),
        rows,
    })
}
