//! `sweep`: repeat a run along one axis and tabulate the Performance Boost.

use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, ExperimentConfig, Privacy, ProblemSpec};
use crate::error::{validation, HarnessError, Result};
use crate::experiment::{Experiment, RunReport, Stat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    Epsilon,
    NPublic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub kind: AxisKind,
    pub values: Vec<f64>,
}

impl FromStr for Axis {
    type Err = HarnessError;

    /// `epsilon=0.5,1,2` or `n_public=10,100`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, list) = s
            .split_once('=')
            .ok_or_else(|| validation(format!("axis must look like name=v1,v2,...; got {s}")))?;
        let kind = match name.trim() {
            "epsilon" => AxisKind::Epsilon,
            "n_public" => AxisKind::NPublic,
            other => {
                return Err(validation(format!(
                    "unknown sweep axis {other} (epsilon or n_public)"
                )))
            }
        };
        let values = list
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| validation(format!("bad axis value {t}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(validation("sweep axis is empty"));
        }
        for &v in &values {
            let ok = match kind {
                AxisKind::Epsilon => v > 0.0 && v.is_finite(),
                AxisKind::NPublic => v >= 0.0 && v.fract() == 0.0,
            };
            if !ok {
                return Err(validation(format!("invalid {name} value {v}")));
            }
        }
        Ok(Self { kind, values })
    }
}

/// `(err_public − err_paragon) / (err_DP − err_paragon)`.
pub fn performance_boost(err_public: f64, err_paragon: f64, err_dp: f64) -> f64 {
    (err_public - err_paragon) / (err_dp - err_paragon)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: AxisKind,
    pub value: f64,
    pub metric: &'static str,
    pub algorithm: Algorithm,
    pub ok_seeds: usize,
    pub mean: f64,
    pub std: f64,
    pub err_public: f64,
    pub err_paragon: f64,
    pub performance_boost: f64,
    pub status: String,
}

fn apply(cfg: &ExperimentConfig, axis: AxisKind, value: f64) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    match axis {
        AxisKind::Epsilon => {
            c.privacy = Privacy::Dp {
                epsilon: value,
                delta: cfg.privacy.delta(),
            }
        }
        AxisKind::NPublic => match &mut c.problem {
            ProblemSpec::Synthetic(s) => s.n_public = value as usize,
            ProblemSpec::Csv(_) => {
                return Err(validation("n_public sweeps need a synthetic problem"))
            }
        },
    }
    Ok(c)
}

/// Test error when a test split exists, else excess empirical risk.
fn metric(report: &RunReport) -> (&'static str, Stat) {
    match &report.aggregate.test_error {
        Some(s) => ("test_error", s.clone()),
        None => (
            "excess_empirical_risk",
            report.aggregate.excess_empirical_risk.clone(),
        ),
    }
}

fn run_report(cfg: ExperimentConfig) -> Result<RunReport> {
    let seeds = cfg.seeds.clone();
    let exp = Experiment::prepare(cfg)?;
    let runs = exp.run_seeds(&seeds);
    Ok(exp.report(&seeds, &runs))
}

fn baseline_error(cfg: &ExperimentConfig, algorithm: Algorithm) -> f64 {
    let mut c = cfg.clone();
    c.algorithm = algorithm;
    c.seeds.truncate(1);
    match run_report(c) {
        Ok(r) if r.aggregate.ok_seeds > 0 => metric(&r).1.mean,
        Ok(_) => f64::NAN,
        Err(e) => {
            tracing::warn!(algorithm = algorithm.name(), error = %e, "baseline failed");
            f64::NAN
        }
    }
}

fn sweep_point(cfg: &ExperimentConfig, axis: AxisKind, value: f64) -> SweepRow {
    let err_public = baseline_error(cfg, Algorithm::OnlyPublic);
    let err_paragon = baseline_error(cfg, Algorithm::NonPrivate);
    let mut row = SweepRow {
        axis,
        value,
        metric: "excess_empirical_risk",
        algorithm: cfg.algorithm,
        ok_seeds: 0,
        mean: f64::NAN,
        std: f64::NAN,
        err_public,
        err_paragon,
        performance_boost: f64::NAN,
        status: "ok".into(),
    };
    match run_report(cfg.clone()) {
        Ok(r) => {
            let (name, stat) = metric(&r);
            row.metric = name;
            row.ok_seeds = r.aggregate.ok_seeds;
            row.mean = stat.mean;
            row.std = stat.std;
            row.performance_boost = performance_boost(err_public, err_paragon, stat.mean);
            if r.aggregate.ok_seeds < r.seeds.len() {
                row.status = format!(
                    "{} of {} seeds failed",
                    r.seeds.len() - r.aggregate.ok_seeds,
                    r.seeds.len()
                );
            }
        }
        Err(e) => row.status = format!("error: {e}"),
    }
    row
}

/// Runs every axis point (in parallel) and writes `sweep.csv` to `out`.
pub fn cmd_sweep(cfg: &ExperimentConfig, axis: &Axis, out: Option<&Path>) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if cfg.seeds.len() < 20 {
        tracing::warn!(
            seeds = cfg.seeds.len(),
            "performance boost is noisy with fewer than 20 seeds"
        );
    }
    let configs = axis
        .values
        .iter()
        .map(|&v| apply(cfg, axis.kind, v))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<SweepRow> = configs
        .par_iter()
        .zip(axis.values.par_iter())
        .map(|(c, &v)| sweep_point(c, axis.kind, v))
        .collect();
    if let Some(out) = out {
        std::fs::create_dir_all(out)?;
        write_csv(&rows, &out.join("sweep.csv"))?;
    }
    Ok(rows)
}

pub fn write_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let to_err = |e: csv::Error| validation(format!("csv: {e}"));
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record([
        "axis",
        "value",
        "metric",
        "algorithm",
        "ok_seeds",
        "mean",
        "std",
        "err_public",
        "err_paragon",
        "performance_boost",
        "status",
    ])
    .map_err(to_err)?;
    for r in rows {
        let axis = match r.axis {
            AxisKind::Epsilon => "epsilon",
            AxisKind::NPublic => "n_public",
        };
        w.write_record(&[
            axis.to_string(),
            r.value.to_string(),
            r.metric.to_string(),
            r.algorithm.name().to_string(),
            r.ok_seeds.to_string(),
            format!("{:e}", r.mean),
            format!("{:e}", r.std),
            format!("{:e}", r.err_public),
            format!("{:e}", r.err_paragon),
            format!("{:e}", r.performance_boost),
            r.status.clone(),
        ])
        .map_err(to_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boost_is_one_when_dp_matches_public() {
        assert_eq!(performance_boost(0.3, 0.1, 0.3), 1.0);
        assert!(performance_boost(0.3, 0.1, 0.2) > 1.0);
    }

    #[test]
    fn axis_parsing() {
        let a: Axis = "epsilon=0.5, 1,2".parse().unwrap();
        assert_eq!(a.kind, AxisKind::Epsilon);
        assert_eq!(a.values, vec![0.5, 1.0, 2.0]);
        assert!("n_public=1.5".parse::<Axis>().is_err());
        assert!("sigma=1".parse::<Axis>().is_err());
        assert!("epsilon=".parse::<Axis>().is_err());
    }
}
