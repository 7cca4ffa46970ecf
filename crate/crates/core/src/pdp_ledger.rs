//! Per-instance privacy ledger.
//!
//! Each step of a Gaussian mechanism contributes, for every private example,
//! its own sensitivity divided by the noise std. Squared contributions add up
//! across steps, so example i ends with a GDP parameter μᵢ = √(Σₜ cᵢₜ²) that
//! can never exceed the data-independent worst case.

use serde::{Deserialize, Serialize};

use crate::accountant::{epsilon_of_mu, GdpParam};
use crate::error::{invalid, Error, Result};
use crate::numerics::quantile_nearest_rank;
use crate::optimizer::OptTrace;

/// Slack allowed when comparing an example's μ with the worst case.
pub const WORST_CASE_SLACK: f64 = 1e-12;

/// Accumulates squared per-example contributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpLedger {
    per_example_sq: Vec<f64>,
    worst_sq: f64,
    steps: usize,
}

impl PdpLedger {
    pub fn new(n: usize) -> Self {
        Self {
            per_example_sq: vec![0.0; n],
            worst_sq: 0.0,
            steps: 0,
        }
    }

    /// Ledger filled from every recorded step of a trace.
    pub fn from_trace(n: usize, trace: &OptTrace) -> Result<Self> {
        if trace.contributions.len() != trace.worst_case.len() {
            return Err(Error::Accounting(
                "trace has mismatched contribution and worst-case records".into(),
            ));
        }
        let mut ledger = Self::new(n);
        for (c, &w) in trace.contributions.iter().zip(&trace.worst_case) {
            ledger.record_step(c, w)?;
        }
        Ok(ledger)
    }

    pub fn len(&self) -> usize {
        self.per_example_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_example_sq.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Adds one step. Every contribution must be finite, non-negative and at
    /// most `worst_case` (up to [`WORST_CASE_SLACK`]).
    pub fn record_step(&mut self, contributions: &[f64], worst_case: f64) -> Result<()> {
        if contributions.len() != self.per_example_sq.len() {
            return Err(Error::DimensionMismatch {
                expected: self.per_example_sq.len(),
                actual: contributions.len(),
            });
        }
        if !(worst_case >= 0.0) || !worst_case.is_finite() {
            return Err(invalid("worst-case contribution must be finite and >= 0"));
        }
        for (i, &c) in contributions.iter().enumerate() {
            if !(c >= 0.0) || !c.is_finite() {
                return Err(Error::Accounting(format!(
                    "example {i} has contribution {c}"
                )));
            }
            if c > worst_case + WORST_CASE_SLACK {
                return Err(Error::Accounting(format!(
                    "example {i} contributes {c} above the worst case {worst_case} at step {}",
                    self.steps + 1
                )));
            }
        }
        for (acc, &c) in self.per_example_sq.iter_mut().zip(contributions) {
            *acc += c * c;
        }
        self.worst_sq += worst_case * worst_case;
        self.steps += 1;
        Ok(())
    }

    pub fn per_example_mu(&self) -> Vec<f64> {
        self.per_example_sq.iter().map(|s| s.sqrt()).collect()
    }

    pub fn worst_case_mu(&self) -> f64 {
        self.worst_sq.sqrt()
    }

    /// ε of each example at the given δ; 0 when ε = 0 already meets δ.
    pub fn per_example_epsilon(&self, delta: f64) -> Result<Vec<f64>> {
        self.per_example_mu()
            .into_iter()
            .map(|mu| mu_to_epsilon(mu, delta))
            .collect()
    }

    /// Checks max μᵢ ≤ worst case + slack.
    pub fn check(&self) -> Result<()> {
        let worst = self.worst_case_mu();
        match self
            .per_example_mu()
            .into_iter()
            .enumerate()
            .find(|(_, m)| *m > worst + WORST_CASE_SLACK)
        {
            Some((i, m)) => Err(Error::Accounting(format!(
                "example {i} has mu {m} above the worst case {worst}"
            ))),
            None => Ok(()),
        }
    }

    pub fn summary(&self, delta: f64) -> Result<PdpSummary> {
        let mus = self.per_example_mu();
        let eps = self.per_example_epsilon(delta)?;
        Ok(PdpSummary {
            schema_version: 1,
            examples: mus.len(),
            steps: self.steps,
            delta,
            worst_case_mu: self.worst_case_mu(),
            worst_case_epsilon: mu_to_epsilon(self.worst_case_mu(), delta)?,
            mu: Distribution::of(&mus)?,
            epsilon: Distribution::of(&eps)?,
        })
    }

    /// CSV with columns `example_index,mu,epsilon_at_delta`.
    pub fn write_csv<W: std::io::Write>(&self, out: W, delta: f64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Dataset(e.to_string());
        w.write_record(["example_index", "mu", "epsilon_at_delta"])
            .map_err(io)?;
        for (i, (mu, eps)) in self
            .per_example_mu()
            .into_iter()
            .zip(self.per_example_epsilon(delta)?)
            .enumerate()
        {
            w.write_record([i.to_string(), mu.to_string(), eps.to_string()])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Dataset(e.to_string()))
    }

    /// Histogram of μᵢ over `bins` equal-width bins on [0, worst case].
    pub fn histogram(&self, bins: usize) -> Result<Vec<HistogramBin>> {
        if bins == 0 {
            return Err(invalid("histogram needs at least one bin"));
        }
        let hi = self.worst_case_mu().max(f64::MIN_POSITIVE);
        let width = hi / bins as f64;
        let mut out: Vec<HistogramBin> = (0..bins)
            .map(|b| HistogramBin {
                lo: b as f64 * width,
                hi: (b + 1) as f64 * width,
                count: 0,
            })
            .collect();
        for mu in self.per_example_mu() {
            let b = ((mu / width) as usize).min(bins - 1);
            out[b].count += 1;
        }
        Ok(out)
    }
}

fn mu_to_epsilon(mu: f64, delta: f64) -> Result<f64> {
    match epsilon_of_mu(GdpParam::new(mu)?, delta) {
        Ok(e) => Ok(e),
        Err(Error::EpsilonZeroSuffices { .. }) => Ok(0.0),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Min, median, max and deciles of a set of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub min: f64,
    pub median: f64,
    pub max: f64,
    /// 10th, 20th, ..., 90th percentiles (nearest rank).
    pub deciles: Vec<f64>,
}

impl Distribution {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Ok(Self {
                min: 0.0,
                median: 0.0,
                max: 0.0,
                deciles: Vec::new(),
            });
        }
        let deciles = (1..10)
            .map(|k| quantile_nearest_rank(values, k as f64 / 10.0))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            median: quantile_nearest_rank(values, 0.5)?,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            deciles,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpSummary {
    pub schema_version: u32,
    pub examples: usize,
    pub steps: usize,
    pub delta: f64,
    pub worst_case_mu: f64,
    pub worst_case_epsilon: f64,
    pub mu: Distribution,
    pub epsilon: Distribution,
}
