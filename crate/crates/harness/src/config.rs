//! Experiment configuration files.
//!
//! Configs are JSON documents; see the repository README for the schema. Every
//! field except `problem` and `algorithm` has a default.

use std::path::{Path, PathBuf};

use mixdp_core::optimizer::{Pretrain, Projection, Schedule};
use mixdp_core::problems::Link;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{validation, Result};

pub const CONFIG_VERSION: u32 = 1;

/// Which training procedure a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Regularized NoisyGD on the private set only.
    NoisyGd,
    AdamixTheoretical,
    AdamixPractical,
    /// One pass of SGD over the public set (no privacy cost).
    OnePassOnly,
    /// Non-private regularized solve on the public set.
    OnlyPublic,
    /// NoisyGD on public ∪ private, all treated as private.
    FullyPrivate,
    /// Non-private regularized solve on public ∪ private (the paragon).
    NonPrivate,
}

impl Algorithm {
    pub fn is_private(self) -> bool {
        !matches!(
            self,
            Algorithm::OnePassOnly | Algorithm::OnlyPublic | Algorithm::NonPrivate
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::NoisyGd => "noisy_gd",
            Algorithm::AdamixTheoretical => "adamix_theoretical",
            Algorithm::AdamixPractical => "adamix_practical",
            Algorithm::OnePassOnly => "one_pass_only",
            Algorithm::OnlyPublic => "only_public",
            Algorithm::FullyPrivate => "fully_private",
            Algorithm::NonPrivate => "non_private",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ProblemSpec {
    Synthetic(SyntheticProblem),
    Csv(CsvProblem),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticProblem {
    pub link: Link,
    pub d: usize,
    pub n_public: usize,
    pub n_private: usize,
    #[serde(default)]
    pub n_test: usize,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub data_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvProblem {
    pub link: Link,
    pub public: Option<PathBuf>,
    pub private: PathBuf,
    #[serde(default)]
    pub test: Option<PathBuf>,
}

/// Privacy target: an (ε, δ) pair or a zCDP budget ρ (δ used for reporting ε).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Privacy {
    Dp {
        epsilon: f64,
        delta: f64,
    },
    Rho {
        rho: f64,
        #[serde(default = "default_delta")]
        delta: f64,
    },
}

impl Privacy {
    pub fn delta(&self) -> f64 {
        match *self {
            Privacy::Dp { delta, .. } | Privacy::Rho { delta, .. } => delta,
        }
    }
}

impl Default for Privacy {
    fn default() -> Self {
        Privacy::Dp {
            epsilon: 1.0,
            delta: default_delta(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoKeyword {
    Auto,
}

/// λ as a number, or `"auto"` for the closed-form choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaChoice {
    Value(f64),
    Auto(AutoKeyword),
}

impl Default for LambdaChoice {
    fn default() -> Self {
        LambdaChoice::Value(FALLBACK_LAMBDA)
    }
}

pub const FALLBACK_LAMBDA: f64 = 1e-2;

/// Settings read by `verify-bounds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// T for the deterministic strongly convex check.
    #[serde(default = "default_verify_steps")]
    pub steps: usize,
    /// ρ for the noisy strongly convex and noise-only checks.
    #[serde(default = "default_verify_rho")]
    pub rho: f64,
    #[serde(default = "default_true")]
    pub strongly_convex: bool,
    #[serde(default = "default_true")]
    pub noisy: bool,
    #[serde(default = "default_true")]
    pub one_pass: bool,
    #[serde(default = "default_true")]
    pub noise_only: bool,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            steps: default_verify_steps(),
            rho: default_verify_rho(),
            strongly_convex: true,
            noisy: true,
            one_pass: true,
            noise_only: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub problem: ProblemSpec,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub privacy: Privacy,
    /// Noise multiplier: noise std is σ times the per-step sensitivity.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub lambda: LambdaChoice,
    /// Estimate of ‖w* − w_ref‖ for `lambda: "auto"` when no planted
    /// parameter is known.
    #[serde(default)]
    pub dist_estimate: Option<f64>,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Learning-rate schedule of the practical variant (default: constant 1/M).
    #[serde(default)]
    pub schedule: Option<Schedule>,
    #[serde(default = "default_quantile")]
    pub quantile: f64,
    #[serde(default = "default_projection")]
    pub projection: Projection,
    #[serde(default = "default_pretrain")]
    pub pretrain: Pretrain,
    /// Population strong convexity c for one-pass SGD (default 1/d).
    #[serde(default)]
    pub pop_strong_convexity: Option<f64>,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub verify: VerifySpec,
}

fn default_margin() -> f64 {
    2.0
}
fn default_delta() -> f64 {
    1e-5
}
fn default_sigma() -> f64 {
    20.0
}
fn default_radius() -> f64 {
    10.0
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_quantile() -> f64 {
    0.9
}
fn default_projection() -> Projection {
    Projection::Adaptive { rank: 1 }
}
fn default_pretrain() -> Pretrain {
    Pretrain::Converged
}
fn default_record_every() -> usize {
    10
}
fn default_verify_steps() -> usize {
    1000
}
fn default_verify_rho() -> f64 {
    0.125
}
fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    /// Reads and validates a config. Relative CSV paths resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| validation(format!("{}: {e}", path.display())))?;
        if let ProblemSpec::Csv(csv) = &mut cfg.problem {
            let base = path.parent().unwrap_or(Path::new("."));
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            fix(&mut csv.private);
            csv.public.as_mut().map(fix);
            csv.test.as_mut().map(fix);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(validation(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.seeds.is_empty() {
            return Err(validation("seeds must be nonempty"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(validation("sigma must be finite and > 0"));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(validation("radius must be finite and > 0"));
        }
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return Err(validation("quantile must lie in (0, 1]"));
        }
        match self.privacy {
            Privacy::Dp { epsilon, delta } => {
                if !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) {
                    return Err(validation("privacy needs epsilon > 0 and delta in (0, 1)"));
                }
            }
            Privacy::Rho { rho, delta } => {
                if !(rho > 0.0) || !rho.is_finite() || !(delta > 0.0 && delta < 1.0) {
                    return Err(validation("privacy needs rho > 0 and delta in (0, 1)"));
                }
            }
        }
        if let LambdaChoice::Value(l) = self.lambda {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(validation("lambda must be finite and >= 0"));
            }
            if l == 0.0
                && matches!(
                    self.algorithm,
                    Algorithm::NoisyGd | Algorithm::FullyPrivate | Algorithm::AdamixTheoretical
                )
            {
                return Err(validation(format!(
                    "{} uses the strongly convex schedule and needs lambda > 0",
                    self.algorithm.name()
                )));
            }
        }
        if let Some(c) = self.pop_strong_convexity {
            if !(c > 0.0) {
                return Err(validation("pop_strong_convexity must be > 0"));
            }
        }
        if let Some(d) = self.dist_estimate {
            if !(d > 0.0) {
                return Err(validation("dist_estimate must be > 0"));
            }
        }
        match &self.problem {
            ProblemSpec::Synthetic(s) => {
                if s.d == 0 {
                    return Err(validation("synthetic problem needs d >= 1"));
                }
                if s.n_public + s.n_private == 0 {
                    return Err(validation("synthetic problem has no training data"));
                }
            }
            ProblemSpec::Csv(c) => {
                if c.public.is_none()
                    && matches!(
                        self.algorithm,
                        Algorithm::AdamixPractical | Algorithm::OnePassOnly | Algorithm::OnlyPublic
                    )
                {
                    return Err(validation(format!(
                        "{} needs a public dataset",
                        self.algorithm.name()
                    )));
                }
            }
        }
        let needs_public = matches!(
            self.algorithm,
            Algorithm::AdamixPractical | Algorithm::OnePassOnly | Algorithm::OnlyPublic
        );
        if let ProblemSpec::Synthetic(s) = &self.problem {
            if needs_public && s.n_public == 0 {
                return Err(validation(format!(
                    "{} needs n_public >= 1",
                    self.algorithm.name()
                )));
            }
            if self.algorithm == Algorithm::NoisyGd && s.n_private == 0 {
                return Err(validation("noisy_gd needs n_private >= 1"));
            }
        }
        Ok(())
    }

    pub fn link(&self) -> Link {
        match &self.problem {
            ProblemSpec::Synthetic(s) => s.link,
            ProblemSpec::Csv(c) => c.link,
        }
    }

    /// SHA-256 of the canonical JSON serialization, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses `--seed-list` values such as `0,1,2` or `0..20`.
pub fn parse_seed_list(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a
            .trim()
            .parse()
            .map_err(|_| validation(format!("bad seed range {s}")))?;
        let b: u64 = b
            .trim()
            .parse()
            .map_err(|_| validation(format!("bad seed range {s}")))?;
        if b <= a {
            return Err(validation(format!("empty seed range {s}")));
        }
        return Ok((a..b).collect());
    }
    let seeds = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| validation(format!("bad seed {t}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(validation("seed list is empty"));
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"version": 1,
            "problem": {"source": "synthetic", "link": {"kind": "logistic"}, "d": 5, "n_public": 10, "n_private": 90},
            "algorithm": "adamix_practical"}"#
    }

    #[test]
    fn defaults_fill_in() {
        let cfg: ExperimentConfig = serde_json::from_str(minimal()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.sigma, 20.0);
        assert_eq!(cfg.privacy.delta(), 1e-5);
        assert_eq!(cfg.lambda, LambdaChoice::Value(1e-2));
        assert_eq!(cfg.quantile, 0.9);
        assert_eq!(cfg.seeds, vec![0]);
    }

    #[test]
    fn lambda_auto_and_rho_privacy_parse() {
        let text = minimal().replace(
            r#""algorithm": "adamix_practical""#,
            r#""algorithm": "noisy_gd", "lambda": "auto", "privacy": {"rho": 0.5}"#,
        );
        let cfg: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg.lambda, LambdaChoice::Auto(AutoKeyword::Auto));
        assert_eq!(
            cfg.privacy,
            Privacy::Rho {
                rho: 0.5,
                delta: 1e-5
            }
        );
    }

    #[test]
    fn rejects_bad_versions_and_fields() {
        let text = minimal().replace(r#""version": 1"#, r#""version": 2"#);
        let cfg: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert!(cfg.validate().is_err());
        let text = minimal().replace(r#""version": 1,"#, r#""version": 1, "bogus": 3,"#);
        assert!(serde_json::from_str::<ExperimentConfig>(&text).is_err());
    }

    #[test]
    fn zero_lambda_rejected_for_strongly_convex_algorithms() {
        let text = minimal().replace(
            r#""adamix_practical""#,
            r#""adamix_theoretical", "lambda": 0.0"#,
        );
        let cfg: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a: ExperimentConfig = serde_json::from_str(minimal()).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seeds = vec![1];
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seed_list("0,1, 5").unwrap(), vec![0, 1, 5]);
        assert_eq!(parse_seed_list("3..6").unwrap(), vec![3, 4, 5]);
        assert!(parse_seed_list("").is_err());
        assert!(parse_seed_list("a").is_err());
    }
}
