//! Dataset construction from a config: synthetic draws or CSV files.

use std::path::Path;
use std::sync::Arc;

use mixdp_core::problems::{
    load_csv, make_synthetic, write_csv, GlmProblem, ParamVector, SyntheticSpec,
};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ProblemSpec};
use crate::error::{validation, Result};

/// Public, private and (optional) test splits of one experiment.
#[derive(Debug, Clone)]
pub struct Datasets {
    pub public: Arc<GlmProblem>,
    pub private: Arc<GlmProblem>,
    pub test: Option<GlmProblem>,
    /// Parameter that generated the labels, when known.
    pub planted: Option<ParamVector>,
}

impl Datasets {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        match &cfg.problem {
            ProblemSpec::Synthetic(s) => {
                let total = s.n_public + s.n_private + s.n_test;
                let (all, planted) = make_synthetic(&SyntheticSpec {
                    n: total,
                    d: s.d,
                    link: s.link,
                    margin: s.margin,
                    noise: s.noise,
                    radius: cfg.radius,
                    seed: s.data_seed,
                })?;
                let range = |a: usize, b: usize| all.subset(&(a..b).collect::<Vec<_>>());
                let public = range(0, s.n_public)?;
                let private = range(s.n_public, s.n_public + s.n_private)?;
                let test = if s.n_test > 0 {
                    Some(range(s.n_public + s.n_private, total)?)
                } else {
                    None
                };
                Ok(Self {
                    public: Arc::new(public),
                    private: Arc::new(private),
                    test,
                    planted: Some(planted),
                })
            }
            ProblemSpec::Csv(c) => {
                let private = load_csv(&c.private, c.link, cfg.radius)?;
                let public = match &c.public {
                    Some(p) => load_csv(p, c.link, cfg.radius)?,
                    None => private.empty_like(),
                };
                if public.n() > 0 && private.n() > 0 && public.features() != private.features() {
                    return Err(validation(
                        "public and private CSVs have different feature counts",
                    ));
                }
                let test = c
                    .test
                    .as_ref()
                    .map(|p| load_csv(p, c.link, cfg.radius))
                    .transpose()?;
                Ok(Self {
                    public: Arc::new(public),
                    private: Arc::new(private),
                    test,
                    planted: None,
                })
            }
        }
    }

    /// Private examples first, then public.
    pub fn union(&self) -> Result<GlmProblem> {
        Ok(self.private.concat(&self.public)?)
    }

    pub fn dim(&self) -> usize {
        self.private.dim().max(self.public.dim())
    }
}

/// Planted parameter file written next to generated CSVs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedFile {
    pub schema_version: u32,
    pub planted: ParamVector,
}

/// Writes `public.csv`, `private.csv`, `test.csv` (if any) and `planted.json`.
pub fn generate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    if !matches!(cfg.problem, ProblemSpec::Synthetic(_)) {
        return Err(validation("gen-data needs a synthetic problem"));
    }
    let data = Datasets::build(cfg)?;
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for (name, p) in [
        ("public.csv", Some(data.public.as_ref())),
        ("private.csv", Some(data.private.as_ref())),
        ("test.csv", data.test.as_ref()),
    ] {
        if let Some(p) = p {
            if p.n() > 0 {
                write_csv(p, &out.join(name))?;
                written.push(name.to_string());
            }
        }
    }
    if let Some(w) = data.planted {
        let file = PlantedFile {
            schema_version: 1,
            planted: w,
        };
        std::fs::write(
            out.join("planted.json"),
            serde_json::to_string_pretty(&file)?,
        )?;
        written.push("planted.json".into());
    }
    Ok(written)
}
