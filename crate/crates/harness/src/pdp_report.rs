//! `pdp-report`: sorted per-example ε profiles from the ledgers of a run.

use std::fs;
use std::path::{Path, PathBuf};

use mixdp_core::pdp_ledger::PdpSummary;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::experiment::{LedgerFile, LEDGER_VERSION};

pub const SORTED_CSV: &str = "pdp_sorted.csv";
pub const SUMMARY_JSON: &str = "pdp_summary.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedProfile {
    pub seed: u64,
    pub summary: PdpSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdpReport {
    pub schema_version: u32,
    pub delta: f64,
    pub seeds: Vec<SeedProfile>,
}

fn ledger_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let direct = dir.join("pdp_ledger.json");
    if direct.is_file() {
        return Ok(vec![direct]);
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("seed-"))
        })
        .map(|p| p.join("pdp_ledger.json"))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    Ok(paths)
}

/// Reads every ledger under `dir`, writes `pdp_sorted.csv` (ε ascending per
/// seed, with the worst-case ε on each row) and `pdp_summary.json` into `out`.
pub fn cmd_pdp_report(dir: &Path, delta: f64, out: &Path) -> Result<PdpReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(validation("delta must lie in (0, 1)"));
    }
    let paths = ledger_paths(dir)?;
    if paths.is_empty() {
        return Err(validation(format!(
            "no per-example contributions under {} (expected seed-*/pdp_ledger.json)",
            dir.display()
        )));
    }
    fs::create_dir_all(out)?;
    let mut csv = csv::Writer::from_path(out.join(SORTED_CSV)).map_err(csv_err)?;
    csv.write_record([
        "seed",
        "rank",
        "example_index",
        "mu",
        "epsilon",
        "worst_case_epsilon",
    ])
    .map_err(csv_err)?;
    let mut seeds = Vec::new();
    for path in paths {
        let file: LedgerFile = serde_json::from_str(&fs::read_to_string(&path)?)?;
        if file.schema_version != LEDGER_VERSION {
            return Err(validation(format!(
                "{}: unsupported ledger version {}",
                path.display(),
                file.schema_version
            )));
        }
        let ledger = &file.ledger;
        if ledger.steps() == 0 {
            return Err(validation(format!(
                "{}: ledger recorded no steps",
                path.display()
            )));
        }
        ledger.check()?;
        let mu = ledger.per_example_mu();
        let eps = ledger.per_example_epsilon(delta)?;
        let summary = ledger.summary(delta)?;
        let mut order: Vec<usize> = (0..eps.len()).collect();
        order.sort_by(|&a, &b| eps[a].total_cmp(&eps[b]).then(a.cmp(&b)));
        for (rank, &i) in order.iter().enumerate() {
            csv.write_record(&[
                file.seed.to_string(),
                rank.to_string(),
                i.to_string(),
                format!("{:e}", mu[i]),
                format!("{:e}", eps[i]),
                format!("{:e}", summary.worst_case_epsilon),
            ])
            .map_err(csv_err)?;
        }
        seeds.push(SeedProfile {
            seed: file.seed,
            summary,
        });
    }
    csv.flush()?;
    let report = PdpReport {
        schema_version: 1,
        delta,
        seeds,
    };
    fs::write(
        out.join(SUMMARY_JSON),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(report)
}

fn csv_err(e: csv::Error) -> crate::error::HarnessError {
    validation(format!("csv: {e}"))
}
