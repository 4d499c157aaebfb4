use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub cell: String,
    pub metric: String,
    pub value: f64,
    /// Monte Carlo standard error, when one applies.
    pub mc_se: Option<f64>,
}

/// One row per (cell, metric), plus a free-form summary and the resolved
/// config that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub replications: usize,
    pub config: serde_json::Value,
    pub rows: Vec<ReportRow>,
    pub summary: BTreeMap<String, serde_json::Value>,
}

impl ExperimentReport {
    pub(crate) fn new<C: Serialize>(experiment: &str, seed: u64, replications: usize, config: &C) -> Self {
        ExperimentReport {
            experiment: experiment.to_string(),
            seed,
            replications,
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            rows: Vec::new(),
            summary: BTreeMap::new(),
        }
    }

    pub(crate) fn push(&mut self, cell: impl Into<String>, metric: &str, value: f64, mc_se: Option<f64>) {
        self.rows.push(ReportRow {
            cell: cell.into(),
            metric: metric.to_string(),
            value,
            mc_se,
        });
    }

    pub fn value(&self, cell: &str, metric: &str) -> Option<f64> {
        self.row(cell, metric).map(|r| r.value)
    }

    pub fn row(&self, cell: &str, metric: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.cell == cell && r.metric == metric)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("experiment,cell,metric,value,mc_se\n");
        for r in &self.rows {
            let se = r.mc_se.map(|v| v.to_string()).unwrap_or_default();
            writeln!(s, "{},{},{},{},{}", self.experiment, r.cell, r.metric, r.value, se).unwrap();
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Write `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let io = |e: std::io::Error| crate::Error::Domain(format!("writing report: {e}"));
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv()).map_err(io)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json()).map_err(io)?;
        Ok(())
    }
}

/// Binomial standard error of a proportion over `r` trials.
pub(crate) fn binomial_se(p: f64, r: usize) -> f64 {
    (p * (1.0 - p) / r as f64).sqrt()
}

pub(crate) fn check_reps(r: usize, min: usize) -> Result<()> {
    if r < min {
        return domain(format!("need at least {min} replications, got {r}"));
    }
    Ok(())
}
