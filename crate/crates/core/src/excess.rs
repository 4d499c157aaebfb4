//! Threshold exceedances and their concomitant covariates.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Top-`k` excesses over the order statistic `Y_{n-k,n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessData {
    pub threshold: f64,
    /// `Y_{n-i+1,n} - Y_{n-k,n}` for `i = 1..k`, largest first.
    pub excesses: Vec<f64>,
    pub n: usize,
    pub k: usize,
    /// Row `i` is the covariate observed together with excess `i`.
    pub concomitants: Option<Vec<Vec<f64>>>,
}

impl ExcessData {
    /// Absolute exceedance levels `threshold + excess`.
    pub fn peaks(&self) -> Vec<f64> {
        self.excesses.iter().map(|e| self.threshold + e).collect()
    }

    pub fn dim(&self) -> Option<usize> {
        self.concomitants
            .as_ref()
            .and_then(|c| c.first().map(|r| r.len()))
    }
}

/// Check that every covariate lies in `[0, 1]` and rows share a dimension.
pub fn check_covariates(x: &[Vec<f64>]) -> Result<usize> {
    let d = x.first().map_or(0, |r| r.len());
    if d == 0 {
        return domain("covariate rows must have at least one column");
    }
    for (row, r) in x.iter().enumerate() {
        if r.len() != d {
            return domain(format!(
                "covariate row {row} has {} columns, expected {d}",
                r.len()
            ));
        }
        for (col, &value) in r.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::CovariateOutOfRange { row, col, value });
            }
        }
    }
    Ok(d)
}

/// Split a sample into threshold, excesses and concomitant covariates.
///
/// Ties are ordered by original index, so the pairing with covariates is
/// reproducible.
pub fn extract_excesses(y: &[f64], k: usize, x: Option<&[Vec<f64>]>) -> Result<ExcessData> {
    let n = y.len();
    if k < 1 || k >= n {
        return domain(format!("need 1 <= k < n, got k = {k}, n = {n}"));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return domain(format!("response {i} is not finite"));
    }
    if let Some(x) = x {
        if x.len() != n {
            return domain(format!(
                "covariate matrix has {} rows, response has {n}",
                x.len()
            ));
        }
        check_covariates(x)?;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));

    let threshold = y[order[n - k - 1]];
    let top: Vec<usize> = (1..=k).map(|i| order[n - i]).collect();
    let excesses = top.iter().map(|&j| y[j] - threshold).collect();
    let concomitants = x.map(|x| top.iter().map(|&j| x[j].clone()).collect());
    Ok(ExcessData {
        threshold,
        excesses,
        n,
        k,
        concomitants,
    })
}
