//! Conditional tail objects under the proportional-tail model: extreme
//! conditional quantiles and the conditional predictive distribution, both
//! built from GP parameter draws paired with scedasis draws.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::gpd::{unit_quantile_tail, GpdParams};
use crate::posterior::{PredictiveComponent, PredictiveDistribution};

/// GP draws paired by index with independent draws of `c(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDraws {
    pub theta_draws: Vec<GpdParams>,
    pub c_draws: Vec<f64>,
    pub threshold: f64,
    pub n: usize,
    pub k: usize,
    pub x: Vec<f64>,
}

impl ConditionalDraws {
    /// Pair the two draw sets, truncating to the shorter one.
    pub fn new(
        theta_draws: &[GpdParams],
        c_draws: &[f64],
        threshold: f64,
        n: usize,
        k: usize,
        x: Vec<f64>,
    ) -> Result<Self> {
        let len = theta_draws.len().min(c_draws.len());
        if len == 0 {
            return domain("conditional draws need at least one pair");
        }
        if k == 0 || k >= n {
            return domain(format!("need 1 <= k < n, got k = {k}, n = {n}"));
        }
        if let Some(c) = c_draws[..len].iter().find(|c| !(**c > 0.0) || !c.is_finite()) {
            return domain(format!("scedasis draws must be positive and finite, got {c}"));
        }
        Ok(ConditionalDraws {
            theta_draws: theta_draws[..len].to_vec(),
            c_draws: c_draws[..len].to_vec(),
            threshold,
            n,
            k,
            x,
        })
    }

    pub fn len(&self) -> usize {
        self.c_draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c_draws.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalQuantiles {
    pub values: Vec<f64>,
    /// Pairs with `np/(kc) >= 1`, left out of `values`.
    pub dropped: usize,
}

impl ConditionalQuantiles {
    pub fn dropped_fraction(&self) -> f64 {
        self.dropped as f64 / (self.dropped + self.values.len()) as f64
    }
}

/// Per-pair `Y_{n-k,n} + σ((kc/(np))^γ - 1)/γ`.
pub fn conditional_quantile_draws(cd: &ConditionalDraws, p: f64) -> Result<ConditionalQuantiles> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("p must lie in (0, 1), got {p}"));
    }
    let ratio = cd.k as f64 / cd.n as f64;
    let mut values = Vec::with_capacity(cd.len());
    let mut dropped = 0;
    for (t, &c) in cd.theta_draws.iter().zip(&cd.c_draws) {
        let log_t = (ratio * c / p).ln();
        if log_t > 0.0 {
            values.push(cd.threshold + t.sigma * unit_quantile_tail(t.gamma, log_t));
        } else {
            dropped += 1;
        }
    }
    if values.is_empty() {
        return domain(format!(
            "np/(kc) >= 1 for every draw at p = {p}; the level is not extreme enough"
        ));
    }
    Ok(ConditionalQuantiles { values, dropped })
}

/// `(1 - c^{-γ})/γ`, with limit `log c` at `γ = 0`.
fn shift(gamma: f64, c: f64) -> f64 {
    let lc = c.ln();
    let a = gamma * lc;
    if a.abs() < 1e-8 {
        lc * (1.0 - 0.5 * a)
    } else {
        -(-a).exp_m1() / gamma
    }
}

/// Predictive CDF at `x`: mixture of `H_γ(V)` with
/// `V = (y - Y_{n-k,n})/(σ c^γ) - (1 - c^{-γ})/γ`, zero where `V ≤ 0`.
pub fn conditional_predictive_cdf(cd: &ConditionalDraws) -> Result<PredictiveDistribution> {
    let comps = cd
        .theta_draws
        .iter()
        .zip(&cd.c_draws)
        .map(|(t, &c)| PredictiveComponent {
            gamma: t.gamma,
            scale: t.sigma * c.powf(t.gamma),
            shift: shift(t.gamma, c),
        })
        .collect();
    PredictiveDistribution::from_components(cd.threshold, comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excess::ExcessData;
    use crate::posterior::{extreme_quantile_draws, predictive_from_draws};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn th(g: f64, s: f64) -> GpdParams {
        GpdParams::new(g, s).unwrap()
    }

    fn draws(seed: u64, m: usize) -> Vec<GpdParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| th(rng.gen_range(-0.4..1.5), rng.gen_range(0.2..3.0)))
            .collect()
    }

    #[test]
    fn arithmetic_example() {
        let cd = ConditionalDraws::new(&[th(1.0, 1.0)], &[2.0], 2.0, 1000, 100, vec![0.5]).unwrap();
        let q = conditional_quantile_draws(&cd, 0.001).unwrap();
        assert!((q.values[0] - 201.0).abs() < 1e-9);
    }

    #[test]
    fn unit_scedasis_reduces_exactly() {
        let ds = draws(1, 500);
        let cd = ConditionalDraws::new(&ds, &vec![1.0; 500], 3.0, 2000, 100, vec![0.3]).unwrap();
        let data = ExcessData {
            threshold: 3.0,
            excesses: vec![],
            n: 2000,
            k: 100,
            concomitants: None,
        };
        let q = conditional_quantile_draws(&cd, 0.001).unwrap();
        assert_eq!(q.values, extreme_quantile_draws(&ds, &data, 0.001).unwrap());
        let cp = conditional_predictive_cdf(&cd).unwrap();
        let up = predictive_from_draws(&ds, 3.0).unwrap();
        for i in 0..200 {
            let y = 3.0 + 0.1 * i as f64;
            assert_eq!(cp.cdf(y), up.cdf(y));
        }
    }

    #[test]
    fn zero_shape_limit_example() {
        let e = std::f64::consts::E;
        let cd = ConditionalDraws::new(&[th(0.0, 1.0)], &[e], 1.0, 100, 10, vec![0.5]).unwrap();
        let f = conditional_predictive_cdf(&cd).unwrap().cdf(3.0);
        assert!((f - (1.0 - (-1f64).exp())).abs() < 1e-15);
        // below V = 0 the component contributes nothing
        assert_eq!(conditional_predictive_cdf(&cd).unwrap().cdf(1.5), 0.0);
    }

    #[test]
    fn precondition_violations_are_dropped() {
        let cd = ConditionalDraws::new(
            &[th(0.2, 1.0), th(0.2, 1.0), th(0.2, 1.0)],
            &[1.0, 0.001, 2.0],
            0.0,
            1000,
            10,
            vec![0.5],
        )
        .unwrap();
        // np/(kc) = 0.1 / c: the second draw violates
        let q = conditional_quantile_draws(&cd, 0.001).unwrap();
        assert_eq!((q.values.len(), q.dropped), (2, 1));
        assert!(conditional_quantile_draws(&cd, 0.5).is_err());
    }

    #[test]
    fn pairing_truncates_to_shorter() {
        let cd = ConditionalDraws::new(&draws(2, 10), &[1.0; 7], 0.0, 100, 10, vec![0.1]).unwrap();
        assert_eq!(cd.len(), 7);
        assert!(ConditionalDraws::new(&draws(2, 3), &[1.0, -1.0, 1.0], 0.0, 100, 10, vec![]).is_err());
    }

    #[test]
    fn conditional_predictive_is_monotone() {
        let ds = draws(4, 300);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cs: Vec<f64> = (0..300).map(|_| rng.gen_range(0.3..3.0)).collect();
        let cd = ConditionalDraws::new(&ds, &cs, 1.0, 1000, 50, vec![0.5]).unwrap();
        let pred = conditional_predictive_cdf(&cd).unwrap();
        let mut prev = 0.0;
        for i in 0..1000 {
            let f = pred.cdf(1.0 + 0.03 * i as f64);
            assert!(f >= prev && f <= 1.0);
            prev = f;
        }
    }

    proptest! {
        #[test]
        fn quantile_increases_with_c(
            g in 0.01f64..2.0, s in 0.1f64..5.0, c1 in 0.5f64..3.0, dc in 0.0f64..3.0,
        ) {
            let q = |c: f64| {
                let cd = ConditionalDraws::new(&[th(g, s)], &[c], 0.0, 1000, 100, vec![]).unwrap();
                conditional_quantile_draws(&cd, 0.001).unwrap().values[0]
            };
            prop_assert!(q(c1 + dc) >= q(c1));
        }
    }
}
