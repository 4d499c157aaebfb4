//! Adaptive random-walk Metropolis–Hastings on `(γ, log σ)`.
//!
//! During burn-in the proposal covariance is re-estimated from the chain
//! every `adapt_window` steps and a global log-scale is tuned by
//! Robbins–Monro toward the target acceptance rate. Both are frozen after
//! burn-in, so the retained draws come from a fixed Markov kernel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gpd::{fisher_info, fit_mle, loglik_raw, pwm_estimate, GpdParams};
use crate::priors::{log_prior, PriorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    /// Total chain length, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub target_acceptance: f64,
    pub seed: u64,
    pub init: Option<GpdParams>,
    pub adapt_window: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            iterations: 25_000,
            burn_in: 5_000,
            target_acceptance: 0.234,
            seed: 0,
            init: None,
            adapt_window: 200,
        }
    }
}

impl McmcConfig {
    pub fn with_seed(seed: u64) -> Self {
        McmcConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return domain(format!(
                "burn_in ({}) must be below iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return domain("target acceptance must lie in (0, 1)");
        }
        if self.adapt_window < 2 {
            return domain("adapt_window must be at least 2");
        }
        Ok(())
    }
}

/// Retained draws of a single chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub draws: Vec<GpdParams>,
    /// Acceptance rate after burn-in.
    pub acceptance_rate: f64,
    /// Effective sample size for `γ` and `σ`.
    pub ess: [f64; 2],
    pub seed: u64,
    pub log_post_trace: Vec<f64>,
    /// Proposal covariance in `(γ, log σ)` at the end of burn-in, scale included.
    pub proposal_cov: [[f64; 2]; 2],
}

impl PosteriorDraws {
    pub fn gammas(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.gamma).collect()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.sigma).collect()
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Every `step`-th draw, starting with the first.
    pub fn thinned(&self, step: usize) -> Vec<GpdParams> {
        self.draws.iter().step_by(step.max(1)).copied().collect()
    }
}

fn cholesky2(m: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    if !(m[0][0] > 0.0) {
        return None;
    }
    let l00 = m[0][0].sqrt();
    let l10 = m[1][0] / l00;
    let d = m[1][1] - l10 * l10;
    if !(d > 0.0) || !d.is_finite() {
        return None;
    }
    Some([[l00, 0.0], [l10, d.sqrt()]])
}

fn probe_points() -> Vec<GpdParams> {
    let gammas = [0.1, 0.0, 0.3, -0.1, 0.6, -0.25, 1.0, -0.4, 2.0, 4.0];
    let sigmas = [1.0, 0.1, 10.0, 0.01, 100.0, 1e-3, 1e3, 1e-4, 1e4, 1e6];
    let mut out = Vec::with_capacity(100);
    for s in sigmas {
        for g in gammas {
            out.push(GpdParams { gamma: g, sigma: s });
        }
    }
    out
}

/// Run a chain with a default initial proposal covariance.
pub fn run_chain<F>(log_posterior: F, config: &McmcConfig) -> Result<PosteriorDraws>
where
    F: Fn(GpdParams) -> f64,
{
    run_chain_with_proposal(log_posterior, config, [[0.01, 0.0], [0.0, 0.01]])
}

/// Run a chain whose initial proposal covariance in `(γ, log σ)` is `cov0`.
pub fn run_chain_with_proposal<F>(
    log_posterior: F,
    config: &McmcConfig,
    cov0: [[f64; 2]; 2],
) -> Result<PosteriorDraws>
where
    F: Fn(GpdParams) -> f64,
{
    config.validate()?;
    let eval = |g: f64, ls: f64| -> f64 {
        if !(g > -0.5) || !ls.is_finite() {
            return f64::NEG_INFINITY;
        }
        let lp = log_posterior(GpdParams {
            gamma: g,
            sigma: ls.exp(),
        });
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    };

    let start = config
        .init
        .into_iter()
        .chain(probe_points())
        .find(|p| p.is_valid() && eval(p.gamma, p.sigma.ln()).is_finite())
        .ok_or_else(|| {
            Error::Initialization("no finite log-posterior among 100 probe points".into())
        })?;

    let scale0: f64 = 2.38 * 2.38 / 2.0;
    let mut base_cov = cov0;
    let mut chol = cholesky2(base_cov).unwrap_or([[0.1, 0.0], [0.0, 0.1]]);
    let mut log_lambda = 0.0f64;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut x = [start.gamma, start.sigma.ln()];
    let mut lp = eval(x[0], x[1]);

    let kept = config.iterations - config.burn_in;
    let mut draws = Vec::with_capacity(kept);
    let mut trace = Vec::with_capacity(kept);
    let mut burn_states: Vec<[f64; 2]> = Vec::with_capacity(config.burn_in);
    let mut accepted_after = 0usize;

    for it in 0..config.iterations {
        let burning = it < config.burn_in;
        let lam = (log_lambda.exp() * scale0.sqrt()).max(1e-12);
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let prop = [
            x[0] + lam * chol[0][0] * z0,
            x[1] + lam * (chol[1][0] * z0 + chol[1][1] * z1),
        ];
        let lp_prop = eval(prop[0], prop[1]);
        // Jacobian of σ = e^s
        let delta = (lp_prop + prop[1]) - (lp + x[1]);
        let alpha = if delta.is_nan() { 0.0 } else { delta.exp().min(1.0) };
        let u: f64 = rng.gen();
        if u < alpha {
            x = prop;
            lp = lp_prop;
            if !burning {
                accepted_after += 1;
            }
        }
        if burning {
            let m = (it + 1) as f64;
            log_lambda += (alpha - config.target_acceptance) / m;
            burn_states.push(x);
            if (it + 1) % config.adapt_window == 0 {
                // use the more recent half to forget the transient
                let recent = &burn_states[burn_states.len() / 2..];
                if let Some(c) = empirical_cov(recent) {
                    if let Some(l) = cholesky2(c) {
                        base_cov = c;
                        chol = l;
                    }
                }
            }
        } else {
            draws.push(GpdParams {
                gamma: x[0],
                sigma: x[1].exp(),
            });
            trace.push(lp);
        }
    }

    let gam: Vec<f64> = draws.iter().map(|d| d.gamma).collect();
    let sig: Vec<f64> = draws.iter().map(|d| d.sigma).collect();
    let lam2 = (2.0 * log_lambda).exp() * scale0;
    Ok(PosteriorDraws {
        acceptance_rate: accepted_after as f64 / kept as f64,
        ess: [ess(&gam), ess(&sig)],
        seed: config.seed,
        draws,
        log_post_trace: trace,
        proposal_cov: [
            [lam2 * base_cov[0][0], lam2 * base_cov[0][1]],
            [lam2 * base_cov[1][0], lam2 * base_cov[1][1]],
        ],
    })
}

fn empirical_cov(xs: &[[f64; 2]]) -> Option<[[f64; 2]; 2]> {
    let n = xs.len();
    if n < 10 {
        return None;
    }
    let nf = n as f64;
    let m0 = xs.iter().map(|x| x[0]).sum::<f64>() / nf;
    let m1 = xs.iter().map(|x| x[1]).sum::<f64>() / nf;
    let mut c = [[0.0; 2]; 2];
    for x in xs {
        let d0 = x[0] - m0;
        let d1 = x[1] - m1;
        c[0][0] += d0 * d0;
        c[0][1] += d0 * d1;
        c[1][1] += d1 * d1;
    }
    c[0][0] /= nf - 1.0;
    c[0][1] /= nf - 1.0;
    c[1][1] /= nf - 1.0;
    c[1][0] = c[0][1];
    // keep a small ridge so a stuck stretch cannot collapse the proposal
    c[0][0] += 1e-10;
    c[1][1] += 1e-10;
    Some(c)
}

/// Effective sample size by Geyer's initial monotone positive sequence.
///
/// Returns 1 for a constant or too-short chain.
pub fn ess(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return 1.0;
    }
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let dev: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let var0 = dev.iter().map(|d| d * d).sum::<f64>() / nf;
    if !(var0 > 0.0) {
        return 1.0;
    }
    let acov = |lag: usize| -> f64 {
        dev[..n - lag]
            .iter()
            .zip(&dev[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / nf
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = (acov(2 * m) + acov(2 * m + 1)) / var0;
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        m += 1;
    }
    (nf / tau.max(1.0 / nf)).max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub median: f64,
    pub q975: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub n_draws: usize,
    pub acceptance_rate: f64,
    pub gamma: CoordinateSummary,
    pub sigma: CoordinateSummary,
    pub log_post_mean: f64,
}

fn coord_summary(v: &[f64], ess_v: f64) -> CoordinateSummary {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| crate::posterior::hazen_quantile_sorted(&s, p);
    CoordinateSummary {
        mean,
        sd,
        q025: q(0.025),
        median: q(0.5),
        q975: q(0.975),
        ess: ess_v,
    }
}

/// Acceptance rate, effective sample sizes and trace summaries.
pub fn diagnostics(draws: &PosteriorDraws) -> Result<DiagnosticsReport> {
    if draws.len() < 100 {
        return domain(format!(
            "diagnostics need at least 100 draws, got {}",
            draws.len()
        ));
    }
    let n = draws.log_post_trace.len().max(1) as f64;
    Ok(DiagnosticsReport {
        n_draws: draws.len(),
        acceptance_rate: draws.acceptance_rate,
        gamma: coord_summary(&draws.gammas(), draws.ess[0]),
        sigma: coord_summary(&draws.sigmas(), draws.ess[1]),
        log_post_mean: draws.log_post_trace.iter().sum::<f64>() / n,
    })
}

/// Starting point for a GP posterior chain: the MLE when it converges and
/// lies in the prior support, else the PWM estimate, else `None`.
pub fn default_init(excesses: &[f64], prior: &PriorSpec) -> Option<GpdParams> {
    let ok = |p: GpdParams| {
        (loglik_raw(p.gamma, p.sigma, excesses) + log_prior(prior, p)).is_finite()
    };
    if let Ok(fit) = fit_mle(excesses) {
        if ok(fit.params) {
            return Some(fit.params);
        }
    }
    pwm_estimate(excesses).ok().filter(|p| ok(*p))
}

/// Sample the GP posterior `∝ exp(Σ ℓ_θ(z_i)) π(θ)` for the given excesses.
///
/// The initial proposal is the inverse Fisher information over `k` at the
/// starting point, expressed in `(γ, log σ)`.
pub fn sample_gpd_posterior(
    excesses: &[f64],
    prior: &PriorSpec,
    config: &McmcConfig,
) -> Result<PosteriorDraws> {
    prior.validate()?;
    if excesses.is_empty() {
        return domain("posterior sampling needs at least one excess");
    }
    let mut cfg = *config;
    if cfg.init.is_none() {
        cfg.init = default_init(excesses, prior);
    }
    let k = excesses.len() as f64;
    let cov0 = cfg
        .init
        .and_then(|p| fisher_info(p).ok().map(|fi| (p, fi)))
        .map(|(p, fi)| {
            let log_info = crate::gpd::FisherMatrix(fi.in_log_scale(p.sigma));
            let inv = log_info.inverse();
            [
                [inv[0][0] / k, inv[0][1] / k],
                [inv[1][0] / k, inv[1][1] / k],
            ]
        })
        .filter(|c| cholesky2(*c).is_some())
        .unwrap_or([[1.0 / k, 0.0], [0.0, 1.0 / k]]);
    let target = |t: GpdParams| loglik_raw(t.gamma, t.sigma, excesses) + log_prior(prior, t);
    run_chain_with_proposal(target, &cfg, cov0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpd::gpd_quantile;

    fn small_cfg(seed: u64) -> McmcConfig {
        McmcConfig {
            iterations: 12_000,
            burn_in: 2_000,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn bivariate_normal_mean() {
        // target on (γ, log σ): N((0.3, 0.5), diag(0.04, 0.09)) with correlation 0.5
        let (m0, m1, s0, s1, r) = (0.3, 0.5, 0.2, 0.3, 0.5);
        let target = |t: GpdParams| {
            let a = (t.gamma - m0) / s0;
            let b = (t.sigma.ln() - m1) / s1;
            -(a * a - 2.0 * r * a * b + b * b) / (2.0 * (1.0 - r * r)) - t.sigma.ln()
        };
        let d = run_chain(target, &small_cfg(3)).unwrap();
        let g = d.gammas();
        let ls: Vec<f64> = d.sigmas().iter().map(|s| s.ln()).collect();
        let mg = g.iter().sum::<f64>() / g.len() as f64;
        let ml = ls.iter().sum::<f64>() / ls.len() as f64;
        let se_g = s0 / ess(&g).sqrt();
        let se_l = s1 / ess(&ls).sqrt();
        assert!((mg - m0).abs() < 3.0 * se_g, "{mg} ± {se_g}");
        assert!((ml - m1).abs() < 3.0 * se_l, "{ml} ± {se_l}");
    }

    #[test]
    fn deterministic_given_seed() {
        let target = |t: GpdParams| -(t.gamma * t.gamma) - t.sigma.ln().powi(2);
        let a = run_chain(target, &small_cfg(9)).unwrap();
        let b = run_chain(target, &small_cfg(9)).unwrap();
        assert_eq!(a, b);
        let c = run_chain(target, &small_cfg(10)).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn initialization_failure() {
        let r = run_chain(|_| f64::NEG_INFINITY, &small_cfg(1));
        assert!(matches!(r, Err(Error::Initialization(_))));
    }

    #[test]
    fn config_validation() {
        let mut c = small_cfg(1);
        c.burn_in = c.iterations;
        assert!(run_chain(|_| 0.0, &c).is_err());
    }

    #[test]
    fn two_region_stationary_frequencies() {
        // piecewise-constant target on a box: right half carries 3/4 of the mass
        let target = |t: GpdParams| {
            let ls = t.sigma.ln();
            if !(-0.25..0.75).contains(&t.gamma) || !(-0.5..0.5).contains(&ls) {
                return f64::NEG_INFINITY;
            }
            let w: f64 = if t.gamma < 0.25 { 1.0 } else { 3.0 };
            w.ln() - ls
        };
        let cfg = McmcConfig {
            iterations: 1_010_000,
            burn_in: 10_000,
            seed: 5,
            init: Some(GpdParams {
                gamma: 0.0,
                sigma: 1.0,
            }),
            ..Default::default()
        };
        let d = run_chain(target, &cfg).unwrap();
        let freq = d.draws.iter().filter(|t| t.gamma >= 0.25).count() as f64 / d.len() as f64;
        assert!((freq - 0.75).abs() < 0.0075, "{freq}");
    }

    #[test]
    fn ess_iid_and_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..5000).map(|_| rng.sample(StandardNormal)).collect();
        let e = ess(&x);
        assert!((e / 5000.0 - 1.0).abs() < 0.2, "{e}");
        assert_eq!(ess(&[2.0; 1000]), 1.0);
    }

    #[test]
    fn ess_ar1_matches_theory() {
        // AR(1) with φ = 0.9 has integrated autocorrelation time 19
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut v = 0.0f64;
        let x: Vec<f64> = (0..200_000)
            .map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                v = 0.9 * v + e;
                v
            })
            .collect();
        let e = ess(&x);
        let want = 200_000.0 / 19.0;
        assert!((e / want - 1.0).abs() < 0.15, "{e} vs {want}");
    }

    #[test]
    fn diagnostics_need_draws() {
        let d = PosteriorDraws {
            draws: vec![GpdParams { gamma: 0.0, sigma: 1.0 }; 50],
            acceptance_rate: 0.2,
            ess: [1.0, 1.0],
            seed: 0,
            log_post_trace: vec![0.0; 50],
            proposal_cov: [[1.0, 0.0], [0.0, 1.0]],
        };
        assert!(diagnostics(&d).is_err());
    }

    fn gp_sample(theta: GpdParams, k: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k)
            .map(|_| gpd_quantile(theta, rng.gen::<f64>()).unwrap())
            .collect()
    }

    #[test]
    fn gp_posterior_centers_on_truth() {
        let xs = gp_sample(GpdParams { gamma: 0.25, sigma: 1.0 }, 10_000, 77);
        let cfg = McmcConfig {
            iterations: 15_000,
            burn_in: 3_000,
            seed: 21,
            ..Default::default()
        };
        let d = sample_gpd_posterior(&xs, &PriorSpec::flat(), &cfg).unwrap();
        let g = d.gammas();
        let mg = g.iter().sum::<f64>() / g.len() as f64;
        assert!((mg - 0.25).abs() < 0.05, "{mg}");
        assert!((d.acceptance_rate - 0.234).abs() < 0.1, "{}", d.acceptance_rate);
        assert!(d.log_post_trace.iter().all(|v| v.is_finite()));
        assert!(d.draws.iter().all(|t| t.is_valid()));
        let rep = diagnostics(&d).unwrap();
        assert!(rep.gamma.q025 < rep.gamma.median && rep.gamma.median < rep.gamma.q975);
    }
}
