//! Generalized Pareto distribution: CDF, quantile, log-density, derivatives,
//! Fisher information and maximum-likelihood fitting.
//!
//! The parameter space is `γ > -1/2`, `σ > 0`. Every γ-dependent expression
//! switches to its series expansion near `γ z / σ = 0`, so all functions are
//! continuous through the exponential case `γ = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numeric::{integrate, nelder_mead};

/// Below this value of `|γ z / σ|` the exponential-branch series is used.
const BRANCH_EPS: f64 = 1e-8;
/// Below this value of `|γ z / σ|` derivative terms use their power series.
const SERIES_EPS: f64 = 0.05;

/// Shape/scale pair `(γ, σ)` of a generalized Pareto law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    pub gamma: f64,
    pub sigma: f64,
}

impl GpdParams {
    /// Validated constructor: requires `γ > -1/2` and `σ > 0`.
    pub fn new(gamma: f64, sigma: f64) -> Result<Self> {
        let p = GpdParams { gamma, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > -0.5) || !self.gamma.is_finite() {
            return domain(format!("shape must exceed -1/2, got {}", self.gamma));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return domain(format!("scale must be positive, got {}", self.sigma));
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    /// Right endpoint of the support: `-σ/γ` for `γ < 0`, `+∞` otherwise.
    pub fn upper_endpoint(&self) -> f64 {
        if self.gamma < 0.0 {
            -self.sigma / self.gamma
        } else {
            f64::INFINITY
        }
    }
}

/// `log(1 + γu) / γ`, continuous at `γ = 0`.
#[inline]
fn log1p_over_gamma(gamma: f64, u: f64) -> f64 {
    let a = gamma * u;
    if a.abs() < BRANCH_EPS {
        u * (1.0 - 0.5 * a)
    } else {
        a.ln_1p() / gamma
    }
}

/// Unit-scale GP CDF `H_γ(u)` assuming `u ≥ 0` lies in the support.
#[inline]
pub(crate) fn unit_cdf(gamma: f64, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if gamma < 0.0 && 1.0 + gamma * u <= 0.0 {
        return 1.0;
    }
    -(-log1p_over_gamma(gamma, u)).exp_m1()
}

/// Unit-scale GP density `h_γ(u)`, zero off the support.
#[inline]
pub(crate) fn unit_pdf(gamma: f64, u: f64) -> f64 {
    if u < 0.0 || 1.0 + gamma * u <= 0.0 {
        return 0.0;
    }
    // (1+γu)^{-(1/γ+1)} = exp(-(1+γ) log(1+γu)/γ)
    (-(1.0 + gamma) * log1p_over_gamma(gamma, u)).exp()
}

/// Per-observation log-likelihood without parameter validation.
/// Returns `-∞` off the support.
#[inline]
pub(crate) fn logpdf_raw(gamma: f64, sigma: f64, z: f64) -> f64 {
    if z < 0.0 {
        return f64::NEG_INFINITY;
    }
    let u = z / sigma;
    if 1.0 + gamma * u <= 0.0 {
        return f64::NEG_INFINITY;
    }
    -sigma.ln() - (1.0 + gamma) * log1p_over_gamma(gamma, u)
}

/// Summed log-likelihood without validation; `-∞` for invalid parameters.
pub(crate) fn loglik_raw(gamma: f64, sigma: f64, excesses: &[f64]) -> f64 {
    if !(gamma > -0.5) || !(sigma > 0.0) || !sigma.is_finite() {
        return f64::NEG_INFINITY;
    }
    let log_sigma = sigma.ln();
    let mut total = 0.0;
    for &z in excesses {
        if z < 0.0 {
            return f64::NEG_INFINITY;
        }
        let u = z / sigma;
        if 1.0 + gamma * u <= 0.0 {
            return f64::NEG_INFINITY;
        }
        total -= log_sigma + (1.0 + gamma) * log1p_over_gamma(gamma, u);
    }
    total
}

/// GP distribution function `H_θ(z) = H_γ(z/σ)`.
pub fn gpd_cdf(theta: GpdParams, z: f64) -> Result<f64> {
    theta.validate()?;
    Ok(unit_cdf(theta.gamma, z / theta.sigma))
}

/// GP quantile `σ((1-p)^{-γ} - 1)/γ` for `p ∈ [0, 1]`.
///
/// At `p = 1` this returns the right endpoint, which is `+∞` when `γ ≥ 0`.
pub fn gpd_quantile(theta: GpdParams, p: f64) -> Result<f64> {
    theta.validate()?;
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("probability must lie in [0, 1], got {p}"));
    }
    if p == 1.0 {
        return Ok(theta.upper_endpoint());
    }
    Ok(theta.sigma * unit_quantile_tail(theta.gamma, -(-p).ln_1p()))
}

/// `((e^{L})^{γ} - 1)/γ`, i.e. the unit GP quantile at tail log-odds `L = -log(1-p)`.
#[inline]
pub(crate) fn unit_quantile_tail(gamma: f64, log_t: f64) -> f64 {
    let a = gamma * log_t;
    if a.abs() < BRANCH_EPS {
        log_t * (1.0 + 0.5 * a)
    } else {
        a.exp_m1() / gamma
    }
}

/// Log-density `ℓ_θ(z)`, `-∞` off the support.
pub fn gpd_logpdf(theta: GpdParams, z: f64) -> Result<f64> {
    theta.validate()?;
    Ok(logpdf_raw(theta.gamma, theta.sigma, z))
}

/// Summed log-likelihood `Σ ℓ_θ(z_i)` over the excesses.
pub fn loglik_sum(theta: GpdParams, excesses: &[f64]) -> Result<f64> {
    theta.validate()?;
    if excesses.is_empty() {
        return domain("log-likelihood needs at least one excess");
    }
    Ok(loglik_raw(theta.gamma, theta.sigma, excesses))
}

/// `(log(1+a) - a/(1+a)) / γ²` expressed through `u = a/γ`.
#[inline]
fn score_gamma_head(gamma: f64, u: f64) -> f64 {
    let a = gamma * u;
    if a.abs() < SERIES_EPS {
        // Σ_{j≥2} (-1)^j (j-1)/j a^{j-2}
        let mut sum = 0.0;
        let mut pow = 1.0;
        for j in 2..40 {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (j - 1) as f64 / j as f64 * pow;
            pow *= a;
        }
        u * u * sum
    } else {
        (a.ln_1p() - a / (1.0 + a)) / (gamma * gamma)
    }
}

/// `(-2 log t + 2a/t + a²/t²) / γ³` with `a = γu`, `t = 1 + a`, `log_t = log t`.
#[inline]
fn hess_gamma_head(gamma: f64, u: f64, t: f64, log_t: f64) -> f64 {
    let a = gamma * u;
    if a.abs() < SERIES_EPS {
        // Σ_{j≥3} (-1)^j (j-1)(j-2)/j a^{j-3}
        let mut sum = 0.0;
        let mut pow = 1.0;
        for j in 3..40 {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * ((j - 1) * (j - 2)) as f64 / j as f64 * pow;
            pow *= a;
        }
        u * u * u * sum
    } else {
        (-2.0 * log_t + 2.0 * a / t + (a / t).powi(2)) / gamma.powi(3)
    }
}

/// Unit-scale Hessian of `ℓ` in `(γ, σ)` at `σ = 1`, given `u`, `t = 1 + γu`
/// and `log t` computed by the caller to full relative precision.
#[inline]
fn unit_hessian(gamma: f64, u: f64, t: f64, log_t: f64) -> [[f64; 2]; 2] {
    let a = gamma * u;
    let hgg = hess_gamma_head(gamma, u, t, log_t) + (u / t).powi(2);
    let hgs = u / t * (1.0 - (1.0 + gamma) * u / t);
    let hss = 1.0 - (1.0 + gamma) * u * (2.0 + a) / (t * t);
    [[hgg, hgs], [hgs, hss]]
}

/// Gradient of `ℓ_θ(z)` with respect to `(γ, σ)`. Requires `z` in the support.
pub fn score_point(theta: GpdParams, z: f64) -> [f64; 2] {
    let (g, s) = (theta.gamma, theta.sigma);
    let u = z / s;
    let t = 1.0 + g * u;
    [
        score_gamma_head(g, u) - u / t,
        (-1.0 + (1.0 + g) * u / t) / s,
    ]
}

/// Hessian of `ℓ_θ(z)` with respect to `(γ, σ)`. Requires `z` in the support.
pub fn hessian_point(theta: GpdParams, z: f64) -> [[f64; 2]; 2] {
    let (g, s) = (theta.gamma, theta.sigma);
    let u = z / s;
    let a = g * u;
    let h = unit_hessian(g, u, 1.0 + a, a.ln_1p());
    [
        [h[0][0], h[0][1] / s],
        [h[1][0] / s, h[1][1] / (s * s)],
    ]
}

/// Analytic gradient of the summed log-likelihood with respect to `(γ, σ)`.
pub fn loglik_gradient(theta: GpdParams, excesses: &[f64]) -> Result<[f64; 2]> {
    theta.validate()?;
    let mut grad = [0.0; 2];
    for &z in excesses {
        if !logpdf_raw(theta.gamma, theta.sigma, z).is_finite() {
            return domain(format!("excess {z} lies outside the support"));
        }
        let sp = score_point(theta, z);
        grad[0] += sp[0];
        grad[1] += sp[1];
    }
    Ok(grad)
}

/// Per-observation Fisher information, a symmetric 2×2 matrix in `(γ, σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherMatrix(pub [[f64; 2]; 2]);

impl FisherMatrix {
    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn inverse(&self) -> [[f64; 2]; 2] {
        let m = &self.0;
        let d = self.det();
        [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
    }

    /// Information in `(γ, log σ)` coordinates.
    pub fn in_log_scale(&self, sigma: f64) -> [[f64; 2]; 2] {
        let m = &self.0;
        [
            [m[0][0], m[0][1] * sigma],
            [m[1][0] * sigma, m[1][1] * sigma * sigma],
        ]
    }
}

/// Fisher information `-E[∂²ℓ_θ]` by adaptive quadrature over `v ∈ (0, 1)`.
///
/// The expectation is taken at unit scale, `z = (v^{-γ} - 1)/γ`, and then
/// rescaled: the `(γ,σ)` entry carries `1/σ`, the `(σ,σ)` entry `1/σ²`.
/// The substitution `v = w^m` with `m = max(2, 2/(1+2γ))` removes the
/// endpoint singularity at `v = 0`.
pub fn fisher_info(theta: GpdParams) -> Result<FisherMatrix> {
    theta.validate()?;
    let g = theta.gamma;
    let m = (2.0 / (1.0 + 2.0 * g)).max(2.0);
    let entry = |idx: (usize, usize)| {
        let f = |w: f64| {
            if w <= 0.0 {
                return 0.0;
            }
            // L = -log v, t = v^{-γ}, u = (t - 1)/γ
            let big_l = -m * w.ln();
            let log_t = g * big_l;
            let t = log_t.exp();
            let u = unit_quantile_tail(g, big_l);
            let h = unit_hessian(g, u, t, log_t);
            let val = -h[idx.0][idx.1] * m * w.powf(m - 1.0);
            // the integrand vanishes at w = 0; guard against 0·∞ from underflow
            if val.is_finite() {
                val
            } else {
                0.0
            }
        };
        integrate(f, 0.0, 1.0, 1e-10, 1e-12, 4000).value
    };
    let i11 = entry((0, 0));
    let i12 = entry((0, 1)) / theta.sigma;
    let i22 = entry((1, 1)) / (theta.sigma * theta.sigma);
    Ok(FisherMatrix([[i11, i12], [i12, i22]]))
}

/// Probability-weighted-moment estimate of `(γ, σ)`.
///
/// Uses plotting positions `(j - 0.35)/k` on the ascending order statistics.
/// The result is pushed inside the parameter space and made feasible for the
/// largest excess so it can seed the likelihood search.
pub fn pwm_estimate(excesses: &[f64]) -> Result<GpdParams> {
    if excesses.len() < 2 {
        return domain("PWM needs at least two excesses");
    }
    let mut sorted = excesses.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len() as f64;
    let a0 = sorted.iter().sum::<f64>() / k;
    let a1 = sorted
        .iter()
        .enumerate()
        .map(|(j, x)| (1.0 - (j as f64 + 0.65) / k) * x)
        .sum::<f64>()
        / k;
    let denom = a0 - 2.0 * a1;
    let (mut gamma, mut sigma) = if denom > 0.0 {
        (2.0 - a0 / denom, 2.0 * a0 * a1 / denom)
    } else {
        (0.0, a0)
    };
    if !gamma.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
        gamma = 0.0;
        sigma = a0.max(f64::MIN_POSITIVE);
    }
    gamma = gamma.clamp(-0.45, 5.0);
    let zmax = sorted[sorted.len() - 1];
    if gamma < 0.0 {
        sigma = sigma.max(-gamma * zmax * 1.05);
    }
    GpdParams::new(gamma, sigma)
}

/// Result of a converged likelihood maximization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleFit {
    pub params: GpdParams,
    pub loglik: f64,
    pub init: GpdParams,
    pub init_loglik: f64,
    pub iterations: usize,
    /// Central-difference gradient norm of the mean log-likelihood in `(γ, log σ)`.
    pub grad_norm: f64,
}

/// Mean log-likelihood in `(γ, log σ)` coordinates.
fn mean_loglik(x: &[f64], excesses: &[f64]) -> f64 {
    loglik_raw(x[0], x[1].exp(), excesses) / excesses.len() as f64
}

/// Central finite-difference gradient (step 1e-6) of the mean log-likelihood
/// in `(γ, log σ)`.
pub fn fd_gradient_norm(theta: GpdParams, excesses: &[f64]) -> f64 {
    let h = 1e-6;
    let x = [theta.gamma, theta.sigma.ln()];
    let mut sq = 0.0;
    for i in 0..2 {
        let mut xp = x;
        let mut xm = x;
        xp[i] += h;
        xm[i] -= h;
        let d = (mean_loglik(&xp, excesses) - mean_loglik(&xm, excesses)) / (2.0 * h);
        sq += d * d;
    }
    sq.sqrt()
}

const MLE_GRAD_TOL: f64 = 1e-5;

/// Maximum-likelihood estimate of `(γ, σ)` from the excesses.
///
/// Nelder–Mead on `(γ, log σ)` starting at the PWM estimate, four fixed
/// restarts around the incumbent, then Newton polishing with the analytic
/// derivatives. Points off the support score `-∞`, so the simplex retreats
/// from the support boundary instead of failing.
pub fn fit_mle(excesses: &[f64]) -> Result<MleFit> {
    if excesses.len() < 5 {
        return domain(format!(
            "MLE needs at least 5 excesses, got {}",
            excesses.len()
        ));
    }
    if excesses.iter().any(|z| !z.is_finite() || *z < 0.0) {
        return domain("excesses must be finite and nonnegative");
    }
    let first = excesses[0];
    if excesses.iter().all(|&z| z == first) {
        return domain("excesses are all equal");
    }

    let init = pwm_estimate(excesses)?;
    let init_loglik = loglik_raw(init.gamma, init.sigma, excesses);
    let objective = |x: &[f64]| -mean_loglik(x, excesses);

    let mut iterations = 0;
    let start = [init.gamma, init.sigma.ln()];
    let mut best = nelder_mead(objective, &start, &[0.1, 0.1], 1e-13, 4000);
    iterations += best.iterations;
    for delta in [[0.2, 0.0], [-0.2, 0.0], [0.0, 0.5], [0.0, -0.5]] {
        let s = [best.x[0] + delta[0], best.x[1] + delta[1]];
        let run = nelder_mead(objective, &s, &[0.05, 0.05], 1e-13, 4000);
        iterations += run.iterations;
        if run.fx < best.fx {
            best = run;
        }
    }

    let (x, newton_iters) = newton_polish([best.x[0], best.x[1]], excesses);
    iterations += newton_iters;
    let params = GpdParams {
        gamma: x[0],
        sigma: x[1].exp(),
    };
    let loglik = loglik_raw(params.gamma, params.sigma, excesses);
    let grad_norm = fd_gradient_norm(params, excesses);
    if !params.is_valid() || !loglik.is_finite() || grad_norm >= MLE_GRAD_TOL {
        return Err(Error::NotConverged {
            best: if params.is_valid() { params } else { init },
            iterations,
            grad_norm,
        });
    }
    Ok(MleFit {
        params,
        loglik,
        init,
        init_loglik,
        iterations,
        grad_norm,
    })
}

/// Damped Newton ascent on the mean log-likelihood in `(γ, s = log σ)`.
fn newton_polish(mut x: [f64; 2], excesses: &[f64]) -> ([f64; 2], usize) {
    let k = excesses.len() as f64;
    let mut f = mean_loglik(&x, excesses);
    let mut iters = 0;
    for _ in 0..100 {
        iters += 1;
        let theta = GpdParams {
            gamma: x[0],
            sigma: x[1].exp(),
        };
        let s = theta.sigma;
        let mut g = [0.0; 2];
        let mut h = [[0.0; 2]; 2];
        for &z in excesses {
            let sp = score_point(theta, z);
            let hp = hessian_point(theta, z);
            g[0] += sp[0];
            g[1] += sp[1] * s;
            h[0][0] += hp[0][0];
            h[0][1] += hp[0][1] * s;
            h[1][1] += hp[1][1] * s * s + sp[1] * s;
        }
        g = [g[0] / k, g[1] / k];
        h = [[h[0][0] / k, h[0][1] / k], [h[0][1] / k, h[1][1] / k]];
        h[1][0] = h[0][1];
        if (g[0] * g[0] + g[1] * g[1]).sqrt() < 1e-12 {
            break;
        }
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let dir = if h[0][0] < 0.0 && det > 0.0 {
            [
                -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
                -(-h[1][0] * g[0] + h[0][0] * g[1]) / det,
            ]
        } else {
            g
        };
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = [x[0] + step * dir[0], x[1] + step * dir[1]];
            let fc = mean_loglik(&cand, excesses);
            if fc.is_finite() && fc >= f {
                x = cand;
                f = fc;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (x, iters)
}
