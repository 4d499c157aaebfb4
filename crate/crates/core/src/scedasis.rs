//! Dirichlet-process posterior for the law of the concomitant covariates,
//! pointwise scedasis posteriors and the bootstrap test for a covariate
//! effect on the tail.
//!
//! Balls are Euclidean, closed, and clipped to the unit cube.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta as BetaDist, Continuous, ContinuousCDF};

use crate::error::{domain, Error, Result};
use crate::excess::{check_covariates, ExcessData};
use crate::numeric::gauss_legendre;
use crate::posterior::hazen_quantile_sorted;

/// Gauss–Legendre nodes per dimension for ball masses when `d > 1`.
const BALL_NODES: usize = 64;

/// Base probability measure of the DP prior on `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseMeasure {
    Uniform,
    /// Independent `Beta(a_j, b_j)` coordinates.
    ProductBeta { a: Vec<f64>, b: Vec<f64> },
}

impl BaseMeasure {
    fn check(&self, d: usize) -> Result<()> {
        if let BaseMeasure::ProductBeta { a, b } = self {
            if a.len() != d || b.len() != d {
                return domain(format!(
                    "product-beta base needs {d} (a, b) pairs, got {} and {}",
                    a.len(),
                    b.len()
                ));
            }
            if a.iter().chain(b).any(|v| !(*v > 0.0)) {
                return domain("product-beta parameters must be positive");
            }
        }
        Ok(())
    }

    fn marginal_cdf(&self, j: usize, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        match self {
            BaseMeasure::Uniform => t,
            BaseMeasure::ProductBeta { a, b } => BetaDist::new(a[j], b[j]).unwrap().cdf(t),
        }
    }

    fn marginal_pdf(&self, j: usize, t: f64) -> f64 {
        if !(0.0..=1.0).contains(&t) {
            return 0.0;
        }
        match self {
            BaseMeasure::Uniform => 1.0,
            BaseMeasure::ProductBeta { a, b } => {
                let v = BetaDist::new(a[j], b[j]).unwrap().pdf(t);
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            }
        }
    }

    /// Mass of the anchored rectangle `[0, u_1] × … × [0, u_d]`.
    pub fn rect_mass(&self, u: &[f64]) -> f64 {
        u.iter()
            .enumerate()
            .map(|(j, &t)| self.marginal_cdf(j, t))
            .product()
    }

    /// Mass of the closed ball `B(x, r)` intersected with the unit cube.
    pub fn ball_mass(&self, x: &[f64], r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let (nodes, weights) = gauss_legendre(BALL_NODES);
        self.ball_mass_from(0, x, r, &nodes, &weights)
    }

    fn ball_mass_from(&self, j: usize, x: &[f64], r: f64, nodes: &[f64], weights: &[f64]) -> f64 {
        let xj = x[j];
        let lo = (xj - r).max(0.0);
        let hi = (xj + r).min(1.0);
        if hi <= lo {
            return 0.0;
        }
        if j + 1 == x.len() {
            return self.marginal_cdf(j, hi) - self.marginal_cdf(j, lo);
        }
        // y = x_j + r sin φ keeps the inner radius r cos φ smooth in φ
        let p_lo = ((lo - xj) / r).clamp(-1.0, 1.0).asin();
        let p_hi = ((hi - xj) / r).clamp(-1.0, 1.0).asin();
        let half = 0.5 * (p_hi - p_lo);
        let mid = 0.5 * (p_hi + p_lo);
        let mut acc = 0.0;
        for (t, w) in nodes.iter().zip(weights) {
            let phi = mid + half * t;
            let c = phi.cos();
            let y = xj + r * phi.sin();
            let f = self.marginal_pdf(j, y);
            if f > 0.0 {
                acc += w * r * c * f * self.ball_mass_from(j + 1, x, r * c, nodes, weights);
            }
        }
        acc * half
    }

    pub fn sample<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Vec<f64> {
        match self {
            BaseMeasure::Uniform => (0..d).map(|_| rng.gen::<f64>()).collect(),
            BaseMeasure::ProductBeta { a, b } => (0..d)
                .map(|j| Beta::new(a[j], b[j]).unwrap().sample(rng))
                .collect(),
        }
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum()
}

fn in_ball(p: &[f64], x: &[f64], r: f64) -> bool {
    dist2(p, x).sqrt() <= r
}

/// Posterior `DP(τ + Σ δ_{X*_i})` kept in decomposed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpPosterior {
    pub tau_total: f64,
    pub tau_base: BaseMeasure,
    pub atoms: Vec<Vec<f64>>,
    pub d: usize,
}

impl DpPosterior {
    /// The prior `DP(τ)`: no atoms.
    pub fn prior(tau_total: f64, tau_base: BaseMeasure, d: usize) -> Result<Self> {
        if !(tau_total > 0.0) || !tau_total.is_finite() {
            return domain(format!("tau_total must be positive, got {tau_total}"));
        }
        if d == 0 {
            return domain("dimension must be positive");
        }
        tau_base.check(d)?;
        Ok(DpPosterior {
            tau_total,
            tau_base,
            atoms: Vec::new(),
            d,
        })
    }

    pub fn k(&self) -> usize {
        self.atoms.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.tau_total + self.k() as f64
    }

    /// Parameter measure of the closed ball `B(x, r)`.
    pub fn ball_alpha(&self, x: &[f64], r: f64) -> f64 {
        let inside = self.atoms.iter().filter(|a| in_ball(a, x, r)).count();
        self.tau_total * self.tau_base.ball_mass(x, r) + inside as f64
    }

    /// Parameter measure of the anchored rectangle `[0, u]`.
    pub fn rect_alpha(&self, u: &[f64]) -> f64 {
        let inside = self
            .atoms
            .iter()
            .filter(|a| a.iter().zip(u).all(|(p, q)| p <= q))
            .count();
        self.tau_total * self.tau_base.rect_mass(u) + inside as f64
    }
}

/// Conjugate update of `DP(τ)` with the concomitant covariates.
pub fn dp_posterior(
    tau_total: f64,
    tau_base: BaseMeasure,
    concomitants: &[Vec<f64>],
) -> Result<DpPosterior> {
    if concomitants.is_empty() {
        return domain("DP posterior needs at least one concomitant");
    }
    let d = check_covariates(concomitants)?;
    let mut dp = DpPosterior::prior(tau_total, tau_base, d)?;
    dp.atoms = concomitants.to_vec();
    Ok(dp)
}

/// Distance from `x` to its `K`-th nearest covariate.
pub fn knn_radius(x: &[f64], x_all: &[Vec<f64>], k: usize) -> Result<f64> {
    if k < 1 || k > x_all.len() {
        return domain(format!(
            "need 1 <= K <= n, got K = {k}, n = {}",
            x_all.len()
        ));
    }
    let mut d: Vec<f64> = x_all.iter().map(|p| dist2(p, x).sqrt()).collect();
    let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum BallMethod {
    /// Fixed radius.
    Kernel { bw: f64 },
    /// Radius reaching the `k`-th nearest covariate.
    Knn { k: usize },
}

/// Beta-marginal posterior of `P*(B)` at a point, with the plug-in `p̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScedasisPosterior {
    pub x: Vec<f64>,
    pub ball_radius: f64,
    pub beta_a: f64,
    pub beta_b: f64,
    pub p_hat: f64,
    pub method: BallMethod,
}

impl ScedasisPosterior {
    pub fn mean(&self) -> f64 {
        self.beta_a / (self.beta_a + self.beta_b) / self.p_hat
    }

    pub fn sd(&self) -> f64 {
        let (a, b) = (self.beta_a, self.beta_b);
        let s = a + b;
        (a * b / (s * s * (s + 1.0))).sqrt() / self.p_hat
    }

    /// One draw of `c(x) = P*(B) / p̂`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let p = if self.beta_b <= 1e-12 {
            1.0
        } else {
            Beta::new(self.beta_a, self.beta_b).unwrap().sample(rng)
        };
        p / self.p_hat
    }

    pub fn sample(&self, m: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| self.draw(&mut rng)).collect()
    }
}

pub fn scedasis_posterior(
    dp: &DpPosterior,
    x: &[f64],
    method: BallMethod,
    x_all: &[Vec<f64>],
) -> Result<ScedasisPosterior> {
    if x.len() != dp.d {
        return domain(format!("point has {} coordinates, expected {}", x.len(), dp.d));
    }
    if let Some(j) = x.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::CovariateOutOfRange {
            row: 0,
            col: j,
            value: x[j],
        });
    }
    if x_all.is_empty() {
        return domain("covariate sample is empty");
    }
    let r = match method {
        BallMethod::Kernel { bw } => {
            if !(bw > 0.0) {
                return domain(format!("bandwidth must be positive, got {bw}"));
            }
            bw
        }
        BallMethod::Knn { k } => knn_radius(x, x_all, k)?,
    };
    let base_mass = dp.tau_base.ball_mass(x, r);
    if !(base_mass > 0.0) {
        return domain(format!("ball around {x:?} has no base-measure mass"));
    }
    let count = x_all.iter().filter(|p| in_ball(p, x, r)).count();
    if count == 0 {
        return Err(Error::NoCovariateMass { x: x.to_vec() });
    }
    let beta_a = dp.ball_alpha(x, r);
    let beta_b = (dp.total_mass() - beta_a).max(0.0);
    Ok(ScedasisPosterior {
        x: x.to_vec(),
        ball_radius: r,
        beta_a,
        beta_b,
        p_hat: count as f64 / x_all.len() as f64,
        method,
    })
}

/// Finitely supported probability measure on `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn mass_where(&self, pred: impl Fn(&[f64]) -> bool) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .filter(|(p, _)| pred(p))
            .map(|(_, w)| w)
            .sum()
    }

    /// `P([0, u])` for the anchored rectangle.
    pub fn cdf(&self, u: &[f64]) -> f64 {
        self.mass_where(|p| p.iter().zip(u).all(|(a, b)| a <= b))
    }
}

/// One functional draw `P* ~ DP(τ + Σ δ_{X*_i})`.
///
/// The atoms share Dirichlet weights with the continuous part; the latter is
/// a stick-breaking draw from `DP(τ)` with `truncation` sticks, the leftover
/// stick placed on one more base draw.
pub fn sample_dp_functional_with<R: Rng + ?Sized>(
    dp: &DpPosterior,
    truncation: usize,
    rng: &mut R,
) -> DiscreteMeasure {
    let truncation = truncation.max(1);
    let k = dp.k();
    let g0 = Gamma::new(dp.tau_total, 1.0).unwrap().sample(rng);
    let gs: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total = g0 + gs.iter().sum::<f64>();

    let mut points = Vec::with_capacity(k + truncation + 1);
    let mut weights = Vec::with_capacity(k + truncation + 1);
    for (a, g) in dp.atoms.iter().zip(&gs) {
        points.push(a.clone());
        weights.push(g / total);
    }
    let w0 = g0 / total;
    let stick = Beta::new(1.0, dp.tau_total).unwrap();
    let mut left = 1.0;
    for _ in 0..truncation {
        let v: f64 = stick.sample(rng);
        points.push(dp.tau_base.sample(dp.d, rng));
        weights.push(w0 * left * v);
        left *= 1.0 - v;
    }
    points.push(dp.tau_base.sample(dp.d, rng));
    weights.push(w0 * left);
    DiscreteMeasure { points, weights }
}

pub fn sample_dp_functional(dp: &DpPosterior, truncation: usize, seed: u64) -> DiscreteMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_dp_functional_with(dp, truncation, &mut rng)
}

/// Default number of sticks for functional draws.
pub const DEFAULT_TRUNCATION: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsTestReport {
    pub statistic: f64,
    pub critical_value: f64,
    pub reject: bool,
    pub m: usize,
    pub alpha: f64,
    pub seed: u64,
    pub k: usize,
    pub n: usize,
}

/// Evaluation of discrete CDFs at the covariate sample.
enum CdfGrid {
    /// Sorted scalar evaluation points.
    Scalar(Vec<f64>),
    /// Anchored rectangles at each covariate row.
    Rect(Vec<Vec<f64>>),
}

impl CdfGrid {
    fn new(x_all: &[Vec<f64>], d: usize) -> Self {
        if d == 1 {
            let mut v: Vec<f64> = x_all.iter().map(|r| r[0]).collect();
            v.sort_by(f64::total_cmp);
            CdfGrid::Scalar(v)
        } else {
            CdfGrid::Rect(x_all.to_vec())
        }
    }

    /// CDF of a weighted point set at every evaluation point.
    fn eval(&self, points: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
        match self {
            CdfGrid::Scalar(xs) => {
                let mut idx: Vec<usize> = (0..points.len()).collect();
                idx.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]));
                let mut out = Vec::with_capacity(xs.len());
                let mut j = 0;
                let mut acc = 0.0;
                for &x in xs {
                    while j < idx.len() && points[idx[j]][0] <= x {
                        acc += weights[idx[j]];
                        j += 1;
                    }
                    out.push(acc);
                }
                out
            }
            CdfGrid::Rect(us) => us
                .iter()
                .map(|u| {
                    points
                        .iter()
                        .zip(weights)
                        .filter(|(p, _)| p.iter().zip(u).all(|(a, b)| a <= b))
                        .map(|(_, w)| w)
                        .sum()
                })
                .collect(),
        }
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

/// Bootstrap test of `H_0: c ≡ 1` from the DP posterior of the concomitants.
///
/// `S = √k sup |G*_n - G_n|` over the covariate sample; the critical value is
/// the empirical `1 - α` quantile of `√k sup |G*_m - G*_n|` over `m`
/// functional draws.
pub fn ks_covariate_test(
    data: &ExcessData,
    x_all: &[Vec<f64>],
    tau_total: f64,
    tau_base: BaseMeasure,
    m: usize,
    alpha: f64,
    seed: u64,
) -> Result<KsTestReport> {
    if m < 100 {
        return domain(format!("need at least 100 bootstrap draws, got {m}"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    let conc = data
        .concomitants
        .as_ref()
        .ok_or_else(|| Error::Domain("excess data carries no concomitant covariates".into()))?;
    let d = check_covariates(x_all)?;
    let dp = dp_posterior(tau_total, tau_base, conc)?;
    if dp.d != d {
        return domain("concomitant and covariate dimensions differ");
    }
    let k = conc.len();
    let n = x_all.len();
    let grid = CdfGrid::new(x_all, d);
    let g_star = grid.eval(conc, &vec![1.0 / k as f64; k]);
    let g_all = grid.eval(x_all, &vec![1.0 / n as f64; n]);
    let rk = (k as f64).sqrt();
    let statistic = rk * sup_diff(&g_star, &g_all);

    let mut boot: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let pm = sample_dp_functional_with(&dp, DEFAULT_TRUNCATION, &mut rng);
            rk * sup_diff(&grid.eval(&pm.points, &pm.weights), &g_star)
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    let critical_value = hazen_quantile_sorted(&boot, 1.0 - alpha);
    Ok(KsTestReport {
        statistic,
        critical_value,
        reject: statistic > critical_value,
        m,
        alpha,
        seed,
        k,
        n,
    })
}
