//! Posterior summaries, credible intervals, extreme quantiles, the posterior
//! predictive distribution of future peaks, and Wasserstein distances.
//!
//! Empirical quantiles use the midpoint rule: with `n` sorted values the
//! `p`-quantile sits at 1-based position `h = n p + 1/2`, linearly
//! interpolated and clamped to the sample range.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::excess::ExcessData;
use crate::gpd::{unit_cdf, unit_pdf, unit_quantile_tail, GpdParams};
use crate::numeric::norm_quantile;

/// Midpoint-rule quantile of an ascending slice.
pub fn hazen_quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    // snap away representation noise in p, e.g. (1 - 0.9)/2 = 0.04999…
    let h = ((n as f64 * p + 0.5) * 1e9).round() / 1e9;
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor();
    let i = lo as usize - 1;
    let frac = h - lo;
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    #[serde(skip)]
    sorted: Vec<f64>,
}

impl Summary {
    pub fn quantile(&self, p: f64) -> f64 {
        hazen_quantile_sorted(&self.sorted, p)
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.n - 1]
    }
}

/// Mean, standard deviation (divisor `n - 1`) and empirical quantiles.
pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return domain("cannot summarize an empty sequence");
    }
    if values.iter().any(|v| v.is_nan()) {
        return domain("cannot summarize a sequence containing NaN");
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        n,
        mean,
        sd,
        sorted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    Asymmetric,
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CredibleInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub kind: IntervalKind,
}

impl CredibleInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Equal-tailed or normal-approximation credible interval.
pub fn credible_interval(values: &[f64], level: f64, kind: IntervalKind) -> Result<CredibleInterval> {
    if values.len() < 100 {
        return domain(format!(
            "credible intervals need at least 100 values, got {}",
            values.len()
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return domain(format!("level must lie in (0, 1), got {level}"));
    }
    let s = summarize(values)?;
    let alpha = 1.0 - level;
    let (lower, upper) = match kind {
        IntervalKind::Asymmetric => (s.quantile(alpha / 2.0), s.quantile(1.0 - alpha / 2.0)),
        IntervalKind::Symmetric => {
            let z = norm_quantile(1.0 - alpha / 2.0);
            (s.mean - z * s.sd, s.mean + z * s.sd)
        }
    };
    Ok(CredibleInterval {
        lower,
        upper,
        level,
        kind,
    })
}

/// Map each draw to `Y_{n-k,n} + σ((k/(np))^γ - 1)/γ`.
pub fn extreme_quantile_draws(draws: &[GpdParams], data: &ExcessData, p: f64) -> Result<Vec<f64>> {
    let ratio = data.k as f64 / data.n as f64;
    if !(p > 0.0 && p < ratio) {
        return domain(format!("p must lie in (0, k/n) = (0, {ratio}), got {p}"));
    }
    let log_t = (ratio / p).ln();
    Ok(draws
        .iter()
        .map(|t| data.threshold + t.sigma * unit_quantile_tail(t.gamma, log_t))
        .collect())
}

/// One mixture component: `H_γ((y - threshold)/scale - shift)` when the
/// argument is positive, zero otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveComponent {
    pub gamma: f64,
    pub scale: f64,
    pub shift: f64,
}

impl PredictiveComponent {
    #[inline]
    fn arg(&self, excess: f64) -> f64 {
        excess / self.scale - self.shift
    }

    #[inline]
    fn cdf(&self, excess: f64) -> f64 {
        let v = self.arg(excess);
        if v > 0.0 {
            unit_cdf(self.gamma, v)
        } else {
            0.0
        }
    }

    #[inline]
    fn pdf(&self, excess: f64) -> f64 {
        let v = self.arg(excess);
        if v > 0.0 {
            unit_pdf(self.gamma, v) / self.scale
        } else {
            0.0
        }
    }
}

/// Equal-weight mixture of GP components above a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub threshold: f64,
    pub components: Vec<PredictiveComponent>,
    /// Typical excess scale, used to seed quantile brackets.
    pub scale_hint: f64,
}

impl PredictiveDistribution {
    pub fn from_components(threshold: f64, components: Vec<PredictiveComponent>) -> Result<Self> {
        if components.is_empty() {
            return domain("predictive distribution needs at least one component");
        }
        let mut scales: Vec<f64> = components.iter().map(|c| c.scale).collect();
        scales.sort_by(f64::total_cmp);
        let scale_hint = scales[scales.len() / 2];
        Ok(PredictiveDistribution {
            threshold,
            components,
            scale_hint,
        })
    }

    pub fn cdf(&self, y: f64) -> f64 {
        let e = y - self.threshold;
        if e <= 0.0 {
            return 0.0;
        }
        self.components.iter().map(|c| c.cdf(e)).sum::<f64>() / self.components.len() as f64
    }

    pub fn pdf(&self, y: f64) -> f64 {
        let e = y - self.threshold;
        if e <= 0.0 {
            return 0.0;
        }
        self.components.iter().map(|c| c.pdf(e)).sum::<f64>() / self.components.len() as f64
    }

    fn cdf_pdf(&self, y: f64) -> (f64, f64) {
        let e = y - self.threshold;
        if e <= 0.0 {
            return (0.0, 0.0);
        }
        let (mut f, mut d) = (0.0, 0.0);
        for c in &self.components {
            f += c.cdf(e);
            d += c.pdf(e);
        }
        let m = self.components.len() as f64;
        (f / m, d / m)
    }

    fn upper_bracket(&self, level: f64, from: f64) -> Result<f64> {
        let limit = 1e12 * self.scale_hint.max(f64::MIN_POSITIVE);
        let mut width = (from - self.threshold).max(self.scale_hint);
        loop {
            let hi = self.threshold + width;
            if self.cdf(hi) >= level {
                return Ok(hi);
            }
            if width > limit {
                return Err(Error::Bracket(format!(
                    "level {level} not reached within 1e12 scale units of the threshold"
                )));
            }
            width *= 2.0;
        }
    }

    /// Solve `F(y) = level` by bisection to `|F - level| < 1e-10`.
    pub fn level_quantile(&self, level: f64) -> Result<f64> {
        if !(level > 0.0 && level < 1.0) {
            return domain(format!("level must lie in (0, 1), got {level}"));
        }
        let mut lo = self.threshold;
        let mut hi = self.upper_bracket(level, self.threshold)?;
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            let f = self.cdf(mid);
            if (f - level).abs() < 1e-10 {
                return Ok(mid);
            }
            if f < level {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Solve `F(y) = level` for many levels with warm-started, bracketed Newton.
    pub fn level_quantiles(&self, levels: &[f64]) -> Result<Vec<f64>> {
        let mut idx: Vec<usize> = (0..levels.len()).collect();
        idx.sort_by(|&a, &b| levels[a].total_cmp(&levels[b]));
        let mut out = vec![f64::NAN; levels.len()];
        let mut floor = self.threshold;
        for i in idx {
            let level = levels[i];
            if !(level > 0.0 && level < 1.0) {
                return domain(format!("level must lie in (0, 1), got {level}"));
            }
            let mut lo = floor;
            let mut hi = self.upper_bracket(level, floor)?;
            let mut y = if floor > self.threshold {
                floor
            } else {
                0.5 * (lo + hi)
            };
            for _ in 0..200 {
                let (f, d) = self.cdf_pdf(y);
                let r = f - level;
                if r.abs() < 1e-12 {
                    break;
                }
                if r < 0.0 {
                    lo = y;
                } else {
                    hi = y;
                }
                if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
                    break;
                }
                let newton = if d > 0.0 { y - r / d } else { f64::NAN };
                y = if newton > lo && newton < hi {
                    newton
                } else {
                    0.5 * (lo + hi)
                };
            }
            out[i] = y;
            floor = y;
        }
        Ok(out)
    }
}

/// Posterior predictive CDF `N^{-1} Σ H_{θ_i}(y - threshold)`.
pub fn predictive_cdf(draws: &[GpdParams], data: &ExcessData) -> Result<PredictiveDistribution> {
    predictive_from_draws(draws, data.threshold)
}

pub fn predictive_from_draws(draws: &[GpdParams], threshold: f64) -> Result<PredictiveDistribution> {
    let comps = draws
        .iter()
        .map(|t| PredictiveComponent {
            gamma: t.gamma,
            scale: t.sigma,
            shift: 0.0,
        })
        .collect();
    PredictiveDistribution::from_components(threshold, comps)
}

/// Predictive `(1 - p*)`-quantile.
pub fn predictive_quantile(pred: &PredictiveDistribution, p_star: f64) -> Result<f64> {
    if !(p_star > 0.0 && p_star < 1.0) {
        return domain(format!("p_star must lie in (0, 1), got {p_star}"));
    }
    pred.level_quantile(1.0 - p_star)
}

/// Number of interior grid points used for Wasserstein integrals.
pub const WASSERSTEIN_GRID: usize = 10_001;

/// Midpoint grid `p_i = (i - 1/2)/m` on `(0, 1)`.
pub fn wasserstein_grid() -> Vec<f64> {
    let m = WASSERSTEIN_GRID as f64;
    (1..=WASSERSTEIN_GRID).map(|i| (i as f64 - 0.5) / m).collect()
}

/// Anything with a quantile function.
pub trait QuantileSource {
    fn quantiles(&self, ps: &[f64]) -> Result<Vec<f64>>;
}

/// Empirical law of a sample, with the left-continuous inverse `x_(⌈np⌉)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLaw {
    sorted: Vec<f64>,
}

impl EmpiricalLaw {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| v.is_nan()) {
            return domain("empirical law needs a nonempty NaN-free sample");
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalLaw { sorted })
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let i = ((n as f64 * p).ceil() as usize).clamp(1, n);
        self.sorted[i - 1]
    }
}

impl QuantileSource for EmpiricalLaw {
    fn quantiles(&self, ps: &[f64]) -> Result<Vec<f64>> {
        Ok(ps.iter().map(|&p| self.quantile(p)).collect())
    }
}

/// Quantile function given in closed form.
pub struct QuantileFn<F: Fn(f64) -> f64>(pub F);

impl<F: Fn(f64) -> f64> QuantileSource for QuantileFn<F> {
    fn quantiles(&self, ps: &[f64]) -> Result<Vec<f64>> {
        Ok(ps.iter().map(|&p| (self.0)(p)).collect())
    }
}

impl QuantileSource for PredictiveDistribution {
    fn quantiles(&self, ps: &[f64]) -> Result<Vec<f64>> {
        self.level_quantiles(ps)
    }
}

/// `W_v(F, G) = (∫_0^1 |F^←(p) - G^←(p)|^v dp)^{1/v}` on the midpoint grid.
pub fn wasserstein(f: &dyn QuantileSource, g: &dyn QuantileSource, v: f64) -> Result<f64> {
    if !(v >= 1.0) {
        return domain(format!("Wasserstein order must be at least 1, got {v}"));
    }
    let ps = wasserstein_grid();
    let qf = f.quantiles(&ps)?;
    let qg = g.quantiles(&ps)?;
    let m = ps.len() as f64;
    let s = qf
        .iter()
        .zip(&qg)
        .map(|(a, b)| (a - b).abs().powf(v))
        .sum::<f64>()
        / m;
    Ok(s.powf(1.0 / v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpd::gpd_quantile;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn th(g: f64, s: f64) -> GpdParams {
        GpdParams::new(g, s).unwrap()
    }

    fn data(threshold: f64, n: usize, k: usize) -> ExcessData {
        ExcessData {
            threshold,
            excesses: vec![0.0; k],
            n,
            k,
            concomitants: None,
        }
    }

    #[test]
    fn summarize_examples() {
        let s = summarize(&[3.0; 7]).unwrap();
        assert_eq!((s.mean, s.sd), (3.0, 0.0));
        assert_eq!(summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap().median(), 2.5);
        assert!(summarize(&[]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v: Vec<f64> = (0..100_000)
            .map(|_| 1.5 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        assert!((summarize(&v).unwrap().mean - 1.5).abs() < 0.02);
    }

    #[test]
    fn interval_examples() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let ci = credible_interval(&v, 0.9, IntervalKind::Asymmetric).unwrap();
        assert_eq!((ci.lower, ci.upper), (5.5, 95.5));
        let ci = credible_interval(&[2.0; 200], 0.95, IntervalKind::Symmetric).unwrap();
        assert_eq!(ci.width(), 0.0);
        let ci = credible_interval(&[2.0; 200], 0.95, IntervalKind::Asymmetric).unwrap();
        assert_eq!(ci.width(), 0.0);
        assert!(credible_interval(&v[..50], 0.9, IntervalKind::Asymmetric).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let ci = credible_interval(&z, 0.95, IntervalKind::Symmetric).unwrap();
        assert!((ci.lower + 1.96).abs() < 0.02 && (ci.upper - 1.96).abs() < 0.02);
    }

    #[test]
    fn extreme_quantile_examples() {
        let d = data(2.0, 1000, 100);
        let q = extreme_quantile_draws(&[th(0.0, 1.0), th(1.0, 1.0)], &d, 0.001).unwrap();
        assert!((q[0] - (2.0 + 100f64.ln())).abs() < 1e-12);
        assert!((q[1] - 101.0).abs() < 1e-9);
        assert!(extreme_quantile_draws(&[th(0.0, 1.0)], &d, 0.1).is_err());
        assert!(extreme_quantile_draws(&[th(0.0, 1.0)], &d, 0.0).is_err());
    }

    #[test]
    fn predictive_examples() {
        let d = data(5.0, 100, 10);
        let one = predictive_cdf(&[th(0.0, 1.0)], &d).unwrap();
        assert!((one.cdf(6.0) - (1.0 - (-1f64).exp())).abs() < 1e-15);
        assert_eq!(one.cdf(5.0), 0.0);
        let two = predictive_cdf(&[th(0.0, 1.0), th(1.0, 1.0)], &d).unwrap();
        let want = (1.0 - (-1f64).exp() + 0.5) / 2.0;
        assert!((two.cdf(6.0) - want).abs() < 1e-15);
        // component beyond its endpoint counts as 1
        let capped = predictive_cdf(&[th(-0.4, 1.0), th(0.0, 1.0)], &d).unwrap();
        let want = (1.0 + 1.0 - (-3f64).exp()) / 2.0;
        assert!((capped.cdf(8.0) - want).abs() < 1e-15);
    }

    #[test]
    fn predictive_quantile_inverts_single_draw() {
        let d = data(5.0, 100, 10);
        let one = predictive_cdf(&[th(0.0, 1.0)], &d).unwrap();
        let q = predictive_quantile(&one, (-1f64).exp()).unwrap();
        assert!((q - 6.0).abs() < 1e-9);
        assert!(predictive_quantile(&one, 1.0).is_err());
    }

    fn mixed_draws(seed: u64) -> Vec<GpdParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..300)
            .map(|_| th(rng.gen_range(-0.3..0.8), rng.gen_range(0.5..2.0)))
            .collect()
    }

    #[test]
    fn predictive_quantile_matches_grid_oracle() {
        let pred = predictive_from_draws(&mixed_draws(12), 1.0).unwrap();
        for p_star in [0.5, 0.1, 0.01, 0.001] {
            let level = 1.0 - p_star;
            // oracle: dense log-spaced grid, then linear interpolation of the CDF
            let grid: Vec<f64> = (0..=200_000)
                .map(|i| 1.0 + 1e-6 * (1e9f64).powf(i as f64 / 200_000.0))
                .collect();
            let j = grid.iter().position(|&y| pred.cdf(y) >= level).unwrap();
            let (y0, y1) = (grid[j - 1], grid[j]);
            let (f0, f1) = (pred.cdf(y0), pred.cdf(y1));
            let oracle = y0 + (level - f0) / (f1 - f0) * (y1 - y0);
            let got = predictive_quantile(&pred, p_star).unwrap();
            assert!((got - oracle).abs() < 1e-6 * oracle.max(1.0), "{p_star}: {got} vs {oracle}");
            assert!((pred.cdf(got) - level).abs() < 1e-10);
        }
    }

    #[test]
    fn batched_quantiles_match_bisection() {
        let pred = predictive_from_draws(&mixed_draws(3), 0.0).unwrap();
        let levels = [0.001, 0.3, 0.5, 0.9, 0.999, 0.99999];
        let batch = pred.level_quantiles(&levels).unwrap();
        for (l, b) in levels.iter().zip(&batch) {
            let single = pred.level_quantile(*l).unwrap();
            assert!((pred.cdf(*b) - l).abs() < 1e-12);
            // bisection stops at a 1e-10 CDF residual, i.e. 1e-10/f in y
            assert!((b - single).abs() <= 2e-10 / pred.pdf(*b));
        }
    }

    #[test]
    fn predictive_is_monotone_on_grid() {
        let pred = predictive_from_draws(&mixed_draws(99), 0.0).unwrap();
        let mut prev = 0.0;
        for i in 0..1000 {
            let f = pred.cdf(i as f64 * 0.05);
            assert!(f >= prev);
            prev = f;
        }
    }

    #[test]
    fn bracket_failure_is_reported() {
        // a component with γ large enough that 1 - 1e-9 needs astronomically large y
        let pred = predictive_from_draws(&[th(3.0, 1.0)], 0.0).unwrap();
        assert!(matches!(pred.level_quantile(1.0 - 1e-9), Err(Error::Bracket(_))));
    }

    #[test]
    fn wasserstein_examples() {
        let a = EmpiricalLaw::new(&[1.0, 2.0, 5.0]).unwrap();
        assert_eq!(wasserstein(&a, &a, 2.0).unwrap(), 0.0);
        let da = EmpiricalLaw::new(&[3.0]).unwrap();
        let db = EmpiricalLaw::new(&[-1.5]).unwrap();
        assert!((wasserstein(&da, &db, 1.0).unwrap() - 4.5).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(2026);
        let e1: Vec<f64> = (0..100_000).map(|_| -(rng.gen::<f64>()).ln()).collect();
        let e2: Vec<f64> = (0..100_000).map(|_| -(rng.gen::<f64>()).ln() / 2.0).collect();
        let w = wasserstein(
            &EmpiricalLaw::new(&e1).unwrap(),
            &EmpiricalLaw::new(&e2).unwrap(),
            1.0,
        )
        .unwrap();
        assert!((w - 0.5).abs() < 0.02, "{w}");
    }

    #[test]
    fn wasserstein_closed_form_grid() {
        // ∫ |(-ln(1-p)) - (-ln(1-p))/2| dp = 1/2, up to the midpoint-grid error
        let f = QuantileFn(|p: f64| -(-p).ln_1p());
        let g = QuantileFn(|p: f64| -(-p).ln_1p() / 2.0);
        let w = wasserstein(&f, &g, 1.0).unwrap();
        assert!((w - 0.5).abs() < 1e-4, "{w}");
    }

    #[test]
    fn wasserstein_of_predictive_against_truth() {
        let pred = predictive_from_draws(&[th(0.2, 1.5)], 0.0).unwrap();
        let truth = QuantileFn(|p: f64| gpd_quantile(th(0.2, 1.5), p).unwrap());
        assert!(wasserstein(&pred, &truth, 1.0).unwrap() < 1e-8);
    }

    proptest! {
        #[test]
        fn wasserstein_scaling(
            xs in prop::collection::vec(-10.0f64..10.0, 1..40),
            ys in prop::collection::vec(-10.0f64..10.0, 1..40),
            a in 0.1f64..10.0,
            v in 1.0f64..3.0,
        ) {
            let f = EmpiricalLaw::new(&xs).unwrap();
            let g = EmpiricalLaw::new(&ys).unwrap();
            // F(a·) has quantile F^←/a
            let fs = EmpiricalLaw::new(&xs.iter().map(|x| x / a).collect::<Vec<_>>()).unwrap();
            let gs = EmpiricalLaw::new(&ys.iter().map(|x| x / a).collect::<Vec<_>>()).unwrap();
            let w = wasserstein(&f, &g, v).unwrap();
            let ws = wasserstein(&fs, &gs, v).unwrap();
            prop_assert!((ws - w / a).abs() <= 1e-9 * (1.0 + w));
        }

        #[test]
        fn extreme_quantile_monotone(
            g1 in -0.45f64..2.0, dg in 0.0f64..1.0,
            s1 in 0.1f64..5.0, ds in 0.0f64..5.0,
        ) {
            let d = data(1.0, 1000, 100);
            let q = |g: f64, s: f64| extreme_quantile_draws(&[th(g, s)], &d, 0.001).unwrap()[0];
            prop_assert!(q(g1 + dg, s1) >= q(g1, s1));
            prop_assert!(q(g1, s1 + ds) >= q(g1, s1));
        }

        #[test]
        fn predictive_quantile_monotone(p1 in 0.001f64..0.99, dp in 0.0f64..0.009) {
            let pred = predictive_from_draws(&mixed_draws(5), 0.0).unwrap();
            let q1 = predictive_quantile(&pred, p1).unwrap();
            let q2 = predictive_quantile(&pred, (p1 + dp).min(0.999)).unwrap();
            prop_assert!(q1 >= q2 - 1e-9);
        }
    }
}
