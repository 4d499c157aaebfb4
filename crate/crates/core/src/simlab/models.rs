//! Data generators with closed-form truths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta as BetaDist, Continuous, ContinuousCDF};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{domain, Result};
use crate::numeric::integrate;

/// Uniform draw on the open interval (0, 1).
pub(crate) fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// The nine marginal laws, three per domain of attraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MarginalModel {
    Frechet { alpha: f64 },
    Pareto { alpha: f64 },
    HalfCauchy,
    Exponential { rate: f64 },
    Gumbel,
    Gamma { shape: f64 },
    Beta { a: f64, b: f64 },
    /// `F(y) = exp(-(-y)^α)` for `y < 0`.
    ReverseWeibull { alpha: f64 },
    /// `F(y) = 1 - (1 - y)^α` on `[0, 1]`.
    PowerLaw { alpha: f64 },
}

impl MarginalModel {
    /// Default parameterization for a family name.
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "frechet" => MarginalModel::Frechet { alpha: 1.0 },
            "pareto" => MarginalModel::Pareto { alpha: 2.0 },
            "half_cauchy" => MarginalModel::HalfCauchy,
            "exponential" => MarginalModel::Exponential { rate: 1.0 },
            "gumbel" => MarginalModel::Gumbel,
            "gamma" => MarginalModel::Gamma { shape: 2.0 },
            "beta" => MarginalModel::Beta { a: 2.0, b: 4.0 },
            "weibull" | "reverse_weibull" => MarginalModel::ReverseWeibull { alpha: 4.0 },
            "power_law" => MarginalModel::PowerLaw { alpha: 3.0 },
            other => return domain(format!("unknown marginal family '{other}'")),
        })
    }

    pub fn all_defaults() -> Vec<Self> {
        [
            "frechet",
            "pareto",
            "half_cauchy",
            "exponential",
            "gumbel",
            "gamma",
            "beta",
            "weibull",
            "power_law",
        ]
        .iter()
        .map(|n| Self::by_name(n).unwrap())
        .collect()
    }

    pub fn name(&self) -> &'static str {
        match self {
            MarginalModel::Frechet { .. } => "frechet",
            MarginalModel::Pareto { .. } => "pareto",
            MarginalModel::HalfCauchy => "half_cauchy",
            MarginalModel::Exponential { .. } => "exponential",
            MarginalModel::Gumbel => "gumbel",
            MarginalModel::Gamma { .. } => "gamma",
            MarginalModel::Beta { .. } => "beta",
            MarginalModel::ReverseWeibull { .. } => "weibull",
            MarginalModel::PowerLaw { .. } => "power_law",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            MarginalModel::Frechet { alpha }
            | MarginalModel::Pareto { alpha }
            | MarginalModel::ReverseWeibull { alpha }
            | MarginalModel::PowerLaw { alpha } => alpha > 0.0,
            MarginalModel::Exponential { rate } => rate > 0.0,
            MarginalModel::Gamma { shape } => shape > 0.0,
            MarginalModel::Beta { a, b } => a > 0.0 && b > 0.0,
            MarginalModel::HalfCauchy | MarginalModel::Gumbel => true,
        };
        if ok {
            Ok(())
        } else {
            domain(format!("invalid parameters for {self:?}"))
        }
    }

    /// True extreme value index.
    pub fn gamma0(&self) -> f64 {
        match *self {
            MarginalModel::Frechet { alpha } | MarginalModel::Pareto { alpha } => 1.0 / alpha,
            MarginalModel::HalfCauchy => 1.0,
            MarginalModel::Exponential { .. } | MarginalModel::Gumbel | MarginalModel::Gamma { .. } => 0.0,
            MarginalModel::Beta { b, .. } => -1.0 / b,
            MarginalModel::ReverseWeibull { alpha } | MarginalModel::PowerLaw { alpha } => -1.0 / alpha,
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match *self {
            MarginalModel::Frechet { alpha } => {
                if y <= 0.0 {
                    0.0
                } else {
                    (-y.powf(-alpha)).exp()
                }
            }
            MarginalModel::Pareto { alpha } => {
                if y <= 1.0 {
                    0.0
                } else {
                    -(-alpha * y.ln()).exp_m1()
                }
            }
            MarginalModel::HalfCauchy => {
                if y <= 0.0 {
                    0.0
                } else {
                    y.atan() * std::f64::consts::FRAC_2_PI
                }
            }
            MarginalModel::Exponential { rate } => {
                if y <= 0.0 {
                    0.0
                } else {
                    -(-rate * y).exp_m1()
                }
            }
            MarginalModel::Gumbel => (-(-y).exp()).exp(),
            MarginalModel::Gamma { shape } => {
                if y <= 0.0 {
                    0.0
                } else {
                    gamma_lr(shape, y)
                }
            }
            MarginalModel::Beta { a, b } => BetaDist::new(a, b).unwrap().cdf(y.clamp(0.0, 1.0)),
            MarginalModel::ReverseWeibull { alpha } => {
                if y >= 0.0 {
                    1.0
                } else {
                    (-(-y).powf(alpha)).exp()
                }
            }
            MarginalModel::PowerLaw { alpha } => {
                if y <= 0.0 {
                    0.0
                } else if y >= 1.0 {
                    1.0
                } else {
                    -(alpha * (-y).ln_1p()).exp_m1()
                }
            }
        }
    }

    pub fn pdf(&self, y: f64) -> f64 {
        match *self {
            MarginalModel::Frechet { alpha } => {
                if y <= 0.0 {
                    0.0
                } else {
                    alpha * y.powf(-alpha - 1.0) * (-y.powf(-alpha)).exp()
                }
            }
            MarginalModel::Pareto { alpha } => {
                if y < 1.0 {
                    0.0
                } else {
                    alpha * y.powf(-alpha - 1.0)
                }
            }
            MarginalModel::HalfCauchy => {
                if y < 0.0 {
                    0.0
                } else {
                    std::f64::consts::FRAC_2_PI / (1.0 + y * y)
                }
            }
            MarginalModel::Exponential { rate } => {
                if y < 0.0 {
                    0.0
                } else {
                    rate * (-rate * y).exp()
                }
            }
            MarginalModel::Gumbel => (-y - (-y).exp()).exp(),
            MarginalModel::Gamma { shape } => {
                if y <= 0.0 {
                    0.0
                } else {
                    ((shape - 1.0) * y.ln() - y - ln_gamma(shape)).exp()
                }
            }
            MarginalModel::Beta { a, b } => {
                if !(0.0..=1.0).contains(&y) {
                    0.0
                } else {
                    BetaDist::new(a, b).unwrap().pdf(y)
                }
            }
            MarginalModel::ReverseWeibull { alpha } => {
                if y >= 0.0 {
                    0.0
                } else {
                    let t = -y;
                    alpha * t.powf(alpha - 1.0) * (-t.powf(alpha)).exp()
                }
            }
            MarginalModel::PowerLaw { alpha } => {
                if !(0.0..=1.0).contains(&y) {
                    0.0
                } else {
                    alpha * (1.0 - y).powf(alpha - 1.0)
                }
            }
        }
    }

    /// Quantile `F^←(p)` for `p ∈ (0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            MarginalModel::Frechet { alpha } => (-p.ln()).powf(-1.0 / alpha),
            MarginalModel::Pareto { alpha } => (-(-p).ln_1p() / alpha).exp(),
            MarginalModel::HalfCauchy => (p * std::f64::consts::FRAC_PI_2).tan(),
            MarginalModel::Exponential { rate } => -(-p).ln_1p() / rate,
            MarginalModel::Gumbel => -(-p.ln()).ln(),
            MarginalModel::ReverseWeibull { alpha } => -(-p.ln()).powf(1.0 / alpha),
            MarginalModel::PowerLaw { alpha } => -((-p).ln_1p() / alpha).exp_m1(),
            MarginalModel::Gamma { shape } => {
                let hi = (shape + 10.0 * shape.sqrt() + 50.0) * 4.0;
                self.invert(p, 0.0, hi)
            }
            MarginalModel::Beta { .. } => self.invert(p, 0.0, 1.0),
        }
    }

    /// Bracketed Newton inversion of the CDF on `[lo, hi]`.
    fn invert(&self, p: f64, mut lo: f64, mut hi: f64) -> f64 {
        while self.cdf(hi) < p {
            lo = hi;
            hi *= 2.0;
        }
        let mut y = 0.5 * (lo + hi);
        for _ in 0..200 {
            let r = self.cdf(y) - p;
            if r.abs() < 1e-15 {
                break;
            }
            if r < 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            if hi - lo < 1e-15 * hi.abs().max(1e-300) {
                break;
            }
            let d = self.pdf(y);
            let step = if d > 0.0 { y - r / d } else { f64::NAN };
            y = if step > lo && step < hi {
                step
            } else {
                0.5 * (lo + hi)
            };
        }
        y
    }

    /// Tail quantile `U(t) = F^←(1 - 1/t)`.
    pub fn tail_quantile(&self, t: f64) -> f64 {
        self.quantile(1.0 - 1.0 / t)
    }

    /// Scale function `a₀(t) = t U'(t) = 1/(t f(U(t)))`.
    pub fn scale_fn(&self, t: f64) -> f64 {
        1.0 / (t * self.pdf(self.tail_quantile(t)))
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.quantile(open01(rng))).collect()
    }
}

/// Inverse-CDF sample of size `n`.
pub fn sample_marginal(model: &MarginalModel, n: usize, seed: u64) -> Result<Vec<f64>> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(model.sample_with(n, &mut rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScedasisShape {
    StraightLine,
    BrokenLine,
    Bump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum CovariateLaw {
    Uniform,
    Beta { a: f64, b: f64 },
}

impl CovariateLaw {
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "uniform" => CovariateLaw::Uniform,
            "beta22" | "beta(2,2)" => CovariateLaw::Beta { a: 2.0, b: 2.0 },
            "beta25" | "beta(2,5)" => CovariateLaw::Beta { a: 2.0, b: 5.0 },
            "beta52" | "beta(5,2)" => CovariateLaw::Beta { a: 5.0, b: 2.0 },
            other => return domain(format!("unknown covariate law '{other}'")),
        })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        match *self {
            CovariateLaw::Uniform => 1.0,
            CovariateLaw::Beta { a, b } => BetaDist::new(a, b).unwrap().pdf(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match *self {
            CovariateLaw::Uniform => x,
            CovariateLaw::Beta { a, b } => BetaDist::new(a, b).unwrap().cdf(x),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            CovariateLaw::Uniform => open01(rng),
            CovariateLaw::Beta { a, b } => {
                use rand_distr::Distribution;
                rand_distr::Beta::new(a, b).unwrap().sample(rng)
            }
        }
    }
}

/// Proportional-tail model `F_x(y) = exp(-c(x)/y)` with scalar covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalModel {
    pub scedasis: ScedasisShape,
    pub beta: f64,
    pub covariate_law: CovariateLaw,
}

impl ConditionalModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > -1.0) || !self.beta.is_finite() {
            return domain(format!("scedasis slope must exceed -1, got {}", self.beta));
        }
        if let CovariateLaw::Beta { a, b } = self.covariate_law {
            if !(a > 0.0 && b > 0.0) {
                return domain("covariate beta parameters must be positive");
            }
        }
        Ok(())
    }

    /// Unnormalized scedasis `c(x)` as used by the response law.
    pub fn c_raw(&self, x: f64) -> f64 {
        let b = self.beta;
        match self.scedasis {
            ScedasisShape::StraightLine => 1.0 + b * x,
            ScedasisShape::BrokenLine => {
                if x <= 0.5 {
                    1.0 + 2.0 * b * x
                } else {
                    1.0 + 2.0 * b * (1.0 - x)
                }
            }
            ScedasisShape::Bump => {
                if x <= 0.4 || x >= 0.6 {
                    1.0
                } else if x <= 0.5 {
                    1.0 + 10.0 * b * (x - 0.4)
                } else {
                    1.0 + 10.0 * b * (0.6 - x)
                }
            }
        }
    }

    /// `∫ c(x) dP_X(x)`.
    pub fn c_mean(&self) -> f64 {
        let cuts = [0.0, 0.4, 0.5, 0.6, 1.0];
        cuts.windows(2)
            .map(|w| {
                integrate(
                    |x| self.c_raw(x) * self.covariate_law.pdf(x),
                    w[0],
                    w[1],
                    1e-13,
                    1e-12,
                    500,
                )
                .value
            })
            .sum()
    }

    /// Scedasis normalized to integrate to one against the covariate law.
    pub fn c0(&self, x: f64) -> f64 {
        self.c_raw(x) / self.c_mean()
    }

    /// `F_x^←(1 - p) = -c(x)/log(1 - p)`.
    pub fn conditional_quantile(&self, x: f64, p: f64) -> f64 {
        -self.c_raw(x) / (-p).ln_1p()
    }

    /// Quantile at level `q` of `Y | X = x` restricted to its top `k/n` tail.
    pub fn conditional_excess_quantile(&self, x: f64, tail: f64, q: f64) -> f64 {
        self.conditional_quantile(x, tail * (1.0 - q))
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x = self.covariate_law.sample(rng);
            let u = open01(rng);
            xs.push(x);
            ys.push(-self.c_raw(x) / u.ln());
        }
        (xs, ys)
    }
}

/// Seeded `(x_i, y_i)` pairs with `y_i = -c(x_i)/log u_i`.
pub fn sample_conditional(model: &ConditionalModel, n: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(model.sample_with(n, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_on_grid() {
        for m in MarginalModel::all_defaults() {
            for i in 1..=99 {
                let p = i as f64 / 100.0;
                let q = m.quantile(p);
                assert!((m.cdf(q) - p).abs() < 1e-10, "{} at {p}", m.name());
            }
        }
    }

    #[test]
    fn closed_forms() {
        let e = MarginalModel::by_name("exponential").unwrap();
        assert!((e.quantile(1.0 - (-1f64).exp()) - 1.0).abs() < 1e-15);
        assert!((e.scale_fn(21.46) - 1.0).abs() < 1e-12);
        let p = MarginalModel::Pareto { alpha: 2.0 };
        assert_eq!(p.gamma0(), 0.5);
        for t in [10.0, 100.0, 1000.0] {
            assert!((p.tail_quantile(t) / t.sqrt() - 1.0).abs() < 1e-12);
            assert!((p.scale_fn(t) - 0.5 * t.sqrt()).abs() < 1e-9 * t);
        }
    }

    #[test]
    fn frechet_scale_matches_derivative_of_tail_quantile() {
        // oracle: central difference of U(t) = (-log(1 - 1/t))^{-1}
        let m = MarginalModel::Frechet { alpha: 1.0 };
        let u = |t: f64| -1.0 / (-1.0 / t).ln_1p();
        for t in [5.0, 21.46, 300.0] {
            let h = 1e-4 * t;
            let fd = t * (u(t + h) - u(t - h)) / (2.0 * h);
            assert!((m.scale_fn(t) - fd).abs() < 1e-6 * fd, "{t}");
        }
    }

    #[test]
    fn scale_fn_numeric_check_all_families() {
        for m in MarginalModel::all_defaults() {
            let t = 50.0;
            let h = 1e-5 * t;
            let fd = t * (m.tail_quantile(t + h) - m.tail_quantile(t - h)) / (2.0 * h);
            assert!((m.scale_fn(t) - fd).abs() < 1e-5 * fd.abs(), "{}", m.name());
        }
    }

    #[test]
    fn exponential_sample_mean() {
        let xs = sample_marginal(&MarginalModel::Exponential { rate: 1.0 }, 100_000, 3).unwrap();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((m - 1.0).abs() < 0.02);
        assert_eq!(xs, sample_marginal(&MarginalModel::Exponential { rate: 1.0 }, 100_000, 3).unwrap());
    }

    #[test]
    fn conditional_examples() {
        let flat = ConditionalModel {
            scedasis: ScedasisShape::StraightLine,
            beta: 0.0,
            covariate_law: CovariateLaw::Uniform,
        };
        // F(y) = exp(-1/y) has median 1/log 2
        assert!((flat.conditional_quantile(0.3, 0.5) - 1.0 / 2f64.ln()).abs() < 1e-12);
        let lin = ConditionalModel { beta: 1.0, ..flat };
        assert_eq!(lin.c_raw(1.0), 2.0);
        assert!((lin.conditional_quantile(1.0, 0.5) - 2.0 / 2f64.ln()).abs() < 1e-12);
        let q = lin.conditional_quantile(0.5, 0.001);
        assert!((q / 1.5 - 999.4997).abs() < 1e-3);
        assert!((lin.c_mean() - 1.5).abs() < 1e-12);
        assert!(ConditionalModel { beta: -1.0, ..flat }.validate().is_err());
    }

    #[test]
    fn shapes_integrate_correctly() {
        for (shape, want) in [
            (ScedasisShape::StraightLine, 1.0 + 0.5 * 0.7),
            (ScedasisShape::BrokenLine, 1.0 + 0.5 * 0.7),
            (ScedasisShape::Bump, 1.0 + 0.1 * 0.7),
        ] {
            let m = ConditionalModel {
                scedasis: shape,
                beta: 0.7,
                covariate_law: CovariateLaw::Uniform,
            };
            assert!((m.c_mean() - want).abs() < 1e-10, "{shape:?}");
        }
    }

    #[test]
    fn zero_slope_gives_unit_frechet_marginal() {
        for law in ["uniform", "beta22", "beta25", "beta52"] {
            let m = ConditionalModel {
                scedasis: ScedasisShape::Bump,
                beta: 0.0,
                covariate_law: CovariateLaw::by_name(law).unwrap(),
            };
            let (_, mut y) = sample_conditional(&m, 100_000, 12).unwrap();
            y.sort_by(f64::total_cmp);
            let n = y.len() as f64;
            let ks = y
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let f = (-1.0 / v).exp();
                    (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
                })
                .fold(0.0, f64::max);
            assert!(ks < 0.01, "{law}: {ks}");
        }
    }
}
