//! Product-form priors `π(γ, σ) = π_sh(γ) π_sc(σ)` and checks of their
//! integrability conditions.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Result};
use crate::gpd::GpdParams;
use crate::numeric::integrate;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Flat,
    Mdi,
    Jeffreys,
    DataDependent,
}

/// Density of `γ + 1/2 ~ Gamma(shape, rate)`, supported on `[-1/2, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftedGamma {
    pub shape: f64,
    pub rate: f64,
}

impl Default for ShiftedGamma {
    fn default() -> Self {
        ShiftedGamma {
            shape: 1.0,
            rate: 1.0,
        }
    }
}

impl ShiftedGamma {
    pub fn ln_pdf(&self, gamma: f64) -> f64 {
        let x = gamma + 0.5;
        if x < 0.0 {
            return f64::NEG_INFINITY;
        }
        if x == 0.0 {
            return match self.shape {
                a if a < 1.0 => f64::INFINITY,
                1.0 => self.rate.ln(),
                _ => f64::NEG_INFINITY,
            };
        }
        (self.shape - 1.0) * x.ln() + self.shape * self.rate.ln() - ln_gamma(self.shape)
            - self.rate * x
    }
}

/// Density family for the standardized scale `σ / σ̂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScaleBase {
    Gamma { shape: f64, rate: f64 },
    InverseGamma { shape: f64, scale: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl Default for ScaleBase {
    fn default() -> Self {
        ScaleBase::LogNormal { mu: 0.0, sigma: 1.0 }
    }
}

impl ScaleBase {
    pub fn ln_pdf(&self, r: f64) -> f64 {
        if !(r > 0.0) || !r.is_finite() {
            return f64::NEG_INFINITY;
        }
        match *self {
            ScaleBase::Gamma { shape, rate } => {
                (shape - 1.0) * r.ln() + shape * rate.ln() - ln_gamma(shape) - rate * r
            }
            ScaleBase::InverseGamma { shape, scale } => {
                shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * r.ln() - scale / r
            }
            ScaleBase::LogNormal { mu, sigma } => {
                let z = (r.ln() - mu) / sigma;
                -r.ln() - sigma.ln() - LN_SQRT_2PI - 0.5 * z * z
            }
        }
    }

    fn check(&self) -> Result<()> {
        let ok = match *self {
            ScaleBase::Gamma { shape, rate } => shape > 0.0 && rate > 0.0,
            ScaleBase::InverseGamma { shape, scale } => shape > 0.0 && scale > 0.0,
            ScaleBase::LogNormal { mu, sigma } => mu.is_finite() && sigma > 0.0,
        };
        if ok {
            Ok(())
        } else {
            domain(format!("invalid scale base density {self:?}"))
        }
    }
}

/// Shape truncation interval `(lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSupport {
    pub lower: f64,
    pub upper: f64,
}

impl Default for ShapeSupport {
    fn default() -> Self {
        ShapeSupport {
            lower: -0.5,
            upper: f64::INFINITY,
        }
    }
}

impl ShapeSupport {
    pub fn contains(&self, gamma: f64) -> bool {
        gamma > self.lower && gamma <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub kind: PriorKind,
    #[serde(default)]
    pub shape_support: ShapeSupport,
    /// Shape density for `data_dependent`.
    #[serde(default)]
    pub shape_density: ShiftedGamma,
    /// Standardized scale density for `data_dependent`.
    #[serde(default)]
    pub base_scale: ScaleBase,
    /// Plug-in scale estimate `σ̂_n` for `data_dependent`.
    #[serde(default)]
    pub sigma_hat: Option<f64>,
}

impl PriorSpec {
    pub fn new(kind: PriorKind) -> Self {
        PriorSpec {
            kind,
            shape_support: ShapeSupport::default(),
            shape_density: ShiftedGamma::default(),
            base_scale: ScaleBase::default(),
            sigma_hat: None,
        }
    }

    pub fn flat() -> Self {
        Self::new(PriorKind::Flat)
    }

    pub fn mdi() -> Self {
        Self::new(PriorKind::Mdi)
    }

    pub fn jeffreys() -> Self {
        Self::new(PriorKind::Jeffreys)
    }

    pub fn data_dependent(
        shape_density: ShiftedGamma,
        base_scale: ScaleBase,
        sigma_hat: f64,
    ) -> Result<Self> {
        let spec = PriorSpec {
            kind: PriorKind::DataDependent,
            shape_density,
            base_scale,
            sigma_hat: Some(sigma_hat),
            ..Self::new(PriorKind::DataDependent)
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Restrict the shape to `(lower, upper]`.
    pub fn truncated(mut self, lower: f64, upper: f64) -> Result<Self> {
        self.shape_support = ShapeSupport { lower, upper };
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.shape_support;
        if !(b.lower >= -0.5) || !(b.upper > b.lower) {
            return domain(format!(
                "shape support ({}, {}] must be a nonempty subset of (-1/2, inf)",
                b.lower, b.upper
            ));
        }
        if self.kind == PriorKind::DataDependent {
            match self.sigma_hat {
                Some(s) if s > 0.0 && s.is_finite() => {}
                _ => return domain("data_dependent prior needs a positive sigma_hat"),
            }
            let sh = self.shape_density;
            if !(sh.shape > 0.0) || !(sh.rate > 0.0) {
                return domain(format!("invalid shifted gamma {sh:?}"));
            }
            self.base_scale.check()?;
        }
        Ok(())
    }

    /// Log shape factor `log π_sh(γ)` on the shape support, `-∞` elsewhere.
    pub fn ln_shape_density(&self, gamma: f64) -> f64 {
        if !(gamma > -0.5) || !self.shape_support.contains(gamma) {
            return f64::NEG_INFINITY;
        }
        match self.kind {
            PriorKind::Flat => 0.0,
            PriorKind::Mdi => -(gamma + 1.0),
            PriorKind::Jeffreys => -gamma.ln_1p() - 0.5 * (2.0 * gamma).ln_1p(),
            PriorKind::DataDependent => self.shape_density.ln_pdf(gamma),
        }
    }
}

/// Unnormalized log prior density; `-∞` outside the support.
pub fn log_prior(spec: &PriorSpec, theta: GpdParams) -> f64 {
    let (g, s) = (theta.gamma, theta.sigma);
    if !(s > 0.0) || !s.is_finite() {
        return f64::NEG_INFINITY;
    }
    let sh = spec.ln_shape_density(g);
    if sh == f64::NEG_INFINITY {
        return sh;
    }
    match spec.kind {
        PriorKind::DataDependent => match spec.sigma_hat {
            Some(sh_hat) if sh_hat > 0.0 => {
                sh + spec.base_scale.ln_pdf(s / sh_hat) - sh_hat.ln()
            }
            _ => f64::NEG_INFINITY,
        },
        _ => sh - s.ln(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseResult {
    pub name: String,
    pub passed: bool,
    /// Integral or supremum computed for the clause, when one was needed.
    pub value: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorValidation {
    pub passed: bool,
    pub clauses: Vec<ClauseResult>,
}

impl PriorValidation {
    /// Name of the first failing clause.
    pub fn failing_clause(&self) -> Option<&str> {
        self.clauses
            .iter()
            .find(|c| !c.passed)
            .map(|c| c.name.as_str())
    }
}

/// Integral over `(a, b]` of a function that may blow up at `a`.
///
/// The lower end is truncated at `a + ε` for `ε = 1e-2, 1e-4, …, 1e-14`;
/// the integral is declared finite when the increments decay geometrically
/// or become negligible.
fn integral_from_singular_end(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, bool) {
    if b <= a {
        return (0.0, true);
    }
    let mut values = Vec::new();
    let mut prev_cut = b;
    let mut total = 0.0;
    for j in 1..=7 {
        let cut = (a + 10f64.powi(-2 * j)).min(b);
        if cut < prev_cut {
            let q = integrate(f, cut, prev_cut, 1e-13, 1e-11, 2000);
            total += q.value;
            prev_cut = cut;
        }
        values.push(total);
    }
    if !total.is_finite() {
        return (total, false);
    }
    let incs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let last = *incs.last().unwrap();
    let scale = 1.0 + total.abs();
    if last <= 1e-9 * scale {
        return (total, true);
    }
    let tail = &incs[incs.len() - 3..];
    let decaying = tail.windows(2).all(|w| w[1] <= 0.9 * w[0]);
    // extrapolate the remaining geometric tail
    let ratio = tail[2] / tail[1];
    let remainder = if decaying { last * ratio / (1.0 - ratio) } else { 0.0 };
    (total + remainder, decaying)
}

/// Check the machine-checkable integrability conditions on the prior.
///
/// With a Wasserstein order `v`, also check the moment conditions needed
/// for predictive consistency in order `v`.
pub fn validate_prior(spec: &PriorSpec, wasserstein_order: Option<f64>) -> PriorValidation {
    let mut clauses = Vec::new();
    if let Err(e) = spec.validate() {
        clauses.push(ClauseResult {
            name: "spec".into(),
            passed: false,
            value: None,
            detail: e.to_string(),
        });
        return PriorValidation {
            passed: false,
            clauses,
        };
    }
    let b = spec.shape_support;
    let pi = |g: f64| spec.ln_shape_density(g).exp();

    // integrability near -1/2
    let lo = b.lower.max(-0.5);
    let hi = b.upper.min(0.0);
    let (val, finite) = integral_from_singular_end(&pi, lo, hi);
    clauses.push(ClauseResult {
        name: "shape_integrable_below_zero".into(),
        passed: finite,
        value: Some(val),
        detail: format!("integral of pi_sh over ({lo}, {hi}]"),
    });

    // boundedness on the positive half-line
    let mut sup: f64 = 0.0;
    let mut tail_growing = false;
    let mut prev_tail = f64::NAN;
    if b.upper > 0.0 {
        for i in 0..=400 {
            let g = 10f64.powf(-8.0 + 14.0 * i as f64 / 400.0);
            if !b.contains(g) {
                continue;
            }
            let v = pi(g);
            sup = sup.max(v);
            if g >= 1e3 {
                if prev_tail.is_finite() && v > prev_tail * (1.0 + 1e-9) {
                    tail_growing = true;
                }
                prev_tail = v;
            }
        }
    }
    let bounded = sup.is_finite() && !tail_growing;
    clauses.push(ClauseResult {
        name: "shape_bounded_above_zero".into(),
        passed: bounded,
        value: Some(sup),
        detail: "supremum of pi_sh over the positive shapes".into(),
    });

    if let Some(v) = wasserstein_order {
        let inside = b.upper < 1.0 / v && b.lower >= -0.5;
        clauses.push(ClauseResult {
            name: "support_within_moment_range".into(),
            passed: inside,
            value: None,
            detail: format!(
                "shape support ({}, {}] against (-1/2, {})",
                b.lower,
                b.upper,
                1.0 / v
            ),
        });
        if inside {
            let f = |g: f64| (-(-g * v).ln_1p() / v).exp() * pi(g);
            let (val, finite) = integral_from_singular_end(&f, lo, b.upper);
            clauses.push(ClauseResult {
                name: "moment_integral_finite".into(),
                passed: finite && val.is_finite(),
                value: Some(val),
                detail: format!("integral of (1 - g v)^(-1/v) pi_sh over B with v = {v}"),
            });
        } else {
            clauses.push(ClauseResult {
                name: "moment_integral_finite".into(),
                passed: false,
                value: None,
                detail: "moment integrand is undefined on part of the support".into(),
            });
        }
    }

    PriorValidation {
        passed: clauses.iter().all(|c| c.passed),
        clauses,
    }
}
