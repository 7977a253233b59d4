//! Pearson Type III in (mean, standard deviation, skewness) form.
//!
//! For skew γ ≠ 0 this is a shifted, possibly reflected, gamma law with shape
//! `4/γ²`, scale `σ|γ|/2` and origin `μ - 2σ/γ`. γ = 0 is the normal law.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use super::{FitError, Result};
use crate::lmoments::LMoments;
use crate::numeric::{bisect, ln_gamma_ratio};

/// |γ| below this is the normal law.
const NORMAL_SKEW_EPS: f64 = 1e-9;
/// Between the normal threshold and this, the cdf is a third-order
/// Edgeworth expansion around the normal (error O(γ⁴)); the incomplete gamma
/// function loses accuracy past shape `4/0.002² = 1e6`.
const EDGEWORTH_SKEW: f64 = 2e-3;
/// Up to this |γ| τ3 comes from its odd power series in γ (error below
/// 3e-14); the regularized incomplete beta loses accuracy at the large
/// shapes involved.
const SERIES_SKEW: f64 = 0.3;
/// Coefficients of γ, γ³, …, γ¹¹ in τ3(γ).
const TAU3_SERIES: [f64; 6] = [
    0.162_867_503_967_639_97,
    2.073_544_610_699_12e-3,
    -2.660_656_200_281_54e-4,
    -1.942_561_745_926_14e-5,
    3.916_833_086_909_24e-6,
    5.592_772_175_186_81e-7,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pe3Params {
    pub mu: f64,
    pub sigma: f64,
    pub gamma_skew: f64,
}

fn std_normal() -> Normal {
    Normal::standard()
}

impl Pe3Params {
    pub fn new(mu: f64, sigma: f64, gamma_skew: f64) -> Result<Self> {
        let p = Self {
            mu,
            sigma,
            gamma_skew,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.gamma_skew.is_finite() && self.sigma.is_finite())
            || self.sigma <= 0.0
        {
            return Err(FitError::InvalidParams(format!(
                "pe3 requires finite parameters and sigma > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    fn is_normal(&self) -> bool {
        self.gamma_skew.abs() < NORMAL_SKEW_EPS
    }

    /// Gamma shape, scale and origin.
    fn gamma_form(&self) -> (f64, f64, f64) {
        let g = self.gamma_skew;
        let shape = 4.0 / (g * g);
        let scale = 0.5 * self.sigma * g.abs();
        let origin = self.mu - 2.0 * self.sigma / g;
        (shape, scale, origin)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.tails(x).0
    }

    /// `1 - F(x)`, computed directly in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        self.tails(x).1
    }

    fn tails(&self, x: f64) -> (f64, f64) {
        if self.is_normal() {
            let z = (x - self.mu) / self.sigma;
            let n = std_normal();
            return (n.cdf(z), n.cdf(-z));
        }
        let g = self.gamma_skew;
        let (lower, upper) = if g.abs() < EDGEWORTH_SKEW {
            // reflect negative skew onto the positive-skew expansion
            let z = (x - self.mu) / self.sigma * g.signum();
            let (p, q, _) = edgeworth(g.abs(), z);
            (p, q)
        } else {
            let (shape, scale, origin) = self.gamma_form();
            // distance into the support, in gamma units
            let y = if g > 0.0 {
                (x - origin) / scale
            } else {
                (origin - x) / scale
            };
            gamma_tails(shape, y)
        };
        if g > 0.0 {
            (lower, upper)
        } else {
            (upper, lower)
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(FitError::ProbabilityOutOfRange(u));
        }
        Ok(self.quantile_split(u, 1.0 - u))
    }

    pub(crate) fn quantile_split(&self, u: f64, v: f64) -> f64 {
        if self.is_normal() {
            let z = if u < 0.5 {
                std_normal().inverse_cdf(u)
            } else {
                -std_normal().inverse_cdf(v)
            };
            return self.mu + self.sigma * z;
        }
        let g = self.gamma_skew;
        if g.abs() < EDGEWORTH_SKEW {
            let z = if g > 0.0 {
                edgeworth_quantile(g, u, v)
            } else {
                -edgeworth_quantile(-g, v, u)
            };
            return self.mu + self.sigma * z;
        }
        let (shape, scale, origin) = self.gamma_form();
        if self.gamma_skew > 0.0 {
            origin + scale * gamma_quantile(shape, u, v)
        } else {
            origin - scale * gamma_quantile(shape, v, u)
        }
    }

    /// λ1, λ2 and τ3 are exact; τ4 has no closed form and is left as NaN.
    pub fn lmoments_partial(&self) -> LMoments {
        let lambda2 = if self.is_normal() {
            self.sigma / std::f64::consts::PI.sqrt()
        } else {
            let (shape, scale, _) = self.gamma_form();
            scale * ln_gamma_ratio(shape, 0.5).exp() / std::f64::consts::PI.sqrt()
        };
        let tau3 = pe3_tau3(self.gamma_skew);
        LMoments {
            lambda1: self.mu,
            lambda2,
            tau3,
            tau4: f64::NAN,
            n: 0,
        }
    }
}

/// `(P(a, y), Q(a, y))`, regularized lower and upper incomplete gamma.
fn gamma_tails(shape: f64, y: f64) -> (f64, f64) {
    if y <= 0.0 {
        return (0.0, 1.0);
    }
    if !y.is_finite() {
        return (1.0, 0.0);
    }
    (gamma_lr(shape, y), gamma_ur(shape, y))
}

fn hermite(z: f64) -> [f64; 10] {
    // probabilists' Hermite polynomials He_0..He_9
    let mut he = [0.0; 10];
    he[0] = 1.0;
    he[1] = z;
    for n in 2..10 {
        he[n] = z * he[n - 1] - (n - 1) as f64 * he[n - 2];
    }
    he
}

/// Edgeworth expansion of the standardized gamma law with skew γ > 0 through
/// terms in γ³. Returns `(F(z), 1 - F(z), f(z))`.
fn edgeworth(g: f64, z: f64) -> (f64, f64, f64) {
    let n = std_normal();
    let he = hermite(z);
    // standardized cumulants: κ3 = γ, κ4 = 3γ²/2, κ5 = 3γ³
    let k3 = g;
    let k4 = 1.5 * g * g;
    let k5 = 3.0 * g * g * g;
    let c2 = k3 / 6.0;
    let c3 = k4 / 24.0;
    let c5 = k3 * k3 / 72.0;
    let c4 = k5 / 120.0;
    let c6 = k3 * k4 / 144.0;
    let c8 = k3 * k3 * k3 / 1296.0;
    let cdf_corr = c2 * he[2] + c3 * he[3] + c4 * he[4] + c5 * he[5] + c6 * he[6] + c8 * he[8];
    let pdf_corr = c2 * he[3] + c3 * he[4] + c4 * he[5] + c5 * he[6] + c6 * he[7] + c8 * he[9];
    let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let lower = (n.cdf(z) - phi * cdf_corr).clamp(0.0, 1.0);
    let upper = (n.cdf(-z) + phi * cdf_corr).clamp(0.0, 1.0);
    (lower, upper, (phi * (1.0 + pdf_corr)).max(0.0))
}

/// Root of the Edgeworth cdf at `u` (with `v = 1 - u`) in standard units.
fn edgeworth_quantile(g: f64, u: f64, v: f64) -> f64 {
    let n = std_normal();
    let z0 = if u < 0.5 { n.inverse_cdf(u) } else { -n.inverse_cdf(v) };
    // Cornish–Fisher start
    let mut z = z0 + g / 6.0 * (z0 * z0 - 1.0);
    let upper_tail = u > 0.5;
    for _ in 0..50 {
        let (p, q, f) = edgeworth(g, z);
        let r = if upper_tail { v - q } else { p - u };
        if !(f > 0.0) {
            break;
        }
        let step = r / f;
        z -= step;
        if step.abs() <= 1e-15 * (1.0 + z.abs()) {
            break;
        }
    }
    z
}

/// Gamma(shape, 1) quantile at `u` (with `v = 1 - u`), by safeguarded
/// Newton on whichever tail is smaller.
fn gamma_quantile(shape: f64, u: f64, v: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if v <= 0.0 {
        return f64::INFINITY;
    }
    let n = std_normal();
    let z = if u < 0.5 {
        n.inverse_cdf(u)
    } else {
        -n.inverse_cdf(v)
    };
    // Wilson–Hilferty start
    let c = 1.0 / (9.0 * shape);
    let guess = shape * (1.0 - c + z * c.sqrt()).max(0.0).powi(3);
    let upper_tail = u > 0.5;
    let target = if upper_tail { v } else { u };
    let f = |y: f64| {
        let (p, q) = gamma_tails(shape, y);
        if upper_tail {
            target - q
        } else {
            p - target
        }
    };
    let ln_norm = ln_gamma(shape);
    let pdf = |y: f64| ((shape - 1.0) * y.ln() - y - ln_norm).exp();

    // bracket
    let mut lo = 0.0;
    let mut hi = guess.max(f64::MIN_POSITIVE);
    while f(hi) < 0.0 {
        lo = hi;
        hi = 2.0 * hi + 1.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    if lo == 0.0 {
        let mut probe = hi;
        while probe > f64::MIN_POSITIVE && f(probe) > 0.0 {
            hi = probe;
            probe *= 0.5;
        }
        lo = if f(probe) <= 0.0 { probe } else { 0.0 };
    }

    let mut x = guess.clamp(lo, hi);
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = pdf(x);
        let mut next = if d > 0.0 && d.is_finite() { x - fx / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1e-300) || hi - lo <= 1e-15 * hi {
            return next;
        }
        x = next;
    }
    x
}

fn tau3_series(g: f64) -> f64 {
    let g2 = g * g;
    g * TAU3_SERIES.iter().rev().fold(0.0, |acc, &c| acc * g2 + c)
}

fn tau3_series_derivative(g: f64) -> f64 {
    let g2 = g * g;
    TAU3_SERIES
        .iter()
        .enumerate()
        .rev()
        .fold(0.0, |acc, (j, &c)| acc * g2 + (2 * j + 1) as f64 * c)
}

fn tau3_from_shape(shape: f64) -> f64 {
    6.0 * beta_reg(shape, 2.0 * shape, 1.0 / 3.0) - 3.0
}

/// τ3 of the PE3 law with skew γ: `sign(γ) (6 I_{1/3}(a, 2a) - 3)`,
/// `a = 4/γ²`.
pub fn pe3_tau3(gamma_skew: f64) -> f64 {
    let g = gamma_skew.abs();
    if g < NORMAL_SKEW_EPS {
        return 0.0;
    }
    let t = if g <= SERIES_SKEW {
        tau3_series(g)
    } else {
        tau3_from_shape(4.0 / (g * g))
    };
    t.copysign(gamma_skew)
}

/// Method-of-L-moments PE3 fit matching (λ1, λ2, τ3).
pub fn fit_pe3(lm: &LMoments) -> Result<Pe3Params> {
    if !(lm.lambda2 > 0.0) || !lm.lambda1.is_finite() {
        return Err(FitError::DegenerateLMoments);
    }
    let t = lm.tau3;
    if !(t.abs() < 1.0) {
        return Err(FitError::SkewOutOfRange(t));
    }
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let target = t.abs();
    if target < NORMAL_SKEW_EPS * TAU3_SERIES[0] {
        return Pe3Params::new(lm.lambda1, lm.lambda2 * sqrt_pi, 0.0);
    }
    let g = if target <= tau3_series(SERIES_SKEW) {
        // Newton on the series from the linear term; τ3 is convex-ish and
        // monotone on this range
        let mut g = target / TAU3_SERIES[0];
        for _ in 0..50 {
            let step = (tau3_series(g) - target) / tau3_series_derivative(g);
            g -= step;
            if step.abs() <= 1e-16 * g {
                break;
            }
        }
        g
    } else {
        // τ3 decreases monotonically in the gamma shape
        let hi = (4.0 / (SERIES_SKEW * SERIES_SKEW)).ln();
        let ln_a = bisect(|ln_a| tau3_from_shape(ln_a.exp()) - target, (1e-10f64).ln(), hi, 1e-15, 300)
            .ok_or(FitError::SkewOutOfRange(t))?;
        2.0 / (0.5 * ln_a).exp()
    };
    let shape = 4.0 / (g * g);
    // λ2 = β Γ(a+½) / (√π Γ(a)), σ = β √a
    let beta = lm.lambda2 * sqrt_pi / ln_gamma_ratio(shape, 0.5).exp();
    Pe3Params::new(lm.lambda1, beta * shape.sqrt(), g.copysign(t))
}
