//! Four-parameter Kappa distribution: cdf, quantile, closed-form L-moments,
//! and the method-of-L-moments fit.
//!
//! ```text
//! F(x)    = {1 - h [1 - κ (x - ξ)/α]^{1/κ}}^{1/h}
//! F⁻¹(u)  = ξ + (α/κ) [1 - ((1 - u^h)/h)^κ]
//! ```
//!
//! κ → 0 and h → 0 are taken as limits (`[·]^{1/κ} → exp(-(x-ξ)/α)`,
//! `{·}^{1/h} → exp(-[·])`). Uniform is (κ, h) = (1, 1), exponential is
//! (0, 1), Gumbel (0, 0), GEV has h = 0, GPA h = 1 and GLO h = -1.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{FitError, Result};
use crate::lmoments::{kappa_feasibility, Feasibility, LMoments};
use crate::numeric::{digamma, ln_gamma_ratio, tetragamma, trigamma};

/// Below this magnitude a shape parameter is treated as its zero limit.
pub const SHAPE_LIMIT_EPS: f64 = 1e-8;

/// Below this |κ| the closed-form L-moments switch to a third-order series
/// in κ; direct evaluation loses about `1e-14 / |κ|` to cancellation there.
const KAPPA_SERIES_EPS: f64 = 3e-4;

const NEWTON_MAX_ITER: usize = 200;
const NEWTON_TOL: f64 = 1e-13;
/// Residual level accepted once Newton stops making progress: near κ = 0 the
/// series and the closed form are only good to about 1e-11 in (τ3, τ4).
const NEWTON_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaParams {
    /// Location ξ.
    pub xi: f64,
    /// Scale α > 0.
    pub alpha_scale: f64,
    /// Shape κ.
    pub kappa_shape: f64,
    /// Shape h.
    pub h_shape: f64,
}

impl KappaParams {
    pub fn new(xi: f64, alpha_scale: f64, kappa_shape: f64, h_shape: f64) -> Result<Self> {
        let p = Self {
            xi,
            alpha_scale,
            kappa_shape,
            h_shape,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        Self::new(lower, upper - lower, 1.0, 1.0)
    }

    pub fn exponential(location: f64, mean_excess: f64) -> Result<Self> {
        Self::new(location, mean_excess, 0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.xi.is_finite()
            && self.alpha_scale.is_finite()
            && self.kappa_shape.is_finite()
            && self.h_shape.is_finite();
        if !finite || self.alpha_scale <= 0.0 {
            return Err(FitError::InvalidParams(format!(
                "kappa requires finite parameters and alpha > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    /// `F(x)`, clamped to `[0, 1]`; 0 below the support and 1 above it.
    pub fn cdf(&self, x: f64) -> f64 {
        self.ln_cdf(x).exp().clamp(0.0, 1.0)
    }

    /// `1 - F(x)` without cancellation in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        (-self.ln_cdf(x).exp_m1()).clamp(0.0, 1.0)
    }

    fn ln_cdf(&self, x: f64) -> f64 {
        let k = self.kappa_shape;
        let h = self.h_shape;
        let y = (x - self.xi) / self.alpha_scale;
        let t = if k.abs() < SHAPE_LIMIT_EPS {
            (-y).exp()
        } else {
            let base = 1.0 - k * y;
            if base <= 0.0 {
                return if k > 0.0 { 0.0 } else { f64::NEG_INFINITY };
            }
            (base.ln() / k).exp()
        };
        let ln_f = if h.abs() < SHAPE_LIMIT_EPS {
            -t
        } else {
            let inner = -h * t;
            if inner <= -1.0 {
                return f64::NEG_INFINITY;
            }
            inner.ln_1p() / h
        };
        if ln_f.is_nan() {
            f64::NEG_INFINITY
        } else {
            ln_f.min(0.0)
        }
    }

    /// `F⁻¹(u)` for `0 < u < 1`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(FitError::ProbabilityOutOfRange(u));
        }
        Ok(self.quantile_split(u, 1.0 - u))
    }

    /// Quantile at `u` given both `u` and `1 - u` to full precision. Accepts
    /// the closed endpoints and returns the support bounds there.
    pub(crate) fn quantile_split(&self, u: f64, v: f64) -> f64 {
        self.xi + self.alpha_scale * self.standard_quantile(u, v)
    }

    fn standard_quantile(&self, u: f64, v: f64) -> f64 {
        let k = self.kappa_shape;
        let h = self.h_shape;
        let ln_u = if u < 0.5 { u.ln() } else { (-v).ln_1p() };
        // (1 - u^h)/h
        let y = if h.abs() < SHAPE_LIMIT_EPS {
            -ln_u
        } else {
            -(h * ln_u).exp_m1() / h
        };
        // (1 - y^κ)/κ
        if k.abs() < SHAPE_LIMIT_EPS {
            -y.ln()
        } else {
            -(k * y.ln()).exp_m1() / k
        }
    }

    pub fn lower_bound(&self) -> f64 {
        self.quantile_split(0.0, 1.0)
    }

    pub fn upper_bound(&self) -> f64 {
        self.quantile_split(1.0, 0.0)
    }

    /// Whether the first four L-moments exist: κ > -1, and κ < 1/|h| when
    /// h < 0.
    pub fn has_lmoments(&self) -> bool {
        let k = self.kappa_shape;
        let h = self.h_shape;
        k > -1.0 && (h >= 0.0 || k * h > -1.0)
    }

    /// Theoretical L-moments from the closed-form probability-weighted
    /// moments.
    pub fn lmoments(&self) -> Result<LMoments> {
        if !self.has_lmoments() {
            return Err(FitError::InvalidParams(format!(
                "L-moments do not exist for kappa={}, h={}",
                self.kappa_shape, self.h_shape
            )));
        }
        let c = pwm_terms(self.kappa_shape, self.h_shape);
        let a = self.alpha_scale;
        Ok(LMoments::from_lambdas([
            self.xi + a * c[0],
            a * (c[1] - c[0]),
            a * (2.0 * c[2] - 3.0 * c[1] + c[0]),
            a * (5.0 * c[3] - 10.0 * c[2] + 6.0 * c[1] - c[0]),
        ]))
    }
}

/// `kappa_cdf` with parameter validation.
pub fn kappa_cdf(p: &KappaParams, x: f64) -> Result<f64> {
    p.validate()?;
    Ok(p.cdf(x))
}

/// `kappa_quantile` with parameter validation.
pub fn kappa_quantile(p: &KappaParams, u: f64) -> Result<f64> {
    p.validate()?;
    p.quantile(u)
}

/// `ln g_r` where `g_r = r ∫₀¹ ((1 - u^h)/h)^κ u^{r-1} du`.
fn ln_g(r: f64, k: f64, h: f64) -> f64 {
    if h.abs() < SHAPE_LIMIT_EPS {
        ln_gamma(1.0 + k) - k * r.ln()
    } else if h > 0.0 {
        r.ln() + ln_gamma(1.0 + k) - (1.0 + k) * h.ln() - ln_gamma_ratio(r / h, 1.0 + k)
    } else {
        let x = -r / h;
        r.ln() + ln_gamma(1.0 + k) - (1.0 + k) * (-h).ln() - ln_gamma_ratio(x - k, 1.0 + k)
    }
}

/// First three κ-derivatives of `ln g_r` at κ = 0.
fn ln_g_derivatives_at_zero(r: f64, h: f64) -> (f64, f64, f64) {
    let psi1 = -crate::numeric::EULER_GAMMA;
    let tri1 = trigamma(1.0);
    let tetra1 = tetragamma(1.0);
    if h.abs() < SHAPE_LIMIT_EPS {
        (psi1 - r.ln(), tri1, tetra1)
    } else if h > 0.0 {
        let x = 1.0 + r / h;
        (psi1 - h.ln() - digamma(x), tri1 - trigamma(x), tetra1 - tetragamma(x))
    } else {
        let x = -r / h;
        (psi1 - (-h).ln() - digamma(x), tri1 + trigamma(x), tetra1 - tetragamma(x))
    }
}

/// `c_r = (1 - g_r)/κ` for r = 1..4, so that `r β_{r-1} = ξ + α c_r`.
fn pwm_terms(k: f64, h: f64) -> [f64; 4] {
    let mut c = [0.0; 4];
    for (i, slot) in c.iter_mut().enumerate() {
        let r = (i + 1) as f64;
        *slot = if k.abs() < KAPPA_SERIES_EPS {
            // (1 - e^L)/κ with L = d1 κ + d2 κ²/2 + d3 κ³/6
            let (d1, d2, d3) = ln_g_derivatives_at_zero(r, h);
            -d1 - 0.5 * k * (d2 + d1 * d1)
                - k * k * (d3 / 6.0 + 0.5 * d1 * d2 + d1 * d1 * d1 / 6.0)
        } else {
            -ln_g(r, k, h).exp_m1() / k
        };
    }
    c
}

/// (τ3, τ4) of the Kappa family at shapes (κ, h).
pub fn kappa_tau34(k: f64, h: f64) -> (f64, f64) {
    let c = pwm_terms(k, h);
    let l2 = c[1] - c[0];
    (
        (2.0 * c[2] - 3.0 * c[1] + c[0]) / l2,
        (5.0 * c[3] - 10.0 * c[2] + 6.0 * c[1] - c[0]) / l2,
    )
}

fn in_fit_domain(k: f64, h: f64) -> bool {
    k > -1.0 + 1e-9 && h >= -1.0 && h <= 1e6 && (h >= 0.0 || k * h > -1.0 + 1e-9)
}

/// Method-of-L-moments fit: solves (τ3, τ4) → (κ, h) by damped Newton with a
/// finite-difference Jacobian, then sets α from λ2 and ξ from λ1.
pub fn fit_kappa(lm: &LMoments) -> Result<KappaParams> {
    if !(lm.lambda2 > 0.0) || !lm.lambda1.is_finite() {
        return Err(FitError::DegenerateLMoments);
    }
    match kappa_feasibility(lm.tau3, lm.tau4) {
        Feasibility::Feasible => {}
        other => {
            return Err(FitError::Infeasible {
                tau3: lm.tau3,
                tau4: lm.tau4,
                bound: other,
            })
        }
    }
    let (k, h) = solve_shapes(lm.tau3, lm.tau4)?;
    let c = pwm_terms(k, h);
    let alpha = lm.lambda2 / (c[1] - c[0]);
    let xi = lm.lambda1 - alpha * c[0];
    KappaParams::new(xi, alpha, k, h)
}

fn solve_shapes(t3: f64, t4: f64) -> Result<(f64, f64)> {
    // generalized Pareto member (h = 1) matching τ3 first
    let k_gpa = ((1.0 - 3.0 * t3) / (1.0 + t3)).clamp(-0.99, 50.0);
    let k_glo = (-t3).clamp(-0.99, 0.99);
    let starts = [
        (k_gpa, 1.0),
        (k_gpa, 0.0),
        (k_glo, -0.8),
        (k_gpa, 3.0),
        (k_gpa, 10.0),
        (k_glo, 0.5),
        (k_gpa.max(0.0), 30.0),
    ];
    let mut best = f64::INFINITY;
    for &(k0, h0) in &starts {
        if !in_fit_domain(k0, h0) {
            continue;
        }
        match newton(t3, t4, k0, h0) {
            Ok(sol) => return Ok(sol),
            Err(res) => best = best.min(res),
        }
    }
    Err(FitError::NonConvergence {
        iterations: NEWTON_MAX_ITER,
        residual: best,
    })
}

fn residual(t3: f64, t4: f64, k: f64, h: f64) -> [f64; 2] {
    let (a, b) = kappa_tau34(k, h);
    [a - t3, b - t4]
}

fn norm(r: [f64; 2]) -> f64 {
    r[0].hypot(r[1])
}

/// Damped Newton from `(k, h)`; on failure returns the best residual norm.
fn newton(t3: f64, t4: f64, mut k: f64, mut h: f64) -> std::result::Result<(f64, f64), f64> {
    let mut r = residual(t3, t4, k, h);
    let mut rn = norm(r);
    if !rn.is_finite() {
        return Err(f64::INFINITY);
    }
    for _ in 0..NEWTON_MAX_ITER {
        if rn < NEWTON_TOL {
            return Ok((k, h));
        }
        let dk = 1e-6 * (1.0 + k.abs());
        let dh = 1e-6 * (1.0 + h.abs());
        let col = |kp: f64, hp: f64, km: f64, hm: f64, step: f64| {
            let a = residual(t3, t4, kp, hp);
            let b = residual(t3, t4, km, hm);
            [(a[0] - b[0]) / (2.0 * step), (a[1] - b[1]) / (2.0 * step)]
        };
        // one-sided differences where the central stencil would leave the domain
        let jk = if in_fit_domain(k - dk, h) && in_fit_domain(k + dk, h) {
            col(k + dk, h, k - dk, h, dk)
        } else {
            let a = residual(t3, t4, k + dk, h);
            [(a[0] - r[0]) / dk, (a[1] - r[1]) / dk]
        };
        let jh = if in_fit_domain(k, h - dh) && in_fit_domain(k, h + dh) {
            col(k, h + dh, k, h - dh, dh)
        } else if in_fit_domain(k, h + dh) {
            let a = residual(t3, t4, k, h + dh);
            [(a[0] - r[0]) / dh, (a[1] - r[1]) / dh]
        } else {
            let a = residual(t3, t4, k, h - dh);
            [(r[0] - a[0]) / dh, (r[1] - a[1]) / dh]
        };
        let det = jk[0] * jh[1] - jh[0] * jk[1];
        if !det.is_finite() || det == 0.0 {
            return Err(rn);
        }
        let step_k = -(jh[1] * r[0] - jh[0] * r[1]) / det;
        let step_h = -(-jk[1] * r[0] + jk[0] * r[1]) / det;

        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let kn = k + lambda * step_k;
            let hn = h + lambda * step_h;
            if in_fit_domain(kn, hn) {
                let rnew = residual(t3, t4, kn, hn);
                let nn = norm(rnew);
                if nn.is_finite() && nn < rn {
                    k = kn;
                    h = hn;
                    r = rnew;
                    rn = nn;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return if rn < NEWTON_FLOOR { Ok((k, h)) } else { Err(rn) };
        }
    }
    if rn < NEWTON_FLOOR {
        Ok((k, h))
    } else {
        Err(rn)
    }
}
