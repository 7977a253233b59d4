//! Numerical helpers shared by the fitting and diagram code.
//!
//! The quadrature here integrates over the open unit interval and hands the
//! integrand both `u` and `1 - u`, each computed without cancellation. Quantile
//! functions with heavy upper tails need the complement to full relative
//! precision, otherwise everything past `u = 1 - 2^-53` is lost.

use statrs::function::gamma::ln_gamma;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const TANH_SINH_T_MAX: f64 = 6.0;
const TANH_SINH_MAX_LEVEL: u32 = 12;

/// Integrates `f(u, 1 - u)` over `(0, 1)` with double-exponential (tanh-sinh)
/// quadrature.
///
/// Refines by halving the step until successive estimates differ by less than
/// `tol` times the L1 mass of the integrand. Endpoint singularities of
/// algebraic or logarithmic type are handled without special treatment.
pub fn integrate_unit<F>(f: F, tol: f64) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    let node = |t: f64| -> (f64, f64, f64) {
        let s = std::f64::consts::PI * t.sinh();
        // u = 1/(1+e^{-s}), 1-u = 1/(1+e^{s}); du/dt = pi cosh(t) u (1-u)
        let u = 1.0 / (1.0 + (-s).exp());
        let v = 1.0 / (1.0 + s.exp());
        let w = std::f64::consts::PI * t.cosh() * u * v;
        (u, v, w)
    };
    let term = |t: f64| -> (f64, f64) {
        let (u, v, w) = node(t);
        if u <= 0.0 || v <= 0.0 || w == 0.0 {
            return (0.0, 0.0);
        }
        let val = f(u, v) * w;
        // Nodes this close to the endpoints carry weights below 1e-250; an
        // overflowing integrand there contributes nothing representable.
        if val.is_finite() {
            (val, val.abs())
        } else {
            (0.0, 0.0)
        }
    };

    let mut h = 0.5;
    let (mut sum, mut l1) = term(0.0);
    let mut k = 1;
    while (k as f64) * h <= TANH_SINH_T_MAX {
        let t = k as f64 * h;
        let (a, aa) = term(t);
        let (b, bb) = term(-t);
        sum += a + b;
        l1 += aa + bb;
        k += 1;
    }
    let mut estimate = sum * h;

    for _ in 0..TANH_SINH_MAX_LEVEL {
        h *= 0.5;
        // only the odd multiples of the new step are new nodes
        let mut k = 1;
        while (k as f64) * h <= TANH_SINH_T_MAX {
            let t = k as f64 * h;
            let (a, aa) = term(t);
            let (b, bb) = term(-t);
            sum += a + b;
            l1 += aa + bb;
            k += 2;
        }
        let next = sum * h;
        let scale = (l1 * h).max(f64::MIN_POSITIVE);
        if (next - estimate).abs() <= tol * scale {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// `ln Γ(x + a) - ln Γ(x)` for `x > 0`, `x + a > 0`, accurate when `x` is
/// large and `a` is moderate (where the direct difference cancels badly).
pub fn ln_gamma_ratio(x: f64, a: f64) -> f64 {
    if x < 50.0 || (x + a) < 50.0 {
        return ln_gamma(x + a) - ln_gamma(x);
    }
    let y = x + a;
    // Stirling series difference
    let series = |z: f64| {
        let z2 = z * z;
        1.0 / (12.0 * z) - 1.0 / (360.0 * z * z2) + 1.0 / (1260.0 * z * z2 * z2)
            - 1.0 / (1680.0 * z * z2 * z2 * z2)
    };
    (x - 0.5) * (a / x).ln_1p() + a * y.ln() - a + series(y) - series(x)
}

/// Digamma function ψ(x).
pub fn digamma(x: f64) -> f64 {
    statrs::function::gamma::digamma(x)
}

/// Trigamma function ψ'(x) for `x > 0`.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 16.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    // 1/x + 1/(2x²) + Σ B_2k / x^{2k+1}
    let bernoulli = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
    ];
    let series = bernoulli.iter().rev().fold(0.0, |acc, &b| acc * x2 + b);
    let tail = 1.0 / x + x2 / 2.0 + x2 / x * series;
    acc + tail
}

/// Tetragamma function ψ''(x) for `x > 0`.
pub fn tetragamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 16.0 {
        acc -= 2.0 / (x * x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    // -1/x² - 1/x³ - Σ (2k+1) B_2k / x^{2k+2}
    let terms = [
        3.0 / 6.0,
        -5.0 / 30.0,
        7.0 / 42.0,
        -9.0 / 30.0,
        11.0 * 5.0 / 66.0,
        -13.0 * 691.0 / 2730.0,
    ];
    let series = terms.iter().rev().fold(0.0, |acc, &b| acc * x2 + b);
    acc - x2 - x2 / x - x2 * x2 * series
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// Returns `None` when the endpoints do not bracket a root.
pub fn bisect<F>(f: F, mut lo: f64, mut hi: f64, x_tol: f64, max_iter: usize) -> Option<f64>
where
    F: Fn(f64) -> f64,
{
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Some(lo);
    }
    if f_hi == 0.0 {
        return Some(hi);
    }
    if f_lo.signum() == f_hi.signum() || !f_lo.is_finite() || !f_hi.is_finite() {
        return None;
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= x_tol * (1.0 + mid.abs()) {
            return Some(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Some(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Shifted Legendre polynomials P*_0..P*_3 at `u`, the weights that turn a
/// quantile function into L-moments: `λ_{r+1} = ∫ Q(u) P*_r(u) du`.
pub fn shifted_legendre(u: f64) -> [f64; 4] {
    [
        1.0,
        2.0 * u - 1.0,
        6.0 * u * u - 6.0 * u + 1.0,
        20.0 * u * u * u - 30.0 * u * u + 12.0 * u - 1.0,
    ]
}

/// First four L-moments of the distribution with quantile function `q(u, 1-u)`
/// by quadrature. Returns `[λ1, λ2, λ3, λ4]`.
pub fn quantile_lmoments<F>(q: F, tol: f64) -> [f64; 4]
where
    F: Fn(f64, f64) -> f64,
{
    let mut out = [0.0; 4];
    for (r, slot) in out.iter_mut().enumerate() {
        *slot = integrate_unit(
            |u, v| {
                // symmetric form keeps P*_r accurate near u = 1
                let p = if u <= 0.5 {
                    shifted_legendre(u)[r]
                } else {
                    let p = shifted_legendre(v)[r];
                    if r % 2 == 1 {
                        -p
                    } else {
                        p
                    }
                };
                q(u, v) * p
            },
            tol,
        );
    }
    out
}
