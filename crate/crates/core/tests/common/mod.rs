//! Independent oracles shared by the integration tests and the acceptance
//! harness. The oracles never call into the library; the generators at the
//! bottom only build library model types.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// L-moments straight from the order-statistic definition:
/// `λ_r = r⁻¹ Σ_k (-1)^k C(r-1,k) E[X_{r-k:r}]`, with each expectation taken
/// over every r-subset of the sample.
pub fn lmoments_bruteforce(values: &[f64]) -> [f64; 4] {
    let mut x = values.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = x.len();
    let mut out = [f64::NAN; 4];
    for r in 1..=4.min(n) {
        let mut total = 0.0;
        let mut count = 0u64;
        let mut idx: Vec<usize> = (0..r).collect();
        loop {
            // idx is increasing, so x[idx[j]] is the (j+1)-th order statistic
            let mut s = 0.0;
            for k in 0..r {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                s += sign * binom(r - 1, k) * x[idx[r - k - 1]];
            }
            total += s / r as f64;
            count += 1;
            let mut i = r;
            while i > 0 && idx[i - 1] == n - r + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..r {
                idx[j] = idx[j - 1] + 1;
            }
        }
        out[r - 1] = total / count as f64;
    }
    out
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Kappa cdf written out from its definition.
pub fn kappa_cdf_oracle(xi: f64, a: f64, k: f64, h: f64, x: f64) -> f64 {
    let y = (x - xi) / a;
    let t = if k == 0.0 {
        (-y).exp()
    } else {
        let b = 1.0 - k * y;
        if b <= 0.0 {
            return if k > 0.0 { 1.0 } else { 0.0 };
        }
        b.powf(1.0 / k)
    };
    if h == 0.0 {
        (-t).exp()
    } else {
        let b = 1.0 - h * t;
        if b <= 0.0 {
            return 0.0;
        }
        b.powf(1.0 / h)
    }
}

/// Kappa quantile at `u`, given `v = 1 - u` separately so the upper tail
/// keeps its precision.
pub fn kappa_quantile_oracle(xi: f64, a: f64, k: f64, h: f64, u: f64, v: f64) -> f64 {
    let ln_u = if u < 0.5 { u.ln() } else { (-v).ln_1p() };
    let y = if h == 0.0 { -ln_u } else { -(h * ln_u).exp_m1() / h };
    let z = if k == 0.0 { -y.ln() } else { -(k * y.ln()).exp_m1() / k };
    xi + a * z
}

/// `∫₀¹ f(u, 1-u) du` by tanh-sinh quadrature; tolerant of integrable
/// endpoint singularities.
pub fn tanh_sinh<F: Fn(f64, f64) -> f64>(f: F) -> f64 {
    let h = 1.0 / 128.0;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut sum = 0.0;
    let kmax = (4.5 / h) as i64;
    for i in -kmax..=kmax {
        let t = i as f64 * h;
        let s = half_pi * t.sinh();
        let e = (-2.0 * s.abs()).exp();
        // the endpoint-near abscissa, computed without cancellation
        let near = e / (1.0 + e);
        let (u, v) = if s >= 0.0 { (1.0 - near, near) } else { (near, 1.0 - near) };
        if u <= 0.0 || v <= 0.0 {
            continue;
        }
        let sech2 = 4.0 * e / ((1.0 + e) * (1.0 + e));
        let w = 0.5 * half_pi * t.cosh() * sech2;
        let fx = f(u, v);
        if fx.is_finite() {
            sum += w * fx;
        }
    }
    sum * h
}

/// `[λ1, λ2, τ3, τ4]` of a quantile function by quadrature against the
/// shifted Legendre polynomials.
pub fn lmoments_by_quadrature<Q: Fn(f64, f64) -> f64>(q: Q) -> [f64; 4] {
    let l1 = tanh_sinh(|u, v| q(u, v));
    let l2 = tanh_sinh(|u, v| q(u, v) * (u - v));
    let l3 = tanh_sinh(|u, v| q(u, v) * (6.0 * u * u - 6.0 * u + 1.0));
    let l4 = tanh_sinh(|u, v| q(u, v) * (20.0 * u * u * u - 30.0 * u * u + 12.0 * u - 1.0));
    [l1, l2, l3 / l2, l4 / l2]
}

pub fn kappa_lmoments_oracle(xi: f64, a: f64, k: f64, h: f64) -> [f64; 4] {
    lmoments_by_quadrature(|u, v| kappa_quantile_oracle(xi, a, k, h, u, v))
}

/// A random pmf on `0..len` with some exact zeros, normalized.
pub fn random_pmf(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let mut p: Vec<f64> = (0..len)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() })
        .collect();
    if p.iter().all(|&x| x == 0.0) {
        p[len - 1] = 1.0;
    }
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    p
}

/// Metric definitions evaluated by direct summation over a finite pmf.
pub struct PmfOracle {
    pub p: Vec<f64>,
    pub n: f64,
}

impl PmfOracle {
    pub fn cdf(&self, d: u64) -> f64 {
        self.p.iter().take(d as usize + 1).sum()
    }
    pub fn sf(&self, d: u64) -> f64 {
        self.p.iter().skip(d as usize + 1).sum()
    }
    /// `Σ_{j=l}^{u} j p(j)`.
    pub fn r(&self, l: u64, u: Option<u64>) -> f64 {
        let hi = u.unwrap_or(u64::MAX);
        self.p
            .iter()
            .enumerate()
            .filter(|(j, _)| *j as u64 >= l && *j as u64 <= hi)
            .map(|(j, &pj)| j as f64 * pj)
            .sum()
    }
    pub fn m1(&self, d: u64) -> f64 {
        self.n * self.sf(d)
    }
    pub fn m2(&self, x_percent: f64, customers: u64) -> f64 {
        let d = (x_percent * customers as f64 / 100.0).floor() as u64;
        self.m1(d)
    }
    pub fn m3(&self, d: u64) -> f64 {
        self.n * self.r(d, None)
    }
    /// Smallest d ≥ 1 with `L ≤ N R(1,d)`, scanning upward.
    pub fn threshold(&self, load: f64) -> Option<u64> {
        (1..=self.p.len() as u64).find(|&d| load <= self.n * self.r(1, Some(d)))
    }
    pub fn m4(&self, load: f64) -> Option<f64> {
        self.threshold(load).map(|d| self.sf(d))
    }
    pub fn m5(&self, load: f64) -> Option<f64> {
        self.threshold(load).map(|d| self.cdf(d))
    }
    pub fn quantile(&self, alpha: f64) -> u64 {
        (0..self.p.len() as u64).find(|&d| self.cdf(d) >= alpha).unwrap_or(self.p.len() as u64 - 1)
    }
    pub fn m6(&self, alpha: f64) -> f64 {
        let q = self.quantile(alpha);
        if q == 0 {
            0.0
        } else {
            self.n * self.r(1, Some(q))
        }
    }
}

/// `|a - b| ≤ tol · max(1, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// Two-point hyperexponential gaps with the given mean: mixture of
/// exponentials with means `mean/(2p)` and `mean/(2(1-p))` chosen with
/// probabilities p and 1-p (balanced means), squared CV well above 1.
pub fn hyperexponential_gaps(mean: f64, p: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m1 = mean / (2.0 * p);
    let m2 = mean / (2.0 * (1.0 - p));
    let raw: Vec<f64> = (0..n)
        .map(|_| {
            let m = if rng.random_bool(p) { m1 } else { m2 };
            let u: f64 = rng.random();
            -m * (1.0 - u).ln()
        })
        .collect();
    // rescale so the sample mean equals the target exactly
    let s = raw.iter().sum::<f64>() / n as f64;
    raw.into_iter().map(|g| g * mean / s).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Partition point of the two-regime generator.
pub const TWO_REGIME_RHO: u64 = 12;

/// Uniform body on (0, 12] carrying 60% of the mass, glued to a heavy
/// generalized Pareto tail (shape -0.5, scale 5) above 12.
pub fn two_regime_model() -> rediscovery::distfit::CompoundKappaModel {
    use rediscovery::distfit::{CompoundKappaModel, KappaParams};
    let body = KappaParams::uniform(0.0, TWO_REGIME_RHO as f64).unwrap();
    let tail = KappaParams::new(0.0, 5.0, -0.5, 1.0).unwrap();
    CompoundKappaModel::new(body, tail, TWO_REGIME_RHO, 0.6).unwrap()
}

/// A Kappa member with a logistic-like shape, well away from the PE3 curve.
pub fn kappa_generator() -> rediscovery::distfit::KappaParams {
    rediscovery::distfit::KappaParams::new(5.0, 3.0, -0.2, -0.4).unwrap()
}
