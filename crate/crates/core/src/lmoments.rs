//! Sample L-moments, Weibull plotting positions, and the Kappa feasibility
//! region in the (τ3, τ4) plane.

pub mod diagram;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LMomentError {
    #[error("need at least {need} values, got {got}")]
    TooFewValues { need: usize, got: usize },
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("degenerate sample: L-scale is zero")]
    DegenerateSample,
    #[error("rank {rank} out of range 1..={n}")]
    RankOutOfRange { rank: usize, n: usize },
}

pub type Result<T> = std::result::Result<T, LMomentError>;

/// L-location, L-scale, L-skewness and L-kurtosis of a sample or a
/// distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LMoments {
    pub lambda1: f64,
    pub lambda2: f64,
    pub tau3: f64,
    pub tau4: f64,
    /// Sample size; zero for theoretical L-moments.
    pub n: usize,
}

impl LMoments {
    /// Theoretical L-moments from `[λ1, λ2, λ3, λ4]`.
    pub fn from_lambdas(l: [f64; 4]) -> Self {
        Self {
            lambda1: l[0],
            lambda2: l[1],
            tau3: l[2] / l[1],
            tau4: l[3] / l[1],
            n: 0,
        }
    }

    pub fn lambda3(&self) -> f64 {
        self.tau3 * self.lambda2
    }

    pub fn lambda4(&self) -> f64 {
        self.tau4 * self.lambda2
    }
}

/// Unbiased probability-weighted moments `b_0..b_{order-1}` of an
/// ascending-sorted sample:
/// `b_r = n⁻¹ Σ_i [(i-1)…(i-r)] / [(n-1)…(n-r)] x_(i)`.
pub fn probability_weighted_moments(sorted: &[f64], order: usize) -> Vec<f64> {
    let n = sorted.len();
    let nf = n as f64;
    (0..order)
        .map(|r| {
            let sum: f64 = sorted
                .iter()
                .enumerate()
                .skip(r)
                .map(|(idx, &x)| {
                    let i = idx as f64; // i - 1 in 1-based terms
                    let mut w = 1.0;
                    for k in 0..r {
                        w *= (i - k as f64) / (nf - 1.0 - k as f64);
                    }
                    w * x
                })
                .sum();
            sum / nf
        })
        .collect()
}

fn sorted_copy(values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(LMomentError::NonFinite);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `(λ1, λ2)` only; needs two or more values.
pub fn sample_location_scale(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(LMomentError::TooFewValues {
            need: 2,
            got: values.len(),
        });
    }
    let sorted = sorted_copy(values)?;
    let b = probability_weighted_moments(&sorted, 2);
    Ok((b[0], 2.0 * b[1] - b[0]))
}

/// Unbiased sample L-moments from the first four probability-weighted
/// moments.
pub fn sample_lmoments(values: &[f64]) -> Result<LMoments> {
    let n = values.len();
    if n < 4 {
        return Err(LMomentError::TooFewValues { need: 4, got: n });
    }
    let sorted = sorted_copy(values)?;
    let b = probability_weighted_moments(&sorted, 4);
    let l1 = b[0];
    let l2 = 2.0 * b[1] - b[0];
    let l3 = 6.0 * b[2] - 6.0 * b[1] + b[0];
    let l4 = 20.0 * b[3] - 30.0 * b[2] + 12.0 * b[1] - b[0];
    // a constant sample gives l2 = 0 up to rounding
    let spread = sorted[n - 1] - sorted[0];
    if l2 <= 0.0 || spread == 0.0 {
        return Err(LMomentError::DegenerateSample);
    }
    Ok(LMoments {
        lambda1: l1,
        lambda2: l2,
        tau3: l3 / l2,
        tau4: l4 / l2,
        n,
    })
}

/// Weibull plotting position `i / (n + 1)` of the i-th smallest of `n`.
pub fn ecdf_weibull(rank: usize, n: usize) -> Result<f64> {
    if rank == 0 || rank > n {
        return Err(LMomentError::RankOutOfRange { rank, n });
    }
    Ok(rank as f64 / (n as f64 + 1.0))
}

/// Where a (τ3, τ4) pair sits relative to the Kappa region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feasibility {
    Feasible,
    /// Above the generalized-logistic line.
    AboveGlo,
    /// Below the lower bound attainable by any distribution.
    BelowLimit,
}

/// Upper edge of the Kappa region: the generalized logistic curve.
pub fn glo_tau4(tau3: f64) -> f64 {
    (1.0 + 5.0 * tau3 * tau3) / 6.0
}

/// Lower bound on τ4 for any distribution with the given τ3.
pub fn tau4_lower_limit(tau3: f64) -> f64 {
    (5.0 * tau3 * tau3 - 1.0) / 4.0
}

/// Classifies `(tau3, tau4)` against the Kappa region, bounds inclusive.
pub fn kappa_feasibility(tau3: f64, tau4: f64) -> Feasibility {
    if tau4 < tau4_lower_limit(tau3) {
        Feasibility::BelowLimit
    } else if tau4 > glo_tau4(tau3) {
        Feasibility::AboveGlo
    } else {
        Feasibility::Feasible
    }
}
