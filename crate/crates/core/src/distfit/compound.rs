//! Compound Kappa: one Kappa law `F_a` for counts up to a partition point ρ
//! and a second `F_b` for the exceedances above it.
//!
//! ```text
//! F_c(d) = w w1 F_a(d)                    d ≤ ρ
//!        = w [w1 F_a(ρ) + w2 G_b(d)]      d > ρ
//! w1 = ecdf(ρ), w2 = 1 - w1, w = 1 / (w1 F_a(ρ) + w2)
//! ```
//!
//! `F_b` is fitted to `D - ρ` over `D > ρ`, and enters through its
//! conditional law above zero, `G_b(d) = (F_b(d-ρ) - F_b(0)) / (1 - F_b(0))`.
//! This keeps `F_c` continuous at ρ even when the fitted `F_b` puts mass
//! below zero.
//!
//! ρ is chosen by least squares against the Weibull ecdf among candidates
//! whose discretized model gives every observed count positive probability.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kappa::{fit_kappa, KappaParams};
use super::{pmf_of, FitError, Result};
use crate::ingest::RediscoverySample;
use crate::lmoments::sample_lmoments;

/// Minimum points on each side of a default candidate ρ.
pub const MIN_TAIL_POINTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundKappaModel {
    /// `F_a`, fitted to counts ≤ ρ.
    pub left: KappaParams,
    /// `F_b`, fitted to exceedances `D - ρ` of counts > ρ.
    pub right: KappaParams,
    pub rho: u64,
    pub w1: f64,
    pub w2: f64,
    pub w: f64,
    /// Sum of squared residuals against the empirical cdf; zero for models
    /// not fitted to data.
    pub sse: f64,
}

impl CompoundKappaModel {
    /// Builds the model and its weights from `w1 = ecdf(ρ)`.
    pub fn new(left: KappaParams, right: KappaParams, rho: u64, w1: f64) -> Result<Self> {
        left.validate()?;
        right.validate()?;
        if !(w1 > 0.0 && w1 <= 1.0) {
            return Err(FitError::InvalidParams(format!("w1 must lie in (0, 1], got {w1}")));
        }
        let w2 = 1.0 - w1;
        let fa_rho = left.cdf(rho as f64);
        let denom = w1 * fa_rho + w2;
        if !(denom > 0.0) {
            return Err(FitError::InvalidParams(format!(
                "F_a(rho) = 0 with w2 = 0 leaves no mass (rho = {rho})"
            )));
        }
        if w2 > 0.0 && right.sf(0.0) <= 0.0 {
            return Err(FitError::InvalidParams(
                "right component has no mass above the partition point".into(),
            ));
        }
        Ok(Self {
            left,
            right,
            rho,
            w1,
            w2,
            w: 1.0 / denom,
            sse: 0.0,
        })
    }

    fn rho_f(&self) -> f64 {
        self.rho as f64
    }

    /// Probability at the branch boundary, `w w1 F_a(ρ)`.
    pub fn boundary_mass(&self) -> f64 {
        self.w * self.w1 * self.left.cdf(self.rho_f())
    }

    pub fn cdf(&self, d: f64) -> f64 {
        if d <= self.rho_f() {
            (self.w * self.w1 * self.left.cdf(d)).clamp(0.0, 1.0)
        } else {
            1.0 - self.sf(d)
        }
    }

    pub fn sf(&self, d: f64) -> f64 {
        if d <= self.rho_f() {
            return (1.0 - self.w * self.w1 * self.left.cdf(d)).clamp(0.0, 1.0);
        }
        if self.w2 == 0.0 {
            return 0.0;
        }
        // 1 - F_c(d) = w w2 (1 - G_b(d))
        let tail = self.right.sf(d - self.rho_f()) / self.right.sf(0.0);
        (self.w * self.w2 * tail).clamp(0.0, 1.0)
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(FitError::ProbabilityOutOfRange(u));
        }
        let b0 = self.boundary_mass();
        if u <= b0 {
            let z = (u / (self.w * self.w1)).min(1.0);
            return Ok(self.left.quantile_split(z, 1.0 - z));
        }
        let ww2 = self.w * self.w2;
        let z = ((u - b0) / ww2).clamp(0.0, 1.0);
        let zc = ((1.0 - u) / ww2).clamp(0.0, 1.0);
        let floor = self.right.cdf(0.0);
        let above = self.right.sf(0.0);
        let p = floor + z * above;
        let q = zc * above;
        Ok(self.rho_f() + self.right.quantile_split(p, q))
    }
}

pub fn compound_cdf(m: &CompoundKappaModel, d: f64) -> f64 {
    m.cdf(d)
}

pub fn compound_quantile(m: &CompoundKappaModel, u: f64) -> Result<f64> {
    m.quantile(u)
}

/// Outcome of one partition point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoCandidate {
    pub rho: u64,
    pub sse: Option<f64>,
    /// Why the candidate was skipped, if it was.
    pub skipped: Option<String>,
}

/// Count values with at least [`MIN_TAIL_POINTS`] observations at or below
/// and strictly above.
pub fn default_candidates(sorted: &[u64]) -> Vec<u64> {
    let n = sorted.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let v = sorted[i];
        let at_or_below = sorted.partition_point(|&c| c <= v);
        if at_or_below >= MIN_TAIL_POINTS && n - at_or_below >= MIN_TAIL_POINTS {
            out.push(v);
        }
        i = at_or_below;
    }
    out
}

fn fit_at(sorted: &[u64], rho: u64) -> Result<CompoundKappaModel> {
    let n = sorted.len();
    let split = sorted.partition_point(|&c| c <= rho);
    let left: Vec<f64> = sorted[..split].iter().map(|&c| c as f64).collect();
    let right: Vec<f64> = sorted[split..].iter().map(|&c| (c - rho) as f64).collect();
    let fa = fit_kappa(&sample_lmoments(&left)?)?;
    let fb = fit_kappa(&sample_lmoments(&right)?)?;
    let w1 = split as f64 / (n as f64 + 1.0);
    let mut m = CompoundKappaModel::new(fa, fb, rho, w1)?;
    // a candidate that cannot produce some observed count is not a model of
    // this sample, however small its SSE
    let mut zero: Vec<u64> = sorted.iter().copied().filter(|&c| pmf_of(&m, c) <= 0.0).collect();
    if !zero.is_empty() {
        zero.dedup();
        return Err(FitError::ZeroProbability { counts: zero });
    }
    m.sse = sse_against_ecdf(&m, sorted);
    Ok(m)
}

/// `Σ_d [F_c(d) - ecdf(d)]²` over distinct observed counts, with
/// `ecdf(d) = #{D ≤ d} / (n + 1)`.
fn sse_against_ecdf(m: &CompoundKappaModel, sorted: &[u64]) -> f64 {
    let n1 = sorted.len() as f64 + 1.0;
    let mut sse = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let d = sorted[i];
        let upto = sorted.partition_point(|&c| c <= d);
        let r = m.cdf(d as f64) - upto as f64 / n1;
        sse += r * r;
        i = upto;
    }
    sse
}

/// Fits every candidate ρ; candidates run in parallel and come back in
/// ascending ρ order.
pub fn evaluate_rho_candidates(
    sample: &RediscoverySample,
    candidate_rhos: Option<&[u64]>,
) -> (Vec<RhoCandidate>, Vec<CompoundKappaModel>) {
    let mut sorted = sample.counts.clone();
    sorted.sort_unstable();
    let mut rhos = match candidate_rhos {
        Some(r) => r.to_vec(),
        None => default_candidates(&sorted),
    };
    rhos.sort_unstable();
    rhos.dedup();
    let results: Vec<(RhoCandidate, Option<CompoundKappaModel>)> = rhos
        .par_iter()
        .map(|&rho| match fit_at(&sorted, rho) {
            Ok(m) => (
                RhoCandidate {
                    rho,
                    sse: Some(m.sse),
                    skipped: None,
                },
                Some(m),
            ),
            Err(e) => (
                RhoCandidate {
                    rho,
                    sse: None,
                    skipped: Some(e.to_string()),
                },
                None,
            ),
        })
        .collect();
    let mut diag = Vec::with_capacity(results.len());
    let mut models = Vec::new();
    for (c, m) in results {
        diag.push(c);
        models.extend(m);
    }
    (diag, models)
}

/// Selects ρ by least squares against the Weibull ecdf; ties go to the
/// smaller ρ.
pub fn fit_compound_kappa(
    sample: &RediscoverySample,
    candidate_rhos: Option<&[u64]>,
) -> Result<CompoundKappaModel> {
    if sample.counts.is_empty() {
        return Err(FitError::EmptySample);
    }
    let (diag, models) = evaluate_rho_candidates(sample, candidate_rhos);
    let mut best: Option<CompoundKappaModel> = None;
    for m in models {
        if !m.sse.is_finite() {
            continue;
        }
        match &best {
            Some(b) if b.sse <= m.sse => {}
            _ => best = Some(m),
        }
    }
    best.ok_or_else(|| {
        if diag.is_empty() {
            FitError::NoFeasibleCandidate(format!(
                "no count value has {MIN_TAIL_POINTS} observations on each side"
            ))
        } else {
            let reasons: Vec<String> = diag
                .iter()
                .map(|c| format!("rho={}: {}", c.rho, c.skipped.as_deref().unwrap_or("?")))
                .collect();
            FitError::NoFeasibleCandidate(reasons.join("; "))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Window;

    fn model() -> CompoundKappaModel {
        let left = KappaParams::uniform(-1.0, 12.0).unwrap();
        let right = KappaParams::new(-0.3, 4.0, -0.25, 0.6).unwrap();
        CompoundKappaModel::new(left, right, 10, 0.7).unwrap()
    }

    #[test]
    fn weights_from_definition() {
        let m = model();
        let fa = 11.0 / 13.0;
        assert!((m.w - 1.0 / (0.7 * fa + 0.3)).abs() < 1e-15);
        assert!((m.w2 - 0.3).abs() < 1e-15);
        // w1 = 0.5, F_a(ρ) = 0.9
        let left = KappaParams::uniform(0.0, 10.0).unwrap();
        let m = CompoundKappaModel::new(left, left, 9, 0.5).unwrap();
        assert!((m.w - 1.0 / 0.95).abs() < 1e-15);
        // all mass of F_a at or below ρ
        let m = CompoundKappaModel::new(left, left, 10, 0.5).unwrap();
        assert_eq!(m.w, 1.0);
    }

    #[test]
    fn continuous_at_rho_and_normalized() {
        let m = model();
        let rho = m.rho as f64;
        let below = m.w * m.w1 * m.left.cdf(rho);
        assert!((m.cdf(rho) - below).abs() < 1e-15);
        assert!((m.cdf(rho + 1e-12) - below).abs() < 1e-9);
        assert!(m.cdf(1e300) == 1.0);
        assert!(m.sf(1e12) < 1e-9);
    }

    #[test]
    fn left_branch_identity() {
        let m = model();
        for d in 0..=10 {
            let d = d as f64;
            assert_eq!(m.cdf(d), (m.w * m.w1 * m.left.cdf(d)).clamp(0.0, 1.0));
        }
    }

    #[test]
    fn quantile_roundtrip() {
        let m = model();
        for i in 1..1000 {
            let u = i as f64 / 1000.0;
            let x = m.quantile(u).unwrap();
            assert!((m.cdf(x) - u).abs() < 1e-12, "{u} {x}");
        }
        // boundary convention
        let b0 = m.boundary_mass();
        let x = m.quantile(b0).unwrap();
        assert!((x - m.rho as f64).abs() < 1e-9);
        assert!(m.quantile(0.0).is_err() && m.quantile(1.0).is_err());
    }

    #[test]
    fn degenerate_single_regime() {
        let left = KappaParams::new(0.0, 3.0, 0.5, 0.2).unwrap();
        // upper bound of this law is 6, so F_a(ρ) = 1 at ρ = 6
        assert_eq!(left.cdf(6.0), 1.0);
        let m = CompoundKappaModel::new(left, left, 6, 1.0).unwrap();
        assert_eq!(m.w, 1.0);
        for &u in &[0.01, 0.3, 0.9, 0.999] {
            assert_eq!(m.quantile(u).unwrap(), left.quantile(u).unwrap());
        }
    }

    #[test]
    fn candidate_rule() {
        let mut v: Vec<u64> = (0..20).map(|i| i / 2).collect();
        v.sort_unstable();
        // 0..=9 each twice: ρ needs ≥ 8 at or below and ≥ 8 above
        assert_eq!(default_candidates(&v), vec![3, 4, 5]);
        assert!(default_candidates(&v[..10]).is_empty());
    }

    #[test]
    fn no_candidate_is_an_error() {
        let s = RediscoverySample::from_counts("r", Window::new(0.0, 1.0).unwrap(), vec![1, 2, 3]);
        assert!(matches!(
            fit_compound_kappa(&s, None),
            Err(FitError::NoFeasibleCandidate(_))
        ));
    }
}
