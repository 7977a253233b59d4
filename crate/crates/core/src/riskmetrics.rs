//! Rediscovery risk metrics M1–M6, partial expectations and the staffing
//! formulas, for any count distribution.
//!
//! With `F` the cdf of the per-defect count `D`, `F̃ = 1 - F`, `p` its pmf
//! and `R(l, u) = Σ_{j=l}^{u} j p(j)`:
//!
//! ```text
//! M1(d) = N F̃(d)               defects rediscovered more than d times
//! M2(x) = N F̃(⌊xC/100⌋)        defects hitting more than x% of C customers
//! M3(d) = N R(d, ∞)             rediscoveries from defects seen ≥ d times
//! M4(L) = F̃(d), M5(L) = F(d)    d: smallest d ≥ 1 with L ≤ N R(1, d)
//! M6(α) = N R(1, F⁻¹(α))        rediscovery volume at confidence α
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distfit::{discrete_pmf, FittedModel};

/// Probability left beyond the default tail cap.
pub const TAIL_EPS: f64 = 1e-9;
/// Largest default tail cap.
pub const MAX_TAIL_CAP: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("threshold unreachable: load {load} exceeds N*R(1,inf) = {max}")]
    ThresholdUnreachable { load: f64, max: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("customer base size C is not set")]
    CustomersNotSet,
}

pub type Result<T> = std::result::Result<T, RiskError>;

/// A law on the nonnegative integers.
pub trait CountDistribution {
    /// `P(D ≤ d)`.
    fn count_cdf(&self, d: u64) -> f64;
    /// `P(D > d)`.
    fn count_sf(&self, d: u64) -> f64 {
        1.0 - self.count_cdf(d)
    }
    fn count_pmf(&self, j: u64) -> f64;
    /// Inverse of the underlying continuous cdf, when there is one.
    fn continuous_quantile(&self, _alpha: f64) -> Option<f64> {
        None
    }
}

impl CountDistribution for FittedModel {
    fn count_cdf(&self, d: u64) -> f64 {
        self.cdf(d as f64)
    }
    fn count_sf(&self, d: u64) -> f64 {
        self.sf(d as f64)
    }
    fn count_pmf(&self, j: u64) -> f64 {
        discrete_pmf(self, j)
    }
    fn continuous_quantile(&self, alpha: f64) -> Option<f64> {
        self.quantile(alpha).ok()
    }
}

/// Explicit pmf on `0..probs.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinitePmf {
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl FinitePmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(RiskError::InvalidArgument(
                "pmf needs nonnegative finite probabilities".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(RiskError::InvalidArgument(format!("pmf sums to {total}, not 1")));
        }
        let cumulative = probs
            .iter()
            .scan(0.0, |acc, &p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Ok(Self { probs, cumulative })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

impl CountDistribution for FinitePmf {
    fn count_cdf(&self, d: u64) -> f64 {
        match self.cumulative.get(d as usize) {
            Some(&c) => c.min(1.0),
            None => 1.0,
        }
    }
    fn count_sf(&self, d: u64) -> f64 {
        let start = (d as usize).saturating_add(1);
        self.probs.get(start..).map(|t| t.iter().sum()).unwrap_or(0.0)
    }
    fn count_pmf(&self, j: u64) -> f64 {
        self.probs.get(j as usize).copied().unwrap_or(0.0)
    }
}

/// Compensated running sum.
#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }
    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// A count law, the defect population N and the customer base C, with
/// `j p(j)` pre-summed up to the tail cap.
#[derive(Debug, Clone)]
pub struct MetricContext<D> {
    model: D,
    n_defects: u64,
    customers: Option<u64>,
    tail_cap: u64,
    /// `prefix[k] = Σ_{j ≤ k} j p(j)`.
    prefix: Vec<f64>,
    /// `suffix[k] = Σ_{k ≤ j ≤ J} j p(j)`, one past the cap is zero.
    suffix: Vec<f64>,
    tail_mass: f64,
}

/// Smallest J with `F(J) ≥ 1 - TAIL_EPS`, at most [`MAX_TAIL_CAP`].
pub fn default_tail_cap<D: CountDistribution>(model: &D) -> u64 {
    if model.count_sf(0) <= TAIL_EPS {
        return 0;
    }
    let mut hi = 1u64;
    while model.count_sf(hi) > TAIL_EPS {
        if hi >= MAX_TAIL_CAP {
            return MAX_TAIL_CAP;
        }
        hi = (hi * 2).min(MAX_TAIL_CAP);
    }
    let mut lo = hi / 2; // sf(lo) > eps
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if model.count_sf(mid) > TAIL_EPS {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

impl<D: CountDistribution> MetricContext<D> {
    pub fn new(model: D, n_defects: u64, customers: Option<u64>) -> Result<Self> {
        let cap = default_tail_cap(&model);
        Self::with_tail_cap(model, n_defects, customers, cap)
    }

    pub fn with_tail_cap(model: D, n_defects: u64, customers: Option<u64>, tail_cap: u64) -> Result<Self> {
        if n_defects == 0 {
            return Err(RiskError::InvalidArgument("N must be positive".into()));
        }
        if customers == Some(0) {
            return Err(RiskError::InvalidArgument("C must be positive".into()));
        }
        let len = tail_cap as usize + 1;
        let terms: Vec<f64> = (0..=tail_cap).map(|j| j as f64 * model.count_pmf(j)).collect();
        let mut prefix = Vec::with_capacity(len);
        let mut acc = Neumaier::default();
        for &t in &terms {
            acc.add(t);
            prefix.push(acc.value());
        }
        let mut suffix = vec![0.0; len + 1];
        let mut acc = Neumaier::default();
        for k in (0..len).rev() {
            acc.add(terms[k]);
            suffix[k] = acc.value();
        }
        let tail_mass = model.count_sf(tail_cap);
        Ok(Self {
            model,
            n_defects,
            customers,
            tail_cap,
            prefix,
            suffix,
            tail_mass,
        })
    }

    pub fn model(&self) -> &D {
        &self.model
    }

    pub fn n_defects(&self) -> u64 {
        self.n_defects
    }

    pub fn customers(&self) -> Option<u64> {
        self.customers
    }

    pub fn tail_cap(&self) -> u64 {
        self.tail_cap
    }

    /// `P(D > J)`, the mass the partial sums leave out.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    fn n(&self) -> f64 {
        self.n_defects as f64
    }

    pub fn cdf(&self, d: i64) -> f64 {
        if d < 0 {
            0.0
        } else {
            self.model.count_cdf(d as u64)
        }
    }

    /// `F̃(d) = 1 - F(d)`.
    pub fn decumulative(&self, d: i64) -> f64 {
        if d < 0 {
            1.0
        } else {
            self.model.count_sf(d as u64)
        }
    }

    /// `R(l, u)`; `u = None` means ∞, summed to the tail cap.
    pub fn partial_expectation(&self, l: u64, u: Option<u64>) -> f64 {
        let u = u.unwrap_or(self.tail_cap).min(self.tail_cap);
        if l > u {
            return 0.0;
        }
        let (l, u) = (l as usize, u as usize);
        // difference whichever cumulative array keeps the operands small
        let via_suffix = self.suffix[l] - self.suffix[u + 1];
        let via_prefix = self.prefix[u] - if l == 0 { 0.0 } else { self.prefix[l - 1] };
        if self.suffix[l] < self.prefix[u] {
            via_suffix
        } else {
            via_prefix
        }
    }

    pub fn m1(&self, d: u64) -> f64 {
        self.n() * self.decumulative(d as i64)
    }

    pub fn m2(&self, x_percent: f64) -> Result<M2> {
        self.m2_with(x_percent, M2Form::Complementary)
    }

    pub fn m2_with(&self, x_percent: f64, form: M2Form) -> Result<M2> {
        let c = self.customers.ok_or(RiskError::CustomersNotSet)?;
        if !(x_percent > 0.0 && x_percent <= 100.0) {
            return Err(RiskError::InvalidArgument(format!(
                "x_percent must lie in (0, 100], got {x_percent}"
            )));
        }
        let d_tilde = (x_percent * c as f64 / 100.0).floor() as u64;
        let value = match form {
            M2Form::Complementary => self.m1(d_tilde),
            M2Form::Literal => self.n() * self.cdf(d_tilde as i64),
        };
        let warning = (d_tilde == 0).then(|| {
            format!("{x_percent}% of {c} customers rounds down to 0; M2 equals N*F~(0)")
        });
        Ok(M2 {
            d_tilde,
            value,
            warning,
        })
    }

    pub fn m3(&self, d: u64) -> f64 {
        self.n() * self.partial_expectation(d, None)
    }

    /// Smallest `d ≥ 1` with `L ≤ N R(1, d)`.
    pub fn threshold_d_for_load(&self, load: f64) -> Result<u64> {
        if !(load >= 0.0) {
            return Err(RiskError::InvalidArgument(format!("load must be ≥ 0, got {load}")));
        }
        let n = self.n();
        let max = n * self.prefix[self.tail_cap as usize];
        if load > max {
            return Err(RiskError::ThresholdUnreachable { load, max });
        }
        if self.tail_cap == 0 {
            return Ok(1);
        }
        // prefix is nondecreasing, so bisect on d ∈ [1, J]
        let (mut lo, mut hi) = (1usize, self.tail_cap as usize);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if load <= n * self.prefix[mid] {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(lo as u64)
    }

    pub fn m4(&self, load: f64) -> Result<f64> {
        let d = self.threshold_d_for_load(load)?;
        Ok(self.decumulative(d as i64))
    }

    pub fn m5(&self, load: f64) -> Result<f64> {
        let d = self.threshold_d_for_load(load)?;
        Ok(self.cdf(d as i64))
    }

    /// Smallest `d` with `F(d) ≥ α`.
    pub fn discrete_quantile(&self, alpha: f64) -> u64 {
        if self.cdf(0) >= alpha {
            return 0;
        }
        let mut hi = self.tail_cap.max(1);
        while self.cdf(hi as i64) < alpha {
            if hi >= u64::MAX / 4 {
                return hi;
            }
            hi *= 2;
        }
        let mut lo = 0u64; // F(lo) < α
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.cdf(mid as i64) >= alpha {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    pub fn m6(&self, alpha: f64) -> Result<M6> {
        self.m6_with(alpha, QuantileConvention::Discrete)
    }

    pub fn m6_with(&self, alpha: f64, convention: QuantileConvention) -> Result<M6> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(RiskError::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let q = match convention {
            QuantileConvention::Discrete => Some(self.discrete_quantile(alpha)),
            QuantileConvention::ContinuousFloor => self
                .model
                .continuous_quantile(alpha)
                .map(|x| if x > 0.0 { x.floor() as u64 } else { 0 }),
        };
        let Some(q) = q else {
            return Err(RiskError::InvalidArgument(
                "model has no continuous quantile function".into(),
            ));
        };
        let mut warnings = Vec::new();
        if q == 0 {
            warnings.push(format!(
                "quantile at alpha={alpha} is 0 (mass at zero covers alpha); M6 = 0"
            ));
        }
        if q > self.tail_cap {
            warnings.push(format!(
                "quantile {q} lies beyond the tail cap {}; partial sum truncated",
                self.tail_cap
            ));
        }
        let value = if q == 0 {
            0.0
        } else {
            self.n() * self.partial_expectation(1, Some(q))
        };
        Ok(M6 {
            alpha,
            quantile_d: q,
            value,
            warnings,
        })
    }

    /// `⌈M6(α) / (μ T)⌉`.
    pub fn staffing_for_confidence(&self, alpha: f64, mu: f64, horizon: f64) -> Result<u64> {
        let m6 = self.m6(alpha)?;
        staffing_from_m6(m6.value, mu, horizon)
    }
}

/// Which reading of M2 to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum M2Form {
    /// `N F̃(d̃)`: defects affecting more than d̃ customers.
    #[default]
    Complementary,
    /// `N F(d̃)` as the sum is printed.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M2 {
    pub d_tilde: u64,
    pub value: f64,
    pub warning: Option<String>,
}

/// How `F⁻¹(α)` is turned into an integer for M6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileConvention {
    /// Smallest d with `F(d) ≥ α`.
    #[default]
    Discrete,
    /// `⌊F⁻¹(α)⌋` of the continuous fit.
    ContinuousFloor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M6 {
    pub alpha: f64,
    pub quantile_d: u64,
    pub value: f64,
    pub warnings: Vec<String>,
}

/// Team size A, per-person service rate μ, horizon T and arrival rate λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaffingInputs {
    pub people: u64,
    pub mu: f64,
    pub horizon: f64,
    pub lambda_rate: f64,
}

/// `Q = A μ T`.
pub fn capacity(inputs: &StaffingInputs) -> f64 {
    inputs.people as f64 * inputs.mu * inputs.horizon
}

/// `⌈M6 / (μ T)⌉`, ignoring rounding noise just above an integer.
pub fn staffing_from_m6(m6: f64, mu: f64, horizon: f64) -> Result<u64> {
    if !(mu > 0.0 && horizon > 0.0) {
        return Err(RiskError::InvalidArgument("mu and T must be positive".into()));
    }
    if !(m6 >= 0.0) {
        return Err(RiskError::InvalidArgument(format!("M6 must be ≥ 0, got {m6}")));
    }
    let x = m6 / (mu * horizon);
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        Ok(nearest as u64)
    } else {
        Ok(x.ceil() as u64)
    }
}

/// `b = λ / (k μ) × 100`. Values above 100 mean the team is overloaded.
pub fn busy_fraction(lambda_rate: f64, k: u32, mu: f64) -> f64 {
    lambda_rate / (k as f64 * mu) * 100.0
}

/// One release's inputs to [`release_comparison`].
pub struct ReleaseInput<'a, D> {
    pub release_id: String,
    pub context: &'a MetricContext<D>,
    /// Observed total rediscoveries U in the window, if known.
    pub empirical_u: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseRow {
    pub release_id: String,
    pub m1: f64,
    /// U / N.
    pub empirical_ratio: Option<f64>,
    /// 1 is the best quality (fewest defects rediscovered more than d times).
    pub quality_rank: usize,
}

/// Orders releases by M1(d): lower M1 ranks as higher quality. Equal M1
/// values share a rank; rows are listed by rank, then release id.
pub fn release_comparison<D: CountDistribution>(
    releases: &[ReleaseInput<'_, D>],
    d: u64,
) -> Result<Vec<ReleaseRow>> {
    if releases.len() < 2 {
        return Err(RiskError::InvalidArgument(
            "release comparison needs at least two releases".into(),
        ));
    }
    let mut rows: Vec<ReleaseRow> = releases
        .iter()
        .map(|r| ReleaseRow {
            release_id: r.release_id.clone(),
            m1: r.context.m1(d),
            empirical_ratio: r.empirical_u.map(|u| u as f64 / r.context.n_defects() as f64),
            quality_rank: 0,
        })
        .collect();
    rows.sort_by(|a, b| a.m1.total_cmp(&b.m1).then_with(|| a.release_id.cmp(&b.release_id)));
    for i in 0..rows.len() {
        rows[i].quality_rank = if i > 0 && rows[i].m1 == rows[i - 1].m1 {
            rows[i - 1].quality_rank
        } else {
            i + 1
        };
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distfit::{KappaParams, ModelParams};

    fn two_point(n: u64) -> MetricContext<FinitePmf> {
        MetricContext::new(FinitePmf::new(vec![0.0, 0.5, 0.5]).unwrap(), n, Some(1000)).unwrap()
    }

    #[test]
    fn partial_expectation_examples() {
        let ctx = two_point(10);
        assert_eq!(ctx.partial_expectation(1, Some(2)), 1.5);
        assert_eq!(ctx.partial_expectation(5, Some(9)), 0.0);
        assert_eq!(ctx.partial_expectation(1, None), 1.5);
        assert_eq!(ctx.partial_expectation(2, Some(1)), 0.0);
    }

    #[test]
    fn m1_m3_examples() {
        let ctx = two_point(10);
        assert_eq!(ctx.m3(2), 10.0);
        assert_eq!(ctx.m3(1), 15.0);
        assert_eq!(ctx.m3(0), ctx.m3(1));
        assert_eq!(ctx.m1(0), 10.0);
        assert_eq!(ctx.m1(1), 5.0);
        assert_eq!(ctx.m1(2), 0.0);
        let ctx = MetricContext::new(FinitePmf::new(vec![0.9, 0.1]).unwrap(), 100, None).unwrap();
        assert!((ctx.m1(0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_examples() {
        let ctx = two_point(10);
        assert_eq!(ctx.threshold_d_for_load(0.0).unwrap(), 1);
        assert_eq!(ctx.threshold_d_for_load(9.0).unwrap(), 2);
        assert_eq!(ctx.threshold_d_for_load(5.0).unwrap(), 1);
        assert!(matches!(
            ctx.threshold_d_for_load(16.0),
            Err(RiskError::ThresholdUnreachable { .. })
        ));
        assert_eq!(ctx.m4(9.0).unwrap(), 0.0);
        assert_eq!(ctx.m5(9.0).unwrap(), 1.0);
        assert_eq!(ctx.m5(0.0).unwrap(), ctx.cdf(1));
    }

    #[test]
    fn m6_example_and_zero_quantile() {
        let ctx = two_point(10);
        let m6 = ctx.m6(0.6).unwrap();
        assert_eq!(m6.quantile_d, 2);
        assert_eq!(m6.value, 15.0);
        let ctx = MetricContext::new(FinitePmf::new(vec![0.7, 0.3]).unwrap(), 10, None).unwrap();
        let m6 = ctx.m6(0.5).unwrap();
        assert_eq!(m6.value, 0.0);
        assert!(!m6.warnings.is_empty());
        assert!(ctx.m6(1.0).is_err());
    }

    #[test]
    fn m2_examples() {
        let ctx = two_point(10);
        let m2 = ctx.m2(1.5).unwrap();
        assert_eq!(m2.d_tilde, 15);
        assert_eq!(m2.value, ctx.m1(15));
        assert!(m2.warning.is_none());
        let m2 = ctx.m2(0.05).unwrap();
        assert_eq!(m2.d_tilde, 0);
        assert!(m2.warning.is_some());
        let lit = ctx.m2_with(0.05, M2Form::Literal).unwrap();
        assert_eq!(lit.value, 10.0 * ctx.cdf(0));
        let no_c = MetricContext::new(FinitePmf::new(vec![1.0]).unwrap(), 1, None).unwrap();
        assert_eq!(no_c.m2(1.0), Err(RiskError::CustomersNotSet));
    }

    #[test]
    fn staffing_and_capacity() {
        let q = capacity(&StaffingInputs {
            people: 8,
            mu: 125.0,
            horizon: 1.0,
            lambda_rate: 982.0,
        });
        assert_eq!(q, 1000.0);
        assert_eq!(staffing_from_m6(1245.0, 125.0, 1.0).unwrap(), 10);
        assert_eq!(staffing_from_m6(1000.0, 125.0, 1.0).unwrap(), 8);
        assert_eq!(staffing_from_m6(0.0, 125.0, 1.0).unwrap(), 0);
        let q = capacity(&StaffingInputs {
            people: 10,
            mu: 125.0,
            horizon: 0.5,
            lambda_rate: 0.0,
        });
        assert_eq!(q, 625.0);
    }

    #[test]
    fn busy_fraction_examples() {
        assert!((busy_fraction(982.0, 8, 125.0) - 98.2).abs() < 1e-12);
        assert!((busy_fraction(982.0, 12, 125.0) - 65.466_666_666_666_67).abs() < 1e-9);
        assert_eq!(busy_fraction(0.0, 3, 125.0), 0.0);
    }

    #[test]
    fn release_ordering_and_ties() {
        let a = MetricContext::new(FinitePmf::new(vec![0.5, 0.5]).unwrap(), 40, None).unwrap();
        let b = MetricContext::new(FinitePmf::new(vec![0.9, 0.1]).unwrap(), 40, None).unwrap();
        let c = MetricContext::new(FinitePmf::new(vec![0.9, 0.1]).unwrap(), 40, None).unwrap();
        let rows = release_comparison(
            &[
                ReleaseInput { release_id: "v3".into(), context: &a, empirical_u: Some(20) },
                ReleaseInput { release_id: "v2".into(), context: &c, empirical_u: None },
                ReleaseInput { release_id: "v1".into(), context: &b, empirical_u: None },
            ],
            0,
        )
        .unwrap();
        let ids: Vec<&str> = rows.iter().map(|r| r.release_id.as_str()).collect();
        assert_eq!(ids, ["v1", "v2", "v3"]);
        assert_eq!(rows[0].quality_rank, 1);
        assert_eq!(rows[1].quality_rank, 1);
        assert_eq!(rows[2].quality_rank, 3);
        assert_eq!(rows[2].empirical_ratio, Some(0.5));
        assert!(release_comparison(&rows_of(&a), 0).is_err());
    }

    fn rows_of(ctx: &MetricContext<FinitePmf>) -> Vec<ReleaseInput<'_, FinitePmf>> {
        vec![ReleaseInput {
            release_id: "x".into(),
            context: ctx,
            empirical_u: None,
        }]
    }

    #[test]
    fn fitted_model_context_covers_tail() {
        let f = FittedModel::from_params(ModelParams::Kappa(
            KappaParams::new(0.0, 3.0, -0.3, 0.5).unwrap(),
        ));
        let ctx = MetricContext::new(f, 500, Some(10_000)).unwrap();
        assert!(ctx.tail_mass() <= TAIL_EPS);
        assert!(ctx.decumulative(ctx.tail_cap() as i64 - 1) > TAIL_EPS);
        // p(0) = F(0), so M3(0) = M3(1)
        assert_eq!(ctx.m3(0), ctx.m3(1));
        let m6 = ctx.m6(0.999).unwrap();
        assert!(m6.value <= ctx.m3(1) + 1e-9);
        let cont = ctx.m6_with(0.999, QuantileConvention::ContinuousFloor).unwrap();
        assert!(cont.quantile_d <= m6.quantile_d && m6.quantile_d <= cont.quantile_d + 1);
    }
}
