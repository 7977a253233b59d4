//! Distribution fitting for rediscovery counts: Kappa, Pearson Type III and
//! compound Kappa, plus discretization, AIC and QQ diagnostics.
//!
//! Every family is fitted as a continuous law and discretized with
//! `p(j) = F(j) - F(j-1)`, `F(-1) = 0`, so `P(D ≤ d) = F(d)` at integers and
//! any mass below zero lands on `p(0)`.

mod compound;
mod kappa;
mod pe3;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{RediscoverySample, Window};
use crate::lmoments::{ecdf_weibull, sample_lmoments, Feasibility, LMomentError};

pub use compound::{
    compound_cdf, compound_quantile, evaluate_rho_candidates, fit_compound_kappa,
    default_candidates, CompoundKappaModel, RhoCandidate, MIN_TAIL_POINTS,
};
pub use kappa::{fit_kappa, kappa_cdf, kappa_quantile, kappa_tau34, KappaParams, SHAPE_LIMIT_EPS};
pub use pe3::{fit_pe3, pe3_tau3, Pe3Params};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("probability {0} outside (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("degenerate L-moments (lambda2 must be positive and lambda1 finite)")]
    DegenerateLMoments,
    #[error("L-moment ratios (tau3={tau3}, tau4={tau4}) infeasible for kappa: {bound:?}")]
    Infeasible {
        tau3: f64,
        tau4: f64,
        bound: Feasibility,
    },
    #[error("shape solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("L-skewness {0} outside (-1, 1)")]
    SkewOutOfRange(f64),
    #[error(transparent)]
    LMoments(#[from] LMomentError),
    #[error("no feasible partition point: {0}")]
    NoFeasibleCandidate(String),
    #[error("observed counts have zero model probability: {counts:?}")]
    ZeroProbability { counts: Vec<u64> },
    #[error("empty sample")]
    EmptySample,
}

pub type Result<T> = std::result::Result<T, FitError>;

/// Continuous law on the real line, evaluated at count lattice points.
pub trait Distribution {
    fn cdf(&self, x: f64) -> f64;
    /// `1 - F(x)`; implementations compute it without cancellation.
    fn sf(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }
    fn quantile(&self, u: f64) -> Result<f64>;
}

impl Distribution for KappaParams {
    fn cdf(&self, x: f64) -> f64 {
        KappaParams::cdf(self, x)
    }
    fn sf(&self, x: f64) -> f64 {
        KappaParams::sf(self, x)
    }
    fn quantile(&self, u: f64) -> Result<f64> {
        KappaParams::quantile(self, u)
    }
}

impl Distribution for Pe3Params {
    fn cdf(&self, x: f64) -> f64 {
        Pe3Params::cdf(self, x)
    }
    fn sf(&self, x: f64) -> f64 {
        Pe3Params::sf(self, x)
    }
    fn quantile(&self, u: f64) -> Result<f64> {
        Pe3Params::quantile(self, u)
    }
}

impl Distribution for CompoundKappaModel {
    fn cdf(&self, x: f64) -> f64 {
        CompoundKappaModel::cdf(self, x)
    }
    fn sf(&self, x: f64) -> f64 {
        CompoundKappaModel::sf(self, x)
    }
    fn quantile(&self, u: f64) -> Result<f64> {
        CompoundKappaModel::quantile(self, u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Kappa,
    Pe3,
    CompoundKappa,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Kappa, Family::Pe3, Family::CompoundKappa];

    pub fn n_params(self) -> usize {
        match self {
            Family::Kappa => 4,
            Family::Pe3 => 3,
            // two Kappa laws plus ρ
            Family::CompoundKappa => 9,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Kappa => "kappa",
            Family::Pe3 => "pe3",
            Family::CompoundKappa => "compound_kappa",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kappa" | "kap" => Ok(Family::Kappa),
            "pe3" => Ok(Family::Pe3),
            "compound_kappa" | "compound" => Ok(Family::CompoundKappa),
            other => Err(format!("unknown model family `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum ModelParams {
    Kappa(KappaParams),
    Pe3(Pe3Params),
    CompoundKappa(CompoundKappaModel),
}

impl ModelParams {
    pub fn family(&self) -> Family {
        match self {
            ModelParams::Kappa(_) => Family::Kappa,
            ModelParams::Pe3(_) => Family::Pe3,
            ModelParams::CompoundKappa(_) => Family::CompoundKappa,
        }
    }
}

impl Distribution for ModelParams {
    fn cdf(&self, x: f64) -> f64 {
        match self {
            ModelParams::Kappa(p) => p.cdf(x),
            ModelParams::Pe3(p) => p.cdf(x),
            ModelParams::CompoundKappa(m) => m.cdf(x),
        }
    }
    fn sf(&self, x: f64) -> f64 {
        match self {
            ModelParams::Kappa(p) => p.sf(x),
            ModelParams::Pe3(p) => p.sf(x),
            ModelParams::CompoundKappa(m) => m.sf(x),
        }
    }
    fn quantile(&self, u: f64) -> Result<f64> {
        match self {
            ModelParams::Kappa(p) => p.quantile(u),
            ModelParams::Pe3(p) => p.quantile(u),
            ModelParams::CompoundKappa(m) => m.quantile(u),
        }
    }
}

/// Which data a model was fitted to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRef {
    pub release_id: String,
    pub window: Window,
    pub n: usize,
}

impl SampleRef {
    pub fn of(sample: &RediscoverySample) -> Self {
        Self {
            release_id: sample.release_id.clone(),
            window: sample.window,
            n: sample.counts.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub family: Family,
    pub params: ModelParams,
    /// `None` until computed against a sample, or when some observation has
    /// zero probability under the model.
    pub aic: Option<f64>,
    pub n_params: usize,
    pub sample_ref: Option<SampleRef>,
}

impl FittedModel {
    /// Wraps bare parameters, e.g. for generators or hand-built models.
    pub fn from_params(params: ModelParams) -> Self {
        let family = params.family();
        Self {
            family,
            params,
            aic: None,
            n_params: family.n_params(),
            sample_ref: None,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.params.cdf(x)
    }

    pub fn sf(&self, x: f64) -> f64 {
        self.params.sf(x)
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        self.params.quantile(u)
    }

    /// `P(D ≤ d)` for integer `d`; zero for `d < 0`.
    pub fn count_cdf(&self, d: i64) -> f64 {
        if d < 0 {
            0.0
        } else {
            self.cdf(d as f64)
        }
    }

    /// `P(D > d)` for integer `d`; one for `d < 0`.
    pub fn count_sf(&self, d: i64) -> f64 {
        if d < 0 {
            1.0
        } else {
            self.sf(d as f64)
        }
    }

    pub fn sse(&self) -> Option<f64> {
        match &self.params {
            ModelParams::CompoundKappa(m) => Some(m.sse),
            _ => None,
        }
    }

    pub fn rho(&self) -> Option<u64> {
        match &self.params {
            ModelParams::CompoundKappa(m) => Some(m.rho),
            _ => None,
        }
    }
}

fn sample_values(sample: &RediscoverySample) -> Vec<f64> {
    sample.counts.iter().map(|&c| c as f64).collect()
}

/// Fits one family to a sample and records its AIC when it is finite.
pub fn fit_family(family: Family, sample: &RediscoverySample) -> Result<FittedModel> {
    if sample.counts.is_empty() {
        return Err(FitError::EmptySample);
    }
    let params = match family {
        Family::Kappa => ModelParams::Kappa(fit_kappa(&sample_lmoments(&sample_values(sample))?)?),
        Family::Pe3 => ModelParams::Pe3(fit_pe3(&sample_lmoments(&sample_values(sample))?)?),
        Family::CompoundKappa => ModelParams::CompoundKappa(fit_compound_kappa(sample, None)?),
    };
    let mut model = FittedModel::from_params(params);
    model.sample_ref = Some(SampleRef::of(sample));
    model.aic = aic(&model, sample).ok();
    Ok(model)
}

/// `p(j) = F(j) - F(j-1)` with `F(-1) = 0`.
pub fn discrete_pmf(f: &FittedModel, j: u64) -> f64 {
    pmf_of(&f.params, j)
}

pub(crate) fn pmf_of<D: Distribution + ?Sized>(d: &D, j: u64) -> f64 {
    if j == 0 {
        return d.cdf(0.0);
    }
    let hi = j as f64;
    let lo = hi - 1.0;
    // difference the smaller tail to keep relative precision
    let p = if d.cdf(lo) > 0.5 {
        d.sf(lo) - d.sf(hi)
    } else {
        d.cdf(hi) - d.cdf(lo)
    };
    p.max(0.0)
}

/// `2k - 2 Σ ln p(D_i)`.
pub fn aic(f: &FittedModel, sample: &RediscoverySample) -> Result<f64> {
    let ll = log_likelihood(f, &sample.counts)?;
    Ok(2.0 * f.n_params as f64 - 2.0 * ll)
}

/// Discretized log-likelihood of counts; each distinct count is evaluated
/// once.
pub fn log_likelihood(f: &FittedModel, counts: &[u64]) -> Result<f64> {
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let mut ll = 0.0;
    let mut zero = Vec::new();
    for chunk in sorted.chunk_by(|a, b| a == b) {
        let p = discrete_pmf(f, chunk[0]);
        if p > 0.0 {
            ll += chunk.len() as f64 * p.ln();
        } else {
            zero.push(chunk[0]);
        }
    }
    if zero.is_empty() {
        Ok(ll)
    } else {
        Err(FitError::ZeroProbability { counts: zero })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub empirical: f64,
    pub model: f64,
}

/// Sorted observations paired with model quantiles at the Weibull plotting
/// positions.
pub fn qq_data(f: &FittedModel, sample: &RediscoverySample) -> Result<Vec<QqPoint>> {
    qq_pairs(&f.params, &sample_values(sample))
}

pub fn qq_pairs<D: Distribution + ?Sized>(d: &D, values: &[f64]) -> Result<Vec<QqPoint>> {
    if values.is_empty() {
        return Err(FitError::EmptySample);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let u = ecdf_weibull(i + 1, n)?;
            Ok(QqPoint {
                empirical: x,
                model: d.quantile(u)?,
            })
        })
        .collect()
}
