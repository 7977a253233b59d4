//! Expected customer wait (M7): analytic M/M/k via Erlang C and a G/M/k
//! FIFO simulator driven by exponential or bootstrapped empirical gaps.
//!
//! Rates are per year. Waits are reported in working days.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::ingest::InterarrivalSample;

pub const WORKING_DAYS_PER_YEAR: f64 = 250.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueueError {
    #[error("unstable queue: lambda={lambda} >= k*mu={capacity}")]
    Unstable { lambda: f64, capacity: f64 },
    #[error("invalid queue parameter: {0}")]
    InvalidParameter(String),
    #[error("empirical arrival sample has no gaps")]
    EmptyGaps,
}

pub type Result<T> = std::result::Result<T, QueueError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrivals {
    /// Gaps in years, resampled i.i.d. with replacement.
    Empirical { gaps: Vec<f64> },
    Exponential { rate: f64 },
}

impl Arrivals {
    pub fn from_sample(sample: &InterarrivalSample) -> Self {
        Arrivals::Empirical {
            gaps: sample.gaps.clone(),
        }
    }

    /// Mean arrival rate of the law the simulator draws from.
    pub fn rate(&self) -> Result<f64> {
        match self {
            Arrivals::Exponential { rate } => Ok(*rate),
            Arrivals::Empirical { gaps } => {
                if gaps.is_empty() {
                    return Err(QueueError::EmptyGaps);
                }
                let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
                Ok(1.0 / mean)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueScenario {
    pub arrivals: Arrivals,
    pub service_rate_mu: f64,
    pub servers_k: u32,
    pub working_days_per_year: f64,
}

impl QueueScenario {
    pub fn new(arrivals: Arrivals, mu: f64, k: u32) -> Self {
        Self {
            arrivals,
            service_rate_mu: mu,
            servers_k: k,
            working_days_per_year: WORKING_DAYS_PER_YEAR,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.service_rate_mu > 0.0 && self.service_rate_mu.is_finite()) {
            return Err(QueueError::InvalidParameter(format!(
                "mu must be positive, got {}",
                self.service_rate_mu
            )));
        }
        if self.servers_k == 0 {
            return Err(QueueError::InvalidParameter("k must be at least 1".into()));
        }
        if !(self.working_days_per_year > 0.0) {
            return Err(QueueError::InvalidParameter("working days per year must be positive".into()));
        }
        match &self.arrivals {
            Arrivals::Exponential { rate } if !(*rate > 0.0 && rate.is_finite()) => Err(
                QueueError::InvalidParameter(format!("arrival rate must be positive, got {rate}")),
            ),
            Arrivals::Empirical { gaps } if gaps.is_empty() => Err(QueueError::EmptyGaps),
            Arrivals::Empirical { gaps } if gaps.iter().any(|g| !(g.is_finite() && *g >= 0.0)) => {
                Err(QueueError::InvalidParameter("gaps must be finite and ≥ 0".into()))
            }
            Arrivals::Empirical { gaps } if gaps.iter().all(|&g| g == 0.0) => {
                Err(QueueError::InvalidParameter("all gaps are zero".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub replications: u32,
    /// Customers simulated per replication, warmup included.
    pub events_per_replication: u64,
    pub warmup_events: u64,
    pub rng_seed: u64,
}

impl SimConfig {
    /// Warmup defaults to 10% of the events.
    pub fn new(replications: u32, events_per_replication: u64, rng_seed: u64) -> Self {
        Self {
            replications,
            events_per_replication,
            warmup_events: events_per_replication / 10,
            rng_seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(QueueError::InvalidParameter("need at least 2 replications".into()));
        }
        if self.warmup_events >= self.events_per_replication {
            return Err(QueueError::InvalidParameter(
                "warmup must be shorter than the replication".into(),
            ));
        }
        Ok(())
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::new(30, 200_000, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueMethod {
    AnalyticMmk,
    SimulatedGmk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueResult {
    /// `W_q` in working days.
    pub wq_mean: f64,
    /// Half-width of the 95% t-interval over replication means; 0 for analytic.
    pub wq_ci_halfwidth: f64,
    /// `W = W_q + 1/μ` in working days.
    pub w_total_mean: f64,
    pub busy_percent: f64,
    pub method: QueueMethod,
    pub unstable: bool,
    /// Mean over replications of time-average queue length / (λ W_q).
    pub little_ratio: Option<f64>,
}

/// Erlang C: probability an arrival waits, for offered load `a = λ/μ`.
pub fn erlang_c(k: u32, a: f64) -> f64 {
    let mut b = 1.0;
    for n in 1..=k {
        b = a * b / (n as f64 + a * b);
    }
    let rho = a / k as f64;
    b / (1.0 - rho * (1.0 - b))
}

/// M/M/k `W_q` in the time unit of the rates.
pub fn mmk_wq_time(lambda: f64, mu: f64, k: u32) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite() && mu > 0.0 && mu.is_finite()) {
        return Err(QueueError::InvalidParameter(format!(
            "need lambda ≥ 0 and mu > 0, got lambda={lambda}, mu={mu}"
        )));
    }
    if k == 0 {
        return Err(QueueError::InvalidParameter("k must be at least 1".into()));
    }
    let capacity = k as f64 * mu;
    if lambda >= capacity {
        return Err(QueueError::Unstable { lambda, capacity });
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    Ok(erlang_c(k, lambda / mu) / (capacity - lambda))
}

/// M/M/k result in working days, 250 per year.
pub fn mmk_wq(lambda: f64, mu: f64, k: u32) -> Result<QueueResult> {
    mmk_wq_days(lambda, mu, k, WORKING_DAYS_PER_YEAR)
}

pub fn mmk_wq_days(lambda: f64, mu: f64, k: u32, working_days_per_year: f64) -> Result<QueueResult> {
    let wq = mmk_wq_time(lambda, mu, k)? * working_days_per_year;
    Ok(QueueResult {
        wq_mean: wq,
        wq_ci_halfwidth: 0.0,
        w_total_mean: wq + working_days_per_year / mu,
        busy_percent: lambda / (k as f64 * mu) * 100.0,
        method: QueueMethod::AnalyticMmk,
        unstable: false,
        little_ratio: None,
    })
}

/// `W = W_q + 1/μ`, with `W_q` in working days and `μ` per year.
pub fn m7_expected_wait(r: &QueueResult, mu: f64) -> f64 {
    m7_expected_wait_days(r.wq_mean, mu, WORKING_DAYS_PER_YEAR)
}

pub fn m7_expected_wait_days(wq_days: f64, mu: f64, working_days_per_year: f64) -> f64 {
    wq_days + working_days_per_year / mu
}

struct Replication {
    mean_wait: f64,
    little_ratio: Option<f64>,
}

fn replicate(scenario: &QueueScenario, cfg: &SimConfig, lambda: f64, rep: u32) -> Replication {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(u64::from(rep));
    let service = Exp::new(scenario.service_rate_mu).expect("validated mu");
    let exp_arrivals = match scenario.arrivals {
        Arrivals::Exponential { rate } => Some(Exp::new(rate).expect("validated rate")),
        Arrivals::Empirical { .. } => None,
    };

    let n = cfg.events_per_replication as usize;
    let warmup = cfg.warmup_events as usize;
    let mut free_at = vec![0.0f64; scenario.servers_k as usize];
    let mut arrival = 0.0f64;
    let mut t0 = 0.0;
    let mut arrivals = Vec::with_capacity(n);
    let mut starts = Vec::with_capacity(n);
    let mut wait_sum = 0.0;

    for i in 0..n {
        arrival += match (&exp_arrivals, &scenario.arrivals) {
            (Some(e), _) => e.sample(&mut rng),
            (None, Arrivals::Empirical { gaps }) => gaps[rng.random_range(0..gaps.len())],
            (None, Arrivals::Exponential { .. }) => unreachable!(),
        };
        // FIFO with identical servers: the next customer takes whichever
        // server frees up first
        let (slot, &free) = free_at
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("k ≥ 1");
        let start = arrival.max(free);
        free_at[slot] = start + service.sample(&mut rng);
        if i == warmup {
            t0 = arrival;
        }
        if i >= warmup {
            wait_sum += start - arrival;
        }
        arrivals.push(arrival);
        starts.push(start);
    }

    let measured = (n - warmup) as f64;
    let mean_wait = wait_sum / measured;

    // Little: time-average number waiting over [t0, t1] against λ W_q
    let t1 = arrival;
    let little_ratio = if t1 > t0 && mean_wait > 0.0 {
        let area: f64 = arrivals
            .iter()
            .zip(&starts)
            .map(|(&a, &s)| (s.min(t1) - a.max(t0)).max(0.0))
            .sum();
        Some(area / (t1 - t0) / (lambda * mean_wait))
    } else {
        None
    };

    Replication {
        mean_wait,
        little_ratio,
    }
}

/// Simulated G/M/k with a 95% Student-t interval over replication means.
/// Runs even when `λ ≥ kμ`, flagging the result as unstable.
pub fn gmk_simulate(scenario: &QueueScenario, cfg: &SimConfig) -> Result<QueueResult> {
    scenario.validate()?;
    cfg.validate()?;
    let lambda = scenario.arrivals.rate()?;
    let mu = scenario.service_rate_mu;
    let k = scenario.servers_k;
    let days = scenario.working_days_per_year;

    let reps: Vec<Replication> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| replicate(scenario, cfg, lambda, r))
        .collect();

    // replication order is fixed, so the sums are bit-stable
    let r = reps.len() as f64;
    let means: Vec<f64> = reps.iter().map(|x| x.mean_wait * days).collect();
    let mean = means.iter().sum::<f64>() / r;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (r - 1.0);
    let t = StudentsT::new(0.0, 1.0, r - 1.0)
        .expect("df ≥ 1")
        .inverse_cdf(0.975);
    let ratios: Vec<f64> = reps.iter().filter_map(|x| x.little_ratio).collect();
    let little_ratio = (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64);

    Ok(QueueResult {
        wq_mean: mean,
        wq_ci_halfwidth: t * (var / r).sqrt(),
        w_total_mean: m7_expected_wait_days(mean, mu, days),
        busy_percent: lambda / (k as f64 * mu) * 100.0,
        method: QueueMethod::SimulatedGmk,
        unstable: lambda >= k as f64 * mu,
        little_ratio,
    })
}

/// One row of the staffing table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: u32,
    pub gmk: Option<QueueResult>,
    /// None when the M/M/k queue is unstable.
    pub wq_mmk_days: Option<f64>,
    pub busy_percent: f64,
    pub unstable: bool,
    pub error: Option<String>,
}

/// Analytic and simulated waits for each k. Row failures are recorded, not
/// raised.
pub fn staffing_sweep(template: &QueueScenario, ks: &[u32], cfg: &SimConfig) -> Vec<SweepRow> {
    ks.iter()
        .map(|&k| {
            let scenario = QueueScenario {
                servers_k: k,
                ..template.clone()
            };
            let lambda = scenario.arrivals.rate().unwrap_or(f64::NAN);
            let mu = scenario.service_rate_mu;
            let busy_percent = lambda / (k as f64 * mu) * 100.0;
            let mmk = mmk_wq_days(lambda, mu, k, scenario.working_days_per_year).ok();
            let (gmk, error) = match gmk_simulate(&scenario, cfg) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            SweepRow {
                k,
                unstable: !(busy_percent < 100.0),
                gmk,
                wq_mmk_days: mmk.map(|m| m.wq_mean),
                busy_percent,
                error,
            }
        })
        .collect()
}

/// `k,wq_gmk_days,wq_gmk_ci,wq_mmk_days,busy_percent`; unavailable cells are
/// left empty.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("k,wq_gmk_days,wq_gmk_ci,wq_mmk_days,busy_percent\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.k,
            cell(r.gmk.as_ref().map(|g| g.wq_mean)),
            cell(r.gmk.as_ref().map(|g| g.wq_ci_halfwidth)),
            cell(r.wq_mmk_days),
            r.busy_percent
        ));
    }
    out
}
