//! End-to-end analysis: ingest → window → fit → select by AIC → metrics →
//! queue, plus the synthetic event-log generator used for fixtures.
//!
//! Outputs are collected in memory and written at the end. A successful run
//! writes `report.json` and the CSV datasets into the output directory; a
//! failed run writes whatever was produced into `partial/` together with
//! `failure_manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distfit::{fit_family, qq_data, Family, FitError, FittedModel, ModelParams};
use crate::ingest::{
    interarrival_times, parse_events_with, total_rediscoveries, window_counts, DefectEvent,
    EventKind, EventLog, IngestError, RediscoverySample, TiePolicy, TimeBase, Window,
    DAYS_PER_YEAR,
};
use crate::lmoments::diagram::{ratio_diagram_data, RatioDiagramDataset};
use crate::lmoments::{sample_lmoments, LMoments};
use crate::queueing::{
    staffing_sweep, sweep_csv, Arrivals, QueueError, QueueScenario, SimConfig, SweepRow,
    WORKING_DAYS_PER_YEAR,
};
use crate::riskmetrics::{
    release_comparison, staffing_from_m6, M2Form, MetricContext, QuantileConvention,
    ReleaseInput, ReleaseRow, RiskError,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Grid step for the family curves in `diagram.csv`.
pub const DIAGRAM_GRID_STEP: f64 = 0.01;
/// Largest per-defect count the generator will write out.
pub const MAX_SYNTH_COUNT: u64 = 1_000_000;
const GAP_HISTOGRAM_BINS: usize = 30;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("ingest: no defects in window [{s}, {t}){}", release.as_deref().map(|r| format!(" for release `{r}`")).unwrap_or_default())]
    NoDefects {
        release: Option<String>,
        s: f64,
        t: f64,
    },
    #[error("distfit: {0}")]
    Fit(#[from] FitError),
    #[error("distfit: no family could be fitted for release `{release}`: {details}")]
    NoModel { release: String, details: String },
    #[error("riskmetrics: {0}")]
    Metrics(#[from] RiskError),
    #[error("queueing: {0}")]
    Queue(#[from] QueueError),
    #[error("io: {0}")]
    Io(String),
}

impl PipelineError {
    /// 2 for configuration, 3 for data and I/O, 4 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Ingest(_) | PipelineError::NoDefects { .. } | PipelineError::Io(_) => 3,
            PipelineError::Fit(_)
            | PipelineError::NoModel { .. }
            | PipelineError::Metrics(_)
            | PipelineError::Queue(_) => 4,
        }
    }

    pub fn module(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Ingest(_) | PipelineError::NoDefects { .. } => "ingest",
            PipelineError::Fit(_) | PipelineError::NoModel { .. } => "distfit",
            PipelineError::Metrics(_) => "riskmetrics",
            PipelineError::Queue(_) => "queueing",
            PipelineError::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// One requested metric evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum MetricRequest {
    M1 { d: u64 },
    M2 { x_percent: f64 },
    M3 { d: u64 },
    M4 { load: f64 },
    M5 { load: f64 },
    M6 { alpha: f64 },
}

impl MetricRequest {
    pub fn name(&self) -> &'static str {
        match self {
            MetricRequest::M1 { .. } => "M1",
            MetricRequest::M2 { .. } => "M2",
            MetricRequest::M3 { .. } => "M3",
            MetricRequest::M4 { .. } => "M4",
            MetricRequest::M5 { .. } => "M5",
            MetricRequest::M6 { .. } => "M6",
        }
    }

    pub fn argument(&self) -> f64 {
        match *self {
            MetricRequest::M1 { d } | MetricRequest::M3 { d } => d as f64,
            MetricRequest::M2 { x_percent } => x_percent,
            MetricRequest::M4 { load } | MetricRequest::M5 { load } => load,
            MetricRequest::M6 { alpha } => alpha,
        }
    }

    fn validate(&self, customers: Option<u64>) -> std::result::Result<(), String> {
        match *self {
            MetricRequest::M2 { x_percent } => {
                if customers.is_none() {
                    return Err("M2 needs the customer base size (--customers)".into());
                }
                if !(x_percent > 0.0 && x_percent <= 100.0) {
                    return Err(format!("M2 percentage must lie in (0, 100], got {x_percent}"));
                }
            }
            MetricRequest::M4 { load } | MetricRequest::M5 { load } if !(load >= 0.0 && load.is_finite()) => {
                return Err(format!("{} load must be finite and ≥ 0, got {load}", self.name()));
            }
            MetricRequest::M6 { alpha } if !(alpha > 0.0 && alpha < 1.0) => {
                return Err(format!("M6 alpha must lie in (0, 1), got {alpha}"));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Parses `m1:10`, `m2:1.5`, `m6:0.999` and so on.
impl FromStr for MetricRequest {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (name, arg) = s
            .split_once(':')
            .ok_or_else(|| format!("metric `{s}` must look like m1:10"))?;
        let arg = arg.trim();
        let int = || arg.parse::<u64>().map_err(|_| format!("metric `{s}`: `{arg}` is not a nonnegative integer"));
        let real = || arg.parse::<f64>().map_err(|_| format!("metric `{s}`: `{arg}` is not a number"));
        match name.trim().to_ascii_lowercase().as_str() {
            "m1" => Ok(MetricRequest::M1 { d: int()? }),
            "m2" => Ok(MetricRequest::M2 { x_percent: real()? }),
            "m3" => Ok(MetricRequest::M3 { d: int()? }),
            "m4" => Ok(MetricRequest::M4 { load: real()? }),
            "m5" => Ok(MetricRequest::M5 { load: real()? }),
            "m6" => Ok(MetricRequest::M6 { alpha: real()? }),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalMode {
    /// Bootstrap the observed request gaps.
    #[default]
    Empirical,
    /// Poisson arrivals at the observed rate.
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueRequest {
    /// Requests handled per person per year.
    pub mu: f64,
    pub k_min: u32,
    pub k_max: u32,
    pub arrivals: ArrivalMode,
    pub replications: u32,
    pub events_per_replication: u64,
    pub working_days_per_year: f64,
}

impl QueueRequest {
    pub fn new(mu: f64, k_min: u32, k_max: u32) -> Self {
        Self {
            mu,
            k_min,
            k_max,
            arrivals: ArrivalMode::Empirical,
            replications: 30,
            events_per_replication: 200_000,
            working_days_per_year: WORKING_DAYS_PER_YEAR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub input_path: PathBuf,
    /// GA-date sidecar for calendar-dated inputs.
    pub ga_dates_path: Option<PathBuf>,
    /// Empty means every release in the log.
    pub releases: Vec<String>,
    pub window: Window,
    pub customers: Option<u64>,
    pub families: Vec<Family>,
    pub metrics: Vec<MetricRequest>,
    pub queue: Option<QueueRequest>,
    pub out_dir: PathBuf,
    pub rng_seed: u64,
    pub m2_form: M2Form,
    pub quantile_convention: QuantileConvention,
    pub tie_policy: TiePolicy,
    /// Largest d in the M1 and M3 curves.
    pub curve_max_d: u64,
}

impl AnalysisConfig {
    pub fn new(input_path: impl Into<PathBuf>, window: Window, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            input_path: input_path.into(),
            ga_dates_path: None,
            releases: Vec::new(),
            window,
            customers: None,
            families: Family::ALL.to_vec(),
            metrics: Vec::new(),
            queue: None,
            out_dir: out_dir.into(),
            rng_seed: 0,
            m2_form: M2Form::default(),
            quantile_convention: QuantileConvention::default(),
            tie_policy: TiePolicy::default(),
            curve_max_d: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        Window::new(self.window.s, self.window.t).map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.families.is_empty() {
            return Err(PipelineError::Config("at least one model family is required".into()));
        }
        if self.customers == Some(0) {
            return Err(PipelineError::Config("customer base size must be positive".into()));
        }
        for m in &self.metrics {
            m.validate(self.customers).map_err(PipelineError::Config)?;
        }
        if let Some(q) = &self.queue {
            if !(q.mu > 0.0 && q.mu.is_finite()) {
                return Err(PipelineError::Config(format!("mu must be positive, got {}", q.mu)));
            }
            if q.k_min == 0 || q.k_min > q.k_max {
                return Err(PipelineError::Config(format!(
                    "k range {}..{} must be nonempty and start at 1 or more",
                    q.k_min, q.k_max
                )));
            }
            if q.replications < 2 || q.events_per_replication < 10 {
                return Err(PipelineError::Config(
                    "simulation needs at least 2 replications of 10 events".into(),
                ));
            }
            if !(q.working_days_per_year > 0.0) {
                return Err(PipelineError::Config("working days per year must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub family: Family,
    pub n_params: usize,
    pub aic: Option<f64>,
    pub params: Option<ModelParams>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub metric: String,
    pub argument: f64,
    pub value: f64,
    /// The integer the metric was evaluated at: d̃, the load threshold d, or
    /// the α-quantile.
    pub at_d: Option<u64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaffingReport {
    pub alpha: f64,
    pub m6: f64,
    pub mu: f64,
    /// Window length in years.
    pub horizon: f64,
    pub people: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueReport {
    pub arrivals: ArrivalMode,
    /// Mean request rate per year of the simulated arrival law.
    pub lambda: f64,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseReport {
    pub release_id: String,
    pub window: Window,
    pub n_defects: usize,
    pub total_rediscoveries: u64,
    pub lmoments: Option<LMoments>,
    pub fits: Vec<FitRow>,
    pub selected: Family,
    pub tail_cap: u64,
    pub tail_mass: f64,
    pub metrics: Vec<MetricValue>,
    pub staffing: Option<StaffingReport>,
    pub queue: Option<QueueReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub d: u64,
    pub rows: Vec<ReleaseRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool_version: String,
    pub rng_seed: u64,
    pub config: AnalysisConfig,
    pub releases: Vec<ReleaseReport>,
    pub release_comparison: Option<ComparisonReport>,
    pub warnings: Vec<String>,
}

/// Files keyed by path relative to the output directory.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: BTreeMap<String, String>,
}

impl Artifacts {
    pub fn insert(&mut self, path: impl Into<String>, contents: String) {
        self.files.insert(path.into(), contents);
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn get(&self, path: &str) -> Option<&str> {
        self.files.get(path).map(String::as_str)
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        for (rel, contents) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, contents)?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct FailureManifest<'a> {
    module: &'a str,
    error: String,
    exit_code: i32,
    files: Vec<&'a str>,
}

#[derive(Debug)]
pub struct PipelineFailure {
    pub error: PipelineError,
    /// Where partial outputs went, if they could be written.
    pub partial_dir: Option<PathBuf>,
}

impl std::fmt::Display for PipelineFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)
    }
}

/// Runs the full analysis and writes its outputs.
pub fn run_pipeline(config: &AnalysisConfig) -> std::result::Result<RunReport, PipelineFailure> {
    let mut artifacts = Artifacts::default();
    let outcome = build_report(config, &mut artifacts).and_then(|report| {
        artifacts.insert("report.json", to_json(&report)?);
        let partial = config.out_dir.join("partial");
        if partial.is_dir() {
            fs::remove_dir_all(&partial)?;
        }
        artifacts.write_to(&config.out_dir)?;
        Ok(report)
    });
    outcome.map_err(|error| {
        let partial_dir = write_partial(&config.out_dir, &artifacts, &error).ok();
        PipelineFailure { error, partial_dir }
    })
}

fn write_partial(out_dir: &Path, artifacts: &Artifacts, error: &PipelineError) -> std::io::Result<PathBuf> {
    let dir = out_dir.join("partial");
    artifacts.write_to(&dir)?;
    let manifest = FailureManifest {
        module: error.module(),
        error: error.to_string(),
        exit_code: error.exit_code(),
        files: artifacts.paths().collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("failure_manifest.json"), text + "\n")?;
    Ok(dir)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| PipelineError::Io(e.to_string()))
}

/// Reads the event log named in the config.
pub fn load_log(input: &Path, ga_dates: Option<&Path>) -> Result<EventLog> {
    let time_base = match ga_dates {
        Some(p) => TimeBase::from_sidecar(open(p)?)?,
        None => TimeBase::default(),
    };
    Ok(parse_events_with(open(input)?, &time_base)?)
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

/// Releases to analyse: the configured ones, or all in the log.
pub fn selected_releases(log: &EventLog, requested: &[String], window: Window) -> Result<Vec<String>> {
    if requested.is_empty() {
        if log.releases().is_empty() {
            return Err(PipelineError::NoDefects {
                release: None,
                s: window.s,
                t: window.t,
            });
        }
        return Ok(log.releases().iter().cloned().collect());
    }
    for r in requested {
        if !log.releases().contains(r) {
            return Err(IngestError::UnknownRelease(r.clone()).into());
        }
    }
    Ok(requested.to_vec())
}

/// Windowed counts, failing when no defect falls in the window.
pub fn release_sample(log: &EventLog, release: &str, window: Window) -> Result<RediscoverySample> {
    let sample = window_counts(log, release, window)?;
    if sample.counts.is_empty() {
        return Err(PipelineError::NoDefects {
            release: Some(release.to_string()),
            s: window.s,
            t: window.t,
        });
    }
    Ok(sample)
}

/// Fits every family, keeping failures as rows.
pub fn fit_families(sample: &RediscoverySample, families: &[Family]) -> (Vec<FitRow>, Vec<FittedModel>) {
    let mut rows = Vec::new();
    let mut models = Vec::new();
    for &family in families {
        match fit_family(family, sample) {
            Ok(m) => {
                rows.push(FitRow {
                    family,
                    n_params: m.n_params,
                    aic: m.aic,
                    params: Some(m.params.clone()),
                    error: m.aic.is_none().then(|| "zero probability for an observed count; AIC undefined".to_string()),
                });
                models.push(m);
            }
            Err(e) => rows.push(FitRow {
                family,
                n_params: family.n_params(),
                aic: None,
                params: None,
                error: Some(e.to_string()),
            }),
        }
    }
    (rows, models)
}

/// The fitted model with the smallest AIC; ties go to the earlier family.
pub fn select_by_aic(models: &[FittedModel]) -> Option<&FittedModel> {
    models
        .iter()
        .filter(|m| m.aic.is_some_and(f64::is_finite))
        .min_by(|a, b| {
            a.aic
                .unwrap()
                .total_cmp(&b.aic.unwrap())
                .then(a.family.cmp(&b.family))
        })
}

/// Evaluates one metric request.
pub fn evaluate_metric<D: crate::riskmetrics::CountDistribution>(
    ctx: &MetricContext<D>,
    req: &MetricRequest,
    m2_form: M2Form,
    convention: QuantileConvention,
) -> Result<MetricValue> {
    let (value, at_d, warnings) = match *req {
        MetricRequest::M1 { d } => (ctx.m1(d), Some(d), vec![]),
        MetricRequest::M2 { x_percent } => {
            let m2 = ctx.m2_with(x_percent, m2_form)?;
            (m2.value, Some(m2.d_tilde), m2.warning.into_iter().collect())
        }
        MetricRequest::M3 { d } => (ctx.m3(d), Some(d), vec![]),
        MetricRequest::M4 { load } => {
            let d = ctx.threshold_d_for_load(load)?;
            (ctx.decumulative(d as i64), Some(d), vec![])
        }
        MetricRequest::M5 { load } => {
            let d = ctx.threshold_d_for_load(load)?;
            (ctx.cdf(d as i64), Some(d), vec![])
        }
        MetricRequest::M6 { alpha } => {
            let m6 = ctx.m6_with(alpha, convention)?;
            (m6.value, Some(m6.quantile_d), m6.warnings)
        }
    };
    Ok(MetricValue {
        metric: req.name().to_string(),
        argument: req.argument(),
        value,
        at_d,
        warnings,
    })
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| PipelineError::Io(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| PipelineError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| PipelineError::Io(e.to_string()))
}

fn num(x: f64) -> String {
    x.to_string()
}

/// Directory name for a release id.
pub fn release_dir(release_id: &str) -> String {
    let name: String = release_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    match name.as_str() {
        "" | "." | ".." => format!("release_{name}"),
        _ => name,
    }
}

/// Equal-width histogram of gaps in days.
pub fn gap_histogram(gaps_years: &[f64], bins: usize) -> Vec<(f64, f64, u64)> {
    let days: Vec<f64> = gaps_years.iter().map(|g| g * DAYS_PER_YEAR).collect();
    let max = days.iter().copied().fold(0.0, f64::max);
    if days.is_empty() || bins == 0 {
        return Vec::new();
    }
    let width = if max > 0.0 { max / bins as f64 } else { 1.0 };
    let mut counts = vec![0u64; bins];
    for d in days {
        let i = ((d / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (i as f64 * width, (i + 1) as f64 * width, c))
        .collect()
}

fn curve_artifacts(
    dir: &str,
    ctx: &MetricContext<FittedModel>,
    d_max: u64,
    artifacts: &mut Artifacts,
) -> Result<()> {
    let ds = 0..=d_max.min(ctx.tail_cap().max(1));
    artifacts.insert(
        format!("{dir}/m1_curve.csv"),
        csv_table(&["d", "value"], ds.clone().map(|d| vec![d.to_string(), num(ctx.m1(d))]))?,
    );
    artifacts.insert(
        format!("{dir}/m3_curve.csv"),
        csv_table(&["d", "value"], ds.map(|d| vec![d.to_string(), num(ctx.m3(d))]))?,
    );
    let max_load = ctx.n_defects() as f64 * ctx.partial_expectation(1, None);
    let m5 = (0..=100).filter_map(|i| {
        let load = (max_load * i as f64 / 100.0).min(max_load);
        ctx.m5(load).ok().map(|v| vec![num(load), num(v)])
    });
    artifacts.insert(format!("{dir}/m5_curve.csv"), csv_table(&["L", "value"], m5)?);
    let alphas = (50..100)
        .map(|i| i as f64 / 100.0)
        .chain([0.995, 0.999]);
    let m6 = alphas.filter_map(|a| ctx.m6(a).ok().map(|m| vec![num(a), num(m.value)]));
    artifacts.insert(format!("{dir}/m6_curve.csv"), csv_table(&["alpha", "value"], m6)?);
    Ok(())
}

fn fit_artifacts(
    dir: &str,
    sample: &RediscoverySample,
    rows: &[FitRow],
    models: &[FittedModel],
    artifacts: &mut Artifacts,
) -> Result<()> {
    let aic_rows = rows.iter().map(|r| {
        vec![
            r.family.to_string(),
            r.n_params.to_string(),
            r.aic.map(num).unwrap_or_default(),
            r.error.clone().unwrap_or_else(|| "ok".into()),
        ]
    });
    artifacts.insert(
        format!("{dir}/aic.csv"),
        csv_table(&["family", "n_params", "aic", "status"], aic_rows)?,
    );
    for m in models {
        if let Ok(qq) = qq_data(m, sample) {
            let rows = qq.iter().map(|p| vec![num(p.empirical), num(p.model)]);
            artifacts.insert(
                format!("{dir}/qq_{}.csv", m.family),
                csv_table(&["empirical", "model"], rows)?,
            );
        }
    }
    let max = sample.counts.iter().copied().max().unwrap_or(0);
    let n = sample.counts.len() as f64;
    let mut sorted = sample.counts.clone();
    sorted.sort_unstable();
    let mut header = vec!["d".to_string(), "empirical".to_string()];
    header.extend(models.iter().map(|m| m.family.to_string()));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let overlay = (0..=max).map(|d| {
        let below = sorted.partition_point(|&c| c <= d) as f64;
        let mut row = vec![d.to_string(), num(below / n)];
        row.extend(models.iter().map(|m| num(m.count_cdf(d as i64))));
        row
    });
    artifacts.insert(format!("{dir}/cdf_overlay.csv"), csv_table(&header, overlay)?);
    Ok(())
}

fn build_report(config: &AnalysisConfig, artifacts: &mut Artifacts) -> Result<RunReport> {
    config.validate()?;
    let log = load_log(&config.input_path, config.ga_dates_path.as_deref())?;
    let releases = selected_releases(&log, &config.releases, config.window)?;

    let mut reports = Vec::new();
    let mut contexts = Vec::new();
    let mut diagram_points = Vec::new();
    for release in &releases {
        let (report, ctx) = analyse_release(config, &log, release, artifacts)?;
        if let Some(lm) = report.lmoments {
            diagram_points.push((release.clone(), lm));
        }
        contexts.push((release.clone(), ctx, report.total_rediscoveries));
        reports.push(report);
    }

    let diagram: RatioDiagramDataset =
        ratio_diagram_data(&diagram_points, DIAGRAM_GRID_STEP).map_err(PipelineError::Config)?;
    artifacts.insert("diagram.csv", diagram.to_csv());

    let release_comparison = if contexts.len() >= 2 {
        let d = config
            .metrics
            .iter()
            .find_map(|m| match m {
                MetricRequest::M1 { d } => Some(*d),
                _ => None,
            })
            .unwrap_or(10);
        let inputs: Vec<ReleaseInput<'_, FittedModel>> = contexts
            .iter()
            .map(|(id, ctx, u)| ReleaseInput {
                release_id: id.clone(),
                context: ctx,
                empirical_u: Some(*u),
            })
            .collect();
        let rows = release_comparison(&inputs, d)?;
        let table = rows.iter().map(|r| {
            vec![
                r.release_id.clone(),
                num(r.m1),
                r.empirical_ratio.map(num).unwrap_or_default(),
                r.quality_rank.to_string(),
            ]
        });
        artifacts.insert(
            "release_comparison.csv",
            csv_table(&["release_id", "m1", "empirical_ratio", "quality_rank"], table)?,
        );
        Some(ComparisonReport { d, rows })
    } else {
        None
    };

    let warnings = reports
        .iter()
        .flat_map(|r| r.warnings.iter().map(move |w| format!("{}: {w}", r.release_id)))
        .collect();
    Ok(RunReport {
        tool_version: TOOL_VERSION.to_string(),
        rng_seed: config.rng_seed,
        config: config.clone(),
        releases: reports,
        release_comparison,
        warnings,
    })
}

fn analyse_release(
    config: &AnalysisConfig,
    log: &EventLog,
    release: &str,
    artifacts: &mut Artifacts,
) -> Result<(ReleaseReport, MetricContext<FittedModel>)> {
    let dir = release_dir(release);
    let mut warnings = Vec::new();
    let sample = release_sample(log, release, config.window)?;
    let lmoments = match sample_lmoments(&sample.values_f64()) {
        Ok(lm) => Some(lm),
        Err(e) => {
            warnings.push(format!("sample L-moments unavailable: {e}"));
            None
        }
    };

    let (fits, models) = fit_families(&sample, &config.families);
    fit_artifacts(&dir, &sample, &fits, &models, artifacts)?;
    let selected = select_by_aic(&models).cloned().ok_or_else(|| PipelineError::NoModel {
        release: release.to_string(),
        details: fits
            .iter()
            .map(|r| format!("{}: {}", r.family, r.error.as_deref().unwrap_or("no AIC")))
            .collect::<Vec<_>>()
            .join("; "),
    })?;

    let ctx = MetricContext::new(selected.clone(), sample.counts.len() as u64, config.customers)?;
    if ctx.tail_mass() > crate::riskmetrics::TAIL_EPS {
        warnings.push(format!(
            "selected model leaves mass {:e} beyond the tail cap {}; tail sums are truncated",
            ctx.tail_mass(),
            ctx.tail_cap()
        ));
    }
    let mut metrics = Vec::new();
    for req in &config.metrics {
        let v = evaluate_metric(&ctx, req, config.m2_form, config.quantile_convention)?;
        warnings.extend(v.warnings.iter().map(|w| format!("{}: {w}", v.metric)));
        metrics.push(v);
    }
    let metric_rows = metrics.iter().map(|m| {
        vec![
            m.metric.clone(),
            num(m.argument),
            num(m.value),
            m.at_d.map(|d| d.to_string()).unwrap_or_default(),
        ]
    });
    artifacts.insert(
        format!("{dir}/metrics.csv"),
        csv_table(&["metric", "argument", "value", "at_d"], metric_rows)?,
    );
    curve_artifacts(&dir, &ctx, config.curve_max_d, artifacts)?;

    let gaps = interarrival_times(log, release, config.window, config.tie_policy)?;
    let hist = gap_histogram(&gaps.gaps, GAP_HISTOGRAM_BINS)
        .into_iter()
        .map(|(lo, hi, c)| vec![num(lo), num(hi), c.to_string()]);
    artifacts.insert(
        format!("{dir}/gap_histogram.csv"),
        csv_table(&["lower_days", "upper_days", "count"], hist)?,
    );

    let mut staffing = None;
    let mut queue = None;
    if let Some(q) = &config.queue {
        let horizon = config.window.length();
        if let Some(m6) = metrics.iter().find(|m| m.metric == "M6") {
            staffing = Some(StaffingReport {
                alpha: m6.argument,
                m6: m6.value,
                mu: q.mu,
                horizon,
                people: staffing_from_m6(m6.value, q.mu, horizon)?,
            });
        }
        if gaps.insufficient_events {
            warnings.push("fewer than two requests in the window; queue analysis skipped".into());
        } else {
            let arrivals = match q.arrivals {
                ArrivalMode::Empirical => Arrivals::from_sample(&gaps),
                ArrivalMode::Exponential => Arrivals::Exponential {
                    rate: gaps.arrival_rate_lambda,
                },
            };
            let lambda = arrivals.rate()?;
            let scenario = QueueScenario {
                working_days_per_year: q.working_days_per_year,
                ..QueueScenario::new(arrivals, q.mu, q.k_min)
            };
            let cfg = SimConfig::new(q.replications, q.events_per_replication, config.rng_seed);
            let ks: Vec<u32> = (q.k_min..=q.k_max).collect();
            let rows = staffing_sweep(&scenario, &ks, &cfg);
            for r in &rows {
                if r.unstable {
                    warnings.push(format!("k={}: busy {:.1}% ≥ 100%, queue is unstable", r.k, r.busy_percent));
                }
                if let Some(e) = &r.error {
                    warnings.push(format!("k={}: {e}", r.k));
                }
            }
            artifacts.insert(format!("{dir}/queue.csv"), sweep_csv(&rows));
            queue = Some(QueueReport {
                arrivals: q.arrivals,
                lambda,
                rows,
            });
        }
    }

    let report = ReleaseReport {
        release_id: release.to_string(),
        window: config.window,
        n_defects: sample.counts.len(),
        total_rediscoveries: total_rediscoveries(&sample),
        lmoments,
        fits,
        selected: selected.family,
        tail_cap: ctx.tail_cap(),
        tail_mass: ctx.tail_mass(),
        metrics,
        staffing,
        queue,
        warnings,
    };
    Ok((report, ctx))
}

/// Draws `n` defect counts `D = max(0, ⌈Q(U)⌉)`, so that `P(D ≤ j) = F(j)`.
pub fn synth_counts(params: &ModelParams, n: usize, seed: u64) -> Result<Vec<u64>> {
    let model = FittedModel::from_params(params.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = loop {
                let u = rng.random::<f64>();
                if u > 0.0 {
                    break u;
                }
            };
            let x = model.quantile(u)?;
            let d = if x > 0.0 { x.ceil() } else { 0.0 };
            if !(d <= MAX_SYNTH_COUNT as f64) {
                return Err(PipelineError::Config(format!(
                    "drawn count {d} exceeds the generator limit {MAX_SYNTH_COUNT}"
                )));
            }
            Ok(d as u64)
        })
        .collect()
}

/// An event log for [`synth_counts`]: each defect is discovered in the first
/// tenth of the window and its rediscoveries fall uniformly between its
/// discovery and `t`.
pub fn synth_generate(
    params: &ModelParams,
    n: usize,
    seed: u64,
    release_id: &str,
    window: Window,
) -> Result<String> {
    let Window { s, t } = Window::new(window.s, window.t)?;
    let counts = synth_counts(params, n, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut events = Vec::new();
    for (i, &d) in counts.iter().enumerate() {
        let defect_id = format!("d{i:06}");
        let found = s + 0.1 * (t - s) * rng.random::<f64>();
        events.push(DefectEvent {
            defect_id: defect_id.clone(),
            release_id: release_id.to_string(),
            kind: EventKind::Discovery,
            time: found,
        });
        for _ in 0..d {
            events.push(DefectEvent {
                defect_id: defect_id.clone(),
                release_id: release_id.to_string(),
                kind: EventKind::Rediscovery,
                time: found + (t - found) * rng.random::<f64>(),
            });
        }
    }
    let log = EventLog::from_events(events)?;
    let mut buf = Vec::new();
    log.write_csv(&mut buf)?;
    String::from_utf8(buf).map_err(|e| PipelineError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distfit::KappaParams;
    use crate::ingest::parse_events;

    fn window() -> Window {
        Window::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn metric_request_parsing() {
        assert_eq!("m1:10".parse::<MetricRequest>().unwrap(), MetricRequest::M1 { d: 10 });
        assert_eq!(
            "M6:0.999".parse::<MetricRequest>().unwrap(),
            MetricRequest::M6 { alpha: 0.999 }
        );
        assert!("m1:-1".parse::<MetricRequest>().is_err());
        assert!("m9:1".parse::<MetricRequest>().is_err());
        assert!("m1".parse::<MetricRequest>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = AnalysisConfig::new("x.csv", window(), "out");
        assert!(c.validate().is_ok());
        c.metrics.push(MetricRequest::M2 { x_percent: 1.0 });
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        c.customers = Some(100);
        assert!(c.validate().is_ok());
        c.families.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn synth_header_only_and_deterministic() {
        let p = ModelParams::Kappa(KappaParams::new(0.0, 2.0, -0.1, 0.3).unwrap());
        let empty = synth_generate(&p, 0, 1, "v1", window()).unwrap();
        assert_eq!(empty, "defect_id,release_id,kind,time\n");
        let a = synth_generate(&p, 50, 7, "v1", window()).unwrap();
        let b = synth_generate(&p, 50, 7, "v1", window()).unwrap();
        assert_eq!(a, b);
        let log = parse_events(a.as_bytes()).unwrap();
        let sample = window_counts(&log, "v1", window()).unwrap();
        assert_eq!(sample.counts.len(), 50);
    }

    #[test]
    fn synth_counts_follow_quantile() {
        let p = ModelParams::Kappa(KappaParams::new(0.0, 2.0, -0.1, 0.3).unwrap());
        let text = synth_generate(&p, 20, 3, "v1", window()).unwrap();
        let log = parse_events(text.as_bytes()).unwrap();
        let counts = window_counts(&log, "v1", window()).unwrap().counts;
        assert_eq!(counts, synth_counts(&p, 20, 3).unwrap());
        let model = FittedModel::from_params(p);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: f64 = rng.random();
        let x = model.quantile(u).unwrap();
        assert_eq!(counts[0], if x > 0.0 { x.ceil() as u64 } else { 0 });
    }

    #[test]
    fn release_dir_sanitises() {
        assert_eq!(release_dir("v.4"), "v.4");
        assert_eq!(release_dir("a/b c"), "a_b_c");
        assert_eq!(release_dir(".."), "release_..");
    }

    #[test]
    fn histogram_bins() {
        let h = gap_histogram(&[0.0, 1.0 / DAYS_PER_YEAR, 2.0 / DAYS_PER_YEAR], 2);
        assert_eq!(h.len(), 2);
        assert_eq!(h[0].2 + h[1].2, 3);
        assert_eq!(h[1].2, 2);
        assert!(gap_histogram(&[], 5).is_empty());
    }

    #[test]
    fn selection_takes_min_aic() {
        let mk = |family, aic| {
            let mut m = FittedModel::from_params(ModelParams::Kappa(
                KappaParams::new(0.0, 1.0, 0.0, 0.0).unwrap(),
            ));
            m.family = family;
            m.aic = aic;
            m
        };
        let models = [
            mk(Family::Kappa, Some(10.0)),
            mk(Family::Pe3, Some(9.0)),
            mk(Family::CompoundKappa, None),
        ];
        assert_eq!(select_by_aic(&models).unwrap().family, Family::Pe3);
        assert!(select_by_aic(&models[2..]).is_none());
    }
}
