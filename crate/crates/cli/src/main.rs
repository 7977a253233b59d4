use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rediscovery::distfit::{CompoundKappaModel, Family, KappaParams, ModelParams};
use rediscovery::ingest::{EventKind, Window};
use rediscovery::lmoments::diagram::ratio_diagram_data;
use rediscovery::lmoments::sample_lmoments;
use rediscovery::pipeline::{
    evaluate_metric, fit_families, load_log, release_sample, run_pipeline, select_by_aic,
    selected_releases, synth_generate, to_json, AnalysisConfig, ArrivalMode, MetricRequest,
    PipelineError, QueueRequest, DIAGRAM_GRID_STEP,
};
use rediscovery::queueing::{staffing_sweep, sweep_csv, Arrivals, QueueScenario, SimConfig};
use rediscovery::riskmetrics::{M2Form, MetricContext, QuantileConvention};

const OUT_ENV: &str = "REDISCOVERY_OUT_DIR";

#[derive(Parser)]
#[command(name = "rediscovery", version, about = "Defect rediscovery risk analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate an event log, printing a summary.
    Validate(InputArgs),
    /// Fit model families and print the AIC table.
    Fit(FitArgs),
    /// Fit, select by AIC and evaluate risk metrics.
    Metrics(MetricsArgs),
    /// M/M/k and simulated G/M/k waiting times over a range of team sizes.
    Queue(QueueArgs),
    /// L-moment ratio diagram data as CSV.
    Diagram(DiagramArgs),
    /// Full pipeline: fit, metrics, queue, report and CSV datasets.
    Report(ReportArgs),
    /// Generate a synthetic event log from known parameters.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    /// CSV `release_id,ga_date` for logs with calendar dates.
    #[arg(long)]
    ga_dates: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SampleArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Release to analyse; repeat for several. Default: all.
    #[arg(long = "release")]
    releases: Vec<String>,
    /// Window `s:t` in years since GA.
    #[arg(long, value_parser = parse_window)]
    window: Window,
    #[arg(long, value_delimiter = ',', default_values_t = Family::ALL.to_vec())]
    families: Vec<Family>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    sample: SampleArgs,
}

#[derive(Args, Clone)]
struct MetricArgs {
    /// Customer base size C (needed for M2).
    #[arg(long)]
    customers: Option<u64>,
    /// Comma-separated requests such as `m1:10,m3:1,m5:1000,m6:0.999`.
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<MetricRequest>,
    /// Evaluate M2 as N·F(d̃) instead of N·(1 − F(d̃)).
    #[arg(long)]
    m2_literal: bool,
    /// Use ⌊F⁻¹(α)⌋ of the continuous fit for M6.
    #[arg(long)]
    continuous_quantile: bool,
}

#[derive(Args)]
struct MetricsArgs {
    #[command(flatten)]
    sample: SampleArgs,
    #[command(flatten)]
    metric: MetricArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArrivalArg {
    Empirical,
    Exponential,
}

impl From<ArrivalArg> for ArrivalMode {
    fn from(a: ArrivalArg) -> Self {
        match a {
            ArrivalArg::Empirical => ArrivalMode::Empirical,
            ArrivalArg::Exponential => ArrivalMode::Exponential,
        }
    }
}

#[derive(Args, Clone)]
struct QueueOpts {
    /// Requests handled per person per year.
    #[arg(long)]
    mu: Option<f64>,
    /// Team sizes `a:b`, inclusive.
    #[arg(long, value_parser = parse_k_range)]
    k_range: Option<(u32, u32)>,
    #[arg(long, value_enum, default_value = "empirical")]
    arrivals: ArrivalArg,
    #[arg(long, default_value_t = 30)]
    replications: u32,
    #[arg(long, default_value_t = 200_000)]
    events: u64,
    #[arg(long, default_value_t = 250.0)]
    working_days: f64,
}

#[derive(Args)]
struct QueueArgs {
    /// Event log to take request gaps from.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    release: Option<String>,
    #[arg(long, value_parser = parse_window)]
    window: Option<Window>,
    /// Poisson arrival rate per year, instead of an event log.
    #[arg(long, conflicts_with = "input")]
    lambda: Option<f64>,
    #[command(flatten)]
    queue: QueueOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DiagramArgs {
    /// Event log whose windowed samples are overlaid on the diagram.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long = "release")]
    releases: Vec<String>,
    #[arg(long, value_parser = parse_window)]
    window: Option<Window>,
    #[arg(long, default_value_t = DIAGRAM_GRID_STEP)]
    grid_step: f64,
    /// Write `diagram.csv` here instead of printing it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    sample: SampleArgs,
    #[command(flatten)]
    metric: MetricArgs,
    #[command(flatten)]
    queue: QueueOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = OUT_ENV)]
    out: PathBuf,
    /// Largest d in the M1 and M3 curves.
    #[arg(long, default_value_t = 100)]
    curve_max_d: u64,
}

#[derive(Args)]
struct SynthArgs {
    /// Kappa parameters `xi,alpha,k,h`.
    #[arg(long, conflicts_with_all = ["compound", "params_json"])]
    kappa: Option<String>,
    /// Compound Kappa `xi,alpha,k,h:xi,alpha,k,h:rho:w1` (left, right, ρ, w1).
    #[arg(long, conflicts_with = "params_json")]
    compound: Option<String>,
    /// Model parameters as JSON, in the report's `params` format.
    #[arg(long)]
    params_json: Option<PathBuf>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "synthetic")]
    release: String,
    #[arg(long, value_parser = parse_window, default_value = "0:1")]
    window: Window,
    /// Output file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_window(s: &str) -> Result<Window, String> {
    let (a, b) = s.split_once(':').ok_or("window must look like s:t")?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad window start `{a}`"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad window end `{b}`"))?;
    Window::new(a, b).map_err(|e| e.to_string())
}

fn parse_k_range(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once(':').unwrap_or((s, s));
    let a: u32 = a.trim().parse().map_err(|_| format!("bad k `{a}`"))?;
    let b: u32 = b.trim().parse().map_err(|_| format!("bad k `{b}`"))?;
    if a == 0 || a > b {
        return Err(format!("k range {a}:{b} must satisfy 1 ≤ a ≤ b"));
    }
    Ok((a, b))
}

fn parse_kappa(s: &str) -> Result<KappaParams, PipelineError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| PipelineError::Config(format!("bad Kappa parameters `{s}`")))?;
    let [xi, alpha, k, h] = v[..] else {
        return Err(PipelineError::Config(format!("Kappa needs xi,alpha,k,h; got `{s}`")));
    };
    KappaParams::new(xi, alpha, k, h).map_err(|e| PipelineError::Config(e.to_string()))
}

fn parse_compound(s: &str) -> Result<CompoundKappaModel, PipelineError> {
    let parts: Vec<&str> = s.split(':').collect();
    let [left, right, rho, w1] = parts[..] else {
        return Err(PipelineError::Config(format!(
            "compound needs left:right:rho:w1; got `{s}`"
        )));
    };
    let rho: u64 = rho
        .trim()
        .parse()
        .map_err(|_| PipelineError::Config(format!("bad rho `{rho}`")))?;
    let w1: f64 = w1
        .trim()
        .parse()
        .map_err(|_| PipelineError::Config(format!("bad w1 `{w1}`")))?;
    CompoundKappaModel::new(parse_kappa(left)?, parse_kappa(right)?, rho, w1)
        .map_err(|e| PipelineError::Config(e.to_string()))
}

fn print_json(v: &serde_json::Value) -> Result<(), PipelineError> {
    print!("{}", to_json(v)?);
    Ok(())
}

fn metric_form(m: &MetricArgs) -> (M2Form, QuantileConvention) {
    (
        if m.m2_literal { M2Form::Literal } else { M2Form::Complementary },
        if m.continuous_quantile {
            QuantileConvention::ContinuousFloor
        } else {
            QuantileConvention::Discrete
        },
    )
}

fn validate(args: &InputArgs) -> Result<(), PipelineError> {
    let log = load_log(&args.input, args.ga_dates.as_deref())?;
    let releases: Vec<serde_json::Value> = log
        .releases()
        .iter()
        .map(|r| {
            let events = log.release_events(r).unwrap_or_default();
            let count = |k| events.iter().filter(|e| e.kind == k).count();
            serde_json::json!({
                "release_id": r,
                "defects": count(EventKind::Discovery),
                "rediscoveries": count(EventKind::Rediscovery),
            })
        })
        .collect();
    print_json(&serde_json::json!({
        "valid": true,
        "events": log.events().len(),
        "defects": log.n_defects(),
        "releases": releases,
    }))
}

fn fit(args: &SampleArgs) -> Result<(), PipelineError> {
    let log = load_log(&args.input.input, args.input.ga_dates.as_deref())?;
    let mut out = Vec::new();
    for release in selected_releases(&log, &args.releases, args.window)? {
        let sample = release_sample(&log, &release, args.window)?;
        let (rows, models) = fit_families(&sample, &args.families);
        out.push(serde_json::json!({
            "release_id": release,
            "n_defects": sample.counts.len(),
            "fits": rows,
            "selected": select_by_aic(&models).map(|m| m.family),
        }));
    }
    print_json(&serde_json::Value::Array(out))
}

fn metrics(args: &MetricsArgs) -> Result<(), PipelineError> {
    let (m2_form, convention) = metric_form(&args.metric);
    let log = load_log(&args.sample.input.input, args.sample.input.ga_dates.as_deref())?;
    let mut out = Vec::new();
    for release in selected_releases(&log, &args.sample.releases, args.sample.window)? {
        let sample = release_sample(&log, &release, args.sample.window)?;
        let (_, models) = fit_families(&sample, &args.sample.families);
        let model = select_by_aic(&models).cloned().ok_or_else(|| PipelineError::NoModel {
            release: release.clone(),
            details: "no family produced a finite AIC".into(),
        })?;
        let ctx = MetricContext::new(model, sample.counts.len() as u64, args.metric.customers)?;
        let values = args
            .metric
            .metrics
            .iter()
            .map(|r| {
                if let MetricRequest::M2 { .. } = r {
                    if args.metric.customers.is_none() {
                        return Err(PipelineError::Config("M2 needs --customers".into()));
                    }
                }
                evaluate_metric(&ctx, r, m2_form, convention)
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(serde_json::json!({
            "release_id": release,
            "selected": ctx.model().family,
            "tail_cap": ctx.tail_cap(),
            "tail_mass": ctx.tail_mass(),
            "metrics": values,
        }));
    }
    print_json(&serde_json::Value::Array(out))
}

fn queue_request(q: &QueueOpts) -> Result<Option<QueueRequest>, PipelineError> {
    match (q.mu, q.k_range) {
        (None, None) => Ok(None),
        (Some(mu), Some((a, b))) => Ok(Some(QueueRequest {
            arrivals: q.arrivals.into(),
            replications: q.replications,
            events_per_replication: q.events,
            working_days_per_year: q.working_days,
            ..QueueRequest::new(mu, a, b)
        })),
        _ => Err(PipelineError::Config("--mu and --k-range go together".into())),
    }
}

fn queue(args: &QueueArgs) -> Result<(), PipelineError> {
    let req = queue_request(&args.queue)?
        .ok_or_else(|| PipelineError::Config("queue needs --mu and --k-range".into()))?;
    let arrivals = match (&args.input, args.lambda) {
        (None, Some(rate)) => Arrivals::Exponential { rate },
        (Some(input), None) => {
            let (Some(release), Some(window)) = (&args.release, args.window) else {
                return Err(PipelineError::Config(
                    "--input needs --release and --window".into(),
                ));
            };
            let log = load_log(input, None)?;
            let gaps = rediscovery::ingest::interarrival_times(&log, release, window, Default::default())?;
            if gaps.insufficient_events {
                return Err(PipelineError::NoDefects {
                    release: Some(release.clone()),
                    s: window.s,
                    t: window.t,
                });
            }
            match req.arrivals {
                ArrivalMode::Empirical => Arrivals::from_sample(&gaps),
                ArrivalMode::Exponential => Arrivals::Exponential {
                    rate: gaps.arrival_rate_lambda,
                },
            }
        }
        _ => {
            return Err(PipelineError::Config(
                "give either --lambda or --input".into(),
            ))
        }
    };
    let scenario = QueueScenario {
        working_days_per_year: req.working_days_per_year,
        ..QueueScenario::new(arrivals, req.mu, req.k_min)
    };
    let cfg = SimConfig::new(req.replications, req.events_per_replication, args.seed);
    let ks: Vec<u32> = (req.k_min..=req.k_max).collect();
    print!("{}", sweep_csv(&staffing_sweep(&scenario, &ks, &cfg)));
    Ok(())
}

fn diagram(args: &DiagramArgs) -> Result<(), PipelineError> {
    let mut samples = Vec::new();
    if let Some(input) = &args.input {
        let window = args
            .window
            .ok_or_else(|| PipelineError::Config("--input needs --window".into()))?;
        let log = load_log(input, None)?;
        for release in selected_releases(&log, &args.releases, window)? {
            let sample = release_sample(&log, &release, window)?;
            let lm = sample_lmoments(&sample.values_f64())
                .map_err(|e| PipelineError::Fit(e.into()))?;
            samples.push((release, lm));
        }
    }
    let data = ratio_diagram_data(&samples, args.grid_step).map_err(PipelineError::Config)?;
    match &args.out {
        Some(dir) => write_file(&dir.join("diagram.csv"), &data.to_csv()),
        None => {
            print!("{}", data.to_csv());
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

fn report(args: &ReportArgs) -> Result<(), PipelineError> {
    let (m2_form, quantile_convention) = metric_form(&args.metric);
    let config = AnalysisConfig {
        ga_dates_path: args.sample.input.ga_dates.clone(),
        releases: args.sample.releases.clone(),
        customers: args.metric.customers,
        families: args.sample.families.clone(),
        metrics: args.metric.metrics.clone(),
        queue: queue_request(&args.queue)?,
        rng_seed: args.seed,
        m2_form,
        quantile_convention,
        curve_max_d: args.curve_max_d,
        ..AnalysisConfig::new(&args.sample.input.input, args.sample.window, &args.out)
    };
    match run_pipeline(&config) {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", config.out_dir.join("report.json").display());
            Ok(())
        }
        Err(failure) => {
            if let Some(dir) = &failure.partial_dir {
                eprintln!("partial outputs in {}", dir.display());
            }
            Err(failure.error)
        }
    }
}

fn synth(args: &SynthArgs) -> Result<(), PipelineError> {
    let params = match (&args.kappa, &args.compound, &args.params_json) {
        (Some(k), None, None) => ModelParams::Kappa(parse_kappa(k)?),
        (None, Some(c), None) => ModelParams::CompoundKappa(parse_compound(c)?),
        (None, None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("params JSON: {e}")))?
        }
        _ => {
            return Err(PipelineError::Config(
                "give one of --kappa, --compound or --params-json".into(),
            ))
        }
    };
    let csv = synth_generate(&params, args.n, args.seed, &args.release, args.window)?;
    match &args.output {
        Some(path) => write_file(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(a) => validate(a),
        Command::Fit(a) => fit(&a.sample),
        Command::Metrics(a) => metrics(a),
        Command::Queue(a) => queue(a),
        Command::Diagram(a) => diagram(a),
        Command::Report(a) => report(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
