//! Defect event logs: parsing, validation, and derivation of per-defect
//! rediscovery counts and pooled request inter-arrival gaps.
//!
//! Input is CSV with header `defect_id,release_id,kind,time`, where `kind` is
//! `discovery` or `rediscovery` and `time` is years since the release's GA
//! date. Lines starting with `#` are comments. A `time` cell may instead hold
//! an ISO-8601 calendar date when a [`TimeBase`] maps the release to its GA
//! date.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Days per year used when converting calendar dates to years since GA.
pub const DAYS_PER_YEAR: f64 = 365.25;

/// Offset added per rank to tied rediscovery times under [`TiePolicy::Jitter`].
pub const TIE_JITTER: f64 = 1e-9;

const HEADER: [&str; 4] = ["defect_id", "release_id", "kind", "time"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("bad header: expected `defect_id,release_id,kind,time`, found `{found}`")]
    BadHeader { found: String },
    #[error("wrong column count at line {line}: expected 4, found {found}")]
    ColumnCount { line: u64, found: usize },
    #[error("unparseable time `{value}` at line {line}")]
    BadTime { line: u64, value: String },
    #[error("negative time {value} at line {line}")]
    NegativeTime { line: u64, value: f64 },
    #[error("calendar date at line {line} but no GA date known for release `{release_id}`")]
    MissingGaDate { line: u64, release_id: String },
    #[error("unknown event kind at line {line}: `{kind}`")]
    UnknownKind { line: u64, kind: String },
    #[error("duplicate discovery of defect `{defect_id}` in release `{release_id}`")]
    DuplicateDiscovery { defect_id: String, release_id: String },
    #[error("rediscovery of defect `{defect_id}` (release `{release_id}`) at {time} precedes its discovery at {discovered}")]
    RediscoveryBeforeDiscovery {
        defect_id: String,
        release_id: String,
        time: f64,
        discovered: f64,
    },
    #[error("defect `{defect_id}` (release `{release_id}`) has rediscoveries but no discovery event")]
    MissingDiscovery { defect_id: String, release_id: String },
    #[error("unknown release `{0}`")]
    UnknownRelease(String),
    #[error("invalid window [{s}, {t}): need 0 <= s < t")]
    InvalidWindow { s: f64, t: f64 },
    #[error("tied event times at {time}")]
    TiedEventTimes { time: f64 },
}

pub type Result<T> = std::result::Result<T, IngestError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Discovery,
    Rediscovery,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Discovery => "discovery",
            EventKind::Rediscovery => "rediscovery",
        }
    }
}

/// One discovery or rediscovery of a defect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectEvent {
    pub defect_id: String,
    pub release_id: String,
    pub kind: EventKind,
    /// Years since the release's GA date.
    pub time: f64,
}

/// Validated events sorted by `(release_id, defect_id, time)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    events: Vec<DefectEvent>,
    releases: BTreeSet<String>,
}

/// Half-open time window `[s, t)` in years since GA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub s: f64,
    pub t: f64,
}

impl Window {
    pub fn new(s: f64, t: f64) -> Result<Self> {
        if !(s.is_finite() && t.is_finite() && 0.0 <= s && s < t) {
            return Err(IngestError::InvalidWindow { s, t });
        }
        Ok(Self { s, t })
    }

    pub fn contains(&self, time: f64) -> bool {
        self.s <= time && time < self.t
    }

    pub fn length(&self) -> f64 {
        self.t - self.s
    }

    fn validate(&self) -> Result<()> {
        Window::new(self.s, self.t).map(|_| ())
    }
}

/// Per-defect rediscovery counts `D_i(s, t)` for one release and window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RediscoverySample {
    pub release_id: String,
    pub window: Window,
    /// One entry per defect discovered before `window.t`, in defect-id order.
    pub counts: Vec<u64>,
    pub n_defects: usize,
}

impl RediscoverySample {
    /// Builds a sample directly from counts (synthetic data, tests).
    pub fn from_counts(release_id: impl Into<String>, window: Window, counts: Vec<u64>) -> Self {
        let n_defects = counts.len();
        Self {
            release_id: release_id.into(),
            window,
            counts,
            n_defects,
        }
    }

    pub fn values_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }
}

/// Gaps between consecutive rediscovery requests, pooled across defects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterarrivalSample {
    pub release_id: String,
    pub window: Window,
    /// Years between consecutive rediscovery events, in event-time order.
    pub gaps: Vec<f64>,
    /// Rediscovery events in the window divided by the window length.
    pub arrival_rate_lambda: f64,
    pub n_events: usize,
    /// Set when fewer than two events fall in the window.
    pub insufficient_events: bool,
}

impl InterarrivalSample {
    /// Builds a sample from gaps alone; the rate is the reciprocal mean gap.
    pub fn from_gaps(release_id: impl Into<String>, gaps: Vec<f64>) -> Self {
        let total: f64 = gaps.iter().sum();
        let n = gaps.len();
        let window = Window {
            s: 0.0,
            t: if total > 0.0 { total } else { 1.0 },
        };
        Self {
            release_id: release_id.into(),
            window,
            arrival_rate_lambda: if total > 0.0 { n as f64 / total } else { 0.0 },
            n_events: n + 1,
            insufficient_events: n == 0,
            gaps,
        }
    }

    pub fn mean_gap(&self) -> Option<f64> {
        if self.gaps.is_empty() {
            None
        } else {
            Some(self.gaps.iter().sum::<f64>() / self.gaps.len() as f64)
        }
    }
}

/// Handling of rediscovery events that share a timestamp.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Shift the r-th tied event by `r * 1e-9` years.
    #[default]
    Jitter,
    Reject,
}

/// GA dates per release, for logs that record calendar dates.
#[derive(Debug, Clone, Default)]
pub struct TimeBase {
    ga_dates: BTreeMap<String, NaiveDate>,
}

impl TimeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_ga_date(mut self, release_id: impl Into<String>, ga: NaiveDate) -> Self {
        self.ga_dates.insert(release_id.into(), ga);
        self
    }

    /// Reads a sidecar CSV with header `release_id,ga_date` (dates as
    /// `YYYY-MM-DD`).
    pub fn from_sidecar<R: Read>(source: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(source);
        let mut base = TimeBase::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_error)?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != 2 {
                return Err(IngestError::ColumnCount {
                    line,
                    found: rec.len(),
                });
            }
            let date = NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d").map_err(|_| {
                IngestError::BadTime {
                    line,
                    value: rec[1].to_string(),
                }
            })?;
            base.ga_dates.insert(rec[0].to_string(), date);
        }
        Ok(base)
    }

    fn years_since_ga(&self, release_id: &str, date: NaiveDate, line: u64) -> Result<f64> {
        let ga = self
            .ga_dates
            .get(release_id)
            .ok_or_else(|| IngestError::MissingGaDate {
                line,
                release_id: release_id.to_string(),
            })?;
        Ok((date - *ga).num_days() as f64 / DAYS_PER_YEAR)
    }
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    IngestError::Csv {
        line,
        message: e.to_string(),
    }
}

/// Parses and validates a CSV event log with decimal-year times.
pub fn parse_events<R: Read>(source: R) -> Result<EventLog> {
    parse_events_with(source, &TimeBase::default())
}

/// Parses and validates a CSV event log, converting calendar dates through
/// `time_base`.
pub fn parse_events_with<R: Read>(source: R, time_base: &TimeBase) -> Result<EventLog> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);

    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(csv_error)?,
        None => {
            return Err(IngestError::BadHeader {
                found: String::new(),
            })
        }
    };
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(IngestError::BadHeader {
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut events = Vec::new();
    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 4 {
            return Err(IngestError::ColumnCount {
                line,
                found: rec.len(),
            });
        }
        let kind = match &rec[2] {
            "discovery" => EventKind::Discovery,
            "rediscovery" => EventKind::Rediscovery,
            other => {
                return Err(IngestError::UnknownKind {
                    line,
                    kind: other.to_string(),
                })
            }
        };
        let time = parse_time(&rec[3], &rec[1], line, time_base)?;
        events.push(DefectEvent {
            defect_id: rec[0].to_string(),
            release_id: rec[1].to_string(),
            kind,
            time,
        });
    }
    EventLog::from_events(events)
}

fn parse_time(cell: &str, release_id: &str, line: u64, time_base: &TimeBase) -> Result<f64> {
    let time = match cell.parse::<f64>() {
        Ok(t) => t,
        Err(_) => match NaiveDate::parse_from_str(cell, "%Y-%m-%d") {
            Ok(date) => time_base.years_since_ga(release_id, date, line)?,
            Err(_) => {
                return Err(IngestError::BadTime {
                    line,
                    value: cell.to_string(),
                })
            }
        },
    };
    if !time.is_finite() {
        return Err(IngestError::BadTime {
            line,
            value: cell.to_string(),
        });
    }
    if time < 0.0 {
        return Err(IngestError::NegativeTime { line, value: time });
    }
    Ok(time)
}

impl EventLog {
    /// Sorts and validates a set of events.
    pub fn from_events(mut events: Vec<DefectEvent>) -> Result<Self> {
        events.sort_by(|a, b| {
            (&a.release_id, &a.defect_id)
                .cmp(&(&b.release_id, &b.defect_id))
                .then(a.time.total_cmp(&b.time))
                .then(a.kind.cmp(&b.kind))
        });

        for group in events.chunk_by(|a, b| {
            a.release_id == b.release_id && a.defect_id == b.defect_id
        }) {
            let first = &group[0];
            let discoveries: Vec<&DefectEvent> = group
                .iter()
                .filter(|e| e.kind == EventKind::Discovery)
                .collect();
            match discoveries.as_slice() {
                [] => {
                    return Err(IngestError::MissingDiscovery {
                        defect_id: first.defect_id.clone(),
                        release_id: first.release_id.clone(),
                    })
                }
                [d] => {
                    // sorted by time with discovery first on ties, so any
                    // rediscovery ahead of the discovery is too early
                    if let Some(early) = group
                        .iter()
                        .take_while(|e| e.kind == EventKind::Rediscovery)
                        .next()
                    {
                        return Err(IngestError::RediscoveryBeforeDiscovery {
                            defect_id: early.defect_id.clone(),
                            release_id: early.release_id.clone(),
                            time: early.time,
                            discovered: d.time,
                        });
                    }
                }
                _ => {
                    return Err(IngestError::DuplicateDiscovery {
                        defect_id: first.defect_id.clone(),
                        release_id: first.release_id.clone(),
                    })
                }
            }
        }

        let releases = events.iter().map(|e| e.release_id.clone()).collect();
        Ok(Self { events, releases })
    }

    pub fn events(&self) -> &[DefectEvent] {
        &self.events
    }

    pub fn releases(&self) -> &BTreeSet<String> {
        &self.releases
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn release_events(&self, release_id: &str) -> Result<&[DefectEvent]> {
        if !self.releases.contains(release_id) {
            return Err(IngestError::UnknownRelease(release_id.to_string()));
        }
        let start = self
            .events
            .partition_point(|e| e.release_id.as_str() < release_id);
        let end = self
            .events
            .partition_point(|e| e.release_id.as_str() <= release_id);
        Ok(&self.events[start..end])
    }

    /// Number of distinct defects across all releases.
    pub fn n_defects(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Discovery)
            .count()
    }

    /// Writes the log back out in the input CSV format.
    pub fn write_csv<W: Write>(&self, sink: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(HEADER)?;
        for e in &self.events {
            w.write_record([
                e.defect_id.as_str(),
                e.release_id.as_str(),
                e.kind.as_str(),
                &e.time.to_string(),
            ])?;
        }
        w.flush()
    }
}

/// Counts each defect's rediscoveries in `w`, over all defects of `release`
/// discovered before `w.t`.
pub fn window_counts(log: &EventLog, release: &str, w: Window) -> Result<RediscoverySample> {
    w.validate()?;
    let events = log.release_events(release)?;
    let mut counts = Vec::new();
    for group in events.chunk_by(|a, b| a.defect_id == b.defect_id) {
        let discovered = group
            .iter()
            .find(|e| e.kind == EventKind::Discovery)
            .map(|e| e.time)
            .expect("validated log has one discovery per defect");
        if discovered >= w.t {
            continue;
        }
        let d = group
            .iter()
            .filter(|e| e.kind == EventKind::Rediscovery && w.contains(e.time))
            .count() as u64;
        counts.push(d);
    }
    Ok(RediscoverySample::from_counts(release, w, counts))
}

/// Empirical `U(s, t)`: the sum of all per-defect counts.
pub fn total_rediscoveries(sample: &RediscoverySample) -> u64 {
    sample.counts.iter().sum()
}

/// Pools the release's rediscovery events in `w`, sorts them by time, and
/// returns the consecutive gaps.
pub fn interarrival_times(
    log: &EventLog,
    release: &str,
    w: Window,
    ties: TiePolicy,
) -> Result<InterarrivalSample> {
    w.validate()?;
    let events = log.release_events(release)?;
    let mut times: Vec<f64> = events
        .iter()
        .filter(|e| e.kind == EventKind::Rediscovery && w.contains(e.time))
        .map(|e| e.time)
        .collect();
    times.sort_by(f64::total_cmp);
    let n_events = times.len();

    let mut adjusted = Vec::with_capacity(n_events);
    let mut rank = 0u32;
    for (i, &t) in times.iter().enumerate() {
        if i > 0 && t == times[i - 1] {
            if ties == TiePolicy::Reject {
                return Err(IngestError::TiedEventTimes { time: t });
            }
            rank += 1;
        } else {
            rank = 0;
        }
        adjusted.push(t + TIE_JITTER * f64::from(rank));
    }

    let gaps: Vec<f64> = adjusted.windows(2).map(|p| p[1] - p[0]).collect();
    Ok(InterarrivalSample {
        release_id: release.to_string(),
        window: w,
        gaps,
        arrival_rate_lambda: n_events as f64 / w.length(),
        n_events,
        insufficient_events: n_events < 2,
    })
}
