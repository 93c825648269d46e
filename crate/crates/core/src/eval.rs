//! Benchmark runner: estimators over trials, error statistics and reports.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{extract_windows, TrialFile, WindowSpec};
use crate::error::{Error, Result};
use crate::filters::{self, FilterConfig, FilterKind};
use crate::imu::dead_reckon;
use crate::nn::{Model, ModelKind, WeightStore};
use crate::quat::{error_angle, Quaternion};

/// Produces attitude estimates for a trial as `(sample index, estimate)`
/// pairs. Per-sample estimators cover every index; windowed ones only the
/// window centers.
pub trait Estimator: Sync {
    fn name(&self) -> &str;
    fn estimate(&self, trial: &TrialFile, window: WindowSpec) -> Result<Vec<(usize, Quaternion)>>;
}

fn every_sample(qs: Vec<Quaternion>) -> Vec<(usize, Quaternion)> {
    qs.into_iter().enumerate().collect()
}

/// Gyro integration from the first ground-truth attitude (or from the first
/// accelerometer sample when there is none).
pub struct DeadReckonEstimator {
    name: String,
}

impl DeadReckonEstimator {
    pub fn new() -> Self {
        DeadReckonEstimator {
            name: "Dead Reckoning".into(),
        }
    }
}

impl Default for DeadReckonEstimator {
    fn default() -> Self {
        Self::new()
    }
}

impl Estimator for DeadReckonEstimator {
    fn name(&self) -> &str {
        &self.name
    }

    fn estimate(&self, trial: &TrialFile, _window: WindowSpec) -> Result<Vec<(usize, Quaternion)>> {
        let first = trial.samples.first().ok_or(Error::EmptyInput("trial"))?;
        let q0 = match first.gt {
            Some(q) => q,
            None => filters::init_from_accel(first.accel, crate::STANDARD_GRAVITY).0,
        };
        Ok(every_sample(dead_reckon(&trial.samples, q0)?))
    }
}

pub struct FilterEstimator {
    name: String,
    config: FilterConfig,
}

impl FilterEstimator {
    pub fn new(name: impl Into<String>, config: FilterConfig) -> Result<Self> {
        config.validate()?;
        Ok(FilterEstimator {
            name: name.into(),
            config,
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }
}

impl Estimator for FilterEstimator {
    fn name(&self) -> &str {
        &self.name
    }

    fn estimate(&self, trial: &TrialFile, _window: WindowSpec) -> Result<Vec<(usize, Quaternion)>> {
        let mut config = self.config.clone();
        config.sample_period = 1.0 / trial.meta.rate_hz;
        Ok(every_sample(filters::run(&config, &trial.samples)?))
    }
}

pub struct ModelEstimator {
    name: String,
    kind: ModelKind,
    weights: WeightStore,
}

impl ModelEstimator {
    pub fn new(name: impl Into<String>, kind: ModelKind, weights: WeightStore) -> Self {
        ModelEstimator {
            name: name.into(),
            kind,
            weights,
        }
    }

    /// Checks the weights against the graph for window length `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        self.weights.check(&self.kind.build(n)?, false)
    }
}

impl Estimator for ModelEstimator {
    fn name(&self) -> &str {
        &self.name
    }

    fn estimate(&self, trial: &TrialFile, window: WindowSpec) -> Result<Vec<(usize, Quaternion)>> {
        let model = Model::new(self.kind.build(window.n)?, self.weights.clone())?;
        extract_windows(trial, window)?
            .par_iter()
            .map(|w| Ok((w.center, model.forward(w)?.q)))
            .collect()
    }
}

/// Returns the ground truth, optionally rotated by a fixed offset
/// (`gt ⊗ offset`).
pub struct EchoEstimator {
    name: String,
    offset: Quaternion,
}

impl EchoEstimator {
    pub fn new(name: impl Into<String>, offset: Quaternion) -> Self {
        EchoEstimator {
            name: name.into(),
            offset,
        }
    }
}

impl Estimator for EchoEstimator {
    fn name(&self) -> &str {
        &self.name
    }

    fn estimate(&self, trial: &TrialFile, _window: WindowSpec) -> Result<Vec<(usize, Quaternion)>> {
        trial
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let gt = s.gt.ok_or_else(|| Error::invalid("sample without ground truth"))?;
                Ok((i, gt * self.offset))
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    DeadReckon,
    Filter(FilterKind),
    Model(ModelKind),
}

impl EstimatorKind {
    pub fn display_name(self) -> &'static str {
        match self {
            EstimatorKind::DeadReckon => "Dead Reckoning",
            EstimatorKind::Filter(FilterKind::Cf) => "CF",
            EstimatorKind::Filter(FilterKind::Madgwick) => "Madgwick",
            EstimatorKind::Filter(FilterKind::Mahony) => "Mahony",
            EstimatorKind::Filter(FilterKind::Ekf) => "EKF",
            EstimatorKind::Model(ModelKind::A) => "Model A",
            EstimatorKind::Model(ModelKind::B) => "Model B",
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "dead-reckon" | "dead-reckoning" => EstimatorKind::DeadReckon,
            "model-a" => EstimatorKind::Model(ModelKind::A),
            "model-b" => EstimatorKind::Model(ModelKind::B),
            other => EstimatorKind::Filter(other.parse().map_err(|_| Error::Unknown {
                what: "estimator",
                name: other.into(),
            })?),
        })
    }
}

/// `kind[:key=value,...]`, e.g. `cf:alpha=0.05` or `model-a:weights=w.json`.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorRef {
    pub kind: EstimatorKind,
    pub options: BTreeMap<String, String>,
}

impl FromStr for EstimatorRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let kind = kind.trim().to_ascii_lowercase().parse()?;
        let mut options = BTreeMap::new();
        for pair in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("estimator option `{pair}` is not key=value")))?;
            options.insert(k.trim().to_owned(), v.trim().to_owned());
        }
        Ok(EstimatorRef { kind, options })
    }
}

impl EstimatorRef {
    pub fn new(kind: EstimatorKind) -> Self {
        EstimatorRef {
            kind,
            options: BTreeMap::new(),
        }
    }

    /// Column label: the display name, plus any options other than
    /// `weights`.
    pub fn label(&self) -> String {
        let extra: Vec<String> = self
            .options
            .iter()
            .filter(|(k, _)| k.as_str() != "weights")
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        if extra.is_empty() {
            self.kind.display_name().to_owned()
        } else {
            format!("{} ({})", self.kind.display_name(), extra.join(","))
        }
    }

    /// Builds the estimator, applying `gains` to filters before the
    /// reference's own options. Weight files are loaded and checked against
    /// the graph for `window`.
    pub fn build(&self, gains: &[(String, f64)], window: WindowSpec) -> Result<Box<dyn Estimator>> {
        let label = self.label();
        match self.kind {
            EstimatorKind::DeadReckon => {
                if let Some(k) = self.options.keys().next() {
                    return Err(Error::invalid(format!("dead-reckon takes no options, got `{k}`")));
                }
                Ok(Box::new(DeadReckonEstimator { name: label }))
            }
            EstimatorKind::Filter(kind) => {
                let mut config = FilterConfig::new(kind);
                for (k, v) in gains {
                    config.set_gain(k, *v)?;
                }
                for (k, v) in &self.options {
                    let value: f64 = v
                        .parse()
                        .map_err(|_| Error::invalid(format!("gain `{k}` needs a number, got `{v}`")))?;
                    config.set_gain(k, value)?;
                }
                Ok(Box::new(FilterEstimator::new(label, config)?))
            }
            EstimatorKind::Model(kind) => {
                let path: PathBuf = self
                    .options
                    .get("weights")
                    .ok_or_else(|| Error::invalid(format!("{label} needs weights=<path>")))?
                    .into();
                if let Some(k) = self.options.keys().find(|k| k.as_str() != "weights") {
                    return Err(Error::invalid(format!("unknown model option `{k}`")));
                }
                let est = ModelEstimator::new(label, kind, WeightStore::load(&path)?);
                est.validate(window.n)?;
                Ok(Box::new(est))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorStats {
    pub rmse_deg: f64,
    pub mean_deg: f64,
    pub median_deg: f64,
    pub max_deg: f64,
    pub n_estimates: usize,
}

impl ErrorStats {
    pub fn from_errors(deg: &[f64]) -> Result<Self> {
        if deg.is_empty() {
            return Err(Error::EmptyInput("error sequence"));
        }
        let n = deg.len() as f64;
        let mut sorted = deg.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(ErrorStats {
            rmse_deg: (deg.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
            mean_deg: deg.iter().sum::<f64>() / n,
            median_deg: quantile_sorted(&sorted, 0.5),
            max_deg: sorted[sorted.len() - 1],
            n_estimates: deg.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", content = "message", rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    /// The estimator returned an error on this trial.
    Failed(String),
    /// The trial has no ground truth.
    Skipped(String),
}

impl RowStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Failed(_) => "failed",
            RowStatus::Skipped(_) => "skipped",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            RowStatus::Ok => "",
            RowStatus::Failed(m) | RowStatus::Skipped(m) => m,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRow {
    pub trial: String,
    pub estimator: String,
    #[serde(flatten)]
    pub status: RowStatus,
    pub stats: Option<ErrorStats>,
}

/// Unweighted means of the per-trial values over the estimator's ok rows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub estimator: String,
    pub rmse_deg: f64,
    pub mean_deg: f64,
    pub median_deg: f64,
    pub max_deg: f64,
    pub n_trials: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoxplotStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outlier_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimatorBoxplot {
    pub estimator: String,
    #[serde(flatten)]
    pub stats: BoxplotStats,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub estimators: Vec<String>,
    pub trials: Vec<String>,
    pub rows: Vec<TrialRow>,
    pub aggregates: Vec<AggregateRow>,
    /// Over every per-estimate error of the estimator, pooled across trials.
    pub boxplots: Vec<EstimatorBoxplot>,
}

impl EvalReport {
    /// Assembles a report from per-trial rows, computing the aggregates.
    /// Boxplots are left empty.
    pub fn from_rows(estimators: Vec<String>, trials: Vec<String>, rows: Vec<TrialRow>) -> Self {
        let aggregates = estimators
            .iter()
            .filter_map(|name| {
                let stats: Vec<&ErrorStats> = rows
                    .iter()
                    .filter(|r| &r.estimator == name)
                    .filter_map(|r| r.stats.as_ref())
                    .collect();
                if stats.is_empty() {
                    return None;
                }
                let n = stats.len() as f64;
                let mean = |f: fn(&ErrorStats) -> f64| stats.iter().map(|s| f(s)).sum::<f64>() / n;
                Some(AggregateRow {
                    estimator: name.clone(),
                    rmse_deg: mean(|s| s.rmse_deg),
                    mean_deg: mean(|s| s.mean_deg),
                    median_deg: mean(|s| s.median_deg),
                    max_deg: mean(|s| s.max_deg),
                    n_trials: stats.len(),
                })
            })
            .collect();
        EvalReport {
            estimators,
            trials,
            rows,
            aggregates,
            boxplots: Vec::new(),
        }
    }

    pub fn has_failures(&self) -> bool {
        self.rows.iter().any(|r| matches!(r.status, RowStatus::Failed(_)))
    }

    pub fn row(&self, trial: &str, estimator: &str) -> Option<&TrialRow> {
        self.rows.iter().find(|r| r.trial == trial && r.estimator == estimator)
    }

    pub fn aggregate(&self, estimator: &str) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.estimator == estimator)
    }
}

/// Per-estimate total rotation errors in degrees, scored against the ground
/// truth at each estimate's sample.
pub fn score(trial: &TrialFile, estimates: &[(usize, Quaternion)]) -> Result<Vec<f64>> {
    if estimates.is_empty() {
        return Err(Error::EmptyInput("estimates"));
    }
    estimates
        .iter()
        .map(|&(i, q)| {
            let sample = trial
                .samples
                .get(i)
                .ok_or_else(|| Error::invalid(format!("estimate index {i} outside the trial")))?;
            let gt = sample
                .gt
                .ok_or_else(|| Error::invalid(format!("sample {i} has no ground truth")))?;
            if !q.is_finite() {
                return Err(Error::invalid(format!("non-finite estimate at sample {i}")));
            }
            Ok(error_angle(gt, q)?.to_degrees())
        })
        .collect()
}

/// Runs every estimator on every trial. Trials are processed in parallel;
/// rows come out ordered by trial, then estimator.
pub fn evaluate(trials: &[TrialFile], estimators: &[&dyn Estimator], window: WindowSpec) -> Result<EvalReport> {
    window.validate()?;
    let names: Vec<String> = estimators.iter().map(|e| e.name().to_owned()).collect();
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(Error::invalid(format!("estimator `{n}` listed twice")));
        }
    }
    let per_trial: Vec<Vec<(TrialRow, Vec<f64>)>> = trials
        .par_iter()
        .map(|trial| estimators.iter().map(|est| run_one(trial, *est, window)).collect())
        .collect();
    let mut rows = Vec::new();
    let mut pooled: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (row, errors) in per_trial.into_iter().flatten() {
        if !errors.is_empty() {
            let name = names.iter().find(|n| **n == row.estimator).expect("known estimator");
            pooled.entry(name.as_str()).or_default().extend(errors);
        }
        rows.push(row);
    }
    let trial_names = trials.iter().map(|t| t.meta.name.clone()).collect();
    let mut report = EvalReport::from_rows(names.clone(), trial_names, rows);
    report.boxplots = names
        .iter()
        .filter_map(|n| {
            let errors = pooled.get(n.as_str())?;
            Some(EstimatorBoxplot {
                estimator: n.clone(),
                stats: boxplot_stats(errors).ok()?,
            })
        })
        .collect();
    Ok(report)
}

fn run_one(trial: &TrialFile, est: &dyn Estimator, window: WindowSpec) -> (TrialRow, Vec<f64>) {
    let row = |status, stats| TrialRow {
        trial: trial.meta.name.clone(),
        estimator: est.name().to_owned(),
        status,
        stats,
    };
    if !trial.has_ground_truth() {
        log::warn!("trial {} has no ground truth; skipped", trial.meta.name);
        return (row(RowStatus::Skipped("no ground truth".into()), None), Vec::new());
    }
    let scored = est
        .estimate(trial, window)
        .and_then(|e| score(trial, &e))
        .and_then(|errors| Ok((ErrorStats::from_errors(&errors)?, errors)));
    match scored {
        Ok((stats, errors)) => (row(RowStatus::Ok, Some(stats)), errors),
        Err(e) => {
            log::warn!("{} failed on {}: {e}", est.name(), trial.meta.name);
            (row(RowStatus::Failed(error_chain(&e)), None), Vec::new())
        }
    }
}

fn error_chain(e: &Error) -> String {
    let mut out = e.to_string();
    let mut cur = std::error::Error::source(e);
    while let Some(s) = cur {
        out.push_str(": ");
        out.push_str(&s.to_string());
        cur = s.source();
    }
    out
}

/// Inclusive linear-interpolation quantile of sorted data: position
/// `p·(n−1)`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Quartiles by inclusive linear interpolation; whiskers at the most
/// extreme points within 1.5·IQR of the box.
pub fn boxplot_stats(values: &[f64]) -> Result<BoxplotStats> {
    if values.is_empty() {
        return Err(Error::EmptyInput("boxplot data"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("boxplot data must be finite"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = sorted
        .iter()
        .copied()
        .filter(|v| (lo_fence..=hi_fence).contains(v))
        .collect();
    Ok(BoxplotStats {
        median,
        q1,
        q3,
        whisker_lo: inside[0].min(q1),
        whisker_hi: inside[inside.len() - 1].max(q3),
        outlier_count: sorted.len() - inside.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" | "markdown-table" => Ok(ReportFormat::Markdown),
            other => Err(Error::Unknown {
                what: "report format",
                name: other.into(),
            }),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "markdown",
        })
    }
}

pub const AVERAGE_LABEL: &str = "Average All";

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("plain data") + "\n",
        ReportFormat::Markdown => render_markdown(report),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn render_csv(report: &EvalReport) -> String {
    let mut out = String::from("trial,estimator,status,rmse_deg,mean_deg,median_deg,max_deg,n,message\n");
    for r in &report.rows {
        let stats = match &r.stats {
            Some(s) => format!(
                "{},{},{},{},{}",
                s.rmse_deg, s.mean_deg, s.median_deg, s.max_deg, s.n_estimates
            ),
            None => ",,,,".into(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{stats},{}",
            csv_field(&r.trial),
            csv_field(&r.estimator),
            r.status.label(),
            csv_field(r.status.message())
        );
    }
    for a in &report.aggregates {
        let _ = writeln!(
            out,
            "{AVERAGE_LABEL},{},average,{},{},{},{},{},",
            csv_field(&a.estimator),
            a.rmse_deg,
            a.mean_deg,
            a.median_deg,
            a.max_deg,
            a.n_trials
        );
    }
    out
}

fn render_markdown(report: &EvalReport) -> String {
    let mut out = String::from("| Trial |");
    for e in &report.estimators {
        let _ = write!(out, " {e} |");
    }
    out.push_str("\n|---|");
    for _ in &report.estimators {
        out.push_str("---:|");
    }
    out.push('\n');
    if report.estimators.is_empty() {
        return out;
    }
    for t in &report.trials {
        let _ = write!(out, "| {t} |");
        for e in &report.estimators {
            let cell = match report.row(t, e) {
                Some(TrialRow { stats: Some(s), .. }) => format!("{:.2}", s.rmse_deg),
                Some(TrialRow {
                    status: RowStatus::Failed(_),
                    ..
                }) => "failed".into(),
                _ => "n/a".into(),
            };
            let _ = write!(out, " {cell} |");
        }
        out.push('\n');
    }
    let _ = write!(out, "| {AVERAGE_LABEL} |");
    for e in &report.estimators {
        let cell = report
            .aggregate(e)
            .map_or_else(|| "n/a".to_owned(), |a| format!("{:.2}", a.rmse_deg));
        let _ = write!(out, " {cell} |");
    }
    out.push('\n');
    out
}

/// Plot-ready boxplot table.
pub fn render_boxplots(report: &EvalReport) -> String {
    let mut out = String::from("estimator,median,q1,q3,whisker_lo,whisker_hi,outlier_count\n");
    for b in &report.boxplots {
        let s = &b.stats;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            csv_field(&b.estimator),
            s.median,
            s.q1,
            s.q3,
            s.whisker_lo,
            s.whisker_hi,
            s.outlier_count
        );
    }
    out
}
