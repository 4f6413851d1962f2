//! The five pipeline stages. Every stage writes into its own subdirectory of
//! the output directory together with a `manifest.json` echoing the resolved
//! configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use regime_core::exec::Executor;
use regime_core::grid::{normalize, spatial_subset, split_by_years, DailyFieldSeries};
use regime_core::msn::{train, TrainOutcome};
use regime_core::regimes::{discretize, monthly_frequency, quantile_anomalies, seasonal_meta_clusters, RegimeSequence};
use regime_core::synth::{synthesize, SyntheticData};
use regime_core::teleconnection::{
    classify_enso, compare_periods, frequency_timeseries, group_by_lag_profile, lag_profiles, lagged_anomalies,
    month_conditioned_anomalies, monthly_regime_counts, AnomalyTable, GroupLabel, OniSeries, Period,
};
use regime_core::Error as CoreError;

use crate::config::{DataSource, PipelineConfig};
use crate::error::{Result, ToolError};
use crate::formats::packed::{self, Checkpoint};
use crate::formats::tables::{self, AnomalyRecord};
use crate::formats::{load_series, SeriesFormat};
use crate::oracle;

/// Largest tolerated `|Σ_k ΔP_k|` on any emitted slice.
pub const ZERO_SUM_TOL: f64 = 1e-12;

pub const ANALYSIS_FILES: [&str; 9] = [
    "monthly_frequency.csv",
    "meta_clusters.csv",
    "quantile_anomalies.csv",
    "enso_states.csv",
    "delta_p.csv",
    "lagged_anomalies.csv",
    "month_conditioned.csv",
    "frequency_timeseries.csv",
    "groups.csv",
];

fn stage_dir(cfg: &PipelineConfig, stage: &str) -> Result<PathBuf> {
    let dir = cfg.output_dir.join(stage);
    fs::create_dir_all(&dir).map_err(|e| ToolError::io(&dir, e))?;
    Ok(dir)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| ToolError::io(path, e))
}

fn write_manifest(dir: &Path, command: &str, cfg: &PipelineConfig, extra: serde_json::Value) -> Result<()> {
    write_json(
        &dir.join("manifest.json"),
        &json!({ "command": command, "config": cfg, "outputs": extra }),
    )
}

pub fn default_checkpoint(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("train").join("checkpoint.bin")
}

pub fn default_regimes(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("discretize").join("regimes.csv")
}

pub fn default_analysis(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("analyze")
}

/// Raw (unnormalized) series after the bounding-box subset, plus the ONI
/// series when the data source provides one.
pub struct Dataset {
    pub series: DailyFieldSeries,
    pub oni: Option<OniSeries>,
    pub labels: Option<Vec<usize>>,
}

pub fn load_dataset(cfg: &PipelineConfig) -> Result<Dataset> {
    let (series, oni, labels) = match &cfg.data {
        DataSource::Synthetic(spec) => {
            let SyntheticData { series, labels, oni } = synthesize(spec)?;
            (series, Some(oni), Some(labels))
        }
        DataSource::File { path, format } => (load_series(path, *format)?, None, None),
    };
    let series = match cfg.bbox {
        Some(b) => spatial_subset(&series, b)?,
        None => series,
    };
    Ok(Dataset { series, oni, labels })
}

fn load_oni(cfg: &PipelineConfig, dataset_oni: Option<OniSeries>) -> Result<OniSeries> {
    match (&cfg.oni_path, dataset_oni) {
        (Some(p), _) => tables::read_oni(p),
        (None, Some(o)) => Ok(o),
        (None, None) => Err(ToolError::config("no ONI source: set oni_path")),
    }
}

pub struct SynthOutput {
    pub dir: PathBuf,
    pub data: SyntheticData,
}

pub fn cmd_synth(cfg: &PipelineConfig) -> Result<SynthOutput> {
    let DataSource::Synthetic(spec) = &cfg.data else {
        return Err(ToolError::config("synth needs a synthetic data source"));
    };
    let data = synthesize(spec)?;
    let dir = stage_dir(cfg, "synth")?;
    packed::write_series(&dir.join("series.bin"), &data.series)?;
    let entries: Vec<_> = data.series.dates().zip(data.labels.iter().copied()).collect();
    tables::write_labels(&dir.join("true_labels.csv"), "regime", &entries)?;
    tables::write_oni(&dir.join("oni.csv"), &data.oni)?;
    write_manifest(
        &dir,
        "synth",
        cfg,
        json!({
            "spec": spec,
            "series": { "path": "series.bin", "format": SeriesFormat::PackedBinary, "days": data.series.len() },
            "true_labels": "true_labels.csv",
            "oni": "oni.csv",
        }),
    )?;
    Ok(SynthOutput { dir, data })
}

pub struct TrainOutput {
    pub dir: PathBuf,
    pub outcome: TrainOutcome,
    pub checkpoint: Checkpoint,
}

pub fn cmd_train<E: Executor>(cfg: &PipelineConfig, exec: &E) -> Result<TrainOutput> {
    let ds = load_dataset(cfg)?;
    let (train_split, test_split) = split_by_years(&ds.series, &cfg.test_years);
    if train_split.is_empty() {
        return Err(ToolError::data("training split is empty"));
    }
    let stats = train_split.compute_stats();
    let normalized = normalize(&train_split, &stats)?;
    // Zero epochs returns the initial state.
    let outcome = train(&normalized, &cfg.views, &cfg.encoder, &cfg.train, exec)?;
    let checkpoint = Checkpoint {
        anchor: outcome.anchor.clone(),
        target: outcome.target.clone(),
        bank: outcome.bank.clone(),
        channel_stats: stats,
        channels: ds.series.channels.clone(),
        bbox: cfg.bbox,
        out_size: cfg.views.out_size,
        patch_size: cfg.views.patch_size,
    };
    let dir = stage_dir(cfg, "train")?;
    packed::write_checkpoint(&dir.join("checkpoint.bin"), &checkpoint)?;
    tables::write_train_report(&dir.join("train_report.csv"), &outcome.report)?;
    let last = outcome.report.epochs.last();
    write_manifest(
        &dir,
        "train",
        cfg,
        json!({
            "checkpoint": "checkpoint.bin",
            "report": "train_report.csv",
            "train_days": train_split.len(),
            "test_days": test_split.len(),
            "final_usage_entropy": last.map(|e| e.usage_entropy),
            "degenerate_encodings": outcome.report.epochs.iter().map(|e| e.degenerate).sum::<usize>(),
        }),
    )?;
    Ok(TrainOutput {
        dir,
        outcome,
        checkpoint,
    })
}

pub struct DiscretizeOutput {
    pub dir: PathBuf,
    pub sequence: RegimeSequence,
    pub degenerate: usize,
}

/// Labels every day (train and test years) with the checkpoint's target encoder.
pub fn cmd_discretize<E: Executor>(cfg: &PipelineConfig, checkpoint: Option<&Path>, exec: &E) -> Result<DiscretizeOutput> {
    let ckpt_path = checkpoint.map_or_else(|| default_checkpoint(cfg), Path::to_path_buf);
    let ckpt = packed::read_checkpoint(&ckpt_path)?;
    let ds = load_dataset(cfg)?;
    if ds.series.channels != ckpt.channels {
        return Err(ToolError::data(format!(
            "checkpoint channels {:?} differ from data channels {:?}",
            ckpt.channels, ds.series.channels
        )));
    }
    let normalized = normalize(&ds.series, &ckpt.channel_stats)?;
    let d = discretize(&ckpt.target, &ckpt.bank, &normalized, ckpt.out_size, ckpt.patch_size, exec)?;
    let dir = stage_dir(cfg, "discretize")?;
    tables::write_regimes(&dir.join("regimes.csv"), &d.sequence)?;
    write_manifest(
        &dir,
        "discretize",
        cfg,
        json!({
            "regimes": "regimes.csv",
            "days": d.sequence.len(),
            "usage": d.sequence.usage(),
            "degenerate_encodings": d.degenerate,
        }),
    )?;
    Ok(DiscretizeOutput {
        dir,
        sequence: d.sequence,
        degenerate: d.degenerate,
    })
}

pub struct AnalyzeOutput {
    pub dir: PathBuf,
    pub periods: Vec<Period>,
    pub delta_p: AnomalyTable,
    pub lagged: Vec<AnomalyTable>,
    pub month_conditioned: Vec<AnomalyTable>,
    pub groups: Vec<GroupLabel>,
}

fn default_periods(cfg: &PipelineConfig, seq: &RegimeSequence) -> Result<Vec<Period>> {
    if !cfg.periods.is_empty() {
        return Ok(cfg.periods.clone());
    }
    use chrono::Datelike;
    let first = seq.entries.first().ok_or(CoreError::Empty("regime sequence"))?.0.year();
    let last = seq.entries.last().expect("nonempty").0.year();
    Ok(vec![Period::new("all", first, last)])
}

/// Groups with the requested count, reduced to the number of distinct
/// profiles when there are fewer.
fn groups_for(profiles: &[Option<Vec<f64>>], n_groups: usize) -> Result<Vec<GroupLabel>> {
    match group_by_lag_profile(profiles, n_groups) {
        Err(CoreError::TooManyGroups { available, .. }) if available > 0 => {
            Ok(group_by_lag_profile(profiles, available)?)
        }
        Err(CoreError::TooManyGroups { .. }) => Ok(profiles
            .iter()
            .map(|p| if p.is_some() { GroupLabel::Flat } else { GroupLabel::Incomplete })
            .collect()),
        other => Ok(other?),
    }
}

pub fn cmd_analyze(cfg: &PipelineConfig, regimes: Option<&Path>, oracle_check: bool) -> Result<AnalyzeOutput> {
    let regimes_path = regimes.map_or_else(|| default_regimes(cfg), Path::to_path_buf);
    let seq = tables::read_regimes(&regimes_path, cfg.train.n_prototypes)?;
    if seq.is_empty() {
        return Err(ToolError::data(format!("{}: no regime labels", regimes_path.display())));
    }
    let ds = load_dataset(cfg)?;
    let oni = load_oni(cfg, ds.oni)?;
    let states = classify_enso(&oni, cfg.enso.threshold, cfg.enso.persistence);
    let periods = default_periods(cfg, &seq)?;

    let freq = monthly_frequency(&seq)?;
    let seasons = seasonal_meta_clusters(&freq);
    let quantiles = (0..ds.series.n_channels())
        .map(|c| quantile_anomalies(&seq, &ds.series, &cfg.quantile_grid, c))
        .collect::<regime_core::Result<Vec<_>>>()?;

    let counts = monthly_regime_counts(&seq)?;
    let delta_p = compare_periods(&counts, &states, &periods, cfg.n_min)?;
    let lagged = periods
        .iter()
        .map(|p| lagged_anomalies(&counts, &states, cfg.lags, p, cfg.n_min))
        .collect::<regime_core::Result<Vec<_>>>()?;
    let mut month_conditioned = Vec::new();
    for p in &periods {
        for m in 1..=12 {
            month_conditioned.push(month_conditioned_anomalies(&counts, &states, m, cfg.lags, p, cfg.n_min)?);
        }
    }
    let freq_series = (0..seq.k)
        .map(|k| frequency_timeseries(&counts, k, cfg.window))
        .collect::<regime_core::Result<Vec<_>>>()?;
    let groups = groups_for(&lag_profiles(&lagged[0]), cfg.n_groups)?;

    let all_tables = || std::iter::once(&delta_p).chain(&lagged).chain(&month_conditioned);
    let violation = all_tables().map(AnomalyTable::max_zero_sum_violation).fold(0.0, f64::max);
    if violation > ZERO_SUM_TOL {
        return Err(ToolError::Numerical(format!(
            "probability anomalies violate the zero-sum check by {violation:e}"
        )));
    }
    if oracle_check {
        for t in all_tables() {
            oracle::verify_table(&seq, &states, &periods, t, cfg.n_min)
                .map_err(|m| ToolError::Numerical(format!("oracle mismatch: {m}")))?;
        }
    }

    let dir = stage_dir(cfg, "analyze")?;
    let [f_freq, f_meta, f_quant, f_enso, f_delta, f_lag, f_month, f_ts, f_groups] = ANALYSIS_FILES;
    tables::write_monthly_frequency(&dir.join(f_freq), &freq)?;
    tables::write_meta_clusters(&dir.join(f_meta), &freq, &seasons)?;
    tables::write_quantile_anomalies(&dir.join(f_quant), &quantiles, &ds.series.channels)?;
    tables::write_enso_states(&dir.join(f_enso), &oni, &states)?;
    tables::write_anomalies(&dir.join(f_delta), [&delta_p])?;
    tables::write_anomalies(&dir.join(f_lag), &lagged)?;
    tables::write_anomalies(&dir.join(f_month), &month_conditioned)?;
    tables::write_frequency_series(&dir.join(f_ts), &freq_series)?;
    tables::write_groups(&dir.join(f_groups), &groups)?;
    write_manifest(
        &dir,
        "analyze",
        cfg,
        json!({
            "files": ANALYSIS_FILES,
            "periods": periods,
            "days": seq.len(),
            "max_zero_sum_violation": violation,
            "oracle_verified": oracle_check,
            "grouping_period": periods[0].label,
        }),
    )?;
    Ok(AnalyzeOutput {
        dir,
        periods,
        delta_p,
        lagged,
        month_conditioned,
        groups,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub delta_p: f64,
    pub peak_lag: Option<i64>,
    pub peak_lag_delta_p: Option<f64>,
    /// Calendar month with the largest `|ΔP|` at the peak lag.
    pub peak_month: Option<u32>,
    pub peak_month_delta_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodSummary {
    pub period: String,
    pub n_enso: u64,
    pub n_neutral: u64,
    pub top: Vec<ClusterSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub top_n: usize,
    pub periods: Vec<PeriodSummary>,
}

/// Largest `|delta|` among `(key, delta)` pairs; the first one wins ties.
fn peak<K: Copy>(items: impl Iterator<Item = (K, f64)>) -> Option<(K, f64)> {
    items.fold(None, |best: Option<(K, f64)>, (k, d)| match best {
        Some((_, b)) if d.abs() <= b.abs() => best,
        _ => Some((k, d)),
    })
}

fn read_analysis(dir: &Path, name: &str) -> Result<Vec<AnomalyRecord>> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(ToolError::data(format!(
            "{}: analysis output {name} not found",
            dir.display()
        )));
    }
    tables::read_anomalies(&path)
}

pub struct ReportOutput {
    pub dir: PathBuf,
    pub summary: ReportSummary,
}

pub fn cmd_report(cfg: &PipelineConfig, analysis: Option<&Path>) -> Result<ReportOutput> {
    let adir = analysis.map_or_else(|| default_analysis(cfg), Path::to_path_buf);
    let delta = read_analysis(&adir, "delta_p.csv")?;
    let lagged = read_analysis(&adir, "lagged_anomalies.csv")?;
    let monthly = read_analysis(&adir, "month_conditioned.csv")?;
    if delta.is_empty() {
        return Err(ToolError::data(format!("{}: delta_p.csv has no rows", adir.display())));
    }

    let mut period_order: Vec<String> = Vec::new();
    for r in &delta {
        if !period_order.contains(&r.period) {
            period_order.push(r.period.clone());
        }
    }
    let mut periods = Vec::new();
    for label in &period_order {
        let rows: Vec<&AnomalyRecord> = delta.iter().filter(|r| &r.period == label).collect();
        let mut ranked: Vec<(usize, f64)> = rows.iter().filter_map(|r| r.delta_p.map(|d| (r.cluster, d))).collect();
        ranked.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
        let top = ranked
            .into_iter()
            .take(cfg.top_n)
            .map(|(cluster, delta_p)| {
                let lag_peak = peak(
                    lagged
                        .iter()
                        .filter(|r| &r.period == label && r.cluster == cluster && r.month.is_none())
                        .filter_map(|r| r.delta_p.map(|d| (r.lag, d))),
                );
                let month_peak = lag_peak.and_then(|(lag, _)| {
                    peak(
                        monthly
                            .iter()
                            .filter(|r| &r.period == label && r.cluster == cluster && r.lag == lag)
                            .filter_map(|r| Some((r.month?, r.delta_p?))),
                    )
                });
                ClusterSummary {
                    cluster,
                    delta_p,
                    peak_lag: lag_peak.map(|p| p.0),
                    peak_lag_delta_p: lag_peak.map(|p| p.1),
                    peak_month: month_peak.map(|p| p.0),
                    peak_month_delta_p: month_peak.map(|p| p.1),
                }
            })
            .collect();
        periods.push(PeriodSummary {
            period: label.clone(),
            n_enso: rows.first().map_or(0, |r| r.n_enso),
            n_neutral: rows.first().map_or(0, |r| r.n_neutral),
            top,
        });
    }
    let summary = ReportSummary {
        top_n: cfg.top_n,
        periods,
    };

    let dir = stage_dir(cfg, "report")?;
    write_json(&dir.join("summary.json"), &summary)?;
    write_wide(&dir.join("lag_profiles.csv"), &lagged, false)?;
    write_wide(&dir.join("month_lag.csv"), &monthly, true)?;
    write_manifest(
        &dir,
        "report",
        cfg,
        json!({
            "summary": "summary.json",
            "lag_profiles": "lag_profiles.csv",
            "month_lag": "month_lag.csv",
        }),
    )?;
    Ok(ReportOutput { dir, summary })
}

/// Pivots anomaly rows to one row per (period, cluster[, month]) and one column per lag.
fn write_wide(path: &Path, rows: &[AnomalyRecord], by_month: bool) -> Result<()> {
    let mut lags: Vec<i64> = rows.iter().map(|r| r.lag).collect();
    lags.sort_unstable();
    lags.dedup();
    let mut cells: BTreeMap<(usize, usize, u32), BTreeMap<i64, Option<f64>>> = BTreeMap::new();
    let mut period_idx: Vec<&str> = Vec::new();
    for r in rows {
        let p = match period_idx.iter().position(|p| *p == r.period) {
            Some(i) => i,
            None => {
                period_idx.push(&r.period);
                period_idx.len() - 1
            }
        };
        let m = if by_month { r.month.unwrap_or(0) } else { 0 };
        cells.entry((p, r.cluster, m)).or_default().insert(r.lag, r.delta_p);
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["period".to_string(), "cluster".to_string()];
    if by_month {
        header.push("month".into());
    }
    header.extend(lags.iter().map(|l| format!("lag_{l}")));
    w.write_record(&header)?;
    for ((p, k, m), by_lag) in &cells {
        let mut rec = vec![period_idx[*p].to_string(), k.to_string()];
        if by_month {
            rec.push(m.to_string());
        }
        rec.extend(
            lags.iter()
                .map(|l| by_lag.get(l).copied().flatten().map_or_else(String::new, |d| d.to_string())),
        );
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| ToolError::io(path, e))
}
