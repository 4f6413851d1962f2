//! CSV tables produced and consumed by the pipeline commands.

use std::fs::File;
use std::path::Path;

use chrono::NaiveDate;

use regime_core::calendar::YearMonth;
use regime_core::msn::TrainReport;
use regime_core::regimes::{MonthlyFrequencyTable, QuantileAnomalyTable, RegimeSequence, Season};
use regime_core::stats::argmax;
use regime_core::teleconnection::{
    AnomalyTable, EnsoStateSeries, FrequencySeries, GroupLabel, OniRecord, OniSeries,
};

use crate::error::{Result, ToolError};

fn writer(path: &Path, header: &[&str]) -> Result<csv::Writer<File>> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    Ok(w)
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| ToolError::io(path, e))
}

fn reader(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(header.iter().copied()) {
        return Err(ToolError::data(format!(
            "{}: header must be {}",
            path.display(),
            header.join(",")
        )));
    }
    Ok(r)
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path, line: usize) -> Result<T> {
    rec[i]
        .trim()
        .parse()
        .map_err(|_| ToolError::data(format!("{}: record {line}: bad value {:?}", path.display(), &rec[i])))
}

fn opt_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path, line: usize) -> Result<Option<T>> {
    if rec[i].trim().is_empty() {
        Ok(None)
    } else {
        field(rec, i, path, line).map(Some)
    }
}

pub fn write_labels(path: &Path, column: &str, entries: &[(NaiveDate, usize)]) -> Result<()> {
    let mut w = writer(path, &["date", column])?;
    for (d, k) in entries {
        w.write_record([d.to_string(), k.to_string()])?;
    }
    finish(w, path)
}

pub fn write_regimes(path: &Path, seq: &RegimeSequence) -> Result<()> {
    write_labels(path, "cluster", &seq.entries)
}

/// Reads `date,cluster`; `k` is the number of prototypes the labels index.
pub fn read_regimes(path: &Path, k: usize) -> Result<RegimeSequence> {
    let mut r = reader(path, &["date", "cluster"])?;
    let mut entries = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        entries.push((field(&rec, 0, path, i + 2)?, field(&rec, 1, path, i + 2)?));
    }
    RegimeSequence::new(k, entries).map_err(|e| ToolError::data(format!("{}: {e}", path.display())))
}

pub fn write_oni(path: &Path, oni: &OniSeries) -> Result<()> {
    let mut w = writer(path, &["year", "month", "oni"])?;
    for r in &oni.entries {
        w.write_record([r.month.year.to_string(), r.month.month.to_string(), r.oni.to_string()])?;
    }
    finish(w, path)
}

/// Reads `year,month,oni`, sorting by month; gaps and duplicates are errors.
pub fn read_oni(path: &Path) -> Result<OniSeries> {
    let mut r = reader(path, &["year", "month", "oni"])?;
    let mut entries = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let month: u32 = field(&rec, 1, path, line)?;
        if !(1..=12).contains(&month) {
            return Err(ToolError::data(format!("{}: record {line}: month out of range", path.display())));
        }
        entries.push(OniRecord {
            month: YearMonth::new(field(&rec, 0, path, line)?, month),
            oni: field(&rec, 2, path, line)?,
        });
    }
    entries.sort_by_key(|r| r.month);
    if entries.windows(2).any(|w| w[0].month == w[1].month) {
        return Err(ToolError::data(format!("{}: duplicate ONI month", path.display())));
    }
    OniSeries::new(entries).map_err(|e| ToolError::data(format!("{}: {e}", path.display())))
}

pub fn write_train_report(path: &Path, report: &TrainReport) -> Result<()> {
    let mut w = writer(path, &["epoch", "loss", "mean_entropy", "lr", "usage_entropy"])?;
    for e in &report.epochs {
        w.write_record([
            e.epoch.to_string(),
            e.loss.to_string(),
            e.mean_entropy.to_string(),
            e.lr.to_string(),
            e.usage_entropy.to_string(),
        ])?;
    }
    finish(w, path)
}

pub fn write_monthly_frequency(path: &Path, table: &MonthlyFrequencyTable) -> Result<()> {
    let mut w = writer(path, &["cluster", "month", "count", "percent"])?;
    for (k, (counts, freq)) in table.counts.iter().zip(&table.freq).enumerate() {
        for m in 0..12 {
            w.write_record([k.to_string(), (m + 1).to_string(), counts[m].to_string(), freq[m].to_string()])?;
        }
    }
    finish(w, path)
}

pub fn write_meta_clusters(path: &Path, table: &MonthlyFrequencyTable, seasons: &[Season]) -> Result<()> {
    let mut w = writer(path, &["cluster", "peak_month", "season"])?;
    for (k, season) in seasons.iter().enumerate() {
        let peak = (*season != Season::Unused).then(|| argmax(&table.freq[k]).unwrap_or(0) + 1);
        w.write_record([k.to_string(), opt(peak), season.label().to_string()])?;
    }
    finish(w, path)
}

pub fn write_quantile_anomalies(path: &Path, tables: &[QuantileAnomalyTable], channels: &[String]) -> Result<()> {
    let mut w = writer(path, &["cluster", "channel", "quantile", "delta_c"])?;
    for t in tables {
        for (k, deltas) in t.deltas.iter().enumerate() {
            for (i, q) in t.quantiles.iter().enumerate() {
                let d = deltas.as_ref().map(|d| d[i]);
                w.write_record([k.to_string(), channels[t.channel].clone(), q.to_string(), opt(d)])?;
            }
        }
    }
    finish(w, path)
}

pub fn write_enso_states(path: &Path, oni: &OniSeries, states: &EnsoStateSeries) -> Result<()> {
    let mut w = writer(path, &["year", "month", "oni", "state"])?;
    for (r, (month, s)) in oni.entries.iter().zip(&states.entries) {
        w.write_record([
            month.year.to_string(),
            month.month.to_string(),
            r.oni.to_string(),
            s.label().to_string(),
        ])?;
    }
    finish(w, path)
}

pub const ANOMALY_HEADER: [&str; 9] = [
    "period", "month", "lag", "cluster", "p_enso", "p_neutral", "delta_p", "n_enso", "n_neutral",
];

/// Writes several tables back to back under one header.
pub fn write_anomalies<'a>(path: &Path, tables: impl IntoIterator<Item = &'a AnomalyTable>) -> Result<()> {
    let mut w = writer(path, &ANOMALY_HEADER)?;
    for t in tables {
        for row in t.rows() {
            w.write_record([
                row.period.to_string(),
                opt(row.month),
                row.lag.to_string(),
                row.cluster.to_string(),
                opt(row.p_enso),
                opt(row.p_neutral),
                opt(row.delta_p),
                row.n_enso.to_string(),
                row.n_neutral.to_string(),
            ])?;
        }
    }
    finish(w, path)
}

/// Owned row of an anomaly CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyRecord {
    pub period: String,
    pub month: Option<u32>,
    pub lag: i64,
    pub cluster: usize,
    pub p_enso: Option<f64>,
    pub p_neutral: Option<f64>,
    pub delta_p: Option<f64>,
    pub n_enso: u64,
    pub n_neutral: u64,
}

pub fn read_anomalies(path: &Path) -> Result<Vec<AnomalyRecord>> {
    let mut r = reader(path, &ANOMALY_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let l = i + 2;
        out.push(AnomalyRecord {
            period: rec[0].to_string(),
            month: opt_field(&rec, 1, path, l)?,
            lag: field(&rec, 2, path, l)?,
            cluster: field(&rec, 3, path, l)?,
            p_enso: opt_field(&rec, 4, path, l)?,
            p_neutral: opt_field(&rec, 5, path, l)?,
            delta_p: opt_field(&rec, 6, path, l)?,
            n_enso: field(&rec, 7, path, l)?,
            n_neutral: field(&rec, 8, path, l)?,
        });
    }
    Ok(out)
}

pub fn write_frequency_series(path: &Path, series: &[FrequencySeries]) -> Result<()> {
    let mut w = writer(path, &["cluster", "year", "month", "fraction", "running_mean"])?;
    for (k, s) in series.iter().enumerate() {
        for ((m, f), r) in s.months.iter().zip(&s.fraction).zip(&s.running_mean) {
            w.write_record([
                k.to_string(),
                m.year.to_string(),
                m.month.to_string(),
                f.to_string(),
                r.to_string(),
            ])?;
        }
    }
    finish(w, path)
}

pub fn write_groups(path: &Path, labels: &[GroupLabel]) -> Result<()> {
    let mut w = writer(path, &["cluster", "group"])?;
    for (k, g) in labels.iter().enumerate() {
        w.write_record([k.to_string(), g.to_string()])?;
    }
    finish(w, path)
}
