//! Inference to a categorical regime sequence and per-regime characterization:
//! monthly frequencies, seasonal meta-clusters and delta-quantile anomalies.

use alloc::{collections::BTreeMap, vec, vec::Vec};
use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::encoder::{forward, EncoderParams};
use crate::exec::Executor;
use crate::grid::DailyFieldSeries;
use crate::msn::{similarities, PrototypeBank};
use crate::stats::{argmax, quantile_sorted};
use crate::views::{full_view, Raster};
use crate::{Error, Result};

/// Dated labels `k*_t`, strictly increasing in date.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegimeSequence {
    pub k: usize,
    pub entries: Vec<(NaiveDate, usize)>,
}

impl RegimeSequence {
    pub fn new(k: usize, entries: Vec<(NaiveDate, usize)>) -> Result<Self> {
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::UnorderedDates);
        }
        if let Some(&(_, bad)) = entries.iter().find(|(_, c)| *c >= k) {
            return Err(Error::Config(alloc::format!("label {bad} outside 0..{k}")));
        }
        Ok(Self { k, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.1)
    }

    /// Label histogram over all days.
    pub fn usage(&self) -> Vec<u64> {
        let mut u = vec![0u64; self.k];
        for c in self.labels() {
            u[c] += 1;
        }
        u
    }
}

/// `argmax_k ⟨z, q_k⟩`, lowest index on ties.
pub fn assign_regime(z: &[f64], bank: &PrototypeBank) -> usize {
    argmax(&similarities(z, bank)).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Discretization {
    pub sequence: RegimeSequence,
    /// Days whose encoding hit the zero-norm fallback.
    pub degenerate: usize,
}

/// Labels every day of a normalized series with the target encoder, feeding
/// the whole field resampled to `out_size` as one unmasked view.
pub fn discretize<E: Executor>(
    target: &EncoderParams,
    bank: &PrototypeBank,
    series: &DailyFieldSeries,
    out_size: usize,
    patch_size: usize,
    exec: &E,
) -> Result<Discretization> {
    let labels = exec.map_indexed(series.len(), |day| {
        let view = full_view(&Raster::of_day(series, day), out_size, patch_size);
        forward(target, &view).map(|c| (assign_regime(&c.latent.0, bank), c.degenerate))
    });
    let mut entries = Vec::with_capacity(series.len());
    let mut degenerate = 0;
    for (field, r) in series.fields.iter().zip(labels) {
        let (k, d) = r?;
        degenerate += d as usize;
        entries.push((field.date, k));
    }
    Ok(Discretization {
        sequence: RegimeSequence::new(bank.k, entries)?,
        degenerate,
    })
}

/// Counts per (cluster, calendar month) and their per-month percentages.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyFrequencyTable {
    pub counts: Vec<[u64; 12]>,
    /// Percent of the month's days falling in each cluster.
    pub freq: Vec<[f64; 12]>,
}

pub fn monthly_frequency(seq: &RegimeSequence) -> Result<MonthlyFrequencyTable> {
    if seq.is_empty() {
        return Err(Error::Empty("regime sequence"));
    }
    let mut counts = vec![[0u64; 12]; seq.k];
    for &(date, k) in &seq.entries {
        counts[k][date.month0() as usize] += 1;
    }
    let mut freq = vec![[0.0; 12]; seq.k];
    for m in 0..12 {
        let total: u64 = counts.iter().map(|row| row[m]).sum();
        if total > 0 {
            for k in 0..seq.k {
                freq[k][m] = 100.0 * counts[k][m] as f64 / total as f64;
            }
        }
    }
    Ok(MonthlyFrequencyTable { counts, freq })
}

/// Meteorological seasons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Season {
    Djf,
    Mam,
    Jja,
    Son,
    /// Cluster never occurs.
    Unused,
}

impl Season {
    /// Season containing a 1-based calendar month.
    pub fn of_month(month: u32) -> Self {
        match month {
            12 | 1 | 2 => Season::Djf,
            3..=5 => Season::Mam,
            6..=8 => Season::Jja,
            _ => Season::Son,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Season::Djf => "DJF",
            Season::Mam => "MAM",
            Season::Jja => "JJA",
            Season::Son => "SON",
            Season::Unused => "unused",
        }
    }
}

/// Season of each cluster's peak month (earliest month on ties).
pub fn seasonal_meta_clusters(table: &MonthlyFrequencyTable) -> Vec<Season> {
    table
        .freq
        .iter()
        .zip(&table.counts)
        .map(|(f, c)| {
            if c.iter().all(|&n| n == 0) {
                Season::Unused
            } else {
                Season::of_month(argmax(f).unwrap_or(0) as u32 + 1)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileAnomalyTable {
    pub channel: usize,
    pub quantiles: Vec<f64>,
    /// `deltas[k][i]` at `quantiles[i]` in the series' units; `None` for empty clusters.
    pub deltas: Vec<Option<Vec<f64>>>,
}

/// Default quantile grid.
pub fn default_quantile_grid() -> Vec<f64> {
    let mut q = vec![0.01, 0.05];
    q.extend((1..=9).map(|i| i as f64 / 10.0));
    q.extend([0.95, 0.99]);
    q
}

/// `Δ_k(q) = Q_k(q) − Q_all(q)` pooling every non-missing cell of every day.
pub fn quantile_anomalies(
    seq: &RegimeSequence,
    series: &DailyFieldSeries,
    quantile_grid: &[f64],
    channel: usize,
) -> Result<QuantileAnomalyTable> {
    if channel >= series.n_channels() {
        return Err(Error::Config(alloc::format!("channel {channel} out of range")));
    }
    if quantile_grid.windows(2).any(|w| w[0] >= w[1]) || quantile_grid.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
        return Err(Error::Config("quantile grid must be strictly increasing within (0, 1)".into()));
    }
    let by_date: BTreeMap<NaiveDate, usize> = series.fields.iter().enumerate().map(|(i, f)| (f.date, i)).collect();
    let cells = series.geometry.cells();
    let mut pools: Vec<Vec<f64>> = vec![Vec::new(); seq.k];
    let mut all = Vec::new();
    for &(date, k) in &seq.entries {
        let day = *by_date
            .get(&date)
            .ok_or_else(|| Error::Config(alloc::format!("{date} missing from series")))?;
        let f = &series.fields[day];
        for (cell, &x) in f.values[channel * cells..(channel + 1) * cells].iter().enumerate() {
            if !f.missing[cell] {
                pools[k].push(x);
                all.push(x);
            }
        }
    }
    let sort = |v: &mut Vec<f64>| v.sort_by(f64::total_cmp);
    sort(&mut all);
    let reference: Vec<f64> = quantile_grid
        .iter()
        .map(|&q| quantile_sorted(&all, q).unwrap_or(f64::NAN))
        .collect();
    let deltas = pools
        .into_iter()
        .map(|mut pool| {
            if pool.is_empty() {
                return None;
            }
            sort(&mut pool);
            Some(
                quantile_grid
                    .iter()
                    .zip(&reference)
                    .map(|(&q, r)| quantile_sorted(&pool, q).expect("nonempty") - r)
                    .collect(),
            )
        })
        .collect();
    Ok(QuantileAnomalyTable {
        channel,
        quantiles: quantile_grid.to_vec(),
        deltas,
    })
}

/// Majority true label of each predicted cluster (lowest label on ties);
/// `None` for clusters that never occur.
pub fn majority_mapping(predicted: &[usize], truth: &[usize], k: usize, n_true: usize) -> Vec<Option<usize>> {
    let mut table = vec![vec![0u64; n_true]; k];
    for (&p, &t) in predicted.iter().zip(truth) {
        table[p][t] += 1;
    }
    table
        .iter()
        .map(|row| {
            if row.iter().all(|&c| c == 0) {
                None
            } else {
                let as_f: Vec<f64> = row.iter().map(|&c| c as f64).collect();
                argmax(&as_f)
            }
        })
        .collect()
}

/// Fraction of samples whose cluster's majority label equals their own.
pub fn purity(predicted: &[usize], truth: &[usize], k: usize, n_true: usize) -> f64 {
    if predicted.is_empty() {
        return 0.0;
    }
    let map = majority_mapping(predicted, truth, k, n_true);
    let hits = predicted.iter().zip(truth).filter(|(p, t)| map[**p] == Some(**t)).count();
    hits as f64 / predicted.len() as f64
}
