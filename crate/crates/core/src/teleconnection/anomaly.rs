use alloc::{collections::BTreeMap, string::String, vec, vec::Vec};
use serde::{Deserialize, Serialize};

use super::enso::{EnsoState, EnsoStateSeries};
use crate::calendar::{YearMonth, YearRange};
use crate::regimes::RegimeSequence;
use crate::{Error, Result};

/// Minimum pooled days before a conditional probability is reported.
pub const DEFAULT_N_MIN: u64 = 30;

/// Day counts per (month, cluster).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonthlyCounts {
    pub k: usize,
    pub months: BTreeMap<YearMonth, Vec<u64>>,
}

impl MonthlyCounts {
    pub fn days(&self, month: YearMonth) -> u64 {
        self.months.get(&month).map_or(0, |c| c.iter().sum())
    }

    pub fn get(&self, month: YearMonth, cluster: usize) -> u64 {
        self.months.get(&month).map_or(0, |c| c[cluster])
    }
}

pub fn monthly_regime_counts(seq: &RegimeSequence) -> Result<MonthlyCounts> {
    if seq.is_empty() {
        return Err(Error::Empty("regime sequence"));
    }
    let mut months: BTreeMap<YearMonth, Vec<u64>> = BTreeMap::new();
    for &(date, k) in &seq.entries {
        months.entry(YearMonth::of(date)).or_insert_with(|| vec![0; seq.k])[k] += 1;
    }
    Ok(MonthlyCounts { k: seq.k, months })
}

/// Inclusive lag window in months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagRange {
    pub tau_min: i64,
    pub tau_max: i64,
}

impl Default for LagRange {
    fn default() -> Self {
        Self { tau_min: -12, tau_max: 12 }
    }
}

impl LagRange {
    pub fn iter(&self) -> impl Iterator<Item = i64> {
        self.tau_min..=self.tau_max
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_min > self.tau_max {
            return Err(Error::Config("tau_min must be <= tau_max".into()));
        }
        Ok(())
    }
}

/// Labelled year range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub label: String,
    pub years: YearRange,
}

impl Period {
    pub fn new(label: impl Into<String>, start: i32, end: i32) -> Self {
        Self {
            label: label.into(),
            years: YearRange::new(start, end),
        }
    }
}

/// Pooled counts for one condition; `probs` is `None` below `n_min` days.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditional {
    pub counts: Vec<u64>,
    pub total: u64,
    pub probs: Option<Vec<f64>>,
}

/// `P(k | condition)` over months `t` in `period` (and calendar month
/// `month_filter`, if set) whose ENSO state at `t − lag` equals `condition`.
/// Months whose `t − lag` falls outside ENSO coverage are skipped.
pub fn conditional_probs(
    counts: &MonthlyCounts,
    states: &EnsoStateSeries,
    condition: EnsoState,
    period: YearRange,
    month_filter: Option<u32>,
    lag: i64,
    n_min: u64,
) -> Conditional {
    let mut pooled = vec![0u64; counts.k];
    for (month, c) in &counts.months {
        if !period.contains(month.year) || month_filter.is_some_and(|m| m != month.month) {
            continue;
        }
        if states.get(month.offset(-lag)) != Some(condition) {
            continue;
        }
        for (p, x) in pooled.iter_mut().zip(c) {
            *p += x;
        }
    }
    let total: u64 = pooled.iter().sum();
    let probs = (total >= n_min.max(1)).then(|| pooled.iter().map(|&c| c as f64 / total as f64).collect());
    Conditional {
        counts: pooled,
        total,
        probs,
    }
}

/// Elementwise `P_enso − P_neutral`; missing if either side is.
pub fn probability_anomaly(p_enso: Option<&[f64]>, p_neutral: Option<&[f64]>) -> Option<Vec<f64>> {
    let (a, b) = (p_enso?, p_neutral?);
    Some(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// One (period, month, lag) slice of El Niño vs Neutral probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalySlice {
    pub period: String,
    /// Calendar month filter, `None` for all months.
    pub month: Option<u32>,
    pub lag: i64,
    pub enso: Conditional,
    pub neutral: Conditional,
    pub delta: Option<Vec<f64>>,
}

impl AnomalySlice {
    fn compute(
        counts: &MonthlyCounts,
        states: &EnsoStateSeries,
        period: &Period,
        month: Option<u32>,
        lag: i64,
        n_min: u64,
    ) -> Self {
        let enso = conditional_probs(counts, states, EnsoState::ElNino, period.years, month, lag, n_min);
        let neutral = conditional_probs(counts, states, EnsoState::Neutral, period.years, month, lag, n_min);
        let delta = probability_anomaly(enso.probs.as_deref(), neutral.probs.as_deref());
        Self {
            period: period.label.clone(),
            month,
            lag,
            enso,
            neutral,
            delta,
        }
    }
}

/// Flat row of an anomaly table.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyRow<'a> {
    pub period: &'a str,
    pub month: Option<u32>,
    pub lag: i64,
    pub cluster: usize,
    pub p_enso: Option<f64>,
    pub p_neutral: Option<f64>,
    pub delta_p: Option<f64>,
    pub n_enso: u64,
    pub n_neutral: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnomalyTable {
    pub slices: Vec<AnomalySlice>,
}

impl AnomalyTable {
    pub fn rows(&self) -> impl Iterator<Item = AnomalyRow<'_>> {
        self.slices.iter().flat_map(|s| {
            (0..s.enso.counts.len()).map(move |k| AnomalyRow {
                period: &s.period,
                month: s.month,
                lag: s.lag,
                cluster: k,
                p_enso: s.enso.probs.as_ref().map(|p| p[k]),
                p_neutral: s.neutral.probs.as_ref().map(|p| p[k]),
                delta_p: s.delta.as_ref().map(|d| d[k]),
                n_enso: s.enso.total,
                n_neutral: s.neutral.total,
            })
        })
    }

    pub fn slice(&self, period: &str, month: Option<u32>, lag: i64) -> Option<&AnomalySlice> {
        self.slices
            .iter()
            .find(|s| s.period == period && s.month == month && s.lag == lag)
    }

    /// Largest `|Σ_k ΔP_k|` over the reported slices.
    pub fn max_zero_sum_violation(&self) -> f64 {
        self.slices
            .iter()
            .filter_map(|s| s.delta.as_ref())
            .map(|d| d.iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

/// `ΔP_k(τ)` for every lag; `τ > 0` means regimes follow the ENSO state.
pub fn lagged_anomalies(
    counts: &MonthlyCounts,
    states: &EnsoStateSeries,
    lags: LagRange,
    period: &Period,
    n_min: u64,
) -> Result<AnomalyTable> {
    lags.validate()?;
    Ok(AnomalyTable {
        slices: lags
            .iter()
            .map(|lag| AnomalySlice::compute(counts, states, period, None, lag, n_min))
            .collect(),
    })
}

/// `ΔP_k(m, τ)` restricted to target months with calendar month `month`.
pub fn month_conditioned_anomalies(
    counts: &MonthlyCounts,
    states: &EnsoStateSeries,
    month: u32,
    lags: LagRange,
    period: &Period,
    n_min: u64,
) -> Result<AnomalyTable> {
    lags.validate()?;
    if !(1..=12).contains(&month) {
        return Err(Error::Config("month must be in 1..=12".into()));
    }
    Ok(AnomalyTable {
        slices: lags
            .iter()
            .map(|lag| AnomalySlice::compute(counts, states, period, Some(month), lag, n_min))
            .collect(),
    })
}

/// Lag-0 `ΔP_k` computed independently for each period.
pub fn compare_periods(
    counts: &MonthlyCounts,
    states: &EnsoStateSeries,
    periods: &[Period],
    n_min: u64,
) -> Result<AnomalyTable> {
    if let Some(p) = periods.iter().find(|p| p.years.is_empty()) {
        return Err(Error::Config(alloc::format!("period {} is empty", p.label)));
    }
    Ok(AnomalyTable {
        slices: periods
            .iter()
            .map(|p| AnomalySlice::compute(counts, states, p, None, 0, n_min))
            .collect(),
    })
}

/// Monthly occurrence fraction of one cluster and its centred running mean.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySeries {
    pub months: Vec<YearMonth>,
    pub fraction: Vec<f64>,
    pub running_mean: Vec<f64>,
}

/// Running mean over `window` months centred on each month, truncated at the ends.
pub fn frequency_timeseries(counts: &MonthlyCounts, cluster: usize, window: usize) -> Result<FrequencySeries> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::Config("running-mean window must be odd and >= 1".into()));
    }
    if cluster >= counts.k {
        return Err(Error::Config(alloc::format!("cluster {cluster} out of range")));
    }
    let months: Vec<YearMonth> = counts.months.keys().copied().collect();
    let fraction: Vec<f64> = counts
        .months
        .values()
        .map(|c| c[cluster] as f64 / c.iter().sum::<u64>() as f64)
        .collect();
    let half = window / 2;
    let n = fraction.len();
    let running_mean = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            fraction[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    Ok(FrequencySeries {
        months,
        fraction,
        running_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::days_between;
    use chrono::NaiveDate;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    /// Two years; El Niño for Jan–Jun 2001 and cluster 1 exactly in those months.
    fn toy() -> (MonthlyCounts, EnsoStateSeries) {
        let entries: Vec<_> = days_between(d(2000, 1, 1), d(2001, 12, 31))
            .map(|x| (x, (x.year() == 2001 && x.month() <= 6) as usize))
            .collect();
        let seq = RegimeSequence::new(2, entries).unwrap();
        let mut states = EnsoStateSeries::constant(YearMonth::new(2000, 1), 24, EnsoState::Neutral);
        for e in states.entries.iter_mut() {
            if e.0.year == 2001 && e.0.month <= 6 {
                e.1 = EnsoState::ElNino;
            }
        }
        (monthly_regime_counts(&seq).unwrap(), states)
    }

    use chrono::Datelike;

    #[test]
    fn counts_partition_days() {
        let entries: Vec<_> = days_between(d(1990, 1, 1), d(1990, 1, 31)).map(|x| (x, 4)).collect();
        let seq = RegimeSequence::new(6, entries).unwrap();
        let c = monthly_regime_counts(&seq).unwrap();
        assert_eq!(c.get(YearMonth::new(1990, 1), 4), 31);
        assert_eq!(c.days(YearMonth::new(1990, 1)), 31);
        assert!(!c.months.contains_key(&YearMonth::new(1990, 2)));
    }

    #[test]
    fn constructed_toy_probabilities() {
        let (c, s) = toy();
        let period = YearRange::new(2000, 2001);
        let en = conditional_probs(&c, &s, EnsoState::ElNino, period, None, 0, 30);
        let ne = conditional_probs(&c, &s, EnsoState::Neutral, period, None, 0, 30);
        assert_eq!(en.probs.as_deref(), Some(&[0.0, 1.0][..]));
        assert_eq!(ne.probs.as_deref(), Some(&[1.0, 0.0][..]));
        let delta = probability_anomaly(en.probs.as_deref(), ne.probs.as_deref()).unwrap();
        assert_eq!(delta, vec![-1.0, 1.0]);
    }

    #[test]
    fn all_neutral_gives_unconditional() {
        let (c, _) = toy();
        let s = EnsoStateSeries::constant(YearMonth::new(2000, 1), 24, EnsoState::Neutral);
        let ne = conditional_probs(&c, &s, EnsoState::Neutral, YearRange::new(2000, 2001), None, 0, 30);
        let total = 731.0;
        let p1 = 181.0 / total;
        let p = ne.probs.unwrap();
        assert!((p[1] - p1).abs() < 1e-15 && (p[0] - (1.0 - p1)).abs() < 1e-15);
        let lagged = lagged_anomalies(&c, &s, LagRange::default(), &Period::new("all", 2000, 2001), 30).unwrap();
        assert!(lagged.slices.iter().all(|sl| sl.delta.is_none()));
    }

    #[test]
    fn anomaly_identity_and_missing() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(probability_anomaly(Some(&p), Some(&p)), Some(vec![0.0; 3]));
        assert_eq!(probability_anomaly(None, Some(&p)), None);
    }

    #[test]
    fn lag_zero_slice_matches_unlagged() {
        let (c, s) = toy();
        let period = Period::new("all", 2000, 2001);
        let lagged = lagged_anomalies(&c, &s, LagRange::default(), &period, 30).unwrap();
        let cmp = compare_periods(&c, &s, &[period.clone()], 30).unwrap();
        assert_eq!(lagged.slice("all", None, 0).unwrap(), &cmp.slices[0]);
        assert!(lagged.max_zero_sum_violation() <= 1e-12);
    }

    #[test]
    fn positive_lag_conditions_on_earlier_months() {
        let (c, s) = toy();
        // Cluster 1 runs Jan–Jun 2001; at lag +1 the El Niño-conditioned months are Feb–Jul 2001.
        let en = conditional_probs(&c, &s, EnsoState::ElNino, YearRange::new(2000, 2001), None, 1, 1);
        assert_eq!(en.total, 28 + 31 + 30 + 31 + 30 + 31);
        assert_eq!(en.counts[0], 31);
    }

    #[test]
    fn month_filter_and_missing_rows() {
        let (c, s) = toy();
        let p = Period::new("all", 2000, 2001);
        let jan = month_conditioned_anomalies(&c, &s, 1, LagRange { tau_min: 0, tau_max: 0 }, &p, 30).unwrap();
        assert_eq!(jan.slices[0].delta, Some(vec![-1.0, 1.0]));
        let sep = month_conditioned_anomalies(&c, &s, 9, LagRange { tau_min: 0, tau_max: 0 }, &p, 30).unwrap();
        assert!(sep.slices[0].delta.is_none());
        assert!(month_conditioned_anomalies(&c, &s, 13, LagRange::default(), &p, 30).is_err());
    }

    #[test]
    fn periods_without_el_nino_are_missing() {
        let (c, s) = toy();
        let t = compare_periods(&c, &s, &[Period::new("a", 2000, 2000), Period::new("a", 2000, 2000)], 30).unwrap();
        assert!(t.slices[0].delta.is_none());
        assert_eq!(t.slices[0], t.slices[1]);
    }

    #[test]
    fn running_mean_edges() {
        let entries: Vec<_> = days_between(d(2000, 1, 1), d(2000, 12, 31))
            .map(|x| (x, (x.day() <= x.month()) as usize))
            .collect();
        let c = monthly_regime_counts(&RegimeSequence::new(2, entries).unwrap()).unwrap();
        let one = frequency_timeseries(&c, 1, 1).unwrap();
        assert_eq!(one.fraction, one.running_mean);
        let three = frequency_timeseries(&c, 1, 3).unwrap();
        assert!((three.running_mean[0] - (one.fraction[0] + one.fraction[1]) / 2.0).abs() < 1e-15);
        assert!(frequency_timeseries(&c, 1, 4).is_err());
        let constant = frequency_timeseries(&c, 0, 13).unwrap();
        assert_eq!(constant.months.len(), 12);
    }
}
