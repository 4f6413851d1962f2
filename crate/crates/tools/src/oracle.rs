//! Day-level counting reference for the teleconnection tables.
//!
//! Walks the label sequence one day at a time and looks up each day's lagged
//! ENSO state by linear search, sharing no code with the month-aggregated
//! implementation it checks.

use chrono::Datelike;

use regime_core::calendar::YearRange;
use regime_core::regimes::RegimeSequence;
use regime_core::teleconnection::{AnomalyTable, EnsoState, EnsoStateSeries, Period};

/// Counts and probabilities for one (period, month, lag) slice.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSlice {
    pub n_enso: Vec<u64>,
    pub n_neutral: Vec<u64>,
    pub p_enso: Option<Vec<f64>>,
    pub p_neutral: Option<Vec<f64>>,
    pub delta: Option<Vec<f64>>,
}

fn state_at(states: &EnsoStateSeries, year: i32, month: u32, lag: i64) -> Option<EnsoState> {
    let total = year as i64 * 12 + month as i64 - 1 - lag;
    let (y, m) = (total.div_euclid(12) as i32, (total.rem_euclid(12) + 1) as u32);
    states
        .entries
        .iter()
        .find(|(ym, _)| ym.year == y && ym.month == m)
        .map(|e| e.1)
}

fn probs(counts: &[u64], n_min: u64) -> Option<Vec<f64>> {
    let total: u64 = counts.iter().sum();
    if total == 0 || total < n_min {
        return None;
    }
    Some(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

pub fn oracle_slice(
    seq: &RegimeSequence,
    states: &EnsoStateSeries,
    years: YearRange,
    month: Option<u32>,
    lag: i64,
    n_min: u64,
) -> OracleSlice {
    let mut n_enso = vec![0u64; seq.k];
    let mut n_neutral = vec![0u64; seq.k];
    for &(date, k) in &seq.entries {
        if date.year() < years.start || date.year() > years.end {
            continue;
        }
        if let Some(m) = month {
            if date.month() != m {
                continue;
            }
        }
        match state_at(states, date.year(), date.month(), lag) {
            Some(EnsoState::ElNino) => n_enso[k] += 1,
            Some(EnsoState::Neutral) => n_neutral[k] += 1,
            _ => {}
        }
    }
    let p_enso = probs(&n_enso, n_min);
    let p_neutral = probs(&n_neutral, n_min);
    let delta = match (&p_enso, &p_neutral) {
        (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| x - y).collect()),
        _ => None,
    };
    OracleSlice {
        n_enso,
        n_neutral,
        p_enso,
        p_neutral,
        delta,
    }
}

/// Checks every slice of `table` against the oracle, bit for bit.
/// Returns a description of the first mismatch.
pub fn verify_table(
    seq: &RegimeSequence,
    states: &EnsoStateSeries,
    periods: &[Period],
    table: &AnomalyTable,
    n_min: u64,
) -> Result<(), String> {
    for s in &table.slices {
        let period = periods
            .iter()
            .find(|p| p.label == s.period)
            .ok_or_else(|| format!("unknown period {}", s.period))?;
        let o = oracle_slice(seq, states, period.years, s.month, s.lag, n_min);
        let same = o.n_enso == s.enso.counts
            && o.n_neutral == s.neutral.counts
            && o.p_enso == s.enso.probs
            && o.p_neutral == s.neutral.probs
            && o.delta == s.delta;
        if !same {
            return Err(format!(
                "period {} month {:?} lag {} differs from day-level counts",
                s.period, s.month, s.lag
            ));
        }
    }
    Ok(())
}
