use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::calendar::YearMonth;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OniRecord {
    pub month: YearMonth,
    pub oni: f64,
}

/// Gap-free monthly Oceanic Niño Index.
#[derive(Debug, Clone, PartialEq)]
pub struct OniSeries {
    pub entries: Vec<OniRecord>,
}

impl OniSeries {
    pub fn new(entries: Vec<OniRecord>) -> Result<Self> {
        if entries.windows(2).any(|w| w[1].month != w[0].month.succ()) {
            return Err(Error::Config("ONI months must be consecutive without gaps".into()));
        }
        if entries.iter().any(|r| !r.oni.is_finite()) {
            return Err(Error::Config("ONI values must be finite".into()));
        }
        Ok(Self { entries })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnsoState {
    ElNino,
    Neutral,
    LaNina,
}

impl EnsoState {
    pub fn label(self) -> &'static str {
        match self {
            EnsoState::ElNino => "el_nino",
            EnsoState::Neutral => "neutral",
            EnsoState::LaNina => "la_nina",
        }
    }
}

/// Monthly ENSO states over the same months as the source ONI series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnsoStateSeries {
    pub entries: Vec<(YearMonth, EnsoState)>,
}

impl EnsoStateSeries {
    /// State of a month, `None` outside coverage.
    pub fn get(&self, month: YearMonth) -> Option<EnsoState> {
        let first = self.entries.first()?.0.ordinal();
        let idx = month.ordinal() - first;
        if idx < 0 {
            return None;
        }
        self.entries.get(idx as usize).map(|e| e.1)
    }

    /// Uniform state over a month range, for tests and toy inputs.
    pub fn constant(first: YearMonth, months: usize, state: EnsoState) -> Self {
        Self {
            entries: (0..months).map(|i| (first.offset(i as i64), state)).collect(),
        }
    }
}

/// A month is El Niño (La Niña) when it lies in a run of at least
/// `persistence` consecutive months with `oni ≥ threshold` (`≤ −threshold`).
pub fn classify_enso(oni: &OniSeries, threshold: f64, persistence: usize) -> EnsoStateSeries {
    let persistence = persistence.max(1);
    let n = oni.entries.len();
    let mut states = alloc::vec![EnsoState::Neutral; n];
    let mut mark = |hit: &dyn Fn(f64) -> bool, state: EnsoState| {
        let mut i = 0;
        while i < n {
            if !hit(oni.entries[i].oni) {
                i += 1;
                continue;
            }
            let start = i;
            while i < n && hit(oni.entries[i].oni) {
                i += 1;
            }
            if i - start >= persistence {
                states[start..i].fill(state);
            }
        }
    };
    mark(&|x| x >= threshold, EnsoState::ElNino);
    mark(&|x| x <= -threshold, EnsoState::LaNina);
    EnsoStateSeries {
        entries: oni.entries.iter().zip(states).map(|(r, s)| (r.month, s)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64]) -> OniSeries {
        let first = YearMonth::new(1990, 1);
        OniSeries::new(
            values
                .iter()
                .enumerate()
                .map(|(i, &oni)| OniRecord { month: first.offset(i as i64), oni })
                .collect(),
        )
        .unwrap()
    }

    fn states(s: &EnsoStateSeries) -> Vec<EnsoState> {
        s.entries.iter().map(|e| e.1).collect()
    }

    #[test]
    fn all_zero_is_neutral() {
        let s = classify_enso(&series(&[0.0; 24]), 0.5, 5);
        assert!(states(&s).iter().all(|&x| x == EnsoState::Neutral));
    }

    #[test]
    fn six_month_run_is_el_nino() {
        let mut v = [0.0; 14];
        v[3..9].fill(0.9);
        let s = states(&classify_enso(&series(&v), 0.5, 5));
        for (i, st) in s.iter().enumerate() {
            let expect = if (3..9).contains(&i) { EnsoState::ElNino } else { EnsoState::Neutral };
            assert_eq!(*st, expect);
        }
    }

    #[test]
    fn short_run_stays_neutral() {
        let mut v = [0.0; 12];
        v[2..6].fill(0.9);
        let s = states(&classify_enso(&series(&v), 0.5, 5));
        assert!(s.iter().all(|&x| x == EnsoState::Neutral));
        v[7..12].fill(-1.1);
        let s = states(&classify_enso(&series(&v), 0.5, 5));
        assert!(s[7..].iter().all(|&x| x == EnsoState::LaNina));
    }

    #[test]
    fn persistence_one_is_thresholding() {
        let v = [0.5, 0.49, -0.5, -0.51, 0.0, 1.0, -0.49];
        let s = states(&classify_enso(&series(&v), 0.5, 1));
        use EnsoState::*;
        assert_eq!(s, [ElNino, Neutral, LaNina, LaNina, Neutral, ElNino, Neutral]);
    }

    #[test]
    fn gaps_rejected_and_lookup() {
        let bad = OniSeries::new(alloc::vec![
            OniRecord { month: YearMonth::new(1990, 1), oni: 0.0 },
            OniRecord { month: YearMonth::new(1990, 3), oni: 0.0 },
        ]);
        assert!(bad.is_err());
        let s = classify_enso(&series(&[1.0; 6]), 0.5, 5);
        assert_eq!(s.get(YearMonth::new(1990, 6)), Some(EnsoState::ElNino));
        assert_eq!(s.get(YearMonth::new(1990, 7)), None);
        assert_eq!(s.get(YearMonth::new(1989, 12)), None);
    }
}
