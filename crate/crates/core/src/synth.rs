//! Synthetic gridded climate with planted regimes and a planted ENSO coupling.
//!
//! Each day picks one of `n_regimes` fixed spatial patterns, adds a shared
//! seasonal cycle and Gaussian noise. ENSO follows a square wave over months;
//! during (optionally lagged) El Niño months the coupled regime is chosen
//! with extra probability `coupling_strength`.

use alloc::{string::String, vec, vec::Vec};
use chrono::{Datelike, NaiveDate};
use core::f64::consts::PI;
use rand::{Rng as _, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calendar::{days_between, YearMonth, YearRange};
use crate::grid::{DailyField, DailyFieldSeries, GridGeometry};
use crate::teleconnection::{OniRecord, OniSeries};
use crate::{Error, Result, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub geometry: GridGeometry,
    pub n_regimes: usize,
    pub years: YearRange,
    pub enso_coupled_regime: usize,
    pub coupling_strength: f64,
    pub seasonal_amplitude: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default = "default_channels")]
    pub channels: Vec<String>,
    /// Spread of regime offsets around the climatology, °C.
    #[serde(default = "default_regime_amplitude")]
    pub regime_amplitude: f64,
    #[serde(default = "default_enso_period")]
    pub enso_period_months: u32,
    #[serde(default = "default_enso_phase")]
    pub enso_phase_months: u32,
    /// Coupling acts on days whose month is this many months after an El Niño month.
    #[serde(default)]
    pub coupling_lag_months: i32,
}

fn default_channels() -> Vec<String> {
    vec!["tmin".into(), "tmax".into()]
}
fn default_regime_amplitude() -> f64 {
    4.0
}
fn default_enso_period() -> u32 {
    48
}
fn default_enso_phase() -> u32 {
    12
}

impl SyntheticSpec {
    /// Small spec with the documented defaults for the optional fields.
    pub fn new(geometry: GridGeometry, n_regimes: usize, years: YearRange, seed: u64) -> Self {
        Self {
            geometry,
            n_regimes,
            years,
            enso_coupled_regime: 0,
            coupling_strength: 0.0,
            seasonal_amplitude: 1.0,
            noise_sigma: 0.5,
            seed,
            channels: default_channels(),
            regime_amplitude: default_regime_amplitude(),
            enso_period_months: default_enso_period(),
            enso_phase_months: default_enso_phase(),
            coupling_lag_months: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(1..=64).contains(&self.n_regimes) {
            return bad("n_regimes must be in 1..=64");
        }
        if !(0.0..=1.0).contains(&self.coupling_strength) {
            return bad("coupling_strength must be in [0, 1]");
        }
        if self.enso_coupled_regime >= self.n_regimes {
            return bad("enso_coupled_regime must be < n_regimes");
        }
        if self.years.is_empty() {
            return bad("year range is empty");
        }
        if self.channels.is_empty() {
            return bad("at least one channel required");
        }
        if self.enso_period_months == 0 || self.enso_phase_months > self.enso_period_months {
            return bad("enso phase must fit inside a positive period");
        }
        if !(self.noise_sigma >= 0.0) || !(self.seasonal_amplitude >= 0.0) {
            return bad("noise_sigma and seasonal_amplitude must be nonnegative");
        }
        Ok(())
    }

    fn first_month(&self) -> YearMonth {
        YearMonth::new(self.years.start, 1)
    }

    /// Square-wave El Niño indicator, centred inside each period.
    pub fn is_el_nino(&self, month: YearMonth) -> bool {
        let idx = (month.ordinal() - self.first_month().ordinal()).rem_euclid(self.enso_period_months as i64);
        let start = ((self.enso_period_months - self.enso_phase_months) / 2) as i64;
        idx >= start && idx < start + self.enso_phase_months as i64
    }
}

/// Output of [`synthesize`]; `labels[i]` is the planted regime of `series.fields[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub series: DailyFieldSeries,
    pub labels: Vec<usize>,
    pub oni: OniSeries,
}

fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

/// Regime patterns `[regime][channel][row][col]` including the base climatology.
pub fn regime_patterns(spec: &SyntheticSpec) -> Vec<Vec<f64>> {
    let mut rng = Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let g = &spec.geometry;
    let v = spec.channels.len();
    let a = spec.regime_amplitude;
    let lat_mid = 0.5 * (g.lat_min + g.lat_max);
    (0..spec.n_regimes)
        .map(|k| {
            let mut pattern = Vec::with_capacity(v * g.cells());
            for c in 0..v {
                let phase = 2.0 * PI * k as f64 / spec.n_regimes as f64 + c as f64 * PI / 2.0;
                let offset = a * libm::cos(phase);
                // Two smooth random waves give each regime its own spatial texture.
                let waves: Vec<(f64, f64, f64, f64)> = (0..2)
                    .map(|_| {
                        (
                            rng.random_range(0.5..2.0),
                            rng.random_range(0.5..2.0),
                            rng.random_range(0.0..2.0 * PI),
                            rng.random_range(0.15..0.35) * a,
                        )
                    })
                    .collect();
                for r in 0..g.height {
                    for col in 0..g.width {
                        let y = r as f64 / g.height.max(2) as f64;
                        let x = col as f64 / g.width.max(2) as f64;
                        let base = 18.0 + 12.0 * c as f64 - 0.3 * (g.lat(r) - lat_mid);
                        let texture: f64 = waves
                            .iter()
                            .map(|&(fx, fy, ph, amp)| amp * libm::sin(2.0 * PI * (fx * x + fy * y) + ph))
                            .sum();
                        pattern.push(base + offset + texture);
                    }
                }
            }
            pattern
        })
        .collect()
}

/// Draws the full synthetic dataset. Deterministic in `spec.seed`.
pub fn synthesize(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let patterns = regime_patterns(spec);
    let g = spec.geometry;
    let cells = g.cells();
    let v = spec.channels.len();

    let mut rng = Rng::seed_from_u64(spec.seed);
    rng.set_stream(2);
    let first = NaiveDate::from_ymd_opt(spec.years.start, 1, 1).ok_or(Error::Config("bad start year".into()))?;
    let last = NaiveDate::from_ymd_opt(spec.years.end, 12, 31).ok_or(Error::Config("bad end year".into()))?;

    let mut oni = Vec::new();
    let mut ym = spec.first_month();
    while ym.year <= spec.years.end {
        let jitter = rng.random_range(-0.3..0.3);
        let value = if spec.is_el_nino(ym) { 1.0 + jitter } else { jitter };
        oni.push(OniRecord { month: ym, oni: round_f32(value) });
        ym = ym.succ();
    }

    let noise = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).map_err(|_| Error::Config("bad noise_sigma".into()))?)
    } else {
        None
    };
    let mut fields = Vec::new();
    let mut labels = Vec::new();
    for date in days_between(first, last) {
        let coupled = spec.is_el_nino(YearMonth::of(date).offset(-(spec.coupling_lag_months as i64)));
        let regime = if coupled && rng.random::<f64>() < spec.coupling_strength {
            spec.enso_coupled_regime
        } else {
            rng.random_range(0..spec.n_regimes)
        };
        let doy = date.ordinal0() as f64;
        let season = spec.seasonal_amplitude * libm::cos(2.0 * PI * (doy - 15.0) / 365.25);
        let mut values = Vec::with_capacity(v * cells);
        for &p in &patterns[regime] {
            let eps = noise.as_ref().map_or(0.0, |n| n.sample(&mut rng));
            values.push(round_f32(p + season + eps));
        }
        fields.push(DailyField {
            date,
            values,
            missing: vec![false; cells],
        });
        labels.push(regime);
    }
    let series = DailyFieldSeries::new(g, spec.channels.clone(), fields)?;
    Ok(SyntheticData {
        series,
        labels,
        oni: OniSeries::new(oni)?,
    })
}
