//! ENSO states from ONI and the El Niño vs Neutral regime-probability
//! statistics: aggregate, lagged, month-conditioned and per-period anomalies,
//! long-term frequency series and grouping of clusters by lag profile.

mod anomaly;
mod enso;
mod grouping;

pub use anomaly::{
    compare_periods, conditional_probs, frequency_timeseries, lagged_anomalies, month_conditioned_anomalies,
    monthly_regime_counts, probability_anomaly, AnomalyRow, AnomalySlice, AnomalyTable, Conditional,
    FrequencySeries, LagRange, MonthlyCounts, Period, DEFAULT_N_MIN,
};
pub use enso::{classify_enso, EnsoState, EnsoStateSeries, OniRecord, OniSeries};
pub use grouping::{group_by_lag_profile, lag_profiles, GroupLabel};
