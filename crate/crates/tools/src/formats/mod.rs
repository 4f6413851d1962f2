pub mod csv_long;
pub mod packed;
pub mod tables;

use std::path::Path;

use serde::{Deserialize, Serialize};

use regime_core::grid::DailyFieldSeries;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesFormat {
    CsvLong,
    PackedBinary,
}

pub fn load_series(path: &Path, format: SeriesFormat) -> Result<DailyFieldSeries> {
    match format {
        SeriesFormat::CsvLong => csv_long::read_series(path),
        SeriesFormat::PackedBinary => packed::read_series(path),
    }
}

pub fn write_series(path: &Path, series: &DailyFieldSeries, format: SeriesFormat) -> Result<()> {
    match format {
        SeriesFormat::CsvLong => csv_long::write_series(path, series),
        SeriesFormat::PackedBinary => packed::write_series(path, series),
    }
}
