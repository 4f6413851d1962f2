//! One row per (date, lat, lon, channel): `date,lat,lon,channel,value`.
//!
//! An empty `value` marks a missing cell. A cell missing in any channel is
//! missing in all of them.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;

use regime_core::grid::{DailyField, DailyFieldSeries, GridGeometry};

use crate::error::{Result, ToolError};

const HEADER: [&str; 5] = ["date", "lat", "lon", "channel", "value"];

pub fn write_series(path: &Path, series: &DailyFieldSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    let g = &series.geometry;
    let cells = g.cells();
    for f in &series.fields {
        let date = f.date.to_string();
        for row in 0..g.height {
            let lat = g.lat(row).to_string();
            for col in 0..g.width {
                let lon = g.lon(col).to_string();
                let cell = row * g.width + col;
                for (ch, name) in series.channels.iter().enumerate() {
                    let value = if f.missing[cell] {
                        String::new()
                    } else {
                        f.values[ch * cells + cell].to_string()
                    };
                    w.write_record([date.as_str(), &lat, &lon, name, &value])?;
                }
            }
        }
    }
    w.flush().map_err(|e| ToolError::io(path, e))
}

/// Sorted distinct coordinates; bit patterns keep the comparison exact.
fn axis(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Spacing of a regular axis, or `None` for a single coordinate.
fn spacing(axis: &[f64], name: &str) -> Result<Option<f64>> {
    if axis.len() < 2 {
        return Ok(None);
    }
    let raw = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
    // Snap to 1e-9° so decimal resolutions come back exactly.
    let res = (raw * 1e9).round() / 1e9;
    for (i, &x) in axis.iter().enumerate() {
        if (x - (axis[0] + i as f64 * res)).abs() > 1e-6 * res {
            return Err(ToolError::data(format!("{name} coordinates are not evenly spaced")));
        }
    }
    Ok(Some(res))
}

pub fn read_series(path: &Path) -> Result<DailyFieldSeries> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().ne(HEADER) {
        return Err(ToolError::data(format!(
            "{}: header must be {}",
            path.display(),
            HEADER.join(",")
        )));
    }
    let mut channels: Vec<String> = Vec::new();
    let mut records: BTreeMap<(NaiveDate, u64, u64, usize), Option<f64>> = BTreeMap::new();
    let mut lats = Vec::new();
    let mut lons = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| ToolError::data(format!("{}: record {}: bad {what}", path.display(), line + 2));
        let date: NaiveDate = rec[0].parse().map_err(|_| bad("date"))?;
        let lat: f64 = rec[1].parse().map_err(|_| bad("lat"))?;
        let lon: f64 = rec[2].parse().map_err(|_| bad("lon"))?;
        let ch = match channels.iter().position(|c| c == &rec[3]) {
            Some(i) => i,
            None => {
                channels.push(rec[3].to_string());
                channels.len() - 1
            }
        };
        let value = match rec[4].trim() {
            "" => None,
            s => Some(s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad("value"))?),
        };
        lats.push(lat);
        lons.push(lon);
        if records.insert((date, lat.to_bits(), lon.to_bits(), ch), value).is_some() {
            return Err(ToolError::data(format!(
                "{}: duplicate record for {date} lat {lat} lon {lon} channel {}",
                path.display(),
                &rec[3]
            )));
        }
    }
    if records.is_empty() {
        return Err(ToolError::data(format!("{}: no records", path.display())));
    }
    let lats = axis(lats.into_iter());
    let lons = axis(lons.into_iter());
    let res = match (spacing(&lats, "lat")?, spacing(&lons, "lon")?) {
        (Some(a), Some(b)) if (a - b).abs() > 1e-6 * a => {
            return Err(ToolError::data("lat and lon spacings differ"));
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => 1.0,
    };
    let geometry = GridGeometry::new(lats[0], lons[0], res, lats.len(), lons.len())?;
    let cells = geometry.cells();
    let v = channels.len();

    let mut by_date: BTreeMap<NaiveDate, Vec<Option<f64>>> = BTreeMap::new();
    let lat_idx: BTreeMap<u64, usize> = lats.iter().enumerate().map(|(i, x)| (x.to_bits(), i)).collect();
    let lon_idx: BTreeMap<u64, usize> = lons.iter().enumerate().map(|(i, x)| (x.to_bits(), i)).collect();
    let mut seen: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    for ((date, lat, lon, ch), value) in records {
        let slot = by_date.entry(date).or_insert_with(|| vec![None; v * cells]);
        slot[ch * cells + lat_idx[&lat] * geometry.width + lon_idx[&lon]] = value;
        *seen.entry(date).or_default() += 1;
    }
    if let Some((date, n)) = seen.iter().find(|(_, &n)| n != v * cells) {
        return Err(ToolError::data(format!(
            "{}: {date} has {n} records, grid implies {}",
            path.display(),
            v * cells
        )));
    }
    let fields = by_date
        .into_iter()
        .map(|(date, slot)| {
            let missing: Vec<bool> = (0..cells).map(|c| (0..v).any(|ch| slot[ch * cells + c].is_none())).collect();
            let values = slot
                .iter()
                .enumerate()
                .map(|(i, x)| if missing[i % cells] { f64::NAN } else { x.expect("present") })
                .collect();
            DailyField { date, values, missing }
        })
        .collect();
    Ok(DailyFieldSeries::new(geometry, channels, fields)?)
}
