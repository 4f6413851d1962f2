//! Gridded daily fields: geometry, subsetting, year splits and normalization.

use alloc::{collections::BTreeSet, string::String, vec::Vec};
use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Regular lat/lon grid of cell centers. Row 0 is `lat_min`, column 0 is
/// `lon_min`; both endpoints are cell centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub resolution: f64,
    pub height: usize,
    pub width: usize,
}

/// Closed lat/lon rectangle in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    /// Cerrado study region.
    pub const CERRADO: BoundingBox = BoundingBox {
        lat_min: -22.0,
        lat_max: -7.0,
        lon_min: -57.5,
        lon_max: -43.0,
    };
}

impl GridGeometry {
    pub fn new(lat_min: f64, lon_min: f64, resolution: f64, height: usize, width: usize) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::Config("resolution must be positive".into()));
        }
        if height == 0 || width == 0 {
            return Err(Error::Config("grid must have at least one cell".into()));
        }
        Ok(Self {
            lat_min,
            lat_max: lat_min + (height - 1) as f64 * resolution,
            lon_min,
            lon_max: lon_min + (width - 1) as f64 * resolution,
            resolution,
            height,
            width,
        })
    }

    /// Grid whose centers run from the lower to the upper bound inclusive.
    pub fn from_bounds(bbox: BoundingBox, resolution: f64) -> Result<Self> {
        if !(bbox.lat_min < bbox.lat_max) || !(bbox.lon_min < bbox.lon_max) {
            return Err(Error::Config("bounding box must have min < max".into()));
        }
        if !(resolution > 0.0) {
            return Err(Error::Config("resolution must be positive".into()));
        }
        let h = libm::round((bbox.lat_max - bbox.lat_min) / resolution) as usize + 1;
        let w = libm::round((bbox.lon_max - bbox.lon_min) / resolution) as usize + 1;
        Self::new(bbox.lat_min, bbox.lon_min, resolution, h, w)
    }

    pub fn lat(&self, row: usize) -> f64 {
        self.lat_min + row as f64 * self.resolution
    }

    pub fn lon(&self, col: usize) -> f64 {
        self.lon_min + col as f64 * self.resolution
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn bounds(&self) -> BoundingBox {
        BoundingBox {
            lat_min: self.lat_min,
            lat_max: self.lat_max,
            lon_min: self.lon_min,
            lon_max: self.lon_max,
        }
    }
}

/// One day of gridded values, laid out `[channel][row][col]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyField {
    pub date: NaiveDate,
    pub values: Vec<f64>,
    /// `[row][col]`, true where the cell has no data.
    pub missing: Vec<bool>,
}

impl DailyField {
    pub fn value(&self, geometry: &GridGeometry, channel: usize, row: usize, col: usize) -> f64 {
        self.values[(channel * geometry.height + row) * geometry.width + col]
    }
}

/// Per-channel mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyFieldSeries {
    pub geometry: GridGeometry,
    pub channels: Vec<String>,
    pub fields: Vec<DailyField>,
    /// Statistics the series was normalized with, if any.
    pub channel_stats: Option<ChannelStats>,
}

impl DailyFieldSeries {
    /// Validates shapes and date ordering.
    pub fn new(geometry: GridGeometry, channels: Vec<String>, fields: Vec<DailyField>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Config("at least one channel required".into()));
        }
        let cells = geometry.cells();
        for f in &fields {
            if f.values.len() != cells * channels.len() {
                return Err(Error::ShapeMismatch {
                    expected: cells * channels.len(),
                    actual: f.values.len(),
                });
            }
            if f.missing.len() != cells {
                return Err(Error::ShapeMismatch {
                    expected: cells,
                    actual: f.missing.len(),
                });
            }
        }
        if fields.windows(2).any(|w| w[0].date >= w[1].date) {
            return Err(Error::UnorderedDates);
        }
        Ok(Self {
            geometry,
            channels,
            fields,
            channel_stats: None,
        })
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.fields.iter().map(|f| f.date)
    }

    /// Per-channel mean and population standard deviation over non-missing cells.
    pub fn compute_stats(&self) -> ChannelStats {
        let v = self.n_channels();
        let cells = self.geometry.cells();
        let mut sum = alloc::vec![0.0f64; v];
        let mut count = alloc::vec![0u64; v];
        for f in &self.fields {
            for c in 0..v {
                for (cell, x) in f.values[c * cells..(c + 1) * cells].iter().enumerate() {
                    if !f.missing[cell] {
                        sum[c] += *x;
                        count[c] += 1;
                    }
                }
            }
        }
        let mean: Vec<f64> = sum
            .iter()
            .zip(&count)
            .map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
            .collect();
        let mut ss = alloc::vec![0.0f64; v];
        for f in &self.fields {
            for c in 0..v {
                for (cell, x) in f.values[c * cells..(c + 1) * cells].iter().enumerate() {
                    if !f.missing[cell] {
                        let d = *x - mean[c];
                        ss[c] += d * d;
                    }
                }
            }
        }
        let sigma = ss
            .iter()
            .zip(&count)
            .map(|(s, &n)| if n > 0 { libm::sqrt(s / n as f64) } else { 0.0 })
            .collect();
        ChannelStats { mean, sigma }
    }
}

fn axis_range(start: f64, res: f64, n: usize, lo: f64, hi: f64) -> Option<(usize, usize)> {
    let tol = 1e-9 * res;
    let idx: Vec<usize> = (0..n)
        .filter(|&i| {
            let c = start + i as f64 * res;
            c >= lo - tol && c <= hi + tol
        })
        .collect();
    Some((*idx.first()?, *idx.last()? + 1))
}

/// Keeps exactly the grid centers inside the closed `bbox`.
pub fn spatial_subset(series: &DailyFieldSeries, bbox: BoundingBox) -> Result<DailyFieldSeries> {
    let g = &series.geometry;
    let (r0, r1) = axis_range(g.lat_min, g.resolution, g.height, bbox.lat_min, bbox.lat_max)
        .ok_or(Error::EmptyIntersection)?;
    let (c0, c1) = axis_range(g.lon_min, g.resolution, g.width, bbox.lon_min, bbox.lon_max)
        .ok_or(Error::EmptyIntersection)?;
    if r0 == 0 && r1 == g.height && c0 == 0 && c1 == g.width {
        return Ok(series.clone());
    }
    let geometry = GridGeometry::new(g.lat(r0), g.lon(c0), g.resolution, r1 - r0, c1 - c0)?;
    let v = series.n_channels();
    let fields = series
        .fields
        .iter()
        .map(|f| {
            let mut values = Vec::with_capacity(v * geometry.cells());
            for ch in 0..v {
                for r in r0..r1 {
                    let base = (ch * g.height + r) * g.width;
                    values.extend_from_slice(&f.values[base + c0..base + c1]);
                }
            }
            let mut missing = Vec::with_capacity(geometry.cells());
            for r in r0..r1 {
                missing.extend_from_slice(&f.missing[r * g.width + c0..r * g.width + c1]);
            }
            DailyField {
                date: f.date,
                values,
                missing,
            }
        })
        .collect();
    Ok(DailyFieldSeries {
        geometry,
        channels: series.channels.clone(),
        fields,
        channel_stats: series.channel_stats.clone(),
    })
}

/// Partitions days into (train, test) by calendar year, preserving order.
pub fn split_by_years(series: &DailyFieldSeries, test_years: &BTreeSet<i32>) -> (DailyFieldSeries, DailyFieldSeries) {
    let (test, train): (Vec<_>, Vec<_>) = series
        .fields
        .iter()
        .cloned()
        .partition(|f| test_years.contains(&f.date.year()));
    let with = |fields| DailyFieldSeries {
        geometry: series.geometry,
        channels: series.channels.clone(),
        fields,
        channel_stats: series.channel_stats.clone(),
    };
    (with(train), with(test))
}

/// Per-channel z-score; missing cells become 0.
pub fn normalize(series: &DailyFieldSeries, stats: &ChannelStats) -> Result<DailyFieldSeries> {
    let v = series.n_channels();
    if stats.mean.len() != v || stats.sigma.len() != v {
        return Err(Error::ShapeMismatch {
            expected: v,
            actual: stats.mean.len().min(stats.sigma.len()),
        });
    }
    if let Some(channel) = stats.sigma.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::ZeroSigma { channel });
    }
    let cells = series.geometry.cells();
    let fields = series
        .fields
        .iter()
        .map(|f| {
            let mut values = f.values.clone();
            for c in 0..v {
                for (cell, x) in values[c * cells..(c + 1) * cells].iter_mut().enumerate() {
                    *x = if f.missing[cell] {
                        0.0
                    } else {
                        (*x - stats.mean[c]) / stats.sigma[c]
                    };
                }
            }
            DailyField {
                date: f.date,
                values,
                missing: f.missing.clone(),
            }
        })
        .collect();
    Ok(DailyFieldSeries {
        geometry: series.geometry,
        channels: series.channels.clone(),
        fields,
        channel_stats: Some(stats.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn series(days: usize, h: usize, w: usize, v: usize) -> DailyFieldSeries {
        let g = GridGeometry::new(-10.0, -50.0, 0.5, h, w).unwrap();
        let start = NaiveDate::from_ymd_opt(1999, 12, 30).unwrap();
        let fields = (0..days)
            .map(|d| DailyField {
                date: start + chrono::Duration::days(d as i64),
                values: (0..h * w * v).map(|i| ((i * 7 + d * 3) % 11) as f64).collect(),
                missing: vec![false; h * w],
            })
            .collect();
        let chans = (0..v).map(|c| alloc::format!("c{c}")).collect();
        DailyFieldSeries::new(g, chans, fields).unwrap()
    }

    #[test]
    fn bounds_count_inclusive_centers() {
        // Enumerate centers lat_min + i*0.1 within the closed interval.
        let count = |lo: f64, hi: f64| (0..1000).filter(|&i| lo + i as f64 * 0.1 <= hi + 1e-9).count();
        let g = GridGeometry::from_bounds(BoundingBox::CERRADO, 0.1).unwrap();
        assert_eq!(g.height, count(-22.0, -7.0));
        assert_eq!(g.width, count(-57.5, -43.0));
        assert_eq!((g.height, g.width), (151, 146));
    }

    #[test]
    fn subset_of_wider_grid_matches_cerrado_shape() {
        let g = GridGeometry::new(-34.0, -74.0, 0.1, 401, 401).unwrap();
        let s = DailyFieldSeries::new(
            g,
            vec!["tmin".into()],
            vec![DailyField {
                date: NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(),
                values: vec![0.0; g.cells()],
                missing: vec![false; g.cells()],
            }],
        )
        .unwrap();
        let sub = spatial_subset(&s, BoundingBox::CERRADO).unwrap();
        assert_eq!((sub.geometry.height, sub.geometry.width), (151, 146));
        assert!((sub.geometry.lat_min + 22.0).abs() < 1e-9);
        assert!((sub.geometry.lon_max + 43.0).abs() < 1e-9);
    }

    #[test]
    fn subset_identity_and_idempotence() {
        let s = series(3, 6, 5, 2);
        assert_eq!(spatial_subset(&s, s.geometry.bounds()).unwrap(), s);
        let bbox = BoundingBox {
            lat_min: -9.6,
            lat_max: -8.4,
            lon_min: -49.5,
            lon_max: -48.0,
        };
        let once = spatial_subset(&s, bbox).unwrap();
        assert_eq!((once.geometry.height, once.geometry.width), (3, 4));
        assert_eq!(once.fields[1].value(&once.geometry, 1, 0, 0), s.fields[1].value(&s.geometry, 1, 1, 1));
        assert_eq!(spatial_subset(&once, bbox).unwrap(), once);
    }

    #[test]
    fn subset_outside_is_error() {
        let s = series(1, 3, 3, 1);
        let bbox = BoundingBox {
            lat_min: 10.0,
            lat_max: 20.0,
            lon_min: -50.0,
            lon_max: -40.0,
        };
        assert_eq!(spatial_subset(&s, bbox), Err(Error::EmptyIntersection));
    }

    #[test]
    fn split_partitions_by_year() {
        let s = series(5, 2, 2, 1);
        let (train, test) = split_by_years(&s, &BTreeSet::new());
        assert_eq!(train, s);
        assert!(test.is_empty());
        let (train, test) = split_by_years(&s, &[2000].into_iter().collect());
        assert_eq!(train.len(), 2);
        assert_eq!(test.len(), 3);
        assert!(test.dates().all(|d| d.year() == 2000));
        let (train, test) = split_by_years(&s, &[1999, 2000].into_iter().collect());
        assert!(train.is_empty());
        assert_eq!(test.len(), 5);
    }

    #[test]
    fn normalize_with_own_stats_is_standard() {
        let mut s = series(4, 3, 3, 2);
        s.fields[0].missing[4] = true;
        s.fields[0].values[4] = f64::NAN;
        s.fields[0].values[9 + 4] = f64::NAN;
        let stats = s.compute_stats();
        let n = normalize(&s, &stats).unwrap();
        let check = n.compute_stats();
        for c in 0..2 {
            assert!(check.mean[c].abs() < 1e-9);
            assert!((check.sigma[c] - 1.0).abs() < 1e-9);
        }
        assert_eq!(n.fields[0].values[4], 0.0);
        assert_eq!(n.fields[0].values[13], 0.0);
    }

    #[test]
    fn normalize_identity_and_zero_sigma() {
        let s = series(2, 2, 2, 1);
        let id = ChannelStats { mean: vec![0.0], sigma: vec![1.0] };
        assert_eq!(normalize(&s, &id).unwrap().fields, s.fields);
        let mut c = s.clone();
        for f in &mut c.fields {
            f.values.iter_mut().for_each(|x| *x = 3.0);
        }
        let stats = c.compute_stats();
        assert_eq!(normalize(&c, &stats), Err(Error::ZeroSigma { channel: 0 }));
    }

    #[test]
    fn unordered_dates_rejected() {
        let s = series(2, 2, 2, 1);
        let mut f = s.fields.clone();
        f.swap(0, 1);
        assert_eq!(
            DailyFieldSeries::new(s.geometry, s.channels.clone(), f),
            Err(Error::UnorderedDates)
        );
    }
}
