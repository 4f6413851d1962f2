//! Random resized crops and patch masking for target and anchor views.

use alloc::vec::Vec;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::grid::{DailyFieldSeries, GridGeometry};
use crate::{Error, Result, Rng};

/// Closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }

    fn valid_fraction(&self) -> bool {
        self.lo > 0.0 && self.lo <= self.hi && self.hi <= 1.0
    }
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// Borrowed `[channel][row][col]` grid of one day.
#[derive(Debug, Clone, Copy)]
pub struct Raster<'a> {
    pub values: &'a [f64],
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl<'a> Raster<'a> {
    pub fn new(values: &'a [f64], height: usize, width: usize, channels: usize) -> Self {
        debug_assert_eq!(values.len(), height * width * channels);
        Self {
            values,
            height,
            width,
            channels,
        }
    }

    pub fn of_day(series: &'a DailyFieldSeries, day: usize) -> Self {
        let GridGeometry { height, width, .. } = series.geometry;
        Self::new(&series.fields[day].values, height, width, series.n_channels())
    }

    fn at(&self, c: usize, r: usize, col: usize) -> f64 {
        self.values[(c * self.height + r) * self.width + col]
    }
}

/// Source rectangle in cell coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropBox {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViewKind {
    Target,
    Anchor,
}

/// A `side × side × channels` view laid out `[channel][row][col]`, with one
/// mask bit per `patch × patch` block (row-major over the patch grid).
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub side: usize,
    pub channels: usize,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    pub crop: CropBox,
    pub kind: ViewKind,
}

impl View {
    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewConfig {
    pub out_size: usize,
    pub patch_size: usize,
    pub n_anchors: usize,
    pub target_scale: Interval,
    pub anchor_scale: Interval,
    pub aspect_ratio: Interval,
    pub mask_ratio: f64,
}

impl Default for ViewConfig {
    fn default() -> Self {
        Self {
            out_size: 32,
            patch_size: 4,
            n_anchors: 2,
            target_scale: Interval::new(0.6, 1.0),
            anchor_scale: Interval::new(0.2, 0.6),
            aspect_ratio: Interval::new(3.0 / 4.0, 4.0 / 3.0),
            mask_ratio: 0.15,
        }
    }
}

impl ViewConfig {
    pub fn n_patches(&self) -> usize {
        let g = self.out_size / self.patch_size.max(1);
        g * g
    }

    pub fn masked_patches(&self) -> usize {
        masked_count(self.n_patches(), self.mask_ratio)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.out_size < 2 || self.patch_size == 0 || self.out_size % self.patch_size != 0 {
            return bad("out_size must be >= 2 and divisible by patch_size");
        }
        if self.n_anchors == 0 {
            return bad("n_anchors must be >= 1");
        }
        if !self.target_scale.valid_fraction() || !self.anchor_scale.valid_fraction() {
            return bad("crop scales must be intervals within (0, 1]");
        }
        if !(self.aspect_ratio.lo > 0.0 && self.aspect_ratio.lo <= self.aspect_ratio.hi) {
            return bad("aspect ratio interval must be positive");
        }
        if !(0.0..1.0).contains(&self.mask_ratio) {
            return bad("mask_ratio must be in [0, 1)");
        }
        if self.masked_patches() >= self.n_patches() {
            return bad("mask_ratio would mask every patch");
        }
        Ok(())
    }
}

fn masked_count(n_patches: usize, ratio: f64) -> usize {
    (libm::round(ratio * n_patches as f64) as usize).min(n_patches)
}

/// Bilinear resampling of `crop` onto an `out × out` grid. Corner cell centers
/// map onto corner cell centers, so linear fields are reproduced exactly.
pub fn resample(raster: &Raster<'_>, crop: CropBox, out: usize) -> Vec<f64> {
    let coord = |i: usize, start: usize, len: usize| -> (usize, usize, f64) {
        if len <= 1 || out <= 1 {
            return (start, start, 0.0);
        }
        let s = i as f64 * (len - 1) as f64 / (out - 1) as f64;
        let lo = (libm::floor(s) as usize).min(len - 1);
        let hi = (lo + 1).min(len - 1);
        (start + lo, start + hi, s - lo as f64)
    };
    let rows: Vec<_> = (0..out).map(|i| coord(i, crop.row, crop.height)).collect();
    let cols: Vec<_> = (0..out).map(|j| coord(j, crop.col, crop.width)).collect();
    let mut values = Vec::with_capacity(raster.channels * out * out);
    for c in 0..raster.channels {
        for &(r0, r1, fy) in &rows {
            for &(c0, c1, fx) in &cols {
                let top = raster.at(c, r0, c0) * (1.0 - fx) + raster.at(c, r0, c1) * fx;
                let bottom = raster.at(c, r1, c0) * (1.0 - fx) + raster.at(c, r1, c1) * fx;
                values.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    values
}

/// Random axis-aligned crop with area fraction from `scale` and aspect ratio
/// (width/height) from `aspect`, resampled to `out_size × out_size`.
pub fn random_resized_crop(
    raster: &Raster<'_>,
    scale: Interval,
    aspect: Interval,
    out_size: usize,
    rng: &mut Rng,
) -> View {
    let (h_full, w_full) = (raster.height, raster.width);
    let area = scale.sample(rng) * (h_full * w_full) as f64;
    let ratio = aspect.sample(rng);
    let clip = |x: f64, full: usize| (libm::round(x) as usize).clamp(2.min(full), full);
    let width = clip(libm::sqrt(area * ratio), w_full);
    let height = clip(libm::sqrt(area / ratio), h_full);
    let row = rng.random_range(0..=h_full - height);
    let col = rng.random_range(0..=w_full - width);
    let crop = CropBox { row, col, height, width };
    View {
        side: out_size,
        channels: raster.channels,
        values: resample(raster, crop, out_size),
        mask: Vec::new(),
        crop,
        kind: ViewKind::Target,
    }
}

/// Whole-field view used at inference time.
pub fn full_view(raster: &Raster<'_>, out_size: usize, patch_size: usize) -> View {
    let crop = CropBox {
        row: 0,
        col: 0,
        height: raster.height,
        width: raster.width,
    };
    let g = out_size / patch_size;
    View {
        side: out_size,
        channels: raster.channels,
        values: resample(raster, crop, out_size),
        mask: alloc::vec![false; g * g],
        crop,
        kind: ViewKind::Target,
    }
}

/// Masks `round(ratio · n_patches)` distinct patches chosen uniformly and
/// zeroes their values.
pub fn mask_patches(mut view: View, patch_size: usize, ratio: f64, rng: &mut Rng) -> View {
    let g = view.side / patch_size;
    let n = g * g;
    view.mask = alloc::vec![false; n];
    let k = masked_count(n, ratio);
    for p in rand::seq::index::sample(rng, n, k) {
        view.mask[p] = true;
        let (pr, pc) = (p / g, p % g);
        for c in 0..view.channels {
            for r in pr * patch_size..(pr + 1) * patch_size {
                let start = (c * view.side + r) * view.side + pc * patch_size;
                view.values[start..start + patch_size].fill(0.0);
            }
        }
    }
    view.kind = ViewKind::Anchor;
    view
}

/// One unmasked target view and `cfg.n_anchors` masked anchor views.
pub fn make_views(raster: &Raster<'_>, cfg: &ViewConfig, rng: &mut Rng) -> (View, Vec<View>) {
    let g = cfg.out_size / cfg.patch_size;
    let mut target = random_resized_crop(raster, cfg.target_scale, cfg.aspect_ratio, cfg.out_size, rng);
    target.mask = alloc::vec![false; g * g];
    let anchors = (0..cfg.n_anchors)
        .map(|_| {
            let v = random_resized_crop(raster, cfg.anchor_scale, cfg.aspect_ratio, cfg.out_size, rng);
            mask_patches(v, cfg.patch_size, cfg.mask_ratio, rng)
        })
        .collect();
    (target, anchors)
}
