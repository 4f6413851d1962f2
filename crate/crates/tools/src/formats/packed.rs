//! JSON header, one newline, then a raw little-endian payload.
//!
//! Series payloads are `f32` in `[day][channel][lat][lon]` order with NaN in
//! missing cells. Checkpoints use the same framing with an `f64` payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use regime_core::encoder::{EncoderDims, EncoderParams};
use regime_core::grid::{BoundingBox, ChannelStats, DailyField, DailyFieldSeries, GridGeometry};
use regime_core::msn::PrototypeBank;

use crate::error::{Result, ToolError};

const SERIES_KIND: &str = "daily_field_series";
const CHECKPOINT_KIND: &str = "checkpoint";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeriesHeader {
    kind: String,
    geometry: GridGeometry,
    channels: Vec<String>,
    dates: Vec<NaiveDate>,
    dtype: String,
    order: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    channel_stats: Option<ChannelStats>,
}

fn split_frame<'a>(bytes: &'a [u8], path: &Path) -> Result<(&'a [u8], &'a [u8])> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| ToolError::data(format!("{}: missing header terminator", path.display())))?;
    Ok((&bytes[..nl], &bytes[nl + 1..]))
}

fn parse_header<T: DeserializeOwned>(raw: &[u8], path: &Path) -> Result<T> {
    serde_json::from_slice(raw).map_err(|e| ToolError::data(format!("{}: malformed header: {e}", path.display())))
}

fn write_frame(path: &Path, header: &impl Serialize, payload: &[u8]) -> Result<()> {
    let mut out = serde_json::to_vec(header)?;
    out.push(b'\n');
    out.extend_from_slice(payload);
    let mut f = fs::File::create(path).map_err(|e| ToolError::io(path, e))?;
    f.write_all(&out).map_err(|e| ToolError::io(path, e))
}

pub fn write_series(path: &Path, series: &DailyFieldSeries) -> Result<()> {
    let header = SeriesHeader {
        kind: SERIES_KIND.into(),
        geometry: series.geometry,
        channels: series.channels.clone(),
        dates: series.dates().collect(),
        dtype: "f32".into(),
        order: "day,channel,lat,lon".into(),
        channel_stats: series.channel_stats.clone(),
    };
    let cells = series.geometry.cells();
    let mut payload = Vec::with_capacity(series.len() * series.n_channels() * cells * 4);
    for f in &series.fields {
        for (i, &v) in f.values.iter().enumerate() {
            let x = if f.missing[i % cells] { f32::NAN } else { v as f32 };
            payload.extend_from_slice(&x.to_le_bytes());
        }
    }
    write_frame(path, &header, &payload)
}

/// A cell is missing when any of its channels is NaN; all its values then read as NaN.
pub fn read_series(path: &Path) -> Result<DailyFieldSeries> {
    let bytes = fs::read(path).map_err(|e| ToolError::io(path, e))?;
    let (raw, payload) = split_frame(&bytes, path)?;
    let header: SeriesHeader = parse_header(raw, path)?;
    if header.kind != SERIES_KIND || header.dtype != "f32" {
        return Err(ToolError::data(format!(
            "{}: expected a f32 {SERIES_KIND} file",
            path.display()
        )));
    }
    let g = header.geometry;
    let g = GridGeometry::new(g.lat_min, g.lon_min, g.resolution, g.height, g.width)?;
    let cells = g.cells();
    let per_day = header.channels.len() * cells;
    if payload.len() != header.dates.len() * per_day * 4 {
        return Err(ToolError::data(format!(
            "{}: payload has {} bytes, header implies {}",
            path.display(),
            payload.len(),
            header.dates.len() * per_day * 4
        )));
    }
    let mut fields = Vec::with_capacity(header.dates.len());
    for (d, chunk) in header.dates.iter().zip(payload.chunks_exact(per_day * 4)) {
        let mut values: Vec<f64> = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let missing: Vec<bool> = (0..cells)
            .map(|c| (0..header.channels.len()).any(|ch| values[ch * cells + c].is_nan()))
            .collect();
        for (i, v) in values.iter_mut().enumerate() {
            if missing[i % cells] {
                *v = f64::NAN;
            }
        }
        fields.push(DailyField {
            date: *d,
            values,
            missing,
        });
    }
    let mut series = DailyFieldSeries::new(g, header.channels, fields)?;
    series.channel_stats = header.channel_stats;
    Ok(series)
}

/// Trained model plus everything inference needs to reproduce its input.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub anchor: EncoderParams,
    pub target: EncoderParams,
    pub bank: PrototypeBank,
    pub channel_stats: ChannelStats,
    pub channels: Vec<String>,
    pub bbox: Option<BoundingBox>,
    pub out_size: usize,
    pub patch_size: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    kind: String,
    dtype: String,
    dims: EncoderDims,
    n_prototypes: usize,
    channels: Vec<String>,
    channel_stats: ChannelStats,
    bbox: Option<BoundingBox>,
    out_size: usize,
    patch_size: usize,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
}

fn tensor_entries(dims: &EncoderDims, k: usize) -> Vec<TensorEntry> {
    let mut out = Vec::new();
    for prefix in ["anchor", "target"] {
        for (name, shape, _) in dims.layout() {
            out.push(TensorEntry {
                name: format!("{prefix}.{name}"),
                shape,
            });
        }
    }
    out.push(TensorEntry {
        name: "prototypes".into(),
        shape: [k, dims.latent],
    });
    out
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let header = CheckpointHeader {
        kind: CHECKPOINT_KIND.into(),
        dtype: "f64".into(),
        dims: ckpt.anchor.dims,
        n_prototypes: ckpt.bank.k,
        channels: ckpt.channels.clone(),
        channel_stats: ckpt.channel_stats.clone(),
        bbox: ckpt.bbox,
        out_size: ckpt.out_size,
        patch_size: ckpt.patch_size,
        tensors: tensor_entries(&ckpt.anchor.dims, ckpt.bank.k),
    };
    let mut payload = Vec::new();
    for x in ckpt.anchor.data.iter().chain(&ckpt.target.data).chain(&ckpt.bank.data) {
        payload.extend_from_slice(&x.to_le_bytes());
    }
    write_frame(path, &header, &payload)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| ToolError::io(path, e))?;
    let (raw, payload) = split_frame(&bytes, path)?;
    let header: CheckpointHeader = parse_header(raw, path)?;
    if header.kind != CHECKPOINT_KIND || header.dtype != "f64" || header.n_prototypes == 0 {
        return Err(ToolError::data(format!("{}: not a f64 checkpoint", path.display())));
    }
    header.dims.validate()?;
    let n_enc = header.dims.n_params();
    let n_bank = header.n_prototypes * header.dims.latent;
    if payload.len() != (2 * n_enc + n_bank) * 8 {
        return Err(ToolError::data(format!("{}: payload size mismatch", path.display())));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    let anchor = EncoderParams {
        dims: header.dims,
        data: values[..n_enc].to_vec(),
    };
    let target = EncoderParams {
        dims: header.dims,
        data: values[n_enc..2 * n_enc].to_vec(),
    };
    // Built directly: re-normalizing would perturb the stored rows in the last bit.
    let bank = PrototypeBank {
        k: header.n_prototypes,
        dim: header.dims.latent,
        data: values[2 * n_enc..].to_vec(),
    };
    Ok(Checkpoint {
        anchor,
        target,
        bank,
        channel_stats: header.channel_stats,
        channels: header.channels,
        bbox: header.bbox,
        out_size: header.out_size,
        patch_size: header.patch_size,
    })
}
