//! Pipeline configuration, read from JSON.
//!
//! Relative paths inside a config file are resolved against the directory
//! holding that file.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use regime_core::encoder::EncoderConfig;
use regime_core::grid::BoundingBox;
use regime_core::msn::TrainConfig;
use regime_core::regimes::default_quantile_grid;
use regime_core::synth::SyntheticSpec;
use regime_core::teleconnection::{LagRange, Period, DEFAULT_N_MIN};
use regime_core::views::ViewConfig;

use crate::error::{Result, ToolError};
use crate::formats::SeriesFormat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    File { path: PathBuf, format: SeriesFormat },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsoConfig {
    pub threshold: f64,
    pub persistence: usize,
}

impl Default for EnsoConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            persistence: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataSource,
    #[serde(default)]
    pub bbox: Option<BoundingBox>,
    #[serde(default)]
    pub test_years: BTreeSet<i32>,
    #[serde(default)]
    pub views: ViewConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Required for file data; synthetic data carries its own ONI.
    #[serde(default)]
    pub oni_path: Option<PathBuf>,
    #[serde(default)]
    pub enso: EnsoConfig,
    #[serde(default)]
    pub lags: LagRange,
    /// Empty means one period `all` spanning the labelled years.
    #[serde(default)]
    pub periods: Vec<Period>,
    #[serde(default = "default_quantile_grid")]
    pub quantile_grid: Vec<f64>,
    #[serde(default = "default_n_min")]
    pub n_min: u64,
    /// Running-mean window in months.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_n_groups")]
    pub n_groups: usize,
    /// Clusters listed per period in the report summary.
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Overrides both the training seed and the synthetic seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_n_min() -> u64 {
    DEFAULT_N_MIN
}
fn default_window() -> usize {
    13
}
fn default_n_groups() -> usize {
    4
}
fn default_top_n() -> usize {
    3
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line overrides applied after loading.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl PipelineConfig {
    /// Config with defaults everywhere except the data source.
    pub fn new(data: DataSource) -> Self {
        serde_json::from_value(serde_json::json!({ "data": data })).expect("defaults deserialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ToolError::config(format!("config: {e}")))
    }

    /// Reads, resolves relative paths and validates.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| ToolError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let DataSource::File { path, .. } = &mut self.data {
            *path = base.join(&*path);
        }
        if let Some(p) = &mut self.oni_path {
            *p = base.join(&*p);
        }
        self.output_dir = base.join(&self.output_dir);
    }

    /// Applies overrides and folds the top-level seed into the nested ones.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(e) = o.epochs {
            self.train.epochs = e;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(s) = self.seed {
            self.train.seed = s;
            if let DataSource::Synthetic(spec) = &mut self.data {
                spec.seed = s;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        self.views.validate()?;
        self.train.validate()?;
        self.encoder.dims(self.views.patch_size, 1).validate()?;
        self.lags.validate()?;
        if self.quantile_grid.windows(2).any(|w| w[0] >= w[1]) || self.quantile_grid.iter().any(|q| !(*q > 0.0 && *q < 1.0))
        {
            return Err(ToolError::config("quantile_grid must be strictly increasing within (0, 1)"));
        }
        if self.window == 0 || self.window % 2 == 0 {
            return Err(ToolError::config("window must be odd"));
        }
        if self.n_groups == 0 {
            return Err(ToolError::config("n_groups must be >= 1"));
        }
        if !(self.enso.threshold > 0.0) || self.enso.persistence == 0 {
            return Err(ToolError::config("enso threshold must be positive and persistence >= 1"));
        }
        if let Some(p) = self.periods.iter().find(|p| p.years.is_empty()) {
            return Err(ToolError::config(format!("period {} is empty", p.label)));
        }
        let mut labels = BTreeSet::new();
        if let Some(p) = self.periods.iter().find(|p| !labels.insert(&p.label)) {
            return Err(ToolError::config(format!("duplicate period label {}", p.label)));
        }
        if matches!(self.data, DataSource::File { .. }) && self.oni_path.is_none() {
            return Err(ToolError::config("oni_path is required for file data"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_synthetic_config_gets_defaults() {
        let cfg = PipelineConfig::from_json(
            r#"{"data": {"synthetic": {
                "geometry": {"lat_min": 0, "lat_max": 1, "lon_min": 0, "lon_max": 1,
                             "resolution": 1, "height": 2, "width": 2},
                "n_regimes": 3, "years": {"start": 1990, "end": 1991},
                "enso_coupled_regime": 0, "coupling_strength": 0.2,
                "seasonal_amplitude": 1, "noise_sigma": 0.5, "seed": 1}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.n_min, 30);
        assert_eq!(cfg.window, 13);
        assert_eq!(cfg.train.n_prototypes, 30);
        assert_eq!(cfg.quantile_grid, default_quantile_grid());
        cfg.validate().unwrap();
    }

    #[test]
    fn seed_override_reaches_train_and_synth() {
        let spec = SyntheticSpec::new(
            regime_core::grid::GridGeometry::new(0.0, 0.0, 1.0, 2, 2).unwrap(),
            3,
            regime_core::calendar::YearRange::new(1990, 1990),
            1,
        );
        let mut cfg = PipelineConfig::new(DataSource::Synthetic(spec));
        cfg.apply(&Overrides {
            seed: Some(42),
            epochs: Some(0),
            output_dir: None,
        });
        assert_eq!(cfg.train.seed, 42);
        assert_eq!(cfg.train.epochs, 0);
        match cfg.data {
            DataSource::Synthetic(s) => assert_eq!(s.seed, 42),
            _ => unreachable!(),
        }
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(PipelineConfig::from_json(r#"{"data": {"file": {"path": "x", "format": "csv_long"}}, "bogus": 1}"#).is_err());
    }

    #[test]
    fn file_data_needs_oni() {
        let cfg = PipelineConfig::from_json(r#"{"data": {"file": {"path": "x", "format": "csv_long"}}}"#).unwrap();
        assert!(matches!(cfg.validate(), Err(ToolError::Config(_))));
    }
}
