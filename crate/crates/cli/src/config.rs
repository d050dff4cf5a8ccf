use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use propwake::dataset::{WindowOptions, DEFAULT_BASELINE_LEN};
use propwake::estimator::{ModelConfig, TaskWeights, TrainConfig};
use propwake::hashing::config_hash;
use propwake::wake::{ScenarioGrid, SensorGeometry, WakeModel};
use propwake::woa::WoaConfig;
use serde::{Deserialize, Serialize};

/// Invalid configuration or arguments; maps to exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ConfigError(msg.into()))
}

/// Longitudinal offset of each experimental case.
pub fn case_offset_mm(case: u8) -> Option<f64> {
    match case {
        1 => Some(250.0),
        2 => Some(300.0),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetOptions {
    pub sl: usize,
    pub stride: usize,
    pub baseline_len: usize,
    pub split_ratio: f64,
    pub split_seed: u64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions { sl: 64, stride: 1, baseline_len: DEFAULT_BASELINE_LEN, split_ratio: 0.9, split_seed: 1 }
    }
}

impl DatasetOptions {
    pub fn window_options(&self) -> WindowOptions {
        WindowOptions { sl: self.sl, stride: self.stride, baseline_len: self.baseline_len }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneOptions {
    pub woa: WoaConfig,
    pub proxy_epochs: usize,
    /// Random-weight trainings the tuned weights are compared against.
    pub baselines: usize,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions { woa: WoaConfig::default(), proxy_epochs: 20, baselines: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepeatOptions {
    pub seeds: Vec<u64>,
}

impl Default for RepeatOptions {
    fn default() -> Self {
        RepeatOptions { seeds: vec![0, 1, 2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    pub seq_lens: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { seq_lens: vec![32, 48, 64, 80], seeds: vec![0, 1, 2] }
    }
}

/// Everything a command needs. `model.seq_len`, `model.sensors` and
/// `model.speed_classes` are derived from the dataset, geometry and grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// Training seed (model init, shuffling, dropout).
    pub seed: u64,
    /// Restricts the grid to one longitudinal offset: 1 = 250 mm, 2 = 300 mm.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case: Option<u8>,
    pub repeats: usize,
    /// Run a weight search before `train` and use the best weights.
    pub tune_weights: bool,
    pub grid: ScenarioGrid,
    pub geometry: SensorGeometry,
    pub wake: WakeModel,
    pub dataset: DatasetOptions,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub weights: TaskWeights,
    pub tune: TuneOptions,
    pub ablate: RepeatOptions,
    pub sweep: SweepOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("runs/default"),
            seed: 0,
            case: None,
            repeats: 10,
            tune_weights: false,
            grid: ScenarioGrid::default(),
            geometry: SensorGeometry::default(),
            wake: WakeModel::default(),
            dataset: DatasetOptions::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            weights: TaskWeights::default(),
            tune: TuneOptions::default(),
            ablate: RepeatOptions::default(),
            sweep: SweepOptions::default(),
        }
    }
}

/// Command-line values that replace config fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub sl: Option<usize>,
    pub case: Option<u8>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_error(format!("invalid config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing config")
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(sl) = o.sl {
            self.dataset.sl = sl;
        }
        if o.case.is_some() {
            self.case = o.case;
        }
        self
    }

    /// Fills derived fields and checks the data sections.
    pub fn resolve(mut self) -> Result<Self> {
        if let Some(case) = self.case {
            let y = case_offset_mm(case).ok_or_else(|| config_error(format!("case must be 1 or 2, got {case}")))?;
            self.grid.offsets_mm = vec![y];
        }
        self.model.seq_len = self.dataset.sl;
        self.model.sensors = self.geometry.count();
        self.model.speed_classes = self.grid.speeds_mm_s.len();
        self.train.seed = self.seed;
        self.validate_data()?;
        Ok(self)
    }

    /// Checks what corpus generation and windowing need.
    pub fn validate_data(&self) -> Result<()> {
        let wrap = |e: propwake::Error| config_error(e.to_string());
        if self.repeats == 0 {
            return Err(config_error("repeats must be at least 1"));
        }
        if self.grid.offsets_mm.is_empty() || self.grid.speeds_mm_s.is_empty() || self.grid.directions.is_empty() {
            return Err(config_error("scenario grid has an empty axis"));
        }
        for sc in self.grid.scenarios() {
            sc.validate().map_err(wrap)?;
        }
        self.geometry.validate().map_err(wrap)?;
        let d = &self.dataset;
        if d.sl == 0 || d.stride == 0 {
            return Err(config_error("sl and stride must be positive"));
        }
        if !(d.split_ratio > 0.0 && d.split_ratio < 1.0) {
            return Err(config_error(format!("split_ratio {} must lie in (0, 1)", d.split_ratio)));
        }
        Ok(())
    }

    /// Checks the model, training, weight and experiment sections.
    pub fn validate_training(&self) -> Result<()> {
        let wrap = |e: propwake::Error| config_error(e.to_string());
        if self.grid.directions.len() != self.model.direction_classes {
            return Err(config_error(format!(
                "{} directions in the grid but {} direction classes in the model",
                self.grid.directions.len(),
                self.model.direction_classes
            )));
        }
        self.model.validate().map_err(wrap)?;
        if self.train.batch_size == 0 || !(self.train.lr > 0.0) {
            return Err(config_error("batch_size and lr must be positive"));
        }
        self.weights.validate().map_err(wrap)?;
        self.tune.woa.validate().map_err(wrap)?;
        if self.tune.woa.dim() != 3 {
            return Err(config_error("tune.woa bounds must be 3-dimensional"));
        }
        if self.ablate.seeds.is_empty() || self.sweep.seeds.is_empty() {
            return Err(config_error("seed lists must not be empty"));
        }
        if self.sweep.seq_lens.is_empty() || self.sweep.seq_lens.contains(&0) {
            return Err(config_error("sweep.seq_lens must be non-empty and positive"));
        }
        for &sl in &self.sweep.seq_lens {
            ModelConfig { seq_len: sl, ..self.model.clone() }.validate().map_err(wrap)?;
        }
        Ok(())
    }

    /// Hash of everything except the output directory.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        Ok(config_hash(&c)?)
    }

    /// Hash of the fields that determine the windowed dataset.
    pub fn data_hash(&self) -> Result<String> {
        Ok(config_hash(&(&self.grid, &self.geometry, &self.wake, &self.dataset, self.repeats))?)
    }

    pub fn with_sl(&self, sl: usize) -> Self {
        let mut c = self.clone();
        c.dataset.sl = sl;
        c.model.seq_len = sl;
        c
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c.train.seed = seed;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default().resolve().unwrap();
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = RunConfig::from_toml("seed = 5\n[train]\nepochs = 3\n").unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.dataset.sl, 64);
    }

    #[test]
    fn unknown_field_is_a_config_error() {
        let err = RunConfig::from_toml("sede = 5\n").unwrap_err();
        assert!(err.downcast_ref::<ConfigError>().is_some());
    }

    #[test]
    fn overrides_and_case() {
        let o = Overrides { seed: Some(9), sl: Some(32), case: Some(2), out_dir: Some("x".into()) };
        let cfg = RunConfig::default().apply(&o).resolve().unwrap();
        assert_eq!(cfg.grid.offsets_mm, vec![300.0]);
        assert_eq!(cfg.model.seq_len, 32);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.out_dir, PathBuf::from("x"));
    }

    #[test]
    fn invalid_values_are_rejected() {
        for o in [Overrides { case: Some(3), ..Default::default() }, Overrides { sl: Some(4), ..Default::default() }] {
            let err = RunConfig::default().apply(&o).resolve().and_then(|c| c.validate_training()).unwrap_err();
            assert!(err.downcast_ref::<ConfigError>().is_some(), "{err}");
        }
        let cfg = RunConfig { repeats: 0, ..RunConfig::default() };
        assert!(cfg.resolve().is_err());
    }
}
