//! Run configuration: one TOML file covering data generation, both
//! networks, training and evaluation, driven by a single global seed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{SyntheticConfig, WindowSpec, DEFAULT_RAIN_THRESHOLD};
use crate::evaluation::EvalConfig;
use crate::model::{BaselineConfig, ModelConfig};
use crate::seeds;
use crate::trainer::TrainConfig;
use crate::{Error, Result};

pub const RESOLVED_CONFIG_FILE: &str = "run_config.toml";

/// How synthetic sequences become samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub sequences: usize,
    /// Trailing share of sequences reserved for testing.
    pub test_fraction: f64,
    /// Keep every `thin`-th native frame.
    pub thin: usize,
    /// Spatial block-mean factor.
    pub downsample: usize,
    /// mm/h summed over every cell of every frame in a window.
    pub rain_threshold: f64,
    pub train_stride: usize,
    pub test_stride: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            sequences: 100,
            test_fraction: 0.2,
            thin: 3,
            downsample: 1,
            rain_threshold: DEFAULT_RAIN_THRESHOLD,
            train_stride: 1,
            test_stride: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Relative paths resolve against the `--out` directory.
    pub data_dir: PathBuf,
    pub runs_dir: PathBuf,
    pub forecasts_dir: PathBuf,
    pub eval_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            runs_dir: "runs".into(),
            forecasts_dir: "forecasts".into(),
            eval_dir: "eval".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub synthetic: SyntheticConfig,
    pub model: ModelConfig,
    pub baseline: BaselineConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    /// Full-size frames: 160×110 cells at 5 km, 15 min cadence after thinning.
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            synthetic: SyntheticConfig {
                height: 160,
                width: 110,
                resolution_km: 5.0,
                ..SyntheticConfig::default()
            },
            model: ModelConfig::default(),
            baseline: BaselineConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    /// 32×32 frames and reduced widths for a single CPU core.
    pub fn desk() -> Self {
        Self {
            data: DataConfig {
                sequences: 360,
                downsample: 2,
                train_stride: 9,
                ..DataConfig::default()
            },
            synthetic: SyntheticConfig::default(),
            model: ModelConfig::desk(),
            baseline: BaselineConfig::desk(),
            train: TrainConfig {
                max_epochs: 40,
                patience: 4,
                ..TrainConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Config(format!("config file {} not found", path.display())),
            _ => Error::io(path, e),
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Overwrite every component seed from the global seed and check that
    /// the sections agree with each other.
    pub fn resolve(mut self) -> Result<Self> {
        self.synthetic.seed = self.seed.wrapping_add(seeds::DATA_OFFSET);
        self.train.seed = self.seed.wrapping_add(seeds::TRAIN_OFFSET);
        self.eval.seed = self.seed.wrapping_add(seeds::FORECAST_OFFSET);
        self.validate()?;
        Ok(self)
    }

    pub fn svfp_init_seed(&self) -> u64 {
        self.seed.wrapping_add(seeds::SVFP_INIT_OFFSET)
    }

    pub fn baseline_init_seed(&self) -> u64 {
        self.seed.wrapping_add(seeds::BASELINE_INIT_OFFSET)
    }

    /// Seed of synthetic sequence `index`.
    pub fn sequence_seed(&self, index: usize) -> u64 {
        seeds::derive(self.synthetic.seed, 0, index as u64)
    }

    pub fn frame_dims(&self) -> (usize, usize) {
        let f = self.data.downsample.max(1);
        (self.synthetic.height.div_ceil(f), self.synthetic.width.div_ceil(f))
    }

    pub fn train_window(&self) -> WindowSpec {
        WindowSpec {
            n_inputs: self.model.n_inputs,
            n_targets: 1,
            stride: self.data.train_stride,
        }
    }

    pub fn test_window(&self) -> WindowSpec {
        WindowSpec {
            n_inputs: self.model.n_inputs,
            n_targets: self.model.n_predict,
            stride: self.data.test_stride,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        self.model.validate()?;
        self.baseline.validate()?;
        self.train.validate()?;
        self.eval.validate()?;
        let d = &self.data;
        if d.thin == 0 || d.downsample == 0 || d.train_stride == 0 || d.test_stride == 0 {
            return Err(Error::Config("thin, downsample and strides must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&d.test_fraction) {
            return Err(Error::Config("test_fraction must lie in [0, 1)".into()));
        }
        if !(d.rain_threshold >= 0.0) {
            return Err(Error::Config("rain_threshold must be >= 0".into()));
        }
        let dims = self.frame_dims();
        if dims != (self.model.frame_height, self.model.frame_width)
            || dims != (self.baseline.frame_height, self.baseline.frame_width)
        {
            return Err(Error::Config(format!(
                "generated frames are {}x{} but the models expect {}x{} and {}x{}",
                dims.0,
                dims.1,
                self.model.frame_height,
                self.model.frame_width,
                self.baseline.frame_height,
                self.baseline.frame_width
            )));
        }
        if self.baseline.n_inputs != self.model.n_inputs {
            return Err(Error::Config("model and baseline disagree on n_inputs".into()));
        }
        if self.eval.n_predict > self.model.n_predict {
            return Err(Error::Config(format!(
                "evaluation horizon {} exceeds the {} target frames stored per test sample",
                self.eval.n_predict, self.model.n_predict
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// Write the resolved configuration next to a run's outputs.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RESOLVED_CONFIG_FILE);
        fs::write(&path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_published_constants() {
        let c = RunConfig::default();
        assert_eq!(c.model.beta, 1e-7);
        assert_eq!(c.train.learning_rate, 1e-3);
        assert_eq!((c.model.n_inputs, c.model.n_predict, c.model.latent_dim), (5, 10, 70));
        assert_eq!(c.eval.members, 10);
        assert_eq!(c.data.rain_threshold, 10_000.0);
        assert_eq!(c.train.validation_fraction, 0.1);
        c.clone().resolve().unwrap();
        RunConfig::desk().resolve().unwrap();
    }

    #[test]
    fn toml_roundtrip_and_unknown_keys() {
        let c = RunConfig::desk().resolve().unwrap();
        let back: RunConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(toml::from_str::<RunConfig>("sed = 3").is_err());
        assert!(toml::from_str::<RunConfig>("[train]\nlr = 0.1").is_err());
        let partial: RunConfig = toml::from_str("seed = 9\n[train]\nbatch_size = 4").unwrap();
        assert_eq!(partial.train.batch_size, 4);
        assert_eq!(partial.model, ModelConfig::default());
    }

    #[test]
    fn seeds_follow_global_seed() {
        let a = RunConfig { seed: 1, ..RunConfig::desk() }.resolve().unwrap();
        let b = RunConfig { seed: 2, ..RunConfig::desk() }.resolve().unwrap();
        assert_ne!(a.train.seed, b.train.seed);
        assert_ne!(a.sequence_seed(0), b.sequence_seed(0));
        assert_eq!(a.sequence_seed(3), RunConfig { seed: 1, ..RunConfig::desk() }.resolve().unwrap().sequence_seed(3));
    }

    #[test]
    fn mismatched_frame_size_is_rejected() {
        let mut c = RunConfig::desk();
        c.data.downsample = 1;
        assert!(matches!(c.resolve(), Err(Error::Config(_))));
    }
}
