//! Experiment configuration, read from TOML.
//!
//! ```toml
//! task = "inpainting"            # or "pansharpening"
//! seed = 0
//! out_dir = "runs/example"
//!
//! [data]
//! source = "synthetic"           # or a directory of PNG / TIFF images
//! count = 25                     # synthetic scenes
//! channels = 3
//! tile = 128
//! train_fraction = 0.8
//!
//! [physics]
//! masked_fraction = 0.7          # inpainting
//! factor = 4                     # pansharpening resolution ratio
//! noise = { kind = "poisson", gain = 0.02 }
//!
//! [model]
//! hidden = 16
//! blocks = 4
//!
//! [loss]
//! terms = "mc+ei"
//! group = "pan_tilt"
//! alpha = 0.1
//!
//! [optim]
//! epochs = 200
//! lr = 1e-3
//! ```

use std::path::{Path, PathBuf};

use pei_core::autodiff::{AdamConfig, Padding};
use pei_core::losses::LossConfig;
use pei_core::models::{ReconNetConfig, Task};
use pei_core::physics::{NoiseModel, Srf};
use pei_core::synth::SceneConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub model: ModelConfig,
    pub loss: LossConfig,
    #[serde(default)]
    pub optim: OptimConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// `"synthetic"` or a directory of source images.
    pub source: String,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default = "default_tile")]
    pub tile: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Seed of the train/test shuffle; the global seed when absent.
    #[serde(default)]
    pub split_seed: Option<u64>,
    /// Keep clean tiles for reference metrics.
    #[serde(default = "yes")]
    pub keep_reference: bool,
    #[serde(default)]
    pub scene: SceneConfig,
}

fn default_count() -> usize {
    25
}
fn default_channels() -> usize {
    3
}
fn default_tile() -> usize {
    128
}
fn default_train_fraction() -> f64 {
    0.8
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub masked_fraction: f64,
    pub factor: usize,
    /// MTF standard deviation; the resolution ratio when absent.
    pub mtf_sigma: Option<f64>,
    /// Per-band pan weights; flat when absent.
    pub srf: Option<Vec<f64>>,
    pub noise: NoiseModel,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            masked_fraction: 0.7,
            factor: 4,
            mtf_sigma: None,
            srf: None,
            noise: NoiseModel::None,
        }
    }
}

impl PhysicsConfig {
    pub fn mtf_sigma(&self) -> f64 {
        self.mtf_sigma.unwrap_or(self.factor as f64)
    }

    pub fn srf(&self, channels: usize) -> CliResult<Srf<f32>> {
        match &self.srf {
            None => Ok(Srf::flat(channels)),
            Some(w) if w.len() == channels => {
                Ok(Srf::new(w.iter().map(|&v| v as f32).collect()).map_err(|e| CliError::Config(e.to_string()))?)
            }
            Some(w) => Err(CliError::Config(format!("srf has {} weights for {channels} channels", w.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub blocks: usize,
    pub kernel_size: usize,
    pub highpass_size: usize,
    pub padding: Padding,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let d = ReconNetConfig::inpainting(1);
        Self {
            hidden: d.hidden,
            blocks: d.blocks,
            kernel_size: d.kernel_size,
            highpass_size: d.highpass_size,
            padding: d.padding,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub lr_decay: f64,
    /// The learning rate is multiplied by `lr_decay` after every this many epochs.
    pub decay_every_epochs: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self {
            epochs: 200,
            batch_size: 1,
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            weight_decay: a.weight_decay,
            lr_decay: a.lr_decay,
            decay_every_epochs: 1,
        }
    }
}

impl OptimConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
            lr_decay: self.lr_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Psnr,
    Ssim,
    Ergas,
    Qnr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub metrics: Vec<MetricKind>,
    pub peak: f64,
    pub write_images: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metrics: vec![MetricKind::Psnr, MetricKind::Ssim, MetricKind::Ergas, MetricKind::Qnr],
            peak: 1.0,
            write_images: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn model_config(&self) -> ReconNetConfig {
        ReconNetConfig {
            task: self.task,
            channels: self.data.channels,
            hidden: self.model.hidden,
            blocks: self.model.blocks,
            kernel_size: self.model.kernel_size,
            highpass_size: self.model.highpass_size,
            factor: match self.task {
                Task::Inpainting => 1,
                Task::Pansharpening => self.physics.factor,
            },
            padding: self.model.padding,
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out_dir.join("data")
    }

    pub fn train_dir(&self) -> PathBuf {
        self.out_dir.join("train")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.out_dir.join("eval")
    }

    pub fn split_seed(&self) -> u64 {
        self.data.split_seed.unwrap_or(self.seed)
    }

    pub fn source_dir(&self) -> Option<PathBuf> {
        (self.data.source != "synthetic").then(|| PathBuf::from(&self.data.source))
    }

    /// Checks ranges and cross-field consistency; paths are checked by the
    /// subcommands that read them.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let d = &self.data;
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            return bad(format!("data.train_fraction must lie in (0, 1), got {}", d.train_fraction));
        }
        if d.channels == 0 || d.tile == 0 || d.count == 0 {
            return bad("data.channels, data.tile and data.count must be >= 1".into());
        }
        let p = &self.physics;
        match self.task {
            Task::Inpainting => {
                if !(0.0..1.0).contains(&p.masked_fraction) {
                    return bad(format!("physics.masked_fraction must lie in [0, 1), got {}", p.masked_fraction));
                }
            }
            Task::Pansharpening => {
                if p.factor == 0 || !d.tile.is_multiple_of(p.factor) {
                    return bad(format!("data.tile {} must be a multiple of physics.factor {}", d.tile, p.factor));
                }
                if !(p.mtf_sigma() > 0.0) {
                    return bad("physics.mtf_sigma must be > 0".into());
                }
                self.physics.srf(d.channels)?;
            }
        }
        p.noise.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.model_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.loss.validate(self.task).map_err(|e| CliError::Config(e.to_string()))?;
        if self.optim.batch_size == 0 || self.optim.decay_every_epochs == 0 {
            return bad("optim.batch_size and optim.decay_every_epochs must be >= 1".into());
        }
        self.optim.adam().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.eval.peak > 0.0) {
            return bad("eval.peak must be > 0".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
task = "pansharpening"
out_dir = "out"
[data]
source = "synthetic"
channels = 4
tile = 64
[loss]
terms = "mc+tv+ei"
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.physics.factor, 4);
        assert_eq!(cfg.physics.mtf_sigma(), 4.0);
        assert_eq!(cfg.optim.epochs, 200);
        assert_eq!(cfg.model_config().factor, 4);
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad_split = MINIMAL.replace("tile = 64", "tile = 64\ntrain_fraction = 1.0");
        assert!(matches!(ExperimentConfig::from_toml(&bad_split), Err(CliError::Config(_))));
        let bad_tile = MINIMAL.replace("tile = 64", "tile = 66");
        assert!(ExperimentConfig::from_toml(&bad_tile).is_err());
        let unknown = MINIMAL.replace("[loss]", "[loss]\nfoo = 1");
        assert!(ExperimentConfig::from_toml(&unknown).is_err());
        let inpaint_tv = MINIMAL.replace("pansharpening", "inpainting");
        assert!(ExperimentConfig::from_toml(&inpaint_tv).is_err());
    }
}
