use std::collections::HashSet;
use std::path::{Path, PathBuf};

use pei_core::models::Task;
use pei_core::physics::{ForwardOperator, InpaintingOperator, Measurement, PansharpeningOperator};
use pei_core::Image;
use serde::{Deserialize, Serialize};

use crate::config::PhysicsConfig;
use crate::error::{io_at, CliError, CliResult};
use crate::io;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One simulated tile; paths are relative to the manifest directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileEntry {
    pub id: String,
    pub split: Split,
    /// One file per measurement part: `[y]` or `[ms, pan]`.
    pub measurement: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub task: Task,
    pub channels: usize,
    pub tile: usize,
    pub physics: PhysicsConfig,
    pub tiles: Vec<TileEntry>,
}

/// A tile loaded into memory with its forward operator.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub op: ForwardOperator<f32>,
    pub y: Measurement<f32>,
    pub reference: Option<Image<f32>>,
}

impl DatasetManifest {
    pub fn validate(&self) -> CliResult<()> {
        let mut ids = HashSet::new();
        for t in &self.tiles {
            if !ids.insert(t.id.as_str()) {
                return Err(CliError::Config(format!("duplicate tile id `{}` in manifest", t.id)));
            }
            let parts = match self.task {
                Task::Inpainting => 1,
                Task::Pansharpening => 2,
            };
            if t.measurement.len() != parts {
                return Err(CliError::Config(format!("tile `{}` lists {} measurement files", t.id, t.measurement.len())));
            }
            if self.task == Task::Inpainting && t.mask.is_none() {
                return Err(CliError::Config(format!("inpainting tile `{}` has no mask", t.id)));
            }
        }
        Ok(())
    }

    pub fn ids(&self, split: Split) -> Vec<&str> {
        self.tiles.iter().filter(|t| t.split == split).map(|t| t.id.as_str()).collect()
    }

    pub fn save(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| io_at(&path, e))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| io_at(&path, e))
    }

    pub fn load(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| io_at(&path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| io_at(&path, e))?;
        m.validate()?;
        Ok(m)
    }

    fn pansharpening_operator(&self) -> CliResult<PansharpeningOperator<f32>> {
        let srf = self.physics.srf(self.channels)?;
        Ok(PansharpeningOperator::new(self.physics.factor, self.physics.mtf_sigma(), srf)?)
    }

    /// Reads every tile of `split` from `dir`, in manifest order.
    pub fn load_split(&self, dir: &Path, split: Split) -> CliResult<Vec<Sample>> {
        let shared = match self.task {
            Task::Pansharpening => Some(ForwardOperator::pansharpening(self.pansharpening_operator()?)),
            Task::Inpainting => None,
        };
        let resolve = |rel: &str| -> PathBuf { dir.join(rel) };
        let mut out = Vec::new();
        for t in self.tiles.iter().filter(|t| t.split == split) {
            let parts = t
                .measurement
                .iter()
                .map(|f| io::read_image(&resolve(f)))
                .collect::<CliResult<Vec<_>>>()?;
            let op = match &shared {
                Some(op) => op.clone(),
                None => {
                    let mask = io::read_mask(&resolve(t.mask.as_deref().unwrap_or_default()))?;
                    ForwardOperator::inpainting(InpaintingOperator::from_mask(mask, self.physics.masked_fraction)?)
                }
            };
            let reference = t.reference.as_deref().map(|f| io::read_image(&resolve(f))).transpose()?;
            out.push(Sample {
                id: t.id.clone(),
                op,
                y: Measurement::new(parts),
                reference,
            });
        }
        Ok(out)
    }
}
