//! Run configuration: built-in presets, config-file loading, and the
//! precedence rules (defaults < file < flags).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::AugmentConfig;
use crate::error::{Error, Result};
use crate::modes::ModeConfig;
use crate::nn::TrainConfig;
use crate::space::SpaceConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 256x256 images, M=32, K=5, reduced hidden widths; runs on a desktop
    /// CPU in minutes.
    Desk,
    /// Full-scale defaults (2048x2048, M=144, K=15, wide hidden layers).
    Paper,
}

/// Complete parameter set of a run. Every field has a default matching the
/// published value where one exists; presets override scale-dependent
/// fields; a config file and command-line flags refine from there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    /// Worker-thread cap; None uses all cores.
    pub jobs: Option<usize>,

    pub image_dims: (usize, usize),
    pub landmark_count: usize,
    pub bit_depth: u8,

    pub space: SpaceConfig,
    /// Negatives kept per positive when training the space detectors.
    pub space_balance_ratio: f64,
    pub line_hidden: Vec<usize>,
    pub orientation_hidden: Vec<usize>,
    /// dAE pre-training parameters.
    pub sdae: TrainConfig,
    /// Fine-tuning parameters.
    pub dnn: TrainConfig,

    pub energy_fraction: f64,
    /// Modes estimated at segmentation time.
    pub modes: usize,
    pub mode: ModeConfig,
    /// Negatives kept per positive when training the mode detectors.
    pub mode_balance_ratio: f64,
    pub mode_hidden: Vec<usize>,
    /// Fixed aspect-ratio threshold; None fits the two-component mixture.
    pub aspect_threshold: Option<f64>,
    /// Group models are built only when a two-group split succeeds and
    /// both groups hold at least this many shapes.
    pub min_group_size: usize,

    pub augment: AugmentConfig,
}

impl RunConfig {
    pub fn paper() -> Self {
        let image_dims = (2048, 2048);
        RunConfig {
            preset: Preset::Paper,
            seed: 7,
            jobs: None,
            image_dims,
            landmark_count: 144,
            bit_depth: 12,
            space: SpaceConfig {
                r: 7,
                top_n: 10,
                theta_step: 0.0017,
                theta_range: 0.26,
                dtheta_pos: 0.017,
                dtheta_neg: 0.034,
                crop_side: 64,
                neg_ratio: 8,
                image_dims,
            },
            space_balance_ratio: 2.5,
            line_hidden: vec![800, 400],
            orientation_hidden: vec![800, 400],
            sdae: TrainConfig {
                learning_rate: 0.001,
                batch_size: 1000,
                epochs: 100,
                corruption_rate: 0.25,
                seed: 7,
            },
            dnn: TrainConfig {
                learning_rate: 0.1,
                batch_size: 1000,
                epochs: 100,
                corruption_rate: 0.0,
                seed: 7,
            },
            energy_fraction: 0.95,
            modes: 15,
            mode: ModeConfig {
                q: 15,
                scan_step: 0.05,
                top_n: 10,
                grid_step: 0.25,
                exclusion: 0.25,
                bound: 3.0,
            },
            mode_balance_ratio: 1.0,
            mode_hidden: vec![1600, 800],
            aspect_threshold: None,
            min_group_size: 4,
            augment: AugmentConfig {
                horizontal_flips: true,
                vertical_flips: true,
                intensity_copies: 1,
                alpha_sigma: 0.1,
                pca_components: 8,
                seed: 7,
            },
        }
    }

    pub fn desk() -> Self {
        let image_dims = (256, 256);
        RunConfig {
            preset: Preset::Desk,
            image_dims,
            landmark_count: 32,
            space: SpaceConfig {
                image_dims,
                ..RunConfig::paper().space
            },
            line_hidden: vec![48, 24],
            orientation_hidden: vec![48, 24],
            sdae: TrainConfig {
                learning_rate: 0.1,
                batch_size: 32,
                epochs: 15,
                corruption_rate: 0.25,
                seed: 7,
            },
            dnn: TrainConfig {
                learning_rate: 0.1,
                batch_size: 32,
                epochs: 150,
                corruption_rate: 0.0,
                seed: 7,
            },
            modes: 5,
            mode: ModeConfig {
                q: 9,
                ..RunConfig::paper().mode
            },
            mode_hidden: vec![64, 32],
            ..RunConfig::paper()
        }
    }

    pub fn from_preset(preset: Preset) -> Self {
        match preset {
            Preset::Desk => RunConfig::desk(),
            Preset::Paper => RunConfig::paper(),
        }
    }

    /// Applies a partial JSON config file on top of this configuration.
    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut value = serde_json::to_value(&*self)?;
        let overlay: serde_json::Value = serde_json::from_str(&text)?;
        merge_json(&mut value, overlay);
        *self = serde_json::from_value(value)?;
        self.validate()
    }

    /// Propagates the top-level seed into the nested training configs and
    /// re-pins image dims into the space config.
    pub fn finalize(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.sdae.seed = self.seed;
        self.dnn.seed = self.seed;
        self.augment.seed = self.seed;
        self.space.image_dims = self.image_dims;
    }

    pub fn validate(&self) -> Result<()> {
        if self.landmark_count < 6 || self.landmark_count % 2 != 0 {
            return Err(Error::Config(
                "landmark count must be even and at least 6".into(),
            ));
        }
        if !(self.energy_fraction > 0.0 && self.energy_fraction <= 1.0) {
            return Err(Error::Config("energy fraction outside (0, 1]".into()));
        }
        self.sdae.validate()?;
        self.dnn.validate()?;
        self.mode.validate()?;
        if self.line_hidden.is_empty() || self.mode_hidden.is_empty() {
            return Err(Error::Config("hidden layer lists cannot be empty".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

fn merge_json(base: &mut serde_json::Value, overlay: serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
