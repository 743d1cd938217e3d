//! Dataset manifests, loaded training entries, augmentation, and the
//! synthetic benchmark generator.

mod augment;
mod synth;

pub use augment::{augment_entries, image_pca_basis, perturb_intensity, AugmentConfig, ImagePcaBasis};
pub use synth::{generate_synthetic_dataset, GroupSpec, SyntheticSpec};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{load_and_normalize, GrayImage};
use crate::shape::{Shape, SpaceParams};

/// One dataset entry: image plus its landmark annotation and optional
/// ground-truth sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_path: PathBuf,
    pub landmark_path: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<u32>,
    /// Physical spacing (sx, sy) mm/pixel.
    pub spacing: (f64, f64),
}

/// Dataset manifest written next to the images.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub target_dims: (usize, usize),
    pub bit_depth: u8,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Resolves a possibly relative entry path against the manifest's
    /// directory.
    pub fn resolve(&self, base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }
}

/// Per-image landmark annotation. Pixel coordinates, origin at the
/// top-left, x rightward, y downward.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LandmarkFile {
    pub image_path: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<u32>,
    pub primary: Vec<(f64, f64)>,
    pub landmarks: Vec<(f64, f64)>,
}

impl LandmarkFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn shape(&self) -> Result<Shape> {
        Shape::from_points(&self.landmarks)
    }
}

/// Ground-truth sidecar emitted by the synthetic generator.
///
/// `space_params` carry box semantics (center/size of the landmark
/// bounding box plus the drawn orientation); `raw_transform` is the exact
/// literal transform the landmarks were synthesized with, which makes
/// weight re-projection exact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub space_params: SpaceParams,
    pub raw_transform: SpaceParams,
    pub shape_weights: Vec<f64>,
    pub model_ref: PathBuf,
}

impl TruthSidecar {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Fully loaded training entry.
#[derive(Debug, Clone)]
pub struct LoadedEntry {
    /// Stem identifying the entry in reports.
    pub id: String,
    pub image: GrayImage,
    pub landmarks: Shape,
    pub group: Option<u32>,
    /// Drawn orientation when ground truth is available; 0 otherwise
    /// (upright acquisition assumption).
    pub gt_theta: f64,
    pub truth: Option<TruthSidecar>,
    /// False for augmented copies whose landmark renumbering does not
    /// preserve cross-image correspondence (vertical flips); such entries
    /// feed only the space detectors.
    pub correspondence_ok: bool,
}

impl LoadedEntry {
    /// Ground-truth bounding box of the landmarks: line positions
    /// (top, bottom, left, right).
    pub fn gt_lines(&self) -> (f64, f64, f64, f64) {
        let bb = self.landmarks.bbox();
        (bb.min.1, bb.max.1, bb.min.0, bb.max.0)
    }

    /// Box-semantics space parameters of the ground truth.
    pub fn gt_box(&self) -> Result<SpaceParams> {
        let bb = self.landmarks.bbox();
        SpaceParams::new(bb.center(), self.gt_theta, bb.size())
    }
}

/// Loads every manifest entry (image + landmarks + optional truth).
pub fn load_entries(manifest: &DatasetManifest, base: &Path) -> Result<Vec<LoadedEntry>> {
    let mut out = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let image_path = manifest.resolve(base, &entry.image_path);
        let landmark_path = manifest.resolve(base, &entry.landmark_path);
        let mut image = load_and_normalize(&image_path, manifest.bit_depth)?;
        image.spacing = entry.spacing;
        let lm = LandmarkFile::load(&landmark_path)?;
        let truth = match &entry.truth_path {
            Some(p) => Some(TruthSidecar::load(&manifest.resolve(base, p))?),
            None => None,
        };
        let id = image_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("entry")
            .to_string();
        let gt_theta = truth.as_ref().map(|t| t.space_params.theta).unwrap_or(0.0);
        out.push(LoadedEntry {
            id,
            image,
            landmarks: lm.shape()?,
            group: entry.group.or(lm.group),
            gt_theta,
            truth,
            correspondence_ok: true,
        });
    }
    if out.is_empty() {
        return Err(Error::Data("manifest has no entries".into()));
    }
    let m = out[0].landmarks.landmark_count();
    for e in &out {
        if e.landmarks.landmark_count() != m {
            return Err(Error::Data(format!(
                "inconsistent landmark counts across entries ({} vs {m})",
                e.landmarks.landmark_count()
            )));
        }
    }
    Ok(out)
}
