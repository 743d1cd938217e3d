//! Data augmentation: geometric reflections with landmark renumbering, and
//! appearance perturbation along the principal components of the training
//! images.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::LoadedEntry;
use crate::error::{Error, Result};
use crate::image::{resize_image, GrayImage};
use crate::nn::derive_seed;
use crate::shape::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub horizontal_flips: bool,
    pub vertical_flips: bool,
    /// Number of intensity-perturbed copies per original entry.
    pub intensity_copies: usize,
    /// Std of the per-component coefficient draw.
    pub alpha_sigma: f64,
    /// Number of image principal components retained.
    pub pca_components: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            horizontal_flips: true,
            vertical_flips: true,
            intensity_copies: 1,
            alpha_sigma: 0.1,
            pca_components: 8,
            seed: 0,
        }
    }
}

/// PCA basis of the training images, computed at a reduced working
/// resolution.
#[derive(Debug, Clone)]
pub struct ImagePcaBasis {
    pub dims: (usize, usize),
    /// One flattened component image per mode.
    pub components: Vec<Vec<f64>>,
    pub eigvals: Vec<f64>,
}

/// Working resolution of the intensity-augmentation PCA.
const PCA_SIDE: usize = 64;

/// PCA over the training images downsampled to 64x64, keeping the top
/// `j` components. Errors when `j` exceeds what the data can provide.
pub fn image_pca_basis(images: &[&GrayImage], j: usize) -> Result<ImagePcaBasis> {
    if images.is_empty() {
        return Err(Error::Data("no images for the PCA basis".into()));
    }
    if j == 0 {
        return Err(Error::Config("need at least one component".into()));
    }
    if j >= images.len() {
        return Err(Error::Data(format!(
            "{j} components requested but only {} images available",
            images.len()
        )));
    }
    let dim = PCA_SIDE * PCA_SIDE;
    let n = images.len();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for img in images {
        let small = if img.dims() == (PCA_SIDE, PCA_SIDE) {
            (*img).clone()
        } else {
            resize_image(img, (PCA_SIDE, PCA_SIDE))?
        };
        rows.push(small.pixels().to_vec());
    }
    let mut mean = vec![0.0; dim];
    for r in &rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut data = DMatrix::<f64>::zeros(n, dim);
    for (i, r) in rows.iter().enumerate() {
        for (k, v) in r.iter().enumerate() {
            data[(i, k)] = v - mean[k];
        }
    }
    let svd = data.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numeric("image PCA SVD failed".into()))?;
    let denom = (n - 1).max(1) as f64;
    let eigvals: Vec<f64> = svd
        .singular_values
        .iter()
        .take(j)
        .map(|s| s * s / denom)
        .collect();
    if eigvals.len() < j {
        return Err(Error::Data("requested components exceed the data rank".into()));
    }
    let components: Vec<Vec<f64>> = (0..j)
        .map(|i| v_t.row(i).iter().copied().collect())
        .collect();
    Ok(ImagePcaBasis {
        dims: (PCA_SIDE, PCA_SIDE),
        components,
        eigvals,
    })
}

/// Adds `sum_j alpha_j * lambda_j * p_j` to the image. The perturbation
/// field is built at the basis resolution and bicubically upsampled when
/// the target image is larger; the result is clamped to [0, 1].
pub fn perturb_intensity(
    image: &GrayImage,
    basis: &ImagePcaBasis,
    alphas: &[f64],
) -> Result<GrayImage> {
    if alphas.len() > basis.components.len() {
        return Err(Error::Dimension(format!(
            "{} coefficients for {} components",
            alphas.len(),
            basis.components.len()
        )));
    }
    let dim = basis.dims.0 * basis.dims.1;
    let mut field = vec![0.0f64; dim];
    for ((&alpha, comp), &lambda) in alphas.iter().zip(&basis.components).zip(&basis.eigvals) {
        if alpha == 0.0 {
            continue;
        }
        for (f, c) in field.iter_mut().zip(comp) {
            *f += alpha * lambda * c;
        }
    }
    let mut field_img = GrayImage::new(basis.dims.0, basis.dims.1, field)?;
    if image.dims() != basis.dims {
        field_img = resize_image(&field_img, image.dims())?;
    }
    let mut out = image.clone();
    for (o, f) in out.pixels_mut().iter_mut().zip(field_img.pixels()) {
        *o = (*o + f).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Horizontal reflection with exact landmark renumbering: lobes swap
/// blocks, which preserves the ordering convention (right clockwise from
/// top, left counter-clockwise from top), so cross-image correspondence
/// survives.
pub fn flip_entry_horizontal(entry: &LoadedEntry) -> LoadedEntry {
    let w = entry.image.width() as f64;
    let m = entry.landmarks.landmark_count();
    let half = m / 2;
    let pts = entry.landmarks.points();
    let mut flipped = Vec::with_capacity(m);
    for i in 0..m {
        let src = if m % 2 == 0 && m >= 6 {
            if i < half {
                half + i
            } else {
                i - half
            }
        } else {
            i
        };
        let (x, y) = pts[src];
        flipped.push((w - 1.0 - x, y));
    }
    LoadedEntry {
        id: format!("{}_hf", entry.id),
        image: entry.image.flipped_horizontal(),
        landmarks: Shape::from_points(&flipped).expect("flip preserves validity"),
        group: entry.group,
        gt_theta: -entry.gt_theta,
        truth: None,
        correspondence_ok: entry.correspondence_ok,
    }
}

/// Vertical reflection. The landmark order no longer matches the global
/// convention (the traversal start and winding both change), so the copy
/// is flagged for space-detector use only.
pub fn flip_entry_vertical(entry: &LoadedEntry) -> LoadedEntry {
    let h = entry.image.height() as f64;
    let pts: Vec<(f64, f64)> = entry
        .landmarks
        .points()
        .iter()
        .map(|&(x, y)| (x, h - 1.0 - y))
        .collect();
    LoadedEntry {
        id: format!("{}_vf", entry.id),
        image: entry.image.flipped_vertical(),
        landmarks: Shape::from_points(&pts).expect("flip preserves validity"),
        group: entry.group,
        gt_theta: -entry.gt_theta,
        truth: None,
        correspondence_ok: false,
    }
}

/// Expands a training set with reflected and intensity-perturbed copies.
///
/// The PCA basis comes from the original images; every copy draws its own
/// coefficient vector from a per-entry stream, one draw per image.
pub fn augment_entries(entries: &[LoadedEntry], cfg: &AugmentConfig) -> Result<Vec<LoadedEntry>> {
    let mut out: Vec<LoadedEntry> = entries.to_vec();
    for e in entries {
        if cfg.horizontal_flips {
            out.push(flip_entry_horizontal(e));
        }
        if cfg.vertical_flips {
            out.push(flip_entry_vertical(e));
        }
    }
    if cfg.intensity_copies > 0 {
        let imgs: Vec<&GrayImage> = entries.iter().map(|e| &e.image).collect();
        let j = cfg.pca_components.min(entries.len().saturating_sub(1));
        if j == 0 {
            return Err(Error::Data(
                "too few images for intensity augmentation".into(),
            ));
        }
        let basis = image_pca_basis(&imgs, j)?;
        for (i, e) in entries.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, i as u64));
            let normal = Normal::new(0.0, cfg.alpha_sigma)
                .map_err(|_| Error::Config("alpha sigma must be non-negative".into()))?;
            for copy in 0..cfg.intensity_copies {
                let alphas: Vec<f64> = (0..j).map(|_| normal.sample(&mut rng)).collect();
                let image = perturb_intensity(&e.image, &basis, &alphas)?;
                out.push(LoadedEntry {
                    id: format!("{}_i{}", e.id, copy),
                    image,
                    landmarks: e.landmarks.clone(),
                    group: e.group,
                    gt_theta: e.gt_theta,
                    truth: None,
                    correspondence_ok: e.correspondence_ok,
                });
            }
        }
    }
    Ok(out)
}
