//! PCA statistical shape model: construction, synthesis and projection.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Shape, SpaceParams};
use crate::error::{Error, Result};

/// Per-mode weights of a shape instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeWeights(pub Vec<f64>);

impl ShapeWeights {
    pub fn zeros(k: usize) -> Self {
        ShapeWeights(vec![0.0; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Mean shape plus orthonormal eigenmodes with descending eigenvalues.
#[derive(Debug, Clone)]
pub struct ShapeModel {
    mean: Vec<f64>,
    /// K columns, each of length 2M.
    eigvecs: Vec<Vec<f64>>,
    /// Descending, non-negative.
    eigvals: Vec<f64>,
    energy_fraction: f64,
    group_id: u32,
}

impl ShapeModel {
    /// Builds a model from explicit parts, checking mode geometry and
    /// orthonormality. Used by the synthetic family generator.
    pub(crate) fn from_parts(
        mean: Vec<f64>,
        eigvecs: Vec<Vec<f64>>,
        eigvals: Vec<f64>,
        energy_fraction: f64,
        group_id: u32,
    ) -> Result<Self> {
        if mean.is_empty() || mean.len() % 2 != 0 {
            return Err(Error::Dimension("mean length must be a positive even number".into()));
        }
        if eigvecs.len() != eigvals.len() {
            return Err(Error::Dimension("eigenvector/eigenvalue count mismatch".into()));
        }
        for (i, col) in eigvecs.iter().enumerate() {
            if col.len() != mean.len() {
                return Err(Error::Dimension(format!("eigenvector {i} length mismatch")));
            }
            let norm: f64 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-8 {
                return Err(Error::Data(format!("eigenvector {i} is not unit length")));
            }
            for (j, other) in eigvecs.iter().enumerate().take(i) {
                let dot: f64 = col.iter().zip(other).map(|(a, b)| a * b).sum();
                if dot.abs() > 1e-8 {
                    return Err(Error::Data(format!("eigenvectors {j} and {i} not orthogonal")));
                }
            }
        }
        for w in eigvals.windows(2) {
            if w[0] < w[1] {
                return Err(Error::Data("eigenvalues not descending".into()));
            }
        }
        if eigvals.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::Data("eigenvalues must be non-negative and finite".into()));
        }
        Ok(ShapeModel {
            mean,
            eigvecs,
            eigvals,
            energy_fraction,
            group_id,
        })
    }

    pub fn landmark_count(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mode_count(&self) -> usize {
        self.eigvals.len()
    }

    pub fn mean_shape(&self) -> Shape {
        Shape::from_coords(self.mean.clone()).expect("stored mean is valid")
    }

    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    /// 1-based mode accessor matching the recursion index.
    pub fn mode(&self, k: usize) -> &[f64] {
        &self.eigvecs[k - 1]
    }

    pub fn energy_fraction(&self) -> f64 {
        self.energy_fraction
    }

    pub fn group_id(&self) -> u32 {
        self.group_id
    }

    /// Synthesizes a shape: `X = A_space(mean + sum_k b_k p_k)`.
    pub fn synthesize(&self, b: &ShapeWeights, sp: &SpaceParams) -> Result<Shape> {
        if b.len() > self.mode_count() {
            return Err(Error::Dimension(format!(
                "{} weights for a model with {} modes",
                b.len(),
                self.mode_count()
            )));
        }
        sp.validate()?;
        let mut coords = self.mean.clone();
        for (k, &bk) in b.0.iter().enumerate() {
            if bk == 0.0 {
                continue;
            }
            for (c, p) in coords.iter_mut().zip(&self.eigvecs[k]) {
                *c += bk * p;
            }
        }
        let aligned = Shape::from_coords(coords)?;
        Ok(sp.apply(&aligned))
    }

    /// Projects an image-space shape onto the modes:
    /// `b = p^T (A_space^{-1} X - mean)`.
    pub fn project(&self, shape: &Shape, sp: &SpaceParams) -> Result<ShapeWeights> {
        if shape.landmark_count() != self.landmark_count() {
            return Err(Error::Dimension(format!(
                "shape has {} landmarks, model expects {}",
                shape.landmark_count(),
                self.landmark_count()
            )));
        }
        sp.validate()?;
        let aligned = sp.invert(shape);
        let resid: Vec<f64> = aligned
            .coords()
            .iter()
            .zip(&self.mean)
            .map(|(a, m)| a - m)
            .collect();
        let b = self
            .eigvecs
            .iter()
            .map(|p| p.iter().zip(&resid).map(|(pi, ri)| pi * ri).sum())
            .collect();
        Ok(ShapeWeights(b))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ShapeModelFile {
            version: 1,
            m: self.landmark_count(),
            mean: self.mean.clone(),
            eigvecs: self.eigvecs.clone(),
            eigvals: self.eigvals.clone(),
            energy_fraction: self.energy_fraction,
            group_id: self.group_id,
        };
        let json = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ShapeModelFile = serde_json::from_str(&text)?;
        if file.mean.len() != 2 * file.m {
            return Err(Error::Data(format!(
                "mean length {} does not match M={}",
                file.mean.len(),
                file.m
            )));
        }
        for col in &file.eigvecs {
            if col.len() != file.mean.len() {
                return Err(Error::Data("eigenvector length mismatch".into()));
            }
        }
        if file.eigvecs.len() != file.eigvals.len() {
            return Err(Error::Data("eigenvector/eigenvalue count mismatch".into()));
        }
        Ok(ShapeModel {
            mean: file.mean,
            eigvecs: file.eigvecs,
            eigvals: file.eigvals,
            energy_fraction: file.energy_fraction,
            group_id: file.group_id,
        })
    }
}

/// Versioned on-disk form; eigenvectors stored column-major (one array per
/// mode).
#[derive(Serialize, Deserialize)]
struct ShapeModelFile {
    version: u32,
    m: usize,
    mean: Vec<f64>,
    eigvecs: Vec<Vec<f64>>,
    eigvals: Vec<f64>,
    energy_fraction: f64,
    group_id: u32,
}

/// Builds the PCA model from aligned shapes.
///
/// The decomposition runs as an SVD of the centered data matrix; sample
/// covariance uses the N-1 denominator. K is the smallest mode count whose
/// cumulative eigenvalue share reaches `energy_fraction`.
pub fn build_ssm(aligned: &[Shape], energy_fraction: f64, group_id: u32) -> Result<ShapeModel> {
    if aligned.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 aligned shapes, got {}",
            aligned.len()
        )));
    }
    if !(energy_fraction > 0.0 && energy_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "energy fraction {energy_fraction} outside (0, 1]"
        )));
    }
    let dim = aligned[0].coords().len();
    for s in aligned {
        if s.coords().len() != dim {
            return Err(Error::Dimension("aligned shapes have differing sizes".into()));
        }
    }
    let n = aligned.len();
    let mut mean = vec![0.0; dim];
    for s in aligned {
        for (m, v) in mean.iter_mut().zip(s.coords()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let mut data = DMatrix::<f64>::zeros(n, dim);
    for (i, s) in aligned.iter().enumerate() {
        for (j, v) in s.coords().iter().enumerate() {
            data[(i, j)] = v - mean[j];
        }
    }

    let svd = data.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numeric("SVD failed to produce singular vectors".into()))?;

    let denom = (n - 1) as f64;
    let mut eigvals: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|s| s * s / denom)
        .collect();
    // Guard tiny negative round-off and enforce descending order.
    for v in &mut eigvals {
        if *v < 0.0 {
            *v = 0.0;
        }
    }

    let total: f64 = eigvals.iter().sum();
    let rank_tol = eigvals.first().copied().unwrap_or(0.0) * 1e-12;
    let k = if total <= 0.0 {
        0
    } else {
        let mut cum = 0.0;
        let mut k = eigvals.len();
        let target = energy_fraction * total * (1.0 - 1e-12);
        for (i, &v) in eigvals.iter().enumerate() {
            cum += v;
            if cum >= target {
                k = i + 1;
                break;
            }
        }
        // Never keep numerically-zero modes.
        k.min(eigvals.iter().take_while(|&&v| v > rank_tol).count())
    };

    let eigvecs: Vec<Vec<f64>> = (0..k).map(|i| v_t.row(i).iter().copied().collect()).collect();
    eigvals.truncate(k);

    Ok(ShapeModel {
        mean,
        eigvecs,
        eigvals,
        energy_fraction,
        group_id,
    })
}

/// Clips each weight into `[-3 sqrt(lambda_k), +3 sqrt(lambda_k)]`.
pub fn clamp_weights(b: &ShapeWeights, eigvals: &[f64]) -> Result<ShapeWeights> {
    if b.len() != eigvals.len() {
        return Err(Error::Dimension(format!(
            "{} weights vs {} eigenvalues",
            b.len(),
            eigvals.len()
        )));
    }
    let clipped = b
        .0
        .iter()
        .zip(eigvals)
        .map(|(&bk, &l)| {
            let bound = 3.0 * l.max(0.0).sqrt();
            bk.clamp(-bound, bound)
        })
        .collect();
    Ok(ShapeWeights(clipped))
}
