//! Per-mode shape-weight estimation: patch-vector features at synthesized
//! landmarks, labeled hypothesis fabrication, and the strictly ordered
//! refinement recursion that adds one deformation mode at a time.
//!
//! Weight units throughout are standard deviations of the mode: a scan or
//! exclusion value `u` corresponds to the raw weight `u * sqrt(lambda_k)`.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::nn::NetworkModel;
use crate::shape::{Shape, ShapeModel, ShapeWeights, SpaceParams};

/// Detection-side parameters of the shape stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeConfig {
    /// Patch side in pixels (odd).
    pub q: usize,
    /// Test-time scan step in stddev units.
    pub scan_step: f64,
    /// Candidates averaged per mode.
    pub top_n: usize,
    /// Training-grid step in stddev units.
    pub grid_step: f64,
    /// Exclusion radius around the true weight, stddev units.
    pub exclusion: f64,
    /// Scan/clamp bound, stddev units.
    pub bound: f64,
}

impl Default for ModeConfig {
    fn default() -> Self {
        ModeConfig {
            q: 15,
            scan_step: 0.05,
            top_n: 10,
            grid_step: 0.25,
            exclusion: 0.25,
            bound: 3.0,
        }
    }
}

impl ModeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q % 2 == 0 || self.q == 0 {
            return Err(Error::Config(format!("patch side {} must be odd", self.q)));
        }
        if !(self.scan_step > 0.0 && self.grid_step > 0.0 && self.bound > 0.0) {
            return Err(Error::Config("scan parameters must be positive".into()));
        }
        if self.top_n == 0 {
            return Err(Error::Config("top_n must be at least 1".into()));
        }
        Ok(())
    }
}

/// Concatenated q x q patches sampled bilinearly around every landmark, in
/// landmark-index order (right lobe clockwise, then left lobe
/// counter-clockwise). Length M * q^2.
pub fn extract_shape_patch_vector(image: &GrayImage, shape: &Shape, q: usize) -> Result<Vec<f64>> {
    if q % 2 == 0 || q == 0 {
        return Err(Error::Config(format!("patch side {q} must be odd")));
    }
    let m = shape.landmark_count();
    if m == 0 {
        return Err(Error::Data("empty shape".into()));
    }
    let half = (q / 2) as f64;
    let mut out = Vec::with_capacity(m * q * q);
    for i in 0..m {
        let (cx, cy) = shape.point(i);
        for row in 0..q {
            let y = cy - half + row as f64;
            for col in 0..q {
                let x = cx - half + col as f64;
                out.push(image.sample_bilinear(x, y));
            }
        }
    }
    Ok(out)
}

/// Labeled hypothesis for one deformation mode.
#[derive(Debug, Clone)]
pub struct ModeHypothesis {
    /// Candidate weight in stddev units.
    pub u_hat: f64,
    /// Distance to the true weight in stddev units.
    pub offset: f64,
    pub feature: Vec<f64>,
    pub positive: bool,
}

/// Builds the labeled hypotheses for mode `k` (1-based) of one image:
///
/// 1. the true weights come from projecting the ground-truth landmarks;
/// 2. negatives synthesize shapes that keep every other mode at its true
///    value and sweep only mode k over the training grid, keeping grid
///    points at least `exclusion` stddevs from the truth — so the score
///    contrast lies along the mode-k axis alone;
/// 3. the positive feature is extracted at the ground-truth landmarks.
pub fn fabricate_mode_hypotheses(
    model: &ShapeModel,
    image: &GrayImage,
    gt_shape: &Shape,
    sp: &SpaceParams,
    k: usize,
    cfg: &ModeConfig,
    rng: &mut ChaCha8Rng,
    neg_ratio: usize,
) -> Result<Vec<ModeHypothesis>> {
    cfg.validate()?;
    if k == 0 || k > model.mode_count() {
        return Err(Error::Dimension(format!(
            "mode {k} outside the model's {} modes",
            model.mode_count()
        )));
    }
    let lambda = model.eigvals()[k - 1];
    if lambda <= 0.0 {
        return Err(Error::Data(format!("mode {k} has zero variance")));
    }
    let sigma = lambda.sqrt();
    let b_true = model.project(gt_shape, sp)?;
    let u_true = b_true.0[k - 1] / sigma;

    let mut hyps = vec![ModeHypothesis {
        u_hat: u_true,
        offset: 0.0,
        feature: extract_shape_patch_vector(image, gt_shape, cfg.q)?,
        positive: true,
    }];

    let steps = (cfg.bound / cfg.grid_step).round() as i64;
    let mut grid: Vec<f64> = (-steps..=steps)
        .map(|i| i as f64 * cfg.grid_step)
        .filter(|u| (u - u_true).abs() >= cfg.exclusion - 1e-12)
        .collect();
    let keep = (neg_ratio.max(1) * hyps.len() * 8).min(grid.len());
    if keep < grid.len() {
        grid.shuffle(rng);
        grid.truncate(keep);
        grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    }

    let mut b = b_true.0.clone();
    for u in grid {
        b[k - 1] = u * sigma;
        let candidate = model.synthesize(&ShapeWeights(b.clone()), sp)?;
        hyps.push(ModeHypothesis {
            u_hat: u,
            offset: u - u_true,
            feature: extract_shape_patch_vector(image, &candidate, cfg.q)?,
            positive: false,
        });
    }
    audit_mode_hypotheses(&hyps, cfg)?;
    Ok(hyps)
}

/// Verifies the exclusion band of a mode-hypothesis set.
pub fn audit_mode_hypotheses(hyps: &[ModeHypothesis], cfg: &ModeConfig) -> Result<()> {
    for h in hyps {
        if h.positive && h.offset != 0.0 {
            return Err(Error::Data(
                "positive mode hypothesis away from the true weight".into(),
            ));
        }
        if !h.positive && h.offset.abs() < cfg.exclusion - 1e-12 {
            return Err(Error::Data(format!(
                "negative mode hypothesis at {:.3} stddev violates the {} exclusion",
                h.offset.abs(),
                cfg.exclusion
            )));
        }
    }
    Ok(())
}

/// The K per-mode classifiers plus shared parameters.
#[derive(Debug, Clone)]
pub struct ModeDetectorSet {
    /// models[k-1] scores hypotheses for mode k.
    pub models: Vec<NetworkModel>,
    pub config: ModeConfig,
}

impl ModeDetectorSet {
    pub fn mode_count(&self) -> usize {
        self.models.len()
    }

    pub fn save(&self, dir: &Path, model_refs: &[PathBuf]) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, m) in self.models.iter().enumerate() {
            m.save(&dir.join(format!("mode_{:02}.json", i + 1)))?;
        }
        let manifest = ModeBundleManifest {
            version: 1,
            config: self.config,
            k: self.models.len(),
            model_refs: model_refs.to_vec(),
            units: "stddev".into(),
        };
        let json = serde_json::to_string_pretty(&manifest)?;
        let path = dir.join("manifest.json");
        std::fs::write(&path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: &Path) -> Result<(Self, Vec<PathBuf>)> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: ModeBundleManifest = serde_json::from_str(&text)?;
        if manifest.units != "stddev" {
            return Err(Error::Data(format!(
                "unsupported weight units '{}'",
                manifest.units
            )));
        }
        let mut models = Vec::with_capacity(manifest.k);
        for i in 1..=manifest.k {
            let p = dir.join(format!("mode_{i:02}.json"));
            if !p.exists() {
                return Err(Error::Data(format!(
                    "mode detector {i} missing from {}",
                    dir.display()
                )));
            }
            models.push(NetworkModel::load(&p)?);
        }
        Ok((
            ModeDetectorSet {
                models,
                config: manifest.config,
            },
            manifest.model_refs,
        ))
    }
}

#[derive(Serialize, Deserialize)]
struct ModeBundleManifest {
    version: u32,
    config: ModeConfig,
    k: usize,
    model_refs: Vec<PathBuf>,
    units: String,
}

/// Ordered refinement state. Modes must be applied as 1, 2, ..; applying
/// mode k before 1..k-1 are done is an error, which makes the
/// estimate-in-order contract checkable.
#[derive(Debug, Clone)]
pub struct SegmentationState<'a> {
    model: &'a ShapeModel,
    sp: SpaceParams,
    shape: Shape,
    weights: Vec<f64>,
    next_mode: usize,
}

impl<'a> SegmentationState<'a> {
    /// Starts at the aligned mean shape (zero modes applied).
    pub fn new(model: &'a ShapeModel, sp: &SpaceParams) -> Result<Self> {
        let shape = model.synthesize(&ShapeWeights::zeros(0), sp)?;
        Ok(SegmentationState {
            model,
            sp: *sp,
            shape,
            weights: Vec::new(),
            next_mode: 1,
        })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn next_mode(&self) -> usize {
        self.next_mode
    }

    /// Scans mode `k`, scores candidates with the detector, averages the
    /// best `top_n` candidate weights, clamps, and applies the update
    /// x_k = x_{k-1} + L(p_k b_k). A flat score field keeps the mode at 0
    /// with a warning.
    pub fn apply_mode(
        &mut self,
        k: usize,
        detector: &NetworkModel,
        image: &GrayImage,
        cfg: &ModeConfig,
    ) -> Result<f64> {
        if k != self.next_mode {
            return Err(Error::Data(format!(
                "mode {k} estimated out of order; expected mode {}",
                self.next_mode
            )));
        }
        if k > self.model.mode_count() {
            return Err(Error::Dimension(format!(
                "mode {k} outside the model's {} modes",
                self.model.mode_count()
            )));
        }
        let lambda = self.model.eigvals()[k - 1];
        let sigma = lambda.sqrt();
        if sigma <= 0.0 {
            return Err(Error::Data(format!("mode {k} has zero variance")));
        }

        let steps = (cfg.bound / cfg.scan_step).round() as i64;
        let grid: Vec<f64> = (-steps..=steps).map(|i| i as f64 * cfg.scan_step).collect();
        let p_k = self.model.mode(k);
        let m = self.shape.landmark_count();

        use rayon::prelude::*;
        let scores: Vec<f64> = grid
            .par_iter()
            .map(|&u| {
                let candidate = offset_shape(&self.shape, p_k, u * sigma, &self.sp, m);
                let feature = extract_shape_patch_vector(image, &candidate, cfg.q)?;
                detector.score(&feature)
            })
            .collect::<Result<Vec<f64>>>()?;

        let first = scores[0];
        let u_est = if scores.iter().all(|&s| s == first) {
            log::warn!("flat score field for mode {k}; keeping the mean-shape value 0");
            0.0
        } else {
            let mut idx: Vec<usize> = (0..scores.len()).collect();
            idx.sort_by(|&a, &b| {
                scores[b]
                    .partial_cmp(&scores[a])
                    .expect("finite scores")
                    .then(a.cmp(&b))
            });
            let n = cfg.top_n.min(idx.len());
            idx[..n].iter().map(|&i| grid[i]).sum::<f64>() / n as f64
        };
        // Re-clamp after averaging.
        let u_est = u_est.clamp(-cfg.bound, cfg.bound);
        let b_k = u_est * sigma;

        self.shape = offset_shape(&self.shape, p_k, b_k, &self.sp, m);
        self.weights.push(b_k);
        self.next_mode += 1;
        Ok(b_k)
    }
}

/// `x + L(p_k * b)` where L is the linear part of the space transform.
fn offset_shape(shape: &Shape, p_k: &[f64], b: f64, sp: &SpaceParams, m: usize) -> Shape {
    let mut out = shape.clone();
    if b == 0.0 {
        return out;
    }
    for i in 0..m {
        let v = sp.apply_vector((b * p_k[2 * i], b * p_k[2 * i + 1]));
        let (x, y) = shape.point(i);
        out.set_point(i, (x + v.0, y + v.1));
    }
    out
}

/// Full shape refinement: aligns the group mean into the detected box and
/// applies modes 1..k_use in order. Returns the final shape, the literal
/// alignment transform and the estimated weights.
pub fn segment(
    image: &GrayImage,
    box_params: &SpaceParams,
    model: &ShapeModel,
    detectors: &ModeDetectorSet,
    k_use: usize,
) -> Result<(Shape, SpaceParams, Vec<f64>)> {
    let (mut trace, sp, weights) = segment_trace(image, box_params, model, detectors, k_use)?;
    let shape = trace.pop().expect("trace holds at least the aligned mean");
    Ok((shape, sp, weights))
}

/// As [`segment`], but returns the shape after every stage: element k is
/// the result of applying the k largest modes (element 0 is the aligned
/// mean).
pub fn segment_trace(
    image: &GrayImage,
    box_params: &SpaceParams,
    model: &ShapeModel,
    detectors: &ModeDetectorSet,
    k_use: usize,
) -> Result<(Vec<Shape>, SpaceParams, Vec<f64>)> {
    if k_use > detectors.mode_count() {
        return Err(Error::Data(format!(
            "{k_use} modes requested but only {} detectors available",
            detectors.mode_count()
        )));
    }
    let k_use = k_use.min(model.mode_count());
    let sp = box_params.align_to_bbox(&model.mean_shape().bbox())?;
    let mut state = SegmentationState::new(model, &sp)?;
    let mut trace = vec![state.shape().clone()];
    for k in 1..=k_use {
        state.apply_mode(k, &detectors.models[k - 1], image, &detectors.config)?;
        trace.push(state.shape().clone());
    }
    let weights = state.weights().to_vec();
    Ok((trace, sp, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::build_ssm;
    use rand::{Rng, SeedableRng};

    fn toy_model(seed: u64) -> ShapeModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: Vec<(f64, f64)> = (0..8)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / 8.0;
                (a.cos(), a.sin())
            })
            .collect();
        let shapes: Vec<Shape> = (0..12)
            .map(|_| {
                let pts: Vec<(f64, f64)> = base
                    .iter()
                    .map(|&(x, y)| {
                        (
                            x + rng.random_range(-0.1..0.1),
                            y + rng.random_range(-0.1..0.1),
                        )
                    })
                    .collect();
                Shape::from_points(&pts).unwrap()
            })
            .collect();
        build_ssm(&shapes, 0.99, 0).unwrap()
    }

    #[test]
    fn patch_vector_length_is_m_q_squared() {
        let img = GrayImage::constant(64, 64, 0.5).unwrap();
        let shape = Shape::from_points(&[(10.0, 10.0), (20.0, 20.0), (30.0, 15.0)]).unwrap();
        let v = extract_shape_patch_vector(&img, &shape, 15).unwrap();
        assert_eq!(v.len(), 3 * 225);
        // The full-scale analog: 144 landmarks at q=15 give 32400.
        assert_eq!(144 * 15 * 15, 32400);
    }

    #[test]
    fn q1_returns_landmark_intensities_and_constant_image_constant_vector() {
        let mut img = GrayImage::constant(32, 32, 0.25).unwrap();
        img.set(10, 10, 0.75);
        let shape = Shape::from_points(&[(10.0, 10.0), (5.0, 5.0)]).unwrap();
        let v = extract_shape_patch_vector(&img, &shape, 1).unwrap();
        assert_eq!(v, vec![0.75, 0.25]);
        let flat = GrayImage::constant(32, 32, 0.4).unwrap();
        let v = extract_shape_patch_vector(&flat, &shape, 3).unwrap();
        assert!(v.iter().all(|&x| (x - 0.4).abs() < 1e-12));
        assert!(extract_shape_patch_vector(&img, &shape, 4).is_err());
    }

    #[test]
    fn grid_with_zero_truth_has_24_negatives() {
        // Mode grid [-3, +3] step 0.25 with the truth at 0: the origin is
        // excluded, 24 grid points survive.
        let model = toy_model(5);
        let img = GrayImage::constant(96, 96, 0.5).unwrap();
        let sp = SpaceParams::new((48.0, 48.0), 0.0, (20.0, 20.0)).unwrap();
        let gt = model
            .synthesize(&ShapeWeights::zeros(0), &sp)
            .unwrap();
        let cfg = ModeConfig {
            q: 5,
            ..ModeConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hyps =
            fabricate_mode_hypotheses(&model, &img, &gt, &sp, 1, &cfg, &mut rng, 100).unwrap();
        let negs: Vec<&ModeHypothesis> = hyps.iter().filter(|h| !h.positive).collect();
        assert_eq!(negs.len(), 24);
        assert!(negs.iter().all(|h| h.offset.abs() >= 0.25 - 1e-12));
        assert_eq!(hyps.iter().filter(|h| h.positive).count(), 1);
    }

    #[test]
    fn mode_out_of_range_rejected() {
        let model = toy_model(6);
        let img = GrayImage::constant(96, 96, 0.5).unwrap();
        let sp = SpaceParams::new((48.0, 48.0), 0.0, (20.0, 20.0)).unwrap();
        let gt = model.synthesize(&ShapeWeights::zeros(0), &sp).unwrap();
        let cfg = ModeConfig {
            q: 5,
            ..ModeConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k_bad = model.mode_count() + 1;
        assert!(
            fabricate_mode_hypotheses(&model, &img, &gt, &sp, k_bad, &cfg, &mut rng, 3).is_err()
        );
    }

    #[test]
    fn modes_must_apply_in_order() {
        let model = toy_model(7);
        let sp = SpaceParams::new((48.0, 48.0), 0.0, (20.0, 20.0)).unwrap();
        let img = GrayImage::constant(96, 96, 0.5).unwrap();
        let mut state = SegmentationState::new(&model, &sp).unwrap();
        let detector = crate::nn::init_dnn_from_sdae(
            &[crate::nn::EncoderLayer {
                input_dim: 8 * 25,
                hidden_dim: 4,
                weights: vec![0.01; 4 * 8 * 25],
                bias: vec![0.0; 4],
            }],
            1,
            3,
        )
        .unwrap();
        let cfg = ModeConfig {
            q: 5,
            ..ModeConfig::default()
        };
        let err = state.apply_mode(2, &detector, &img, &cfg);
        assert!(err.is_err(), "out-of-order mode must fail");
        state.apply_mode(1, &detector, &img, &cfg).unwrap();
        assert_eq!(state.next_mode(), 2);
    }

    #[test]
    fn zero_modes_returns_aligned_mean_exactly() {
        let model = toy_model(8);
        let box_params = SpaceParams::new((50.0, 40.0), 0.03, (30.0, 24.0)).unwrap();
        let detectors = ModeDetectorSet {
            models: Vec::new(),
            config: ModeConfig {
                q: 5,
                ..ModeConfig::default()
            },
        };
        let img = GrayImage::constant(96, 96, 0.5).unwrap();
        let (shape, sp, weights) = segment(&img, &box_params, &model, &detectors, 0).unwrap();
        assert!(weights.is_empty());
        let aligned = model.synthesize(&ShapeWeights::zeros(0), &sp).unwrap();
        assert_eq!(shape.coords(), aligned.coords());
    }

    #[test]
    fn recursion_matches_direct_synthesis_with_true_weights() {
        // Applying the per-mode updates with the true weights reproduces
        // synthesize(b) exactly.
        let model = toy_model(9);
        let k = model.mode_count().min(3);
        let sp = SpaceParams::new((48.0, 48.0), 0.1, (20.0, 26.0)).unwrap();
        let mut b = ShapeWeights::zeros(model.mode_count());
        for (i, bi) in b.0.iter_mut().enumerate().take(k) {
            *bi = 0.1 * (i as f64 + 1.0) * model.eigvals()[i].sqrt();
        }
        let direct = model.synthesize(&b, &sp).unwrap();

        let mut x = model.synthesize(&ShapeWeights::zeros(0), &sp).unwrap();
        let m = x.landmark_count();
        for i in 0..k {
            x = offset_shape(&x, model.mode(i + 1), b.0[i], &sp, m);
        }
        for (a, d) in x.coords().iter().zip(direct.coords()) {
            assert!((a - d).abs() < 1e-10, "{a} vs {d}");
        }
    }

    #[test]
    fn estimated_weight_always_within_clamp() {
        // A detector that prefers extreme candidates still cannot push the
        // averaged weight outside the bound.
        let model = toy_model(10);
        let sp = SpaceParams::new((48.0, 48.0), 0.0, (20.0, 20.0)).unwrap();
        let mut img = GrayImage::constant(96, 96, 0.1).unwrap();
        for y in 0..96 {
            for x in 0..96 {
                img.set(x, y, ((x * 7 + y * 13) % 97) as f64 / 97.0);
            }
        }
        let detector = crate::nn::init_dnn_from_sdae(
            &[crate::nn::EncoderLayer {
                input_dim: 8 * 25,
                hidden_dim: 6,
                weights: (0..6 * 200).map(|i| ((i % 13) as f64 - 6.0) * 0.05).collect(),
                bias: vec![0.1; 6],
            }],
            1,
            11,
        )
        .unwrap();
        let cfg = ModeConfig {
            q: 5,
            ..ModeConfig::default()
        };
        let mut state = SegmentationState::new(&model, &sp).unwrap();
        let b1 = state.apply_mode(1, &detector, &img, &cfg).unwrap();
        let bound = cfg.bound * model.eigvals()[0].sqrt();
        assert!(b1.abs() <= bound + 1e-12);
    }
}
