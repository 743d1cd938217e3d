//! Ensemble localization: four bounding-line detectors plus an orientation
//! detector estimate translation, anisotropic scale and orientation.
//!
//! The four lines are linearly independent — each detector scans its own
//! axis with no conditioning on the others — so the detections commute;
//! orientation is estimated last, conditioned on the detected box.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::nn::{derive_seed, init_dnn_from_sdae, stack_sdae, train_dnn, NetworkModel, TrainConfig};
use crate::shape::SpaceParams;

/// The four object-bounding lines. Lines 1/2 are horizontal (y positions of
/// top and bottom), lines 3/4 vertical (x positions of left and right).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundingLine {
    Top,
    Bottom,
    Left,
    Right,
}

pub const BOUNDING_LINES: [BoundingLine; 4] = [
    BoundingLine::Top,
    BoundingLine::Bottom,
    BoundingLine::Left,
    BoundingLine::Right,
];

impl BoundingLine {
    /// 1-based index used in file names.
    pub fn index(self) -> usize {
        match self {
            BoundingLine::Top => 1,
            BoundingLine::Bottom => 2,
            BoundingLine::Left => 3,
            BoundingLine::Right => 4,
        }
    }

    pub fn is_horizontal(self) -> bool {
        matches!(self, BoundingLine::Top | BoundingLine::Bottom)
    }

    /// Length of the scanned axis for this line.
    pub fn axis_len(self, dims: (usize, usize)) -> usize {
        if self.is_horizontal() {
            dims.1
        } else {
            dims.0
        }
    }
}

/// Detection-side parameters of the localization stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceConfig {
    /// Strip half-width in pixels.
    pub r: usize,
    /// Candidates averaged per detection.
    pub top_n: usize,
    /// Orientation scan step in radians.
    pub theta_step: f64,
    /// Orientation scan range (+/-) in radians.
    pub theta_range: f64,
    /// Positive-hypothesis orientation bound.
    pub dtheta_pos: f64,
    /// Negative-hypothesis orientation bound.
    pub dtheta_neg: f64,
    /// Side of the resampled oriented crop.
    pub crop_side: usize,
    /// Negative-to-positive sampling ratio during training.
    pub neg_ratio: usize,
    /// Image dimensions the detectors were trained on.
    pub image_dims: (usize, usize),
}

impl SpaceConfig {
    /// Strip pixel count, the line-detector input dimension.
    pub fn line_input_dim(&self, line: BoundingLine) -> usize {
        let w = 2 * self.r + 1;
        if line.is_horizontal() {
            w * self.image_dims.0
        } else {
            w * self.image_dims.1
        }
    }

    pub fn crop_input_dim(&self) -> usize {
        self.crop_side * self.crop_side
    }
}

/// Labeled strip hypothesis for one bounding line.
#[derive(Debug, Clone)]
pub struct LineHypothesis {
    pub line: BoundingLine,
    pub position: i64,
    /// Signed distance to the ground-truth line.
    pub offset: f64,
    pub patch: Vec<f64>,
    pub positive: bool,
}

/// Flattened strip of rows (or columns) `pos-r ..= pos+r`, edge-replicated
/// at the borders. Layout is (2r+1) lines of the full perpendicular axis.
pub fn extract_strip(image: &GrayImage, line: BoundingLine, pos: i64, r: usize) -> Vec<f64> {
    let (w, h) = image.dims();
    let width = 2 * r + 1;
    if line.is_horizontal() {
        let mut out = Vec::with_capacity(width * w);
        for k in 0..width {
            let y = pos - r as i64 + k as i64;
            for x in 0..w as i64 {
                out.push(image.get_clamped(x, y));
            }
        }
        out
    } else {
        let mut out = Vec::with_capacity(width * h);
        for k in 0..width {
            let x = pos - r as i64 + k as i64;
            for y in 0..h as i64 {
                out.push(image.get_clamped(x, y));
            }
        }
        out
    }
}

/// Builds the labeled training hypotheses for one line: positives within
/// one pixel of the truth, negatives at five or more, nothing in between.
/// Negatives are subsampled to `neg_ratio` times the positive count.
pub fn extract_line_hypotheses(
    image: &GrayImage,
    gt_position: f64,
    line: BoundingLine,
    cfg: &SpaceConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<LineHypothesis>> {
    let len = line.axis_len(image.dims()) as i64;
    if gt_position < 0.0 || gt_position > (len - 1) as f64 {
        return Err(Error::Data(format!(
            "ground-truth line {gt_position} outside axis of length {len}"
        )));
    }
    if 2 * cfg.r + 1 > len as usize {
        return Err(Error::Dimension("image smaller than the strip".into()));
    }
    let mut hyps = Vec::new();
    let mut negatives: Vec<i64> = Vec::new();
    for pos in 0..len {
        let offset = pos as f64 - gt_position;
        if offset.abs() <= 1.0 {
            hyps.push(LineHypothesis {
                line,
                position: pos,
                offset,
                patch: extract_strip(image, line, pos, cfg.r),
                positive: true,
            });
        } else if offset.abs() >= 5.0 {
            negatives.push(pos);
        }
    }
    if hyps.is_empty() {
        return Err(Error::Data("no positive line hypotheses".into()));
    }
    let keep = (hyps.len() * cfg.neg_ratio).min(negatives.len());
    negatives.shuffle(rng);
    let mut chosen: Vec<i64> = negatives.into_iter().take(keep).collect();
    chosen.sort_unstable();
    for pos in chosen {
        hyps.push(LineHypothesis {
            line,
            position: pos,
            offset: pos as f64 - gt_position,
            patch: extract_strip(image, line, pos, cfg.r),
            positive: false,
        });
    }
    audit_line_hypotheses(&hyps)?;
    Ok(hyps)
}

/// Verifies the clean positive/negative split of a line-hypothesis set.
/// Runs on every training set; a violation is a hard error.
pub fn audit_line_hypotheses(hyps: &[LineHypothesis]) -> Result<()> {
    for h in hyps {
        let a = h.offset.abs();
        if h.positive && a > 1.0 {
            return Err(Error::Data(format!(
                "positive line hypothesis at offset {a:.3} violates the 1 px bound"
            )));
        }
        if !h.positive && a < 5.0 {
            return Err(Error::Data(format!(
                "negative line hypothesis at offset {a:.3} violates the 5 px bound"
            )));
        }
    }
    Ok(())
}

/// Labeled oriented-crop hypothesis.
#[derive(Debug, Clone)]
pub struct OrientationHypothesis {
    pub theta_hat: f64,
    /// Signed angular distance to the truth.
    pub offset: f64,
    pub patch: Vec<f64>,
    pub positive: bool,
}

/// Crops the box of size `s` centered at `t`, rotated by `theta`, and
/// resamples it to `side x side` with bicubic interpolation.
pub fn crop_rotated_box(
    image: &GrayImage,
    t: (f64, f64),
    s: (f64, f64),
    theta: f64,
    side: usize,
) -> Result<Vec<f64>> {
    if !(s.0 > 0.0 && s.1 > 0.0) {
        return Err(Error::Data("degenerate box in oriented crop".into()));
    }
    let (c, sn) = (theta.cos(), theta.sin());
    let mut out = Vec::with_capacity(side * side);
    for v in 0..side {
        let fy = ((v as f64 + 0.5) / side as f64 - 0.5) * s.1;
        for u in 0..side {
            let fx = ((u as f64 + 0.5) / side as f64 - 0.5) * s.0;
            let x = t.0 + c * fx - sn * fy;
            let y = t.1 + sn * fx + c * fy;
            out.push(image.sample_bicubic(x, y).clamp(0.0, 1.0));
        }
    }
    Ok(out)
}

/// Builds labeled orientation hypotheses around the detected box:
/// positives at the truth and one positive bound to either side, negatives
/// from the scan grid at `dtheta_neg` or beyond.
pub fn extract_orientation_hypotheses(
    image: &GrayImage,
    t: (f64, f64),
    s: (f64, f64),
    gt_theta: f64,
    cfg: &SpaceConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<OrientationHypothesis>> {
    let mut hyps = Vec::new();
    for frac in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let offset = frac * cfg.dtheta_pos;
        let theta = gt_theta + offset;
        hyps.push(OrientationHypothesis {
            theta_hat: theta,
            offset,
            patch: crop_rotated_box(image, t, s, theta, cfg.crop_side)?,
            positive: true,
        });
    }
    let n = (cfg.theta_range / cfg.theta_step).floor() as i64;
    let mut candidates: Vec<f64> = (-n..=n)
        .map(|k| k as f64 * cfg.theta_step)
        .filter(|theta| (theta - gt_theta).abs() >= cfg.dtheta_neg)
        .collect();
    let keep = (5 * cfg.neg_ratio).min(candidates.len());
    candidates.shuffle(rng);
    let mut chosen: Vec<f64> = candidates.into_iter().take(keep).collect();
    chosen.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
    for theta in chosen {
        hyps.push(OrientationHypothesis {
            theta_hat: theta,
            offset: theta - gt_theta,
            patch: crop_rotated_box(image, t, s, theta, cfg.crop_side)?,
            positive: false,
        });
    }
    audit_orientation_hypotheses(&hyps, cfg)?;
    Ok(hyps)
}

/// Verifies the angular partition of an orientation-hypothesis set.
pub fn audit_orientation_hypotheses(
    hyps: &[OrientationHypothesis],
    cfg: &SpaceConfig,
) -> Result<()> {
    for h in hyps {
        let a = h.offset.abs();
        if h.positive && a > cfg.dtheta_pos + 1e-12 {
            return Err(Error::Data(format!(
                "positive orientation hypothesis at {a:.4} rad violates the {} bound",
                cfg.dtheta_pos
            )));
        }
        if !h.positive && a < cfg.dtheta_neg - 1e-12 {
            return Err(Error::Data(format!(
                "negative orientation hypothesis at {a:.4} rad violates the {} bound",
                cfg.dtheta_neg
            )));
        }
    }
    Ok(())
}

/// Unweighted mean of the positions of the `top_n` best scores; ties break
/// towards the smaller index. Returns the degenerate-field flag (all
/// scores equal), in which case the axis midpoint comes back.
pub fn top_n_mean_position(scores: &[f64], top_n: usize) -> (f64, bool) {
    debug_assert!(!scores.is_empty() && top_n >= 1);
    let first = scores[0];
    if scores.iter().all(|&s| s == first) {
        return ((scores.len() - 1) as f64 / 2.0, true);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    let n = top_n.min(scores.len());
    let sum: f64 = idx[..n].iter().map(|&i| i as f64).sum();
    (sum / n as f64, false)
}

/// Scores every candidate row (or column) and averages the best `top_n`
/// positions. A flat score field falls back to the axis midpoint with a
/// warning.
pub fn detect_line(
    model: &NetworkModel,
    image: &GrayImage,
    line: BoundingLine,
    cfg: &SpaceConfig,
) -> Result<f64> {
    let len = line.axis_len(image.dims());
    let expected = cfg.line_input_dim(line);
    if model.input_dim() != expected {
        return Err(Error::Dimension(format!(
            "line {} detector expects input {} but image {}x{} strips give {}",
            line.index(),
            model.input_dim(),
            image.width(),
            image.height(),
            expected
        )));
    }
    use rayon::prelude::*;
    let scores: Vec<f64> = (0..len as i64)
        .into_par_iter()
        .map(|pos| {
            let strip = extract_strip(image, line, pos, cfg.r);
            model.score(&strip)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (pos, degenerate) = top_n_mean_position(&scores, cfg.top_n);
    if degenerate {
        log::warn!(
            "flat score field for line {}; returning axis midpoint",
            line.index()
        );
    }
    Ok(pos)
}

/// Rectangle center and size from the four line positions.
pub fn derive_box(l1: f64, l2: f64, l3: f64, l4: f64) -> Result<((f64, f64), (f64, f64))> {
    if !(l2 > l1 && l4 > l3) {
        return Err(Error::Data(format!(
            "degenerate box: lines ({l1}, {l2}, {l3}, {l4}) give a non-positive extent"
        )));
    }
    let t = (0.5 * (l3 + l4), 0.5 * (l1 + l2));
    let s = (l4 - l3, l2 - l1);
    Ok((t, s))
}

/// Scans the orientation grid and averages the best `top_n` candidate
/// angles. A flat field falls back to 0 with a warning.
pub fn detect_orientation(
    model: &NetworkModel,
    image: &GrayImage,
    t: (f64, f64),
    s: (f64, f64),
    cfg: &SpaceConfig,
) -> Result<f64> {
    let n = (cfg.theta_range / cfg.theta_step).floor() as i64;
    let angles: Vec<f64> = (-n..=n).map(|k| k as f64 * cfg.theta_step).collect();
    use rayon::prelude::*;
    let scores: Vec<f64> = angles
        .par_iter()
        .map(|&theta| {
            let patch = crop_rotated_box(image, t, s, theta, cfg.crop_side)?;
            model.score(&patch)
        })
        .collect::<Result<Vec<f64>>>()?;
    let first = scores[0];
    if scores.iter().all(|&v| v == first) {
        log::warn!("flat orientation score field; returning 0");
        return Ok(0.0);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    let k = cfg.top_n.min(idx.len());
    Ok(idx[..k].iter().map(|&i| angles[i]).sum::<f64>() / k as f64)
}

/// The five trained localization networks plus their shared parameters.
#[derive(Debug, Clone)]
pub struct SpaceDetectorSet {
    /// Indexed by [`BOUNDING_LINES`] order.
    pub lines: Vec<NetworkModel>,
    pub orientation: NetworkModel,
    pub config: SpaceConfig,
}

impl SpaceDetectorSet {
    /// Full localization: four independent line detections, box derivation,
    /// then orientation conditioned on the box. Returns box-semantics
    /// parameters (center, size in pixels, orientation).
    pub fn estimate_space(&self, image: &GrayImage) -> Result<SpaceParams> {
        if image.dims() != self.config.image_dims {
            return Err(Error::Dimension(format!(
                "image is {}x{} but the detectors were trained on {}x{}",
                image.width(),
                image.height(),
                self.config.image_dims.0,
                self.config.image_dims.1
            )));
        }
        let positions = BOUNDING_LINES
            .iter()
            .map(|&line| detect_line(&self.lines[line.index() - 1], image, line, &self.config))
            .collect::<Result<Vec<f64>>>()?;
        let (t, s) = derive_box(positions[0], positions[1], positions[2], positions[3])?;
        let theta = detect_orientation(&self.orientation, image, t, s, &self.config)?;
        SpaceParams::new(t, theta, s)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for line in BOUNDING_LINES {
            self.lines[line.index() - 1].save(&dir.join(format!("line_{}.json", line.index())))?;
        }
        self.orientation.save(&dir.join("orientation.json"))?;
        let manifest = SpaceBundleManifest {
            version: 1,
            config: self.config,
            normalization: "intensity/2^bit_depth".into(),
        };
        let json = serde_json::to_string_pretty(&manifest)?;
        let path = dir.join("manifest.json");
        std::fs::write(&path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: SpaceBundleManifest = serde_json::from_str(&text)?;
        let lines = BOUNDING_LINES
            .iter()
            .map(|line| NetworkModel::load(&dir.join(format!("line_{}.json", line.index()))))
            .collect::<Result<Vec<_>>>()?;
        let orientation = NetworkModel::load(&dir.join("orientation.json"))?;
        Ok(SpaceDetectorSet {
            lines,
            orientation,
            config: manifest.config,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct SpaceBundleManifest {
    version: u32,
    config: SpaceConfig,
    normalization: String,
}

/// SdAE pre-training followed by DNN fine-tuning on labeled patch vectors.
/// Shared by the line, orientation and mode detectors.
pub fn train_patch_classifier(
    patches: Vec<(Vec<f64>, f64)>,
    hidden_dims: &[usize],
    sdae_cfg: &TrainConfig,
    dnn_cfg: &TrainConfig,
) -> Result<(NetworkModel, TrainingLog)> {
    if patches.is_empty() {
        return Err(Error::Data("no training hypotheses".into()));
    }
    let input_dim = patches[0].0.len();
    let mut dims = vec![input_dim];
    dims.extend_from_slice(hidden_dims);
    let unlabeled: Vec<Vec<f64>> = patches.iter().map(|(x, _)| x.clone()).collect();
    let (encoders, sdae_losses) = stack_sdae(&dims, &unlabeled, sdae_cfg)?;
    drop(unlabeled);
    let model = init_dnn_from_sdae(&encoders, 1, derive_seed(dnn_cfg.seed, 0x0u64))?;
    let (model, dnn_losses) = train_dnn(&model, &patches, dnn_cfg)?;
    Ok((
        model,
        TrainingLog {
            sdae_losses,
            dnn_losses,
        },
    ))
}

/// Per-epoch loss traces of one detector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingLog {
    pub sdae_losses: Vec<Vec<f64>>,
    pub dnn_losses: Vec<f64>,
}

/// Undersamples the majority class to at most `ratio` negatives per
/// positive (1.0 restores a 1:1 balance), seeded. Detectors that rank
/// scan candidates keep a larger ratio so the negative pool covers the
/// whole axis; a 1:1 cut was found to leave interior positions unseen and
/// scoring high.
pub fn balance_classes_ratio(
    mut samples: Vec<(Vec<f64>, f64)>,
    ratio: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Vec<f64>, f64)>> {
    let n_pos = samples.iter().filter(|(_, y)| *y == 1.0).count();
    let n_neg = samples.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data(format!(
            "single-class training set ({n_pos} positive, {n_neg} negative)"
        )));
    }
    let keep_neg = ((n_pos as f64 * ratio).round() as usize).clamp(1, n_neg);
    if keep_neg == n_neg {
        return Ok(samples);
    }
    let mut neg_idx: Vec<usize> = Vec::new();
    for (i, (_, y)) in samples.iter().enumerate() {
        if *y == 0.0 {
            neg_idx.push(i);
        }
    }
    neg_idx.shuffle(rng);
    let mut keep_flags = vec![true; samples.len()];
    for &i in &neg_idx[keep_neg..] {
        keep_flags[i] = false;
    }
    let mut i = 0;
    samples.retain(|_| {
        let k = keep_flags[i];
        i += 1;
        k
    });
    Ok(samples)
}

/// Balances classes by undersampling the negatives to a 1:1 ratio, seeded.
pub fn balance_classes(
    samples: Vec<(Vec<f64>, f64)>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Vec<f64>, f64)>> {
    balance_classes_ratio(samples, 1.0, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn default_cfg(dims: (usize, usize)) -> SpaceConfig {
        SpaceConfig {
            r: 7,
            top_n: 10,
            theta_step: 0.0017,
            theta_range: 0.26,
            dtheta_pos: 0.017,
            dtheta_neg: 0.034,
            crop_side: 64,
            neg_ratio: 3,
            image_dims: dims,
        }
    }

    fn flat_image(dims: (usize, usize)) -> GrayImage {
        GrayImage::constant(dims.0, dims.1, 0.3).unwrap()
    }

    #[test]
    fn positives_are_exactly_three_interior_positions() {
        let img = flat_image((64, 256));
        let cfg = default_cfg((64, 256));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let hyps =
            extract_line_hypotheses(&img, 100.0, BoundingLine::Top, &cfg, &mut rng).unwrap();
        let pos: Vec<i64> = hyps
            .iter()
            .filter(|h| h.positive)
            .map(|h| h.position)
            .collect();
        assert_eq!(pos, vec![99, 100, 101]);
        // Negatives subsampled to 3x positives.
        assert_eq!(hyps.len() - 3, 9);
    }

    #[test]
    fn gap_offsets_appear_in_neither_class() {
        let img = flat_image((64, 256));
        let cfg = default_cfg((64, 256));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hyps =
            extract_line_hypotheses(&img, 100.0, BoundingLine::Top, &cfg, &mut rng).unwrap();
        for h in &hyps {
            let a = h.offset.abs();
            assert!(a <= 1.0 || a >= 5.0, "offset {a} in the gap");
        }
        assert!(hyps.iter().all(|h| h.position != 103));
    }

    #[test]
    fn strip_dimension_matches_desk_arithmetic() {
        // 256x256 image, r = 7: strips are 15 x 256 = 3840 long; the
        // full-scale analog is 2048 x 15 = 30720.
        let cfg = default_cfg((256, 256));
        assert_eq!(cfg.line_input_dim(BoundingLine::Top), 3840);
        let paper = default_cfg((2048, 2048));
        assert_eq!(paper.line_input_dim(BoundingLine::Left), 30720);
    }

    #[test]
    fn strips_replicate_edges() {
        let mut img = flat_image((16, 16));
        img.set(0, 0, 0.9);
        let strip = extract_strip(&img, BoundingLine::Top, 0, 2);
        // Rows -2, -1 replicate row 0.
        assert_eq!(strip[0], 0.9);
        assert_eq!(strip[16], 0.9);
        assert_eq!(strip[32], 0.9);
    }

    #[test]
    fn audit_rejects_mislabeled_hypotheses() {
        let bad = vec![LineHypothesis {
            line: BoundingLine::Top,
            position: 3,
            offset: 3.0,
            patch: vec![0.0],
            positive: true,
        }];
        assert!(audit_line_hypotheses(&bad).is_err());
        let bad_neg = vec![LineHypothesis {
            line: BoundingLine::Top,
            position: 3,
            offset: 2.0,
            patch: vec![0.0],
            positive: false,
        }];
        assert!(audit_line_hypotheses(&bad_neg).is_err());
    }

    #[test]
    fn top_n_average_of_symmetric_peak_recovers_center() {
        // Scores exp(-|pos - p0|): the top 10 sit symmetrically around p0.
        let p0 = 120.0;
        let scores: Vec<f64> = (0..256).map(|i| (-(i as f64 - p0).abs()).exp()).collect();
        let (pos, degenerate) = top_n_mean_position(&scores, 10);
        assert!(!degenerate);
        assert!((pos - p0).abs() < 0.51, "pos {pos}");
        let (argmax, _) = top_n_mean_position(&scores, 1);
        assert_eq!(argmax, 120.0);
    }

    #[test]
    fn top_n_average_is_translation_equivariant() {
        let base: Vec<f64> = (0..200)
            .map(|i| (-(i as f64 - 77.0).powi(2) / 50.0).exp())
            .collect();
        let (p_base, _) = top_n_mean_position(&base, 10);
        for shift in [1usize, 5, 23] {
            let mut shifted = vec![0.0; 200];
            for i in 0..200 - shift {
                shifted[i + shift] = base[i];
            }
            // Keep the field free of spurious ties in the shifted-in region.
            for (i, v) in shifted.iter_mut().enumerate().take(shift) {
                *v = 1e-9 * (i + 1) as f64;
            }
            let (p_shift, _) = top_n_mean_position(&shifted, 10);
            assert!(
                (p_shift - p_base - shift as f64).abs() < 1e-9,
                "shift {shift}: {p_shift} vs {p_base}"
            );
        }
    }

    #[test]
    fn flat_scores_fall_back_to_midpoint() {
        let scores = vec![0.5; 101];
        let (pos, degenerate) = top_n_mean_position(&scores, 10);
        assert!(degenerate);
        assert_eq!(pos, 50.0);
    }

    #[test]
    fn derive_box_examples() {
        let ((tx, ty), (sx, sy)) = derive_box(10.0, 100.0, 20.0, 120.0).unwrap();
        assert_eq!((tx, ty), (70.0, 55.0));
        assert_eq!((sx, sy), (100.0, 90.0));
        let ((tx, ty), (sx, sy)) = derive_box(0.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!((tx, ty), (0.5, 0.5));
        assert_eq!((sx, sy), (1.0, 1.0));
        assert!(derive_box(10.0, 10.0, 0.0, 5.0).is_err());
    }

    #[test]
    fn orientation_grid_count_follows_floor_formula() {
        let cfg = default_cfg((64, 64));
        let n = (cfg.theta_range / cfg.theta_step).floor() as i64;
        let count = 2 * n + 1;
        assert_eq!(n, 152);
        assert_eq!(count, 305);
    }

    #[test]
    fn orientation_partition_has_a_gap() {
        let img = flat_image((96, 96));
        let cfg = default_cfg((96, 96));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let hyps = extract_orientation_hypotheses(
            &img,
            (48.0, 48.0),
            (40.0, 30.0),
            0.01,
            &cfg,
            &mut rng,
        )
        .unwrap();
        assert_eq!(hyps.iter().filter(|h| h.positive).count(), 5);
        for h in &hyps {
            let a = h.offset.abs();
            assert!(a <= cfg.dtheta_pos + 1e-12 || a >= cfg.dtheta_neg - 1e-12);
        }
    }

    #[test]
    fn rotated_crop_recovers_axis_aligned_content() {
        // Bright axis-aligned box; crop at theta 0 spans exactly the box.
        let mut img = flat_image((64, 64));
        for y in 20..40 {
            for x in 16..48 {
                img.set(x, y, 0.9);
            }
        }
        let patch = crop_rotated_box(&img, (31.5, 29.5), (32.0, 20.0), 0.0, 16).unwrap();
        let mean: f64 = patch.iter().sum::<f64>() / patch.len() as f64;
        assert!(mean > 0.85, "mean {mean}");
    }

    #[test]
    fn balance_keeps_one_to_one_ratio() {
        let mut samples = Vec::new();
        for i in 0..20 {
            samples.push((vec![i as f64], 0.0));
        }
        for i in 0..5 {
            samples.push((vec![i as f64], 1.0));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let balanced = balance_classes(samples, &mut rng).unwrap();
        let pos = balanced.iter().filter(|(_, y)| *y == 1.0).count();
        assert_eq!(pos, 5);
        assert_eq!(balanced.len(), 10);
        assert!(balance_classes(vec![(vec![0.0], 0.0)], &mut rng).is_err());
    }
}
