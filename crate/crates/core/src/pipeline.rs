//! Training and segmentation orchestration shared by the CLI, the
//! cross-validation harness and the C API.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{augment_entries, AugmentConfig, LoadedEntry};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::modes::{
    fabricate_mode_hypotheses, segment_trace, ModeDetectorSet,
};
use crate::nn::{derive_seed, TrainConfig};
use crate::shape::{
    build_ssm, cluster_aspect_ratios, fixed_threshold_split, procrustes_align, GroupSplit, Shape,
    ShapeModel, SpaceParams, SplitSource,
};
use crate::space::{
    balance_classes_ratio, extract_line_hypotheses, extract_orientation_hypotheses,
    train_patch_classifier, SpaceDetectorSet, TrainingLog, BOUNDING_LINES,
};

/// Trained localization stage plus its per-detector loss traces.
pub struct SpaceStage {
    pub set: SpaceDetectorSet,
    pub logs: BTreeMap<String, TrainingLog>,
}

/// Trains the four line detectors (concurrently) and the orientation
/// detector on augmented entries.
pub fn train_space_stage(entries: &[LoadedEntry], cfg: &RunConfig) -> Result<SpaceStage> {
    let space_cfg = crate::space::SpaceConfig {
        image_dims: cfg.image_dims,
        ..cfg.space
    };
    let augmented = augment_entries(
        entries,
        &AugmentConfig {
            seed: derive_seed(cfg.seed, 0x5AC3),
            ..cfg.augment
        },
    )?;

    let mut logs = BTreeMap::new();
    let line_results: Vec<(String, (crate::nn::NetworkModel, TrainingLog))> = BOUNDING_LINES
        .par_iter()
        .map(|&line| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x11_00 + line.index() as u64));
            let mut samples: Vec<(Vec<f64>, f64)> = Vec::new();
            for e in &augmented {
                let (l1, l2, l3, l4) = e.gt_lines();
                let gt = match line {
                    crate::space::BoundingLine::Top => l1,
                    crate::space::BoundingLine::Bottom => l2,
                    crate::space::BoundingLine::Left => l3,
                    crate::space::BoundingLine::Right => l4,
                };
                let hyps = extract_line_hypotheses(&e.image, gt, line, &space_cfg, &mut rng)?;
                samples.extend(
                    hyps.into_iter()
                        .map(|h| (h.patch, if h.positive { 1.0 } else { 0.0 })),
                );
            }
            let samples = balance_classes_ratio(samples, cfg.space_balance_ratio, &mut rng)?;
            let sdae_cfg = TrainConfig {
                seed: derive_seed(cfg.seed, 0x21_00 + line.index() as u64),
                ..cfg.sdae
            };
            let dnn_cfg = TrainConfig {
                seed: derive_seed(cfg.seed, 0x22_00 + line.index() as u64),
                ..cfg.dnn
            };
            let trained =
                train_patch_classifier(samples, &cfg.line_hidden, &sdae_cfg, &dnn_cfg)
                    .map_err(|e| {
                        Error::Data(format!("line {} detector: {e}", line.index()))
                    })?;
            Ok((format!("line_{}", line.index()), trained))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut lines = Vec::with_capacity(4);
    for (name, (model, log)) in line_results {
        logs.insert(name, log);
        lines.push(model);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x11_05));
    let mut samples: Vec<(Vec<f64>, f64)> = Vec::new();
    for e in &augmented {
        let gt_box = e.gt_box()?;
        let hyps = extract_orientation_hypotheses(
            &e.image,
            gt_box.t,
            gt_box.s,
            e.gt_theta,
            &space_cfg,
            &mut rng,
        )?;
        samples.extend(
            hyps.into_iter()
                .map(|h| (h.patch, if h.positive { 1.0 } else { 0.0 })),
        );
    }
    let samples = balance_classes_ratio(samples, cfg.space_balance_ratio, &mut rng)?;
    let sdae_cfg = TrainConfig {
        seed: derive_seed(cfg.seed, 0x21_05),
        ..cfg.sdae
    };
    let dnn_cfg = TrainConfig {
        seed: derive_seed(cfg.seed, 0x22_05),
        ..cfg.dnn
    };
    let (orientation, log) =
        train_patch_classifier(samples, &cfg.orientation_hidden, &sdae_cfg, &dnn_cfg)
            .map_err(|e| Error::Data(format!("orientation detector: {e}")))?;
    logs.insert("orientation".into(), log);

    Ok(SpaceStage {
        set: SpaceDetectorSet {
            lines,
            orientation,
            config: space_cfg,
        },
        logs,
    })
}

/// Group split plus per-group shape models and the mode detectors.
pub struct ShapeStage {
    pub models: Vec<ShapeModel>,
    pub threshold: f64,
    pub split_source: SplitSource,
    pub detectors: ModeDetectorSet,
    pub logs: BTreeMap<String, TrainingLog>,
}

/// Aspect ratio of a ground-truth box (width / height).
fn aspect_of(e: &LoadedEntry) -> f64 {
    let bb = e.landmarks.bbox();
    let (w, h) = bb.size();
    w / h
}

/// Splits the originals into aspect-ratio groups; a degenerate population
/// falls back to a single group covering everything.
fn split_groups(entries: &[LoadedEntry], cfg: &RunConfig) -> Result<(f64, SplitSource, GroupSplit)> {
    let ratios: Vec<f64> = entries.iter().map(aspect_of).collect();
    let split = match cfg.aspect_threshold {
        Some(t) => fixed_threshold_split(&ratios, t),
        None => match cluster_aspect_ratios(&ratios, cfg.seed) {
            Ok(s) => s,
            Err(Error::DegenerateSplit(msg)) => {
                log::warn!("single-group fallback: {msg}");
                GroupSplit {
                    threshold: f64::INFINITY,
                    assignments: vec![0; ratios.len()],
                    source: SplitSource::Fixed,
                }
            }
            Err(e) => return Err(e),
        },
    };
    // A split leaving one side too small for a model also falls back.
    let n1 = split.assignments.iter().filter(|&&g| g == 1).count();
    let n0 = split.assignments.len() - n1;
    if n1 > 0 && (n0 < cfg.min_group_size || n1 < cfg.min_group_size) {
        log::warn!(
            "single-group fallback: split {n0}/{n1} leaves a group below {}",
            cfg.min_group_size
        );
        return Ok((
            f64::INFINITY,
            SplitSource::Fixed,
            GroupSplit {
                threshold: f64::INFINITY,
                assignments: vec![0; split.assignments.len()],
                source: SplitSource::Fixed,
            },
        ));
    }
    Ok((split.threshold, split.source, split))
}

/// Trains the shape stage: per-group Procrustes + PCA models, then one
/// detector per mode (concurrently across modes).
pub fn train_shape_stage(entries: &[LoadedEntry], cfg: &RunConfig) -> Result<ShapeStage> {
    let originals: Vec<&LoadedEntry> = entries.iter().collect();
    if originals.len() < 2 {
        return Err(Error::Data("need at least two training entries".into()));
    }
    let (threshold, split_source, split) = split_groups(entries, cfg)?;
    let group_count = 1 + split.assignments.iter().max().copied().unwrap_or(0) as usize;

    let mut models = Vec::with_capacity(group_count);
    for g in 0..group_count as u32 {
        let group_shapes: Vec<Shape> = originals
            .iter()
            .zip(&split.assignments)
            .filter(|(_, &a)| a == g)
            .map(|(e, _)| e.landmarks.clone())
            .collect();
        let gpa = procrustes_align(&group_shapes)?;
        models.push(build_ssm(&gpa.aligned, cfg.energy_fraction, g)?);
    }

    // Appearance training set: originals plus correspondence-preserving
    // augmented copies. Copies inherit the split assignment through the
    // group field, pinned before augmentation.
    let assigned: Vec<LoadedEntry> = entries
        .iter()
        .zip(&split.assignments)
        .map(|(e, &g)| {
            let mut e = e.clone();
            e.group = Some(g);
            e
        })
        .collect();
    let augmented = augment_entries(
        &assigned,
        &AugmentConfig {
            vertical_flips: false,
            seed: derive_seed(cfg.seed, 0x5AC4),
            ..cfg.augment
        },
    )?;
    let entry_groups: Vec<u32> = augmented
        .iter()
        .map(|e| e.group.expect("assigned before augmentation"))
        .collect();

    let k_train = cfg
        .modes
        .min(models.iter().map(|m| m.mode_count()).max().unwrap_or(0));
    if k_train == 0 {
        return Err(Error::Data(
            "shape model has no variation modes to train on".into(),
        ));
    }

    let mode_results: Vec<(usize, (crate::nn::NetworkModel, TrainingLog))> = (1..=k_train)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x31_00 + k as u64));
            let mut samples: Vec<(Vec<f64>, f64)> = Vec::new();
            for (e, &g) in augmented.iter().zip(&entry_groups) {
                if !e.correspondence_ok {
                    continue;
                }
                let model = &models[g as usize];
                if k > model.mode_count() {
                    continue;
                }
                let gt_box = e.gt_box()?;
                let sp = gt_box.align_to_bbox(&model.mean_shape().bbox())?;
                let hyps = fabricate_mode_hypotheses(
                    model, &e.image, &e.landmarks, &sp, k, &cfg.mode, &mut rng, 3,
                )?;
                samples.extend(
                    hyps.into_iter()
                        .map(|h| (h.feature, if h.positive { 1.0 } else { 0.0 })),
                );
            }
            let samples = balance_classes_ratio(samples, cfg.mode_balance_ratio, &mut rng)?;
            let sdae_cfg = TrainConfig {
                seed: derive_seed(cfg.seed, 0x41_00 + k as u64),
                ..cfg.sdae
            };
            let dnn_cfg = TrainConfig {
                seed: derive_seed(cfg.seed, 0x42_00 + k as u64),
                ..cfg.dnn
            };
            let trained = train_patch_classifier(samples, &cfg.mode_hidden, &sdae_cfg, &dnn_cfg)
                .map_err(|e| Error::Data(format!("mode {k} detector: {e}")))?;
            Ok((k, trained))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut logs = BTreeMap::new();
    let mut detectors = Vec::with_capacity(k_train);
    for (k, (model, log)) in mode_results {
        logs.insert(format!("mode_{k:02}"), log);
        detectors.push(model);
    }

    Ok(ShapeStage {
        models,
        threshold,
        split_source,
        detectors: ModeDetectorSet {
            models: detectors,
            config: cfg.mode,
        },
        logs,
    })
}

/// On-disk description of the shape stage.
#[derive(Serialize, Deserialize)]
struct GroupsFile {
    version: u32,
    threshold: f64,
    source: SplitSource,
    energy_fraction: f64,
    models: Vec<PathBuf>,
}

/// Loaded shape bundle: group models, threshold and mode detectors.
pub struct ShapeBundle {
    pub models: Vec<ShapeModel>,
    pub threshold: f64,
    pub detectors: ModeDetectorSet,
}

impl ShapeBundle {
    pub fn select_model(&self, aspect_ratio: f64) -> Result<&ShapeModel> {
        let group = u32::from(aspect_ratio > self.threshold);
        self.models
            .iter()
            .find(|m| m.group_id() == group)
            .ok_or_else(|| Error::Data(format!("no shape model for group {group}")))
    }
}

pub fn save_shape_stage(stage: &ShapeStage, dir: &Path, energy_fraction: f64) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut model_files = Vec::new();
    for m in &stage.models {
        let name = PathBuf::from(format!("model_g{}.json", m.group_id()));
        m.save(&dir.join(&name))?;
        model_files.push(name);
    }
    let groups = GroupsFile {
        version: 1,
        threshold: stage.threshold,
        source: stage.split_source,
        energy_fraction,
        models: model_files.clone(),
    };
    let json = serde_json::to_string_pretty(&groups)?;
    let gpath = dir.join("groups.json");
    std::fs::write(&gpath, json).map_err(|e| Error::io(gpath, e))?;
    let refs: Vec<PathBuf> = model_files
        .iter()
        .map(|p| PathBuf::from("..").join(p))
        .collect();
    stage.detectors.save(&dir.join("modes"), &refs)
}

pub fn load_shape_bundle(dir: &Path) -> Result<ShapeBundle> {
    let gpath = dir.join("groups.json");
    let text = std::fs::read_to_string(&gpath).map_err(|e| Error::io(&gpath, e))?;
    let groups: GroupsFile = serde_json::from_str(&text)?;
    let models = groups
        .models
        .iter()
        .map(|p| ShapeModel::load(&dir.join(p)))
        .collect::<Result<Vec<_>>>()?;
    let (detectors, _refs) = ModeDetectorSet::load(&dir.join("modes"))?;
    Ok(ShapeBundle {
        models,
        threshold: groups.threshold,
        detectors,
    })
}

/// Result of segmenting one image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentationOutput {
    pub image_path: PathBuf,
    /// Final landmarks, M points.
    pub landmarks: Vec<(f64, f64)>,
    /// Detected box parameters (center/size in pixels, orientation).
    pub space_params: SpaceParams,
    pub group: u32,
    pub modes_used: usize,
    /// Estimated raw mode weights.
    pub weights: Vec<f64>,
}

impl SegmentationOutput {
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

/// Full segmentation of one image: localization, group selection, then
/// ordered mode refinement. `k_use` of `None` uses every trained detector.
pub fn segment_image(
    image: &GrayImage,
    image_path: &Path,
    space: &SpaceDetectorSet,
    shapes: &ShapeBundle,
    k_use: Option<usize>,
) -> Result<SegmentationOutput> {
    let (trace, out) = segment_image_trace(image, image_path, space, shapes, k_use)?;
    drop(trace);
    Ok(out)
}

/// As [`segment_image`], returning the shape after every mode stage.
pub fn segment_image_trace(
    image: &GrayImage,
    image_path: &Path,
    space: &SpaceDetectorSet,
    shapes: &ShapeBundle,
    k_use: Option<usize>,
) -> Result<(Vec<Shape>, SegmentationOutput)> {
    let k_use = k_use.unwrap_or(shapes.detectors.mode_count());
    if k_use > shapes.detectors.mode_count() {
        return Err(Error::Data(format!(
            "{k_use} modes requested but the bundle holds {}",
            shapes.detectors.mode_count()
        )));
    }
    let box_params = space.estimate_space(image)?;
    let aspect = box_params.s.0 / box_params.s.1;
    let model = shapes.select_model(aspect)?;
    let (trace, _alignment, weights) =
        segment_trace(image, &box_params, model, &shapes.detectors, k_use)?;
    let final_shape = trace.last().expect("non-empty trace");
    let out = SegmentationOutput {
        image_path: image_path.to_path_buf(),
        landmarks: final_shape.points(),
        space_params: box_params,
        group: model.group_id(),
        modes_used: trace.len() - 1,
        weights,
    };
    Ok((trace, out))
}

/// Configures the global worker pool; call once per process before any
/// parallel work.
pub fn configure_jobs(jobs: Option<usize>) {
    if let Some(n) = jobs {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}
