//! Evaluation: per-image segmentation metrics, aggregate reports in the
//! "Mean±Std (Min/Max)" layout, overlay rendering, and the two-fold
//! cross-validation harness.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::LoadedEntry;
use crate::error::{Error, Result};
use crate::image::{rasterize_shape, rasterize_shape_unchecked, GrayImage, Mask};
use crate::metrics::{acd, dsc, jaccard, signed_rank_p_greater};
use crate::pipeline::{
    segment_image_trace, train_shape_stage, train_space_stage, ShapeBundle, SpaceStage,
};
use crate::shape::Shape;

/// Metrics of one segmented image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerImageEval {
    pub id: String,
    pub group: u32,
    pub dsc: f64,
    pub jaccard: f64,
    pub acd_mm: f64,
    /// DSC after applying the k largest modes; element 0 is the aligned
    /// mean shape.
    pub dsc_by_modes: Vec<f64>,
    pub translation_err_px: f64,
    pub translation_err_mm: f64,
    pub scale_err_px: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orientation_err_rad: Option<f64>,
}

/// Mean/std/min/max of one metric.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

pub fn aggregate(values: &[f64]) -> Option<Aggregate> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(Aggregate {
        mean,
        std: var.sqrt(),
        min: values.iter().cloned().fold(f64::INFINITY, f64::min),
        max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Full evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    /// Entry ids per validation fold.
    pub folds: Vec<Vec<String>>,
    pub per_image: Vec<PerImageEval>,
    pub aggregates: BTreeMap<String, Aggregate>,
    /// One-sided paired sign-rank p-value that the full refinement beats
    /// the aligned-mean baseline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_full_vs_mean_shape: Option<f64>,
}

impl EvalReport {
    pub fn from_per_image(per_image: Vec<PerImageEval>, folds: Vec<Vec<String>>, seed: u64) -> Self {
        let mut aggregates = BTreeMap::new();
        let collect = |f: &dyn Fn(&PerImageEval) -> Option<f64>| -> Vec<f64> {
            per_image.iter().filter_map(f).collect()
        };
        let mut put = |name: &str, values: Vec<f64>| {
            if let Some(a) = aggregate(&values) {
                aggregates.insert(name.to_string(), a);
            }
        };
        put("dsc", collect(&|e| Some(e.dsc)));
        put("jaccard", collect(&|e| Some(e.jaccard)));
        put("acd_mm", collect(&|e| Some(e.acd_mm)));
        put("translation_err_px", collect(&|e| Some(e.translation_err_px)));
        put("translation_err_mm", collect(&|e| Some(e.translation_err_mm)));
        put("scale_err_px", collect(&|e| Some(e.scale_err_px)));
        put("orientation_err_rad", collect(&|e| e.orientation_err_rad));
        let max_modes = per_image
            .iter()
            .map(|e| e.dsc_by_modes.len())
            .max()
            .unwrap_or(0);
        for k in 0..max_modes {
            put(
                &format!("dsc_k{k}"),
                collect(&|e| e.dsc_by_modes.get(k).copied()),
            );
        }

        let p_full_vs_mean_shape = {
            let finals: Vec<f64> = per_image.iter().map(|e| e.dsc).collect();
            let baselines: Vec<f64> = per_image
                .iter()
                .filter_map(|e| e.dsc_by_modes.first().copied())
                .collect();
            if baselines.len() == finals.len() && finals.len() >= 5 {
                signed_rank_p_greater(&finals, &baselines).ok()
            } else {
                None
            }
        };

        EvalReport {
            seed,
            folds,
            per_image,
            aggregates,
            p_full_vs_mean_shape,
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Aligned-column text table in the "Mean±Standard Deviation (Min/Max)"
    /// layout.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<22}{}\n",
            "Metric", "Mean±Standard Deviation (Min/Max)"
        ));
        for (name, a) in &self.aggregates {
            out.push_str(&format!(
                "{:<22}{:.4}±{:.4} ({:.4}/{:.4})\n",
                name, a.mean, a.std, a.min, a.max
            ));
        }
        if let Some(p) = self.p_full_vs_mean_shape {
            out.push_str(&format!("{:<22}{:.3e}\n", "p(full > mean shape)", p));
        }
        out
    }

    pub fn save_table(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.table()).map_err(|e| Error::io(path, e))
    }
}

/// Compares a segmentation trace against an entry's ground truth.
pub fn evaluate_entry(
    entry: &LoadedEntry,
    trace: &[Shape],
    detected_box: &crate::shape::SpaceParams,
    group: u32,
) -> Result<PerImageEval> {
    let dims = entry.image.dims();
    let gt_mask = rasterize_shape(&entry.landmarks, dims)?;
    let final_shape = trace.last().ok_or_else(|| Error::Data("empty trace".into()))?;
    let seg_mask = rasterize_shape_unchecked(final_shape, dims);

    let spacing = 0.5 * (entry.image.spacing.0 + entry.image.spacing.1);
    let dsc_v = dsc(&gt_mask, &seg_mask)?;
    let jac_v = jaccard(&gt_mask, &seg_mask)?;
    let acd_v = acd(
        &entry.landmarks.side_polygons(),
        &final_shape.side_polygons(),
        spacing,
    )?;

    let mut dsc_by_modes = Vec::with_capacity(trace.len());
    for shape in trace {
        let m = rasterize_shape_unchecked(shape, dims);
        dsc_by_modes.push(dsc(&gt_mask, &m)?);
    }

    let gt_box = entry.gt_box()?;
    let translation_err_px = ((detected_box.t.0 - gt_box.t.0).powi(2)
        + (detected_box.t.1 - gt_box.t.1).powi(2))
    .sqrt();
    let scale_err_px = 0.5
        * ((detected_box.s.0 - gt_box.s.0).abs() + (detected_box.s.1 - gt_box.s.1).abs());
    let orientation_err_rad = entry
        .truth
        .as_ref()
        .map(|t| (detected_box.theta - t.space_params.theta).abs());

    Ok(PerImageEval {
        id: entry.id.clone(),
        group,
        dsc: dsc_v,
        jaccard: jac_v,
        acd_mm: acd_v,
        dsc_by_modes,
        translation_err_px,
        translation_err_mm: translation_err_px * spacing,
        scale_err_px,
        orientation_err_rad,
    })
}

/// Seeded partition into `folds` nearly equal disjoint parts covering all
/// indices.
pub fn partition_folds(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds == 0 || folds > n {
        return Err(Error::Data(format!(
            "cannot split {n} entries into {folds} folds"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut out = vec![Vec::new(); folds];
    for (i, v) in idx.into_iter().enumerate() {
        out[i % folds].push(v);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

/// Cross-validation: trains on all folds but one, validates on the held-out
/// fold, and pools the per-image results across rounds.
pub fn crossval(
    entries: &[LoadedEntry],
    cfg: &RunConfig,
    folds: usize,
    seed: u64,
) -> Result<EvalReport> {
    let parts = partition_folds(entries.len(), folds, seed)?;
    let mut per_image = Vec::with_capacity(entries.len());
    let mut fold_ids = Vec::with_capacity(folds);

    for (round, val_fold) in parts.iter().enumerate() {
        let train: Vec<LoadedEntry> = parts
            .iter()
            .enumerate()
            .filter(|(r, _)| *r != round)
            .flat_map(|(_, f)| f.iter().map(|&i| entries[i].clone()))
            .collect();
        log::info!(
            "cross-validation round {}: {} train / {} validation",
            round + 1,
            train.len(),
            val_fold.len()
        );
        let space = train_space_stage(&train, cfg)?;
        let shape_stage = train_shape_stage(&train, cfg)?;
        let bundle = ShapeBundle {
            models: shape_stage.models,
            threshold: shape_stage.threshold,
            detectors: shape_stage.detectors,
        };

        let mut ids = Vec::with_capacity(val_fold.len());
        for &i in val_fold {
            let entry = &entries[i];
            ids.push(entry.id.clone());
            per_image.push(evaluate_with(&space, &bundle, entry, cfg.modes)?);
        }
        fold_ids.push(ids);
    }

    Ok(EvalReport::from_per_image(per_image, fold_ids, seed))
}

/// Segments one entry with trained stages and scores it.
pub fn evaluate_with(
    space: &SpaceStage,
    bundle: &ShapeBundle,
    entry: &LoadedEntry,
    modes: usize,
) -> Result<PerImageEval> {
    let k = modes.min(bundle.detectors.mode_count());
    let (trace, out) = segment_image_trace(
        &entry.image,
        Path::new(&entry.id),
        &space.set,
        bundle,
        Some(k),
    )?;
    evaluate_entry(entry, &trace, &out.space_params, out.group)
}

/// Writes an overlay PNG: ground truth green, segmentation red, overlap
/// blue, over the grayscale image.
pub fn write_overlay_png(
    image: &GrayImage,
    gt: &Mask,
    seg: &Mask,
    path: &Path,
) -> Result<()> {
    let (w, h) = image.dims();
    let mut rgb = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let base = (image.get(x, y) * 255.0).round().clamp(0.0, 255.0) as u8;
            let g = gt.get(x, y);
            let s = seg.get(x, y);
            let px = match (g, s) {
                (true, true) => image::Rgb([base / 3, base / 3, 255]),
                (true, false) => image::Rgb([base / 3, 255, base / 3]),
                (false, true) => image::Rgb([255, base / 3, base / 3]),
                (false, false) => image::Rgb([base, base, base]),
            };
            rgb.put_pixel(x as u32, y as u32, px);
        }
    }
    rgb.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_disjoint_and_cover_everything() {
        let parts = partition_folds(10, 2, 3).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].len(), 5);
        assert_eq!(parts[1].len(), 5);
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn partition_is_deterministic_per_seed() {
        assert_eq!(
            partition_folds(17, 3, 5).unwrap(),
            partition_folds(17, 3, 5).unwrap()
        );
        assert_ne!(
            partition_folds(17, 3, 5).unwrap(),
            partition_folds(17, 3, 6).unwrap()
        );
    }

    #[test]
    fn fold_larger_than_data_rejected() {
        assert!(partition_folds(3, 4, 0).is_err());
    }

    #[test]
    fn pooled_mean_equals_mean_of_all_scores() {
        let per: Vec<PerImageEval> = (0..7)
            .map(|i| PerImageEval {
                id: format!("e{i}"),
                group: 0,
                dsc: 0.9 + 0.01 * i as f64,
                jaccard: 0.8,
                acd_mm: 1.0,
                dsc_by_modes: vec![0.8, 0.9],
                translation_err_px: 1.0,
                translation_err_mm: 1.0,
                scale_err_px: 2.0,
                orientation_err_rad: Some(0.01),
            })
            .collect();
        let expect = per.iter().map(|e| e.dsc).sum::<f64>() / 7.0;
        let report = EvalReport::from_per_image(per, vec![], 0);
        let got = report.aggregates["dsc"].mean;
        assert!((got - expect).abs() < 1e-12);
        assert!(report.aggregates.contains_key("dsc_k0"));
        assert!(report.aggregates.contains_key("dsc_k1"));
    }

    #[test]
    fn table_lists_every_aggregate() {
        let per = vec![PerImageEval {
            id: "a".into(),
            group: 0,
            dsc: 0.95,
            jaccard: 0.9,
            acd_mm: 0.5,
            dsc_by_modes: vec![0.85, 0.95],
            translation_err_px: 1.5,
            translation_err_mm: 1.5,
            scale_err_px: 2.5,
            orientation_err_rad: None,
        }];
        let report = EvalReport::from_per_image(per, vec![vec!["a".into()]], 1);
        let table = report.table();
        assert!(table.contains("Mean±Standard Deviation (Min/Max)"));
        assert!(table.contains("dsc"));
        assert!(table.contains("acd_mm"));
    }
}
