//! Scratch diagnostics for mode-weight estimation accuracy.

use deformseg::config::RunConfig;
use deformseg::data::{generate_synthetic_dataset, load_entries, SyntheticSpec};
use deformseg::modes::{segment_trace, ModeDetectorSet};
use deformseg::pipeline::{train_shape_stage, ShapeBundle};
use deformseg::image::rasterize_shape_unchecked;
use deformseg::metrics::dsc;

#[test]
#[ignore]
fn mode_estimation_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec { count: 100, seed: 11, ..SyntheticSpec::default() };
    let manifest = generate_synthetic_dataset(&spec, dir.path()).unwrap();
    let entries = load_entries(&manifest, dir.path()).unwrap();
    let mut cfg = RunConfig::desk();
    cfg.finalize(Some(5));
    if let Ok(ep) = std::env::var("MODE_EP") { cfg.dnn.epochs = ep.parse().unwrap(); }
    if let Ok(q) = std::env::var("MODE_Q") { cfg.mode.q = q.parse().unwrap(); }

    let (train, test) = entries.split_at(50);
    let stage = train_shape_stage(train, &cfg).unwrap();
    let bundle = ShapeBundle { models: stage.models, threshold: stage.threshold, detectors: stage.detectors };

    for top_n in [10usize, 25] {
        let mut det = bundle.detectors.clone();
        det.config.top_n = top_n;
        if let Ok(s) = std::env::var("SCAN_STEP") { det.config.scan_step = s.parse().unwrap(); }
        let det = ModeDetectorSet { models: det.models, config: det.config };
        let mut err_u = vec![Vec::new(); det.mode_count()];
        let mut dsc_k = vec![Vec::new(); det.mode_count() + 1];
        for e in test {
            let gt_box = e.gt_box().unwrap();
            let aspect = gt_box.s.0 / gt_box.s.1;
            let group = u32::from(aspect > bundle.threshold);
            let model = bundle.models.iter().find(|m| m.group_id() == group).unwrap();
            let sp = gt_box.align_to_bbox(&model.mean_shape().bbox()).unwrap();
            let b_true = model.project(&e.landmarks, &sp).unwrap();
            let (trace, _, weights) = segment_trace(&e.image, &gt_box, model, &det, det.mode_count()).unwrap();
            for (k, bw) in weights.iter().enumerate() {
                let sigma = model.eigvals()[k].sqrt();
                err_u[k].push((bw - b_true.0[k]).abs() / sigma);
            }
            let gt_mask = rasterize_shape_unchecked(&e.landmarks, e.image.dims());
            for (k, shape) in trace.iter().enumerate() {
                let m = rasterize_shape_unchecked(shape, e.image.dims());
                dsc_k[k].push(dsc(&gt_mask, &m).unwrap());
            }
        }
        let fmt = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        println!("top_n={top_n}: mean |u_err| per mode: {:?}", err_u.iter().map(|v| (fmt(v) * 1000.0).round() / 1000.0).collect::<Vec<_>>());
        println!("          mean dsc by k: {:?}", dsc_k.iter().map(|v| (fmt(v) * 10000.0).round() / 10000.0).collect::<Vec<_>>());
    }

    // Oracle-context scan: estimate mode k with all earlier modes set to
    // their true values (cascade error removed).
    {
        use deformseg::shape::{ShapeWeights, Shape};
        let det = &bundle.detectors;
        let mut err_u = vec![Vec::new(); det.mode_count()];
        for e in test {
            let gt_box = e.gt_box().unwrap();
            let aspect = gt_box.s.0 / gt_box.s.1;
            let group = u32::from(aspect > bundle.threshold);
            let model = bundle.models.iter().find(|m| m.group_id() == group).unwrap();
            let sp = gt_box.align_to_bbox(&model.mean_shape().bbox()).unwrap();
            let b_true = model.project(&e.landmarks, &sp).unwrap();
            for k in 1..=det.mode_count().min(model.mode_count()) {
                let mut b_ctx = vec![0.0; model.mode_count()];
                b_ctx[..k - 1].copy_from_slice(&b_true.0[..k - 1]);
                let x_prev = model.synthesize(&ShapeWeights(b_ctx), &sp).unwrap();
                // Scan mode k from the oracle context.
                let sigma = model.eigvals()[k - 1].sqrt();
                let steps = (det.config.bound / det.config.scan_step).round() as i64;
                let p_k = model.mode(k);
                let mut best: Vec<(f64, f64)> = Vec::new();
                for i in -steps..=steps {
                    let u = i as f64 * det.config.scan_step;
                    let mut cand = x_prev.clone();
                    for j in 0..cand.landmark_count() {
                        let v = sp.apply_vector((u * sigma * p_k[2 * j], u * sigma * p_k[2 * j + 1]));
                        let (x, y) = x_prev.point(j);
                        cand.set_point(j, (x + v.0, y + v.1));
                    }
                    let f = deformseg::modes::extract_shape_patch_vector(&e.image, &cand, det.config.q).unwrap();
                    best.push((det.models[k - 1].score(&f).unwrap(), u));
                }
                best.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
                let est: f64 = best[..10].iter().map(|(_, u)| u).sum::<f64>() / 10.0;
                err_u[k - 1].push((est - b_true.0[k - 1] / sigma).abs());
            }
            let _ = Shape::zeros(1);
        }
        let fmt = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        println!("oracle-context: mean |u_err| per mode: {:?}", err_u.iter().map(|v| (fmt(v) * 1000.0).round() / 1000.0).collect::<Vec<_>>());
    }
}
