//! Scratch: per-mode hypothesis-classification quality on held-out images.
use deformseg::config::RunConfig;
use deformseg::data::{generate_synthetic_dataset, load_entries, SyntheticSpec};
use deformseg::modes::fabricate_mode_hypotheses;
use deformseg::pipeline::{train_shape_stage, ShapeBundle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
#[ignore]
fn mode_classifier_quality() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec { count: 100, seed: 11, ..SyntheticSpec::default() };
    let manifest = generate_synthetic_dataset(&spec, dir.path()).unwrap();
    let entries = load_entries(&manifest, dir.path()).unwrap();
    let mut cfg = RunConfig::desk();
    cfg.finalize(Some(5));

    let (train, test) = entries.split_at(50);
    let stage = train_shape_stage(train, &cfg).unwrap();
    for (name, log) in &stage.logs {
        println!("{name}: dnn loss {:.4} -> {:.4}", log.dnn_losses.first().unwrap(), log.dnn_losses.last().unwrap());
    }
    let bundle = ShapeBundle { models: stage.models, threshold: stage.threshold, detectors: stage.detectors };

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for k in 1..=bundle.detectors.mode_count() {
        let mut correct = 0usize;
        let mut total = 0usize;
        let mut pos_mean = 0.0;
        let mut neg_mean = 0.0;
        let (mut np_, mut nn_) = (0.0, 0.0);
        for e in test.iter().take(25) {
            let gt_box = e.gt_box().unwrap();
            let aspect = gt_box.s.0 / gt_box.s.1;
            let group = u32::from(aspect > bundle.threshold);
            let model = bundle.models.iter().find(|m| m.group_id() == group).unwrap();
            if k > model.mode_count() { continue; }
            let sp = gt_box.align_to_bbox(&model.mean_shape().bbox()).unwrap();
            let hyps = fabricate_mode_hypotheses(model, &e.image, &e.landmarks, &sp, k, &cfg.mode, &mut rng, 100).unwrap();
            for h in hyps {
                let s = bundle.detectors.models[k - 1].score(&h.feature).unwrap();
                if (s > 0.5) == h.positive { correct += 1; }
                total += 1;
                if h.positive { pos_mean += s; np_ += 1.0; } else { neg_mean += s; nn_ += 1.0; }
            }
        }
        println!(
            "mode {k}: held-out hyp accuracy {:.3} ({} samples), mean score pos {:.3} neg {:.3}",
            correct as f64 / total as f64, total, pos_mean / np_, neg_mean / nn_
        );
    }
}
