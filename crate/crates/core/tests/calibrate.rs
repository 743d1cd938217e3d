//! Scratch end-to-end calibration run (small scale). Prints stage metrics;
//! used to tune desk-preset hyperparameters.

use std::time::Instant;

use deformseg::config::RunConfig;
use deformseg::data::{generate_synthetic_dataset, load_entries, SyntheticSpec};
use deformseg::eval::{evaluate_with, EvalReport};
use deformseg::pipeline::{train_shape_stage, train_space_stage, ShapeBundle};

#[test]
#[ignore]
fn calibrate_small_benchmark() {
    env_logger::Builder::from_default_env()
        .filter_level(log::LevelFilter::Info)
        .init();
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        count: 100,
        seed: 11,
        ..SyntheticSpec::default()
    };
    let t0 = Instant::now();
    let manifest = generate_synthetic_dataset(&spec, dir.path()).unwrap();
    let entries = load_entries(&manifest, dir.path()).unwrap();
    println!("synth: {:.1}s", t0.elapsed().as_secs_f64());

    let mut cfg = RunConfig::desk();
    cfg.finalize(Some(5));

    let (train, test) = entries.split_at(50);

    let t1 = Instant::now();
    let space = train_space_stage(train, &cfg).unwrap();
    println!("space training: {:.1}s", t1.elapsed().as_secs_f64());

    let t2 = Instant::now();
    let stage = train_shape_stage(train, &cfg).unwrap();
    println!("shape training: {:.1}s", t2.elapsed().as_secs_f64());
    let bundle = ShapeBundle {
        models: stage.models,
        threshold: stage.threshold,
        detectors: stage.detectors,
    };

    let t3 = Instant::now();
    let mut per = Vec::new();
    for e in test {
        per.push(evaluate_with(&space, &bundle, e, cfg.modes).unwrap());
    }
    println!("segmentation+eval: {:.1}s", t3.elapsed().as_secs_f64());

    let report = EvalReport::from_per_image(per, vec![], 5);
    println!("{}", report.table());
    println!("p(full>mean) = {:?}", report.p_full_vs_mean_shape);
}
