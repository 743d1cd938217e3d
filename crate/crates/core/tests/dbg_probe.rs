//! Scratch: linear probe on pre-trained features, bottom vs left.
use deformseg::config::RunConfig;
use deformseg::data::{generate_synthetic_dataset, load_entries, SyntheticSpec};
use deformseg::nn::{init_dnn_from_sdae, stack_sdae, train_dnn, TrainConfig};
use deformseg::space::{balance_classes, extract_line_hypotheses, BoundingLine};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
#[ignore]
fn probe_features() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec { count: 40, seed: 11, ..SyntheticSpec::default() };
    let manifest = generate_synthetic_dataset(&spec, dir.path()).unwrap();
    let entries = load_entries(&manifest, dir.path()).unwrap();
    let cfg = RunConfig::desk();

    for (name, line) in [("bottom", BoundingLine::Bottom), ("left", BoundingLine::Left)] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut samples = Vec::new();
        for e in &entries {
            let g = e.gt_lines();
            let gt = match line {
                BoundingLine::Top => g.0,
                BoundingLine::Bottom => g.1,
                BoundingLine::Left => g.2,
                BoundingLine::Right => g.3,
            };
            let hyps = extract_line_hypotheses(&e.image, gt, line, &cfg.space, &mut rng).unwrap();
            samples.extend(hyps.into_iter().map(|h| (h.patch, if h.positive { 1.0 } else { 0.0 })));
        }
        let samples = balance_classes(samples, &mut rng).unwrap();
        let sdae = TrainConfig { learning_rate: 0.1, batch_size: 32, epochs: 15, corruption_rate: 0.25, seed: 3 };
        let unlabeled: Vec<Vec<f64>> = samples.iter().map(|(x, _)| x.clone()).collect();
        let (encs, _) = stack_sdae(&[3840, 48], &unlabeled, &sdae).unwrap();

        // Linear probe on h1: single-layer logistic regression.
        let feats: Vec<(Vec<f64>, f64)> = samples
            .iter()
            .map(|(x, y)| (encs[0].encode(x), *y))
            .collect();
        let spread: f64 = {
            let dim = feats[0].0.len();
            let mut mins = vec![f64::INFINITY; dim];
            let mut maxs = vec![f64::NEG_INFINITY; dim];
            for (h, _) in &feats {
                for (i, &v) in h.iter().enumerate() {
                    mins[i] = mins[i].min(v);
                    maxs[i] = maxs[i].max(v);
                }
            }
            mins.iter().zip(&maxs).map(|(a, b)| b - a).sum::<f64>() / dim as f64
        };
        println!("{name}: mean unit spread {spread:.4}");
        // Dummy 1-layer net trained as probe: dims 48 -> 1 via a tiny stack.
        let probe_stack = stack_sdae(&[48, 48], &feats.iter().map(|(h, _)| h.clone()).collect::<Vec<_>>(),
            &TrainConfig { learning_rate: 0.05, batch_size: 32, epochs: 1, corruption_rate: 0.0, seed: 9 }).unwrap().0;
        let probe = init_dnn_from_sdae(&probe_stack, 1, 5).unwrap();
        let (probe, _) = train_dnn(&probe, &feats, &TrainConfig {
            learning_rate: 1.0, batch_size: 32, epochs: 150, corruption_rate: 0.0, seed: 5 }).unwrap();
        let acc = feats.iter().filter(|(h, y)| (probe.score(h).unwrap() > 0.5) == (*y == 1.0)).count() as f64 / feats.len() as f64;
        println!("{name}: probe-on-h1 accuracy {acc:.3}");

        // And probe directly on raw strips: single hidden layer net, trained supervised.
        let raw_stack = stack_sdae(&[3840, 32], &unlabeled,
            &TrainConfig { learning_rate: 0.1, batch_size: 32, epochs: 1, corruption_rate: 0.0, seed: 21 }).unwrap().0;
        let raw_net = init_dnn_from_sdae(&raw_stack, 1, 5).unwrap();
        let (raw_net, trace) = train_dnn(&raw_net, &samples, &TrainConfig {
            learning_rate: 0.5, batch_size: 32, epochs: 150, corruption_rate: 0.0, seed: 6 }).unwrap();
        let acc = samples.iter().filter(|(x, y)| (raw_net.score(x).unwrap() > 0.5) == (*y == 1.0)).count() as f64 / samples.len() as f64;
        println!("{name}: raw-strip supervised net accuracy {acc:.3} (loss {:.3} -> {:.3})", trace[0], trace.last().unwrap());
    }
}
