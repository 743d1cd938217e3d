//! Scratch: inspect hidden activations of trained line detectors.
use deformseg::config::RunConfig;
use deformseg::data::{generate_synthetic_dataset, load_entries, SyntheticSpec};
use deformseg::nn::{stack_sdae, TrainConfig};
use deformseg::space::{balance_classes, extract_line_hypotheses, BoundingLine};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
#[ignore]
fn activation_stats() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec { count: 40, seed: 11, ..SyntheticSpec::default() };
    let manifest = generate_synthetic_dataset(&spec, dir.path()).unwrap();
    let entries = load_entries(&manifest, dir.path()).unwrap();
    let cfg = RunConfig::desk();

    for (line, pick) in [(BoundingLine::Bottom, 1usize), (BoundingLine::Left, 2usize)] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut samples = Vec::new();
        for e in &entries {
            let g = e.gt_lines();
            let gt = match pick { 1 => g.1, _ => g.2 };
            let hyps = extract_line_hypotheses(&e.image, gt, line, &cfg.space, &mut rng).unwrap();
            samples.extend(hyps.into_iter().map(|h| (h.patch, if h.positive { 1.0 } else { 0.0 })));
        }
        let samples = balance_classes(samples, &mut rng).unwrap();
        let sdae = TrainConfig { learning_rate: 0.1, batch_size: 32, epochs: 15, corruption_rate: 0.25, seed: 3 };
        let unlabeled: Vec<Vec<f64>> = samples.iter().map(|(x, _)| x.clone()).collect();
        let (encs, _) = stack_sdae(&[3840, 48, 24], &unlabeled, &sdae).unwrap();
        // Inspect layer-1 activations across samples.
        let mut mins = vec![f64::INFINITY; 48];
        let mut maxs = vec![f64::NEG_INFINITY; 48];
        for (x, _) in &samples {
            let h = encs[0].encode(x);
            for (i, &v) in h.iter().enumerate() {
                mins[i] = mins[i].min(v);
                maxs[i] = maxs[i].max(v);
            }
        }
        let spread: Vec<f64> = mins.iter().zip(&maxs).map(|(a, b)| b - a).collect();
        let mean_spread = spread.iter().sum::<f64>() / 48.0;
        let dead = spread.iter().filter(|&&s| s < 0.05).count();
        println!("{line:?}: n={} mean unit spread {mean_spread:.4}, units with spread<0.05: {dead}/48", samples.len());
        // raw input stats
        let mean_in: f64 = samples.iter().map(|(x, _)| x.iter().sum::<f64>() / x.len() as f64).sum::<f64>() / samples.len() as f64;
        println!("  mean input intensity {mean_in:.3}");
    }
}
