//! Scratch: inspect image-PCA eigenvalue magnitudes.
use deformseg::data::{generate_synthetic_dataset, image_pca_basis, load_entries, SyntheticSpec};

#[test]
#[ignore]
fn inspect_basis() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec { count: 30, seed: 11, ..SyntheticSpec::default() };
    let manifest = generate_synthetic_dataset(&spec, dir.path()).unwrap();
    let entries = load_entries(&manifest, dir.path()).unwrap();
    let imgs: Vec<_> = entries.iter().map(|e| &e.image).collect();
    let basis = image_pca_basis(&imgs, 8).unwrap();
    println!("eigvals: {:?}", basis.eigvals);
    let comp_max: Vec<f64> = basis.components.iter().map(|c| c.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()))).collect();
    println!("component max |entry|: {comp_max:?}");
    let typical: Vec<f64> = basis.eigvals.iter().zip(&comp_max).map(|(l, c)| 0.1 * l * c).collect();
    println!("typical |alpha*lambda*p| at peak: {typical:?}");
}
