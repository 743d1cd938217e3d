//! Synthetic benchmark generator: bilaterally mirrored two-lobe shapes
//! built from low-order Fourier contours, rendered as bright filled regions
//! on a darker textured background, with full ground truth.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, LandmarkFile, ManifestEntry, TruthSidecar};
use crate::error::{Error, Result};
use crate::image::{write_pgm16, GrayImage};
use crate::nn::derive_seed;
use crate::shape::{clamp_weights, Shape, ShapeModel, ShapeWeights, SpaceParams};

/// One aspect-ratio population of the benchmark.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GroupSpec {
    /// Typical box aspect ratio (width/height) of this population.
    pub aspect: f64,
    /// Fraction of the dataset drawn from this population.
    pub fraction: f64,
}

/// Parameters of the synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub count: usize,
    pub dims: (usize, usize),
    /// Total landmark count M (even; half per lobe).
    pub landmark_count: usize,
    /// Descending eigenvalue spectrum of the shape family, in canonical
    /// (unit-box) units.
    pub eigvals: Vec<f64>,
    pub groups: Vec<GroupSpec>,
    /// Box height range in pixels; width follows the group aspect.
    pub height_range: (f64, f64),
    /// Orientation range in radians (+/-).
    pub theta_max: f64,
    /// Std of the per-pixel Gaussian intensity noise.
    pub noise_sigma: f64,
    /// Amplitude of the smooth background/foreground texture waves.
    pub texture_amp: f64,
    /// Physical spacing written into the manifest (mm/pixel).
    pub spacing: (f64, f64),
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("count must be at least 1".into()));
        }
        if self.dims.0 < 32 || self.dims.1 < 32 {
            return Err(Error::Config("image dims must be at least 32".into()));
        }
        if self.landmark_count < 8 || self.landmark_count % 2 != 0 {
            return Err(Error::Config("landmark count must be even and at least 8".into()));
        }
        if self.eigvals.is_empty() || self.eigvals.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Config("eigenvalues must be non-empty and descending".into()));
        }
        if self.groups.is_empty() {
            return Err(Error::Config("need at least one group".into()));
        }
        if !(self.height_range.0 > 0.0 && self.height_range.1 >= self.height_range.0) {
            return Err(Error::Config("invalid height range".into()));
        }
        Ok(())
    }
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            count: 100,
            dims: (256, 256),
            landmark_count: 32,
            eigvals: vec![0.030, 0.024, 0.020, 0.017, 0.014, 0.0012, 0.0005],
            groups: vec![
                GroupSpec {
                    aspect: 1.0,
                    fraction: 0.5,
                },
                GroupSpec {
                    aspect: 1.4,
                    fraction: 0.5,
                },
            ],
            height_range: (80.0, 125.0),
            theta_max: 0.08,
            noise_sigma: 0.015,
            texture_amp: 0.03,
            spacing: (1.0, 1.0),
            seed: 7,
        }
    }
}

/// Canonical two-lobe family of one group: a unit-box mean with orthonormal
/// smooth deformation modes.
fn build_family(spec: &SyntheticSpec, group: u32) -> Result<ShapeModel> {
    let m = spec.landmark_count;
    let per_lobe = m / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0x4661_4d00 + u64::from(group)));

    // Base radial perturbation of the lobes, shared by both (bilateral
    // mirror symmetry of the base shape).
    let harmonics = 3usize;
    let base_coefs: Vec<(f64, f64)> = (0..harmonics)
        .map(|_| {
            (
                rng.random_range(-0.06..0.06),
                rng.random_range(-0.06..0.06),
            )
        })
        .collect();
    let rho = |phi: f64| -> f64 {
        let mut r = 1.0;
        for (h, (a, b)) in base_coefs.iter().enumerate() {
            let k = (h + 2) as f64;
            r += a * (k * phi).cos() + b * (k * phi).sin();
        }
        r
    };

    // Right lobe clockwise from its top, then left lobe counter-clockwise
    // from its top (screen coordinates, y down). The vertical profile is
    // flattened at the tips (|cos|^0.55) so the top/bottom tangent arcs
    // have usable support, like a lung base over the diaphragm.
    let (ax, ay) = (0.24, 0.44);
    let cx = 0.26;
    let vertical = |phi: f64, r: f64| -> f64 {
        let c = phi.cos();
        -ay * r * c.signum() * c.abs().powf(0.55)
    };
    let mut pts = Vec::with_capacity(m);
    for k in 0..per_lobe {
        let phi = 2.0 * std::f64::consts::PI * k as f64 / per_lobe as f64;
        let r = rho(phi);
        pts.push((cx + ax * r * phi.sin(), vertical(phi, r)));
    }
    for k in 0..per_lobe {
        let phi = 2.0 * std::f64::consts::PI * k as f64 / per_lobe as f64;
        let r = rho(phi);
        pts.push((-cx - ax * r * phi.sin(), vertical(phi, r)));
    }

    // Normalize the mean to a unit bounding box centered at the origin so
    // raw scale draws are box sizes in pixels.
    let shape = Shape::from_points(&pts)?;
    let bb = shape.bbox();
    let (c, size) = (bb.center(), bb.size());
    let mean: Vec<f64> = shape
        .points()
        .iter()
        .flat_map(|p| [(p.0 - c.0) / size.0, (p.1 - c.1) / size.1])
        .collect();

    // Smooth deformation fields, alternately mirror-symmetric and
    // independent per lobe, orthonormalized against each other.
    let k_modes = spec.eigvals.len();
    let mut eigvecs: Vec<Vec<f64>> = Vec::with_capacity(k_modes);
    let mut attempts = 0;
    while eigvecs.len() < k_modes {
        attempts += 1;
        if attempts > 50 * k_modes {
            return Err(Error::Numeric("failed to orthonormalize family modes".into()));
        }
        let symmetric = eigvecs.len() % 2 == 0;
        let field_coefs: Vec<[f64; 4]> = (0..=harmonics)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        let field_coefs_left: Vec<[f64; 4]> = if symmetric {
            field_coefs.clone()
        } else {
            (0..=harmonics)
                .map(|_| {
                    [
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ]
                })
                .collect()
        };
        let eval = |coefs: &[[f64; 4]], phi: f64| -> (f64, f64) {
            let mut dx = 0.0;
            let mut dy = 0.0;
            for (h, c) in coefs.iter().enumerate() {
                let k = h as f64 + 1.0;
                dx += c[0] * (k * phi).cos() + c[1] * (k * phi).sin();
                dy += c[2] * (k * phi).cos() + c[3] * (k * phi).sin();
            }
            (dx, dy)
        };
        let mut v = Vec::with_capacity(2 * m);
        for k in 0..per_lobe {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / per_lobe as f64;
            let (dx, dy) = eval(&field_coefs, phi);
            v.push(dx);
            v.push(dy);
        }
        for k in 0..per_lobe {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / per_lobe as f64;
            let (dx, dy) = eval(&field_coefs_left, phi);
            // Mirror the x displacement onto the left lobe.
            v.push(if symmetric { -dx } else { dx });
            v.push(dy);
        }
        // Gram-Schmidt against accepted modes.
        for prev in &eigvecs {
            let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
            for (vi, pi) in v.iter_mut().zip(prev) {
                *vi -= dot * pi;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        for vi in &mut v {
            *vi /= norm;
        }
        eigvecs.push(v);
    }

    ShapeModel::from_parts(mean, eigvecs, spec.eigvals.clone(), 1.0, group)
}

/// Fractional-coverage rasterization of closed polygons: 4 analytic
/// sub-rows per pixel row, exact horizontal span clipping.
fn coverage_map(polygons: &[Vec<(f64, f64)>], dims: (usize, usize)) -> Vec<f64> {
    const SUBROWS: usize = 4;
    let (width, height) = dims;
    let mut cov = vec![0.0f64; width * height];
    let w = 1.0 / SUBROWS as f64;
    let mut crossings: Vec<f64> = Vec::with_capacity(8);
    for poly in polygons {
        let n = poly.len();
        for y in 0..height {
            for s in 0..SUBROWS {
                let yc = y as f64 - 0.5 + (s as f64 + 0.5) * w;
                crossings.clear();
                for i in 0..n {
                    let (x1, y1) = poly[i];
                    let (x2, y2) = poly[(i + 1) % n];
                    if (y1 <= yc && yc < y2) || (y2 <= yc && yc < y1) {
                        let t = (yc - y1) / (y2 - y1);
                        crossings.push(x1 + t * (x2 - x1));
                    }
                }
                crossings.sort_by(|a, b| a.partial_cmp(b).expect("finite crossings"));
                let mut k = 0;
                while k + 1 < crossings.len() {
                    let lo = crossings[k];
                    let hi = crossings[k + 1];
                    let x_start = ((lo - 0.5).floor().max(0.0)) as usize;
                    let x_end = ((hi + 0.5).ceil().min(width as f64)) as usize;
                    for x in x_start..x_end {
                        let px_lo = x as f64 - 0.5;
                        let px_hi = x as f64 + 0.5;
                        let overlap = (hi.min(px_hi) - lo.max(px_lo)).max(0.0);
                        cov[y * width + x] += overlap * w;
                    }
                    k += 2;
                }
            }
        }
    }
    for c in &mut cov {
        *c = c.min(1.0);
    }
    cov
}

/// Smooth random cosine-wave texture field.
fn texture_field(rng: &mut ChaCha8Rng, dims: (usize, usize), amp: f64) -> Vec<f64> {
    let (width, height) = dims;
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.5..2.5) * std::f64::consts::PI * 2.0 / width as f64,
                rng.random_range(0.5..2.5) * std::f64::consts::PI * 2.0 / height as f64,
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.4..1.0),
            )
        })
        .collect();
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut v = 0.0;
            for &(kx, ky, phase, a) in &waves {
                v += a * (kx * x as f64 + ky * y as f64 + phase).cos();
            }
            out[y * width + x] = v * amp / 3.0;
        }
    }
    out
}

struct DrawnInstance {
    landmarks: Shape,
    weights: Vec<f64>,
    raw: SpaceParams,
    group: u32,
}

/// Medium-bright band behind the lobes (the central-structure analog that
/// separates the two lobes in contrast and polarity from the outside
/// background). Canonical half-axes are chosen so its own edges fall well
/// clear of the lobe bounding lines.
fn torso_polygon(raw: &SpaceParams) -> Vec<(f64, f64)> {
    let n = 64;
    (0..n)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / n as f64;
            raw.apply_point((0.30 * a.cos(), 0.62 * a.sin()))
        })
        .collect()
}

fn draw_instance(
    spec: &SyntheticSpec,
    families: &[ShapeModel],
    rng: &mut ChaCha8Rng,
) -> Result<DrawnInstance> {
    let (width, height) = (spec.dims.0 as f64, spec.dims.1 as f64);
    let margin = 8.0;
    for _attempt in 0..100 {
        // Group by configured fractions.
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut group = 0u32;
        for (g, gs) in spec.groups.iter().enumerate() {
            acc += gs.fraction;
            if u < acc {
                group = g as u32;
                break;
            }
            group = g as u32;
        }
        let family = &families[group as usize];

        let mut b = Vec::with_capacity(family.mode_count());
        for &l in family.eigvals() {
            let n = Normal::new(0.0, l.sqrt()).map_err(|_| {
                Error::Config("eigenvalue spectrum must be non-negative".into())
            })?;
            b.push(n.sample(rng));
        }
        let b = clamp_weights(&ShapeWeights(b), family.eigvals())?;

        let sy = rng.random_range(spec.height_range.0..=spec.height_range.1);
        let aspect = spec.groups[group as usize].aspect * rng.random_range(0.95..1.05);
        let sx = sy * aspect;
        let theta = if spec.theta_max > 0.0 {
            rng.random_range(-spec.theta_max..=spec.theta_max)
        } else {
            0.0
        };
        // Per-axis bounds; the exact rotated-landmark check below rejects
        // stragglers.
        let half_x = 0.56 * sx + margin;
        let half_y = 0.56 * sy + margin;
        if 2.0 * half_x >= width || 2.0 * half_y >= height {
            continue;
        }
        let tx = rng.random_range(half_x..(width - half_x));
        let ty = rng.random_range(half_y..(height - half_y));

        let raw = SpaceParams::new((tx, ty), theta, (sx, sy))?;
        let landmarks = family.synthesize(&b, &raw)?;
        let bb = landmarks.bbox();
        if bb.min.0 < margin
            || bb.min.1 < margin
            || bb.max.0 > width - margin
            || bb.max.1 > height - margin
        {
            continue;
        }
        // A draw whose contour folds over itself is rejected.
        if landmarks
            .side_polygons()
            .iter()
            .any(|side| !crate::image::polygon_is_simple(side))
        {
            continue;
        }
        return Ok(DrawnInstance {
            landmarks,
            weights: b.0,
            raw,
            group,
        });
    }
    Err(Error::Config(
        "infeasible synthetic ranges: shape exits the image".into(),
    ))
}

fn render_instance(
    spec: &SyntheticSpec,
    landmarks: &Shape,
    raw: &SpaceParams,
    rng: &mut ChaCha8Rng,
) -> Result<GrayImage> {
    let dims = spec.dims;
    let cov = coverage_map(&landmarks.side_polygons(), dims);
    let cov_torso = coverage_map(&[torso_polygon(raw)], dims);
    let tex_bg = texture_field(rng, dims, spec.texture_amp);
    let tex_fg = texture_field(rng, dims, spec.texture_amp);
    let torso_level = rng.random_range(0.42..0.50);
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|_| Error::Config("noise sigma must be non-negative".into()))?;

    let quant = 4096.0;
    let mut pixels = Vec::with_capacity(dims.0 * dims.1);
    for i in 0..dims.0 * dims.1 {
        let bg = 0.28 + tex_bg[i];
        let fg = 0.66 + tex_fg[i];
        let mut v = bg + (torso_level - bg) * cov_torso[i];
        v += (fg - v) * cov[i];
        v += noise.sample(rng);
        let q = (v * quant).round().clamp(0.0, quant - 1.0);
        pixels.push(q / quant);
    }
    let mut img = GrayImage::new(dims.0, dims.1, pixels)?;
    img.spacing = spec.spacing;
    img.bit_depth_source = 12;
    Ok(img)
}

/// Six approximately equidistant primary-landmark indices per lobe.
fn primary_indices(per_lobe: usize) -> Vec<usize> {
    (0..6).map(|i| i * per_lobe / 6).collect()
}

/// Generates the dataset under `out_dir` and returns the manifest (also
/// written to `out_dir/manifest.json`).
///
/// Deterministic per seed: every image derives its own stream from
/// (seed, index), and all outputs are byte-stable.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec, out_dir: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    let images_dir = out_dir.join("images");
    let landmarks_dir = out_dir.join("landmarks");
    let truth_dir = out_dir.join("truth");
    for d in [&images_dir, &landmarks_dir, &truth_dir] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }

    let families: Vec<ShapeModel> = (0..spec.groups.len())
        .map(|g| build_family(spec, g as u32))
        .collect::<Result<Vec<_>>>()?;
    let mut family_paths = Vec::new();
    for (g, fam) in families.iter().enumerate() {
        let p = out_dir.join(format!("family_model_g{g}.json"));
        fam.save(&p)?;
        family_paths.push(PathBuf::from(format!("family_model_g{g}.json")));
    }

    let per_lobe = spec.landmark_count / 2;
    let primaries = primary_indices(per_lobe);

    let mut entries = Vec::with_capacity(spec.count);
    for idx in 0..spec.count {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, idx as u64));
        let drawn = draw_instance(spec, &families, &mut rng)?;
        let image = render_instance(spec, &drawn.landmarks, &drawn.raw, &mut rng)?;

        let stem = format!("img_{idx:04}");
        let image_rel = PathBuf::from(format!("images/{stem}.pgm"));
        let landmark_rel = PathBuf::from(format!("landmarks/{stem}.json"));
        let truth_rel = PathBuf::from(format!("truth/{stem}.json"));

        write_pgm16(&out_dir.join(&image_rel), &image, 4095)?;

        let pts = drawn.landmarks.points();
        let mut primary = Vec::with_capacity(12);
        for &i in &primaries {
            primary.push(pts[i]);
        }
        for &i in &primaries {
            primary.push(pts[per_lobe + i]);
        }
        LandmarkFile {
            image_path: image_rel.clone(),
            group: Some(drawn.group),
            primary,
            landmarks: pts,
        }
        .save(&out_dir.join(&landmark_rel))?;

        let bb = drawn.landmarks.bbox();
        TruthSidecar {
            space_params: SpaceParams::new(bb.center(), drawn.raw.theta, bb.size())?,
            raw_transform: drawn.raw,
            shape_weights: drawn.weights,
            model_ref: family_paths[drawn.group as usize].clone(),
        }
        .save(&out_dir.join(&truth_rel))?;

        entries.push(ManifestEntry {
            image_path: image_rel,
            landmark_path: landmark_rel,
            truth_path: Some(truth_rel),
            group: Some(drawn.group),
            spacing: spec.spacing,
        });
    }

    let manifest = DatasetManifest {
        entries,
        target_dims: spec.dims,
        bit_depth: 12,
        seed: spec.seed,
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
