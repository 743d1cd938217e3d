//! Generalized Procrustes alignment of landmark shapes.

use serde::{Deserialize, Serialize};

use super::Shape;
use crate::error::{Error, Result};

const CONVERGENCE_TOL: f64 = 1e-7;
const MAX_ITERATIONS: usize = 100;

/// Similarity transform `X = scale * R(theta) * x + t` mapping the aligned
/// frame back to the original shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub theta: f64,
    pub t: (f64, f64),
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            scale: 1.0,
            theta: 0.0,
            t: (0.0, 0.0),
        }
    }

    #[inline]
    pub fn apply_point(&self, p: (f64, f64)) -> (f64, f64) {
        let (c, s) = (self.theta.cos(), self.theta.sin());
        (
            self.scale * (c * p.0 - s * p.1) + self.t.0,
            self.scale * (s * p.0 + c * p.1) + self.t.1,
        )
    }

    #[inline]
    pub fn invert_point(&self, p: (f64, f64)) -> (f64, f64) {
        let (dx, dy) = (p.0 - self.t.0, p.1 - self.t.1);
        let (c, s) = (self.theta.cos(), self.theta.sin());
        ((c * dx + s * dy) / self.scale, (-s * dx + c * dy) / self.scale)
    }

    pub fn apply(&self, shape: &Shape) -> Shape {
        let mut out = shape.clone();
        for i in 0..shape.landmark_count() {
            out.set_point(i, self.apply_point(shape.point(i)));
        }
        out
    }

    pub fn invert(&self, shape: &Shape) -> Shape {
        let mut out = shape.clone();
        for i in 0..shape.landmark_count() {
            out.set_point(i, self.invert_point(shape.point(i)));
        }
        out
    }
}

/// Least-squares similarity transform minimizing
/// `sum ||s R from_i + t - to_i||^2` (closed form, rotation only — no
/// reflection).
pub fn fit_similarity(from: &Shape, to: &Shape) -> Result<SimilarityTransform> {
    if from.landmark_count() != to.landmark_count() {
        return Err(Error::Dimension(format!(
            "landmark counts differ: {} vs {}",
            from.landmark_count(),
            to.landmark_count()
        )));
    }
    let m = from.landmark_count();
    let ca = from.centroid();
    let cb = to.centroid();
    let mut dot = 0.0; // sum a~ . b~
    let mut cross = 0.0; // sum a~ x b~
    let mut norm_a = 0.0;
    for i in 0..m {
        let (ax, ay) = from.point(i);
        let (bx, by) = to.point(i);
        let (ax, ay) = (ax - ca.0, ay - ca.1);
        let (bx, by) = (bx - cb.0, by - cb.1);
        dot += ax * bx + ay * by;
        cross += ax * by - ay * bx;
        norm_a += ax * ax + ay * ay;
    }
    if norm_a <= 0.0 {
        return Err(Error::Data("degenerate source shape in similarity fit".into()));
    }
    let theta = cross.atan2(dot);
    let scale = (dot * dot + cross * cross).sqrt() / norm_a;
    if scale <= 0.0 || !scale.is_finite() {
        return Err(Error::Numeric("similarity fit produced invalid scale".into()));
    }
    let (c, s) = (theta.cos(), theta.sin());
    let t = (
        cb.0 - scale * (c * ca.0 - s * ca.1),
        cb.1 - scale * (s * ca.0 + c * ca.1),
    );
    Ok(SimilarityTransform { scale, theta, t })
}

/// Result of generalized Procrustes alignment.
#[derive(Debug, Clone)]
pub struct GpaResult {
    /// Shapes expressed in the mean frame.
    pub aligned: Vec<Shape>,
    /// Per-shape transforms mapping the mean frame to each original shape.
    pub transforms: Vec<SimilarityTransform>,
    /// Normalized mean shape (centroid at origin, unit RMS radius).
    pub mean: Shape,
    /// Final alignment residual: sum over shapes and landmarks of the
    /// squared distance between the transformed mean and the shape.
    pub residual: f64,
    /// Residual after every iteration; non-increasing.
    pub residual_trace: Vec<f64>,
    pub iterations: usize,
}

/// Iterative generalized Procrustes alignment with isotropic similarity
/// transforms. Converges when the mean shape's RMS change drops below
/// 1e-7 (at most 100 iterations).
pub fn procrustes_align(shapes: &[Shape]) -> Result<GpaResult> {
    if shapes.is_empty() {
        return Err(Error::Data("no shapes to align".into()));
    }
    let m = shapes[0].landmark_count();
    for s in shapes {
        if s.landmark_count() != m {
            return Err(Error::Dimension("shapes have differing landmark counts".into()));
        }
        if s.rms_radius() <= 0.0 {
            return Err(Error::Data("degenerate shape: all landmarks coincide".into()));
        }
    }

    let mut mean = shapes[0].normalized()?;
    let mut residual_trace = Vec::new();
    let mut iterations = 0;

    for iter in 0..MAX_ITERATIONS {
        iterations = iter + 1;
        let transforms = shapes
            .iter()
            .map(|s| fit_similarity(&mean, s))
            .collect::<Result<Vec<_>>>()?;
        let aligned: Vec<Shape> = shapes
            .iter()
            .zip(&transforms)
            .map(|(s, t)| t.invert(s))
            .collect();
        residual_trace.push(alignment_residual(&mean, shapes, &transforms));

        let mut new_mean = Shape::zeros(m);
        for a in &aligned {
            for (acc, v) in new_mean.coords_mut().iter_mut().zip(a.coords()) {
                *acc += v;
            }
        }
        let n = shapes.len() as f64;
        for v in new_mean.coords_mut() {
            *v /= n;
        }
        let new_mean = new_mean.normalized()?;

        let change = rms_difference(&mean, &new_mean);
        mean = new_mean;
        if change < CONVERGENCE_TOL {
            break;
        }
    }

    // Final pass against the converged mean.
    let transforms = shapes
        .iter()
        .map(|s| fit_similarity(&mean, s))
        .collect::<Result<Vec<_>>>()?;
    let aligned: Vec<Shape> = shapes
        .iter()
        .zip(&transforms)
        .map(|(s, t)| t.invert(s))
        .collect();
    let residual = alignment_residual(&mean, shapes, &transforms);
    residual_trace.push(residual);

    Ok(GpaResult {
        aligned,
        transforms,
        mean,
        residual,
        residual_trace,
        iterations,
    })
}

fn alignment_residual(mean: &Shape, shapes: &[Shape], transforms: &[SimilarityTransform]) -> f64 {
    let mut acc = 0.0;
    for (shape, t) in shapes.iter().zip(transforms) {
        let placed = t.apply(mean);
        for (a, b) in placed.coords().iter().zip(shape.coords()) {
            acc += (a - b).powi(2);
        }
    }
    acc
}

fn rms_difference(a: &Shape, b: &Shape) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.coords().iter().zip(b.coords()) {
        acc += (x - y).powi(2);
    }
    (acc / a.coords().len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Shape {
        Shape::from_points(&[(0.0, 0.0), (4.0, 0.0), (1.0, 3.0)]).unwrap()
    }

    #[test]
    fn single_normalized_shape_aligns_to_identity() {
        let s = triangle().normalized().unwrap();
        let r = procrustes_align(std::slice::from_ref(&s)).unwrap();
        assert!(r.residual < 1e-18);
        let t = r.transforms[0];
        assert!((t.scale - 1.0).abs() < 1e-9);
        assert!(t.theta.abs() < 1e-9);
        assert!(t.t.0.abs() < 1e-9 && t.t.1.abs() < 1e-9);
    }

    #[test]
    fn rotated_translated_copy_aligns_exactly() {
        let a = triangle();
        let rot = SimilarityTransform {
            scale: 1.0,
            theta: std::f64::consts::FRAC_PI_2,
            t: (10.0, -3.0),
        };
        let b = rot.apply(&a);
        let r = procrustes_align(&[a, b]).unwrap();
        assert!(r.residual < 1e-10, "residual {}", r.residual);
    }

    #[test]
    fn translated_copies_recover_offsets() {
        // Base centered at the origin so the recovered translation equals
        // the applied offset directly.
        let base = {
            let t = triangle();
            let (cx, cy) = t.centroid();
            let pts: Vec<(f64, f64)> = t.points().iter().map(|p| (p.0 - cx, p.1 - cy)).collect();
            Shape::from_points(&pts).unwrap()
        };
        let offsets = [(0.0, 0.0), (5.0, 2.0), (-3.0, 7.0)];
        let shapes: Vec<Shape> = offsets
            .iter()
            .map(|&(dx, dy)| {
                let pts: Vec<(f64, f64)> =
                    base.points().iter().map(|p| (p.0 + dx, p.1 + dy)).collect();
                Shape::from_points(&pts).unwrap()
            })
            .collect();
        let r = procrustes_align(&shapes).unwrap();
        for (t, &(dx, dy)) in r.transforms.iter().zip(&offsets) {
            assert!((t.t.0 - dx).abs() < 1e-10, "tx {} vs {}", t.t.0, dx);
            assert!((t.t.1 - dy).abs() < 1e-10, "ty {} vs {}", t.t.1, dy);
        }
    }

    #[test]
    fn residual_trace_non_increasing() {
        let a = triangle();
        let t1 = SimilarityTransform {
            scale: 1.8,
            theta: 0.7,
            t: (3.0, 1.0),
        };
        let t2 = SimilarityTransform {
            scale: 0.6,
            theta: -0.4,
            t: (-2.0, 5.0),
        };
        let mut b = t1.apply(&a);
        // Perturb so alignment actually iterates.
        b.coords_mut()[0] += 0.2;
        let mut c = t2.apply(&a);
        c.coords_mut()[3] -= 0.15;
        let r = procrustes_align(&[a, b, c]).unwrap();
        for w in r.residual_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "trace not monotone: {:?}", r.residual_trace);
        }
    }

    #[test]
    fn degenerate_shape_rejected() {
        let d = Shape::from_points(&[(1.0, 1.0), (1.0, 1.0), (1.0, 1.0)]).unwrap();
        assert!(procrustes_align(&[d]).is_err());
    }
}
