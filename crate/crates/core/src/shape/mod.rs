//! Landmark shape representation and the anisotropic similarity transform.
//!
//! A [`Shape`] is an ordered list of M landmarks with fixed anatomical
//! correspondence by index. Two-lobed shapes follow the global ordering
//! convention: the first M/2 landmarks trace the right lobe clockwise from
//! its designated start, the second M/2 trace the left lobe
//! counter-clockwise from its start.

mod groups;
mod interp;
mod procrustes;
mod ssm;

pub use groups::{cluster_aspect_ratios, fixed_threshold_split, select_model, GroupSplit, SplitSource};
pub use interp::interpolate_landmarks;
pub use procrustes::{fit_similarity, procrustes_align, GpaResult, SimilarityTransform};
pub use ssm::{build_ssm, clamp_weights, ShapeModel, ShapeWeights};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered landmark contour stored as an interleaved `[x0,y0,x1,y1,..]`
/// vector of length 2M.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    coords: Vec<f64>,
}

impl Shape {
    pub fn from_coords(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.len() % 2 != 0 {
            return Err(Error::Dimension(format!(
                "shape vector length {} is not a positive even number",
                coords.len()
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("shape contains non-finite coordinates".into()));
        }
        Ok(Shape { coords })
    }

    pub fn from_points(points: &[(f64, f64)]) -> Result<Self> {
        let mut coords = Vec::with_capacity(points.len() * 2);
        for &(x, y) in points {
            coords.push(x);
            coords.push(y);
        }
        Self::from_coords(coords)
    }

    pub fn zeros(landmark_count: usize) -> Self {
        Shape {
            coords: vec![0.0; landmark_count * 2],
        }
    }

    /// Number of landmarks M.
    pub fn landmark_count(&self) -> usize {
        self.coords.len() / 2
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    #[inline]
    pub fn point(&self, i: usize) -> (f64, f64) {
        (self.coords[2 * i], self.coords[2 * i + 1])
    }

    #[inline]
    pub fn set_point(&mut self, i: usize, p: (f64, f64)) {
        self.coords[2 * i] = p.0;
        self.coords[2 * i + 1] = p.1;
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        (0..self.landmark_count()).map(|i| self.point(i)).collect()
    }

    pub fn centroid(&self) -> (f64, f64) {
        let m = self.landmark_count() as f64;
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..self.landmark_count() {
            let (x, y) = self.point(i);
            cx += x;
            cy += y;
        }
        (cx / m, cy / m)
    }

    /// Root-mean-square landmark distance from the centroid.
    pub fn rms_radius(&self) -> f64 {
        let (cx, cy) = self.centroid();
        let m = self.landmark_count() as f64;
        let mut acc = 0.0;
        for i in 0..self.landmark_count() {
            let (x, y) = self.point(i);
            acc += (x - cx).powi(2) + (y - cy).powi(2);
        }
        (acc / m).sqrt()
    }

    /// Centroid at the origin and unit RMS radius; the gauge used for the
    /// aligned mean shape. Errors when all landmarks coincide.
    pub fn normalized(&self) -> Result<Shape> {
        let (cx, cy) = self.centroid();
        let r = self.rms_radius();
        if r <= 0.0 {
            return Err(Error::Data("degenerate shape: all landmarks coincide".into()));
        }
        let mut out = self.clone();
        for i in 0..self.landmark_count() {
            let (x, y) = self.point(i);
            out.set_point(i, ((x - cx) / r, (y - cy) / r));
        }
        Ok(out)
    }

    pub fn bbox(&self) -> BBox {
        let mut min = (f64::INFINITY, f64::INFINITY);
        let mut max = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for i in 0..self.landmark_count() {
            let (x, y) = self.point(i);
            min.0 = min.0.min(x);
            min.1 = min.1.min(y);
            max.0 = max.0.max(x);
            max.1 = max.1.max(y);
        }
        BBox { min, max }
    }

    /// Closed polygons for rasterization and contour metrics.
    ///
    /// Shapes with an even landmark count of at least six split into the
    /// two-lobe convention (first half / second half); anything smaller is
    /// treated as a single polygon.
    pub fn side_polygons(&self) -> Vec<Vec<(f64, f64)>> {
        let m = self.landmark_count();
        if m >= 6 && m % 2 == 0 {
            let pts = self.points();
            vec![pts[..m / 2].to_vec(), pts[m / 2..].to_vec()]
        } else {
            vec![self.points()]
        }
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: (f64, f64),
    pub max: (f64, f64),
}

impl BBox {
    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.min.0 + self.max.0),
            0.5 * (self.min.1 + self.max.1),
        )
    }

    pub fn size(&self) -> (f64, f64) {
        (self.max.0 - self.min.0, self.max.1 - self.min.1)
    }
}

/// Translation, orientation and anisotropic scale of the similarity
/// transform applied to the aligned shape frame.
///
/// `apply` maps aligned coordinates into image space as
/// `X = R(theta) * diag(s) * x + t`. Detection-side code also uses this
/// struct with box semantics (`t` = box center, `s` = box width/height in
/// pixels); [`SpaceParams::align_to_bbox`] converts between the two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceParams {
    /// Translation (tx, ty) in pixels.
    pub t: (f64, f64),
    /// Orientation in radians, in (-pi, pi].
    pub theta: f64,
    /// Anisotropic scale (sx, sy), strictly positive.
    pub s: (f64, f64),
}

impl SpaceParams {
    pub fn identity() -> Self {
        SpaceParams {
            t: (0.0, 0.0),
            theta: 0.0,
            s: (1.0, 1.0),
        }
    }

    pub fn new(t: (f64, f64), theta: f64, s: (f64, f64)) -> Result<Self> {
        let sp = SpaceParams { t, theta, s };
        sp.validate()?;
        Ok(sp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s.0 > 0.0 && self.s.1 > 0.0) {
            return Err(Error::Data(format!(
                "scale must be strictly positive, got ({}, {})",
                self.s.0, self.s.1
            )));
        }
        if !(self.theta > -std::f64::consts::PI && self.theta <= std::f64::consts::PI) {
            return Err(Error::Data(format!("theta {} outside (-pi, pi]", self.theta)));
        }
        if ![self.t.0, self.t.1, self.theta, self.s.0, self.s.1]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Data("non-finite space parameters".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn apply_point(&self, p: (f64, f64)) -> (f64, f64) {
        let (sx, sy) = (p.0 * self.s.0, p.1 * self.s.1);
        let (c, s) = (self.theta.cos(), self.theta.sin());
        (
            c * sx - s * sy + self.t.0,
            s * sx + c * sy + self.t.1,
        )
    }

    /// Linear part only — used for mode increments, which must not pick up
    /// the translation.
    #[inline]
    pub fn apply_vector(&self, v: (f64, f64)) -> (f64, f64) {
        let (sx, sy) = (v.0 * self.s.0, v.1 * self.s.1);
        let (c, s) = (self.theta.cos(), self.theta.sin());
        (c * sx - s * sy, s * sx + c * sy)
    }

    #[inline]
    pub fn invert_point(&self, p: (f64, f64)) -> (f64, f64) {
        let (dx, dy) = (p.0 - self.t.0, p.1 - self.t.1);
        let (c, s) = (self.theta.cos(), self.theta.sin());
        let rx = c * dx + s * dy;
        let ry = -s * dx + c * dy;
        (rx / self.s.0, ry / self.s.1)
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

    /// Converts box-semantics parameters (center/size of a detected box)
    /// into the literal transform that maps a reference frame onto the box,
    /// given the bounding box of the reference mean shape.
    pub fn align_to_bbox(&self, mean_bbox: &BBox) -> Result<SpaceParams> {
        let (bw, bh) = mean_bbox.size();
        if !(bw > 0.0 && bh > 0.0) {
            return Err(Error::Data("mean shape has a degenerate bounding box".into()));
        }
        let s = (self.s.0 / bw, self.s.1 / bh);
        let c = mean_bbox.center();
        let partial = SpaceParams {
            t: (0.0, 0.0),
            theta: self.theta,
            s,
        };
        let rc = partial.apply_vector(c);
        SpaceParams::new((self.t.0 - rc.0, self.t.1 - rc.1), self.theta, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_roundtrip() {
        let sp = SpaceParams::new((12.0, -4.0), 0.3, (2.0, 0.5)).unwrap();
        let p = (1.7, -2.3);
        let q = sp.apply_point(p);
        let back = sp.invert_point(q);
        assert!((back.0 - p.0).abs() < 1e-12);
        assert!((back.1 - p.1).abs() < 1e-12);
    }

    #[test]
    fn identity_leaves_points() {
        let sp = SpaceParams::identity();
        assert_eq!(sp.apply_point((3.0, 4.0)), (3.0, 4.0));
    }

    #[test]
    fn align_to_bbox_maps_mean_box_onto_detected_box() {
        // Reference mean with bbox [-0.4,0.6] x [-0.3,0.3].
        let mean = Shape::from_points(&[(-0.4, 0.0), (0.6, 0.0), (0.1, -0.3), (0.1, 0.3)]).unwrap();
        let detected = SpaceParams::new((100.0, 80.0), 0.0, (50.0, 30.0)).unwrap();
        let lit = detected.align_to_bbox(&mean.bbox()).unwrap();
        let placed = lit.apply(&mean);
        let bb = placed.bbox();
        assert!((bb.center().0 - 100.0).abs() < 1e-9);
        assert!((bb.center().1 - 80.0).abs() < 1e-9);
        assert!((bb.size().0 - 50.0).abs() < 1e-9);
        assert!((bb.size().1 - 30.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_scale_rejected() {
        assert!(SpaceParams::new((0.0, 0.0), 0.0, (0.0, 1.0)).is_err());
    }

    #[test]
    fn normalized_shape_has_unit_rms_and_zero_centroid() {
        let s = Shape::from_points(&[(3.0, 1.0), (7.0, 2.0), (5.0, 9.0)]).unwrap();
        let n = s.normalized().unwrap();
        let (cx, cy) = n.centroid();
        assert!(cx.abs() < 1e-12 && cy.abs() < 1e-12);
        assert!((n.rms_radius() - 1.0).abs() < 1e-12);
    }
}
