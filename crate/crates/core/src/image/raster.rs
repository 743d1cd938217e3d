//! Scanline polygon rasterization onto the pixel-center grid.

use crate::error::{Error, Result};
use crate::shape::Shape;

/// Binary mask with row-major storage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn union_with(&mut self, other: &Mask) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a || *b;
        }
    }
}

/// Checks that a closed polygon has no self-intersections (adjacent edges
/// sharing an endpoint are allowed).
pub fn polygon_is_simple(points: &[(f64, f64)]) -> bool {
    let n = points.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let a1 = points[i];
        let a2 = points[(i + 1) % n];
        for j in (i + 1)..n {
            // Skip edges adjacent to edge i.
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let b1 = points[j];
            let b2 = points[(j + 1) % n];
            if segments_intersect(a1, a2, b1, b2) {
                return false;
            }
        }
    }
    true
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn segments_intersect(p1: (f64, f64), p2: (f64, f64), q1: (f64, f64), q2: (f64, f64)) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

/// Rasterizes one closed polygon with even-odd fill; a pixel is set when
/// its center (integer coordinates) lies inside.
pub fn rasterize_polygon(points: &[(f64, f64)], dims: (usize, usize)) -> Result<Mask> {
    let (width, height) = dims;
    if points.len() < 3 {
        return Err(Error::Data("polygon needs at least 3 points".into()));
    }
    if !polygon_is_simple(points) {
        return Err(Error::Data("self-intersecting polygon".into()));
    }
    let mut mask = Mask::new(width, height);
    fill_polygon_rows(points, width, height, |x, y| {
        mask.data[y * width + x] = true;
    });
    Ok(mask)
}

/// Scanline fill over pixel-center rows y = 0..height-1. Horizontal edges
/// contribute no crossings; a crossing at y counts when min_y <= y < max_y
/// (half-open rule), which handles vertices without double counting.
fn fill_polygon_rows(
    points: &[(f64, f64)],
    width: usize,
    height: usize,
    mut set: impl FnMut(usize, usize),
) {
    let n = points.len();
    let mut crossings: Vec<f64> = Vec::with_capacity(8);
    for y in 0..height {
        let yc = y as f64;
        crossings.clear();
        for i in 0..n {
            let (x1, y1) = points[i];
            let (x2, y2) = points[(i + 1) % n];
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
            // Pixel centers strictly between the crossings; a center exactly
            // on the left boundary is inside (half-open span).
            let start = lo.ceil() as i64;
            let end = hi.ceil() as i64 - 1;
            for x in start.max(0)..=end.min(width as i64 - 1) {
                set(x as usize, y);
            }
            k += 2;
        }
    }
}

/// Rasterizes a landmark shape as the union of its per-side closed polygons.
pub fn rasterize_shape(shape: &Shape, dims: (usize, usize)) -> Result<Mask> {
    let mut mask = Mask::new(dims.0, dims.1);
    for side in shape.side_polygons() {
        let part = rasterize_polygon(&side, dims)?;
        mask.union_with(&part);
    }
    Ok(mask)
}

/// Even-odd rasterization without the simplicity check, for predicted
/// contours that may cross themselves slightly.
pub fn rasterize_shape_unchecked(shape: &Shape, dims: (usize, usize)) -> Mask {
    let (width, height) = dims;
    let mut mask = Mask::new(width, height);
    for side in shape.side_polygons() {
        if side.len() < 3 {
            continue;
        }
        fill_polygon_rows(&side, width, height, |x, y| {
            mask.data[y * width + x] = true;
        });
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_with_half_integer_corners_covers_exact_pixels() {
        // Corners on half-integers: covers the 10x10 block of integer centers.
        let square = vec![(2.5, 3.5), (12.5, 3.5), (12.5, 13.5), (2.5, 13.5)];
        let mask = rasterize_polygon(&square, (20, 20)).unwrap();
        assert_eq!(mask.area(), 100);
        assert!(mask.get(3, 4));
        assert!(mask.get(12, 13));
        assert!(!mask.get(2, 4));
        assert!(!mask.get(13, 13));
    }

    #[test]
    fn degenerate_polygon_has_empty_mask() {
        let line = vec![(1.0, 1.0), (5.0, 1.0), (9.0, 1.0)];
        let mask = rasterize_polygon(&line, (12, 12)).unwrap();
        assert_eq!(mask.area(), 0);
    }

    #[test]
    fn disk_area_close_to_analytic() {
        let n = 256;
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                (32.0 + 20.0 * a.cos(), 32.0 + 20.0 * a.sin())
            })
            .collect();
        let mask = rasterize_polygon(&pts, (64, 64)).unwrap();
        let want = std::f64::consts::PI * 400.0;
        let got = mask.area() as f64;
        assert!((got - want).abs() / want < 0.02, "area {got} vs {want}");
    }

    #[test]
    fn self_intersection_rejected() {
        let bow = vec![(0.0, 0.0), (10.0, 10.0), (10.0, 0.0), (0.0, 10.0)];
        assert!(rasterize_polygon(&bow, (12, 12)).is_err());
    }
}
