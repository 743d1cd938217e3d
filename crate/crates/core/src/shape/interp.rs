//! Equidistant secondary-landmark interpolation along a closed contour
//! between manually placed primary landmarks.

use crate::error::{Error, Result};

/// Tolerance for a primary landmark to count as lying on the contour.
const ON_CONTOUR_TOL: f64 = 1.0;

/// Places `count` landmarks on a closed contour: the primaries themselves
/// plus equidistant secondary landmarks along each contour segment between
/// consecutive primaries. Secondary counts are apportioned to segments by
/// arc length (largest remainder), and spacing is uniform within a segment.
///
/// Primaries must lie within one pixel of the contour and appear in contour
/// order; the output starts at the first primary.
pub fn interpolate_landmarks(
    primary: &[(f64, f64)],
    contour: &[(f64, f64)],
    count: usize,
) -> Result<Vec<(f64, f64)>> {
    if primary.len() < 2 {
        return Err(Error::Data("need at least two primary landmarks".into()));
    }
    if contour.len() < 3 {
        return Err(Error::Data("contour needs at least three vertices".into()));
    }
    if count < primary.len() {
        return Err(Error::Data(format!(
            "count {} smaller than the {} primaries",
            count,
            primary.len()
        )));
    }
    for (i, a) in primary.iter().enumerate() {
        for b in &primary[i + 1..] {
            if (a.0 - b.0).hypot(a.1 - b.1) < 1e-9 {
                return Err(Error::Data("coincident primary landmarks".into()));
            }
        }
    }

    let cumlen = cumulative_lengths(contour);
    let total = *cumlen.last().expect("non-empty contour");
    if total <= 0.0 {
        return Err(Error::Data("contour has zero length".into()));
    }

    // Arc-length parameter of each primary on the contour.
    let mut params = Vec::with_capacity(primary.len());
    for &p in primary {
        let (s, dist) = project_onto_contour(contour, &cumlen, p);
        if dist > ON_CONTOUR_TOL {
            return Err(Error::Data(format!(
                "primary ({}, {}) lies {dist:.3} px off the contour",
                p.0, p.1
            )));
        }
        params.push(s);
    }

    // Unroll parameters so they increase from the first primary.
    let s0 = params[0];
    let mut unrolled: Vec<f64> = params
        .iter()
        .map(|&s| {
            let d = s - s0;
            if d < 0.0 {
                d + total
            } else {
                d
            }
        })
        .collect();
    for w in unrolled.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Data(
                "primary landmarks are not in contour order".into(),
            ));
        }
    }
    unrolled.push(total); // close back to the first primary

    // Apportion secondaries to segments by length, largest remainder.
    let p = primary.len();
    let n_secondary = count - p;
    let seg_lens: Vec<f64> = (0..p).map(|i| unrolled[i + 1] - unrolled[i]).collect();
    let quota: Vec<f64> = seg_lens
        .iter()
        .map(|l| l / total * n_secondary as f64)
        .collect();
    let mut alloc: Vec<usize> = quota.iter().map(|q| q.floor() as usize).collect();
    let mut left = n_secondary - alloc.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        let ra = quota[a] - quota[a].floor();
        let rb = quota[b] - quota[b].floor();
        rb.partial_cmp(&ra).expect("finite remainders").then(a.cmp(&b))
    });
    for &i in &order {
        if left == 0 {
            break;
        }
        alloc[i] += 1;
        left -= 1;
    }

    let mut out = Vec::with_capacity(count);
    for i in 0..p {
        out.push(point_at_arclength(contour, &cumlen, (s0 + unrolled[i]) % total));
        let m = alloc[i];
        for j in 1..=m {
            let s = unrolled[i] + seg_lens[i] * j as f64 / (m + 1) as f64;
            out.push(point_at_arclength(contour, &cumlen, (s0 + s) % total));
        }
    }
    Ok(out)
}

fn cumulative_lengths(contour: &[(f64, f64)]) -> Vec<f64> {
    let n = contour.len();
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for i in 0..n {
        let a = contour[i];
        let b = contour[(i + 1) % n];
        cum.push(cum[i] + (b.0 - a.0).hypot(b.1 - a.1));
    }
    cum
}

/// Nearest point on the closed polyline; returns (arc-length parameter,
/// distance).
fn project_onto_contour(contour: &[(f64, f64)], cumlen: &[f64], p: (f64, f64)) -> (f64, f64) {
    let n = contour.len();
    let mut best = (0.0, f64::INFINITY);
    for i in 0..n {
        let a = contour[i];
        let b = contour[(i + 1) % n];
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = (a.0 + t * dx, a.1 + t * dy);
        let d = (p.0 - q.0).hypot(p.1 - q.1);
        if d < best.1 {
            best = (cumlen[i] + t * len2.sqrt(), d);
        }
    }
    best
}

fn point_at_arclength(contour: &[(f64, f64)], cumlen: &[f64], s: f64) -> (f64, f64) {
    let n = contour.len();
    let total = cumlen[n];
    let s = s.rem_euclid(total);
    // Find the segment containing s.
    let mut i = match cumlen.binary_search_by(|c| c.partial_cmp(&s).expect("finite")) {
        Ok(idx) => idx,
        Err(idx) => idx.saturating_sub(1),
    };
    if i >= n {
        i = n - 1;
    }
    let a = contour[i];
    let b = contour[(i + 1) % n];
    let seg = cumlen[i + 1] - cumlen[i];
    let t = if seg > 0.0 { (s - cumlen[i]) / seg } else { 0.0 };
    (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
}
