//! Segmentation metrics: Dice, Jaccard, average contour distance, Pearson
//! correlation, and the paired sign-rank test used for baseline ordering.

use crate::error::{Error, Result};
use crate::image::Mask;

fn check_dims(a: &Mask, b: &Mask) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Dimension(format!(
            "mask dimensions differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

fn overlap_counts(a: &Mask, b: &Mask) -> (u64, u64, u64) {
    let mut na = 0u64;
    let mut nb = 0u64;
    let mut ni = 0u64;
    for (x, y) in a.data.iter().zip(&b.data) {
        na += u64::from(*x);
        nb += u64::from(*y);
        ni += u64::from(*x && *y);
    }
    (na, nb, ni)
}

/// Dice similarity coefficient `2|A∩B| / (|A|+|B|)`.
///
/// Two empty masks compare as identical (1.0, with a warning).
pub fn dsc(gt: &Mask, seg: &Mask) -> Result<f64> {
    check_dims(gt, seg)?;
    let (na, nb, ni) = overlap_counts(gt, seg);
    if na + nb == 0 {
        log::warn!("DSC of two empty masks defined as 1.0");
        return Ok(1.0);
    }
    Ok(2.0 * ni as f64 / (na + nb) as f64)
}

/// Jaccard overlap `|A∩B| / |A∪B|`; empty-vs-empty follows the DSC
/// convention.
pub fn jaccard(gt: &Mask, seg: &Mask) -> Result<f64> {
    check_dims(gt, seg)?;
    let (na, nb, ni) = overlap_counts(gt, seg);
    let nu = na + nb - ni;
    if nu == 0 {
        log::warn!("Jaccard of two empty masks defined as 1.0");
        return Ok(1.0);
    }
    Ok(ni as f64 / nu as f64)
}

/// Symmetric average point-to-set distance between two point clouds,
/// scaled by physical spacing (isotropic mm/px).
pub fn acd_points(gt: &[(f64, f64)], seg: &[(f64, f64)], spacing_mm: f64) -> Result<f64> {
    if gt.is_empty() || seg.is_empty() {
        return Err(Error::Data("empty contour in ACD".into()));
    }
    let mean_min = |from: &[(f64, f64)], to: &[(f64, f64)]| -> f64 {
        let mut acc = 0.0;
        for p in from {
            let mut best = f64::INFINITY;
            for q in to {
                let d2 = (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2);
                if d2 < best {
                    best = d2;
                }
            }
            acc += best.sqrt();
        }
        acc / from.len() as f64
    };
    Ok(0.5 * (mean_min(seg, gt) + mean_min(gt, seg)) * spacing_mm)
}

/// Average contour distance between closed landmark polylines, in mm.
///
/// Each polyline is densely resampled (at least 4x the landmark density)
/// before the symmetric point-to-set distance is taken.
pub fn acd(
    gt_contours: &[Vec<(f64, f64)>],
    seg_contours: &[Vec<(f64, f64)>],
    spacing_mm: f64,
) -> Result<f64> {
    let gt_pts = resample_contours(gt_contours, 4)?;
    let seg_pts = resample_contours(seg_contours, 4)?;
    acd_points(&gt_pts, &seg_pts, spacing_mm)
}

/// Resamples each closed polyline to `factor` x its vertex count, uniformly
/// by arc length, and pools the points.
pub fn resample_contours(contours: &[Vec<(f64, f64)>], factor: usize) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for contour in contours {
        if contour.len() < 2 {
            return Err(Error::Data("contour needs at least two vertices".into()));
        }
        let n = contour.len();
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        for i in 0..n {
            let a = contour[i];
            let b = contour[(i + 1) % n];
            cum.push(cum[i] + (b.0 - a.0).hypot(b.1 - a.1));
        }
        let total = cum[n];
        let samples = n * factor;
        if total <= 0.0 {
            // Degenerate contour collapses to its single location.
            out.push(contour[0]);
            continue;
        }
        let mut seg = 0usize;
        for k in 0..samples {
            let s = total * k as f64 / samples as f64;
            while seg + 1 < n && cum[seg + 1] <= s {
                seg += 1;
            }
            let a = contour[seg];
            let b = contour[(seg + 1) % n];
            let len = cum[seg + 1] - cum[seg];
            let t = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
            out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
        }
    }
    Ok(out)
}

/// Extracts the boundary pixel centers of a mask (4-connectivity), the
/// point set used when a contour metric is applied to rasterized labels.
pub fn mask_boundary_points(mask: &Mask) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for y in 0..mask.height {
        for x in 0..mask.width {
            if !mask.get(x, y) {
                continue;
            }
            let edge = x == 0
                || y == 0
                || x == mask.width - 1
                || y == mask.height - 1
                || !mask.get(x - 1, y)
                || !mask.get(x + 1, y)
                || !mask.get(x, y - 1)
                || !mask.get(x, y + 1);
            if edge {
                out.push((x as f64, y as f64));
            }
        }
    }
    out
}

/// Sample Pearson correlation coefficient.
pub fn pearson_r(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension("series lengths differ".into()));
    }
    if a.len() < 2 {
        return Err(Error::Data("need at least two observations".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::Data("zero variance in correlation".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// One-sided paired Wilcoxon signed-rank test that the paired differences
/// `a_i - b_i` are positive. Returns the p-value from the normal
/// approximation with tie correction; zero differences are dropped.
pub fn signed_rank_p_greater(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension("paired series lengths differ".into()));
    }
    let mut diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.len() < 5 {
        return Err(Error::Data(format!(
            "too few nonzero paired differences ({}) for the sign-rank test",
            diffs.len()
        )));
    }
    diffs.sort_by(|x, y| x.abs().partial_cmp(&y.abs()).expect("finite diffs"));

    // Mid-ranks for tied absolute values.
    let n = diffs.len();
    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[j + 1].abs() == diffs[i].abs() {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for r in ranks.iter_mut().take(j + 1).skip(i) {
            *r = mid;
        }
        i = j + 1;
    }

    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
    // Tie correction.
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[j + 1].abs() == diffs[i].abs() {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        if t > 1.0 {
            var -= t * (t * t - 1.0) / 48.0;
        }
        i = j + 1;
    }
    if var <= 0.0 {
        return Err(Error::Numeric("degenerate variance in sign-rank test".into()));
    }
    let z = (w_plus - mean - 0.5) / var.sqrt();
    use statrs::distribution::{ContinuousCDF, Normal};
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(1.0 - normal.cdf(z))
}
