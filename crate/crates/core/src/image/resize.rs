//! Bicubic image resampling with spacing rescale.

use super::GrayImage;
use crate::error::{Error, Result};

/// Resamples an image to target dimensions with bicubic interpolation.
///
/// Pixel centers are aligned via `src = (dst + 0.5) * scale - 0.5`, so
/// identity dimensions reproduce the input exactly. Physical spacing is
/// rescaled to keep the physical extent unchanged.
pub fn resize_image(image: &GrayImage, target_dims: (usize, usize)) -> Result<GrayImage> {
    let (tw, th) = target_dims;
    if tw == 0 || th == 0 {
        return Err(Error::Dimension("target dimensions must be positive".into()));
    }
    let sx = image.width() as f64 / tw as f64;
    let sy = image.height() as f64 / th as f64;
    let mut pixels = Vec::with_capacity(tw * th);
    for y in 0..th {
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..tw {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            pixels.push(image.sample_bicubic(src_x, src_y));
        }
    }
    let mut out = GrayImage::new(tw, th, pixels)?;
    out.spacing = (image.spacing.0 * sx, image.spacing.1 * sy);
    out.bit_depth_source = image.bit_depth_source;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_resize_is_exact() {
        let px: Vec<f64> = (0..48).map(|i| (i as f64 * 37.0 % 97.0) / 97.0).collect();
        let img = GrayImage::new(8, 6, px).unwrap();
        let out = resize_image(&img, (8, 6)).unwrap();
        for (a, b) in img.pixels().iter().zip(out.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = GrayImage::constant(9, 5, 0.37).unwrap();
        let out = resize_image(&img, (17, 11)).unwrap();
        assert!(out.pixels().iter().all(|&v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn upsampled_ramp_stays_linear_in_interior() {
        let mut px = Vec::new();
        for y in 0..16 {
            for x in 0..16 {
                let _ = y;
                px.push(x as f64 / 15.0);
            }
        }
        let img = GrayImage::new(16, 16, px).unwrap();
        let out = resize_image(&img, (32, 32)).unwrap();
        // Interior pixels of a 2x upsampled ramp track the analytic ramp.
        for y in 4..28 {
            for x in 4..28 {
                let src_x = (x as f64 + 0.5) * 0.5 - 0.5;
                let want = src_x / 15.0;
                let got = out.get(x, y);
                assert!((got - want).abs() < 1e-3, "at ({x},{y}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn spacing_rescales_with_dims() {
        let mut img = GrayImage::constant(100, 50, 0.5).unwrap();
        img.spacing = (0.2, 0.4);
        let out = resize_image(&img, (50, 100)).unwrap();
        assert!((out.spacing.0 - 0.4).abs() < 1e-12);
        assert!((out.spacing.1 - 0.2).abs() < 1e-12);
    }
}
