//! Normalized grayscale raster with physical spacing, plus the sampling,
//! resizing and rasterization primitives the detectors are built on.
//!
//! Coordinate convention: origin at the top-left pixel, x rightward,
//! y downward, and the center of pixel `(ix, iy)` sits at real coordinates
//! `(ix, iy)`. Out-of-bounds access replicates the nearest edge pixel.

mod io;
mod raster;
mod resize;

pub use io::{load_and_normalize, read_png_gray, write_mask_pgm, write_pgm16};
pub use raster::{polygon_is_simple, rasterize_polygon, rasterize_shape, rasterize_shape_unchecked, Mask};
pub use resize::resize_image;

use crate::error::{Error, Result};

/// Grayscale image with intensities in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    /// Physical spacing in mm/pixel, (sx, sy).
    pub spacing: (f64, f64),
    /// Bit depth of the source data (e.g. 12 for 4096 gray levels).
    pub bit_depth_source: u8,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension("image dimensions must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "pixel buffer length {} does not match {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            spacing: (1.0, 1.0),
            bit_depth_source: 12,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    /// Pixel value with edge replication for out-of-range indices.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> f64 {
        let xi = x.clamp(0, self.width as i64 - 1) as usize;
        let yi = y.clamp(0, self.height as i64 - 1) as usize;
        self.pixels[yi * self.width + xi]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.pixels[y * self.width + x] = value;
    }

    /// Bilinear sample at real coordinates, edge-replicated.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let x0 = x0 as i64;
        let y0 = y0 as i64;
        let v00 = self.get_clamped(x0, y0);
        let v10 = self.get_clamped(x0 + 1, y0);
        let v01 = self.get_clamped(x0, y0 + 1);
        let v11 = self.get_clamped(x0 + 1, y0 + 1);
        let top = v00 + (v10 - v00) * fx;
        let bot = v01 + (v11 - v01) * fx;
        top + (bot - top) * fy
    }

    /// Bicubic (Catmull-Rom) sample at real coordinates, edge-replicated.
    pub fn sample_bicubic(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor() as i64;
        let y0 = y.floor() as i64;
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let wx = cubic_weights(fx);
        let wy = cubic_weights(fy);
        let mut acc = 0.0;
        for (j, wyj) in wy.iter().enumerate() {
            let yy = y0 - 1 + j as i64;
            let mut row = 0.0;
            for (i, wxi) in wx.iter().enumerate() {
                row += wxi * self.get_clamped(x0 - 1 + i as i64, yy);
            }
            acc += wyj * row;
        }
        acc
    }

    pub fn flipped_horizontal(&self) -> GrayImage {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.pixels[y * self.width + x] = self.pixels[y * self.width + (self.width - 1 - x)];
            }
        }
        out
    }

    pub fn flipped_vertical(&self) -> GrayImage {
        let mut out = self.clone();
        for y in 0..self.height {
            let src = (self.height - 1 - y) * self.width;
            out.pixels[y * self.width..(y + 1) * self.width]
                .copy_from_slice(&self.pixels[src..src + self.width]);
        }
        out
    }
}

/// Catmull-Rom kernel weights for the four taps around a fractional offset.
fn cubic_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}
