//! Image ingestion and writing: binary PGM (P5) and grayscale PNG.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{GrayImage, Mask};
use crate::error::{Error, Result};

/// Loads an image file and normalizes raw intensities to `[0,1)` by
/// dividing by `2^bit_depth`.
///
/// PGM (P5) and grayscale PNG are accepted; raw values must stay below
/// `2^bit_depth`.
pub fn load_and_normalize(path: &Path, bit_depth: u8) -> Result<GrayImage> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let (width, height, raw) = match ext.as_str() {
        "pgm" => read_pgm_raw(path)?,
        "png" => read_png_gray(path)?,
        other => {
            return Err(Error::Data(format!(
                "unsupported image extension '{other}' for {}",
                path.display()
            )))
        }
    };
    let divisor = (1u32 << bit_depth) as f64;
    let limit = 1u32 << bit_depth;
    let mut pixels = Vec::with_capacity(raw.len());
    for &v in &raw {
        if u32::from(v) >= limit {
            return Err(Error::Data(format!(
                "raw value {v} exceeds stated bit depth {bit_depth} in {}",
                path.display()
            )));
        }
        pixels.push(f64::from(v) / divisor);
    }
    let mut img = GrayImage::new(width, height, pixels)?;
    img.bit_depth_source = bit_depth;
    Ok(img)
}

fn read_pgm_raw(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0usize;
    let mut next_token = |bytes: &[u8]| -> Result<String> {
        // Skip whitespace and '#' comment lines.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Data(format!("truncated PGM header in {}", path.display())));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    let magic = next_token(&bytes)?;
    if magic != "P5" {
        return Err(Error::Data(format!(
            "expected binary PGM (P5), got '{magic}' in {}",
            path.display()
        )));
    }
    let width: usize = next_token(&bytes)?
        .parse()
        .map_err(|_| Error::Data("bad PGM width".into()))?;
    let height: usize = next_token(&bytes)?
        .parse()
        .map_err(|_| Error::Data("bad PGM height".into()))?;
    let maxval: u32 = next_token(&bytes)?
        .parse()
        .map_err(|_| Error::Data("bad PGM maxval".into()))?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Data(format!("unsupported PGM maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let n = width * height;
    let mut raw = Vec::with_capacity(n);
    if maxval < 256 {
        if bytes.len() < pos + n {
            return Err(Error::Data(format!("truncated PGM raster in {}", path.display())));
        }
        raw.extend(bytes[pos..pos + n].iter().map(|&b| u16::from(b)));
    } else {
        if bytes.len() < pos + 2 * n {
            return Err(Error::Data(format!("truncated PGM raster in {}", path.display())));
        }
        for i in 0..n {
            let hi = bytes[pos + 2 * i];
            let lo = bytes[pos + 2 * i + 1];
            raw.push(u16::from_be_bytes([hi, lo]));
        }
    }
    Ok((width, height, raw))
}

/// Writes a binary PGM with the given maxval.
///
/// Quantization mirrors `load_and_normalize`: raw = round(v * (maxval+1))
/// clamped to maxval, so values produced as raw / 2^depth round-trip
/// exactly when maxval = 2^depth - 1.
pub fn write_pgm16(path: &Path, image: &GrayImage, maxval: u16) -> Result<()> {
    let mut out = Vec::with_capacity(32 + 2 * image.pixels().len());
    write!(out, "P5\n{} {}\n{}\n", image.width(), image.height(), maxval)
        .expect("write to Vec cannot fail");
    let scale = f64::from(maxval) + 1.0;
    for &v in image.pixels() {
        let q = (v * scale).round().clamp(0.0, f64::from(maxval)) as u16;
        if maxval < 256 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes a binary mask as an 8-bit PGM (0 background, 255 foreground).
pub fn write_mask_pgm(path: &Path, mask: &Mask) -> Result<()> {
    let mut out = Vec::with_capacity(32 + mask.data.len());
    write!(out, "P5\n{} {}\n255\n", mask.width, mask.height).expect("write to Vec cannot fail");
    out.extend(mask.data.iter().map(|&b| if b { 255u8 } else { 0u8 }));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads an 8- or 16-bit grayscale PNG as raw integer samples.
pub fn read_png_gray(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let dynimg = image::open(path)?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let raw: Vec<u16> = match dynimg {
        image::DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(u16::from).collect(),
        image::DynamicImage::ImageLuma16(buf) => buf.into_raw(),
        other => other.into_luma16().into_raw(),
    };
    Ok((w, h, raw))
}
