//! Image and field persistence.
//!
//! Two formats:
//! * 8-bit grayscale PNG, mapped linearly between [0, 1] and [0, 255]
//!   (values outside [0, 1] are clamped on write);
//! * a lossless raw format for float fields: 16-byte header with magic
//!   `VRF1`, u32 height, u32 width, u32 reserved (all little-endian),
//!   followed by row-major f32 data.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use image::{GrayImage, Luma};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

const RAW_MAGIC: &[u8; 4] = b"VRF1";

/// Load an 8-bit grayscale PNG as values in [0, 1].
pub fn read_png_gray(path: impl AsRef<Path>) -> Result<ScalarField> {
    let img = image::open(path.as_ref())?.into_luma8();
    let (w, h) = img.dimensions();
    let data: Vec<f64> = img.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
    ScalarField::from_vec(h as usize, w as usize, data)
}

/// Write a field as 8-bit grayscale PNG, clamping to [0, 1].
pub fn write_png_gray(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    let (h, w) = field.shape();
    let mut img = GrayImage::new(w as u32, h as u32);
    for i in 0..h {
        for j in 0..w {
            let v = field.get(i, j).clamp(0.0, 1.0);
            img.put_pixel(j as u32, i as u32, Luma([(v * 255.0).round() as u8]));
        }
    }
    img.save(path.as_ref())?;
    Ok(())
}

/// Write a field as a min-max normalized grayscale heatmap.
pub fn write_png_heatmap(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    let lo = field.min();
    let hi = field.max();
    let span = if hi > lo { hi - lo } else { 1.0 };
    write_png_gray(path, &field.map(|v| (v - lo) / span))
}

/// Write the raw `VRF1` float32 format.
pub fn write_raw(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    let (h, w) = field.shape();
    let mut f = File::create(path.as_ref())?;
    f.write_all(RAW_MAGIC)?;
    f.write_all(&(h as u32).to_le_bytes())?;
    f.write_all(&(w as u32).to_le_bytes())?;
    f.write_all(&0u32.to_le_bytes())?;
    let mut buf = Vec::with_capacity(4 * h * w);
    for &v in field.as_slice() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    f.write_all(&buf)?;
    Ok(())
}

/// Read the raw `VRF1` float32 format.
pub fn read_raw(path: impl AsRef<Path>) -> Result<ScalarField> {
    let mut f = File::open(path.as_ref())?;
    let mut header = [0u8; 16];
    f.read_exact(&mut header)?;
    if &header[0..4] != RAW_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected VRF1",
            &header[0..4]
        )));
    }
    let h = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)?;
    if buf.len() != 4 * h * w {
        return Err(Error::Format(format!(
            "expected {} data bytes for {}x{}, got {}",
            4 * h * w,
            h,
            w,
            buf.len()
        )));
    }
    let data: Vec<f64> = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    ScalarField::from_vec(h, w, data)
}
