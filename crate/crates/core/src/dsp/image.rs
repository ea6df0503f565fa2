use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const DYNAMIC_RANGE_DB: f32 = 80.0;

/// Writes a `[bins, frames]` magnitude as an 8-bit grayscale PNG of its
/// log-magnitude, top 80 dB mapped to 0..=255. Image row 0 is the lowest bin.
pub fn write_log_magnitude_png(path: impl AsRef<Path>, magnitude: &Tensor<f32>) -> Result<()> {
    let path = path.as_ref();
    let (rows, cols) = match magnitude.shape() {
        &[r, c] => (r, c),
        s => return Err(Error::shape("write_log_magnitude_png", format!("expected 2-D, got {s:?}"))),
    };
    let db: Vec<f32> = magnitude
        .data()
        .iter()
        .map(|&m| 20.0 * (m.max(1e-10)).log10())
        .collect();
    let top = db.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let pixels: Vec<u8> = db
        .iter()
        .map(|&v| (((v - top + DYNAMIC_RANGE_DB) / DYNAMIC_RANGE_DB).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), cols as u32, rows as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| Error::Archive(format!("png encoding failed for {}: {e}", path.display()));
    let mut writer = encoder.write_header().map_err(png_err)?;
    writer.write_image_data(&pixels).map_err(png_err)?;
    writer.finish().map_err(png_err)
}
