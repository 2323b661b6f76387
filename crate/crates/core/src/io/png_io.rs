//! 8-bit grayscale PNG export of grid magnitudes and PNG scene import.

use std::fs::File;
use std::path::Path;

use super::bytes::write_file;
use crate::error::{Error, Result};
use crate::grid::RealGrid;

/// Maps `[0, max]` linearly onto `0..=255`, rounding half up.
pub fn to_gray8(values: &[f64], max: f64) -> Vec<u8> {
    values
        .iter()
        .map(|&v| {
            if max > 0.0 {
                (v / max * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect()
}

fn encode_png(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc
            .write_header()
            .map_err(|e| Error::Domain(format!("png encoding: {e}")))?;
        w.write_image_data(pixels)
            .map_err(|e| Error::Domain(format!("png encoding: {e}")))?;
    }
    Ok(out)
}

/// Writes `|g|` (given as magnitudes) scaled so that `max` maps to 255.
pub fn write_png_scaled(path: impl AsRef<Path>, mags: &RealGrid, max: f64) -> Result<()> {
    if mags.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("cannot export a non-finite grid".into()));
    }
    let bytes = encode_png(mags.width(), mags.height(), &to_gray8(mags.data(), max))?;
    write_file(path.as_ref(), &bytes)
}

/// Magnitude PNG with the peak mapped to 255.
pub fn png_export(path: impl AsRef<Path>, mags: &RealGrid) -> Result<()> {
    let max = mags.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let abs = RealGrid::from_vec(mags.height(), mags.width(), mags.data().iter().map(|v| v.abs()).collect())?;
    write_png_scaled(path, &abs, max)
}

/// Side-by-side panel of equally sized magnitude images on one shared linear
/// scale, separated by `gap` black columns.
pub fn write_panel(path: impl AsRef<Path>, panels: &[&RealGrid], gap: usize) -> Result<()> {
    let Some(first) = panels.first() else {
        return Err(Error::Domain("panel needs at least one image".into()));
    };
    let (h, w) = first.dims();
    if panels.iter().any(|p| p.dims() != (h, w)) {
        return Err(Error::ShapeMismatch("panel images must share dimensions".into()));
    }
    let max = panels
        .iter()
        .flat_map(|p| p.data())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let total_w = panels.len() * w + (panels.len() - 1) * gap;
    let mut pixels = vec![0u8; total_w * h];
    for (k, p) in panels.iter().enumerate() {
        let abs: Vec<f64> = p.data().iter().map(|v| v.abs()).collect();
        let gray = to_gray8(&abs, max);
        let x0 = k * (w + gap);
        for r in 0..h {
            pixels[r * total_w + x0..r * total_w + x0 + w].copy_from_slice(&gray[r * w..(r + 1) * w]);
        }
    }
    write_file(path.as_ref(), &encode_png(total_w, h, &pixels)?)
}

/// Reads a PNG as a reflectivity map in `[0, 1]`; color images are reduced to
/// their mean channel value, alpha is ignored.
pub fn read_png_scene(path: impl AsRef<Path>) -> Result<RealGrid> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::format(path, "indexed color after expansion")),
    };
    let color = if channels >= 3 { 3 } else { 1 };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut data = Vec::with_capacity(w * h);
    for r in 0..h {
        let row = &buf[r * info.line_size..r * info.line_size + w * channels];
        for px in row.chunks_exact(channels) {
            let sum: u32 = px[..color].iter().map(|&v| v as u32).sum();
            data.push(sum as f64 / (255.0 * color as f64));
        }
    }
    RealGrid::from_vec(h, w, data)
}
