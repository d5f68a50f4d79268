//! PNG ingest and export.
//!
//! Colour images are sRGB-encoded on disk and linear in memory. Depth maps
//! are read as-is (8- or 16-bit grey, normalized to `[0, 1]`). Phase rasters
//! are quantized to 256 levels over `[0, 2π)`.

use std::f64::consts::TAU;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, ImageReader, RgbImage};

use super::persist::write_atomic;
use crate::convert::{PhaseOnlyHologram, PohKind};
use crate::error::{Error, Result};

/// A linear image, `C × H × W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImage {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(v: f64) -> f64 {
    if v <= 0.0031308 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

fn open(path: &Path) -> Result<DynamicImage> {
    let image_err = |source| Error::Image {
        path: path.to_path_buf(),
        source,
    };
    ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(image_err)
}

/// Loads a PNG as linear intensities with `channels` (1 or 3) channels.
/// Single-channel output uses the image's luma.
pub fn load_image(path: &Path, channels: usize) -> Result<LinearImage> {
    let img = open(path)?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let data = match channels {
        1 => img
            .to_luma16()
            .into_raw()
            .into_iter()
            .map(|v| srgb_to_linear(v as f64 / 65535.0))
            .collect(),
        3 => {
            let raw = img.to_rgb16().into_raw();
            let plane = width * height;
            let mut data = vec![0.0; 3 * plane];
            for (p, px) in raw.chunks_exact(3).enumerate() {
                for c in 0..3 {
                    data[c * plane + p] = srgb_to_linear(px[c] as f64 / 65535.0);
                }
            }
            data
        }
        other => {
            return Err(Error::invalid(format!(
                "images must have 1 or 3 channels, not {other}"
            )))
        }
    };
    Ok(LinearImage {
        channels,
        height,
        width,
        data,
    })
}

/// Loads an 8- or 16-bit grey PNG normalized to `[0, 1]`, returning
/// `(width, height, values)`.
pub fn load_depth(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = img
        .to_luma16()
        .into_raw()
        .into_iter()
        .map(|v| v as f64 / 65535.0)
        .collect();
    Ok((w, h, values))
}

fn encode_png(img: DynamicImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    img.write_to(&mut Cursor::new(&mut buf), ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: "<memory>".into(),
            source,
        })?;
    Ok(buf)
}

fn to_dynamic(
    channels: usize,
    height: usize,
    width: usize,
    quantize: impl Fn(usize) -> u8,
) -> Result<DynamicImage> {
    let plane = height * width;
    let (w, h) = (width as u32, height as u32);
    match channels {
        1 => Ok(DynamicImage::ImageLuma8(
            GrayImage::from_raw(w, h, (0..plane).map(&quantize).collect()).expect("buffer size"),
        )),
        3 => {
            let mut raw = Vec::with_capacity(3 * plane);
            for p in 0..plane {
                for c in 0..3 {
                    raw.push(quantize(c * plane + p));
                }
            }
            Ok(DynamicImage::ImageRgb8(
                RgbImage::from_raw(w, h, raw).expect("buffer size"),
            ))
        }
        other => Err(Error::invalid(format!(
            "PNG export needs 1 or 3 channels, not {other}"
        ))),
    }
}

/// Writes linear intensities as an 8-bit sRGB PNG; values are clipped to
/// `[0, 1]`.
pub fn save_image(path: &Path, image: &LinearImage) -> Result<()> {
    let img = to_dynamic(image.channels, image.height, image.width, |i| {
        let v = linear_to_srgb(image.data[i].clamp(0.0, 1.0));
        (v * 255.0).round() as u8
    })?;
    write_atomic(path, &encode_png(img)?)
}

/// `round(φ/2π · 256) mod 256`.
pub fn quantize_phase(phase: f64) -> u8 {
    ((phase.rem_euclid(TAU) / TAU * 256.0).round() as u32 % 256) as u8
}

pub fn dequantize_phase(level: u8) -> f64 {
    level as f64 * TAU / 256.0
}

pub fn save_phase_png(path: &Path, hologram: &PhaseOnlyHologram) -> Result<()> {
    let (c, h, w) = hologram.dims();
    let img = to_dynamic(c, h, w, |i| quantize_phase(hologram.phase[i]))?;
    write_atomic(path, &encode_png(img)?)
}

/// Reads a phase PNG written by [`save_phase_png`].
pub fn load_phase_png(path: &Path, channels: usize, kind: PohKind) -> Result<PhaseOnlyHologram> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let plane = w * h;
    let phase = match channels {
        1 => img.to_luma8().into_raw().into_iter().map(dequantize_phase).collect(),
        3 => {
            let raw = img.to_rgb8().into_raw();
            let mut out = vec![0.0; 3 * plane];
            for (p, px) in raw.chunks_exact(3).enumerate() {
                for c in 0..3 {
                    out[c * plane + p] = dequantize_phase(px[c]);
                }
            }
            out
        }
        other => {
            return Err(Error::invalid(format!(
                "phase PNGs have 1 or 3 channels, not {other}"
            )))
        }
    };
    PhaseOnlyHologram::new(channels, h, w, phase, kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn srgb_round_trip() {
        for i in 0..=255 {
            let v = i as f64 / 255.0;
            assert!((linear_to_srgb(srgb_to_linear(v)) - v).abs() < 1e-12);
        }
        assert_eq!(srgb_to_linear(0.0), 0.0);
        assert!((srgb_to_linear(1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn phase_quantization_levels() {
        assert_eq!(quantize_phase(0.0), 0);
        assert_eq!(quantize_phase(TAU - 1e-9), 0);
        assert_eq!(quantize_phase(std::f64::consts::PI), 128);
        assert_eq!(dequantize_phase(64), std::f64::consts::FRAC_PI_2);
    }
}
