//! Image file I/O: 8/16-bit sRGB PNG and a raw float32 planar container.
//!
//! The float container ("IMGF") is a small header (magic `IMGF`, then
//! height, width, channels as little-endian u32) followed by channel-planar
//! float32 data. It carries linear-light values untouched; PNG carries
//! sRGB-encoded values and is what the CLI writes for viewing.

use std::io::{Read, Write};
use std::path::Path;

use image::ImageEncoder;

use super::{ColorState, DegradeError, ImageBuffer};

const IMGF_MAGIC: &[u8; 4] = b"IMGF";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png8,
    Png16,
    Imgf,
}

impl ImageFormat {
    pub fn for_path(path: &Path) -> ImageFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("imgf") => ImageFormat::Imgf,
            _ => ImageFormat::Png16,
        }
    }
}

/// sRGB electro-optical transfer: encoded -> linear.
pub(crate) fn srgb_decode(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// Linear -> sRGB encoded, clamped to [0, 1].
pub(crate) fn srgb_encode(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.003_130_8 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// Reads PNG (sRGB, decoded to linear) or IMGF (linear as stored).
pub fn read_image(path: &Path) -> Result<ImageBuffer, DegradeError> {
    match ImageFormat::for_path(path) {
        ImageFormat::Imgf => read_imgf(path),
        _ => read_png(path),
    }
}

/// Writes in the format implied by the extension (`.imgf` raw float,
/// anything else 16-bit PNG).
pub fn write_image(img: &ImageBuffer, path: &Path) -> Result<(), DegradeError> {
    match ImageFormat::for_path(path) {
        ImageFormat::Imgf => write_imgf(img, path),
        ImageFormat::Png8 => write_png8(img, path),
        ImageFormat::Png16 => write_png16(img, path),
    }
}

fn read_png(path: &Path) -> Result<ImageBuffer, DegradeError> {
    let dynimg = image::open(path).map_err(|e| DegradeError::Decode(e.to_string()))?;
    let rgb = dynimg.to_rgb16();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut img = ImageBuffer::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let px = rgb.get_pixel(x as u32, y as u32);
            for c in 0..3 {
                img.set(c, x, y, srgb_decode(px.0[c] as f64 / 65535.0));
            }
        }
    }
    img.source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    img.color_state = ColorState::Linear;
    Ok(img)
}

pub fn write_png16(img: &ImageBuffer, path: &Path) -> Result<(), DegradeError> {
    let (w, h) = (img.width(), img.height());
    let mut pixels16: Vec<u16> = Vec::with_capacity(3 * w * h);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = srgb_encode(img.get(c, x, y));
                pixels16.push((v * 65535.0).round() as u16);
            }
        }
    }
    let file = std::fs::File::create(path)?;
    let enc = image::codecs::png::PngEncoder::new(std::io::BufWriter::new(file));
    let bytes: Vec<u8> = pixels16.iter().flat_map(|v| v.to_ne_bytes()).collect();
    enc.write_image(&bytes, w as u32, h as u32, image::ExtendedColorType::Rgb16)
        .map_err(|e| DegradeError::Decode(e.to_string()))?;
    Ok(())
}

pub fn write_png8(img: &ImageBuffer, path: &Path) -> Result<(), DegradeError> {
    let (w, h) = (img.width(), img.height());
    let mut buf: Vec<u8> = Vec::with_capacity(3 * w * h);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = srgb_encode(img.get(c, x, y));
                buf.push((v * 255.0).round() as u8);
            }
        }
    }
    let file = std::fs::File::create(path)?;
    let enc = image::codecs::png::PngEncoder::new(std::io::BufWriter::new(file));
    enc.write_image(&buf, w as u32, h as u32, image::ExtendedColorType::Rgb8)
        .map_err(|e| DegradeError::Decode(e.to_string()))?;
    Ok(())
}

fn read_imgf(path: &Path) -> Result<ImageBuffer, DegradeError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[0..4] != IMGF_MAGIC {
        return Err(DegradeError::Decode("not an IMGF file".into()));
    }
    let u32_at =
        |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
    let h = u32_at(4) as usize;
    let w = u32_at(8) as usize;
    let c = u32_at(12) as usize;
    if w == 0 || h == 0 || !(c == 1 || c == 3) {
        return Err(DegradeError::Decode(format!("bad IMGF dims {w}x{h}x{c}")));
    }
    let need = 16 + 4 * w * h * c;
    if bytes.len() != need {
        return Err(DegradeError::Decode(format!(
            "IMGF payload is {} bytes, expected {}",
            bytes.len() - 16,
            need - 16
        )));
    }
    let floats: Vec<f64> = bytes[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let mut img = ImageBuffer::new(w, h);
    if c == 3 {
        img.raw_mut().copy_from_slice(&floats);
    } else {
        for plane in 0..3 {
            img.raw_mut()[plane * w * h..(plane + 1) * w * h].copy_from_slice(&floats);
        }
    }
    img.source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(img)
}

fn write_imgf(img: &ImageBuffer, path: &Path) -> Result<(), DegradeError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(IMGF_MAGIC)?;
    f.write_all(&(img.height() as u32).to_le_bytes())?;
    f.write_all(&(img.width() as u32).to_le_bytes())?;
    f.write_all(&3u32.to_le_bytes())?;
    for &v in img.raw() {
        f.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}
