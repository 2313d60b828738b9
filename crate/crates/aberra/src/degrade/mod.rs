//! Spatially-varying image degradation.
//!
//! The ground-truth image is convolved patch by patch with the kernels of a
//! [`PsfGrid`]; between patch centers the per-patch convolutions are blended
//! with separable triangular weights, which makes the overall operator
//! continuous and keeps unit-sum kernels mean-preserving. Borders use
//! symmetric reflection. Noise is added after blending from a counter-based
//! generator, so results do not depend on scheduling. An optional ISP stage
//! applies synchronized white-balance gains to the degraded/clean pair and
//! pushes only the degraded image through a Bayer mosaic plus bilinear
//! demosaic.

mod io;
mod isp;

pub use io::{read_image, write_image, write_png16, write_png8, ImageFormat};
pub use isp::{apply_isp, BayerPattern, IspConfig};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::psf::{Channel, PsfGrid};
use crate::util::gauss_at;

/// Maximum per-axis difference between image and grid sensor dimensions that
/// is absorbed by internal reflection padding.
const PAD_TOLERANCE: usize = 16;

#[derive(Debug, Error)]
pub enum DegradeError {
    #[error(
        "psf grid covers a {grid_w}x{grid_h} sensor but the image is {img_w}x{img_h} \
         (beyond the {PAD_TOLERANCE}px padding tolerance)"
    )]
    GridMismatch {
        grid_w: u32,
        grid_h: u32,
        img_w: usize,
        img_h: usize,
    },
    #[error("image decode error: {0}")]
    Decode(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Whether pixel values are linear light or sRGB-encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColorState {
    Linear,
    Encoded,
}

/// A planar RGB image in f64. Processing happens in linear light; encoding
/// to sRGB only happens at file boundaries. Intermediates may leave [0, 1];
/// clamping happens at encode time.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    /// Channel-major planes: R plane, then G, then B.
    data: Vec<f64>,
    pub source_id: String,
    pub color_state: ColorState,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0);
        Self {
            width,
            height,
            data: vec![0.0; 3 * width * height],
            source_id: String::new(),
            color_state: ColorState::Linear,
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut img = Self::new(width, height);
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    img.data[(c * height + y) * width + x] = f(c, x, y);
                }
            }
        }
        img
    }

    /// Replicates a grayscale plane into all three channels.
    pub fn from_gray(width: usize, height: usize, gray: &[f64]) -> Self {
        assert_eq!(gray.len(), width * height);
        let mut img = Self::new(width, height);
        for c in 0..3 {
            img.data[c * width * height..(c + 1) * width * height].copy_from_slice(gray);
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.width * self.height..(c + 1) * self.width * self.height]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.width * self.height..(c + 1) * self.width * self.height]
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn mean(&self) -> f64 {
        crate::util::compensated_sum(self.data.iter().copied()) / self.data.len() as f64
    }

    /// Extracts a rectangular single-channel region.
    pub fn roi_plane(&self, c: usize, x0: usize, y0: usize, w: usize, h: usize) -> Vec<f64> {
        assert!(x0 + w <= self.width && y0 + h <= self.height);
        let plane = self.channel(c);
        let mut out = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            out.extend_from_slice(&plane[y * self.width + x0..y * self.width + x0 + w]);
        }
        out
    }
}

/// Additive noise model for the degradation of Eq-style image formation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub model: NoiseModel,
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    None,
    Gaussian,
}

impl NoiseConfig {
    pub fn none() -> Self {
        Self {
            model: NoiseModel::None,
            sigma: 0.0,
            seed: 0,
        }
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self {
            model: NoiseModel::Gaussian,
            sigma,
            seed,
        }
    }
}

/// Symmetric reflection index: ..., 1, 0 | 0, 1, ..., n-1 | n-1, n-2, ...
fn reflect(mut i: i64, n: usize) -> usize {
    let n = n as i64;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Per-axis blend: pixel `x` sits between patch centers `i0` and `i1` with
/// interpolation parameter `t` in [0, 1).
fn axis_blend(x: usize, len: usize, patches: usize) -> (usize, usize, f64) {
    let u = (x as f64 + 0.5) * patches as f64 / len as f64 - 0.5;
    if u <= 0.0 {
        (0, 0, 0.0)
    } else if u >= (patches - 1) as f64 {
        (patches - 1, patches - 1, 0.0)
    } else {
        let i0 = u.floor() as usize;
        (i0, i0 + 1, u - i0 as f64)
    }
}

/// Triangular blend weight pair for a parameter `t`; sums to exactly 1.
pub fn blend_weights(t: f64) -> (f64, f64) {
    (1.0 - t, t)
}

/// Full convolution of one channel with one kernel, evaluated at (x, y)
/// with symmetric reflection at the borders.
fn conv_at(
    plane: &[f64],
    w: usize,
    h: usize,
    kernel: &[f32],
    side: usize,
    x: usize,
    y: usize,
) -> f64 {
    let half = (side / 2) as i64;
    let mut acc = 0.0f64;
    for kj in 0..side {
        let sy = reflect(y as i64 - (kj as i64 - half), h);
        let row = &plane[sy * w..(sy + 1) * w];
        let krow = &kernel[kj * side..(kj + 1) * side];
        for (ki, &kv) in krow.iter().enumerate() {
            if kv != 0.0 {
                let sx = reflect(x as i64 - (ki as i64 - half), w);
                acc += kv as f64 * row[sx];
            }
        }
    }
    acc
}

fn degrade_exact(gt: &ImageBuffer, grid: &PsfGrid) -> ImageBuffer {
    let (w, h) = (gt.width, gt.height);
    let mut out = ImageBuffer::new(w, h);
    out.source_id = gt.source_id.clone();
    out.color_state = gt.color_state;
    let x_blend: Vec<(usize, usize, f64)> = (0..w).map(|x| axis_blend(x, w, grid.cols)).collect();
    let y_blend: Vec<(usize, usize, f64)> = (0..h).map(|y| axis_blend(y, h, grid.rows)).collect();

    for c in 0..3 {
        let channel = Channel::ALL[c];
        let plane = gt.channel(c);
        let out_plane = out.channel_mut(c);
        out_plane
            .par_chunks_mut(w)
            .enumerate()
            .for_each(|(y, out_row)| {
                let (r0, r1, ty) = y_blend[y];
                for (x, out_px) in out_row.iter_mut().enumerate() {
                    let (q0, q1, tx) = x_blend[x];
                    let eval = |r: usize, q: usize| {
                        let psf = grid.patch(r, q).channel(channel);
                        conv_at(plane, w, h, &psf.kernel, psf.side, x, y)
                    };
                    // lerp in the delta form: exact when both ends agree.
                    let top = {
                        let v0 = eval(r0, q0);
                        if tx > 0.0 {
                            let v1 = eval(r0, q1);
                            v0 + tx * (v1 - v0)
                        } else {
                            v0
                        }
                    };
                    let val = if ty > 0.0 {
                        let v0 = eval(r1, q0);
                        let bottom = if tx > 0.0 {
                            let v1 = eval(r1, q1);
                            v0 + tx * (v1 - v0)
                        } else {
                            v0
                        };
                        top + ty * (bottom - top)
                    } else {
                        top
                    };
                    *out_px = val;
                }
            });
    }
    out
}

/// Applies the grid's spatially-varying blur to a ground-truth image and adds
/// noise. Images within the padding tolerance of the grid's sensor size are
/// reflection-padded (and cropped back); larger mismatches are an error.
pub fn degrade_image(
    gt: &ImageBuffer,
    grid: &PsfGrid,
    noise: &NoiseConfig,
) -> Result<ImageBuffer, DegradeError> {
    let (gw, gh) = (grid.sensor_w as usize, grid.sensor_h as usize);
    let (iw, ih) = (gt.width, gt.height);
    let mut out = if (iw, ih) == (gw, gh) {
        degrade_exact(gt, grid)
    } else if iw.abs_diff(gw) <= PAD_TOLERANCE && ih.abs_diff(gh) <= PAD_TOLERANCE {
        // Reflect-resize onto the grid raster, degrade there, and resize
        // back; reflection extends or crops as needed in both directions.
        let padded = resize_reflect(gt, gw, gh);
        let degraded = degrade_exact(&padded, grid);
        resize_reflect(&degraded, iw, ih)
    } else {
        return Err(DegradeError::GridMismatch {
            grid_w: grid.sensor_w,
            grid_h: grid.sensor_h,
            img_w: iw,
            img_h: ih,
        });
    };
    out = add_noise(&out, noise);
    Ok(out)
}

fn resize_reflect(img: &ImageBuffer, w: usize, h: usize) -> ImageBuffer {
    let mut out = ImageBuffer::new(w, h);
    out.source_id = img.source_id.clone();
    out.color_state = img.color_state;
    for c in 0..3 {
        let src = img.channel(c);
        let dst = out.channel_mut(c);
        for y in 0..h {
            let sy = reflect(y as i64, img.height);
            for (x, d) in dst[y * w..(y + 1) * w].iter_mut().enumerate() {
                let sx = reflect(x as i64, img.width);
                *d = src[sy * img.width + sx];
            }
        }
    }
    out
}

/// Adds i.i.d. Gaussian noise keyed by (seed, pixel index); `NoiseModel::None`
/// or sigma 0 is the identity.
pub fn add_noise(img: &ImageBuffer, noise: &NoiseConfig) -> ImageBuffer {
    match noise.model {
        NoiseModel::None => img.clone(),
        NoiseModel::Gaussian if noise.sigma == 0.0 => img.clone(),
        NoiseModel::Gaussian => {
            let mut out = img.clone();
            let sigma = noise.sigma;
            let seed = noise.seed;
            out.raw_mut()
                .par_chunks_mut(img.width)
                .enumerate()
                .for_each(|(chunk, row)| {
                    let base = (chunk * img.width) as u64;
                    for (i, v) in row.iter_mut().enumerate() {
                        *v += sigma * gauss_at(seed, base + i as u64);
                    }
                });
            out
        }
    }
}
