//! Spatially-varying, per-channel point spread functions.
//!
//! A PSF kernel is rasterized by tracing a dense pupil grid at one wavelength,
//! splatting the surviving image-plane hits onto a pixel raster centered on
//! the chief-ray hit, and normalizing to unit energy. RGB kernels integrate
//! the monochromatic kernels over a camera spectral response; the chief-ray
//! center is taken once at the green reference wavelength so lateral
//! chromatic shifts survive into the stored kernels. A `PsfGrid` tiles the
//! sensor with one RGB kernel triplet per patch.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

use crate::lens::{LensError, LensPrescription};
use crate::trace::{chief_ray, paraxial, pupil_rays, TraceError};
use crate::util::{compensated_sum, fnv1a64};

const PSFG_MAGIC: &[u8; 4] = b"PSFG";
const PSFG_VERSION: u32 = 1;
/// A kernel overflows when more than this fraction of surviving ray energy
/// lands outside the raster.
const OVERFLOW_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum PsfError {
    /// Too much ray energy fell outside the kernel raster; the support is
    /// undersized for this blur.
    #[error("kernel overflow: {out_fraction:.4} of ray energy outside a {side}px window")]
    KernelOverflow { out_fraction: f64, side: usize },
    /// The chief ray died, so there is no reference center for the kernel.
    #[error("chief ray lost at field ({u:.3}, {v:.3})")]
    ChiefRayLost { u: f64, v: f64 },
    /// Field position outside the prescription's declared half field of view.
    #[error("field angle {angle_deg:.2} deg outside the declared half FoV {half_fov_deg:.1} deg")]
    FieldOutsideFov { angle_deg: f64, half_fov_deg: f64 },
    #[error("kernel side must be odd, got {0}")]
    EvenKernel(usize),
    /// Grid construction failed at one patch.
    #[error("psf grid failed at patch ({row}, {col}): {source}")]
    PatchFailed {
        row: usize,
        col: usize,
        #[source]
        source: Box<PsfError>,
    },
    #[error("bad psf grid file: {0}")]
    Format(String),
    #[error("bad spectral response: {0}")]
    Response(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Lens(#[from] LensError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Color channel of an integrated kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    R,
    G,
    B,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::R, Channel::G, Channel::B];

    pub fn index(self) -> usize {
        match self {
            Channel::R => 0,
            Channel::G => 1,
            Channel::B => 2,
        }
    }
}

/// Camera spectral response sampled on a uniform wavelength grid; each
/// channel's weights are normalized to sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResponse {
    pub wavelengths_nm: Vec<f64>,
    pub r: Vec<f64>,
    pub g: Vec<f64>,
    pub b: Vec<f64>,
}

impl SpectralResponse {
    /// Default response: three Gaussian channel curves centered at
    /// 460/540/610 nm with sigma 35/40/45 nm, sampled 400..=700 nm at 10 nm.
    pub fn default_rgb() -> Self {
        let wavelengths: Vec<f64> = (0..31).map(|i| 400.0 + 10.0 * i as f64).collect();
        let gauss = |center: f64, sigma: f64| -> Vec<f64> {
            wavelengths
                .iter()
                .map(|&w| (-((w - center) * (w - center)) / (2.0 * sigma * sigma)).exp())
                .collect()
        };
        Self::new(
            wavelengths.clone(),
            gauss(610.0, 45.0),
            gauss(540.0, 40.0),
            gauss(460.0, 35.0),
        )
        .expect("default response is valid")
    }

    /// Builds a response from raw (non-negative) weights, normalizing each
    /// channel to unit sum.
    pub fn new(
        wavelengths_nm: Vec<f64>,
        r: Vec<f64>,
        g: Vec<f64>,
        b: Vec<f64>,
    ) -> Result<Self, PsfError> {
        let n = wavelengths_nm.len();
        if n == 0 || r.len() != n || g.len() != n || b.len() != n {
            return Err(PsfError::Response("channel length mismatch".into()));
        }
        let normalize = |mut v: Vec<f64>| -> Result<Vec<f64>, PsfError> {
            if v.iter().any(|&x| x < 0.0 || !x.is_finite()) {
                return Err(PsfError::Response("negative or non-finite weight".into()));
            }
            let s = compensated_sum(v.iter().copied());
            if s <= 0.0 {
                return Err(PsfError::Response("channel weights sum to zero".into()));
            }
            v.iter_mut().for_each(|x| *x /= s);
            Ok(v)
        };
        Ok(Self {
            wavelengths_nm,
            r: normalize(r)?,
            g: normalize(g)?,
            b: normalize(b)?,
        })
    }

    /// `wavelength_nm,r,g,b` rows with a header line.
    pub fn from_csv(text: &str) -> Result<Self, PsfError> {
        let mut wl = Vec::new();
        let (mut r, mut g, mut b) = (Vec::new(), Vec::new(), Vec::new());
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("wavelength")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(PsfError::Response(format!(
                    "line {}: expected 4 comma-separated fields",
                    lineno + 1
                )));
            }
            let parse = |s: &str| -> Result<f64, PsfError> {
                s.parse().map_err(|_| {
                    PsfError::Response(format!("line {}: bad number {s:?}", lineno + 1))
                })
            };
            wl.push(parse(fields[0])?);
            r.push(parse(fields[1])?);
            g.push(parse(fields[2])?);
            b.push(parse(fields[3])?);
        }
        Self::new(wl, r, g, b)
    }

    fn weight(&self, channel: Channel, idx: usize) -> f64 {
        match channel {
            Channel::R => self.r[idx],
            Channel::G => self.g[idx],
            Channel::B => self.b[idx],
        }
    }

    /// Weighted mean wavelength of the green channel; the chief-ray reference.
    pub fn green_reference_nm(&self) -> f64 {
        compensated_sum(
            self.wavelengths_nm
                .iter()
                .zip(&self.g)
                .map(|(&w, &gw)| w * gw),
        )
    }
}

/// A monochromatic unit-sum kernel in full precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub side: usize,
    pub data: Vec<f64>,
}

impl Kernel {
    pub fn sum(&self) -> f64 {
        compensated_sum(self.data.iter().copied())
    }

    fn normalized(mut self) -> Self {
        let s = self.sum();
        if s > 0.0 {
            self.data.iter_mut().for_each(|v| *v /= s);
        }
        self
    }
}

/// Dirac kernel: all energy in the center pixel.
pub fn delta_kernel(side: usize) -> Kernel {
    assert!(side % 2 == 1, "kernel side must be odd");
    let mut data = vec![0.0; side * side];
    data[(side / 2) * side + side / 2] = 1.0;
    Kernel { side, data }
}

/// Isotropic Gaussian kernel with standard deviation `sigma` pixels.
pub fn gaussian_kernel(side: usize, sigma: f64) -> Kernel {
    assert!(side % 2 == 1, "kernel side must be odd");
    assert!(sigma > 0.0);
    let c = (side / 2) as f64;
    let mut data = vec![0.0; side * side];
    for j in 0..side {
        for i in 0..side {
            let dx = i as f64 - c;
            let dy = j as f64 - c;
            data[j * side + i] = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
        }
    }
    Kernel { side, data }.normalized()
}

/// One stored kernel: non-negative, unit-sum, odd support.
#[derive(Debug, Clone, PartialEq)]
pub struct Psf {
    pub kernel: Vec<f32>,
    pub side: usize,
    pub channel: Channel,
    /// Normalized sensor coordinates in [0, 1]^2 this kernel was sampled at.
    pub field_position: (f64, f64),
}

impl Psf {
    fn from_kernel(kernel: &Kernel, channel: Channel, field_position: (f64, f64)) -> Self {
        Self {
            kernel: kernel.data.iter().map(|&v| v as f32).collect(),
            side: kernel.side,
            channel,
            field_position,
        }
    }

    pub fn sum(&self) -> f64 {
        compensated_sum(self.kernel.iter().map(|&v| v as f64))
    }

    /// Energy-weighted centroid offset from the kernel center, in pixels.
    pub fn centroid_px(&self) -> (f64, f64) {
        let c = (self.side / 2) as f64;
        let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
        for j in 0..self.side {
            for i in 0..self.side {
                let w = self.kernel[j * self.side + i] as f64;
                sx += w * (i as f64 - c);
                sy += w * (j as f64 - c);
                sw += w;
            }
        }
        (sx / sw, sy / sw)
    }

    /// RMS radius of the kernel about its centroid, in pixels.
    pub fn rms_width_px(&self) -> f64 {
        let (cx, cy) = self.centroid_px();
        let c = (self.side / 2) as f64;
        let (mut s2, mut sw) = (0.0, 0.0);
        for j in 0..self.side {
            for i in 0..self.side {
                let w = self.kernel[j * self.side + i] as f64;
                let dx = i as f64 - c - cx;
                let dy = j as f64 - c - cy;
                s2 += w * (dx * dx + dy * dy);
                sw += w;
            }
        }
        (s2 / sw).sqrt()
    }
}

/// RGB kernel triplet for one field position.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbPsf {
    pub r: Psf,
    pub g: Psf,
    pub b: Psf,
}

impl RgbPsf {
    pub fn channel(&self, c: Channel) -> &Psf {
        match c {
            Channel::R => &self.r,
            Channel::G => &self.g,
            Channel::B => &self.b,
        }
    }
}

/// Per-patch RGB kernels covering the full sensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfGrid {
    pub rows: usize,
    pub cols: usize,
    pub kernel_px: usize,
    pub sensor_w: u32,
    pub sensor_h: u32,
    pub lens_id: String,
    pub patches: Vec<RgbPsf>,
}

/// Knobs for PSF rasterization.
#[derive(Debug, Clone)]
pub struct GridConfig {
    /// Pupil samples per axis for each traced wavelength.
    pub pupil_samples: usize,
    /// Kernel raster side in pixels (odd). Escalated once on overflow.
    pub kernel_px: usize,
    pub response: SpectralResponse,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            pupil_samples: 24,
            kernel_px: 31,
            response: SpectralResponse::default_rgb(),
        }
    }
}

/// Normalized sensor position -> chief-ray launch direction.
fn field_dir(
    lens: &LensPrescription,
    efl_mm: f64,
    u: f64,
    v: f64,
) -> Result<Vector3<f64>, PsfError> {
    let (dx, dy) = lens.sensor.offset_mm(u, v);
    let angle_deg = (dx.hypot(dy) / efl_mm).atan().to_degrees();
    let half_fov = lens.spec.half_fov_deg;
    if angle_deg > half_fov * 1.05 + 1e-9 {
        return Err(PsfError::FieldOutsideFov {
            angle_deg,
            half_fov_deg: half_fov,
        });
    }
    Ok(Vector3::new(dx, dy, efl_mm).normalize())
}

/// Bilinearly splats hits (mm on the image plane) onto a `side`^2 raster at
/// `pitch_mm` per pixel, centered on `center`. Returns the unnormalized bins
/// and the fraction of total weight that fell outside the raster.
pub(crate) fn bin_hits(
    hits: &[(f64, f64)],
    center: (f64, f64),
    side: usize,
    pitch_mm: f64,
) -> (Vec<f64>, f64) {
    let half = (side / 2) as f64;
    let mut bins = vec![0.0f64; side * side];
    let mut out_weight = 0.0f64;
    for &(x, y) in hits {
        let u = (x - center.0) / pitch_mm + half;
        let v = (y - center.1) / pitch_mm + half;
        let i0 = u.floor();
        let j0 = v.floor();
        let fu = u - i0;
        let fv = v - j0;
        let splat = [
            (i0 as i64, j0 as i64, (1.0 - fu) * (1.0 - fv)),
            (i0 as i64 + 1, j0 as i64, fu * (1.0 - fv)),
            (i0 as i64, j0 as i64 + 1, (1.0 - fu) * fv),
            (i0 as i64 + 1, j0 as i64 + 1, fu * fv),
        ];
        for (i, j, w) in splat {
            if i >= 0 && j >= 0 && (i as usize) < side && (j as usize) < side {
                bins[j as usize * side + i as usize] += w;
            } else {
                out_weight += w;
            }
        }
    }
    let total = hits.len() as f64;
    (bins, if total > 0.0 { out_weight / total } else { 0.0 })
}

fn alive_hits(
    lens: &LensPrescription,
    dir: Vector3<f64>,
    wavelength_nm: f64,
    pupil_samples: usize,
) -> Result<Vec<(f64, f64)>, PsfError> {
    let rays = pupil_rays(lens, dir, wavelength_nm, pupil_samples)?;
    Ok(rays
        .iter()
        .filter(|r| r.alive())
        .map(|r| (r.origin.x, r.origin.y))
        .collect())
}

/// Monochromatic PSF at one field position, centered on its own chief ray.
pub fn raster_psf(
    lens: &LensPrescription,
    field_position: (f64, f64),
    wavelength_nm: f64,
    pupil_samples: usize,
    kernel_px: usize,
) -> Result<Kernel, PsfError> {
    if kernel_px.is_multiple_of(2) {
        return Err(PsfError::EvenKernel(kernel_px));
    }
    let par = paraxial(lens)?;
    let (u, v) = field_position;
    let dir = field_dir(lens, par.efl_mm, u, v)?;
    let chief = chief_ray(lens, dir, wavelength_nm)?;
    if !chief.alive() {
        return Err(PsfError::ChiefRayLost { u, v });
    }
    let center = (chief.origin.x, chief.origin.y);
    let hits = alive_hits(lens, dir, wavelength_nm, pupil_samples)?;
    if hits.is_empty() {
        return Err(TraceError::AllRaysVignetted {
            field_angle_deg: (dir.y.hypot(dir.x) / dir.z).atan().to_degrees(),
        }
        .into());
    }
    let pitch = lens.sensor.pixel_pitch_um * 1e-3;
    let (bins, out_fraction) = bin_hits(&hits, center, kernel_px, pitch);
    if out_fraction > OVERFLOW_FRACTION {
        return Err(PsfError::KernelOverflow {
            out_fraction,
            side: kernel_px,
        });
    }
    Ok(Kernel {
        side: kernel_px,
        data: bins,
    }
    .normalized())
}

/// Spectrally integrated RGB kernel triplet at one field position.
///
/// All three channels share the green-reference chief-ray center, so lateral
/// color shows up as opposite centroid shifts in R and B rather than being
/// normalized away.
pub fn rgb_psf(
    lens: &LensPrescription,
    field_position: (f64, f64),
    response: &SpectralResponse,
    pupil_samples: usize,
    kernel_px: usize,
) -> Result<RgbPsf, PsfError> {
    if kernel_px.is_multiple_of(2) {
        return Err(PsfError::EvenKernel(kernel_px));
    }
    let par = paraxial(lens)?;
    let (u, v) = field_position;
    let dir = field_dir(lens, par.efl_mm, u, v)?;
    let chief = chief_ray(lens, dir, response.green_reference_nm())?;
    if !chief.alive() {
        return Err(PsfError::ChiefRayLost { u, v });
    }
    let center = (chief.origin.x, chief.origin.y);
    let pitch = lens.sensor.pixel_pitch_um * 1e-3;

    let mut acc = [
        vec![0.0f64; kernel_px * kernel_px],
        vec![0.0f64; kernel_px * kernel_px],
        vec![0.0f64; kernel_px * kernel_px],
    ];
    for (idx, &wl) in response.wavelengths_nm.iter().enumerate() {
        let weights = [
            response.weight(Channel::R, idx),
            response.weight(Channel::G, idx),
            response.weight(Channel::B, idx),
        ];
        if weights.iter().all(|&w| w == 0.0) {
            continue;
        }
        let hits = alive_hits(lens, dir, wl, pupil_samples)?;
        if hits.is_empty() {
            return Err(TraceError::AllRaysVignetted {
                field_angle_deg: (dir.y.hypot(dir.x) / dir.z).atan().to_degrees(),
            }
            .into());
        }
        let (bins, out_fraction) = bin_hits(&hits, center, kernel_px, pitch);
        if out_fraction > OVERFLOW_FRACTION {
            return Err(PsfError::KernelOverflow {
                out_fraction,
                side: kernel_px,
            });
        }
        let s = compensated_sum(bins.iter().copied());
        for (c, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                for (dst, &src) in acc[c].iter_mut().zip(&bins) {
                    *dst += w * src / s;
                }
            }
        }
    }
    let make = |data: &Vec<f64>, channel: Channel| {
        let kernel = Kernel {
            side: kernel_px,
            data: data.clone(),
        }
        .normalized();
        Psf::from_kernel(&kernel, channel, field_position)
    };
    Ok(RgbPsf {
        r: make(&acc[0], Channel::R),
        g: make(&acc[1], Channel::G),
        b: make(&acc[2], Channel::B),
    })
}

/// Field position of the center of patch (row, col) on a rows x cols grid.
pub fn patch_center(row: usize, col: usize, rows: usize, cols: usize) -> (f64, f64) {
    (
        (col as f64 + 0.5) / cols as f64,
        (row as f64 + 0.5) / rows as f64,
    )
}

/// Builds the full per-patch PSF grid for a lens. Patches are evaluated in
/// parallel; on kernel overflow the whole grid is retried once with roughly
/// doubled (next odd) support.
pub fn build_grid(
    lens: &LensPrescription,
    rows: usize,
    cols: usize,
    cfg: &GridConfig,
) -> Result<PsfGrid, PsfError> {
    assert!(rows >= 1 && cols >= 1);
    match try_build_grid(lens, rows, cols, cfg, cfg.kernel_px) {
        Err(e) if overflowed(&e) => {
            let escalated = 2 * cfg.kernel_px + 1;
            try_build_grid(lens, rows, cols, cfg, escalated)
        }
        other => other,
    }
}

fn overflowed(e: &PsfError) -> bool {
    match e {
        PsfError::KernelOverflow { .. } => true,
        PsfError::PatchFailed { source, .. } => overflowed(source),
        _ => false,
    }
}

fn try_build_grid(
    lens: &LensPrescription,
    rows: usize,
    cols: usize,
    cfg: &GridConfig,
    kernel_px: usize,
) -> Result<PsfGrid, PsfError> {
    let results: Vec<Result<RgbPsf, PsfError>> = (0..rows * cols)
        .into_par_iter()
        .map(|p| {
            let (row, col) = (p / cols, p % cols);
            rgb_psf(
                lens,
                patch_center(row, col, rows, cols),
                &cfg.response,
                cfg.pupil_samples,
                kernel_px,
            )
            .map_err(|e| PsfError::PatchFailed {
                row,
                col,
                source: Box::new(e),
            })
        })
        .collect();
    let mut patches = Vec::with_capacity(rows * cols);
    for r in results {
        patches.push(r?);
    }
    Ok(PsfGrid {
        rows,
        cols,
        kernel_px,
        sensor_w: lens.sensor.width,
        sensor_h: lens.sensor.height,
        lens_id: lens_id_of(lens),
        patches,
    })
}

fn lens_id_of(lens: &LensPrescription) -> String {
    let text = crate::lens::serialize_lens(lens);
    format!("lens-{:016x}", fnv1a64(text.as_bytes()))
}

impl PsfGrid {
    /// Grid of identical kernels in every patch and channel.
    pub fn uniform(
        rows: usize,
        cols: usize,
        sensor_w: u32,
        sensor_h: u32,
        kernel: &Kernel,
        lens_id: &str,
    ) -> Self {
        Self::from_kernel_fn(rows, cols, sensor_w, sensor_h, lens_id, |_, _| {
            kernel.clone()
        })
    }

    /// Grid whose kernel at each patch comes from `f(u, v)` (same kernel for
    /// all three channels).
    pub fn from_kernel_fn(
        rows: usize,
        cols: usize,
        sensor_w: u32,
        sensor_h: u32,
        lens_id: &str,
        f: impl Fn(f64, f64) -> Kernel,
    ) -> Self {
        let mut patches = Vec::with_capacity(rows * cols);
        let mut kernel_px = 0;
        for row in 0..rows {
            for col in 0..cols {
                let pos = patch_center(row, col, rows, cols);
                let k = f(pos.0, pos.1).normalized();
                assert!(
                    kernel_px == 0 || kernel_px == k.side,
                    "all patches must share one kernel side"
                );
                kernel_px = k.side;
                patches.push(RgbPsf {
                    r: Psf::from_kernel(&k, Channel::R, pos),
                    g: Psf::from_kernel(&k, Channel::G, pos),
                    b: Psf::from_kernel(&k, Channel::B, pos),
                });
            }
        }
        Self {
            rows,
            cols,
            kernel_px,
            sensor_w,
            sensor_h,
            lens_id: lens_id.to_string(),
            patches,
        }
    }

    pub fn patch(&self, row: usize, col: usize) -> &RgbPsf {
        &self.patches[row * self.cols + col]
    }

    /// Stable content hash over the header and every kernel.
    pub fn grid_hash(&self) -> String {
        format!("{:016x}", fnv1a64(&self.to_bytes()))
    }

    pub(crate) fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(PSFG_MAGIC);
        let stride_x = self.sensor_w.div_ceil(self.cols as u32);
        let stride_y = self.sensor_h.div_ceil(self.rows as u32);
        let patch_w = (2 * stride_x).min(self.sensor_w);
        let patch_h = (2 * stride_y).min(self.sensor_h);
        for v in [
            PSFG_VERSION,
            self.rows as u32,
            self.cols as u32,
            self.kernel_px as u32,
            self.sensor_w,
            self.sensor_h,
            patch_w,
            patch_h,
            patch_w - stride_x,
            patch_h - stride_y,
            self.lens_id.len() as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(self.lens_id.as_bytes());
        for patch in &self.patches {
            for c in Channel::ALL {
                for &v in &patch.channel(c).kernel {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), PsfError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PsfError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PsfError> {
        let mut cursor = 0usize;
        let take = |cursor: &mut usize, n: usize| -> Result<&[u8], PsfError> {
            if *cursor + n > bytes.len() {
                return Err(PsfError::Format("truncated file".into()));
            }
            let s = &bytes[*cursor..*cursor + n];
            *cursor += n;
            Ok(s)
        };
        let magic = take(&mut cursor, 4)?;
        if magic != PSFG_MAGIC {
            return Err(PsfError::Format("bad magic".into()));
        }
        let u32_at = |cursor: &mut usize| -> Result<u32, PsfError> {
            let b = take(cursor, 4)?;
            Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        };
        let version = u32_at(&mut cursor)?;
        if version != PSFG_VERSION {
            return Err(PsfError::Format(format!("unsupported version {version}")));
        }
        let rows = u32_at(&mut cursor)? as usize;
        let cols = u32_at(&mut cursor)? as usize;
        let kernel_px = u32_at(&mut cursor)? as usize;
        let sensor_w = u32_at(&mut cursor)?;
        let sensor_h = u32_at(&mut cursor)?;
        let _patch_w = u32_at(&mut cursor)?;
        let _patch_h = u32_at(&mut cursor)?;
        let _overlap_x = u32_at(&mut cursor)?;
        let _overlap_y = u32_at(&mut cursor)?;
        let id_len = u32_at(&mut cursor)? as usize;
        let lens_id = String::from_utf8(take(&mut cursor, id_len)?.to_vec())
            .map_err(|_| PsfError::Format("lens id is not utf-8".into()))?;
        if rows == 0 || cols == 0 || kernel_px == 0 || kernel_px.is_multiple_of(2) {
            return Err(PsfError::Format("bad grid dimensions".into()));
        }
        let mut patches = Vec::with_capacity(rows * cols);
        for p in 0..rows * cols {
            let pos = patch_center(p / cols, p % cols, rows, cols);
            let mut read_kernel = |channel: Channel| -> Result<Psf, PsfError> {
                let raw = take(&mut cursor, kernel_px * kernel_px * 4)?;
                let kernel: Vec<f32> = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect();
                Ok(Psf {
                    kernel,
                    side: kernel_px,
                    channel,
                    field_position: pos,
                })
            };
            patches.push(RgbPsf {
                r: read_kernel(Channel::R)?,
                g: read_kernel(Channel::G)?,
                b: read_kernel(Channel::B)?,
            });
        }
        if cursor != bytes.len() {
            return Err(PsfError::Format("trailing bytes".into()));
        }
        Ok(Self {
            rows,
            cols,
            kernel_px,
            sensor_w,
            sensor_h,
            lens_id,
            patches,
        })
    }
}
