//! End-to-end lens evaluation and benchmark assembly.
//!
//! A lens is scored by imaging a tilted checkerboard: build its PSF grid,
//! degrade the rendered target, then measure PSNR/SSIM/OIQE per field
//! region and channel to fill the 5x3 sub-score table that the composite
//! degradation score reduces. Scored lenses are stratified into equal-count
//! severity levels (level 1 mildest), and degraded/clean training pairs are
//! generated reproducibly from a manifest.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::degrade::{
    apply_isp, degrade_image, read_image, write_png16, DegradeError, ImageBuffer, IspConfig,
    NoiseConfig,
};
use crate::lens::{LensError, LensPrescription, D_LINE_NM};
use crate::metrics::{
    ode, oiq, oiqe_plane_pairs, psnr_plane, ssim_plane, MetricError, OdeReport, OdeWeights, Plane,
    RoiBox, SubOiqTable,
};
use crate::psf::{build_grid, GridConfig, PsfError, PsfGrid};
use crate::trace::{spot_diagram, TraceError};
use crate::util::{fnv1a64, mix_seed};

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("field region {fov} has no measurable cell in any channel")]
    FovFailed { fov: usize },
    #[error("need at least {needed} lenses to build {needed} levels, got {got}")]
    TooFewLenses { needed: usize, got: usize },
    #[error("no ground-truth images found in {0}")]
    EmptyGtDir(PathBuf),
    #[error("dataset generation failed for gt {gt:?} x lens {lens_id:?}: {message}")]
    PairFailed {
        gt: String,
        lens_id: String,
        message: String,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Degrade(#[from] DegradeError),
    #[error(transparent)]
    Psf(#[from] PsfError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Lens(#[from] LensError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest error: {0}")]
    Manifest(String),
}

/// Tilted checkerboard target with five edge regions along the diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckerTarget {
    pub square_px: usize,
    pub tilt_deg: f64,
    pub width: usize,
    pub height: usize,
    /// Normalized radial positions of the five field regions.
    pub fov_fractions: [f64; 5],
    /// Edge-region side length in pixels.
    pub roi_px: usize,
}

impl Default for CheckerTarget {
    fn default() -> Self {
        Self {
            square_px: 64,
            tilt_deg: 5.0,
            width: 1024,
            height: 1024,
            fov_fractions: [0.0, 0.25, 0.5, 0.75, 1.0],
            roi_px: 48,
        }
    }
}

impl CheckerTarget {
    /// A smaller target for quick runs; same structure, same invariants.
    pub fn small(width: usize, height: usize, square_px: usize, roi_px: usize) -> Self {
        Self {
            square_px,
            roi_px,
            width,
            height,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BenchmarkError> {
        self.validate_at(self.width, self.height)
    }

    fn validate_at(&self, width: usize, height: usize) -> Result<(), BenchmarkError> {
        if !(2.0..=15.0).contains(&self.tilt_deg) {
            return Err(BenchmarkError::Manifest(format!(
                "checker tilt {} deg outside the 2..15 deg slanted-edge range",
                self.tilt_deg
            )));
        }
        if self.roi_px < 16 || self.roi_px >= self.square_px * 2 {
            return Err(BenchmarkError::Manifest(format!(
                "roi_px {} must be in 16..{}",
                self.roi_px,
                self.square_px * 2
            )));
        }
        if width < 4 * self.square_px || height < 4 * self.square_px {
            return Err(BenchmarkError::Manifest(
                "target smaller than 4 squares per side".into(),
            ));
        }
        Ok(())
    }

    /// Binary checkerboard anti-aliased by 4x4 supersampling, replicated to
    /// all three channels in linear light. Deterministic.
    pub fn render(&self) -> ImageBuffer {
        self.render_at(self.width, self.height)
    }

    /// Renders the same pattern on an arbitrary raster; lens evaluation uses
    /// the lens sensor's resolution, which is the physically meaningful one.
    pub fn render_at(&self, width: usize, height: usize) -> ImageBuffer {
        let (w, h) = (width, height);
        let theta = self.tilt_deg.to_radians();
        let (cos_t, sin_t) = (theta.cos(), theta.sin());
        let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
        let s = self.square_px as f64;
        const SS: usize = 4;
        let mut gray = vec![0.0f64; w * h];
        gray.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            for (x, px) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for sy in 0..SS {
                    for sx in 0..SS {
                        let qx = x as f64 + (sx as f64 + 0.5) / SS as f64 - cx;
                        let qy = y as f64 + (sy as f64 + 0.5) / SS as f64 - cy;
                        let u = cos_t * qx + sin_t * qy;
                        let v = -sin_t * qx + cos_t * qy;
                        let parity = ((u / s).floor() + (v / s).floor()).rem_euclid(2.0);
                        acc += parity;
                    }
                }
                *px = acc / (SS * SS) as f64;
            }
        });
        ImageBuffer::from_gray(w, h, &gray)
    }

    /// Edge regions for the five field positions: each box is centered on a
    /// near-vertical checker edge (mid-square vertically) at the requested
    /// radial distance along the sensor diagonal.
    pub fn roi_boxes(&self) -> [RoiBox; 5] {
        self.roi_boxes_at(self.width, self.height)
    }

    pub fn roi_boxes_at(&self, width: usize, height: usize) -> [RoiBox; 5] {
        let (w, h) = (width as f64, height as f64);
        let theta = self.tilt_deg.to_radians();
        let (cos_t, sin_t) = (theta.cos(), theta.sin());
        let (cx, cy) = (w / 2.0, h / 2.0);
        let s = self.square_px as f64;
        let roi = self.roi_px as f64;
        let margin = roi / 2.0 + s + 2.0;
        let diag = (w * w + h * h).sqrt();
        let (dir_x, dir_y) = (w / diag, h / diag);
        let t_max = ((w / 2.0 - margin) / dir_x).min((h / 2.0 - margin) / dir_y);

        let mut boxes = [RoiBox {
            x: 0,
            y: 0,
            w: self.roi_px,
            h: self.roi_px,
        }; 5];
        for (i, &frac) in self.fov_fractions.iter().enumerate() {
            let dx = frac * t_max * dir_x;
            let dy = frac * t_max * dir_y;
            // Snap to the nearest near-vertical lattice line, mid-square
            // vertically, in the rotated checker frame.
            let u_p = cos_t * dx + sin_t * dy;
            let v_p = -sin_t * dx + cos_t * dy;
            let u_edge = (u_p / s).round() * s;
            let v_mid = ((v_p / s).floor() + 0.5) * s;
            let ex = cos_t * u_edge - sin_t * v_mid;
            let ey = sin_t * u_edge + cos_t * v_mid;
            let px = (cx + ex).clamp(roi / 2.0 + 1.0, w - roi / 2.0 - 1.0);
            let py = (cy + ey).clamp(roi / 2.0 + 1.0, h - roi / 2.0 - 1.0);
            boxes[i] = RoiBox {
                x: (px - roi / 2.0).round() as usize,
                y: (py - roi / 2.0).round() as usize,
                w: self.roi_px,
                h: self.roi_px,
            };
        }
        boxes
    }
}

/// Per-lens evaluation knobs: the PSF grid shape used for scoring.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub grid: GridConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            grid_rows: 8,
            grid_cols: 8,
            grid: GridConfig::default(),
        }
    }
}

/// One scored lens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LensScore {
    pub lens_id: String,
    pub file: Option<String>,
    pub ode_report: OdeReport,
    /// Full-field RMS spot radius at 587.6 nm; the legacy severity proxy.
    pub rms_radius_d_line_mm: Option<f64>,
    pub grid_hash: String,
    /// (field index, channel index) cells whose edge measurement failed and
    /// were filled from the surviving channels of the same field region.
    pub failed_cells: Vec<(usize, usize)>,
}

/// Scores a PSF grid against the checker target: the target is rendered at
/// the grid's sensor resolution, degraded through the grid, and the 5x3
/// sub-score table is measured from the five edge regions.
pub fn evaluate_psf_grid(
    grid: &PsfGrid,
    target: &CheckerTarget,
    weights: &OdeWeights,
) -> Result<(OdeReport, Vec<(usize, usize)>), BenchmarkError> {
    let (w, h) = (grid.sensor_w as usize, grid.sensor_h as usize);
    target.validate_at(w, h)?;
    let reference = target.render_at(w, h);
    let degraded = degrade_image(&reference, grid, &NoiseConfig::none())?;
    let rois = target.roi_boxes_at(w, h);

    let mut values = [[f64::NAN; 3]; 5];
    let mut failed: Vec<(usize, usize)> = Vec::new();
    for (f, roi) in rois.iter().enumerate() {
        let mut oiqes = [None::<f64>; 3];
        let mut fidelity = [(0.0f64, 0.0f64); 3];
        for c in 0..3 {
            let dp = Plane::new(
                roi.w,
                roi.h,
                degraded.roi_plane(c, roi.x, roi.y, roi.w, roi.h),
            );
            let rp = Plane::new(
                roi.w,
                roi.h,
                reference.roi_plane(c, roi.x, roi.y, roi.w, roi.h),
            );
            let p = psnr_plane(&dp, &rp)?;
            let s = ssim_plane(&dp, &rp)?;
            fidelity[c] = (p, s);
            match oiqe_plane_pairs(&[(dp, rp)], target.tilt_deg) {
                Ok(o) => oiqes[c] = Some(o),
                Err(_) => failed.push((f, c)),
            }
        }
        let valid: Vec<f64> = oiqes.iter().flatten().copied().collect();
        if valid.is_empty() {
            return Err(BenchmarkError::FovFailed { fov: f });
        }
        let fallback = valid.iter().sum::<f64>() / valid.len() as f64;
        for c in 0..3 {
            let o = oiqes[c].unwrap_or(fallback);
            let (p, s) = fidelity[c];
            values[f][c] = oiq(p, s, o);
        }
    }
    let report = ode(&SubOiqTable { values }, weights)?;
    Ok((report, failed))
}

/// Full lens evaluation: PSF grid, checkerboard degradation, composite score,
/// and the d-line full-field RMS spot radius.
pub fn evaluate_lens(
    lens: &LensPrescription,
    target: &CheckerTarget,
    cfg: &EvalConfig,
) -> Result<LensScore, BenchmarkError> {
    let grid = build_grid(lens, cfg.grid_rows, cfg.grid_cols, &cfg.grid)?;
    let (report, failed_cells) = evaluate_psf_grid(&grid, target, &OdeWeights::default())?;
    let rms = spot_diagram(lens, lens.spec.half_fov_deg, D_LINE_NM, 24)
        .ok()
        .map(|s| s.rms_radius_mm);
    Ok(LensScore {
        lens_id: grid.lens_id.clone(),
        file: None,
        ode_report: report,
        rms_radius_d_line_mm: rms,
        grid_hash: grid.grid_hash(),
        failed_cells,
    })
}

/// A benchmark manifest: leveled lenses plus the generated dataset rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub schema_version: u32,
    pub levels: u32,
    /// Interior score edges between consecutive levels, descending: entry i
    /// is the lowest score admitted to level i+1.
    pub level_bounds: Vec<f64>,
    pub lenses: Vec<ManifestLens>,
    pub dataset: Vec<DatasetRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestLens {
    pub lens_id: String,
    pub file: String,
    pub score: LensScore,
    /// Severity level, 1 (mildest, highest score) through `levels`.
    pub level: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub gt: String,
    pub lq: String,
    pub lens_id: String,
    pub seed: u64,
}

/// Splits scored lenses into `levels` equal-count severity levels.
///
/// Lenses are ordered by descending score (higher = milder), ties broken by
/// ascending lens id, so the assignment is independent of input order. Level
/// populations differ by at most one.
pub fn stratify(scores: &[LensScore], levels: usize) -> Result<BenchmarkManifest, BenchmarkError> {
    if levels == 0 || scores.len() < levels {
        return Err(BenchmarkError::TooFewLenses {
            needed: levels,
            got: scores.len(),
        });
    }
    let mut ordered: Vec<&LensScore> = scores.iter().collect();
    ordered.sort_by(|a, b| {
        b.ode_report
            .ode
            .total_cmp(&a.ode_report.ode)
            .then_with(|| a.lens_id.cmp(&b.lens_id))
    });
    let n = ordered.len();
    let mut lenses = Vec::with_capacity(n);
    let mut level_bounds = Vec::with_capacity(levels - 1);
    for level in 0..levels {
        let start = n * level / levels;
        let end = n * (level + 1) / levels;
        for s in &ordered[start..end] {
            lenses.push(ManifestLens {
                lens_id: s.lens_id.clone(),
                file: s.file.clone().unwrap_or_default(),
                score: (*s).clone(),
                level: level as u32 + 1,
            });
        }
        if level + 1 < levels {
            level_bounds.push(ordered[end - 1].ode_report.ode);
        }
    }
    Ok(BenchmarkManifest {
        schema_version: 1,
        levels: levels as u32,
        level_bounds,
        lenses,
        dataset: Vec::new(),
    })
}

/// Options for dataset generation.
#[derive(Debug, Clone)]
pub struct DatasetOptions {
    pub noise_sigma: f64,
    pub isp: Option<IspConfig>,
    pub seed: u64,
    pub eval: EvalConfig,
}

fn list_gt_files(gt_dir: &Path) -> Result<Vec<PathBuf>, BenchmarkError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(gt_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("png") | Some("imgf")
            )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(BenchmarkError::EmptyGtDir(gt_dir.to_path_buf()));
    }
    Ok(files)
}

/// Degrades every ground-truth image with every manifest lens and writes the
/// pairs plus manifest rows. Fully reproducible: per-pair seeds derive from
/// the run seed and the (gt, lens) names, so neither input order nor thread
/// count changes a byte of output.
pub fn generate_dataset(
    manifest: &BenchmarkManifest,
    gt_dir: &Path,
    out_dir: &Path,
    opts: &DatasetOptions,
) -> Result<BenchmarkManifest, BenchmarkError> {
    let gt_files = list_gt_files(gt_dir)?;
    std::fs::create_dir_all(out_dir)?;

    let mut lenses: Vec<&ManifestLens> = manifest.lenses.iter().collect();
    lenses.sort_by(|a, b| a.lens_id.cmp(&b.lens_id));

    let mut rows = Vec::new();
    for entry in lenses {
        if entry.file.is_empty() {
            return Err(BenchmarkError::Manifest(format!(
                "lens {} has no file path; score it from a lens file first",
                entry.lens_id
            )));
        }
        let bytes = std::fs::read(&entry.file)?;
        let lens = crate::lens::parse_lens_with(
            &bytes,
            crate::lens::ParseOptions {
                check_spec_grid: false,
            },
        )?;
        let grid = build_grid(
            &lens,
            opts.eval.grid_rows,
            opts.eval.grid_cols,
            &opts.eval.grid,
        )?;

        let results: Vec<Result<DatasetRow, BenchmarkError>> = gt_files
            .par_iter()
            .map(|gt_path| {
                degrade_pair(gt_path, &grid, entry, out_dir, opts).map_err(|e| {
                    BenchmarkError::PairFailed {
                        gt: gt_path.display().to_string(),
                        lens_id: entry.lens_id.clone(),
                        message: e.to_string(),
                    }
                })
            })
            .collect();
        for r in results {
            rows.push(r?);
        }
    }
    rows.sort_by(|a, b| a.lens_id.cmp(&b.lens_id).then_with(|| a.gt.cmp(&b.gt)));
    let mut out = manifest.clone();
    out.dataset = rows;
    Ok(out)
}

fn degrade_pair(
    gt_path: &Path,
    grid: &PsfGrid,
    entry: &ManifestLens,
    out_dir: &Path,
    opts: &DatasetOptions,
) -> Result<DatasetRow, BenchmarkError> {
    let gt_name = gt_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let pair_seed = mix_seed(
        opts.seed,
        fnv1a64(gt_name.as_bytes()),
        fnv1a64(entry.lens_id.as_bytes()),
    );
    let gt = read_image(gt_path)?;
    let gt = fit_to_grid(&gt, grid);
    let noise = if opts.noise_sigma > 0.0 {
        NoiseConfig::gaussian(opts.noise_sigma, pair_seed)
    } else {
        NoiseConfig::none()
    };
    let lq = degrade_image(&gt, grid, &noise)?;
    let lq_name = format!("{gt_name}__{}.png", entry.lens_id);
    let lq_path = out_dir.join(&lq_name);
    let gt_ref = if let Some(isp) = &opts.isp {
        let isp = IspConfig {
            seed: pair_seed ^ 1,
            ..*isp
        };
        let (lq_isp, gt_isp) = apply_isp(&lq, &gt, &isp);
        write_png16(&lq_isp, &lq_path)?;
        let gt_name_out = format!("{gt_name}__{}__gt.png", entry.lens_id);
        write_png16(&gt_isp, &out_dir.join(&gt_name_out))?;
        gt_name_out
    } else {
        write_png16(&lq, &lq_path)?;
        gt_path.display().to_string()
    };
    Ok(DatasetRow {
        gt: gt_ref,
        lq: lq_name,
        lens_id: entry.lens_id.clone(),
        seed: pair_seed,
    })
}

/// Center-crops oversized ground truth to the grid's sensor size; smaller
/// images defer to the degrade module's padding tolerance.
fn fit_to_grid(gt: &ImageBuffer, grid: &PsfGrid) -> ImageBuffer {
    let (gw, gh) = (grid.sensor_w as usize, grid.sensor_h as usize);
    if gt.width() <= gw && gt.height() <= gh {
        return gt.clone();
    }
    let x0 = (gt.width().saturating_sub(gw)) / 2;
    let y0 = (gt.height().saturating_sub(gh)) / 2;
    let w = gt.width().min(gw);
    let h = gt.height().min(gh);
    let mut out = ImageBuffer::new(w, h);
    out.source_id = gt.source_id.clone();
    for c in 0..3 {
        let plane = gt.roi_plane(c, x0, y0, w, h);
        out.channel_mut(c).copy_from_slice(&plane);
    }
    out
}

/// Serializes a manifest with stable key order and a trailing newline.
pub fn manifest_to_json(manifest: &BenchmarkManifest) -> String {
    let mut s = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    s.push('\n');
    s
}

pub fn manifest_from_json(bytes: &[u8]) -> Result<BenchmarkManifest, BenchmarkError> {
    serde_json::from_slice(bytes).map_err(|e| BenchmarkError::Manifest(e.to_string()))
}
