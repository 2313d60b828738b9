//! Image and optical quality metrics.
//!
//! Per-pair fidelity comes from PSNR and SSIM; optical sharpness comes from
//! slanted-edge MTF measurements reduced to the OIQE score. The composite
//! scores combine them:
//!
//! ```text
//! OIQ  = 0.4 PSNR/50 + 0.3 (SSIM - 0.5)/0.5 + 0.3 OIQE
//! U    = exp(-sigma * CV)           (CV = population std / mean)
//! ODE  = 0.7 OIQ + 0.3 U_s + 0.01 U_c
//! O.P. = 0.4 PSNR/50 + 0.3 (SSIM - 0.5)/0.5 + 0.4 (1 - LPIPS)/0.4
//!        + 0.3 OIQE + 0.1 (100 - FID)/100 + 0.1 ClipIQA
//! ```
//!
//! where U_s is the uniformity of sub-OIQ scores over 5 field positions and
//! U_c over the 3 color channels. OIQ, ODE and O.P. are applied verbatim and
//! not clamped: FID above 100 contributes negatively, and the perceptual
//! scores (LPIPS, FID, ClipIQA) are consumed as externally supplied numbers.

mod mtf;
mod ssim;

pub use mtf::{slanted_edge_mtf, MtfCurve, NYQUIST_CYCLES_PER_PX};
pub use ssim::ssim_plane;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::degrade::ImageBuffer;
use crate::util::compensated_sum;

/// PSNR values saturate here so that identical images score a finite maximum.
pub const PSNR_CAP_DB: f64 = 50.0;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("shape mismatch: {a_w}x{a_h} vs {b_w}x{b_h}")]
    ShapeMismatch {
        a_w: usize,
        a_h: usize,
        b_w: usize,
        b_h: usize,
    },
    #[error("image side {0} smaller than the 11px SSIM window")]
    ImageTooSmall(usize),
    #[error("no edge found in the region")]
    NoEdgeFound,
    #[error("edge angle {angle_deg:.1} deg too steep for slanted-edge analysis")]
    EdgeTooSteep { angle_deg: f64 },
    #[error("every region failed edge analysis")]
    AllRoisFailed,
    #[error("coefficient of variation undefined for zero mean")]
    ZeroMean,
}

/// A single-channel working image.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    /// One channel of an RGB buffer.
    pub fn from_channel(img: &ImageBuffer, c: usize) -> Self {
        Self::new(img.width(), img.height(), img.channel(c).to_vec())
    }

    /// Channel-mean grayscale of an RGB buffer.
    pub fn gray(img: &ImageBuffer) -> Self {
        let (w, h) = (img.width(), img.height());
        let (r, g, b) = (img.channel(0), img.channel(1), img.channel(2));
        let data = (0..w * h).map(|i| (r[i] + g[i] + b[i]) / 3.0).collect();
        Self::new(w, h, data)
    }

    pub fn roi(&self, b: &RoiBox) -> Plane {
        assert!(b.x + b.w <= self.width && b.y + b.h <= self.height);
        let mut data = Vec::with_capacity(b.w * b.h);
        for y in b.y..b.y + b.h {
            data.extend_from_slice(&self.data[y * self.width + b.x..y * self.width + b.x + b.w]);
        }
        Plane::new(b.w, b.h, data)
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

fn check_shapes(a: &ImageBuffer, b: &ImageBuffer) -> Result<(), MetricError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(MetricError::ShapeMismatch {
            a_w: a.width(),
            a_h: a.height(),
            b_w: b.width(),
            b_h: b.height(),
        });
    }
    Ok(())
}

fn psnr_from_mse(mse: f64, cap_db: f64) -> f64 {
    if mse <= 0.0 {
        cap_db
    } else {
        (10.0 * (1.0 / mse).log10()).min(cap_db)
    }
}

/// Peak signal-to-noise ratio in dB over all three channels, capped at
/// [`PSNR_CAP_DB`] so identical images score 50 instead of infinity.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, MetricError> {
    check_shapes(a, b)?;
    let mse = compensated_sum(a.raw().iter().zip(b.raw()).map(|(x, y)| (x - y) * (x - y)))
        / a.raw().len() as f64;
    Ok(psnr_from_mse(mse, PSNR_CAP_DB))
}

/// PSNR between two single-channel planes.
pub fn psnr_plane(a: &Plane, b: &Plane) -> Result<f64, MetricError> {
    if a.width != b.width || a.height != b.height {
        return Err(MetricError::ShapeMismatch {
            a_w: a.width,
            a_h: a.height,
            b_w: b.width,
            b_h: b.height,
        });
    }
    let mse = compensated_sum(a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)))
        / a.data.len() as f64;
    Ok(psnr_from_mse(mse, PSNR_CAP_DB))
}

/// Mean structural similarity over an 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03 on unit dynamic range. RGB inputs are averaged to
/// grayscale first.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, MetricError> {
    check_shapes(a, b)?;
    ssim_plane(&Plane::gray(a), &Plane::gray(b))
}

/// MTF-based optical quality of `degraded` relative to `reference` on a set
/// of edge regions, on a [0, 1] scale.
///
/// Each region is measured on both renderings; the (MTF50 + MTF-area)/2
/// score of the degraded region is divided by the reference score and
/// clamped, which discounts the pixel aperture that even a perfect rendering
/// carries. Regions where either measurement fails are skipped; if all fail
/// the call errors.
pub fn oiqe(
    degraded: &ImageBuffer,
    reference: &ImageBuffer,
    rois: &[RoiBox],
    edge_angle_hint_deg: f64,
) -> Result<f64, MetricError> {
    check_shapes(degraded, reference)?;
    let dg = Plane::gray(degraded);
    let rg = Plane::gray(reference);
    let pairs: Vec<(Plane, Plane)> = rois.iter().map(|r| (dg.roi(r), rg.roi(r))).collect();
    oiqe_plane_pairs(&pairs, edge_angle_hint_deg)
}

/// Core OIQE over explicit (degraded, reference) region pairs.
pub fn oiqe_plane_pairs(
    pairs: &[(Plane, Plane)],
    edge_angle_hint_deg: f64,
) -> Result<f64, MetricError> {
    let mut scores = Vec::new();
    for (deg, reference) in pairs {
        let d = match slanted_edge_mtf(deg, edge_angle_hint_deg) {
            Ok(curve) => curve,
            Err(_) => continue,
        };
        let r = match slanted_edge_mtf(reference, edge_angle_hint_deg) {
            Ok(curve) => curve,
            Err(_) => continue,
        };
        let ds = (d.mtf50_norm() + d.area_norm()) / 2.0;
        let rs = (r.mtf50_norm() + r.area_norm()) / 2.0;
        if rs > 0.0 {
            scores.push((ds / rs).clamp(0.0, 1.0));
        }
    }
    if scores.is_empty() {
        return Err(MetricError::AllRoisFailed);
    }
    Ok(compensated_sum(scores.iter().copied()) / scores.len() as f64)
}

/// Blend of fidelity and optical quality for one measurement.
pub fn oiq(psnr_db: f64, ssim_value: f64, oiqe_value: f64) -> f64 {
    0.4 * psnr_db / 50.0 + 0.3 * (ssim_value - 0.5) / 0.5 + 0.3 * oiqe_value
}

/// Coefficient of variation: population standard deviation over mean.
pub fn cv(values: &[f64]) -> Result<f64, MetricError> {
    assert!(!values.is_empty());
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    if mean == 0.0 {
        return Err(MetricError::ZeroMean);
    }
    let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / n;
    Ok(var.sqrt() / mean)
}

/// Uniformity score exp(-sigma * cv) in (0, 1].
pub fn uniformity(cv_value: f64, sigma: f64) -> f64 {
    (-sigma * cv_value).exp()
}

/// Weight set for the composite degradation score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeWeights {
    pub lambda_oiq: f64,
    pub lambda_s: f64,
    pub lambda_c: f64,
    pub sigma: f64,
}

impl Default for OdeWeights {
    fn default() -> Self {
        Self {
            lambda_oiq: 0.7,
            lambda_s: 0.3,
            lambda_c: 0.01,
            sigma: 5.0,
        }
    }
}

/// Sub-OIQ scores indexed by (field position 0..5, channel R/G/B).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubOiqTable {
    pub values: [[f64; 3]; 5],
}

impl SubOiqTable {
    pub fn constant(v: f64) -> Self {
        Self {
            values: [[v; 3]; 5],
        }
    }

    /// Channel-merged mean per field position.
    pub fn fov_means(&self) -> [f64; 5] {
        let mut out = [0.0; 5];
        for (f, row) in self.values.iter().enumerate() {
            out[f] = (row[0] + row[1] + row[2]) / 3.0;
        }
        out
    }

    /// Field-merged mean per channel.
    pub fn channel_means(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.values.iter().map(|row| row[c]).sum::<f64>() / 5.0;
        }
        out
    }

    pub fn mean_all(&self) -> f64 {
        compensated_sum(self.values.iter().flatten().copied()) / 15.0
    }
}

/// The full composite score with every intermediate stored, so the identities
/// `u = exp(-sigma cv)` and the weighted sum can be re-checked from the report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeReport {
    pub oiq: f64,
    pub u_s: f64,
    pub u_c: f64,
    pub ode: f64,
    pub cv_s: f64,
    pub cv_c: f64,
    pub sub_table: SubOiqTable,
    pub weights_used: OdeWeights,
}

/// Reduces a sub-OIQ table to the composite degradation score.
pub fn ode(sub: &SubOiqTable, weights: &OdeWeights) -> Result<OdeReport, MetricError> {
    let oiq_value = sub.mean_all();
    let cv_s = cv(&sub.fov_means())?;
    let cv_c = cv(&sub.channel_means())?;
    let u_s = uniformity(cv_s, weights.sigma);
    let u_c = uniformity(cv_c, weights.sigma);
    let ode = weights.lambda_oiq * oiq_value + weights.lambda_s * u_s + weights.lambda_c * u_c;
    Ok(OdeReport {
        oiq: oiq_value,
        u_s,
        u_c,
        ode,
        cv_s,
        cv_c,
        sub_table: *sub,
        weights_used: *weights,
    })
}

/// Externally computed perceptual scores consumed, never produced, here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExternalScores {
    pub lpips: f64,
    pub fid: f64,
    pub clipiqa: f64,
}

/// Six-metric overall performance score, applied verbatim (FID above 100
/// contributes negatively; nothing is clamped).
pub fn overall_performance(
    psnr_db: f64,
    ssim_value: f64,
    lpips: f64,
    fid: f64,
    oiqe_value: f64,
    clipiqa: f64,
) -> f64 {
    0.4 * psnr_db / 50.0
        + 0.3 * (ssim_value - 0.5) / 0.5
        + 0.4 * (1.0 - lpips) / 0.4
        + 0.3 * oiqe_value
        + 0.1 * (100.0 - fid) / 100.0
        + 0.1 * clipiqa
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn textured(w: usize, h: usize, salt: u64) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, |c, x, y| {
            let n = crate::util::splitmix64(salt ^ ((c * w * h + y * w + x) as u64));
            let jitter = (n >> 40) as f64 / (1u64 << 24) as f64;
            let fx = x as f64 / w as f64;
            0.25 + 0.4 * fx + 0.3 * jitter
        })
    }

    #[test]
    fn identical_images_hit_the_psnr_cap() {
        let a = textured(32, 32, 1);
        assert_eq!(psnr(&a, &a).unwrap(), 50.0);
    }

    #[test]
    fn constant_offset_psnr_matches_closed_form() {
        let a = ImageBuffer::from_fn(32, 32, |_, _, _| 0.5);
        let mut b = a.clone();
        b.raw_mut().iter_mut().for_each(|v| *v += 1.0 / 255.0);
        // 20 log10(255) = 48.1308 dB.
        assert_relative_eq!(psnr(&a, &b).unwrap(), 48.130_803_6, epsilon = 1e-6);
        let mut c = a.clone();
        c.raw_mut().iter_mut().for_each(|v| *v += 0.5);
        // 10 log10(1/0.25) = 6.0206 dB.
        assert_relative_eq!(psnr(&a, &c).unwrap(), 6.020_599_9, epsilon = 1e-6);
    }

    #[test]
    fn psnr_rejects_shape_mismatch() {
        let a = textured(16, 16, 0);
        let b = textured(16, 17, 0);
        assert!(matches!(
            psnr(&a, &b),
            Err(MetricError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn ssim_of_identical_images_is_exactly_one() {
        let a = textured(24, 24, 3);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ssim_is_symmetric() {
        let a = textured(24, 24, 5);
        let b = textured(24, 24, 9);
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn scaling_luminance_lowers_ssim() {
        let a = textured(24, 24, 7);
        let mut b = a.clone();
        b.raw_mut().iter_mut().for_each(|v| *v *= 0.5);
        assert!(ssim(&a, &b).unwrap() < 1.0);
    }

    #[test]
    fn ssim_needs_a_window_sized_image() {
        let a = textured(8, 20, 1);
        assert!(matches!(ssim(&a, &a), Err(MetricError::ImageTooSmall(_))));
    }

    #[test]
    fn oiq_weights_match_the_examples() {
        assert_relative_eq!(oiq(50.0, 1.0, 1.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(oiq(25.0, 0.5, 0.0), 0.2, epsilon = 1e-12);
        // Documents the unclamped negative range.
        assert_relative_eq!(oiq(0.0, 0.0, 0.0), -0.3, epsilon = 1e-12);
    }

    #[test]
    fn cv_of_small_sets() {
        assert_eq!(cv(&[3.0, 3.0, 3.0]).unwrap(), 0.0);
        // population std sqrt(2/3) over mean 2.
        assert_relative_eq!(cv(&[1.0, 2.0, 3.0]).unwrap(), 0.408_248_29, epsilon = 1e-8);
        assert_relative_eq!(cv(&[2.0, 4.0, 6.0]).unwrap(), 0.408_248_29, epsilon = 1e-8);
    }

    #[test]
    fn cv_is_scale_invariant() {
        let base = [0.3, 0.5, 0.9, 1.4];
        let scaled: Vec<f64> = base.iter().map(|v| v * 7.5).collect();
        assert!((cv(&base).unwrap() - cv(&scaled).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn cv_rejects_zero_mean() {
        assert!(matches!(cv(&[1.0, -1.0]), Err(MetricError::ZeroMean)));
    }

    #[test]
    fn uniformity_examples() {
        assert_eq!(uniformity(0.0, 5.0), 1.0);
        assert_relative_eq!(uniformity(0.2, 5.0), 0.367_879_44, epsilon = 1e-8);
        assert_relative_eq!(uniformity(0.1, 5.0), 0.606_530_66, epsilon = 1e-8);
    }

    #[test]
    fn all_ones_table_scores_one_point_o_one() {
        let report = ode(&SubOiqTable::constant(1.0), &OdeWeights::default()).unwrap();
        assert_eq!(report.oiq, 1.0);
        assert_eq!(report.u_s, 1.0);
        assert_eq!(report.u_c, 1.0);
        assert_relative_eq!(report.ode, 1.01, epsilon = 1e-12);
    }

    #[test]
    fn constant_tables_collapse_to_the_affine_form() {
        for k in [0.3, 0.55, 0.9] {
            let report = ode(&SubOiqTable::constant(k), &OdeWeights::default()).unwrap();
            assert_eq!(report.u_s, 1.0);
            assert_eq!(report.u_c, 1.0);
            assert_relative_eq!(report.ode, 0.7 * k + 0.31, epsilon = 1e-12);
        }
    }

    #[test]
    fn fov_spread_drives_spatial_uniformity() {
        let fov_values = [0.9, 0.8, 0.7, 0.6, 0.5];
        let mut values = [[0.0; 3]; 5];
        for (f, &v) in fov_values.iter().enumerate() {
            values[f] = [v; 3];
        }
        let report = ode(&SubOiqTable { values }, &OdeWeights::default()).unwrap();
        // CV of the five means is 0.14142/0.7 = 0.20203; U_s = exp(-1.01015).
        assert_relative_eq!(report.cv_s, 0.202_030_508_9, epsilon = 1e-9);
        assert_relative_eq!(report.u_s, 0.364_163_424_2, epsilon = 1e-9);
        assert_eq!(report.u_c, 1.0);
    }

    #[test]
    fn report_identities_recompute_exactly() {
        let mut values = [[0.0; 3]; 5];
        for (f, row) in values.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = 0.4 + 0.1 * f as f64 + 0.03 * c as f64;
            }
        }
        let w = OdeWeights::default();
        let report = ode(&SubOiqTable { values }, &w).unwrap();
        assert_eq!(
            report.u_s.to_bits(),
            uniformity(report.cv_s, w.sigma).to_bits()
        );
        assert_eq!(
            report.u_c.to_bits(),
            uniformity(report.cv_c, w.sigma).to_bits()
        );
        let recomputed =
            w.lambda_oiq * report.oiq + w.lambda_s * report.u_s + w.lambda_c * report.u_c;
        assert_eq!(report.ode.to_bits(), recomputed.to_bits());
    }

    #[test]
    fn overall_performance_reproduces_published_rows() {
        // Three published benchmark rows with all six metrics and the
        // composite: (PSNR, SSIM, LPIPS, FID, OIQE, ClipIQA) -> O.P.
        let cases = [
            ((27.78, 0.876, 0.211, 39.19, 0.705, 0.404), 1.549),
            ((26.94, 0.841, 0.136, 34.59, 0.722, 0.520), 1.618),
            ((19.62, 0.699, 0.448, 122.8, 0.475, 0.242), 0.972),
        ];
        for ((p, s, l, f, o, c), expected) in cases {
            let got = overall_performance(p, s, l, f, o, c);
            assert!((got - expected).abs() <= 0.001, "O.P. {got} vs {expected}");
        }
    }
}
