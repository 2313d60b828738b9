//! Slanted-edge MTF measurement.
//!
//! The region must contain one near-straight edge a few degrees off vertical
//! or horizontal. Per-row gradient centroids locate the edge, a least-squares
//! line fixes its slope, every pixel is projected onto the edge normal, and
//! the projected samples are averaged into a 4x oversampled edge-spread
//! function. Differencing gives the line-spread function, which is Hann
//! windowed and Fourier transformed; the magnitude normalized at DC is the
//! MTF in cycles per pixel of the original raster.

use super::{MetricError, Plane};

/// Sensor Nyquist frequency for unit pixel pitch.
pub const NYQUIST_CYCLES_PER_PX: f64 = 0.5;

/// Oversampling factor of the binned edge-spread function.
const BINS_PER_PX: f64 = 4.0;
/// Edges steeper than this off the nearest axis are rejected.
const MAX_EDGE_ANGLE_DEG: f64 = 20.0;
/// Minimum usable rows for the line fit.
const MIN_ROWS: usize = 5;

/// A measured MTF curve: modulation per frequency, DC first.
#[derive(Debug, Clone)]
pub struct MtfCurve {
    /// Cycles per pixel, ascending from 0.
    pub frequencies: Vec<f64>,
    /// Modulation normalized to exactly 1 at DC.
    pub modulation: Vec<f64>,
}

impl MtfCurve {
    /// Linear interpolation of the curve at frequency `f`.
    pub fn at(&self, f: f64) -> f64 {
        let n = self.frequencies.len();
        if f <= self.frequencies[0] {
            return self.modulation[0];
        }
        for i in 1..n {
            if self.frequencies[i] >= f {
                let (f0, f1) = (self.frequencies[i - 1], self.frequencies[i]);
                let (m0, m1) = (self.modulation[i - 1], self.modulation[i]);
                let t = (f - f0) / (f1 - f0);
                return m0 + t * (m1 - m0);
            }
        }
        *self.modulation.last().unwrap()
    }

    /// First frequency where modulation falls to 0.5, linearly interpolated;
    /// Nyquist if the curve never drops that low ("sharper than measurable"
    /// saturates instead of failing).
    pub fn mtf50_cycles_per_px(&self) -> f64 {
        for i in 1..self.frequencies.len() {
            if self.modulation[i] < 0.5 {
                let (f0, f1) = (self.frequencies[i - 1], self.frequencies[i]);
                let (m0, m1) = (self.modulation[i - 1], self.modulation[i]);
                if m0 >= 0.5 {
                    let t = (m0 - 0.5) / (m0 - m1);
                    return f0 + t * (f1 - f0);
                }
            }
        }
        NYQUIST_CYCLES_PER_PX
    }

    /// MTF50 normalized by Nyquist and clamped to 1.
    pub fn mtf50_norm(&self) -> f64 {
        (self.mtf50_cycles_per_px() / NYQUIST_CYCLES_PER_PX).min(1.0)
    }

    /// Mean modulation over [0, Nyquist] by trapezoidal integration.
    pub fn area_norm(&self) -> f64 {
        let nyq = NYQUIST_CYCLES_PER_PX;
        let mut area = 0.0;
        for i in 1..self.frequencies.len() {
            let (f0, f1) = (self.frequencies[i - 1], self.frequencies[i]);
            if f0 >= nyq {
                break;
            }
            let (m0, m1) = (self.modulation[i - 1], self.modulation[i]);
            if f1 <= nyq {
                area += 0.5 * (m0 + m1) * (f1 - f0);
            } else {
                // Clip the last trapezoid at Nyquist.
                let t = (nyq - f0) / (f1 - f0);
                let m_nyq = m0 + t * (m1 - m0);
                area += 0.5 * (m0 + m_nyq) * (nyq - f0);
                break;
            }
        }
        area / nyq
    }
}

fn transposed(plane: &Plane) -> Plane {
    let mut data = vec![0.0; plane.data.len()];
    for y in 0..plane.height {
        for x in 0..plane.width {
            data[x * plane.height + y] = plane.data[y * plane.width + x];
        }
    }
    Plane::new(plane.height, plane.width, data)
}

/// Measures the MTF across the dominant edge of a region.
///
/// `edge_angle_hint_deg` biases nothing numerically; it is reserved for
/// disambiguating regions that contain structure in both orientations and is
/// currently used only to validate against the steepness limit.
pub fn slanted_edge_mtf(plane: &Plane, edge_angle_hint_deg: f64) -> Result<MtfCurve, MetricError> {
    if edge_angle_hint_deg.abs() > MAX_EDGE_ANGLE_DEG {
        return Err(MetricError::EdgeTooSteep {
            angle_deg: edge_angle_hint_deg,
        });
    }
    let lo = plane.data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = plane.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo).is_finite() || hi - lo < 1e-9 {
        return Err(MetricError::NoEdgeFound);
    }

    // Pick the orientation with more cross-edge gradient energy; analysis
    // assumes a near-vertical edge.
    let energy = |p: &Plane| -> f64 {
        let mut e = 0.0;
        for y in 0..p.height {
            for x in 0..p.width - 1 {
                e += (p.data[y * p.width + x + 1] - p.data[y * p.width + x]).abs();
            }
        }
        e
    };
    let horiz_energy = energy(plane);
    let vert_energy = energy(&transposed(plane));
    let work;
    let plane = if horiz_energy >= vert_energy {
        plane
    } else {
        work = transposed(plane);
        &work
    };

    measure_vertical_edge(plane)
}

fn measure_vertical_edge(plane: &Plane) -> Result<MtfCurve, MetricError> {
    let (w, h) = (plane.width, plane.height);
    // Per-row centroid of the absolute gradient.
    let mut rows: Vec<(f64, f64)> = Vec::new(); // (y, centroid x)
    let mut max_energy = 0.0f64;
    let mut row_data: Vec<(f64, f64)> = Vec::new(); // (energy, centroid)
    for y in 0..h {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for x in 0..w - 1 {
            let g = (plane.data[y * w + x + 1] - plane.data[y * w + x]).abs();
            sum += g;
            weighted += g * (x as f64 + 0.5);
        }
        max_energy = max_energy.max(sum);
        row_data.push((sum, if sum > 0.0 { weighted / sum } else { 0.0 }));
    }
    if max_energy < 1e-9 {
        return Err(MetricError::NoEdgeFound);
    }
    for (y, &(energy, centroid)) in row_data.iter().enumerate() {
        if energy > 0.2 * max_energy {
            rows.push((y as f64, centroid));
        }
    }
    if rows.len() < MIN_ROWS {
        return Err(MetricError::NoEdgeFound);
    }

    // Least squares x = a + b y.
    let n = rows.len() as f64;
    let sy: f64 = rows.iter().map(|r| r.0).sum();
    let sx: f64 = rows.iter().map(|r| r.1).sum();
    let syy: f64 = rows.iter().map(|r| r.0 * r.0).sum();
    let sxy: f64 = rows.iter().map(|r| r.0 * r.1).sum();
    let denom = n * syy - sy * sy;
    if denom.abs() < 1e-12 {
        return Err(MetricError::NoEdgeFound);
    }
    let b = (n * sxy - sx * sy) / denom;
    let a = (sx - b * sy) / n;
    let angle_deg = b.abs().atan().to_degrees();
    if angle_deg > MAX_EDGE_ANGLE_DEG {
        return Err(MetricError::EdgeTooSteep { angle_deg });
    }

    // Project every pixel onto the edge normal.
    let cos_theta = 1.0 / (1.0 + b * b).sqrt();
    let mut d_min = f64::INFINITY;
    let mut d_max = f64::NEG_INFINITY;
    let mut samples: Vec<(f64, f64)> = Vec::with_capacity(w * h);
    for y in 0..h {
        let edge_x = a + b * y as f64;
        for x in 0..w {
            let d = (x as f64 - edge_x) * cos_theta;
            d_min = d_min.min(d);
            d_max = d_max.max(d);
            samples.push((d, plane.data[y * w + x]));
        }
    }

    // Oversampled, binned edge-spread function.
    let delta = 1.0 / BINS_PER_PX;
    let nbins = (((d_max - d_min) / delta).floor() as usize + 1).max(8);
    let mut sums = vec![0.0f64; nbins];
    let mut counts = vec![0u32; nbins];
    for &(d, v) in &samples {
        let idx = (((d - d_min) / delta) as usize).min(nbins - 1);
        sums[idx] += v;
        counts[idx] += 1;
    }
    let mut esf = vec![f64::NAN; nbins];
    for i in 0..nbins {
        if counts[i] > 0 {
            esf[i] = sums[i] / counts[i] as f64;
        }
    }
    fill_gaps(&mut esf);

    // Difference to the line-spread function, then Hann window at the peak.
    let n_lsf = nbins - 1;
    let mut lsf: Vec<f64> = (0..n_lsf).map(|i| esf[i + 1] - esf[i]).collect();
    let peak = lsf
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(n_lsf / 2);
    for (j, v) in lsf.iter_mut().enumerate() {
        let phase = (j as f64 - peak as f64) / n_lsf as f64;
        let win = if phase.abs() <= 0.5 {
            0.5 * (1.0 + (std::f64::consts::TAU * phase).cos())
        } else {
            0.0
        };
        *v *= win;
    }

    // DFT magnitude normalized at DC; bin k is k/(delta*N) cycles/px.
    let dc: f64 = lsf.iter().sum();
    if dc.abs() < 1e-12 {
        return Err(MetricError::NoEdgeFound);
    }
    let mut frequencies = Vec::with_capacity(n_lsf / 2 + 1);
    let mut modulation = Vec::with_capacity(n_lsf / 2 + 1);
    for k in 0..=n_lsf / 2 {
        let (mut re, mut im) = (0.0f64, 0.0f64);
        for (j, &v) in lsf.iter().enumerate() {
            let phase = std::f64::consts::TAU * (k * j) as f64 / n_lsf as f64;
            re += v * phase.cos();
            im -= v * phase.sin();
        }
        frequencies.push(k as f64 / (delta * n_lsf as f64));
        modulation.push((re * re + im * im).sqrt() / dc.abs());
    }
    modulation[0] = 1.0;
    Ok(MtfCurve {
        frequencies,
        modulation,
    })
}

/// Fills NaN bins by linear interpolation between the nearest measured
/// neighbors; leading/trailing gaps clamp to the nearest value.
fn fill_gaps(esf: &mut [f64]) {
    let n = esf.len();
    let first = esf.iter().position(|v| !v.is_nan());
    let last = esf.iter().rposition(|v| !v.is_nan());
    let (first, last) = match (first, last) {
        (Some(f), Some(l)) => (f, l),
        _ => return,
    };
    for i in 0..first {
        esf[i] = esf[first];
    }
    for i in last + 1..n {
        esf[i] = esf[last];
    }
    let mut i = first;
    while i <= last {
        if esf[i].is_nan() {
            let gap_start = i;
            let mut j = i;
            while esf[j].is_nan() {
                j += 1;
            }
            let left = esf[gap_start - 1];
            let right = esf[j];
            let span = (j - gap_start + 1) as f64;
            for (off, slot) in esf[gap_start..j].iter_mut().enumerate() {
                *slot = left + (right - left) * (off as f64 + 1.0) / span;
            }
            i = j;
        } else {
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sinc(x: f64) -> f64 {
        if x.abs() < 1e-12 {
            1.0
        } else {
            (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
        }
    }

    /// Area-sampled step edge tilted `slope` px/row: each pixel integrates
    /// the half-plane coverage over a fine subgrid.
    fn area_sampled_edge(w: usize, h: usize, slope: f64, edge_x: f64) -> Plane {
        let ss = 16;
        let mut data = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for sy in 0..ss {
                    for sx in 0..ss {
                        let px = x as f64 + (sx as f64 + 0.5) / ss as f64 - 0.5;
                        let py = y as f64 + (sy as f64 + 0.5) / ss as f64 - 0.5;
                        if px > edge_x + slope * py {
                            acc += 1.0;
                        }
                    }
                }
                data[y * w + x] = acc / (ss * ss) as f64;
            }
        }
        Plane::new(w, h, data)
    }

    /// Point samples of an erf edge profile: a step blurred by a Gaussian of
    /// `sigma` px, no pixel aperture.
    fn gaussian_edge(w: usize, h: usize, slope: f64, edge_x: f64, sigma: f64) -> Plane {
        let mut data = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let d = x as f64 - (edge_x + slope * y as f64);
                data[y * w + x] = 0.5 * (1.0 + erf(d / (sigma * std::f64::consts::SQRT_2)));
            }
        }
        Plane::new(w, h, data)
    }

    /// Abramowitz-Stegun 7.1.26 rational approximation, |error| < 1.5e-7.
    fn erf(x: f64) -> f64 {
        let sign = x.signum();
        let x = x.abs();
        let t = 1.0 / (1.0 + 0.3275911 * x);
        let poly = t
            * (0.254829592
                + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
        sign * (1.0 - poly * (-x * x).exp())
    }

    const SLOPE_5_DEG: f64 = 0.087_488_663_525_924_42; // tan(5 deg)

    #[test]
    fn uniform_region_has_no_edge() {
        let plane = Plane::new(32, 32, vec![0.5; 32 * 32]);
        assert!(matches!(
            slanted_edge_mtf(&plane, 5.0),
            Err(MetricError::NoEdgeFound)
        ));
    }

    #[test]
    fn steep_edge_is_rejected() {
        let plane = area_sampled_edge(64, 64, (30f64).to_radians().tan(), 32.0);
        assert!(matches!(
            slanted_edge_mtf(&plane, 5.0),
            Err(MetricError::EdgeTooSteep { .. })
        ));
    }

    #[test]
    fn dc_is_exactly_one_and_curve_stays_bounded() {
        let plane = area_sampled_edge(80, 80, SLOPE_5_DEG, 40.0);
        let curve = slanted_edge_mtf(&plane, 5.0).unwrap();
        assert_eq!(curve.modulation[0], 1.0);
        for &m in &curve.modulation {
            assert!((0.0..=1.1).contains(&m), "modulation {m} out of [0, 1.1]");
        }
    }

    #[test]
    fn ideal_edge_matches_the_sampled_step_oracle() {
        // Pixel aperture times the two quarter-pixel apertures from binning
        // and differencing: sinc(f) * sinc(f/4)^2.
        let plane = area_sampled_edge(96, 96, SLOPE_5_DEG, 48.3);
        let curve = slanted_edge_mtf(&plane, 5.0).unwrap();
        for step in 0..=10 {
            let f = 0.05 * step as f64;
            let oracle = (sinc(f) * sinc(f / 4.0) * sinc(f / 4.0)).abs();
            let got = curve.at(f);
            assert!(
                (got - oracle).abs() < 0.02,
                "f = {f}: got {got}, oracle {oracle}"
            );
        }
    }

    #[test]
    fn horizontal_edges_are_transposed_automatically() {
        let vertical = area_sampled_edge(72, 72, SLOPE_5_DEG, 36.0);
        let horizontal = transposed(&vertical);
        let v = slanted_edge_mtf(&vertical, 5.0).unwrap();
        let h = slanted_edge_mtf(&horizontal, 5.0).unwrap();
        assert_eq!(v.modulation.len(), h.modulation.len());
        for (a, b) in v.modulation.iter().zip(&h.modulation) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_blurred_edge_matches_the_analytic_mtf() {
        // Point-sampled erf profile: measured MTF is the Gaussian transfer
        // exp(-2 pi^2 sigma^2 f^2) times the binning/difference baseline.
        let sigma = 1.0;
        let plane = gaussian_edge(96, 96, SLOPE_5_DEG, 48.0, sigma);
        let curve = slanted_edge_mtf(&plane, 5.0).unwrap();
        for step in 0..=10 {
            let f = 0.05 * step as f64;
            let gauss =
                (-2.0 * std::f64::consts::PI * std::f64::consts::PI * sigma * sigma * f * f).exp();
            let oracle = gauss * sinc(f / 4.0) * sinc(f / 4.0);
            let got = curve.at(f);
            assert!(
                (got - oracle).abs() < 0.02,
                "f = {f}: got {got}, oracle {oracle}"
            );
        }
        // Pure-Gaussian half-contrast frequency sqrt(ln 2 / (2 pi^2)) = 0.1874.
        let mtf50 = curve.mtf50_cycles_per_px();
        assert!(
            (mtf50 - 0.1874).abs() < 0.02 * 0.1874 + 0.004,
            "mtf50 = {mtf50}"
        );
    }

    #[test]
    fn heavier_blur_scores_lower_oiqe() {
        let reference = area_sampled_edge(72, 72, SLOPE_5_DEG, 36.0);
        let soft = gaussian_edge(72, 72, SLOPE_5_DEG, 36.0, 1.0);
        let softer = gaussian_edge(72, 72, SLOPE_5_DEG, 36.0, 2.0);
        let one = super::super::oiqe_plane_pairs(&[(soft, reference.clone())], 5.0).unwrap();
        let two = super::super::oiqe_plane_pairs(&[(softer, reference)], 5.0).unwrap();
        assert!(two < one, "oiqe sigma2 {two} !< sigma1 {one}");
    }

    #[test]
    fn gaussian_blur_oiqe_matches_the_quadrature_oracle() {
        // Independent oracle: quadrature + bisection on the analytic models
        // for the erf edge (degraded) and the area-sampled step (reference).
        let deg_model = |f: f64| {
            (-2.0 * std::f64::consts::PI * std::f64::consts::PI * f * f).exp()
                * sinc(f / 4.0)
                * sinc(f / 4.0)
        };
        let ref_model = |f: f64| (sinc(f) * sinc(f / 4.0) * sinc(f / 4.0)).abs();
        let score = |model: &dyn Fn(f64) -> f64| {
            // crossing of 0.5 by bisection over [0, 2]
            let f50 = {
                let (mut lo, mut hi) = (0.0f64, 2.0f64);
                if model(hi) >= 0.5 {
                    hi
                } else {
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if model(mid) >= 0.5 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    0.5 * (lo + hi)
                }
            };
            let n = 2000;
            let mut area = 0.0;
            for i in 0..n {
                let f0 = 0.5 * i as f64 / n as f64;
                let f1 = 0.5 * (i + 1) as f64 / n as f64;
                area += 0.5 * (model(f0) + model(f1)) * (f1 - f0);
            }
            ((f50 / 0.5).min(1.0) + area / 0.5) / 2.0
        };
        let oracle = score(&deg_model) / score(&ref_model);

        let reference = area_sampled_edge(96, 96, SLOPE_5_DEG, 48.0);
        let degraded = gaussian_edge(96, 96, SLOPE_5_DEG, 48.0, 1.0);
        let measured = super::super::oiqe_plane_pairs(&[(degraded, reference)], 5.0).unwrap();
        assert!(
            (measured - oracle).abs() < 0.03,
            "measured {measured}, oracle {oracle}"
        );
    }

    #[test]
    fn identical_regions_score_unit_oiqe() {
        let edge = area_sampled_edge(64, 64, SLOPE_5_DEG, 32.0);
        let score = super::super::oiqe_plane_pairs(&[(edge.clone(), edge)], 5.0).unwrap();
        assert_eq!(score, 1.0);
    }
}
