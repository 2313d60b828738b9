//! Lens prescriptions and surface geometry.
//!
//! A prescription is an ordered list of surfaces from object side to image
//! side. Each surface carries curvature `c` (1/mm), conic constant `k`,
//! optional even-order aspheric coefficients, the axial thickness to the next
//! surface, the name of the medium that follows it, and a clear semi-aperture.
//! Lengths are millimeters, wavelengths nanometers; angles are degrees in
//! files and radians internally. Light travels toward +z and a positive
//! curvature puts the center of curvature on the +z side of the vertex.
//!
//! Surface height above the vertex plane uses the even asphere form in
//! rho = r^2:
//!
//! ```text
//! h(rho) = c*rho / (1 + sqrt(1 - (1+k)*c^2*rho)) + a4*rho^2 + a6*rho^3 + ...
//! ```
//!
//! which reduces to the exact sphere R - sqrt(R^2 - r^2) for k = 0 and no
//! coefficients.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Helium d line, the reference wavelength for paraxial quantities (nm).
pub const D_LINE_NM: f64 = 587.6;
/// Hydrogen F line (nm).
pub const F_LINE_NM: f64 = 486.1;
/// Hydrogen C line (nm).
pub const C_LINE_NM: f64 = 656.3;
/// Supported dispersion band (nm).
pub const MIN_WAVELENGTH_NM: f64 = 380.0;
/// Supported dispersion band (nm).
pub const MAX_WAVELENGTH_NM: f64 = 780.0;
/// Highest supported aspheric coefficient is a16 = a_{2i} with i = 8.
pub const MAX_ASPHERE_COEFFS: usize = 7;

const MATERIAL_AIR: &str = "air";

#[derive(Debug, Error)]
pub enum LensError {
    /// Sag (or its derivative) is undefined at the requested radial distance.
    #[error("sag domain error: (1+k)c^2 * rho = {alpha_rho} exceeds 1 (rho = {rho} mm^2)")]
    DomainError { rho: f64, alpha_rho: f64 },
    /// Wavelength outside the supported dispersion band.
    #[error("wavelength {wavelength_nm} nm outside supported band {MIN_WAVELENGTH_NM}..{MAX_WAVELENGTH_NM} nm")]
    RangeError { wavelength_nm: f64 },
    /// The byte stream is not a well-formed lens file.
    #[error("lens file parse error: {0}")]
    ParseError(String),
    /// The file parsed but violates a prescription invariant.
    #[error("lens validation error: {0}")]
    ValidationError(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Dispersive glass described by its d-line index and Abbe number.
///
/// Index at other wavelengths comes from a two-term Cauchy fit
/// `n(lambda) = A + B/lambda^2` anchored so that `n(587.6) = nd` and
/// `n(486.1) - n(656.3) = (nd - 1)/vd`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    /// Refractive index at 587.6 nm.
    pub nd: f64,
    /// Abbe number (nd - 1)/(nF - nC).
    pub vd: f64,
}

impl Material {
    pub fn new(nd: f64, vd: f64) -> Self {
        Self { nd, vd }
    }

    fn cauchy(&self) -> (f64, f64) {
        let span = 1.0 / (F_LINE_NM * F_LINE_NM) - 1.0 / (C_LINE_NM * C_LINE_NM);
        let b = (self.nd - 1.0) / (self.vd * span);
        let a = self.nd - b / (D_LINE_NM * D_LINE_NM);
        (a, b)
    }
}

/// Refractive index of `material` at `wavelength_nm`.
pub fn refractive_index(material: &Material, wavelength_nm: f64) -> Result<f64, LensError> {
    if !(MIN_WAVELENGTH_NM..=MAX_WAVELENGTH_NM).contains(&wavelength_nm) {
        return Err(LensError::RangeError { wavelength_nm });
    }
    let (a, b) = material.cauchy();
    Ok(a + b / (wavelength_nm * wavelength_nm))
}

/// One optical surface plus the gap that follows it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    /// Curvature in 1/mm.
    pub c: f64,
    /// Conic constant.
    #[serde(default)]
    pub k: f64,
    /// Even aspheric coefficients a4, a6, ... (multiplying rho^2, rho^3, ...).
    #[serde(default)]
    pub a: Vec<f64>,
    /// Thickness to the next surface (or to the image plane) in mm.
    pub t: f64,
    /// Medium after this surface: `"air"` or a key of the materials table.
    pub material: String,
    /// Clear semi-aperture in mm.
    pub semi_aperture: f64,
}

impl Surface {
    /// Spherical surface shorthand.
    pub fn spherical(c: f64, t: f64, material: &str, semi_aperture: f64) -> Self {
        Self {
            c,
            k: 0.0,
            a: Vec::new(),
            t,
            material: material.to_string(),
            semi_aperture,
        }
    }

    pub fn is_air_after(&self) -> bool {
        self.material == MATERIAL_AIR
    }
}

/// Surface height h(rho) above the vertex plane, with rho = x^2 + y^2 in mm^2.
pub fn sag(surface: &Surface, rho: f64) -> Result<f64, LensError> {
    debug_assert!(rho >= 0.0, "rho is a squared radius");
    let alpha = (1.0 + surface.k) * surface.c * surface.c;
    let arg = 1.0 - alpha * rho;
    if arg < 0.0 {
        return Err(LensError::DomainError {
            rho,
            alpha_rho: alpha * rho,
        });
    }
    let mut h = surface.c * rho / (1.0 + arg.sqrt());
    let mut rho_pow = rho;
    for &coeff in &surface.a {
        rho_pow *= rho;
        h += coeff * rho_pow;
    }
    Ok(h)
}

/// Analytic dh/drho. The outward surface normal at (x, y) is proportional to
/// (-2x dh/drho, -2y dh/drho, 1).
pub fn sag_derivative(surface: &Surface, rho: f64) -> Result<f64, LensError> {
    debug_assert!(rho >= 0.0, "rho is a squared radius");
    let alpha = (1.0 + surface.k) * surface.c * surface.c;
    let arg = 1.0 - alpha * rho;
    if arg <= 0.0 {
        return Err(LensError::DomainError {
            rho,
            alpha_rho: alpha * rho,
        });
    }
    let s = arg.sqrt();
    let one_plus = 1.0 + s;
    let mut d = surface.c / one_plus + surface.c * rho * alpha / (2.0 * s * one_plus * one_plus);
    let mut rho_pow = 1.0; // rho^(i-1) for the term a_{2i} * i * rho^(i-1)
    for (idx, &coeff) in surface.a.iter().enumerate() {
        rho_pow *= rho;
        d += coeff * (idx as f64 + 2.0) * rho_pow;
    }
    Ok(d)
}

/// Where the aperture stop sits relative to the glass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AperturePosition {
    Front,
    Middle,
    Rear,
}

impl fmt::Display for AperturePosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AperturePosition::Front => write!(f, "front"),
            AperturePosition::Middle => write!(f, "middle"),
            AperturePosition::Rear => write!(f, "rear"),
        }
    }
}

/// Design specification grid cell the lens claims to belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub pieces: u32,
    pub half_fov_deg: f64,
    pub f_number: f64,
    pub aperture_position: AperturePosition,
}

impl DesignSpec {
    pub const HALF_FOV_GRID: [f64; 3] = [20.0, 30.0, 40.0];
    pub const F_NUMBER_GRID: [f64; 3] = [2.0, 3.0, 4.0];
    pub const PIECES_RANGE: std::ops::RangeInclusive<u32> = 1..=6;

    fn on_grid(value: f64, grid: &[f64]) -> bool {
        grid.iter().any(|g| (g - value).abs() < 1e-9)
    }

    /// Checks grid membership of the declared values.
    pub fn validate_grid(&self) -> Result<(), LensError> {
        if !Self::PIECES_RANGE.contains(&self.pieces) {
            return Err(LensError::ValidationError(format!(
                "pieces = {} outside 1..=6",
                self.pieces
            )));
        }
        if !Self::on_grid(self.half_fov_deg, &Self::HALF_FOV_GRID) {
            return Err(LensError::ValidationError(format!(
                "half_fov_deg = {} not in {{20, 30, 40}}",
                self.half_fov_deg
            )));
        }
        if !Self::on_grid(self.f_number, &Self::F_NUMBER_GRID) {
            return Err(LensError::ValidationError(format!(
                "f_number = {} not in {{2, 3, 4}}",
                self.f_number
            )));
        }
        if self.pieces == 1 && self.aperture_position == AperturePosition::Middle {
            return Err(LensError::ValidationError(
                "aperture_position = middle requires at least 2 pieces".into(),
            ));
        }
        Ok(())
    }
}

/// Sensor behind the lens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub pixel_pitch_um: f64,
    pub width: u32,
    pub height: u32,
}

impl SensorConfig {
    /// Physical offset (mm) of a normalized sensor position (u, v) in [0,1]^2
    /// from the sensor center.
    pub fn offset_mm(&self, u: f64, v: f64) -> (f64, f64) {
        let pitch = self.pixel_pitch_um * 1e-3;
        (
            (u - 0.5) * self.width as f64 * pitch,
            (v - 0.5) * self.height as f64 * pitch,
        )
    }

    /// Half-diagonal of the sensor in mm.
    pub fn half_diagonal_mm(&self) -> f64 {
        let pitch = self.pixel_pitch_um * 1e-3;
        let w = self.width as f64 * pitch;
        let h = self.height as f64 * pitch;
        0.5 * (w * w + h * h).sqrt()
    }
}

/// A full lens prescription: surfaces from object to image, the stop index,
/// the declared design-specification cell, and the sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LensPrescription {
    pub spec: DesignSpec,
    pub sensor: SensorConfig,
    pub stop_index: usize,
    pub materials: BTreeMap<String, Material>,
    pub surfaces: Vec<Surface>,
}

impl LensPrescription {
    /// Axial vertex position of surface `i`; the first vertex is at z = 0.
    pub fn vertex_z(&self, i: usize) -> f64 {
        self.surfaces[..i].iter().map(|s| s.t).sum()
    }

    /// Axial position of the image plane.
    pub fn image_plane_z(&self) -> f64 {
        self.surfaces.iter().map(|s| s.t).sum()
    }

    /// Refractive index of the medium after surface `i`.
    pub fn index_after(&self, i: usize, wavelength_nm: f64) -> Result<f64, LensError> {
        let s = &self.surfaces[i];
        if s.is_air_after() {
            Ok(1.0)
        } else {
            let mat = self.materials.get(&s.material).ok_or_else(|| {
                LensError::ValidationError(format!("unknown material {:?}", s.material))
            })?;
            refractive_index(mat, wavelength_nm)
        }
    }

    pub fn max_semi_aperture(&self) -> f64 {
        self.surfaces
            .iter()
            .map(|s| s.semi_aperture)
            .fold(0.0, f64::max)
    }

    /// Number of glass elements: maximal runs of consecutive non-air gaps.
    pub fn piece_count(&self) -> u32 {
        let mut pieces = 0;
        let mut in_glass = false;
        for s in &self.surfaces {
            if !s.is_air_after() {
                if !in_glass {
                    pieces += 1;
                }
                in_glass = true;
            } else {
                in_glass = false;
            }
        }
        pieces
    }

    /// Stop position relative to the glass: before the first glass gap,
    /// after the last, or in between.
    pub fn aperture_position(&self) -> AperturePosition {
        let first_glass = self.surfaces.iter().position(|s| !s.is_air_after());
        let last_glass = self.surfaces.iter().rposition(|s| !s.is_air_after());
        match (first_glass, last_glass) {
            (Some(first), Some(last)) => {
                if self.stop_index <= first {
                    AperturePosition::Front
                } else if self.stop_index > last {
                    AperturePosition::Rear
                } else {
                    AperturePosition::Middle
                }
            }
            _ => AperturePosition::Front,
        }
    }

    /// Structural invariants that hold for any usable prescription.
    pub fn validate_structure(&self) -> Result<(), LensError> {
        if self.surfaces.is_empty() {
            return Err(LensError::ValidationError("no surfaces".into()));
        }
        if self.stop_index >= self.surfaces.len() {
            return Err(LensError::ValidationError(format!(
                "stop_index {} out of bounds for {} surfaces",
                self.stop_index,
                self.surfaces.len()
            )));
        }
        if self.surfaces.iter().all(|s| s.is_air_after()) {
            return Err(LensError::ValidationError(
                "prescription has no refracting surface".into(),
            ));
        }
        if self.sensor.pixel_pitch_um <= 0.0 || self.sensor.width == 0 || self.sensor.height == 0 {
            return Err(LensError::ValidationError("degenerate sensor".into()));
        }
        for (i, s) in self.surfaces.iter().enumerate() {
            if !s.c.is_finite() || !s.k.is_finite() || !s.t.is_finite() {
                return Err(LensError::ValidationError(format!(
                    "surface {i}: non-finite parameter"
                )));
            }
            if s.a.len() > MAX_ASPHERE_COEFFS {
                return Err(LensError::ValidationError(format!(
                    "surface {i}: {} aspheric coefficients exceeds the supported a4..a16",
                    s.a.len()
                )));
            }
            if s.a.iter().any(|v| !v.is_finite()) {
                return Err(LensError::ValidationError(format!(
                    "surface {i}: non-finite aspheric coefficient"
                )));
            }
            if s.semi_aperture <= 0.0 {
                return Err(LensError::ValidationError(format!(
                    "surface {i}: semi_aperture must be positive"
                )));
            }
            if s.t < 0.0 {
                return Err(LensError::ValidationError(format!(
                    "surface {i}: negative thickness"
                )));
            }
            let alpha = (1.0 + s.k) * s.c * s.c;
            let rho_max = s.semi_aperture * s.semi_aperture;
            if alpha * rho_max > 1.0 {
                return Err(LensError::ValidationError(format!(
                    "surface {i}: sag undefined over the clear aperture ((1+k)c^2 rho = {})",
                    alpha * rho_max
                )));
            }
            if !s.is_air_after() && !self.materials.contains_key(&s.material) {
                return Err(LensError::ValidationError(format!(
                    "surface {i}: material {:?} not in the materials table",
                    s.material
                )));
            }
        }
        for (name, m) in &self.materials {
            if m.nd <= 1.0 || m.vd <= 0.0 || !m.nd.is_finite() || !m.vd.is_finite() {
                return Err(LensError::ValidationError(format!(
                    "material {name:?}: need nd > 1 and vd > 0"
                )));
            }
        }
        Ok(())
    }

    /// Full validation: structure plus design-grid membership and consistency
    /// of the declared spec with the surface list.
    pub fn validate(&self) -> Result<(), LensError> {
        self.validate_structure()?;
        self.spec.validate_grid()?;
        let pieces = self.piece_count();
        if pieces != self.spec.pieces {
            return Err(LensError::ValidationError(format!(
                "declared pieces = {} but the surface list has {pieces} glass elements",
                self.spec.pieces
            )));
        }
        let pos = self.aperture_position();
        if pos != self.spec.aperture_position {
            return Err(LensError::ValidationError(format!(
                "declared aperture_position = {} but the stop sits at {pos}",
                self.spec.aperture_position
            )));
        }
        Ok(())
    }
}

/// Parsing options. `check_spec_grid` is on by default; switching it off
/// (the `--no-spec-check` escape hatch) admits free-form research lenses while
/// still enforcing structural invariants.
#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    pub check_spec_grid: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            check_spec_grid: true,
        }
    }
}

/// Parses a `.lens.json` byte stream into a validated prescription.
pub fn parse_lens(bytes: &[u8]) -> Result<LensPrescription, LensError> {
    parse_lens_with(bytes, ParseOptions::default())
}

pub fn parse_lens_with(bytes: &[u8], opts: ParseOptions) -> Result<LensPrescription, LensError> {
    let lens: LensPrescription = serde_json::from_slice(bytes).map_err(|e| {
        LensError::ParseError(format!("line {}, column {}: {e}", e.line(), e.column()))
    })?;
    if opts.check_spec_grid {
        lens.validate()?;
    } else {
        lens.validate_structure()?;
    }
    Ok(lens)
}

/// Canonical text form. `parse_lens(serialize_lens(x).as_bytes()) == x`.
pub fn serialize_lens(lens: &LensPrescription) -> String {
    let mut s = serde_json::to_string_pretty(lens).expect("prescriptions always serialize");
    s.push('\n');
    s
}

#[cfg(test)]
pub(crate) use tests::singlet_for_tests;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sphere(c: f64, semi_aperture: f64) -> Surface {
        Surface::spherical(c, 1.0, "air", semi_aperture)
    }

    /// Exact sphere depth R - sqrt(R^2 - r^2), the independent geometry check.
    fn sphere_sag_oracle(c: f64, rho: f64) -> f64 {
        let r_curv = 1.0 / c;
        r_curv.signum() * (r_curv.abs() - (r_curv * r_curv - rho).sqrt())
    }

    #[test]
    fn sag_matches_exact_sphere() {
        // c = 0.01 (R = 100 mm) at r = 10 mm.
        let s = sphere(0.01, 20.0);
        let h = sag(&s, 100.0).unwrap();
        assert_relative_eq!(h, sphere_sag_oracle(0.01, 100.0), epsilon = 1e-12);
        assert_relative_eq!(h, 0.501_256_289_3, epsilon = 1e-9);
    }

    #[test]
    fn sag_at_vertex_is_zero() {
        let s = Surface {
            c: 0.02,
            k: -0.7,
            a: vec![1e-6, -2e-9],
            t: 1.0,
            material: "air".into(),
            semi_aperture: 10.0,
        };
        assert_eq!(sag(&s, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_coefficients_equal_empty_coefficients() {
        let plain = sphere(0.01, 60.0);
        let padded = Surface {
            a: vec![0.0, 0.0, 0.0],
            ..plain.clone()
        };
        let rho = 50.0 * 50.0;
        assert_eq!(
            sag(&plain, rho).unwrap().to_bits(),
            sag(&padded, rho).unwrap().to_bits()
        );
    }

    #[test]
    fn sag_rejects_points_beyond_geometric_extent() {
        let s = sphere(0.1, 9.9); // R = 10 mm
        let err = sag(&s, 101.0).unwrap_err();
        assert!(matches!(err, LensError::DomainError { .. }));
    }

    /// Central finite difference on the sag itself.
    fn fd_derivative(s: &Surface, rho: f64) -> f64 {
        let h = 1e-6;
        (sag(s, rho + h).unwrap() - sag(s, rho - h).unwrap()) / (2.0 * h)
    }

    #[test]
    fn derivative_of_flat_surface_is_zero() {
        let s = sphere(0.0, 20.0);
        assert_eq!(sag_derivative(&s, 123.0).unwrap(), 0.0);
    }

    #[test]
    fn derivative_matches_finite_difference_oracle() {
        // Frozen from the finite-difference oracle (step 1e-6) for
        // c = 0.01, k = 0 at rho = 100 mm^2.
        let s = sphere(0.01, 20.0);
        let d = sag_derivative(&s, 100.0).unwrap();
        assert_relative_eq!(d, fd_derivative(&s, 100.0), epsilon = 1e-8);
        assert_relative_eq!(d, 0.005_025_189_1, epsilon = 1e-9);
    }

    #[test]
    fn derivative_of_pure_asphere_term() {
        let s = Surface {
            c: 0.0,
            k: 0.0,
            a: vec![1e-6],
            t: 1.0,
            material: "air".into(),
            semi_aperture: 10.0,
        };
        // d(a4 rho^2)/drho = 2 a4 rho = 2e-5 at rho = 10.
        assert_relative_eq!(sag_derivative(&s, 10.0).unwrap(), 2e-5, epsilon = 1e-18);
    }

    proptest! {
        #[test]
        fn spherical_sag_reduction_property(
            c in -0.05f64..0.05,
            r_frac in 0.0f64..1.0,
        ) {
            let semi_aperture = 9.0; // keeps alpha * rho < 1 for |c| <= 0.05
            let s = sphere(c, semi_aperture);
            let r = r_frac * semi_aperture;
            let rho = r * r;
            let h = sag(&s, rho).unwrap();
            let oracle = if c.abs() < 1e-12 { 0.0 } else { sphere_sag_oracle(c, rho) };
            prop_assert!((h - oracle).abs() < 1e-10, "h = {h}, oracle = {oracle}");
        }

        #[test]
        fn derivative_matches_central_difference(
            c in -0.04f64..0.04,
            k in -1.5f64..1.5,
            a4 in -1e-6f64..1e-6,
            a6 in -1e-9f64..1e-9,
            r_frac in 0.05f64..0.95,
        ) {
            let s = Surface {
                c, k, a: vec![a4, a6], t: 1.0,
                material: "air".into(), semi_aperture: 8.0,
            };
            let rho = (r_frac * 8.0) * (r_frac * 8.0);
            if (1.0 + k) * c * c * (rho + 1e-3) >= 1.0 {
                return Ok(());
            }
            let d = sag_derivative(&s, rho).unwrap();
            let fd = fd_derivative(&s, rho);
            let scale = d.abs().max(1e-6);
            prop_assert!((d - fd).abs() / scale < 1e-6, "d = {d}, fd = {fd}");
        }
    }

    #[test]
    fn cauchy_anchors_the_d_line_exactly() {
        let bk7 = Material::new(1.5168, 64.17);
        let n = refractive_index(&bk7, D_LINE_NM).unwrap();
        assert_relative_eq!(n, 1.5168, epsilon = 1e-12);
    }

    #[test]
    fn cauchy_reproduces_the_abbe_identity() {
        let bk7 = Material::new(1.5168, 64.17);
        let nf = refractive_index(&bk7, F_LINE_NM).unwrap();
        let nc = refractive_index(&bk7, C_LINE_NM).unwrap();
        assert_relative_eq!(nf - nc, (1.5168 - 1.0) / 64.17, epsilon = 1e-9);
        assert_relative_eq!(nf - nc, 0.008_053_97, epsilon = 1e-6);
    }

    #[test]
    fn dispersion_is_normal() {
        let glasses = [
            Material::new(1.5168, 64.17),
            Material::new(1.62004, 36.37),
            Material::new(1.9, 20.0),
        ];
        for g in glasses {
            let blue = refractive_index(&g, 450.0).unwrap();
            let red = refractive_index(&g, 650.0).unwrap();
            assert!(blue > red, "dispersion must decrease with wavelength");
        }
    }

    #[test]
    fn wavelengths_outside_band_are_rejected() {
        let bk7 = Material::new(1.5168, 64.17);
        assert!(matches!(
            refractive_index(&bk7, 300.0),
            Err(LensError::RangeError { .. })
        ));
        assert!(matches!(
            refractive_index(&bk7, 900.0),
            Err(LensError::RangeError { .. })
        ));
    }

    pub(crate) fn singlet_for_tests() -> LensPrescription {
        let mut materials = BTreeMap::new();
        materials.insert("BK7".to_string(), Material::new(1.5168, 64.17));
        LensPrescription {
            spec: DesignSpec {
                pieces: 1,
                half_fov_deg: 20.0,
                f_number: 4.0,
                aperture_position: AperturePosition::Front,
            },
            sensor: SensorConfig {
                pixel_pitch_um: 40.0,
                width: 512,
                height: 512,
            },
            stop_index: 0,
            materials,
            surfaces: vec![
                Surface::spherical(0.01, 3.0, "BK7", 6.0),
                Surface::spherical(0.0, 191.520604, "air", 6.0),
            ],
        }
    }

    #[test]
    fn roundtrip_is_value_identity() {
        let lens = singlet_for_tests();
        let text = serialize_lens(&lens);
        let reparsed = parse_lens(text.as_bytes()).unwrap();
        assert_eq!(lens, reparsed);
        let text2 = serialize_lens(&reparsed);
        assert_eq!(text, text2);
    }

    #[test]
    fn shipped_singlet_fixture_is_canonical() {
        // Two surfaces, stop on the front one, and serialization reproduces
        // the file byte for byte.
        let bytes = std::fs::read(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/fixtures/singlet.lens.json"
        ))
        .unwrap();
        let lens = parse_lens(&bytes).unwrap();
        assert_eq!(lens.surfaces.len(), 2);
        assert_eq!(lens.stop_index, 0);
        assert_eq!(serialize_lens(&lens).as_bytes(), bytes.as_slice());
    }

    #[test]
    fn six_element_asphere_roundtrips_by_value() {
        let mut materials = BTreeMap::new();
        materials.insert("A".to_string(), Material::new(1.58, 59.4));
        materials.insert("B".to_string(), Material::new(1.72, 29.5));
        let mut surfaces = Vec::new();
        for i in 0..12 {
            surfaces.push(Surface {
                c: 0.01 * (i as f64 - 5.5) / 6.0,
                k: if i % 3 == 0 { -0.8 } else { 0.0 },
                a: if i % 2 == 0 {
                    vec![1.3e-6, -2.7e-9, 4.1e-12]
                } else {
                    Vec::new()
                },
                t: 1.0 + i as f64 * 0.3,
                material: match i % 2 {
                    0 => (if i % 4 == 0 { "A" } else { "B" }).to_string(),
                    _ => "air".to_string(),
                },
                semi_aperture: 8.0,
            });
        }
        surfaces.last_mut().unwrap().material = "air".to_string();
        let lens = LensPrescription {
            spec: DesignSpec {
                pieces: 6,
                half_fov_deg: 30.0,
                f_number: 2.0,
                aperture_position: AperturePosition::Middle,
            },
            sensor: SensorConfig {
                pixel_pitch_um: 2.5,
                width: 4000,
                height: 3000,
            },
            stop_index: 5,
            materials,
            surfaces,
        };
        let text = serialize_lens(&lens);
        let reparsed = parse_lens_with(
            text.as_bytes(),
            ParseOptions {
                check_spec_grid: false,
            },
        )
        .unwrap();
        assert_eq!(lens, reparsed);
    }

    #[test]
    fn off_grid_spec_is_rejected_unless_unchecked() {
        let mut lens = singlet_for_tests();
        lens.spec.half_fov_deg = 25.0;
        let text = serialize_lens(&lens);
        let err = parse_lens(text.as_bytes()).unwrap_err();
        assert!(matches!(err, LensError::ValidationError(_)));
        let relaxed = parse_lens_with(
            text.as_bytes(),
            ParseOptions {
                check_spec_grid: false,
            },
        );
        assert!(relaxed.is_ok());
    }

    #[test]
    fn parse_reports_location() {
        let err = parse_lens(b"{ not json").unwrap_err();
        match err {
            LensError::ParseError(msg) => assert!(msg.contains("line 1")),
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn nan_curvature_is_refused() {
        let mut lens = singlet_for_tests();
        lens.surfaces[0].c = f64::NAN;
        assert!(matches!(
            lens.validate(),
            Err(LensError::ValidationError(_))
        ));
    }

    #[test]
    fn piece_count_and_stop_position_are_derived() {
        let lens = singlet_for_tests();
        assert_eq!(lens.piece_count(), 1);
        assert_eq!(lens.aperture_position(), AperturePosition::Front);
        let mut wrong = lens.clone();
        wrong.spec.pieces = 2;
        assert!(wrong.validate().is_err());
    }

    prop_compose! {
        fn arb_surface()(
            c in -0.02f64..0.02,
            k in -1.0f64..1.0,
            n_coeffs in 0usize..3,
            a4 in -1e-7f64..1e-7,
            a6 in -1e-10f64..1e-10,
            t in 0.5f64..10.0,
            glass in prop::bool::ANY,
            semi_aperture in 2.0f64..8.0,
        ) -> Surface {
            let coeffs = [a4, a6];
            Surface {
                c,
                k,
                a: coeffs[..n_coeffs.min(2)].to_vec(),
                t,
                material: if glass { "G1".to_string() } else { "air".to_string() },
                semi_aperture,
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn parse_serialize_roundtrip_property(
            surfaces in prop::collection::vec(arb_surface(), 1..6),
            stop_pick in 0usize..6,
            nd in 1.4f64..1.9,
            vd in 20.0f64..80.0,
        ) {
            let mut surfaces = surfaces;
            // Last gap is the back focal distance: force it to air.
            let last = surfaces.len() - 1;
            surfaces[last].material = "air".to_string();
            surfaces[last].t = 50.0;
            if surfaces.iter().all(|s| s.is_air_after()) {
                surfaces[0].material = "G1".to_string();
            }
            let mut materials = BTreeMap::new();
            materials.insert("G1".to_string(), Material::new(nd, vd));
            let lens = LensPrescription {
                spec: DesignSpec {
                    pieces: 0, // patched below
                    half_fov_deg: 20.0,
                    f_number: 2.0,
                    aperture_position: AperturePosition::Front,
                },
                sensor: SensorConfig { pixel_pitch_um: 4.0, width: 256, height: 256 },
                stop_index: stop_pick % surfaces.len(),
                materials,
                surfaces,
            };
            let mut lens = lens;
            lens.spec.pieces = lens.piece_count().max(1);
            lens.spec.aperture_position = lens.aperture_position();
            let text = serialize_lens(&lens);
            let reparsed = parse_lens_with(
                text.as_bytes(),
                ParseOptions { check_spec_grid: false },
            ).unwrap();
            prop_assert_eq!(lens, reparsed);
        }
    }
}
