//! Sequential ray tracing through a prescription.
//!
//! Rays march surface to surface: Newton intersection against the sag sheet
//! (seeded by the analytic plane/sphere solution), vector Snell refraction
//! with per-wavelength indices, then advance by the gap thickness. Rays that
//! vignette or totally internally reflect are marked dead with the reason and
//! dropped from spot statistics instead of failing the whole trace.

use nalgebra::{Point3, Vector3};
use thiserror::Error;

use crate::lens::{sag, sag_derivative, LensError, LensPrescription, Surface, D_LINE_NM};
use crate::util::NeumaierSum;

const NEWTON_TOL_MM: f64 = 1e-10;
const NEWTON_MAX_STEPS: usize = 50;

#[derive(Debug, Error)]
pub enum TraceError {
    /// The ray does not hit the surface inside its clear aperture.
    #[error("ray misses surface {surface_index}")]
    MissSurface { surface_index: usize },
    /// Newton iteration failed to locate the sag intersection.
    #[error(
        "intersection failed to converge after {NEWTON_MAX_STEPS} steps on surface {surface_index}"
    )]
    NoConvergence { surface_index: usize },
    #[error("total internal reflection")]
    TotalInternalReflection,
    /// Every pupil sample died before the image plane.
    #[error("all rays vignetted for field {field_angle_deg} deg")]
    AllRaysVignetted { field_angle_deg: f64 },
    /// Net optical power too small to define focal quantities.
    #[error("system is afocal (|power| < 1e-9 /mm)")]
    AfocalSystem,
    #[error(transparent)]
    Lens(#[from] LensError),
}

/// Why a ray died.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RayFailure {
    Vignetted,
    TotalInternalReflection,
    NoConvergence,
}

impl RayFailure {
    pub fn note(self) -> &'static str {
        match self {
            RayFailure::Vignetted => "vignetted",
            RayFailure::TotalInternalReflection => "TIR",
            RayFailure::NoConvergence => "no_convergence",
        }
    }
}

/// A ray in the optical space: position, unit direction, wavelength, and
/// life state. Dead rays keep the position where they died plus the reason.
#[derive(Debug, Clone)]
pub struct Ray {
    pub origin: Point3<f64>,
    pub direction: Vector3<f64>,
    pub wavelength_nm: f64,
    failure: Option<RayFailure>,
}

impl Ray {
    pub fn new(origin: Point3<f64>, direction: Vector3<f64>, wavelength_nm: f64) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
            wavelength_nm,
            failure: None,
        }
    }

    pub fn alive(&self) -> bool {
        self.failure.is_none()
    }

    pub fn path_note(&self) -> Option<&'static str> {
        self.failure.map(RayFailure::note)
    }

    pub fn failure(&self) -> Option<RayFailure> {
        self.failure
    }

    fn kill(&mut self, failure: RayFailure) {
        self.failure = Some(failure);
    }
}

/// Intersection of a ray with one surface whose vertex sits at `vertex_z`.
///
/// Returns the hit point and the unit surface normal oriented against the
/// incoming direction. The hit satisfies `z - vertex_z = sag(x^2 + y^2)` to
/// 1e-10 mm.
pub fn intersect(
    ray: &Ray,
    surface: &Surface,
    vertex_z: f64,
    surface_index: usize,
) -> Result<(Point3<f64>, Vector3<f64>), TraceError> {
    let o = ray.origin;
    let d = ray.direction;
    if d.z <= 0.0 {
        return Err(TraceError::MissSurface { surface_index });
    }
    let miss = || TraceError::MissSurface { surface_index };

    // Analytic seed: plane for near-zero curvature, sphere otherwise.
    let mut t = if surface.c.abs() < 1e-14 {
        let t = (vertex_z - o.z) / d.z;
        if t < 0.0 {
            return Err(miss());
        }
        t
    } else {
        let r_curv = 1.0 / surface.c;
        let center_z = vertex_z + r_curv;
        let oc = Vector3::new(o.x, o.y, o.z - center_z);
        let b = 2.0 * d.dot(&oc);
        let c0 = oc.dot(&oc) - r_curv * r_curv;
        let disc = b * b - 4.0 * c0;
        if disc < 0.0 {
            return Err(miss());
        }
        let sq = disc.sqrt();
        let candidates = [(-b - sq) / 2.0, (-b + sq) / 2.0];
        // The sag sheet is the hemisphere on the vertex side of the center.
        let mut best: Option<f64> = None;
        for &tc in &candidates {
            if tc < 0.0 {
                continue;
            }
            let z_hit = o.z + tc * d.z;
            let on_branch = if r_curv > 0.0 {
                z_hit <= center_z + 1e-9
            } else {
                z_hit >= center_z - 1e-9
            };
            if on_branch && best.is_none_or(|b| tc < b) {
                best = Some(tc);
            }
        }
        best.ok_or_else(miss)?
    };

    // Newton refinement against the full sag (exact already for spheres).
    let mut converged = false;
    for _ in 0..NEWTON_MAX_STEPS {
        let p = o + d * t;
        let rho = p.x * p.x + p.y * p.y;
        let h = match sag(surface, rho) {
            Ok(h) => h,
            Err(_) => return Err(miss()), // wandered beyond the geometric extent
        };
        let f = p.z - vertex_z - h;
        if f.abs() < NEWTON_TOL_MM {
            converged = true;
            break;
        }
        let dh = match sag_derivative(surface, rho) {
            Ok(v) => v,
            Err(_) => return Err(miss()),
        };
        let fp = d.z - dh * (2.0 * p.x * d.x + 2.0 * p.y * d.y);
        if fp.abs() < 1e-14 {
            return Err(TraceError::NoConvergence { surface_index });
        }
        t -= f / fp;
        if !t.is_finite() {
            return Err(TraceError::NoConvergence { surface_index });
        }
    }
    if !converged {
        return Err(TraceError::NoConvergence { surface_index });
    }

    let p = o + d * t;
    let rho = p.x * p.x + p.y * p.y;
    if rho > surface.semi_aperture * surface.semi_aperture {
        return Err(miss());
    }
    let dh = sag_derivative(surface, rho).map_err(|_| miss())?;
    let mut normal = Vector3::new(-2.0 * p.x * dh, -2.0 * p.y * dh, 1.0).normalize();
    if normal.dot(&d) > 0.0 {
        normal = -normal;
    }
    Ok((p, normal))
}

/// Vector Snell refraction.
///
/// `normal` must be unit length and oriented against `direction`. Returns the
/// unit transmitted direction; the refracted ray stays in the plane of
/// incidence and satisfies n1 sin(i) = n2 sin(t).
pub fn refract(
    direction: &Vector3<f64>,
    normal: &Vector3<f64>,
    n1: f64,
    n2: f64,
) -> Result<Vector3<f64>, TraceError> {
    let eta = n1 / n2;
    let cos_i = -direction.dot(normal);
    let sin2_t = eta * eta * (1.0 - cos_i * cos_i);
    if sin2_t > 1.0 {
        return Err(TraceError::TotalInternalReflection);
    }
    let cos_t = (1.0 - sin2_t).sqrt();
    Ok((direction * eta + normal * (eta * cos_i - cos_t)).normalize())
}

/// Propagates one ray from object space to the image plane.
///
/// The returned ray is either alive at the image plane or dead at the surface
/// that killed it, with the reason in `path_note`.
pub fn trace(lens: &LensPrescription, ray: &Ray) -> Result<Ray, TraceError> {
    let mut r = ray.clone();
    let mut n_before = 1.0;
    let mut vertex_z = 0.0;
    for (i, surface) in lens.surfaces.iter().enumerate() {
        match intersect(&r, surface, vertex_z, i) {
            Ok((p, normal)) => {
                r.origin = p;
                let n_after = lens.index_after(i, r.wavelength_nm)?;
                match refract(&r.direction, &normal, n_before, n_after) {
                    Ok(d) => r.direction = d,
                    Err(TraceError::TotalInternalReflection) => {
                        r.kill(RayFailure::TotalInternalReflection);
                        return Ok(r);
                    }
                    Err(e) => return Err(e),
                }
                n_before = n_after;
            }
            Err(TraceError::MissSurface { .. }) => {
                r.kill(RayFailure::Vignetted);
                return Ok(r);
            }
            Err(TraceError::NoConvergence { .. }) => {
                r.kill(RayFailure::NoConvergence);
                return Ok(r);
            }
            Err(e) => return Err(e),
        }
        vertex_z += surface.t;
    }
    // Final gap: the last thickness carries the ray to the image plane.
    if r.direction.z <= 0.0 {
        r.kill(RayFailure::Vignetted);
        return Ok(r);
    }
    let t = (vertex_z - r.origin.z) / r.direction.z;
    r.origin += r.direction * t;
    Ok(r)
}

/// First-order quantities from a 2x2 ray-transfer sweep at the d line.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParaxialSummary {
    pub efl_mm: f64,
    pub bfd_mm: f64,
    pub entrance_pupil_diameter_mm: f64,
    /// Entrance pupil position relative to the first surface vertex.
    pub entrance_pupil_z_mm: f64,
    pub working_f_number: f64,
}

#[derive(Debug, Clone, Copy)]
struct Abcd {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl Abcd {
    const IDENTITY: Abcd = Abcd {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    /// Applies `self` after `rhs` (matrix product self * rhs).
    fn compose(self, rhs: Abcd) -> Abcd {
        Abcd {
            a: self.a * rhs.a + self.b * rhs.c,
            b: self.a * rhs.b + self.b * rhs.d,
            c: self.c * rhs.a + self.d * rhs.c,
            d: self.c * rhs.b + self.d * rhs.d,
        }
    }

    fn refraction(power: f64) -> Abcd {
        Abcd {
            a: 1.0,
            b: 0.0,
            c: -power,
            d: 1.0,
        }
    }

    fn translation(reduced_t: f64) -> Abcd {
        Abcd {
            a: 1.0,
            b: reduced_t,
            c: 0.0,
            d: 1.0,
        }
    }
}

/// Paraxial matrix from the first vertex up to (but excluding) the refraction
/// at `until_surface`; `until_surface == len` gives the full system matrix.
fn paraxial_matrix(lens: &LensPrescription, until_surface: usize) -> Result<Abcd, TraceError> {
    let mut m = Abcd::IDENTITY;
    let mut n_before = 1.0;
    for (i, surface) in lens.surfaces.iter().enumerate() {
        if i >= until_surface {
            break;
        }
        let n_after = lens.index_after(i, D_LINE_NM)?;
        let power = surface.c * (n_after - n_before);
        m = Abcd::refraction(power).compose(m);
        let is_last_included = i + 1 == until_surface;
        if !is_last_included {
            m = Abcd::translation(surface.t / n_after).compose(m);
        }
        n_before = n_after;
    }
    Ok(m)
}

/// Effective focal length, back focal distance, and the entrance pupil
/// conjugate to the stop, all at 587.6 nm.
pub fn paraxial(lens: &LensPrescription) -> Result<ParaxialSummary, TraceError> {
    let system = paraxial_matrix(lens, lens.surfaces.len())?;
    if system.c.abs() < 1e-9 {
        return Err(TraceError::AfocalSystem);
    }
    let efl = -1.0 / system.c;
    let bfd = -system.a / system.c;

    // Entrance pupil: image of the stop through the surfaces ahead of it.
    // With the front-group matrix M mapping the first-vertex plane to the
    // stop plane, a ray aimed at the axial point z_ep passes the stop center
    // iff z_ep = B/A, and pupil heights scale by A.
    let (ep_z, ep_diameter) = if lens.stop_index == 0 {
        (0.0, 2.0 * lens.surfaces[0].semi_aperture)
    } else {
        let front = {
            // Include the translation up to the stop vertex.
            let mut m = paraxial_matrix(lens, lens.stop_index)?;
            let i = lens.stop_index - 1;
            let n_after = lens.index_after(i, D_LINE_NM)?;
            m = Abcd::translation(lens.surfaces[i].t / n_after).compose(m);
            m
        };
        if front.a.abs() < 1e-12 {
            return Err(TraceError::AfocalSystem);
        }
        (
            front.b / front.a,
            2.0 * lens.surfaces[lens.stop_index].semi_aperture / front.a.abs(),
        )
    };
    if ep_diameter <= 0.0 {
        return Err(TraceError::AfocalSystem);
    }
    Ok(ParaxialSummary {
        efl_mm: efl,
        bfd_mm: bfd,
        entrance_pupil_diameter_mm: ep_diameter,
        entrance_pupil_z_mm: ep_z,
        working_f_number: efl / ep_diameter,
    })
}

/// Ray bundle launched from infinity toward the entrance pupil.
///
/// The pupil is sampled on a `samples x samples` grid inscribed in the pupil
/// circle with points outside the unit disk rejected, so results are
/// deterministic. Returns every ray (alive at the image plane or dead where
/// it failed) in grid order.
pub fn pupil_rays(
    lens: &LensPrescription,
    direction: Vector3<f64>,
    wavelength_nm: f64,
    samples: usize,
) -> Result<Vec<Ray>, TraceError> {
    let par = paraxial(lens)?;
    let d = direction.normalize();
    let ep_r = par.entrance_pupil_diameter_mm / 2.0;
    let z_start = par.entrance_pupil_z_mm.min(0.0) - (10.0 + 2.0 * lens.max_semi_aperture());
    let back = (z_start - par.entrance_pupil_z_mm) / d.z;
    let mut rays = Vec::with_capacity(samples * samples);
    for j in 0..samples {
        for i in 0..samples {
            let px = 2.0 * (i as f64 + 0.5) / samples as f64 - 1.0;
            let py = 2.0 * (j as f64 + 0.5) / samples as f64 - 1.0;
            if px * px + py * py > 1.0 {
                continue;
            }
            let pupil_point = Point3::new(px * ep_r, py * ep_r, par.entrance_pupil_z_mm);
            let ray = Ray::new(pupil_point + d * back, d, wavelength_nm);
            rays.push(trace(lens, &ray)?);
        }
    }
    Ok(rays)
}

/// The chief ray for a field direction: through the entrance pupil center.
pub fn chief_ray(
    lens: &LensPrescription,
    direction: Vector3<f64>,
    wavelength_nm: f64,
) -> Result<Ray, TraceError> {
    let par = paraxial(lens)?;
    let d = direction.normalize();
    let z_start = par.entrance_pupil_z_mm.min(0.0) - (10.0 + 2.0 * lens.max_semi_aperture());
    let back = (z_start - par.entrance_pupil_z_mm) / d.z;
    let origin = Point3::new(0.0, 0.0, par.entrance_pupil_z_mm) + d * back;
    trace(lens, &Ray::new(origin, d, wavelength_nm))
}

/// Meridional field direction for a field angle in degrees.
pub fn field_direction(field_angle_deg: f64) -> Vector3<f64> {
    let th = field_angle_deg.to_radians();
    Vector3::new(0.0, th.sin(), th.cos())
}

/// Image-plane ray hits for one field angle and wavelength.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SpotDiagram {
    pub field_angle_deg: f64,
    pub wavelength_nm: f64,
    pub hits: Vec<(f64, f64)>,
    pub centroid: (f64, f64),
    pub rms_radius_mm: f64,
    pub rays_traced: usize,
    pub rays_lost: usize,
}

impl SpotDiagram {
    /// Builds the statistics from raw hits (order-independent compensated
    /// reduction).
    pub fn from_hits(hits: Vec<(f64, f64)>, field_angle_deg: f64, wavelength_nm: f64) -> Self {
        let n = hits.len().max(1) as f64;
        let (mut sx, mut sy) = (NeumaierSum::new(), NeumaierSum::new());
        for &(x, y) in &hits {
            sx.add(x);
            sy.add(y);
        }
        let centroid = (sx.value() / n, sy.value() / n);
        let mut sq = NeumaierSum::new();
        for &(x, y) in &hits {
            let dx = x - centroid.0;
            let dy = y - centroid.1;
            sq.add(dx * dx + dy * dy);
        }
        let rays_traced = hits.len();
        Self {
            field_angle_deg,
            wavelength_nm,
            hits,
            centroid,
            rms_radius_mm: (sq.value() / n).sqrt(),
            rays_traced,
            rays_lost: 0,
        }
    }
}

/// Traces a pupil grid and reduces it to a spot diagram.
pub fn spot_diagram(
    lens: &LensPrescription,
    field_angle_deg: f64,
    wavelength_nm: f64,
    pupil_samples: usize,
) -> Result<SpotDiagram, TraceError> {
    let rays = pupil_rays(
        lens,
        field_direction(field_angle_deg),
        wavelength_nm,
        pupil_samples,
    )?;
    let traced = rays.len();
    let hits: Vec<(f64, f64)> = rays
        .iter()
        .filter(|r| r.alive())
        .map(|r| (r.origin.x, r.origin.y))
        .collect();
    if hits.is_empty() {
        return Err(TraceError::AllRaysVignetted { field_angle_deg });
    }
    let lost = traced - hits.len();
    let mut spot = SpotDiagram::from_hits(hits, field_angle_deg, wavelength_nm);
    spot.rays_traced = traced;
    spot.rays_lost = lost;
    Ok(spot)
}
