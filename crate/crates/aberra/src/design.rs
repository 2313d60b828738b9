//! Simplified automatic lens design.
//!
//! The merit function is a weighted sum of squared RMS spot radii over field
//! angles and wavelengths, plus quadratic penalties for missing the target
//! focal length, for edge gaps thinner than the manufacturing minimum, and
//! for rays lost to vignetting or total internal reflection. Optimization is
//! simulated annealing with Gaussian proposals scaled to each variable's box
//! width, interleaved with short Adam descent phases driven by central
//! finite-difference gradients. Everything is deterministic under the seed:
//! the annealing chain is sequential and proposals never leave their bounds.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lens::{sag, AperturePosition, DesignSpec, LensPrescription};
use crate::trace::{field_direction, paraxial, pupil_rays};
use crate::util::compensated_sum;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("design variables are empty")]
    NoVariables,
    #[error("variable {index} has a bad box [{lo}, {hi}]")]
    BadBounds { index: usize, lo: f64, hi: f64 },
    #[error("variable targets surface {surface} but the lens has {surfaces}")]
    SurfaceOutOfRange { surface: usize, surfaces: usize },
}

/// Which prescription parameter a design variable drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignParam {
    Curvature,
    Thickness,
    Conic,
    /// Even aspheric coefficient index: 0 is a4, 1 is a6, ...
    Asphere(usize),
}

/// One free variable: a surface parameter with box bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub surface: usize,
    pub param: DesignParam,
    pub lo: f64,
    pub hi: f64,
}

/// The flattened variable vector view over a prescription.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignVariables {
    pub vars: Vec<VariableSpec>,
}

impl DesignVariables {
    pub fn validate(&self, lens: &LensPrescription) -> Result<(), DesignError> {
        if self.vars.is_empty() {
            return Err(DesignError::NoVariables);
        }
        for (index, v) in self.vars.iter().enumerate() {
            if !v.lo.is_finite() || !v.hi.is_finite() || v.lo >= v.hi {
                return Err(DesignError::BadBounds {
                    index,
                    lo: v.lo,
                    hi: v.hi,
                });
            }
            if v.surface >= lens.surfaces.len() {
                return Err(DesignError::SurfaceOutOfRange {
                    surface: v.surface,
                    surfaces: lens.surfaces.len(),
                });
            }
        }
        Ok(())
    }

    pub fn extract(&self, lens: &LensPrescription) -> Vec<f64> {
        self.vars
            .iter()
            .map(|v| {
                let s = &lens.surfaces[v.surface];
                match v.param {
                    DesignParam::Curvature => s.c,
                    DesignParam::Thickness => s.t,
                    DesignParam::Conic => s.k,
                    DesignParam::Asphere(i) => s.a.get(i).copied().unwrap_or(0.0),
                }
            })
            .collect()
    }

    pub fn apply(&self, base: &LensPrescription, x: &[f64]) -> LensPrescription {
        let mut lens = base.clone();
        for (v, &value) in self.vars.iter().zip(x) {
            let s = &mut lens.surfaces[v.surface];
            match v.param {
                DesignParam::Curvature => s.c = value,
                DesignParam::Thickness => s.t = value,
                DesignParam::Conic => s.k = value,
                DesignParam::Asphere(i) => {
                    if s.a.len() <= i {
                        s.a.resize(i + 1, 0.0);
                    }
                    s.a[i] = value;
                }
            }
        }
        lens
    }

    fn clamp(&self, x: &mut [f64]) {
        for (v, value) in self.vars.iter().zip(x.iter_mut()) {
            *value = value.clamp(v.lo, v.hi);
        }
    }

    fn widths(&self) -> Vec<f64> {
        self.vars.iter().map(|v| v.hi - v.lo).collect()
    }
}

/// Merit function weights and sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeritConfig {
    /// (field angle deg, weight) pairs.
    pub fields: Vec<(f64, f64)>,
    pub wavelengths_nm: Vec<f64>,
    pub target_efl_mm: f64,
    pub efl_weight: f64,
    pub min_edge_thickness_mm: f64,
    pub edge_weight: f64,
    /// Penalty per unit dead-ray fraction.
    pub ray_failure_penalty: f64,
    pub pupil_samples: usize,
}

impl Default for MeritConfig {
    fn default() -> Self {
        Self {
            fields: vec![(0.0, 1.0), (10.0, 1.0), (20.0, 1.0)],
            wavelengths_nm: vec![486.1, 587.6, 656.3],
            target_efl_mm: 50.0,
            efl_weight: 0.01,
            min_edge_thickness_mm: 0.3,
            edge_weight: 100.0,
            ray_failure_penalty: 10.0,
            pupil_samples: 10,
        }
    }
}

/// Non-negative scalar quality of a lens; zero is a perfect design. Failures
/// never error: dead rays, missing foci and thin edges all become penalties.
pub fn merit(lens: &LensPrescription, cfg: &MeritConfig) -> f64 {
    let mut total = 0.0f64;

    // Focal-length term (an afocal or broken system counts as EFL 0).
    if cfg.efl_weight > 0.0 {
        let efl = paraxial(lens).map(|p| p.efl_mm).unwrap_or(0.0);
        let d = efl - cfg.target_efl_mm;
        total += cfg.efl_weight * d * d;
    }

    // Spot term: weighted mean squared RMS radius over fields/wavelengths,
    // plus the dead-ray penalty.
    let mut traced = 0usize;
    let mut lost = 0usize;
    for &(angle_deg, weight) in &cfg.fields {
        if weight == 0.0 {
            continue;
        }
        let mut per_field = Vec::with_capacity(cfg.wavelengths_nm.len());
        for &wl in &cfg.wavelengths_nm {
            match pupil_rays(lens, field_direction(angle_deg), wl, cfg.pupil_samples) {
                Ok(rays) => {
                    let hits: Vec<(f64, f64)> = rays
                        .iter()
                        .filter(|r| r.alive())
                        .map(|r| (r.origin.x, r.origin.y))
                        .collect();
                    traced += rays.len();
                    lost += rays.len() - hits.len();
                    if hits.len() >= 2 {
                        let spot = crate::trace::SpotDiagram::from_hits(hits, angle_deg, wl);
                        per_field.push(spot.rms_radius_mm * spot.rms_radius_mm);
                    }
                }
                Err(_) => {
                    // No paraxial solution at all: every ray is lost.
                    traced += cfg.pupil_samples * cfg.pupil_samples;
                    lost += cfg.pupil_samples * cfg.pupil_samples;
                }
            }
        }
        if !per_field.is_empty() {
            total += weight * compensated_sum(per_field.iter().copied()) / per_field.len() as f64;
        }
    }
    if traced > 0 {
        total += cfg.ray_failure_penalty * lost as f64 / traced as f64;
    }

    // Edge-thickness penalty across every gap, evaluated at the shared
    // aperture radius via the sag difference.
    if cfg.edge_weight > 0.0 {
        for i in 0..lens.surfaces.len().saturating_sub(1) {
            let s0 = &lens.surfaces[i];
            let s1 = &lens.surfaces[i + 1];
            let r = s0.semi_aperture.min(s1.semi_aperture);
            let rho = r * r;
            let h0 = sag(s0, rho).unwrap_or(0.0);
            let h1 = sag(s1, rho).unwrap_or(0.0);
            let edge = s0.t + h1 - h0;
            if edge < cfg.min_edge_thickness_mm {
                let d = cfg.min_edge_thickness_mm - edge;
                total += cfg.edge_weight * d * d;
            }
        }
    }
    total.max(0.0)
}

/// Which optimizer produced an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Anneal,
    Adam,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Anneal => "anneal",
            Phase::Adam => "adam",
        }
    }
}

/// One merit evaluation in the optimization trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub eval: usize,
    pub merit: f64,
    pub best_merit: f64,
    pub phase: Phase,
}

/// Optimizer outcome. `improved` is false when the budget produced nothing
/// better than the start (a status, not an error: the best lens seen, which
/// is then the input, is still returned).
#[derive(Debug, Clone)]
pub struct DesignOutcome {
    pub lens: LensPrescription,
    pub best_merit: f64,
    pub initial_merit: f64,
    pub trace: Vec<TraceRow>,
    pub improved: bool,
}

const COOLING: f64 = 0.995;
const PROPOSAL_SCALE: f64 = 0.1;
const ADAM_EVERY_ACCEPTS: usize = 20;
const STALL_PROPOSALS: usize = 60;
const ADAM_STEPS: usize = 8;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_LR_FRACTION: f64 = 1e-2;
const FD_STEP_FRACTION: f64 = 1e-4;

/// Simulated annealing with periodic Adam refinement.
///
/// `budget` counts merit evaluations beyond the initial one; zero returns the
/// start unchanged. The best-so-far column of the trace is non-increasing,
/// and rerunning with the same seed reproduces the trace exactly.
pub fn optimize(
    lens0: &LensPrescription,
    vars: &DesignVariables,
    cfg: &MeritConfig,
    budget: usize,
    seed: u64,
) -> Result<DesignOutcome, DesignError> {
    vars.validate(lens0)?;
    let widths = vars.widths();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut x = vars.extract(lens0);
    vars.clamp(&mut x);
    let mut current = merit(&vars.apply(lens0, &x), cfg);
    let initial_merit = current;
    let mut best_x = x.clone();
    let mut best = current;

    let mut trace = Vec::new();
    let mut evals = 0usize;
    let mut accepts_since_adam = 0usize;
    let mut proposals_since_adam = 0usize;
    let mut temperature = if current > 0.0 { current } else { 1e-6 };

    let mut adam_m = vec![0.0; x.len()];
    let mut adam_v = vec![0.0; x.len()];
    let mut adam_t = 0usize;

    let record = |evals: usize, value: f64, best: f64, phase: Phase, trace: &mut Vec<TraceRow>| {
        trace.push(TraceRow {
            eval: evals,
            merit: value,
            best_merit: best,
            phase,
        });
    };

    'outer: while evals < budget {
        // Annealing proposal: Gaussian step scaled to the box width, clamped.
        let mut candidate = x.clone();
        for (i, c) in candidate.iter_mut().enumerate() {
            *c += PROPOSAL_SCALE * widths[i] * normal.sample(&mut rng);
        }
        vars.clamp(&mut candidate);
        debug_assert!(candidate
            .iter()
            .zip(&vars.vars)
            .all(|(v, s)| *v >= s.lo && *v <= s.hi));
        let value = merit(&vars.apply(lens0, &candidate), cfg);
        evals += 1;
        proposals_since_adam += 1;
        if value < best {
            best = value;
            best_x = candidate.clone();
        }
        record(evals, value, best, Phase::Anneal, &mut trace);

        let accept = if value <= current {
            true
        } else {
            let delta = value - current;
            rng.gen::<f64>() < (-delta / temperature.max(1e-300)).exp()
        };
        if accept {
            x = candidate;
            current = value;
            accepts_since_adam += 1;
        }
        temperature *= COOLING;

        // Periodic Adam refinement from the current point. A stalled chain
        // (everything rejected) still refines, which matters when the start
        // is already near a local optimum.
        if accepts_since_adam >= ADAM_EVERY_ACCEPTS || proposals_since_adam >= STALL_PROPOSALS {
            accepts_since_adam = 0;
            proposals_since_adam = 0;
            for _ in 0..ADAM_STEPS {
                if evals + 2 * x.len() + 1 > budget {
                    break 'outer;
                }
                let mut grad = vec![0.0; x.len()];
                for i in 0..x.len() {
                    let h = FD_STEP_FRACTION * widths[i];
                    let mut xp = x.clone();
                    xp[i] = (xp[i] + h).min(vars.vars[i].hi);
                    let mut xm = x.clone();
                    xm[i] = (xm[i] - h).max(vars.vars[i].lo);
                    let fp = merit(&vars.apply(lens0, &xp), cfg);
                    let fm = merit(&vars.apply(lens0, &xm), cfg);
                    evals += 2;
                    let span = xp[i] - xm[i];
                    grad[i] = if span.abs() > 0.0 {
                        (fp - fm) / span
                    } else {
                        0.0
                    };
                }
                adam_t += 1;
                for i in 0..x.len() {
                    adam_m[i] = ADAM_BETA1 * adam_m[i] + (1.0 - ADAM_BETA1) * grad[i];
                    adam_v[i] = ADAM_BETA2 * adam_v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
                    let m_hat = adam_m[i] / (1.0 - ADAM_BETA1.powi(adam_t as i32));
                    let v_hat = adam_v[i] / (1.0 - ADAM_BETA2.powi(adam_t as i32));
                    x[i] -= ADAM_LR_FRACTION * widths[i] * m_hat / (v_hat.sqrt() + 1e-12);
                }
                vars.clamp(&mut x);
                current = merit(&vars.apply(lens0, &x), cfg);
                evals += 1;
                if current < best {
                    best = current;
                    best_x = x.clone();
                }
                record(evals, current, best, Phase::Adam, &mut trace);
            }
        }
    }

    let improved = best < initial_merit;
    Ok(DesignOutcome {
        lens: vars.apply(lens0, &best_x),
        best_merit: best,
        initial_merit,
        trace,
        improved,
    })
}

/// Every design-specification cell: piece counts 1..=6, half fields
/// {20, 30, 40} deg, f-numbers {2, 3, 4}, and the aperture positions legal
/// for the piece count (middle needs at least two pieces).
pub fn enumerate_specs() -> Vec<DesignSpec> {
    let mut specs = Vec::new();
    for pieces in 1..=6u32 {
        for &half_fov_deg in &DesignSpec::HALF_FOV_GRID {
            for &f_number in &DesignSpec::F_NUMBER_GRID {
                let positions: &[AperturePosition] = if pieces >= 2 {
                    &[
                        AperturePosition::Front,
                        AperturePosition::Middle,
                        AperturePosition::Rear,
                    ]
                } else {
                    &[AperturePosition::Front, AperturePosition::Rear]
                };
                for &aperture_position in positions {
                    specs.push(DesignSpec {
                        pieces,
                        half_fov_deg,
                        f_number,
                        aperture_position,
                    });
                }
            }
        }
    }
    specs
}
