//! Two-wave transmission volume gratings.
//!
//! A grating is recorded by interfering one signal and one reference plane
//! wave in a photosensitive plate of thickness `d`. Provided the plate is
//! thick against the fringe period (`d >= 10 * period^2 / lambda`, the
//! volume criterion enforced by [`record`]), replay is governed by
//! two-wave coupled-mode theory: all incident light is shared between the
//! transmitted beam and a single diffracted order, with efficiency
//!
//! ```text
//! eta(nu, xi) = sin^2(sqrt(nu^2 + xi^2)) / (1 + xi^2 / nu^2)
//! ```
//!
//! where `nu` is the coupling strength set by the index modulation and
//! `xi` the dimensionless dephasing accumulated under angular detuning.
//! On the mode set of a [`ConeBasis`] the grating therefore acts as a
//! lossless two-mode coupler, identity on every mode it was not recorded
//! with; [`operator`] builds that matrix.

use crate::lm_basis::{ConeBasis, PlaneWaveState};
use crate::stack::ModeOperator;
use num_complex::Complex64;
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Thickness must be at least this multiple of `period^2 / lambda` for the
/// two-wave (volume) treatment to hold.
pub const VOLUME_CRITERION_FACTOR: f64 = 10.0;

#[derive(Debug, Error)]
pub enum GratingError {
    #[error("recording beams are the same physical mode")]
    IdenticalModes,
    #[error("hologram too thin for the volume regime: thickness {thickness} m, need at least {required} m")]
    ThinHologram { thickness: f64, required: f64 },
    #[error("wavenumber mismatch: {0} vs {1}")]
    MismatchedWavenumber(f64, f64),
    #[error("mode {0} is not a member of the basis")]
    UnknownMode(String),
    #[error("selectivity search did not converge: {0}")]
    Nonconvergent(String),
    #[error("coupled pairs overlap on mode index {0}")]
    OverlappingPairs(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Recording medium: index modulation depth, background index, and (once
/// recorded) the fringe period.
#[derive(Debug, Clone)]
pub struct Material {
    index_modulation: f64,
    base_index: f64,
    grating_period: f64,
    name: String,
}

impl Material {
    /// A not-yet-recorded material; the fringe period is derived from the
    /// recording wave vectors when [`record`] runs.
    pub fn new(
        index_modulation: f64,
        base_index: f64,
        name: impl Into<String>,
    ) -> Result<Self, GratingError> {
        if !index_modulation.is_finite() || index_modulation <= 0.0 {
            return Err(GratingError::InvalidParameter(format!(
                "index modulation must be positive, got {index_modulation}"
            )));
        }
        if !base_index.is_finite() || base_index < 1.0 {
            return Err(GratingError::InvalidParameter(format!(
                "base index must be at least 1, got {base_index}"
            )));
        }
        if index_modulation >= base_index {
            return Err(GratingError::InvalidParameter(
                "index modulation must be small against the base index".into(),
            ));
        }
        Ok(Self {
            index_modulation,
            base_index,
            grating_period: 0.0,
            name: name.into(),
        })
    }

    /// Photo-thermo-refractive glass, the usual recording medium.
    pub fn ptr_glass(index_modulation: f64) -> Result<Self, GratingError> {
        Self::new(index_modulation, 1.49, "PTR glass")
    }

    pub fn index_modulation(&self) -> f64 {
        self.index_modulation
    }

    pub fn base_index(&self) -> f64 {
        self.base_index
    }

    /// Fringe period; zero until the material has been through [`record`].
    pub fn grating_period(&self) -> f64 {
        self.grating_period
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

/// A recorded two-wave grating: the recording pair, plate thickness,
/// medium, design wavelength, and the phase written into the fringes.
#[derive(Debug, Clone)]
pub struct GratingSpec {
    signal: PlaneWaveState,
    reference: PlaneWaveState,
    thickness: f64,
    material: Material,
    design_wavelength: f64,
    recording_phase: f64,
}

impl GratingSpec {
    pub fn signal(&self) -> &PlaneWaveState {
        &self.signal
    }

    pub fn reference(&self) -> &PlaneWaveState {
        &self.reference
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    pub fn material(&self) -> &Material {
        &self.material
    }

    pub fn design_wavelength(&self) -> f64 {
        self.design_wavelength
    }

    pub fn recording_phase(&self) -> f64 {
        self.recording_phase
    }

    pub fn grating_period(&self) -> f64 {
        self.material.grating_period
    }
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

fn record_impl(
    signal: &PlaneWaveState,
    reference: &PlaneWaveState,
    thickness: f64,
    material: &Material,
    wavelength: f64,
    recording_phase: f64,
    enforce_volume: bool,
) -> Result<GratingSpec, GratingError> {
    if !thickness.is_finite() || thickness <= 0.0 {
        return Err(GratingError::InvalidParameter(format!(
            "thickness must be positive, got {thickness}"
        )));
    }
    if !wavelength.is_finite() || wavelength <= 0.0 {
        return Err(GratingError::InvalidParameter(format!(
            "wavelength must be positive, got {wavelength}"
        )));
    }
    if signal.same_mode(reference) {
        return Err(GratingError::IdenticalModes);
    }
    let k = TAU / wavelength;
    for state in [signal, reference] {
        if (state.wavenumber() - k).abs() > 1e-9 * k {
            return Err(GratingError::MismatchedWavenumber(state.wavenumber(), k));
        }
    }
    let grating_vector = sub3(signal.wave_vector(), reference.wave_vector());
    let period = TAU / norm3(grating_vector);
    if enforce_volume {
        let required = VOLUME_CRITERION_FACTOR * period * period / wavelength;
        if thickness < required {
            return Err(GratingError::ThinHologram {
                thickness,
                required,
            });
        }
    }
    let mut material = material.clone();
    material.grating_period = period;
    Ok(GratingSpec {
        signal: signal.clone(),
        reference: reference.clone(),
        thickness,
        material,
        design_wavelength: wavelength,
        recording_phase,
    })
}

/// Record a grating from a signal/reference pair, enforcing the volume
/// criterion `thickness >= 10 * period^2 / wavelength`.
pub fn record(
    signal: &PlaneWaveState,
    reference: &PlaneWaveState,
    thickness: f64,
    material: &Material,
    wavelength: f64,
) -> Result<GratingSpec, GratingError> {
    record_impl(
        signal, reference, thickness, material, wavelength, 0.0, true,
    )
}

/// [`record`] with an explicit fringe phase.
pub fn record_with_phase(
    signal: &PlaneWaveState,
    reference: &PlaneWaveState,
    thickness: f64,
    material: &Material,
    wavelength: f64,
    recording_phase: f64,
) -> Result<GratingSpec, GratingError> {
    record_impl(
        signal,
        reference,
        thickness,
        material,
        wavelength,
        recording_phase,
        true,
    )
}

/// [`record`] without the volume-criterion check, for geometries the
/// caller has decided to force.
pub fn record_forced(
    signal: &PlaneWaveState,
    reference: &PlaneWaveState,
    thickness: f64,
    material: &Material,
    wavelength: f64,
) -> Result<GratingSpec, GratingError> {
    record_impl(
        signal, reference, thickness, material, wavelength, 0.0, false,
    )
}

fn inside_cosine(polar: f64, base_index: f64) -> f64 {
    let s = polar.sin() / base_index;
    (1.0 - s * s).sqrt()
}

/// Coupling strength `nu = pi * dn * d / (lambda * sqrt(cos cs cos cr))`
/// with the obliquity cosines taken inside the medium (Snell-corrected by
/// the base index).
pub fn coupling_strength(g: &GratingSpec) -> f64 {
    let n0 = g.material.base_index;
    let cs = inside_cosine(g.signal.polar_angle(), n0);
    let cr = inside_cosine(g.reference.polar_angle(), n0);
    PI * g.material.index_modulation * g.thickness / (g.design_wavelength * (cs * cr).sqrt())
}

/// Two-wave transmission efficiency `sin^2(sqrt(nu^2+xi^2)) / (1+xi^2/nu^2)`.
///
/// Exactly `sin^2(nu)` at zero detuning and identically zero for zero
/// coupling. Always lies in `[0, 1]`.
pub fn diffraction_efficiency(nu: f64, xi: f64) -> f64 {
    debug_assert!(nu >= 0.0, "coupling strength must be nonnegative");
    if nu == 0.0 {
        return 0.0;
    }
    if xi == 0.0 {
        let s = nu.sin();
        return s * s;
    }
    let s = (nu * nu + xi * xi).sqrt().sin();
    s * s / (1.0 + (xi * xi) / (nu * nu))
}

/// Dephasing per radian of angular offset from the recorded signal
/// direction: `K * sin(theta_bragg) * d / (2 * cos(theta_inc_inside))`,
/// first order in the offset.
pub fn detuning_slope(g: &GratingSpec, incident_polar: f64) -> f64 {
    let big_k = TAU / g.material.grating_period;
    let k = TAU / g.design_wavelength;
    let sin_bragg = (big_k / (2.0 * k)).min(1.0);
    let c_inc = inside_cosine(incident_polar, g.material.base_index);
    big_k * sin_bragg * g.thickness / (2.0 * c_inc)
}

/// Dimensionless dephasing `xi` for an incident wave near the recorded
/// signal direction, signed by which side of the recorded direction the
/// incident wave falls on (within the recording plane).
pub fn detuning(g: &GratingSpec, incident: &PlaneWaveState) -> Result<f64, GratingError> {
    let k = TAU / g.design_wavelength;
    if (incident.wavenumber() - k).abs() > 1e-9 * k {
        return Err(GratingError::MismatchedWavenumber(incident.wavenumber(), k));
    }
    let us = g.signal.direction();
    let ur = g.reference.direction();
    let ui = incident.direction();
    let mut plane_normal = cross3(us, ur);
    let norm = norm3(plane_normal);
    if norm < 1e-15 {
        return Err(GratingError::InvalidParameter(
            "recording beams are collinear; the incidence plane is undefined".into(),
        ));
    }
    for c in &mut plane_normal {
        *c /= norm;
    }
    let delta_theta = dot3(cross3(us, ui), plane_normal).atan2(dot3(us, ui));
    Ok(delta_theta * detuning_slope(g, incident.polar_angle()))
}

/// Coupled-mode response at one detuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledModeResponse {
    pub coupling_strength: f64,
    pub detuning: f64,
    pub efficiency: f64,
}

/// Package the grating's response at dephasing `xi`.
pub fn respond(g: &GratingSpec, xi: f64) -> CoupledModeResponse {
    let nu = coupling_strength(g);
    CoupledModeResponse {
        coupling_strength: nu,
        detuning: xi,
        efficiency: diffraction_efficiency(nu, xi),
    }
}

/// Full width at half maximum of the angular selectivity curve around the
/// recorded signal direction, found by sweeping the offset and bisecting
/// the half-maximum crossing.
pub fn fwhm_selectivity(g: &GratingSpec) -> Result<f64, GratingError> {
    let nu = coupling_strength(g);
    if nu <= 0.0 {
        return Err(GratingError::Nonconvergent("zero coupling strength".into()));
    }
    let slope = detuning_slope(g, g.signal.polar_angle());
    let half = diffraction_efficiency(nu, 0.0) / 2.0;
    const STEP: f64 = 2e-5;
    const MAX_OFFSET: f64 = 0.1;
    let mut lo = 0.0f64;
    let mut hi = None;
    let mut t = STEP;
    while t <= MAX_OFFSET {
        if diffraction_efficiency(nu, slope * t) < half {
            hi = Some(t);
            break;
        }
        lo = t;
        t += STEP;
    }
    let Some(mut hi) = hi else {
        return Err(GratingError::Nonconvergent(format!(
            "no half-maximum crossing within {MAX_OFFSET} rad of the recorded direction"
        )));
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if diffraction_efficiency(nu, slope * mid) < half {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo + hi)
}

/// Sign convention for the off-diagonal coupling amplitude.
///
/// `Physical` carries the quarter-wave phase lag of the diffracted beam
/// (factor `-i`), which keeps the coupler unitary at every efficiency.
/// `Ideal` uses a real unit coupling, matching the textbook mode-swap
/// form; it is unitary only at full efficiency and is what recipe
/// verification composes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseConvention {
    #[default]
    Physical,
    Ideal,
}

impl PhaseConvention {
    fn coupling_factor(self) -> Complex64 {
        match self {
            PhaseConvention::Physical => Complex64::new(0.0, -1.0),
            PhaseConvention::Ideal => Complex64::new(1.0, 0.0),
        }
    }
}

/// Lossless two-mode coupler on modes `(i, j)` of the basis: identity
/// everywhere except the 2x2 block
///
/// ```text
/// [ sqrt(1-eta)            c sqrt(eta) e^{+i phase} ]
/// [ c sqrt(eta) e^{-i phase}           sqrt(1-eta)  ]
/// ```
///
/// with `c` fixed by the [`PhaseConvention`].
pub fn two_mode_coupler(
    basis: &ConeBasis,
    i: usize,
    j: usize,
    eta: f64,
    phase: f64,
    convention: PhaseConvention,
) -> Result<ModeOperator, GratingError> {
    multiplexed_operator(basis, &[(i, j, eta, phase)], convention)
}

/// One operator holding several simultaneous two-mode couplings, as a
/// multiplexed hologram would. The coupled pairs must be disjoint.
pub fn multiplexed_operator(
    basis: &ConeBasis,
    couplings: &[(usize, usize, f64, f64)],
    convention: PhaseConvention,
) -> Result<ModeOperator, GratingError> {
    let dim = basis.total_modes();
    let mut taken = vec![false; dim];
    let mut matrix = ndarray::Array2::<Complex64>::eye(dim);
    for &(i, j, eta, phase) in couplings {
        if i >= dim || j >= dim {
            return Err(GratingError::InvalidParameter(format!(
                "mode index out of range: pair ({i}, {j}) in a {dim}-mode basis"
            )));
        }
        if i == j {
            return Err(GratingError::InvalidParameter(
                "cannot couple a mode to itself".into(),
            ));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(GratingError::InvalidParameter(format!(
                "efficiency must lie in [0, 1], got {eta}"
            )));
        }
        for idx in [i, j] {
            if taken[idx] {
                return Err(GratingError::OverlappingPairs(idx));
            }
            taken[idx] = true;
        }
        let t = Complex64::new((1.0 - eta).sqrt(), 0.0);
        let s = eta.sqrt();
        let c = convention.coupling_factor();
        matrix[(i, i)] = t;
        matrix[(j, j)] = t;
        matrix[(i, j)] = c * s * Complex64::new(0.0, phase).exp();
        matrix[(j, i)] = c * s * Complex64::new(0.0, -phase).exp();
    }
    ModeOperator::new(matrix, basis.labels())
        .map_err(|e| GratingError::InvalidParameter(e.to_string()))
}

/// The grating's action on the whole mode set, with the pair efficiency
/// evaluated at the detuning listed for the recorded signal mode.
///
/// `incident_detunings` carries one dimensionless `xi` per basis mode.
pub fn operator(
    g: &GratingSpec,
    basis: &ConeBasis,
    incident_detunings: &[f64],
    convention: PhaseConvention,
) -> Result<ModeOperator, GratingError> {
    if incident_detunings.len() != basis.total_modes() {
        return Err(GratingError::InvalidParameter(format!(
            "detuning list has {} entries, basis has {} modes",
            incident_detunings.len(),
            basis.total_modes()
        )));
    }
    let (sig, refr) = member_indices(g, basis)?;
    let eta = diffraction_efficiency(coupling_strength(g), incident_detunings[sig]);
    two_mode_coupler(basis, sig, refr, eta, g.recording_phase, convention)
}

/// The grating at full efficiency and zero fringe phase under the ideal
/// convention: an exact swap of the recorded pair.
pub fn ideal_operator(g: &GratingSpec, basis: &ConeBasis) -> Result<ModeOperator, GratingError> {
    let (sig, refr) = member_indices(g, basis)?;
    two_mode_coupler(basis, sig, refr, 1.0, 0.0, PhaseConvention::Ideal)
}

/// Basis indices of the grating's recorded signal and reference modes.
pub fn member_indices(g: &GratingSpec, basis: &ConeBasis) -> Result<(usize, usize), GratingError> {
    let sig = basis
        .index_of_mode(&g.signal)
        .ok_or_else(|| GratingError::UnknownMode(g.signal.label().into()))?;
    let refr = basis
        .index_of_mode(&g.reference)
        .ok_or_else(|| GratingError::UnknownMode(g.reference.label().into()))?;
    Ok((sig, refr))
}

/// Index modulation that yields `target_eta` at zero detuning for the
/// given recording geometry (undermodulated branch, `nu <= pi/2`).
pub fn calibrate_index_modulation(
    signal: &PlaneWaveState,
    reference: &PlaneWaveState,
    thickness: f64,
    wavelength: f64,
    base_index: f64,
    target_eta: f64,
) -> Result<f64, GratingError> {
    if !(0.0..=1.0).contains(&target_eta) {
        return Err(GratingError::InvalidParameter(format!(
            "target efficiency must lie in [0, 1], got {target_eta}"
        )));
    }
    if !thickness.is_finite() || thickness <= 0.0 || !wavelength.is_finite() || wavelength <= 0.0 {
        return Err(GratingError::InvalidParameter(
            "thickness and wavelength must be positive".into(),
        ));
    }
    let nu = target_eta.sqrt().asin();
    let cs = inside_cosine(signal.polar_angle(), base_index);
    let cr = inside_cosine(reference.polar_angle(), base_index);
    Ok(nu * wavelength * (cs * cr).sqrt() / (PI * thickness))
}
