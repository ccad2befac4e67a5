//! Plane-wave modes with transverse linear momentum on a cone.
//!
//! A qudit of dimension N is carried by a single photon whose wave vector
//! is one of N plane waves sharing a polar angle `theta_s` (the signal
//! cone) with evenly spaced azimuths. Diffraction couples every signal
//! mode to a partner on a second cone `theta_r`, so a basis here always
//! holds both fans, signals first, and operators over the mode set are
//! 2N x 2N.
//!
//! Over a finite square aperture of side D the transverse profiles of two
//! cone modes are exactly orthogonal whenever the tilt between them spans
//! an integer number of waves across D, and nearly orthogonal otherwise;
//! [`mode_overlap`] evaluates that inner product in closed form.

use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, TAU};
use thiserror::Error;

/// Relative tolerance used when deciding that two states are the same
/// physical mode (equal wavenumber and propagation direction).
pub const MODE_MATCH_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum BasisError {
    #[error("invalid angle: {0}")]
    InvalidAngle(String),
    #[error("basis dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("wavenumber must be positive, got {0}")]
    InvalidWavenumber(f64),
    #[error("wavenumbers differ beyond tolerance: {0} vs {1}")]
    MismatchedWavenumber(f64, f64),
    #[error("azimuths must be pairwise distinct modulo 2*pi")]
    DuplicateAzimuth,
    #[error("aperture breadth must be positive, got {0}")]
    InvalidAperture(f64),
    #[error("amplitude list has {got} entries, basis has {expected} modes")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Which fan of the cone pair a mode belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Signal,
    Reference,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Role::Signal => write!(f, "signal"),
            Role::Reference => write!(f, "reference"),
        }
    }
}

/// One monochromatic plane wave, labelled for use inside a [`ConeBasis`].
///
/// The polar angle is measured from the optic axis (z), the azimuth in the
/// transverse plane; both are fixed at construction and the azimuth is
/// normalised into `[0, 2*pi)`. Two states with equal wavenumber and
/// direction are the same physical mode regardless of label.
#[derive(Debug, Clone)]
pub struct PlaneWaveState {
    wavenumber: f64,
    polar_angle: f64,
    azimuth: f64,
    label: String,
    role: Role,
}

impl PlaneWaveState {
    pub fn new(
        wavenumber: f64,
        polar_angle: f64,
        azimuth: f64,
        label: impl Into<String>,
        role: Role,
    ) -> Result<Self, BasisError> {
        if !wavenumber.is_finite() || wavenumber <= 0.0 {
            return Err(BasisError::InvalidWavenumber(wavenumber));
        }
        if !(0.0..FRAC_PI_2).contains(&polar_angle) {
            return Err(BasisError::InvalidAngle(format!(
                "polar angle must lie in [0, pi/2), got {polar_angle}"
            )));
        }
        Ok(Self {
            wavenumber,
            polar_angle,
            azimuth: azimuth.rem_euclid(TAU),
            label: label.into(),
            role,
        })
    }

    pub fn wavenumber(&self) -> f64 {
        self.wavenumber
    }

    pub fn polar_angle(&self) -> f64 {
        self.polar_angle
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// Cartesian wave vector `k * (sin t cos p, sin t sin p, cos t)`.
    pub fn wave_vector(&self) -> [f64; 3] {
        let (st, ct) = (self.polar_angle.sin(), self.polar_angle.cos());
        let (sp, cp) = (self.azimuth.sin(), self.azimuth.cos());
        [
            self.wavenumber * st * cp,
            self.wavenumber * st * sp,
            self.wavenumber * ct,
        ]
    }

    /// The transverse (x, y) components of [`wave_vector`](Self::wave_vector).
    pub fn transverse_wave_vector(&self) -> [f64; 2] {
        let v = self.wave_vector();
        [v[0], v[1]]
    }

    /// Unit propagation direction.
    pub fn direction(&self) -> [f64; 3] {
        let (st, ct) = (self.polar_angle.sin(), self.polar_angle.cos());
        let (sp, cp) = (self.azimuth.sin(), self.azimuth.cos());
        [st * cp, st * sp, ct]
    }

    /// True when `other` is the same physical mode: equal wavenumber
    /// (relative) and equal direction (componentwise) within
    /// [`MODE_MATCH_TOL`]. Labels and roles do not participate.
    pub fn same_mode(&self, other: &PlaneWaveState) -> bool {
        let k_ref = self.wavenumber.max(other.wavenumber);
        if (self.wavenumber - other.wavenumber).abs() > MODE_MATCH_TOL * k_ref {
            return false;
        }
        let a = self.direction();
        let b = other.direction();
        a.iter()
            .zip(b.iter())
            .all(|(x, y)| (x - y).abs() <= MODE_MATCH_TOL)
    }
}

/// Paired signal and reference fans sharing one wavenumber.
///
/// Modes are stored signals first (`S1..SN`), then references (`R1..RN`),
/// with matching azimuths between the fans. All mode-space operators in
/// this crate index into this ordering.
#[derive(Debug, Clone)]
pub struct ConeBasis {
    states: Vec<PlaneWaveState>,
    dimension: usize,
    signal_cone_angle: f64,
    reference_cone_angle: f64,
}

impl ConeBasis {
    /// N signals at azimuths `2*pi*(i-1)/N` on the cone `theta_s`, plus N
    /// references at the same azimuths on `theta_r`.
    pub fn new(n: usize, theta_s: f64, theta_r: f64, wavenumber: f64) -> Result<Self, BasisError> {
        let azimuths: Vec<f64> = (0..n).map(|i| TAU * i as f64 / n as f64).collect();
        Self::with_azimuths(&azimuths, theta_s, theta_r, wavenumber)
    }

    /// Same as [`new`](Self::new) but with caller-chosen azimuths, for
    /// asymmetric layouts. Azimuths must be pairwise distinct modulo 2*pi.
    pub fn with_azimuths(
        azimuths: &[f64],
        theta_s: f64,
        theta_r: f64,
        wavenumber: f64,
    ) -> Result<Self, BasisError> {
        let n = azimuths.len();
        if n < 2 {
            return Err(BasisError::DimensionTooSmall(n));
        }
        for (name, theta) in [("signal", theta_s), ("reference", theta_r)] {
            if !(theta > 0.0 && theta < FRAC_PI_2) {
                return Err(BasisError::InvalidAngle(format!(
                    "{name} cone angle must lie in (0, pi/2), got {theta}"
                )));
            }
        }
        if theta_s == theta_r {
            return Err(BasisError::InvalidAngle(
                "signal and reference cone angles must differ".into(),
            ));
        }
        if !wavenumber.is_finite() || wavenumber <= 0.0 {
            return Err(BasisError::InvalidWavenumber(wavenumber));
        }
        let normalised: Vec<f64> = azimuths.iter().map(|p| p.rem_euclid(TAU)).collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let gap = (normalised[i] - normalised[j]).abs();
                if gap < 1e-12 || (TAU - gap) < 1e-12 {
                    return Err(BasisError::DuplicateAzimuth);
                }
            }
        }
        let mut states = Vec::with_capacity(2 * n);
        for (i, &phi) in normalised.iter().enumerate() {
            states.push(PlaneWaveState::new(
                wavenumber,
                theta_s,
                phi,
                format!("S{}", i + 1),
                Role::Signal,
            )?);
        }
        for (i, &phi) in normalised.iter().enumerate() {
            states.push(PlaneWaveState::new(
                wavenumber,
                theta_r,
                phi,
                format!("R{}", i + 1),
                Role::Reference,
            )?);
        }
        Ok(Self {
            states,
            dimension: n,
            signal_cone_angle: theta_s,
            reference_cone_angle: theta_r,
        })
    }

    /// Number of signal modes N (the qudit dimension).
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Total mode count 2N.
    pub fn total_modes(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[PlaneWaveState] {
        &self.states
    }

    pub fn signal_cone_angle(&self) -> f64 {
        self.signal_cone_angle
    }

    pub fn reference_cone_angle(&self) -> f64 {
        self.reference_cone_angle
    }

    pub fn signal(&self, i: usize) -> &PlaneWaveState {
        &self.states[i]
    }

    pub fn reference(&self, i: usize) -> &PlaneWaveState {
        &self.states[self.dimension + i]
    }

    pub fn labels(&self) -> Vec<String> {
        self.states.iter().map(|s| s.label.clone()).collect()
    }

    pub fn index_of_label(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s.label == label)
    }

    /// Index of the member state that is the same physical mode as `state`.
    pub fn index_of_mode(&self, state: &PlaneWaveState) -> Option<usize> {
        self.states.iter().position(|s| s.same_mode(state))
    }

    pub fn is_signal_index(&self, idx: usize) -> bool {
        idx < self.dimension
    }

    /// Smallest azimuthal gap between neighbouring signal modes, including
    /// the wrap-around gap.
    pub fn min_signal_azimuth_gap(&self) -> f64 {
        let mut az: Vec<f64> = self.states[..self.dimension]
            .iter()
            .map(|s| s.azimuth)
            .collect();
        az.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut min = TAU - az[az.len() - 1] + az[0];
        for w in az.windows(2) {
            min = min.min(w[1] - w[0]);
        }
        min
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Normalised inner product of the transverse profiles of two plane waves
/// over a centred square aperture of side `breadth`.
///
/// For plane waves the integral separates per axis and evaluates to a
/// product of sinc terms in the transverse wave-vector difference, so the
/// overlap is exactly zero whenever either tilt difference spans an
/// integer number of waves across the aperture. The value for identical
/// transverse wave vectors is exactly 1.
pub fn mode_overlap(
    a: &PlaneWaveState,
    b: &PlaneWaveState,
    breadth: f64,
) -> Result<Complex64, BasisError> {
    if !breadth.is_finite() || breadth <= 0.0 {
        return Err(BasisError::InvalidAperture(breadth));
    }
    let k_ref = a.wavenumber.max(b.wavenumber);
    if (a.wavenumber - b.wavenumber).abs() > MODE_MATCH_TOL * k_ref {
        return Err(BasisError::MismatchedWavenumber(a.wavenumber, b.wavenumber));
    }
    let ta = a.transverse_wave_vector();
    let tb = b.transverse_wave_vector();
    let hx = (tb[0] - ta[0]) * breadth / 2.0;
    let hy = (tb[1] - ta[1]) * breadth / 2.0;
    Ok(Complex64::new(sinc(hx) * sinc(hy), 0.0))
}

/// True when a grating angular selectivity `selectivity_fwhm` resolves the
/// basis: it must be strictly smaller than the minimum azimuthal gap
/// between adjacent signal modes on the cone.
pub fn angular_selectivity_ok(basis: &ConeBasis, selectivity_fwhm: f64) -> bool {
    selectivity_fwhm < basis.min_signal_azimuth_gap()
}

/// A pure state over the 2N modes of a [`ConeBasis`], one complex
/// amplitude per mode in basis order.
#[derive(Debug, Clone)]
pub struct SuperpositionState {
    amplitudes: Vec<Complex64>,
    basis: ConeBasis,
}

impl SuperpositionState {
    pub fn new(amplitudes: Vec<Complex64>, basis: ConeBasis) -> Result<Self, BasisError> {
        if amplitudes.len() != basis.total_modes() {
            return Err(BasisError::DimensionMismatch {
                expected: basis.total_modes(),
                got: amplitudes.len(),
            });
        }
        Ok(Self { amplitudes, basis })
    }

    /// The basis state `|mode_index>`.
    pub fn basis_state(basis: ConeBasis, mode_index: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); basis.total_modes()];
        amplitudes[mode_index] = Complex64::new(1.0, 0.0);
        Self { amplitudes, basis }
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn basis(&self) -> &ConeBasis {
        &self.basis
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= 1e-12
    }

    pub fn normalize(mut self) -> Self {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            for a in &mut self.amplitudes {
                *a /= n;
            }
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const LAMBDA: f64 = 532e-9;

    fn k0() -> f64 {
        TAU / LAMBDA
    }

    /// Composite-Simpson quadrature of the aperture integral, independent
    /// of the closed form. The plane-wave integrand separates per axis, so
    /// the 2D integral is the product of two 1D quadratures.
    fn overlap_by_quadrature(
        a: &PlaneWaveState,
        b: &PlaneWaveState,
        d: f64,
        n: usize,
    ) -> Complex64 {
        let ta = a.transverse_wave_vector();
        let tb = b.transverse_wave_vector();
        let axis = |dk: f64| -> Complex64 {
            let h = d / n as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..=n {
                let x = -d / 2.0 + i as f64 * h;
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc += w * Complex64::new(0.0, dk * x).exp();
            }
            acc * h / 3.0 / d
        };
        axis(tb[0] - ta[0]) * axis(tb[1] - ta[1])
    }

    #[test]
    fn four_state_basis_layout() {
        let basis = ConeBasis::new(4, 0.077, 0.385, k0()).unwrap();
        assert_eq!(basis.dimension(), 4);
        assert_eq!(basis.total_modes(), 8);
        let labels = basis.labels();
        assert_eq!(labels, vec!["S1", "S2", "S3", "S4", "R1", "R2", "R3", "R4"]);
        for (i, s) in basis.states()[..4].iter().enumerate() {
            assert_eq!(s.role(), Role::Signal);
            assert!((s.azimuth() - TAU * i as f64 / 4.0).abs() < 1e-15);
            assert!((s.polar_angle() - 0.077).abs() < 1e-15);
        }
        for (i, r) in basis.states()[4..].iter().enumerate() {
            assert_eq!(r.role(), Role::Reference);
            assert!((r.azimuth() - basis.signal(i).azimuth()).abs() < 1e-15);
            assert!((r.polar_angle() - 0.385).abs() < 1e-15);
        }
    }

    #[test]
    fn two_state_basis_is_antipodal() {
        let basis = ConeBasis::new(2, 0.05, 0.25, k0()).unwrap();
        let s1 = basis.signal(0);
        let s2 = basis.signal(1);
        assert!((s2.azimuth() - s1.azimuth() - PI).abs() < 1e-15);
    }

    #[test]
    fn degenerate_cone_rejected() {
        let err = ConeBasis::new(4, 0.0, 0.3, k0()).unwrap_err();
        assert!(matches!(err, BasisError::InvalidAngle(_)));
        let err = ConeBasis::new(4, 0.1, 0.1, k0()).unwrap_err();
        assert!(matches!(err, BasisError::InvalidAngle(_)));
        let err = ConeBasis::new(1, 0.1, 0.3, k0()).unwrap_err();
        assert_eq!(err, BasisError::DimensionTooSmall(1));
    }

    #[test]
    fn duplicate_azimuths_rejected() {
        let err = ConeBasis::with_azimuths(&[0.3, 0.3 + TAU], 0.1, 0.3, k0()).unwrap_err();
        assert_eq!(err, BasisError::DuplicateAzimuth);
    }

    #[test]
    fn wave_vector_components() {
        // On-axis limit: a state at theta = 0 propagates along z.
        let s = PlaneWaveState::new(2.0, 0.0, 1.3, "S1", Role::Signal).unwrap();
        let v = s.wave_vector();
        assert!(v[0].abs() < 1e-15 && v[1].abs() < 1e-15);
        assert!((v[2] - 2.0).abs() < 1e-15);

        // In-plane azimuth: phi = pi/2 puts the transverse component on y.
        let s = PlaneWaveState::new(1.0, 0.4, FRAC_PI_2, "S2", Role::Signal).unwrap();
        let v = s.wave_vector();
        assert!(v[0].abs() < 1e-15);
        assert!((v[1] - 0.4f64.sin()).abs() < 1e-15);
        assert!((v[2] - 0.4f64.cos()).abs() < 1e-15);

        // Reference experiment geometry: 532 nm, polar 4.41 deg, azimuth 0.
        let theta = 4.41f64.to_radians();
        let s = PlaneWaveState::new(k0(), theta, 0.0, "S1", Role::Signal).unwrap();
        let v = s.wave_vector();
        assert!((v[0] - k0() * theta.sin()).abs() < 1e-6);
        assert_eq!(v[1], 0.0);
        assert!((v[2] - k0() * theta.cos()).abs() < 1e-6);
    }

    #[test]
    fn overlap_of_identical_modes_is_one() {
        let s = PlaneWaveState::new(k0(), 0.1, 0.7, "A", Role::Signal).unwrap();
        let t = PlaneWaveState::new(k0(), 0.1, 0.7, "B", Role::Signal).unwrap();
        let o = mode_overlap(&s, &t, 1e-3).unwrap();
        assert_eq!(o, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn overlap_full_period_null() {
        // Delta kx * D = 2*pi with no y difference: exact sinc null.
        let d = 1e-3;
        let k = k0();
        let theta1 = 0.01f64;
        // Choose theta2 so that (sin t2 - sin t1) * k * d = 2*pi.
        let theta2 = ((theta1.sin() * k + TAU / d) / k).asin();
        let a = PlaneWaveState::new(k, theta1, 0.0, "A", Role::Signal).unwrap();
        let b = PlaneWaveState::new(k, theta2, 0.0, "B", Role::Signal).unwrap();
        let o = mode_overlap(&a, &b, d).unwrap();
        assert!(o.norm() < 1e-12, "expected exact null, got {o}");
    }

    #[test]
    fn overlap_rejects_mismatched_wavenumber() {
        let a = PlaneWaveState::new(k0(), 0.1, 0.0, "A", Role::Signal).unwrap();
        let b = PlaneWaveState::new(k0() * 1.01, 0.1, 0.0, "B", Role::Signal).unwrap();
        assert!(matches!(
            mode_overlap(&a, &b, 1e-3),
            Err(BasisError::MismatchedWavenumber(_, _))
        ));
    }

    #[test]
    fn overlap_matches_quadrature_off_grid() {
        // A pair whose tilt difference is NOT an integer number of waves,
        // checked against the independent Simpson oracle.
        let d = 1e-3;
        let k = k0();
        let a = PlaneWaveState::new(k, 0.0031, 1.1, "A", Role::Signal).unwrap();
        let b = PlaneWaveState::new(k, 0.0045, 2.9, "B", Role::Signal).unwrap();
        let closed = mode_overlap(&a, &b, d).unwrap();
        let quad = overlap_by_quadrature(&a, &b, d, 4000);
        assert!(
            (closed - quad).norm() < 1e-8,
            "closed {closed} vs quadrature {quad}"
        );
    }

    #[test]
    fn four_state_cone_nearly_orthogonal_at_four_waves_of_tilt() {
        // theta_s chosen so k*sin(theta_s)*D = 4 * 2*pi (four waves of
        // tilt across the aperture); all off-diagonal overlaps must be
        // small, and the quadrature oracle must agree.
        let d = 1e-3;
        let k = k0();
        let theta_s = (4.0 * TAU / (k * d)).asin();
        let basis = ConeBasis::new(4, theta_s, 5.0 * theta_s, k).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let o = mode_overlap(basis.signal(i), basis.signal(j), d).unwrap();
                let q = overlap_by_quadrature(basis.signal(i), basis.signal(j), d, 4000);
                assert!((o - q).norm() < 1e-8);
                if i == j {
                    assert!((o.re - 1.0).abs() < 1e-12);
                } else {
                    assert!(o.norm() < 0.05, "pair ({i},{j}) overlap {o}");
                }
            }
        }
    }

    #[test]
    fn selectivity_resolves_four_state_basis() {
        let basis = ConeBasis::new(4, 0.077, 0.385, k0()).unwrap();
        // 2.4 mrad selectivity against a pi/2 azimuthal gap.
        assert!(angular_selectivity_ok(&basis, 2.4e-3));
        // Selectivity exactly equal to the gap must fail (strict).
        assert!(!angular_selectivity_ok(&basis, FRAC_PI_2));
    }

    #[test]
    fn selectivity_resolves_large_basis() {
        let basis = ConeBasis::new(1024, 0.077, 0.385, k0()).unwrap();
        // Gap 2*pi/1024 ~ 6.1 mrad still exceeds 2.4 mrad.
        assert!(angular_selectivity_ok(&basis, 2.4e-3));
        assert!(!angular_selectivity_ok(&basis, 7e-3));
    }

    #[test]
    fn superposition_dimension_checked() {
        let basis = ConeBasis::new(4, 0.077, 0.385, k0()).unwrap();
        let err =
            SuperpositionState::new(vec![Complex64::new(1.0, 0.0); 4], basis.clone()).unwrap_err();
        assert_eq!(
            err,
            BasisError::DimensionMismatch {
                expected: 8,
                got: 4
            }
        );
        let s = SuperpositionState::basis_state(basis, 2);
        assert!(s.is_normalized());
        assert_eq!(s.amplitudes()[2], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn normalize_scales_to_unit_norm() {
        let basis = ConeBasis::new(2, 0.05, 0.25, k0()).unwrap();
        let s = SuperpositionState::new(vec![Complex64::new(3.0, 0.0); 4], basis)
            .unwrap()
            .normalize();
        assert!(s.is_normalized());
    }

    proptest! {
        #[test]
        fn wave_vector_norm_is_wavenumber(
            k in 1.0f64..1e8,
            theta in 0.0f64..1.5,
            phi in 0.0f64..TAU,
        ) {
            let s = PlaneWaveState::new(k, theta, phi, "S", Role::Signal).unwrap();
            let v = s.wave_vector();
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            prop_assert!((norm - k).abs() <= 1e-9 * k);
        }

        #[test]
        fn signal_fan_shares_z_component(
            n in 2usize..9,
            theta_s in 0.001f64..0.6,
            ratio in 1.5f64..5.0,
        ) {
            let theta_r = (theta_s * ratio).min(1.5);
            prop_assume!(theta_r < FRAC_PI_2 && theta_r != theta_s);
            let basis = ConeBasis::new(n, theta_s, theta_r, 1e7).unwrap();
            let z0 = basis.signal(0).wave_vector()[2];
            for i in 1..n {
                let z = basis.signal(i).wave_vector()[2];
                prop_assert!((z - z0).abs() <= 1e-12 * z0.abs());
            }
        }

        #[test]
        fn overlap_has_conjugate_symmetry(
            t1 in 0.0f64..0.3,
            t2 in 0.0f64..0.3,
            p1 in 0.0f64..TAU,
            p2 in 0.0f64..TAU,
        ) {
            let a = PlaneWaveState::new(1e7, t1, p1, "A", Role::Signal).unwrap();
            let b = PlaneWaveState::new(1e7, t2, p2, "B", Role::Signal).unwrap();
            let ab = mode_overlap(&a, &b, 1e-3).unwrap();
            let ba = mode_overlap(&b, &a, 1e-3).unwrap();
            prop_assert!((ab - ba.conj()).norm() < 1e-12);
        }
    }
}
