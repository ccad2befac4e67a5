//! Bundled parameters of the reference experiment: a four-plate
//! controlled-NOT at 532 nm in 1.64 mm PTR glass, recording cones at
//! 4.41 and 23.61 degrees, plate pairs measured at 88% and 93%
//! diffraction efficiency, and the measured tomography table it
//! produced.

use crate::lm_basis::ConeBasis;
use crate::stack::{cnot_recipe, StackRecipe};
use crate::tomography::TomographyTable;
use ndarray::array;
use std::f64::consts::TAU;

/// Vacuum wavelength of the recording and probe laser.
pub const WAVELENGTH: f64 = 532e-9;
/// Thickness of each plate.
pub const THICKNESS: f64 = 1.64e-3;
/// Background refractive index of the recording glass.
pub const BASE_INDEX: f64 = 1.49;
/// Measured zero-mismatch efficiency of the first plate pair.
pub const EFFICIENCY_PAIR_A: f64 = 0.88;
/// Measured zero-mismatch efficiency of the second plate pair.
pub const EFFICIENCY_PAIR_B: f64 = 0.93;

/// Signal-cone half-angle.
pub fn signal_cone() -> f64 {
    4.41f64.to_radians()
}

/// Reference-cone half-angle.
pub fn reference_cone() -> f64 {
    23.61f64.to_radians()
}

/// The four-mode cone basis of the reference experiment.
pub fn reference_basis() -> ConeBasis {
    ConeBasis::new(4, signal_cone(), reference_cone(), TAU / WAVELENGTH)
        .expect("reference geometry is valid")
}

/// The as-built controlled-NOT stack: the ideal four-plate recipe with
/// each plate's efficiency overridden to its measured value.
pub fn reference_cnot() -> StackRecipe {
    let ideal = cnot_recipe(&reference_basis(), THICKNESS, BASE_INDEX, WAVELENGTH)
        .expect("reference geometry synthesizes");
    let mut entries = ideal.entries().to_vec();
    let measured = [
        EFFICIENCY_PAIR_A,
        EFFICIENCY_PAIR_A,
        EFFICIENCY_PAIR_B,
        EFFICIENCY_PAIR_B,
    ];
    for (entry, eta) in entries.iter_mut().zip(measured) {
        entry.efficiency_override = Some(eta);
    }
    StackRecipe::new(
        ideal.name().to_string(),
        ideal.basis().clone(),
        ideal.thickness(),
        ideal.base_index(),
        ideal.index_modulation(),
        entries,
        ideal.target().cloned(),
    )
    .expect("override values are valid")
}

/// The measured tomography of the as-built stack: 0.99 detected on the
/// two fixed inputs, the {0.15, 0.73, 0.78, 0.12} block on the swapped
/// pair.
pub fn measured_cnot_table() -> TomographyTable {
    TomographyTable::new(array![
        [0.99, 0.0, 0.0, 0.0],
        [0.0, 0.99, 0.0, 0.0],
        [0.0, 0.0, 0.15, 0.73],
        [0.0, 0.0, 0.78, 0.12],
    ])
    .expect("measured values form a valid table")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stack::verify_recipe;
    use crate::tomography::{column_sums, fit_calibration};

    #[test]
    fn reference_recipe_shape() {
        let recipe = reference_cnot();
        assert_eq!(recipe.grating_count(), 4);
        assert_eq!(recipe.name(), "cnot");
        let etas: Vec<f64> = recipe
            .entries()
            .iter()
            .map(|e| e.nominal_efficiency())
            .collect();
        assert_eq!(etas, [0.88, 0.88, 0.93, 0.93]);
    }

    #[test]
    fn reference_recipe_fidelity_reflects_measured_efficiencies() {
        // Real couplers at the measured efficiencies: the two swapped
        // inputs each arrive with amplitude sqrt(eta_a * eta_b), so the
        // fidelity is ((2 + 2 sqrt(eta_a eta_b)) / 4)^2.
        let v = verify_recipe(&reference_cnot(), 0.9).unwrap();
        let expected = ((2.0 + 2.0 * (0.88f64 * 0.93).sqrt()) / 4.0).powi(2);
        assert!((v.fidelity - expected).abs() < 1e-12);
        assert!(v.passed);
    }

    #[test]
    fn measured_table_metrics() {
        let sums = column_sums(&measured_cnot_table());
        assert!((sums[2] - 0.93).abs() < 1e-12);
        assert!((sums[3] - 0.85).abs() < 1e-12);
    }

    #[test]
    fn calibration_against_measured_table_converges() {
        let fit = fit_calibration(&measured_cnot_table(), &reference_cnot()).unwrap();
        assert!(fit.residual < 0.05);
    }
}
