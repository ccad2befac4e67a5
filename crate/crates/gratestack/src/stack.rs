//! Stacks of gratings composed into mode-space operators.
//!
//! One grating couples one signal/reference pair; a gate on the signal
//! modes is built by stacking several gratings in sequence, each aligned
//! to the shared cone geometry. Light traverses the stack in listing
//! order, so the combined operator is the reverse-order matrix product of
//! the per-plate operators.
//!
//! The synthesis rule for a permutation of the signal modes uses the
//! reference modes as a scratch register: first a plate moving each
//! non-fixed signal mode `i` onto reference mode `sigma(i)`, then a plate
//! moving each parked amplitude down to signal mode `sigma(i)`. A
//! permutation with `m` non-fixed points therefore needs `2 m` plates; a
//! controlled-NOT on four modes needs four.

use crate::grating::{
    self, calibrate_index_modulation, record, GratingError, GratingSpec, Material, PhaseConvention,
};
use crate::lm_basis::{BasisError, ConeBasis, SuperpositionState};
use ndarray::{s, Array1, Array2};
use num_complex::Complex64;
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StackError {
    #[error("operator is {rows}x{cols}, expected square")]
    NonSquareMatrix { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operator labels do not match the basis")]
    LabelMismatch,
    #[error("not a permutation of 0..{0}: {1}")]
    NotAPermutation(usize, String),
    #[error("recipe declares no target gate to verify against")]
    MissingTarget,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Grating(#[from] GratingError),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// A linear operator on the full mode set, tagged with the mode labels it
/// was built against so that operators from different bases cannot be
/// mixed silently.
#[derive(Debug, Clone)]
pub struct ModeOperator {
    matrix: Array2<Complex64>,
    labels: Vec<String>,
}

impl ModeOperator {
    pub fn new(matrix: Array2<Complex64>, labels: Vec<String>) -> Result<Self, StackError> {
        let (rows, cols) = matrix.dim();
        if rows != cols {
            return Err(StackError::NonSquareMatrix { rows, cols });
        }
        if labels.len() != rows {
            return Err(StackError::DimensionMismatch {
                expected: rows,
                got: labels.len(),
            });
        }
        Ok(Self { matrix, labels })
    }

    pub fn identity(labels: Vec<String>) -> Self {
        let matrix = Array2::eye(labels.len());
        Self { matrix, labels }
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.t().mapv(|c| c.conj()),
            labels: self.labels.clone(),
        }
    }

    /// Largest entry of `U^dagger U - I` in absolute value; zero for a
    /// unitary operator.
    pub fn unitarity_defect(&self) -> f64 {
        let gram = self.adjoint().matrix.dot(&self.matrix);
        let eye = Array2::<Complex64>::eye(self.dim());
        (gram - eye).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    /// Top-left block acting within the first `n` modes (the signal
    /// sector when built over a cone basis).
    pub fn signal_block(&self, n: usize) -> Array2<Complex64> {
        self.matrix.slice(s![0..n, 0..n]).to_owned()
    }

    /// Apply to a superposition over the same labeled mode set.
    pub fn apply(&self, state: &SuperpositionState) -> Result<SuperpositionState, StackError> {
        if state.basis().labels() != self.labels {
            return Err(StackError::LabelMismatch);
        }
        let amps = Array1::from_vec(state.amplitudes().to_vec());
        let out = self.matrix.dot(&amps);
        SuperpositionState::new(out.to_vec(), state.basis().clone()).map_err(StackError::from)
    }
}

/// Compose a sequence of per-plate operators into one stack operator.
///
/// `ops[0]` is the plate the light meets first, so the product is taken
/// in reverse listing order. An empty stack is the identity.
pub fn compose(basis: &ConeBasis, ops: &[ModeOperator]) -> Result<ModeOperator, StackError> {
    let labels = basis.labels();
    let mut acc = Array2::<Complex64>::eye(basis.total_modes());
    for op in ops {
        if op.labels() != labels {
            return Err(StackError::LabelMismatch);
        }
        acc = op.matrix().dot(&acc);
    }
    ModeOperator::new(acc, labels)
}

/// Overlap fidelity `|Tr(T^dagger A)|^2 / N^2` between a target gate and
/// the realized block; 1 exactly when `A = e^{i phi} T`.
pub fn process_fidelity(
    target: &Array2<Complex64>,
    actual: &Array2<Complex64>,
) -> Result<f64, StackError> {
    if target.dim() != actual.dim() {
        return Err(StackError::DimensionMismatch {
            expected: target.dim().0,
            got: actual.dim().0,
        });
    }
    let n = target.dim().0;
    if n != target.dim().1 {
        return Err(StackError::NonSquareMatrix {
            rows: target.dim().0,
            cols: target.dim().1,
        });
    }
    let trace: Complex64 = target
        .t()
        .mapv(|c| c.conj())
        .dot(actual)
        .diag()
        .iter()
        .sum();
    Ok(trace.norm_sqr() / (n * n) as f64)
}

/// The gate a recipe is meant to realize.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetGate {
    /// Signal mode `i` maps to signal mode `images[i]` (zero-based).
    Permutation(Vec<usize>),
}

impl TargetGate {
    /// Matrix of the target on the signal sector (columns are inputs).
    pub fn matrix(&self) -> Array2<Complex64> {
        match self {
            TargetGate::Permutation(images) => {
                let n = images.len();
                let mut m = Array2::zeros((n, n));
                for (input, &output) in images.iter().enumerate() {
                    m[(output, input)] = Complex64::new(1.0, 0.0);
                }
                m
            }
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            TargetGate::Permutation(images) => images.len(),
        }
    }
}

fn check_permutation(n: usize, images: &[usize]) -> Result<(), StackError> {
    if images.len() != n {
        return Err(StackError::NotAPermutation(
            n,
            format!("{} images for {n} modes", images.len()),
        ));
    }
    let mut seen = vec![false; n];
    for &img in images {
        if img >= n {
            return Err(StackError::NotAPermutation(
                n,
                format!("image {img} out of range"),
            ));
        }
        if seen[img] {
            return Err(StackError::NotAPermutation(
                n,
                format!("image {img} repeated"),
            ));
        }
        seen[img] = true;
    }
    Ok(())
}

/// One plate of a stack: the recorded grating plus an optional measured
/// efficiency that overrides the nominal (calibrated) one.
#[derive(Debug, Clone)]
pub struct StackEntry {
    pub grating: GratingSpec,
    pub efficiency_override: Option<f64>,
}

impl StackEntry {
    pub fn nominal_efficiency(&self) -> f64 {
        self.efficiency_override.unwrap_or_else(|| {
            grating::diffraction_efficiency(grating::coupling_strength(&self.grating), 0.0)
        })
    }
}

/// An ordered stack of gratings over one cone basis, with enough recipe
/// metadata to rebuild or serialize it, and an optional target gate.
#[derive(Debug, Clone)]
pub struct StackRecipe {
    name: String,
    basis: ConeBasis,
    thickness: f64,
    base_index: f64,
    index_modulation: f64,
    entries: Vec<StackEntry>,
    target: Option<TargetGate>,
}

impl StackRecipe {
    pub fn new(
        name: impl Into<String>,
        basis: ConeBasis,
        thickness: f64,
        base_index: f64,
        index_modulation: f64,
        entries: Vec<StackEntry>,
        target: Option<TargetGate>,
    ) -> Result<Self, StackError> {
        if !thickness.is_finite() || thickness <= 0.0 {
            return Err(StackError::InvalidParameter(format!(
                "thickness must be positive, got {thickness}"
            )));
        }
        if !base_index.is_finite() || base_index < 1.0 {
            return Err(StackError::InvalidParameter(format!(
                "base index must be at least 1, got {base_index}"
            )));
        }
        if !index_modulation.is_finite() || index_modulation <= 0.0 {
            return Err(StackError::InvalidParameter(format!(
                "index modulation must be positive, got {index_modulation}"
            )));
        }
        for entry in &entries {
            grating::member_indices(&entry.grating, &basis)?;
            if let Some(eta) = entry.efficiency_override {
                if !(0.0..=1.0).contains(&eta) {
                    return Err(StackError::InvalidParameter(format!(
                        "efficiency override must lie in [0, 1], got {eta}"
                    )));
                }
            }
        }
        if let Some(target) = &target {
            check_permutation(
                basis.dimension(),
                match target {
                    TargetGate::Permutation(images) => images,
                },
            )?;
        }
        Ok(Self {
            name: name.into(),
            basis,
            thickness,
            base_index,
            index_modulation,
            entries,
            target,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn basis(&self) -> &ConeBasis {
        &self.basis
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    pub fn base_index(&self) -> f64 {
        self.base_index
    }

    pub fn index_modulation(&self) -> f64 {
        self.index_modulation
    }

    pub fn wavelength(&self) -> f64 {
        TAU / self.basis.states()[0].wavenumber()
    }

    pub fn entries(&self) -> &[StackEntry] {
        &self.entries
    }

    pub fn target(&self) -> Option<&TargetGate> {
        self.target.as_ref()
    }

    pub fn grating_count(&self) -> usize {
        self.entries.len()
    }
}

/// Compose the whole recipe into one operator, every plate evaluated at
/// zero detuning with its nominal (or overridden) efficiency.
pub fn recipe_operator(
    recipe: &StackRecipe,
    convention: PhaseConvention,
) -> Result<ModeOperator, StackError> {
    let basis = recipe.basis();
    let mut ops = Vec::with_capacity(recipe.entries().len());
    for entry in recipe.entries() {
        let (sig, refr) = grating::member_indices(&entry.grating, basis)?;
        let op = grating::two_mode_coupler(
            basis,
            sig,
            refr,
            entry.nominal_efficiency(),
            entry.grating.recording_phase(),
            convention,
        )?;
        ops.push(op);
    }
    compose(basis, &ops)
}

/// Send a superposition through the stack.
pub fn apply(
    recipe: &StackRecipe,
    state: &SuperpositionState,
    convention: PhaseConvention,
) -> Result<SuperpositionState, StackError> {
    recipe_operator(recipe, convention)?.apply(state)
}

/// Outcome of checking a recipe against its declared target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verification {
    pub fidelity: f64,
    pub passed: bool,
}

/// Compare the recipe's signal-sector action against its target gate.
///
/// Plates are composed under the ideal convention (real couplings), which
/// is the regime the synthesis rule is exact in; the result is the
/// process fidelity of the signal block and whether it meets `threshold`.
pub fn verify_recipe(recipe: &StackRecipe, threshold: f64) -> Result<Verification, StackError> {
    let target = recipe.target().ok_or(StackError::MissingTarget)?;
    let op = recipe_operator(recipe, PhaseConvention::Ideal)?;
    let block = op.signal_block(recipe.basis().dimension());
    let fidelity = process_fidelity(&target.matrix(), &block)?;
    Ok(Verification {
        fidelity,
        passed: fidelity >= threshold,
    })
}

/// Synthesize a stack that permutes the signal modes by `images`
/// (zero-based; `images[i]` is where signal mode `i` ends up).
///
/// Every plate is recorded at the quarter-wave point (unit efficiency),
/// with the fringe period fixed by the cone geometry. Fixed points of the
/// permutation need no plates at all.
pub fn permutation_recipe(
    name: impl Into<String>,
    basis: &ConeBasis,
    images: &[usize],
    thickness: f64,
    base_index: f64,
    wavelength: f64,
) -> Result<StackRecipe, StackError> {
    let n = basis.dimension();
    check_permutation(n, images)?;
    let index_modulation = calibrate_index_modulation(
        basis.signal(0),
        basis.reference(0),
        thickness,
        wavelength,
        base_index,
        1.0,
    )?;
    let material =
        Material::new(index_modulation, base_index, "calibrated").map_err(StackError::from)?;
    let moved: Vec<usize> = (0..n).filter(|&i| images[i] != i).collect();
    let mut entries = Vec::with_capacity(2 * moved.len());
    // Park each moving signal mode on the reference ring...
    for &i in &moved {
        let g = record(
            basis.signal(i),
            basis.reference(images[i]),
            thickness,
            &material,
            wavelength,
        )?;
        entries.push(StackEntry {
            grating: g,
            efficiency_override: None,
        });
    }
    // ...then drop each parked amplitude onto its destination.
    for &i in &moved {
        let g = record(
            basis.reference(images[i]),
            basis.signal(images[i]),
            thickness,
            &material,
            wavelength,
        )?;
        entries.push(StackEntry {
            grating: g,
            efficiency_override: None,
        });
    }
    StackRecipe::new(
        name,
        basis.clone(),
        thickness,
        base_index,
        index_modulation,
        entries,
        Some(TargetGate::Permutation(images.to_vec())),
    )
}

/// The four-plate controlled-NOT on a four-mode cone basis: swap the last
/// two signal modes (target-bit flip when the control bit is set).
pub fn cnot_recipe(
    basis: &ConeBasis,
    thickness: f64,
    base_index: f64,
    wavelength: f64,
) -> Result<StackRecipe, StackError> {
    if basis.dimension() != 4 {
        return Err(StackError::DimensionMismatch {
            expected: 4,
            got: basis.dimension(),
        });
    }
    permutation_recipe(
        "cnot",
        basis,
        &[0, 1, 3, 2],
        thickness,
        base_index,
        wavelength,
    )
}
