//! Intensity tomography of grating stacks and model calibration.
//!
//! An experiment probes the stack one signal mode at a time and records
//! the detected intensity on each output signal direction. This module
//! simulates that measurement under an imperfection model — per-plate
//! efficiency, per-plate Bragg mismatch, per-plate scatter — computes the
//! derived metrics (crosstalk, column sums), serializes tables as CSV,
//! and fits the model parameters to a measured table.
//!
//! The simulation follows one input at a time through the stack. At each
//! plate the mode carrying the most intensity of the plate's recorded
//! pair is the one physically driving the diffraction, so that mode's
//! Bragg mismatch sets the effective efficiency
//! `eta_eff = eta(asin(sqrt(eta_0)), xi)`; the pair is then mixed by the
//! usual lossless coupler and the plate's scatter factor is applied
//! uniformly to every mode.

use crate::grating;
use crate::stack::{StackError, StackRecipe};
use ndarray::Array2;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TomographyError {
    #[error("model sized for {got} gratings, recipe has {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("recipe shape not supported by the tied calibration: {0}")]
    UnsupportedRecipe(String),
    #[error("calibration did not converge: residual {residual} above {threshold}")]
    Nonconvergent { residual: f64, threshold: f64 },
    #[error("csv line {line}: {message}")]
    CsvParse { line: usize, message: String },
    #[error(transparent)]
    Stack(#[from] StackError),
}

/// Bragg mismatch assigned to one plate.
#[derive(Debug, Clone, PartialEq)]
pub enum GratingDetuning {
    /// The same dimensionless mismatch whichever mode drives the plate.
    Uniform(f64),
    /// One dimensionless mismatch per basis mode; the driving mode's
    /// entry is used.
    PerMode(Vec<f64>),
    /// A plate tilt in radians, converted to dimensionless mismatch with
    /// the plate's own dephasing slope at the driving mode's angle.
    AngularOffset(f64),
}

/// Per-plate imperfections for a whole stack: zero-mismatch efficiency,
/// Bragg mismatch, and scalar intensity transmission (scatter).
#[derive(Debug, Clone, PartialEq)]
pub struct ImperfectionModel {
    efficiencies: Vec<f64>,
    detunings: Vec<GratingDetuning>,
    scatter_loss: Vec<f64>,
}

impl ImperfectionModel {
    pub fn new(
        efficiencies: Vec<f64>,
        detunings: Vec<GratingDetuning>,
        scatter_loss: Vec<f64>,
    ) -> Result<Self, TomographyError> {
        if efficiencies.len() != detunings.len() || efficiencies.len() != scatter_loss.len() {
            return Err(TomographyError::InvalidModel(format!(
                "list lengths disagree: {} efficiencies, {} detunings, {} scatter factors",
                efficiencies.len(),
                detunings.len(),
                scatter_loss.len()
            )));
        }
        for &eta in &efficiencies {
            if !(0.0..=1.0).contains(&eta) {
                return Err(TomographyError::InvalidModel(format!(
                    "efficiency out of [0, 1]: {eta}"
                )));
            }
        }
        for &s in &scatter_loss {
            if !(0.0..=1.0).contains(&s) {
                return Err(TomographyError::InvalidModel(format!(
                    "scatter transmission out of [0, 1]: {s}"
                )));
            }
        }
        Ok(Self {
            efficiencies,
            detunings,
            scatter_loss,
        })
    }

    /// Perfect plates: unit efficiency, no mismatch, no scatter.
    pub fn ideal(grating_count: usize) -> Self {
        Self {
            efficiencies: vec![1.0; grating_count],
            detunings: vec![GratingDetuning::Uniform(0.0); grating_count],
            scatter_loss: vec![1.0; grating_count],
        }
    }

    /// As-designed plates: each at its recipe efficiency, aligned and
    /// lossless.
    pub fn from_recipe(recipe: &StackRecipe) -> Self {
        Self {
            efficiencies: recipe
                .entries()
                .iter()
                .map(|e| e.nominal_efficiency())
                .collect(),
            detunings: vec![GratingDetuning::Uniform(0.0); recipe.grating_count()],
            scatter_loss: vec![1.0; recipe.grating_count()],
        }
    }

    pub fn efficiencies(&self) -> &[f64] {
        &self.efficiencies
    }

    pub fn detunings(&self) -> &[GratingDetuning] {
        &self.detunings
    }

    pub fn scatter_loss(&self) -> &[f64] {
        &self.scatter_loss
    }

    pub fn grating_count(&self) -> usize {
        self.efficiencies.len()
    }

    pub fn with_efficiency(mut self, grating: usize, eta: f64) -> Self {
        self.efficiencies[grating] = eta;
        self
    }

    pub fn with_detuning(mut self, grating: usize, detuning: GratingDetuning) -> Self {
        self.detunings[grating] = detuning;
        self
    }

    pub fn with_scatter(mut self, grating: usize, transmission: f64) -> Self {
        self.scatter_loss[grating] = transmission;
        self
    }
}

/// Binary-string mode names: "00", "01", "10", "11" for four modes.
pub fn binary_labels(n: usize) -> Vec<String> {
    let width = if n <= 2 {
        1
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    };
    (0..n).map(|i| format!("{i:0width$b}")).collect()
}

/// Measured (or simulated) intensities: one row per input signal mode,
/// one column per output detector, entries in `[0, 1]` with row sums at
/// most 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TomographyTable {
    intensities: Array2<f64>,
    labels: Vec<String>,
}

impl TomographyTable {
    pub fn new(intensities: Array2<f64>) -> Result<Self, TomographyError> {
        let (rows, cols) = intensities.dim();
        if rows != cols {
            return Err(TomographyError::InvalidTable(format!(
                "table is {rows}x{cols}, expected square"
            )));
        }
        for row in intensities.rows() {
            let mut sum = 0.0;
            for &v in row {
                if !(0.0..=1.0 + 1e-9).contains(&v) || !v.is_finite() {
                    return Err(TomographyError::InvalidTable(format!(
                        "intensity out of [0, 1]: {v}"
                    )));
                }
                sum += v;
            }
            if sum > 1.0 + 1e-9 {
                return Err(TomographyError::InvalidTable(format!(
                    "row sum {sum} exceeds 1; losses can only remove intensity"
                )));
            }
        }
        let labels = binary_labels(rows);
        Ok(Self {
            intensities,
            labels,
        })
    }

    pub fn dimension(&self) -> usize {
        self.labels.len()
    }

    pub fn intensities(&self) -> &Array2<f64> {
        &self.intensities
    }

    /// Intensity at output `output` when driving input `input`.
    pub fn get(&self, input: usize, output: usize) -> f64 {
        self.intensities[(input, output)]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.intensities
            .rows()
            .into_iter()
            .map(|r| r.sum())
            .collect()
    }

    /// Fixed six-decimal CSV: header row, then one row per input with its
    /// label in the first column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("input");
        for label in &self.labels {
            out.push(',');
            out.push_str(label);
        }
        out.push('\n');
        for (i, row) in self.intensities.rows().into_iter().enumerate() {
            out.push_str(&self.labels[i]);
            for v in row {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parse the schema [`to_csv`](Self::to_csv) writes.
    pub fn from_csv(text: &str) -> Result<Self, TomographyError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (no, header) = lines.next().ok_or(TomographyError::CsvParse {
            line: 1,
            message: "empty input".into(),
        })?;
        let mut cols = header.split(',');
        if cols.next().map(str::trim) != Some("input") {
            return Err(TomographyError::CsvParse {
                line: no + 1,
                message: "header must start with `input`".into(),
            });
        }
        let col_labels: Vec<String> = cols.map(|c| c.trim().to_string()).collect();
        let n = col_labels.len();
        let mut values = Vec::with_capacity(n * n);
        let mut row_count = 0usize;
        for (no, line) in lines {
            let mut parts = line.split(',');
            let _row_label = parts.next().ok_or(TomographyError::CsvParse {
                line: no + 1,
                message: "missing row label".into(),
            })?;
            let row: Vec<f64> = parts
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| TomographyError::CsvParse {
                            line: no + 1,
                            message: format!("bad number `{}`", p.trim()),
                        })
                })
                .collect::<Result<_, _>>()?;
            if row.len() != n {
                return Err(TomographyError::CsvParse {
                    line: no + 1,
                    message: format!("{} values in a {n}-column table", row.len()),
                });
            }
            values.extend(row);
            row_count += 1;
        }
        if row_count != n {
            return Err(TomographyError::CsvParse {
                line: text.lines().count(),
                message: format!("{row_count} rows for {n} columns"),
            });
        }
        let matrix =
            Array2::from_shape_vec((n, n), values).expect("row/column counts already checked");
        Self::new(matrix)
    }
}

/// Per-output-column sums of detected intensity. Columns summing below 1
/// reveal light lost to scatter or left undetected on reference modes.
pub fn column_sums(table: &TomographyTable) -> Vec<f64> {
    table
        .intensities
        .columns()
        .into_iter()
        .map(|c| c.sum())
        .collect()
}

/// Leakage of one input into non-target outputs, reported both ways the
/// number is quoted: as raw intensity and as a fraction of the detected
/// intensity in that row.
#[derive(Debug, Clone, PartialEq)]
pub struct CrosstalkEntry {
    pub input_label: String,
    pub raw: f64,
    pub normalized: f64,
}

/// Crosstalk of every input against the target permutation (zero-based
/// images of each signal mode).
pub fn crosstalk(
    table: &TomographyTable,
    images: &[usize],
) -> Result<Vec<CrosstalkEntry>, TomographyError> {
    let n = table.dimension();
    if images.len() != n || images.iter().any(|&i| i >= n) {
        return Err(TomographyError::InvalidTable(format!(
            "target images {images:?} do not index a {n}-mode table"
        )));
    }
    Ok((0..n)
        .map(|input| {
            let detected: f64 = (0..n).map(|j| table.get(input, j)).sum();
            let raw = detected - table.get(input, images[input]);
            let normalized = if detected > 0.0 { raw / detected } else { 0.0 };
            CrosstalkEntry {
                input_label: table.labels()[input].clone(),
                raw,
                normalized,
            }
        })
        .collect())
}

/// Precomputed per-plate geometry so the row simulation is pure
/// arithmetic; shared by [`run_tomography`] and the calibration fit.
struct StackSim {
    dimension: usize,
    total_modes: usize,
    pairs: Vec<(usize, usize)>,
    phases: Vec<f64>,
    /// Dephasing slope per (plate, driving mode), for angular offsets.
    slopes: Vec<Vec<f64>>,
}

impl StackSim {
    fn build(recipe: &StackRecipe) -> Result<Self, TomographyError> {
        let basis = recipe.basis();
        let mut pairs = Vec::with_capacity(recipe.grating_count());
        let mut phases = Vec::with_capacity(recipe.grating_count());
        let mut slopes = Vec::with_capacity(recipe.grating_count());
        for entry in recipe.entries() {
            let (sig, refr) =
                grating::member_indices(&entry.grating, basis).map_err(StackError::from)?;
            pairs.push((sig, refr));
            phases.push(entry.grating.recording_phase());
            slopes.push(
                basis
                    .states()
                    .iter()
                    .map(|s| grating::detuning_slope(&entry.grating, s.polar_angle()))
                    .collect(),
            );
        }
        Ok(Self {
            dimension: basis.dimension(),
            total_modes: basis.total_modes(),
            pairs,
            phases,
            slopes,
        })
    }

    /// Dimensionless mismatch of plate `g` when mode `driving` drives it.
    fn xi(
        &self,
        model: &ImperfectionModel,
        g: usize,
        driving: usize,
    ) -> Result<f64, TomographyError> {
        match &model.detunings[g] {
            GratingDetuning::Uniform(xi) => Ok(*xi),
            GratingDetuning::PerMode(list) => {
                if list.len() != self.total_modes {
                    return Err(TomographyError::InvalidModel(format!(
                        "per-mode detuning list has {} entries for {} modes",
                        list.len(),
                        self.total_modes
                    )));
                }
                Ok(list[driving])
            }
            GratingDetuning::AngularOffset(angle) => Ok(self.slopes[g][driving] * angle),
        }
    }

    /// One probe through the stack: fills `row` with the detected
    /// intensity at each output signal mode.
    fn simulate_row(
        &self,
        model: &ImperfectionModel,
        input: usize,
        amps: &mut [Complex64],
        row: &mut [f64],
    ) -> Result<(), TomographyError> {
        amps.fill(Complex64::new(0.0, 0.0));
        amps[input] = Complex64::new(1.0, 0.0);
        for g in 0..self.pairs.len() {
            let (sig, refr) = self.pairs[g];
            let driving = if amps[sig].norm_sqr() >= amps[refr].norm_sqr() {
                sig
            } else {
                refr
            };
            let xi = self.xi(model, g, driving)?;
            let nu = model.efficiencies[g].sqrt().asin();
            let eta = grating::diffraction_efficiency(nu, xi);
            let t = (1.0 - eta).sqrt();
            let s = eta.sqrt();
            // Lossless coupler with the quarter-wave lag on the cross
            // terms; the lag cancels in every intensity.
            let c = Complex64::new(0.0, -s);
            let e_plus = Complex64::from_polar(1.0, self.phases[g]);
            let a_sig = amps[sig];
            let a_ref = amps[refr];
            amps[sig] = t * a_sig + c * e_plus * a_ref;
            amps[refr] = c * e_plus.conj() * a_sig + t * a_ref;
            let damp = model.scatter_loss[g].sqrt();
            if damp != 1.0 {
                for a in amps.iter_mut() {
                    *a *= damp;
                }
            }
        }
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = amps[j].norm_sqr();
        }
        Ok(())
    }
}

/// Probe every signal mode through the imperfect stack and tabulate the
/// detected output intensities.
pub fn run_tomography(
    recipe: &StackRecipe,
    model: &ImperfectionModel,
) -> Result<TomographyTable, TomographyError> {
    if model.grating_count() != recipe.grating_count() {
        return Err(TomographyError::SizeMismatch {
            expected: recipe.grating_count(),
            got: model.grating_count(),
        });
    }
    let sim = StackSim::build(recipe)?;
    let n = sim.dimension;
    let mut amps = vec![Complex64::new(0.0, 0.0); sim.total_modes];
    let mut table = Array2::<f64>::zeros((n, n));
    for input in 0..n {
        let mut row = vec![0.0; n];
        sim.simulate_row(model, input, &mut amps, &mut row)?;
        for (j, v) in row.into_iter().enumerate() {
            table[(input, j)] = v;
        }
    }
    TomographyTable::new(table)
}

/// Tied calibration parameters for a stack of two plate pairs (the
/// four-plate controlled-NOT layout): plates 1-2 share one zero-mismatch
/// efficiency, plates 3-4 the other; the second pair's mismatch is split
/// by which role drives it; one scatter figure covers the whole stack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationParams {
    /// Zero-mismatch efficiency shared by the first pair.
    pub efficiency_a: f64,
    /// Zero-mismatch efficiency shared by the second pair.
    pub efficiency_b: f64,
    /// Mismatch of plate 1 driven by its recorded signal mode.
    pub detuning_a1: f64,
    /// Mismatch of plate 2 driven by its recorded signal mode.
    pub detuning_a2: f64,
    /// Second-pair mismatch when the parked (reference-ring) amplitude
    /// drives the plate.
    pub detuning_b_park: f64,
    /// Second-pair mismatch when a leftover signal amplitude drives it.
    pub detuning_b_residual: f64,
    /// Total intensity transmission of the whole stack.
    pub transmission: f64,
}

impl CalibrationParams {
    /// Expand to a per-plate model for the given four-plate recipe.
    pub fn to_model(&self, recipe: &StackRecipe) -> Result<ImperfectionModel, TomographyError> {
        let layout = PairLayout::of(recipe)?;
        let m = recipe.basis().total_modes();
        let mut det_a = vec![0.0; m];
        det_a[layout.a1_driver] = self.detuning_a1;
        let mut det_a2 = vec![0.0; m];
        det_a2[layout.a2_driver] = self.detuning_a2;
        let mut det_b1 = vec![0.0; m];
        det_b1[layout.b1_park_driver] = self.detuning_b_park;
        det_b1[layout.b1_residual_driver] = self.detuning_b_residual;
        let mut det_b2 = vec![0.0; m];
        det_b2[layout.b2_park_driver] = self.detuning_b_park;
        det_b2[layout.b2_residual_driver] = self.detuning_b_residual;
        let per_plate = self.transmission.powf(0.25);
        ImperfectionModel::new(
            vec![
                self.efficiency_a,
                self.efficiency_a,
                self.efficiency_b,
                self.efficiency_b,
            ],
            vec![
                GratingDetuning::PerMode(det_a),
                GratingDetuning::PerMode(det_a2),
                GratingDetuning::PerMode(det_b1),
                GratingDetuning::PerMode(det_b2),
            ],
            vec![per_plate; 4],
        )
    }
}

/// Mode indices that drive each plate of a two-pair stack, derived from
/// the recipe's recording geometry.
struct PairLayout {
    a1_driver: usize,
    a2_driver: usize,
    b1_park_driver: usize,
    b1_residual_driver: usize,
    b2_park_driver: usize,
    b2_residual_driver: usize,
}

impl PairLayout {
    fn of(recipe: &StackRecipe) -> Result<Self, TomographyError> {
        if recipe.grating_count() != 4 {
            return Err(TomographyError::UnsupportedRecipe(format!(
                "tied calibration expects 4 plates, recipe has {}",
                recipe.grating_count()
            )));
        }
        let basis = recipe.basis();
        let pair = |i: usize| -> Result<(usize, usize), TomographyError> {
            grating::member_indices(&recipe.entries()[i].grating, basis)
                .map_err(|e| TomographyError::Stack(StackError::from(e)))
        };
        let (a1_sig, a1_ref) = pair(0)?;
        let (a2_sig, a2_ref) = pair(1)?;
        let (b1_sig, b1_ref) = pair(2)?;
        let (b2_sig, b2_ref) = pair(3)?;
        // The first pair must park two distinct signal modes on the
        // reference ring; the second pair must pick those up again.
        let n = basis.dimension();
        let is_signal = |idx: usize| idx < n;
        if !is_signal(a1_sig)
            || !is_signal(a2_sig)
            || is_signal(a1_ref)
            || is_signal(a2_ref)
            || b1_sig != a1_ref && b1_sig != a2_ref
            || b2_sig != a1_ref && b2_sig != a2_ref
            || is_signal(b1_sig)
            || is_signal(b2_sig)
            || !is_signal(b1_ref)
            || !is_signal(b2_ref)
        {
            return Err(TomographyError::UnsupportedRecipe(
                "plates do not form a park-and-restore pair structure".into(),
            ));
        }
        Ok(Self {
            a1_driver: a1_sig,
            a2_driver: a2_sig,
            b1_park_driver: b1_sig,
            b1_residual_driver: b1_ref,
            b2_park_driver: b2_sig,
            b2_residual_driver: b2_ref,
        })
    }
}

/// Result of a calibration fit: the tied parameters, the expanded model,
/// and the final sum-of-squares residual.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: CalibrationParams,
    pub model: ImperfectionModel,
    pub residual: f64,
}

/// Residual threshold above which [`fit_calibration`] refuses to return
/// a model.
pub const FIT_RESIDUAL_THRESHOLD: f64 = 0.1;

struct Objective<'a> {
    sim: StackSim,
    layout: PairLayout,
    measured: &'a TomographyTable,
    amps: Vec<Complex64>,
    row: Vec<f64>,
    model: ImperfectionModel,
}

impl<'a> Objective<'a> {
    fn new(
        measured: &'a TomographyTable,
        recipe: &'a StackRecipe,
    ) -> Result<Self, TomographyError> {
        let layout = PairLayout::of(recipe)?;
        let sim = StackSim::build(recipe)?;
        if measured.dimension() != sim.dimension {
            return Err(TomographyError::SizeMismatch {
                expected: sim.dimension,
                got: measured.dimension(),
            });
        }
        let total = sim.total_modes;
        Ok(Self {
            sim,
            layout,
            measured,
            amps: vec![Complex64::new(0.0, 0.0); total],
            row: vec![0.0; 4],
            model: ImperfectionModel::ideal(4),
        })
    }

    /// Write `p` into the reusable model without reallocating.
    fn load(&mut self, p: &[f64; 7]) {
        let m = self.sim.total_modes;
        let zero = |v: &mut Vec<f64>| {
            v.clear();
            v.resize(m, 0.0);
        };
        self.model.efficiencies[0] = p[0];
        self.model.efficiencies[1] = p[0];
        self.model.efficiencies[2] = p[1];
        self.model.efficiencies[3] = p[1];
        for (g, slots) in [
            (0usize, vec![(self.layout.a1_driver, p[2])]),
            (1, vec![(self.layout.a2_driver, p[3])]),
            (
                2,
                vec![
                    (self.layout.b1_park_driver, p[4]),
                    (self.layout.b1_residual_driver, p[5]),
                ],
            ),
            (
                3,
                vec![
                    (self.layout.b2_park_driver, p[4]),
                    (self.layout.b2_residual_driver, p[5]),
                ],
            ),
        ] {
            if let GratingDetuning::PerMode(v) = &mut self.model.detunings[g] {
                zero(v);
                for (idx, xi) in slots {
                    v[idx] = xi;
                }
            } else {
                let mut v = vec![0.0; m];
                for (idx, xi) in slots {
                    v[idx] = xi;
                }
                self.model.detunings[g] = GratingDetuning::PerMode(v);
            }
        }
        let per_plate = p[6].powf(0.25);
        self.model.scatter_loss.fill(per_plate);
    }

    fn eval(&mut self, p: &[f64; 7]) -> f64 {
        self.load(p);
        let n = self.sim.dimension;
        let mut residual = 0.0;
        for input in 0..n {
            // Reborrow dance: simulate_row needs &self.sim plus the
            // scratch buffers disjointly.
            let Objective {
                sim,
                model,
                amps,
                row,
                ..
            } = self;
            sim.simulate_row(model, input, amps, row)
                .expect("per-mode lists sized in load()");
            for (j, &detected) in row.iter().take(n).enumerate() {
                let d = detected - self.measured.get(input, j);
                residual += d * d;
            }
        }
        residual
    }
}

const PARAM_LOWER: [f64; 7] = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5];
const PARAM_UPPER: [f64; 7] = [1.0, 1.0, 8.0, 8.0, 8.0, 8.0, 1.0];
/// Coordinate-descent starting steps: 0.01 on efficiencies and
/// transmission, 0.05 on mismatches.
const PARAM_STEP: [f64; 7] = [0.01, 0.01, 0.05, 0.05, 0.05, 0.05, 0.01];
const STEP_FLOOR: f64 = 1e-7;
const MAX_SWEEPS: usize = 500;

/// Fit the tied two-pair model to a measured table: a deterministic
/// coarse grid over the two efficiencies (mismatches zero, transmission
/// one), then coordinate descent on all seven parameters. Fails if the
/// best residual stays above [`FIT_RESIDUAL_THRESHOLD`].
/// Coordinate pattern search over the parameters listed in `free`. Each
/// coordinate crawls in its best direction while that keeps improving;
/// its step is halved only in sweeps where it could not move at all.
fn pattern_search(
    objective: &mut Objective<'_>,
    start: [f64; 7],
    start_residual: f64,
    free: &[usize],
) -> ([f64; 7], f64) {
    let mut best = start;
    let mut best_residual = start_residual;
    let mut steps = PARAM_STEP;
    for _ in 0..MAX_SWEEPS {
        let mut improved = false;
        for &k in free {
            let mut moved_k = false;
            loop {
                let mut moved = false;
                for dir in [1.0, -1.0] {
                    let mut cand = best;
                    cand[k] = (best[k] + dir * steps[k]).clamp(PARAM_LOWER[k], PARAM_UPPER[k]);
                    if cand[k] != best[k] {
                        let r = objective.eval(&cand);
                        if r < best_residual {
                            best_residual = r;
                            best = cand;
                            moved = true;
                            break;
                        }
                    }
                }
                if !moved {
                    break;
                }
                moved_k = true;
                improved = true;
            }
            if !moved_k && steps[k] > STEP_FLOOR {
                steps[k] = (steps[k] / 2.0).max(STEP_FLOOR);
            }
        }
        if !improved && free.iter().all(|&k| steps[k] <= STEP_FLOOR) {
            break;
        }
    }
    (best, best_residual)
}

pub fn fit_calibration(
    measured: &TomographyTable,
    recipe: &StackRecipe,
) -> Result<FitResult, TomographyError> {
    let mut objective = Objective::new(measured, recipe)?;

    // Stage 1: exhaustive grid, strict improvement so the first-visited
    // (lexicographically smallest) parameters win ties.
    let mut best = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
    let mut best_residual = f64::INFINITY;
    for ea in 0..=100 {
        for eb in 0..=100 {
            let p = [
                ea as f64 / 100.0,
                eb as f64 / 100.0,
                0.0,
                0.0,
                0.0,
                0.0,
                1.0,
            ];
            let r = objective.eval(&p);
            if r < best_residual {
                best_residual = r;
                best = p;
            }
        }
    }

    // Stage 2a: refine only the efficiencies and the transmission, with
    // every plate held aligned. A lower efficiency and a detuned plate
    // often explain the same intensities, so the aligned model is the
    // canonical representative of that family.
    let (aligned, aligned_residual) =
        pattern_search(&mut objective, best, best_residual, &[0, 1, 6]);

    // Stage 2b: release the per-plate detunings from the aligned
    // optimum, and keep them only when mismatch genuinely explains more
    // of the table than efficiency and loss alone can.
    let (full, full_residual) = pattern_search(
        &mut objective,
        aligned,
        aligned_residual,
        &[0, 1, 2, 3, 4, 5, 6],
    );
    let (best, best_residual) = if full_residual < aligned_residual * (1.0 - 1e-6) - 1e-18 {
        (full, full_residual)
    } else {
        (aligned, aligned_residual)
    };

    if best_residual > FIT_RESIDUAL_THRESHOLD {
        return Err(TomographyError::Nonconvergent {
            residual: best_residual,
            threshold: FIT_RESIDUAL_THRESHOLD,
        });
    }
    let params = CalibrationParams {
        efficiency_a: best[0],
        efficiency_b: best[1],
        detuning_a1: best[2],
        detuning_a2: best[3],
        detuning_b_park: best[4],
        detuning_b_residual: best[5],
        transmission: best[6],
    };
    let model = params.to_model(recipe)?;
    Ok(FitResult {
        params,
        model,
        residual: best_residual,
    })
}

/// Human-readable report plus the fixed-schema CSV for one table.
#[derive(Debug, Clone)]
pub struct TomographyReport {
    pub text: String,
    pub csv: String,
}

/// Threshold used by the report to flag output columns whose detected
/// sum falls short of 1.
pub const COLUMN_SUM_FLAG_THRESHOLD: f64 = 0.02;

/// Render the table with its derived metrics. When target images are
/// given the report includes per-input crosstalk (raw and normalized)
/// and the mean intensity landing on the target outputs.
pub fn emit_report(
    table: &TomographyTable,
    target: Option<&[usize]>,
) -> Result<TomographyReport, TomographyError> {
    let csv = table.to_csv();
    let n = table.dimension();
    let mut text = String::new();
    text.push_str(&format!("tomography table ({n} inputs)\n"));
    text.push_str(&format!("{:>8}", "input"));
    for label in table.labels() {
        text.push_str(&format!("{label:>10}"));
    }
    text.push('\n');
    for i in 0..n {
        text.push_str(&format!("{:>8}", table.labels()[i]));
        for j in 0..n {
            text.push_str(&format!("{:>10.6}", table.get(i, j)));
        }
        text.push('\n');
    }
    text.push_str("\ncolumn sums (detected fraction per output)\n");
    for (label, sum) in table.labels().iter().zip(column_sums(table)) {
        let flag = if (sum - 1.0).abs() > COLUMN_SUM_FLAG_THRESHOLD {
            "  [deficit]"
        } else {
            ""
        };
        text.push_str(&format!("{label:>8}  {sum:.6}{flag}\n"));
    }
    if let Some(images) = target {
        let entries = crosstalk(table, images)?;
        text.push_str("\ncrosstalk vs target (raw intensity / fraction of detected)\n");
        for e in &entries {
            text.push_str(&format!(
                "{:>8}  {:.6} / {:.6}\n",
                e.input_label, e.raw, e.normalized
            ));
        }
        let mean_target: f64 = (0..n).map(|i| table.get(i, images[i])).sum::<f64>() / n as f64;
        text.push_str(&format!(
            "\nmean intensity on target outputs: {mean_target:.6}\n"
        ));
    }
    Ok(TomographyReport { text, csv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grating::{two_mode_coupler, PhaseConvention};
    use crate::lm_basis::ConeBasis;
    use crate::stack::{cnot_recipe, compose};
    use ndarray::array;
    use rand::{rngs::StdRng, Rng, SeedableRng};
    use std::f64::consts::TAU;

    const LAMBDA: f64 = 532e-9;
    const THICK: f64 = 1.64e-3;
    const N0: f64 = 1.49;

    fn basis() -> ConeBasis {
        ConeBasis::new(4, 4.41f64.to_radians(), 23.61f64.to_radians(), TAU / LAMBDA).unwrap()
    }

    fn cnot() -> StackRecipe {
        cnot_recipe(&basis(), THICK, N0, LAMBDA).unwrap()
    }

    /// The reference experiment's measured table: 0.99 on the first two
    /// diagonal entries, the swap block {0.15, 0.73, 0.78, 0.12}.
    fn measured_table() -> TomographyTable {
        TomographyTable::new(array![
            [0.99, 0.0, 0.0, 0.0],
            [0.0, 0.99, 0.0, 0.0],
            [0.0, 0.0, 0.15, 0.73],
            [0.0, 0.0, 0.78, 0.12],
        ])
        .unwrap()
    }

    #[test]
    fn ideal_cnot_gives_exact_permutation_table() {
        let recipe = cnot();
        let table = run_tomography(&recipe, &ImperfectionModel::ideal(4)).unwrap();
        let expected = array![
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0],
        ];
        let diff = (table.intensities() - &expected)
            .iter()
            .map(|v| v.abs())
            .fold(0.0f64, f64::max);
        assert!(diff < 1e-12);
        assert_eq!(table.labels(), ["00", "01", "10", "11"]);
    }

    #[test]
    fn untouched_input_sees_only_scatter() {
        // Input on the first signal mode never meets a coupling pair, so
        // per-plate scatter of 0.99 total leaves 0.99 at the same output.
        let recipe = cnot();
        let mut model = ImperfectionModel::ideal(4);
        let per_plate = 0.99f64.powf(0.25);
        for g in 0..4 {
            model = model.with_scatter(g, per_plate);
        }
        let table = run_tomography(&recipe, &model).unwrap();
        assert!((table.get(0, 0) - 0.99).abs() < 1e-12);
        assert!((table.get(1, 1) - 0.99).abs() < 1e-12);
        assert!(table.get(0, 1) < 1e-15);
    }

    #[test]
    fn lossless_rows_conserve_intensity_over_all_modes() {
        // With no scatter the stack is unitary, so each probe's intensity
        // over all 2N modes is 1; the detected (signal) row sum may be
        // smaller only because amplitude sits on reference modes.
        let recipe = cnot();
        let mut rng = StdRng::seed_from_u64(41);
        for _ in 0..20 {
            let model = ImperfectionModel::new(
                (0..4).map(|_| rng.gen_range(0.0..1.0)).collect(),
                (0..4)
                    .map(|_| GratingDetuning::Uniform(rng.gen_range(-2.0..2.0)))
                    .collect(),
                vec![1.0; 4],
            )
            .unwrap();
            let sim = StackSim::build(&recipe).unwrap();
            let mut amps = vec![Complex64::new(0.0, 0.0); 8];
            let mut row = vec![0.0; 4];
            for input in 0..4 {
                sim.simulate_row(&model, input, &mut amps, &mut row)
                    .unwrap();
                let total: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
                assert!((total - 1.0).abs() < 1e-12, "total {total}");
                let detected: f64 = row.iter().sum();
                assert!(detected <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn row_simulation_matches_full_operator_composition() {
        // For a fixed input the per-plate effective efficiencies are
        // fixed, so chaining 2x2 blocks must equal composing the full
        // matrices — under either phase convention, since the table is
        // intensity-only.
        let recipe = cnot();
        let basis = basis();
        let params = CalibrationParams {
            efficiency_a: 0.85,
            efficiency_b: 0.92,
            detuning_a1: 0.4,
            detuning_a2: 0.9,
            detuning_b_park: 0.3,
            detuning_b_residual: 1.7,
            transmission: 1.0,
        };
        let model = params.to_model(&recipe).unwrap();
        let table = run_tomography(&recipe, &model).unwrap();
        let sim = StackSim::build(&recipe).unwrap();
        for convention in [PhaseConvention::Physical, PhaseConvention::Ideal] {
            for input in 0..4 {
                // Freeze each plate's efficiency for this input by
                // replaying the driving-mode rule.
                let mut amps = vec![Complex64::new(0.0, 0.0); 8];
                amps[input] = Complex64::new(1.0, 0.0);
                let mut ops = Vec::new();
                for g in 0..4 {
                    let (sig, refr) = sim.pairs[g];
                    let driving = if amps[sig].norm_sqr() >= amps[refr].norm_sqr() {
                        sig
                    } else {
                        refr
                    };
                    let xi = sim.xi(&model, g, driving).unwrap();
                    let nu = model.efficiencies()[g].sqrt().asin();
                    let eta = grating::diffraction_efficiency(nu, xi);
                    let op = two_mode_coupler(&basis, sig, refr, eta, 0.0, convention).unwrap();
                    let next = op.matrix().dot(&ndarray::Array1::from(amps.clone()));
                    amps = next.to_vec();
                    ops.push(op);
                }
                let op = compose(&basis, &ops).unwrap();
                let col = op.matrix().column(input);
                for j in 0..4 {
                    assert!(
                        (col[j].norm_sqr() - table.get(input, j)).abs() < 1e-12,
                        "input {input} output {j} convention {convention:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn lower_efficiency_never_raises_target_intensity() {
        let recipe = cnot();
        let images = [0usize, 1, 3, 2];
        let mut rng = StdRng::seed_from_u64(97);
        for _ in 0..25 {
            let etas: Vec<f64> = (0..4).map(|_| rng.gen_range(0.2..1.0)).collect();
            let model = ImperfectionModel::new(
                etas.clone(),
                vec![GratingDetuning::Uniform(0.0); 4],
                vec![1.0; 4],
            )
            .unwrap();
            let base = run_tomography(&recipe, &model).unwrap();
            for (g, &eta) in etas.iter().enumerate() {
                let reduced = model
                    .clone()
                    .with_efficiency(g, eta * rng.gen_range(0.1..0.9));
                let table = run_tomography(&recipe, &reduced).unwrap();
                for (input, &image) in images.iter().enumerate() {
                    assert!(table.get(input, image) <= base.get(input, image) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn angular_offset_uses_per_plate_slope() {
        let recipe = cnot();
        let offset = 1.0e-3;
        let model =
            ImperfectionModel::ideal(4).with_detuning(0, GratingDetuning::AngularOffset(offset));
        let table = run_tomography(&recipe, &model).unwrap();
        // Plate 1 couples the third signal mode; its efficiency drops by
        // exactly the swept-curve value at the slope-converted mismatch.
        let g = &recipe.entries()[0].grating;
        let xi = grating::detuning_slope(g, g.signal().polar_angle()) * offset;
        let eta = grating::diffraction_efficiency(std::f64::consts::FRAC_PI_2, xi);
        assert!((table.get(2, 3) - eta).abs() < 1e-12);
    }

    #[test]
    fn crosstalk_raw_and_normalized() {
        let table = measured_table();
        let entries = crosstalk(&table, &[0, 1, 3, 2]).unwrap();
        assert_eq!(entries[0].raw, 0.0);
        assert_eq!(entries[1].raw, 0.0);
        assert!((entries[2].raw - 0.15).abs() < 1e-12);
        assert!((entries[2].normalized - 0.15 / 0.88).abs() < 1e-12);
        assert!((entries[3].raw - 0.12).abs() < 1e-12);
        assert!((entries[3].normalized - 0.12 / 0.90).abs() < 1e-12);
        let ideal = run_tomography(&cnot(), &ImperfectionModel::ideal(4)).unwrap();
        for e in crosstalk(&ideal, &[0, 1, 3, 2]).unwrap() {
            assert!(e.raw < 1e-12);
        }
    }

    #[test]
    fn column_sums_match_published_deficits() {
        let sums = column_sums(&measured_table());
        assert!((sums[0] - 0.99).abs() < 1e-12);
        assert!((sums[1] - 0.99).abs() < 1e-12);
        assert!((sums[2] - 0.93).abs() < 1e-12);
        assert!((sums[3] - 0.85).abs() < 1e-12);
        let ideal = run_tomography(&cnot(), &ImperfectionModel::ideal(4)).unwrap();
        for s in column_sums(&ideal) {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trips_and_quotes_measured_values() {
        let table = measured_table();
        let csv = table.to_csv();
        for needle in ["0.990000", "0.150000", "0.730000", "0.780000", "0.120000"] {
            assert!(csv.contains(needle), "missing {needle} in\n{csv}");
        }
        assert!(csv.starts_with("input,00,01,10,11\n"));
        let parsed = TomographyTable::from_csv(&csv).unwrap();
        let diff = (parsed.intensities() - table.intensities())
            .iter()
            .map(|v| v.abs())
            .fold(0.0f64, f64::max);
        assert!(diff < 1e-9);
        assert_eq!(parsed.to_csv(), csv);
    }

    #[test]
    fn empty_table_yields_header_only_csv() {
        let empty = TomographyTable::new(Array2::zeros((0, 0))).unwrap();
        assert_eq!(empty.to_csv(), "input\n");
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let bad = "input,00,01\n00,0.5,oops\n01,0.1,0.2\n";
        match TomographyTable::from_csv(bad) {
            Err(TomographyError::CsvParse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("oops"));
            }
            other => panic!("expected csv error, got {other:?}"),
        }
        assert!(TomographyTable::from_csv("").is_err());
        assert!(TomographyTable::from_csv("wrong,00\n").is_err());
    }

    #[test]
    fn table_validation_rejects_unphysical_rows() {
        assert!(TomographyTable::new(array![[0.9, 0.2], [0.0, 1.0]]).is_err());
        assert!(TomographyTable::new(array![[1.2, 0.0], [0.0, 1.0]]).is_err());
        assert!(TomographyTable::new(array![[-0.1, 0.0], [0.0, 1.0]]).is_err());
        assert!(TomographyTable::new(Array2::zeros((2, 3))).is_err());
    }

    #[test]
    fn report_includes_metrics() {
        let report = emit_report(&measured_table(), Some(&[0, 1, 3, 2])).unwrap();
        assert!(report.text.contains("0.930000"));
        assert!(report.text.contains("0.850000"));
        assert!(report.text.contains("[deficit]"));
        assert!(report.text.contains("0.170455"));
        assert!(report.csv.contains("0.730000"));
    }

    #[test]
    fn fit_recovers_known_tied_model() {
        let recipe = cnot();
        let truth = CalibrationParams {
            efficiency_a: 0.88,
            efficiency_b: 0.93,
            detuning_a1: 0.0,
            detuning_a2: 0.0,
            detuning_b_park: 0.0,
            detuning_b_residual: 0.0,
            transmission: 0.99,
        };
        let table = run_tomography(&recipe, &truth.to_model(&recipe).unwrap()).unwrap();
        let fit = fit_calibration(&table, &recipe).unwrap();
        let mut got = [fit.params.efficiency_a, fit.params.efficiency_b];
        got.sort_by(f64::total_cmp);
        assert!((got[0] - 0.88).abs() < 0.02, "eta_a {}", got[0]);
        assert!((got[1] - 0.93).abs() < 0.02, "eta_b {}", got[1]);
        assert!((fit.params.transmission - 0.99).abs() < 0.02);
        assert!(fit.residual < 1e-6);
        // Round trip: the fitted model reproduces the input table.
        let refit = run_tomography(&recipe, &fit.model).unwrap();
        let diff = (refit.intensities() - table.intensities())
            .iter()
            .map(|v| v.abs())
            .fold(0.0f64, f64::max);
        assert!(diff < 1e-3, "diff {diff}");
    }

    #[test]
    fn fit_explains_measured_table() {
        let recipe = cnot();
        let fit = fit_calibration(&measured_table(), &recipe).unwrap();
        assert!(fit.residual < 0.05, "residual {}", fit.residual);
        // The asymmetry of the measured block is only explainable with
        // mismatch on at least one plate.
        let detunings = [
            fit.params.detuning_a1,
            fit.params.detuning_a2,
            fit.params.detuning_b_park,
            fit.params.detuning_b_residual,
        ];
        assert!(
            detunings.iter().any(|&d| d.abs() > 1e-3),
            "detunings {detunings:?}"
        );
        let table = run_tomography(&recipe, &fit.model).unwrap();
        let measured = measured_table();
        for i in 0..4 {
            for j in 0..4 {
                assert!(
                    (table.get(i, j) - measured.get(i, j)).abs() < 0.05,
                    "entry ({i}, {j}): {} vs {}",
                    table.get(i, j),
                    measured.get(i, j)
                );
            }
        }
    }

    #[test]
    fn fit_explains_identity_table_with_null_plates() {
        // An identity table is consistent with the model: plates at zero
        // efficiency leave every input untouched. The fit must find that
        // exactly rather than fail.
        let recipe = cnot();
        let identity = TomographyTable::new(Array2::eye(4)).unwrap();
        let fit = fit_calibration(&identity, &recipe).unwrap();
        assert!(fit.residual < 1e-9, "residual {}", fit.residual);
        assert!(fit.params.efficiency_a < 0.01);
        assert!(fit.params.efficiency_b < 0.01);
        assert!((fit.params.transmission - 1.0).abs() < 0.01);
    }

    #[test]
    fn fit_rejects_wrong_shapes() {
        let recipe = cnot();
        let wrong_dim = TomographyTable::new(Array2::eye(3)).unwrap();
        assert!(matches!(
            fit_calibration(&wrong_dim, &recipe),
            Err(TomographyError::SizeMismatch { .. })
        ));
        let basis = basis();
        let truncated = StackRecipe::new(
            "half",
            basis,
            THICK,
            N0,
            recipe.index_modulation(),
            recipe.entries()[..2].to_vec(),
            None,
        )
        .unwrap();
        assert!(matches!(
            fit_calibration(&measured_table(), &truncated),
            Err(TomographyError::UnsupportedRecipe(_))
        ));
    }

    #[test]
    fn model_validation() {
        assert!(
            ImperfectionModel::new(vec![1.1], vec![GratingDetuning::Uniform(0.0)], vec![1.0])
                .is_err()
        );
        assert!(
            ImperfectionModel::new(vec![0.5], vec![GratingDetuning::Uniform(0.0)], vec![1.5])
                .is_err()
        );
        assert!(ImperfectionModel::new(
            vec![0.5, 0.5],
            vec![GratingDetuning::Uniform(0.0)],
            vec![1.0, 1.0]
        )
        .is_err());
        let model = ImperfectionModel::ideal(2);
        assert!(matches!(
            run_tomography(&cnot(), &model),
            Err(TomographyError::SizeMismatch {
                expected: 4,
                got: 2
            })
        ));
    }

    #[test]
    fn binary_labels_width() {
        assert_eq!(binary_labels(2), ["0", "1"]);
        assert_eq!(binary_labels(4), ["00", "01", "10", "11"]);
        assert_eq!(binary_labels(8)[5], "101");
        assert_eq!(binary_labels(5)[4], "100");
    }
}
